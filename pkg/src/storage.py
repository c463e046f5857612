"""File persistence for scenarios, world traces, summaries and metric tables.

Every file is written to a temporary sibling and moved into place, so a failed
run never leaves a truncated file behind.
"""

import logging
import os
import re
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel

from .errors import OutputExistsError, TraceDataError
from .models import MarketState, Ranking, RunSummary, ScenarioFile, Snapshot, WorldTrace

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["step", "song", "position", "sampled", "downloaded", "estimate", "ranking_hash"]
SUMMARY_FILE = "summary.json"
TELEMETRY_FILE = "run.prom"
SHARES_FILE = "market_shares.csv"
UNPREDICTABILITY_FILE = "unpredictability.csv"
DOWNLOADS_VS_QUALITY_FILE = "downloads_vs_quality.csv"
ESTIMATION_ERROR_FILE = "estimation_error.csv"
TRAJECTORY_FILE = "download_trajectory.csv"
REPORT_FILES = (
    SHARES_FILE,
    UNPREDICTABILITY_FILE,
    DOWNLOADS_VS_QUALITY_FILE,
    ESTIMATION_ERROR_FILE,
    TRAJECTORY_FILE,
)
_WORLD_FILE = re.compile(r"^world_(\d+)\.csv$")


def ensure_writable(path: Path, force: bool = False) -> None:
    if path.exists() and not force:
        raise OutputExistsError(path)


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(f".{path.name}.tmp")
    with open(tmp_path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)
    os.replace(tmp_path, path)


def write_model(path: Path, model: BaseModel, force: bool = False) -> Path:
    ensure_writable(path, force)
    atomic_write_text(path, model.model_dump_json(indent=2) + "\n")
    logger.info(f"Wrote {path}")
    return path


def write_table(path: Path, frame: pd.DataFrame, force: bool = False) -> Path:
    ensure_writable(path, force)
    atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))
    logger.info(f"Wrote {path}")
    return path


def read_table(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def save_scenario(path: Path, scenario: ScenarioFile, force: bool = False) -> Path:
    return write_model(path, scenario, force)


def load_scenario(path: Path) -> ScenarioFile:
    return ScenarioFile.model_validate_json(Path(path).read_text(encoding="utf-8"))


def trace_frame(trace: WorldTrace) -> pd.DataFrame:
    """Long table with one row per (snapshot, song)."""
    frames = []
    for snapshot in trace.snapshots:
        n = snapshot.downloads.size
        ranking = Ranking.from_playlist(snapshot.song_at, validate=False)
        frames.append(
            pd.DataFrame(
                {
                    "step": np.full(n, snapshot.step, dtype=np.int64),
                    "song": np.arange(n),
                    "position": ranking.position_of,
                    "sampled": snapshot.samples,
                    "downloaded": snapshot.downloads,
                    "estimate": snapshot.estimates,
                    "ranking_hash": ranking.digest(),
                }
            )
        )
    return pd.concat(frames, ignore_index=True)[TRACE_COLUMNS]


def trace_from_frame(world_id: int, frame: pd.DataFrame) -> WorldTrace:
    missing = set(TRACE_COLUMNS) - set(frame.columns)
    if missing:
        raise TraceDataError(f"world {world_id} trace lacks columns {sorted(missing)}")
    if frame.empty:
        raise TraceDataError(f"world {world_id} trace has no rows")

    snapshots = []
    for step, rows in frame.sort_values(["step", "song"]).groupby("step", sort=True):
        songs = rows["song"].to_numpy(dtype=np.int64)
        if not np.array_equal(songs, np.arange(songs.size)):
            raise TraceDataError(f"world {world_id} step {step} does not list every song once")
        try:
            ranking = Ranking.from_positions(rows["position"].to_numpy(dtype=np.int64))
        except ValueError as e:
            raise TraceDataError(f"world {world_id} step {step}: {e}") from e
        snapshots.append(
            Snapshot(
                step=int(step),
                downloads=rows["downloaded"].to_numpy(),
                samples=rows["sampled"].to_numpy(),
                song_at=ranking.song_at,
                estimates=rows["estimate"].to_numpy(dtype=np.float64),
            )
        )
    sizes = {snapshot.downloads.size for snapshot in snapshots}
    if len(sizes) != 1:
        raise TraceDataError(f"world {world_id} snapshots disagree on the number of songs")

    last = snapshots[-1]
    final_state = MarketState(downloads=last.downloads, samples=last.samples, step=last.step)
    try:
        return WorldTrace(world_id=world_id, snapshots=snapshots, final_state=final_state)
    except ValueError as e:
        raise TraceDataError(f"world {world_id}: {e}") from e


class TraceStore:
    """A run directory: one CSV per world, a JSON summary and optional telemetry."""

    def __init__(self, directory: Path, force: bool = False):
        self.directory = Path(directory)
        self.force = force

    def world_path(self, world_id: int) -> Path:
        return self.directory / f"world_{world_id:04d}.csv"

    @property
    def summary_path(self) -> Path:
        return self.directory / SUMMARY_FILE

    @property
    def telemetry_path(self) -> Path:
        return self.directory / TELEMETRY_FILE

    def prepare(self) -> None:
        """Create the directory; refuse to reuse one holding a previous run unless forced."""
        outputs = (SUMMARY_FILE, TELEMETRY_FILE, *REPORT_FILES)
        if self.world_ids() or any((self.directory / name).exists() for name in outputs):
            if not self.force:
                raise OutputExistsError(self.directory)
            self.clear()
        self.directory.mkdir(parents=True, exist_ok=True)

    def clear(self) -> None:
        """Remove every file a previous run wrote, reports included."""
        for world_id in self.world_ids():
            self.world_path(world_id).unlink()
        for name in (SUMMARY_FILE, TELEMETRY_FILE, *REPORT_FILES):
            (self.directory / name).unlink(missing_ok=True)

    def world_ids(self) -> list[int]:
        if not self.directory.is_dir():
            return []
        ids = []
        for path in self.directory.iterdir():
            match = _WORLD_FILE.match(path.name)
            if match:
                ids.append(int(match.group(1)))
        return sorted(ids)

    def write_world(self, trace: WorldTrace) -> Path:
        path = self.world_path(trace.world_id)
        atomic_write_text(path, trace_frame(trace).to_csv(index=False, lineterminator="\n"))
        return path

    def read_world(self, world_id: int) -> WorldTrace:
        path = self.world_path(world_id)
        if not path.exists():
            raise TraceDataError(f"missing trace file {path}")
        return trace_from_frame(world_id, read_table(path))

    def iter_worlds(self, n_worlds: Optional[int] = None) -> Iterator[WorldTrace]:
        """Yield worlds 0..W-1; a missing world is reported by id before anything is read."""
        found = self.world_ids()
        expected = len(found) if n_worlds is None else n_worlds
        if expected == 0:
            raise TraceDataError(f"no trace files in {self.directory}")
        missing = sorted(set(range(expected)) - set(found))
        if missing:
            raise TraceDataError(
                f"{self.directory} is missing traces for worlds {missing[:10]}"
                + (f" and {len(missing) - 10} more" if len(missing) > 10 else "")
            )
        for world_id in range(expected):
            yield self.read_world(world_id)

    def read_worlds(self, n_worlds: Optional[int] = None) -> list[WorldTrace]:
        return list(self.iter_worlds(n_worlds))

    def write_summary(self, summary: RunSummary) -> Path:
        return write_model(self.summary_path, summary, force=True)

    def read_summary(self) -> RunSummary:
        if not self.summary_path.exists():
            raise TraceDataError(f"missing {self.summary_path}; the run did not complete")
        return RunSummary.model_validate_json(self.summary_path.read_text(encoding="utf-8"))
