import logging
from math import comb
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .errors import ParameterError, TraceDataError, UndefinedShareError
from .estimation import estimation_error, top_quality_songs
from .models import Market, MarketShares, UnpredictabilityReport, WorldTrace

logger = logging.getLogger(__name__)


def _ordered(traces: Iterable[WorldTrace]) -> list[WorldTrace]:
    ordered = sorted(traces, key=lambda trace: trace.world_id)
    if not ordered:
        raise TraceDataError("no world traces given")
    return ordered


def mean_confidence_interval(
    samples: Sequence[float], level: float = 0.95
) -> tuple[float, float, float]:
    """Sample mean with a two-sided Student-t confidence interval."""
    values = np.asarray(samples, dtype=np.float64)
    mean = float(values.mean())
    if values.size < 2:
        return mean, mean, mean
    half_width = float(
        stats.t.ppf(0.5 + level / 2, values.size - 1) * stats.sem(values)
    )
    return mean, mean - half_width, mean + half_width


def market_shares(traces: Iterable[WorldTrace], drop_empty: bool = False) -> MarketShares:
    """m_iw = D_iN^w / sum_j D_jN^w for every world w."""
    rows, world_ids = [], []
    for trace in _ordered(traces):
        downloads = trace.final_downloads.astype(np.float64)
        total = downloads.sum()
        if total <= 0:
            if drop_empty:
                logger.warning(f"Dropping world {trace.world_id}: no downloads")
                continue
            raise UndefinedShareError(trace.world_id)
        rows.append(downloads / total)
        world_ids.append(trace.world_id)
    if not rows:
        raise TraceDataError("every world has zero downloads")
    return MarketShares(shares=np.vstack(rows), world_ids=world_ids)


def unpredictability(shares: MarketShares) -> UnpredictabilityReport:
    """u_i: mean absolute difference of song i's share over all pairs of worlds; U = mean u_i."""
    n_worlds = shares.n_worlds
    if n_worlds < 2:
        raise ParameterError(f"unpredictability needs at least two worlds, got {n_worlds}")
    gaps = np.diff(np.sort(shares.shares, axis=0), axis=0)
    # the gap between sorted shares k-1 and k is crossed by k * (W - k) pairs of worlds
    crossings = np.arange(1, n_worlds) * (n_worlds - np.arange(1, n_worlds))
    per_song = (crossings @ gaps) / comb(n_worlds, 2)
    return UnpredictabilityReport(per_song=per_song, overall=float(np.mean(per_song)))


def quality_download_distribution(traces: Iterable[WorldTrace], market: Market) -> pd.DataFrame:
    """Final downloads of every song in every world, songs by increasing quality."""
    ordered = _ordered(traces)
    order = np.lexsort((np.arange(market.n), market.quality))
    downloads = np.vstack([trace.final_downloads for trace in ordered])
    world_ids = [trace.world_id for trace in ordered]
    frames = [
        pd.DataFrame(
            {
                "quality_rank": rank,
                "song": int(song),
                "quality": float(market.quality[song]),
                "world": world_ids,
                "downloads": downloads[:, song],
            }
        )
        for rank, song in enumerate(order)
    ]
    return pd.concat(frames, ignore_index=True)


def _common_steps(traces: list[WorldTrace]) -> np.ndarray:
    steps = traces[0].steps
    for trace in traces[1:]:
        if not np.array_equal(trace.steps, steps):
            raise TraceDataError(f"world {trace.world_id} has different snapshot steps")
    return steps


def estimation_error_curve(
    traces: Iterable[WorldTrace], market: Market, top_k: int = 10
) -> pd.DataFrame:
    """Per-snapshot MSE of quality estimates over the top_k best songs, averaged over worlds."""
    ordered = _ordered(traces)
    steps = _common_steps(ordered)
    songs = top_quality_songs(market.quality, top_k)
    errors = []
    for trace in ordered:
        if any(snapshot.estimates is None for snapshot in trace.snapshots):
            raise TraceDataError(f"world {trace.world_id} has no quality estimates")
        estimates = trace.estimate_trajectory[:, songs]
        errors.append(np.mean((estimates - market.quality[songs]) ** 2, axis=1))
    return pd.DataFrame({"step": steps, "mse": np.mean(errors, axis=0)})


def download_trajectory(traces: Iterable[WorldTrace], level: float = 0.95) -> pd.DataFrame:
    """Mean total downloads per snapshot with a confidence band across worlds."""
    ordered = _ordered(traces)
    steps = _common_steps(ordered)
    totals = [[snapshot.total_downloads for snapshot in trace.snapshots] for trace in ordered]
    return trajectory_frame(steps, totals, level)


def trajectory_frame(steps: np.ndarray, totals, level: float = 0.95) -> pd.DataFrame:
    """`totals` holds one row of per-snapshot download totals per world."""
    table = np.asarray(totals, dtype=np.float64)
    if table.ndim != 2 or table.shape[1] != len(steps):
        raise TraceDataError("download totals do not match the snapshot steps")
    rows = [mean_confidence_interval(table[:, index], level) for index in range(len(steps))]
    means, lows, highs = zip(*rows)
    return pd.DataFrame(
        {"step": steps, "mean_downloads": means, "ci_low": lows, "ci_high": highs}
    )


def final_estimation_error(trace: WorldTrace, market: Market, top_k: int = 10) -> float:
    songs = top_quality_songs(market.quality, top_k)
    return estimation_error(trace.snapshots[-1].estimates, market.quality, songs)


def market_shares_table(shares: MarketShares) -> pd.DataFrame:
    n_worlds, n_songs = shares.shares.shape
    return pd.DataFrame(
        {
            "world": np.repeat(shares.world_ids, n_songs),
            "song": np.tile(np.arange(n_songs), n_worlds),
            "share": shares.shares.ravel(),
        }
    )


def unpredictability_table(report: UnpredictabilityReport, market: Market) -> pd.DataFrame:
    # last row is the market-wide value, with no song attached
    return pd.DataFrame(
        {
            "scope": ["song"] * market.n + ["overall"],
            "song": pd.array([*range(market.n), None], dtype="Int64"),
            "quality": np.append(market.quality, np.nan),
            "appeal": np.append(market.appeal, np.nan),
            "u": np.append(report.per_song, report.overall),
        }
    )


def policy_comparison(
    results: dict[str, list[WorldTrace]],
    market: Market,
    n_iterations: int,
    top_k: int = 10,
    drop_empty: bool = False,
) -> pd.DataFrame:
    """One row per policy: downloads, download rate, unpredictability and estimation error."""
    rows = []
    for label, traces in results.items():
        finals = [float(trace.final_downloads.sum()) for trace in traces]
        mean, low, high = mean_confidence_interval(finals)
        curve = estimation_error_curve(traces, market, top_k)
        shares = market_shares(traces, drop_empty=drop_empty)
        overall = unpredictability(shares).overall if shares.n_worlds >= 2 else np.nan
        rows.append(
            {
                "policy": label,
                "mean_final_downloads": mean,
                "ci_low": low,
                "ci_high": high,
                "download_rate": mean / n_iterations,
                "rate_ci_low": low / n_iterations,
                "rate_ci_high": high / n_iterations,
                "unpredictability": overall,
                "initial_mse": float(curve["mse"].iloc[0]),
                "final_mse": float(curve["mse"].iloc[-1]),
            }
        )
    return pd.DataFrame(rows)
