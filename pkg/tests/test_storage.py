import numpy as np
import pytest

from src.errors import OutputExistsError, TraceDataError
from src.models import PolicySpec, ScenarioSpec, SimulationConfig
from src.scenarios import build_market, generate_scenario
from src.simulator import run_world
from src.storage import (
    REPORT_FILES,
    TRACE_COLUMNS,
    TraceStore,
    load_scenario,
    read_table,
    save_scenario,
    trace_frame,
    trace_from_frame,
)


@pytest.fixture
def trace():
    market = build_market(ScenarioSpec(kind="gaussian", n=6, seed=2))
    config = SimulationConfig(
        n_iterations=150, n_worlds=1, master_seed=4, record_granularity=50, policy=PolicySpec()
    )
    return run_world(market, config, world_id=0)


def _build_store(tmp_path, force=False):
    return TraceStore(tmp_path / "run", force=force)


def test_trace_frame_has_one_row_per_snapshot_and_song(trace):
    frame = trace_frame(trace)

    assert list(frame.columns) == TRACE_COLUMNS
    assert len(frame) == len(trace.snapshots) * 6
    assert frame["ranking_hash"].str.len().eq(16).all()


def test_trace_survives_csv(tmp_path, trace):
    store = _build_store(tmp_path)
    store.prepare()
    store.write_world(trace)

    restored = store.read_world(0)

    assert restored.steps.tolist() == trace.steps.tolist()
    assert np.array_equal(restored.final_downloads, trace.final_downloads)
    for got, expected in zip(restored.snapshots, trace.snapshots):
        assert np.array_equal(got.song_at, expected.song_at)
        assert np.array_equal(got.samples, expected.samples)
        assert np.allclose(got.estimates, expected.estimates, rtol=0, atol=1e-15)


def test_trace_from_frame_rejects_missing_columns(trace):
    frame = trace_frame(trace).drop(columns=["position"])

    with pytest.raises(TraceDataError, match="position"):
        trace_from_frame(0, frame)


def test_trace_from_frame_rejects_bad_positions(trace):
    frame = trace_frame(trace)
    frame.loc[frame["song"] == 0, "position"] = 99

    with pytest.raises(TraceDataError):
        trace_from_frame(0, frame)


def test_missing_world_is_named(tmp_path, trace):
    store = _build_store(tmp_path)
    store.prepare()
    store.write_world(trace)
    store.write_world(trace.model_copy(update={"world_id": 2}))

    with pytest.raises(TraceDataError, match=r"\[1\]"):
        store.read_worlds(3)


def test_world_ids_ignore_other_files(tmp_path, trace):
    store = _build_store(tmp_path)
    store.prepare()
    store.write_world(trace)
    (store.directory / "notes.csv").write_text("x\n")

    assert store.world_ids() == [0]


def test_prepare_refuses_previous_run(tmp_path, trace):
    store = _build_store(tmp_path)
    store.prepare()
    store.write_world(trace)

    with pytest.raises(OutputExistsError):
        _build_store(tmp_path).prepare()

    _build_store(tmp_path, force=True).prepare()
    assert store.world_ids() == []


def test_summary_missing_means_incomplete_run(tmp_path):
    store = _build_store(tmp_path)
    store.prepare()

    with pytest.raises(TraceDataError, match="did not complete"):
        store.read_summary()


def test_no_temporary_files_left_behind(tmp_path, trace):
    store = _build_store(tmp_path)
    store.prepare()
    store.write_world(trace)

    assert sorted(path.name for path in store.directory.iterdir()) == ["world_0000.csv"]


def test_scenario_save_and_load(tmp_path):
    path = tmp_path / "scenario.json"
    scenario = generate_scenario(ScenarioSpec(kind="negative-correlation", n=10, seed=1))

    save_scenario(path, scenario)
    restored = load_scenario(path)

    assert np.array_equal(restored.market.quality, scenario.market.quality)
    with pytest.raises(OutputExistsError):
        save_scenario(path, scenario)
    save_scenario(path, scenario, force=True)


def test_read_table_keeps_floats_exact(tmp_path, trace):
    store = _build_store(tmp_path)
    store.prepare()
    path = store.write_world(trace)

    assert read_table(path)["estimate"].tolist() == trace_frame(trace)["estimate"].tolist()


def test_forced_prepare_removes_reports(tmp_path, trace):
    store = _build_store(tmp_path)
    store.prepare()
    store.write_world(trace)
    for name in REPORT_FILES:
        (store.directory / name).write_text("stale\n")
    (store.directory / "notes.txt").write_text("keep\n")

    _build_store(tmp_path, force=True).prepare()

    assert sorted(path.name for path in store.directory.iterdir()) == ["notes.txt"]


def test_reports_alone_mark_a_previous_run(tmp_path):
    store = _build_store(tmp_path)
    store.directory.mkdir()
    (store.directory / REPORT_FILES[0]).write_text("stale\n")

    with pytest.raises(OutputExistsError):
        store.prepare()
