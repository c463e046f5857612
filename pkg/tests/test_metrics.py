import numpy as np
import pytest
from pydantic import ValidationError

from src.errors import ParameterError, TraceDataError, UndefinedShareError
from src.metrics import (
    download_trajectory,
    estimation_error_curve,
    market_shares,
    market_shares_table,
    mean_confidence_interval,
    policy_comparison,
    quality_download_distribution,
    unpredictability,
    unpredictability_table,
)
from src.models import Market, MarketShares, MarketState, Snapshot, WorldTrace


def _build_snapshot(step, downloads, estimates=None):
    downloads = np.asarray(downloads)
    return Snapshot(
        step=step,
        downloads=downloads,
        samples=downloads * 2,
        song_at=np.arange(downloads.size),
        estimates=np.full(downloads.size, 0.5) if estimates is None else estimates,
    )


def _build_trace(world_id, final_downloads, estimates=None):
    final = np.asarray(final_downloads)
    snapshots = [
        _build_snapshot(0, np.zeros_like(final), estimates),
        _build_snapshot(10, final, estimates),
    ]
    state = MarketState(downloads=final, samples=final * 2, step=10)
    return WorldTrace(world_id=world_id, snapshots=snapshots, final_state=state)


def _build_market(quality):
    quality = np.asarray(quality, dtype=np.float64)
    return Market(appeal=np.ones(quality.size), quality=quality, visibility=np.ones(quality.size))


def _shares(rows):
    return MarketShares(shares=rows, world_ids=list(range(len(rows))))


def test_market_shares_single_world():
    shares = market_shares([_build_trace(0, [3, 1])])

    assert shares.shares.tolist() == [[0.75, 0.25]]


@pytest.mark.parametrize(
    ("downloads", "expected"),
    [([0, 5], [0.0, 1.0]), ([2, 2, 2, 2], [0.25, 0.25, 0.25, 0.25])],
)
def test_market_shares_examples(downloads, expected):
    assert market_shares([_build_trace(0, downloads)]).shares[0].tolist() == expected


def test_market_shares_orders_worlds_by_id():
    shares = market_shares([_build_trace(1, [1, 1]), _build_trace(0, [1, 3])])

    assert shares.world_ids.tolist() == [0, 1]
    assert shares.shares[0].tolist() == [0.25, 0.75]


def test_market_shares_rejects_empty_world():
    with pytest.raises(UndefinedShareError) as excinfo:
        market_shares([_build_trace(0, [1, 1]), _build_trace(4, [0, 0])])

    assert excinfo.value.world_id == 4
    assert "World 4" in str(excinfo.value)


def test_market_shares_can_drop_empty_worlds(caplog):
    shares = market_shares([_build_trace(0, [1, 1]), _build_trace(4, [0, 0])], drop_empty=True)

    assert shares.world_ids.tolist() == [0]
    assert "Dropping world 4" in caplog.text


def test_market_shares_validate_rows():
    with pytest.raises(ValidationError):
        _shares([[0.5, 0.4]])


def test_unpredictability_of_opposite_worlds():
    report = unpredictability(_shares([[1.0, 0.0], [0.0, 1.0]]))

    assert report.per_song.tolist() == [1.0, 1.0]
    assert report.overall == 1.0


def test_unpredictability_of_identical_worlds():
    report = unpredictability(_shares([[0.2, 0.8]] * 5))

    assert report.per_song.tolist() == [0.0, 0.0]
    assert report.overall == 0.0


def test_unpredictability_single_song():
    assert unpredictability(_shares([[1.0], [1.0], [1.0]])).overall == 0.0


def test_unpredictability_matches_pairwise_definition():
    rng = np.random.default_rng(4)
    raw = rng.uniform(0, 1, (7, 5))
    rows = raw / raw.sum(axis=1, keepdims=True)
    report = unpredictability(_shares(rows))

    pairs = [(a, b) for a in range(7) for b in range(a + 1, 7)]
    expected = [np.mean([abs(rows[a, i] - rows[b, i]) for a, b in pairs]) for i in range(5)]
    assert report.per_song == pytest.approx(expected, abs=1e-12)
    assert report.overall == pytest.approx(np.mean(expected), abs=1e-12)


def test_unpredictability_needs_two_worlds():
    with pytest.raises(ParameterError):
        unpredictability(_shares([[0.5, 0.5]]))


def test_identical_runs_have_zero_unpredictability():
    traces = [_build_trace(0, [4, 9, 1]), _build_trace(1, [4, 9, 1])]

    assert unpredictability(market_shares(traces)).overall == 0.0


def test_quality_download_distribution_orders_by_quality():
    market = _build_market([0.9, 0.1, 0.5])
    frame = quality_download_distribution(
        [_build_trace(1, [5, 1, 3]), _build_trace(0, [7, 0, 2])], market
    )

    assert list(frame.columns) == ["quality_rank", "song", "quality", "world", "downloads"]
    assert frame["song"].tolist() == [1, 1, 2, 2, 0, 0]
    assert frame["world"].tolist() == [0, 1, 0, 1, 0, 1]
    assert frame["downloads"].tolist() == [0, 1, 2, 3, 7, 5]


def test_estimation_error_curve_over_top_songs():
    market = _build_market([0.9, 0.1, 0.5])
    traces = [
        _build_trace(0, [1, 1, 1], estimates=np.array([0.7, 0.1, 0.5])),
        _build_trace(1, [1, 1, 1], estimates=np.array([0.9, 0.6, 0.3])),
    ]
    curve = estimation_error_curve(traces, market, top_k=2)

    # top songs are 0 and 2: world 0 error (0.04 + 0) / 2, world 1 error (0 + 0.04) / 2
    assert curve["step"].tolist() == [0, 10]
    assert curve["mse"].tolist() == pytest.approx([0.02, 0.02])


def test_estimation_error_curve_rejects_ragged_steps():
    market = _build_market([0.9, 0.1])
    short = WorldTrace(
        world_id=1,
        snapshots=[_build_snapshot(0, [1, 1])],
        final_state=MarketState(downloads=[1, 1], samples=[2, 2], step=0),
    )
    with pytest.raises(TraceDataError):
        estimation_error_curve([_build_trace(0, [1, 1]), short], market)


def test_download_trajectory_confidence_band():
    traces = [_build_trace(0, [2, 2]), _build_trace(1, [3, 3]), _build_trace(2, [4, 4])]
    frame = download_trajectory(traces)

    assert frame["step"].tolist() == [0, 10]
    assert frame["mean_downloads"].tolist() == [0.0, 6.0]
    low, high = frame["ci_low"].iloc[1], frame["ci_high"].iloc[1]
    # totals 4, 6, 8: standard error 2 / sqrt(3), t quantile 4.303 with 2 degrees of freedom
    assert (high - low) / 2 == pytest.approx(4.302652729911275 * 2 / np.sqrt(3), rel=1e-9)


def test_mean_confidence_interval_single_sample():
    assert mean_confidence_interval([5.0]) == (5.0, 5.0, 5.0)


def test_tables_have_documented_columns():
    market = _build_market([0.9, 0.1])
    shares = market_shares([_build_trace(0, [1, 3]), _build_trace(1, [1, 1])])
    shares_table = market_shares_table(shares)
    report_table = unpredictability_table(unpredictability(shares), market)

    assert list(shares_table.columns) == ["world", "song", "share"]
    assert shares_table["share"].tolist() == [0.25, 0.75, 0.5, 0.5]
    assert list(report_table.columns) == ["scope", "song", "quality", "appeal", "u"]
    assert report_table["scope"].tolist() == ["song", "song", "overall"]
    assert report_table["u"].tolist() == pytest.approx([0.25, 0.25, 0.25])


def test_policy_comparison_rows():
    market = _build_market([0.9, 0.1])
    results = {
        "p-rank(si)": [_build_trace(0, [5, 1]), _build_trace(1, [4, 2])],
        "d-rank(si)": [_build_trace(0, [1, 1]), _build_trace(1, [2, 0])],
    }
    table = policy_comparison(results, market, n_iterations=10)

    assert table["policy"].tolist() == ["p-rank(si)", "d-rank(si)"]
    assert table["mean_final_downloads"].tolist() == [6.0, 2.0]
    assert table["download_rate"].tolist() == pytest.approx([0.6, 0.2])
    assert table["unpredictability"].tolist() == pytest.approx([1 / 6, 0.5])
