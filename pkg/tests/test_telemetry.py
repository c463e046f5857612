from src.models import Market, RunSummary
from src.telemetry import RunTelemetry


def _build_summary():
    return RunSummary(
        config={},
        market=Market(appeal=[0.5, 0.5], quality=[0.9, 0.1], visibility=[1.0, 0.5]),
        policy="p-rank(si)",
        n_worlds=2,
        n_iterations=10,
        trajectory=[],
        final_downloads=[[4, 1], [2, 1]],
    )


def test_observe_run_sets_gauges():
    telemetry = RunTelemetry()
    telemetry.observe_run(_build_summary(), 0.25)

    text = telemetry.render()

    assert 'musiclab_worlds_simulated{policy="p-rank(si)"} 2.0' in text
    assert 'musiclab_mean_final_downloads{policy="p-rank(si)"} 4.0' in text
    assert 'musiclab_mean_final_estimation_error{policy="p-rank(si)"} 0.25' in text


def test_write_textfile(tmp_path):
    telemetry = RunTelemetry()
    telemetry.observe_run(_build_summary(), 0.0)

    path = telemetry.write(tmp_path / "metrics" / "run.prom")

    assert path.read_text() == telemetry.render()
