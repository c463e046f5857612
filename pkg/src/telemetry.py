from pathlib import Path

from prometheus_client import CollectorRegistry, Gauge, generate_latest, write_to_textfile

from .models import RunSummary


class RunTelemetry:
    """Per-run gauges, exported in the Prometheus text format."""

    def __init__(self):
        self.registry = CollectorRegistry()
        self.worlds = Gauge(
            "musiclab_worlds_simulated", "Worlds simulated", ["policy"], registry=self.registry
        )
        self.iterations = Gauge(
            "musiclab_iterations_per_world",
            "Participants per world",
            ["policy"],
            registry=self.registry,
        )
        self.songs = Gauge(
            "musiclab_songs", "Songs in the market", ["policy"], registry=self.registry
        )
        self.mean_final_downloads = Gauge(
            "musiclab_mean_final_downloads",
            "Mean total downloads at the end of a world",
            ["policy"],
            registry=self.registry,
        )
        self.mean_final_error = Gauge(
            "musiclab_mean_final_estimation_error",
            "Mean top-k quality estimation MSE at the end of a world",
            ["policy"],
            registry=self.registry,
        )

    def observe_run(self, summary: RunSummary, mean_final_error: float) -> None:
        policy = summary.policy
        self.worlds.labels(policy=policy).set(summary.n_worlds)
        self.iterations.labels(policy=policy).set(summary.n_iterations)
        self.songs.labels(policy=policy).set(summary.market.n)
        finals = [sum(downloads) for downloads in summary.final_downloads]
        self.mean_final_downloads.labels(policy=policy).set(sum(finals) / max(1, len(finals)))
        self.mean_final_error.labels(policy=policy).set(mean_final_error)

    def render(self) -> str:
        return generate_latest(self.registry).decode("utf-8")

    def write(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_to_textfile(str(path), self.registry)
        return path
