import argparse
import logging
import sys
import tomllib
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ValidationError

from .config import settings
from .errors import (
    MusicLabError,
    OutputExistsError,
    TraceDataError,
    UndefinedShareError,
)
from .lfap import performance_ranking
from .market import attraction, expected_downloads
from .metrics import (
    download_trajectory,
    estimation_error_curve,
    final_estimation_error,
    market_shares,
    market_shares_table,
    policy_comparison,
    quality_download_distribution,
    trajectory_frame,
    unpredictability,
    unpredictability_table,
)
from .models import (
    ExperimentConfig,
    InformationCondition,
    Market,
    MarketState,
    PolicyKind,
    PolicySpec,
    QualitySource,
    RankRequest,
    RunSummary,
    ScenarioKind,
    ScenarioSpec,
    SolverMethod,
    TrajectoryPoint,
    WorldTrace,
)
from .scenarios import build_market, generate_scenario
from .simulator import compare_policies, iter_experiment
from .storage import (
    DOWNLOADS_VS_QUALITY_FILE,
    ESTIMATION_ERROR_FILE,
    REPORT_FILES,
    SHARES_FILE,
    TRAJECTORY_FILE,
    UNPREDICTABILITY_FILE,
    TraceStore,
    load_scenario,
    save_scenario,
    write_table,
)
from .telemetry import RunTelemetry

logging.basicConfig(
    level=settings.log_level,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

DEFAULT_COMPARISON = [
    PolicySpec(kind=kind, condition=condition)
    for condition in InformationCondition
    for kind in (PolicyKind.PERFORMANCE_RANK, PolicyKind.DOWNLOAD_RANK, PolicyKind.RANDOM_RANK)
]


class UsageError(Exception):
    """Bad command line or unreadable experiment file."""


class MusicLabArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def load_experiment(path: Optional[Path]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    if not path.is_file():
        raise UsageError(f"config file {path} not found")
    with open(path, "rb") as f:
        return ExperimentConfig.model_validate(tomllib.load(f))


def apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Fold command-line flags into the experiment and validate the result."""
    simulation = config.resolved_simulation.model_dump()
    if "record_granularity" not in config.simulation.model_fields_set:
        simulation["record_granularity"] = settings.snapshot_stride
    flags = {
        "master_seed": args.seed,
        "n_worlds": args.worlds,
        "n_iterations": args.iterations,
        "refresh_rate": args.refresh_rate,
    }
    simulation.update({key: value for key, value in flags.items() if value is not None})
    policy_flags = {
        "kind": args.policy,
        "condition": args.condition,
        "quality_source": args.quality,
    }
    simulation["policy"].update({key: value for key, value in policy_flags.items() if value})

    data = config.model_dump()
    data.update(simulation=simulation, policy=None)
    if args.scenario is not None:
        data["scenario_file"] = args.scenario
    if args.out is not None:
        data["output"]["directory"] = args.out
    return ExperimentConfig.model_validate(data)


def resolve_market(config: ExperimentConfig) -> Market:
    if config.scenario_file is not None:
        return load_scenario(config.scenario_file).market
    return build_market(config.scenario)


def output_directory(config: ExperimentConfig) -> Path:
    if config.output.directory is not None:
        return Path(config.output.directory)
    return settings.output_dir_resolved


def write_reports(
    directory: Path,
    traces: list[WorldTrace],
    market: Market,
    top_k: int,
    metrics: bool = True,
    plot_data: bool = True,
) -> list[Path]:
    """Metric tables (shares, unpredictability) and plot data tables.

    Report files this call does not produce are removed from `directory`.
    """
    tables = {}
    if metrics:
        try:
            shares = market_shares(traces, drop_empty=settings.drop_empty_worlds)
        except (UndefinedShareError, TraceDataError) as e:
            logger.warning(f"Skipping market shares and unpredictability: {e}")
        else:
            tables[SHARES_FILE] = market_shares_table(shares)
            if shares.n_worlds >= 2:
                report = unpredictability(shares)
                tables[UNPREDICTABILITY_FILE] = unpredictability_table(report, market)
                logger.info(
                    f"Unpredictability U = {report.overall:.6g} over {shares.n_worlds} worlds"
                )
            else:
                logger.warning("Skipping unpredictability: it needs at least two worlds")
    if plot_data:
        tables[DOWNLOADS_VS_QUALITY_FILE] = quality_download_distribution(traces, market)
        tables[ESTIMATION_ERROR_FILE] = estimation_error_curve(traces, market, top_k)
        tables[TRAJECTORY_FILE] = download_trajectory(traces)

    for name in REPORT_FILES:
        if name not in tables:
            (directory / name).unlink(missing_ok=True)
    return [write_table(directory / name, table, True) for name, table in tables.items()]


def cmd_gen_scenario(args: argparse.Namespace) -> None:
    base = load_experiment(args.config).scenario
    overrides = {"kind": args.kind, "n": args.n, "seed": args.seed, "alpha": args.alpha}
    data = base.model_dump()
    data.update({key: value for key, value in overrides.items() if value is not None})
    spec = ScenarioSpec.model_validate(data)
    path = args.out or settings.output_dir_resolved / "scenario.json"
    scenario = generate_scenario(spec)
    save_scenario(path, scenario, force=args.force)
    logger.info(f"Generated {spec.kind.value} scenario with {scenario.market.n} songs")
    print(path)


def cmd_simulate(args: argparse.Namespace) -> None:
    config = apply_overrides(load_experiment(args.config), args)
    simulation = config.resolved_simulation
    market = resolve_market(config)
    emit = config.output.emit
    store = TraceStore(output_directory(config), force=args.force)
    store.prepare()
    threads = args.threads or settings.worker_count
    logger.info(f"Simulating {simulation.policy.label} into {store.directory}")

    kept: list[WorldTrace] = []
    totals, finals, errors = [], [], []
    steps: Optional[np.ndarray] = None
    for trace in iter_experiment(market, simulation, threads):
        if emit.traces:
            store.write_world(trace)
        if emit.metrics or emit.plot_data:
            kept.append(trace.model_copy(update={"sampled_songs": None, "downloaded": None}))
        steps = trace.steps if steps is None else steps
        totals.append([snapshot.total_downloads for snapshot in trace.snapshots])
        finals.append(trace.final_downloads.tolist())
        errors.append(final_estimation_error(trace, market, config.output.top_k))

    trajectory = trajectory_frame(steps, totals)
    summary = RunSummary(
        config=config.model_dump(mode="json"),
        market=market,
        policy=simulation.policy.label,
        n_worlds=simulation.n_worlds,
        n_iterations=simulation.n_iterations,
        trajectory=[
            TrajectoryPoint(
                step=int(row.step),
                mean_downloads=float(row.mean_downloads),
                ci_low=float(row.ci_low),
                ci_high=float(row.ci_high),
            )
            for row in trajectory.itertuples(index=False)
        ],
        final_downloads=finals,
        generated_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    if kept:
        write_reports(
            store.directory, kept, market, config.output.top_k, emit.metrics, emit.plot_data
        )
    if emit.telemetry:
        telemetry = RunTelemetry()
        telemetry.observe_run(summary, float(np.mean(errors)))
        telemetry.write(store.telemetry_path)
    store.write_summary(summary)
    logger.info(
        f"Finished {simulation.n_worlds} worlds; mean final downloads "
        f"{trajectory['mean_downloads'].iloc[-1]:.2f}"
    )


def cmd_rank(args: argparse.Namespace) -> None:
    request = RankRequest.model_validate_json(Path(args.input).read_text(encoding="utf-8"))
    market = Market(
        appeal=request.appeal,
        quality=request.quality,
        visibility=request.visibility,
        alpha=request.alpha,
        influence_transform=request.influence_transform,
    )
    downloads = request.downloads if request.downloads is not None else [0] * market.n
    state = MarketState(downloads=downloads, samples=downloads)
    a = attraction(market, state, request.condition)
    ranking = performance_ranking(market, a, method=args.method)
    objective = expected_downloads(market, a, ranking)
    print(f"objective: {objective!r}")
    print("position\tsong")
    for position, song in enumerate(ranking.song_at, start=1):
        print(f"{position}\t{int(song) + 1}")


def cmd_metrics(args: argparse.Namespace) -> None:
    store = TraceStore(args.run_dir or settings.output_dir_resolved)
    summary = store.read_summary()
    traces = store.read_worlds(summary.n_worlds)
    directory = args.out or store.directory
    top_k = ExperimentConfig.model_validate(summary.config).output.top_k
    written = write_reports(directory, traces, summary.market, top_k)
    logger.info(f"Wrote {len(written)} metric tables for {len(traces)} worlds")


def cmd_compare(args: argparse.Namespace) -> None:
    config = apply_overrides(load_experiment(args.config), args)
    simulation = config.resolved_simulation
    market = resolve_market(config)
    policies = config.compare or DEFAULT_COMPARISON
    threads = args.threads or settings.worker_count
    results = compare_policies(market, simulation, policies, threads)
    table = policy_comparison(
        results,
        market,
        simulation.n_iterations,
        top_k=config.output.top_k,
        drop_empty=settings.drop_empty_worlds,
    )
    path = write_table(output_directory(config) / "comparison.csv", table, force=args.force)
    print(table.to_string(index=False))
    print(path)


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="Experiment TOML file")
    parser.add_argument("--scenario", type=Path, help="Scenario JSON file (overrides [scenario])")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--worlds", type=int, help="Number of independent worlds")
    parser.add_argument("--iterations", type=int, help="Participants per world")
    parser.add_argument("--refresh-rate", type=int, help="Iterations between playlist updates")
    parser.add_argument("--policy", choices=[kind.value for kind in PolicyKind])
    parser.add_argument("--condition", choices=[c.value for c in InformationCondition])
    parser.add_argument("--quality", choices=[source.value for source in QualitySource])
    parser.add_argument("--threads", type=int, help="Worker processes (default: settings)")
    parser.add_argument("--out", type=Path, help="Output directory")
    parser.add_argument("--force", action="store_true", help="Overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = MusicLabArgumentParser(
        description="MusicLab - ranking policies in a simulated cultural market"
    )
    subparsers = parser.add_subparsers(dest="command", parser_class=MusicLabArgumentParser)

    gen_parser = subparsers.add_parser("gen-scenario", help="Generate a market scenario file")
    gen_parser.add_argument("--config", type=Path, help="Take [scenario] from an experiment file")
    gen_parser.add_argument("--kind", choices=[kind.value for kind in ScenarioKind])
    gen_parser.add_argument("--n", type=int, help="Number of songs")
    gen_parser.add_argument("--seed", type=int, help="Generation seed")
    gen_parser.add_argument("--alpha", type=float, help="Appeal weight")
    gen_parser.add_argument("--out", type=Path, help="Scenario file (default: <output_dir>/scenario.json)")
    gen_parser.add_argument("--force", action="store_true", help="Overwrite an existing file")
    gen_parser.set_defaults(handler=cmd_gen_scenario)

    simulate_parser = subparsers.add_parser("simulate", help="Run independent worlds")
    _add_experiment_flags(simulate_parser)
    simulate_parser.set_defaults(handler=cmd_simulate)

    rank_parser = subparsers.add_parser("rank", help="Print the performance ranking for a state")
    rank_parser.add_argument("input", type=Path, help="JSON with appeal, quality, visibility")
    rank_parser.add_argument(
        "--method",
        choices=[method.value for method in SolverMethod],
        default=SolverMethod.PARAMETRIC.value,
        help="Solver path (default: parametric)",
    )
    rank_parser.set_defaults(handler=cmd_rank)

    metrics_parser = subparsers.add_parser("metrics", help="Compute metric tables from traces")
    metrics_parser.add_argument("run_dir", type=Path, nargs="?", help="Directory of a simulate run")
    metrics_parser.add_argument("--out", type=Path, help="Report directory (default: run_dir)")
    metrics_parser.set_defaults(handler=cmd_metrics)

    compare_parser = subparsers.add_parser("compare", help="Run several policies on one market")
    _add_experiment_flags(compare_parser)
    compare_parser.set_defaults(handler=cmd_compare)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """Main entry point."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_USAGE
        args.handler(args)
    except (UsageError, OutputExistsError, ValidationError, tomllib.TOMLDecodeError) as e:
        logger.error(f"{e}")
        return EXIT_USAGE
    except (MusicLabError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
