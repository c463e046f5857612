"""Agent-based MusicLab worlds.

Each iteration one participant samples a song from the playlist in force and
downloads it with probability equal to its quality. Every `refresh_rate`
iterations, starting before the first participant, the policy recomputes the
playlist. Worlds are independent: world w draws from streams spawned from
SeedSequence(master_seed, spawn_key=(w,)), so any schedule gives the same traces.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Iterator, NamedTuple

import numpy as np

from .errors import DegenerateMarketError, ParameterError
from .estimation import initial_estimate, update_estimate
from .market import influence
from .models import (
    InformationCondition,
    Market,
    MarketState,
    PolicySpec,
    QualityEstimate,
    Ranking,
    SimulationConfig,
    Snapshot,
    WorldTrace,
)
from .policies import PolicyRunner

logger = logging.getLogger(__name__)


class WorldStreams(NamedTuple):
    sampling: np.random.Generator
    policy: np.random.Generator
    estimate: np.random.Generator


def world_streams(master_seed: int, world_id: int) -> WorldStreams:
    """Independent generators for one world, keyed by (master_seed, world_id)."""
    sequence = np.random.SeedSequence(master_seed, spawn_key=(world_id,))
    return WorldStreams(*(np.random.default_rng(child) for child in sequence.spawn(3)))


def _state(downloads: np.ndarray, samples: np.ndarray, step: int) -> MarketState:
    frozen_downloads, frozen_samples = downloads.copy(), samples.copy()
    frozen_downloads.setflags(write=False)
    frozen_samples.setflags(write=False)
    return MarketState.model_construct(
        downloads=frozen_downloads, samples=frozen_samples, step=step
    )


def _snapshot(state: MarketState, ranking: Ranking, estimate: QualityEstimate) -> Snapshot:
    estimates = update_estimate(estimate, state)
    estimates.setflags(write=False)
    return Snapshot.model_construct(
        step=state.step,
        downloads=state.downloads,
        samples=state.samples,
        song_at=ranking.song_at,
        estimates=estimates,
    )


def run_world(market: Market, config: SimulationConfig, world_id: int) -> WorldTrace:
    streams = world_streams(config.master_seed, world_id)
    estimate = initial_estimate(market.quality, config.initial_sample_size, streams.estimate)
    runner = PolicyRunner(config.policy, market, streams.policy)

    n, n_iterations = market.n, config.n_iterations
    social = config.policy.condition == InformationCondition.SOCIAL_INFLUENCE
    base = market.alpha * market.appeal
    quality = market.quality
    downloads = np.zeros(n, dtype=np.int64)
    samples = np.zeros(n, dtype=np.int64)
    sampled_songs = np.empty(n_iterations, dtype=np.int64)
    downloaded = np.zeros(n_iterations, dtype=bool)
    draws = streams.sampling.random((n_iterations, 2))

    attractions = base + influence(market, downloads) if social else base.copy()
    snapshots: list[Snapshot] = []
    ranking: Ranking = Ranking.identity(n)
    song_visibility = market.visibility

    for k in range(n_iterations):
        refresh = k % config.refresh_rate == 0
        record = k % config.record_granularity == 0
        if refresh or record:
            state = _state(downloads, samples, k)
        if refresh:
            ranking = runner.rank(state, update_estimate(estimate, state))
            song_visibility = market.visibility[ranking.position_of]
        if record:
            snapshots.append(_snapshot(state, ranking, estimate))

        weights = song_visibility * attractions
        cumulative = np.cumsum(weights)
        total = cumulative[-1]
        if total <= 0:
            raise DegenerateMarketError(f"world {world_id}: zero attraction at step {k}")
        song = int(np.searchsorted(cumulative, draws[k, 0] * total, side="right"))
        if song >= n:
            song = int(np.flatnonzero(weights > 0)[-1])

        sampled_songs[k] = song
        samples[song] += 1
        if draws[k, 1] < quality[song]:
            downloaded[k] = True
            downloads[song] += 1
            if social:
                attractions[song] = base[song] + influence(market, downloads[song : song + 1])[0]

    final_state = _state(downloads, samples, n_iterations)
    snapshots.append(_snapshot(final_state, ranking, estimate))

    sampled_songs.setflags(write=False)
    downloaded.setflags(write=False)
    return WorldTrace.model_construct(
        world_id=world_id,
        snapshots=snapshots,
        final_state=final_state,
        sampled_songs=sampled_songs,
        downloaded=downloaded,
    )


def iter_experiment(
    market: Market, config: SimulationConfig, threads: int = 1
) -> Iterator[WorldTrace]:
    """Yield the traces of worlds 0..W-1 in world order."""
    logger.info(
        f"Running {config.n_worlds} worlds of {config.n_iterations} iterations "
        f"with {config.policy.label} on {threads} worker(s)"
    )
    worker = partial(run_world, market, config)
    world_ids = range(config.n_worlds)
    if threads <= 1:
        traces = map(worker, world_ids)
        for trace in traces:
            _log_progress(trace.world_id, config.n_worlds)
            yield trace
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        for trace in pool.map(worker, world_ids):
            _log_progress(trace.world_id, config.n_worlds)
            yield trace


def _log_progress(world_id: int, n_worlds: int) -> None:
    done = world_id + 1
    if done % 50 == 0 or done == n_worlds:
        logger.info(f"Completed {done}/{n_worlds} worlds")


def run_experiment(market: Market, config: SimulationConfig, threads: int = 1) -> list[WorldTrace]:
    return list(iter_experiment(market, config, threads))


def compare_policies(
    market: Market, config: SimulationConfig, policies: list[PolicySpec], threads: int = 1
) -> dict[str, list[WorldTrace]]:
    """Run each policy on the same market and master seed."""
    labels = [policy.label for policy in policies]
    duplicates = sorted({label for label in labels if labels.count(label) > 1})
    if duplicates:
        raise ParameterError(f"policies to compare share labels {duplicates}")
    results: dict[str, list[WorldTrace]] = {}
    for policy in policies:
        policy_config = config.model_copy(update={"policy": policy})
        results[policy.label] = run_experiment(market, policy_config, threads)
    return results
