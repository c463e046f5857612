"""Linear fractional assignment and the expected-download maximizing ranking.

Two Dinkelbach solvers find the ranking that maximizes
sum_i v[sigma_i] a_i q_i / sum_i v[sigma_i] a_i. The general one runs over a
minimum-cost assignment oracle. The specialized one solves each parametric
subproblem max_pi sum_p v_p a_pi_p (q_pi_p - lam) by sorting songs on
a_i (q_i - lam) into positions of decreasing visibility.
"""

import itertools
import logging
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    ConvergenceError,
    DegenerateMarketError,
    DimensionMismatchError,
    ParameterError,
    UnsupportedTransformError,
)
from .models import (
    AttractionVector,
    InfluenceTransform,
    LfapInstance,
    LfapSolution,
    Market,
    ParametricSolution,
    Ranking,
    SolverMethod,
)

logger = logging.getLogger(__name__)

CONVERGENCE_TOLERANCE = 1e-12
TIE_TOLERANCE = 1e-12
BRUTE_FORCE_LIMIT = 10

AssignmentOracle = Callable[[np.ndarray], np.ndarray]
Attraction = Union[AttractionVector, np.ndarray]


def linear_sum_assignment_oracle(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching; returns the column matched to each row."""
    rows, cols = linear_sum_assignment(cost)
    matching = np.empty(cost.shape[0], dtype=np.int64)
    matching[rows] = cols
    return matching


def solve_lfap_dinkelbach(
    instance: LfapInstance, assignment_oracle: AssignmentOracle = linear_sum_assignment_oracle
) -> LfapSolution:
    n = instance.n
    rows = np.arange(n)
    matching = rows.copy()
    lam = instance.ratio(matching)
    iterates = [lam]
    for _ in range(n + 2):
        reduced = instance.cost - lam * instance.weight
        candidate = assignment_oracle(reduced)
        value = float(reduced[rows, candidate].sum())
        scale = max(1.0, float(instance.weight[rows, candidate].sum()))
        if value >= -CONVERGENCE_TOLERANCE * scale:
            break
        candidate_lam = instance.ratio(candidate)
        if candidate_lam >= lam:
            break
        matching, lam = candidate, candidate_lam
        iterates.append(lam)
    else:
        raise ConvergenceError(f"Dinkelbach did not converge within {n + 2} assignments")
    logger.debug(f"LFAP converged after {len(iterates)} iterates, objective {lam}")
    return LfapSolution(matching=matching, objective=lam, iterates=iterates)


def performance_instance(a: Attraction, q: np.ndarray, v: np.ndarray) -> LfapInstance:
    """LFAP instance with c_ij = -v_j a_i q_i and d_ij = v_j a_i (song i, position j)."""
    values, quality, visibility = _as_vectors(a, q, v)
    return LfapInstance(
        cost=-np.outer(values * quality, visibility),
        weight=np.outer(values, visibility),
    )


def _as_vectors(a: Attraction, q, v) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    values = np.asarray(a.values if isinstance(a, AttractionVector) else a, dtype=np.float64)
    quality = np.asarray(q, dtype=np.float64)
    visibility = np.asarray(v, dtype=np.float64)
    if not values.size == quality.size == visibility.size:
        raise DimensionMismatchError(
            f"attraction, quality and visibility lengths differ: "
            f"{values.size}, {quality.size}, {visibility.size}"
        )
    if not np.any(values > 0):
        raise DegenerateMarketError("every song has zero attraction")
    return values, quality, visibility


def _ratio(values: np.ndarray, quality: np.ndarray, visibility: np.ndarray, song_at) -> float:
    weights = visibility * values[song_at]
    return float(weights @ quality[song_at]) / float(weights.sum())


def _rearrange(
    values: np.ndarray, quality: np.ndarray, visibility: np.ndarray, lam: float
) -> tuple[float, np.ndarray]:
    n = values.size
    gap = quality - lam
    gap[np.abs(gap) <= TIE_TOLERANCE] = 0.0
    keys = values * gap
    index = np.arange(n)
    song_order = np.lexsort((index, -keys))
    position_order = np.lexsort((index, -visibility))
    song_at = np.empty(n, dtype=np.int64)
    song_at[position_order] = song_order
    return float(visibility[position_order] @ keys[song_order]), song_at


def parametric_value(a: Attraction, q, v, lam: float) -> tuple[float, Ranking]:
    """f(lam) = max over playlists of sum_p v_p a_pi_p (q_pi_p - lam), with an attaining ranking."""
    values, quality, visibility = _as_vectors(a, q, v)
    value, song_at = _rearrange(values, quality, visibility, lam)
    return value, Ranking.from_playlist(song_at, validate=False)


def parametric_search(a: Attraction, q, v) -> ParametricSolution:
    """Dinkelbach iteration on f; the lam iterates strictly increase until f(lam) is zero."""
    values, quality, visibility = _as_vectors(a, q, v)
    n = values.size
    song_at = np.arange(n)
    lam = _ratio(values, quality, visibility, song_at)
    iterates = [lam]
    for _ in range(n + 2):
        value, song_at = _rearrange(values, quality, visibility, lam)
        mass = float(visibility @ values[song_at])
        if value <= CONVERGENCE_TOLERANCE * max(1.0, mass):
            break
        candidate_lam = _ratio(values, quality, visibility, song_at)
        if candidate_lam <= lam:
            break
        lam = candidate_lam
        iterates.append(lam)
    else:
        raise ConvergenceError(f"parametric search did not converge within {n + 2} sorts")
    return ParametricSolution(
        ranking=Ranking.from_playlist(song_at, validate=False),
        objective=_ratio(values, quality, visibility, song_at),
        iterates=iterates,
    )


def solve_performance_parametric(a: Attraction, q, v) -> Ranking:
    return parametric_search(a, q, v).ranking


def performance_ranking(
    market: Market,
    a: AttractionVector,
    q: Optional[np.ndarray] = None,
    method: SolverMethod = SolverMethod.PARAMETRIC,
) -> Ranking:
    """Ranking maximizing expected downloads; ties put lower song indices higher."""
    quality = market.quality if q is None else np.asarray(q, dtype=np.float64)
    if method == SolverMethod.PARAMETRIC:
        return solve_performance_parametric(a, quality, market.visibility)

    values, quality, visibility = _as_vectors(a, quality, market.visibility)
    solution = solve_lfap_dinkelbach(performance_instance(values, quality, visibility))
    matched = Ranking.from_positions(solution.matching)
    optimum = _ratio(values, quality, visibility, matched.song_at)
    # the sorted playlist only breaks ties among rankings worth the matching's ratio
    _, song_at = _rearrange(values, quality, visibility, optimum)
    if abs(_ratio(values, quality, visibility, song_at) - optimum) <= TIE_TOLERANCE:
        return Ranking.from_playlist(song_at, validate=False)
    return matched


def brute_force_ranking(
    a: Attraction, q, v, objective: Optional[Callable[[Ranking], float]] = None
) -> Ranking:
    """Exhaustive argmax over playlists in lexicographic order; first maximum wins."""
    values, quality, visibility = _as_vectors(a, q, v)
    n = values.size
    if n > BRUTE_FORCE_LIMIT:
        raise ParameterError(f"brute force is limited to {BRUTE_FORCE_LIMIT} songs, got {n}")

    best_value = -np.inf
    best_playlist: Optional[np.ndarray] = None
    permutations = itertools.permutations(range(n))
    while chunk := list(itertools.islice(permutations, 40_320)):
        playlists = np.array(chunk, dtype=np.int64)
        if objective is None:
            weights = visibility[None, :] * values[playlists]
            scores = (weights * quality[playlists]).sum(axis=1) / weights.sum(axis=1)
        else:
            scores = np.array(
                [objective(Ranking.from_playlist(p, validate=False)) for p in playlists]
            )
        index = int(np.argmax(scores))
        if best_playlist is None or (
            scores[index] > best_value + TIE_TOLERANCE * max(1.0, abs(best_value))
        ):
            best_value = float(scores[index])
            best_playlist = playlists[index]
    return Ranking.from_playlist(best_playlist)


def adaptive_one_step_expected_downloads(
    market: Market, a: AttractionVector, sigma: Ranking, q: Optional[np.ndarray] = None
) -> float:
    """One-step expectation when the performance ranking is recomputed in every branch."""
    if market.influence_transform != InfluenceTransform.IDENTITY:
        raise UnsupportedTransformError("adaptive expectation needs the identity transform")
    values, quality, visibility = _as_vectors(
        a, market.quality if q is None else q, market.visibility
    )
    weights = visibility[sigma.position_of] * values
    total = float(weights.sum())
    current = float(weights @ quality) / total

    expectation = 0.0
    for song in range(values.size):
        bumped = values.copy()
        bumped[song] += 1.0
        best = parametric_search(bumped, quality, visibility).objective
        expectation += weights[song] * quality[song] / total * best
    unchanged = parametric_search(values, quality, visibility).objective
    return expectation + (1.0 - current) * unchanged
