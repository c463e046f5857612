"""Sampling probabilities and expected downloads of the MusicLab market model.

A participant facing ranking sigma samples song i with probability
v[sigma_i] * a_i / sum_j v[sigma_j] * a_j, where a_i = alpha * A_i + f(D_i)
under social influence and a_i = alpha * A_i under the independent condition,
and then downloads it with probability q_i.
"""

from typing import Callable

import numpy as np

from .errors import DegenerateMarketError, DimensionMismatchError, UnsupportedTransformError
from .models import (
    AttractionVector,
    InfluenceTransform,
    InformationCondition,
    Market,
    MarketState,
    Ranking,
)

PROBABILITY_TOLERANCE = 1e-12

INFLUENCE_TRANSFORMS: dict[InfluenceTransform, Callable[[np.ndarray], np.ndarray]] = {
    InfluenceTransform.IDENTITY: lambda d: d.astype(np.float64),
    InfluenceTransform.LOG: np.log1p,
    InfluenceTransform.SQRT: np.sqrt,
}


def influence(market: Market, downloads: np.ndarray) -> np.ndarray:
    """Apply the market's influence transform f to download counts."""
    return INFLUENCE_TRANSFORMS[market.influence_transform](np.asarray(downloads))


def attraction(
    market: Market, state: MarketState, condition: InformationCondition
) -> AttractionVector:
    if state.n != market.n:
        raise DimensionMismatchError(f"state has {state.n} songs, market has {market.n}")
    values = market.alpha * market.appeal
    if condition == InformationCondition.SOCIAL_INFLUENCE:
        values = values + influence(market, state.downloads)
    if not np.any(values > 0):
        raise DegenerateMarketError("every song has zero attraction")
    values = np.array(values, dtype=np.float64)
    values.setflags(write=False)
    return AttractionVector.model_construct(values=values)


def _check_sizes(market: Market, a: AttractionVector, *rankings: Ranking) -> None:
    if a.n != market.n:
        raise DimensionMismatchError(f"attraction has {a.n} songs, market has {market.n}")
    for ranking in rankings:
        if ranking.n != market.n:
            raise DimensionMismatchError(f"ranking has {ranking.n} songs, market has {market.n}")


def _weights(market: Market, a: AttractionVector, ranking: Ranking) -> tuple[np.ndarray, float]:
    weights = market.visibility[ranking.position_of] * a.values
    total = float(weights.sum())
    if total <= 0:
        raise DegenerateMarketError("visibility-weighted attraction sums to zero")
    return weights, total


def sampling_probabilities(market: Market, a: AttractionVector, ranking: Ranking) -> np.ndarray:
    """p_i = v[sigma_i] a_i / sum_j v[sigma_j] a_j."""
    _check_sizes(market, a, ranking)
    weights, total = _weights(market, a, ranking)
    return weights / total


def expected_downloads(market: Market, a: AttractionVector, ranking: Ranking) -> float:
    """Probability that the next participant downloads something."""
    _check_sizes(market, a, ranking)
    weights, total = _weights(market, a, ranking)
    return float(weights @ market.quality) / total


def one_step_expected_downloads(
    market: Market, a: AttractionVector, sigma: Ranking, sigma_next: Ranking
) -> float:
    """Expected downloads at t+1 given the state at t, ranking sigma at t and sigma_next at t+1.

    Each download branch adds one to the attraction of the downloaded song; the
    no-download branch contributes (1 - E[D_t]) * E[D_t].
    """
    if market.influence_transform != InfluenceTransform.IDENTITY:
        raise UnsupportedTransformError(
            f"one-step expectation needs the identity transform, not "
            f"{market.influence_transform.value}"
        )
    _check_sizes(market, a, sigma, sigma_next)
    q = market.quality
    weights, total = _weights(market, a, sigma)
    current = float(weights @ q) / total

    v_next = market.visibility[sigma_next.position_of]
    numerator = float((v_next * a.values) @ q)
    denominator = float(v_next @ a.values)
    # after song j is downloaded, its attraction becomes a_j + 1
    branch = (numerator + v_next * q) / (denominator + v_next)
    return float((weights * q / total) @ branch) + (1.0 - current) * current
