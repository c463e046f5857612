import logging
from typing import Optional

import numpy as np

from .lfap import performance_ranking
from .market import attraction
from .models import (
    InformationCondition,
    Market,
    MarketState,
    PolicyKind,
    PolicySpec,
    QualitySource,
    Ranking,
    SolverMethod,
)

logger = logging.getLogger(__name__)


def download_ranking(state: MarketState) -> Ranking:
    """Songs by downloads, most downloaded first; ties by song index."""
    order = np.lexsort((np.arange(state.n), -state.downloads))
    return Ranking.from_playlist(order, validate=False)


def random_ranking(rng: np.random.Generator, n: int) -> Ranking:
    """Uniform playlist from exactly n uniform draws used as sort keys."""
    keys = rng.random(n)
    return Ranking.from_playlist(np.argsort(keys, kind="stable"), validate=False)


def apply_policy(
    spec: PolicySpec,
    market: Market,
    state: MarketState,
    q_est: np.ndarray,
    rng: np.random.Generator,
    method: SolverMethod = SolverMethod.PARAMETRIC,
) -> Ranking:
    if spec.kind == PolicyKind.DOWNLOAD_RANK:
        return download_ranking(state)
    if spec.kind == PolicyKind.RANDOM_RANK:
        return random_ranking(rng, market.n)
    quality = market.quality if spec.quality_source == QualitySource.TRUE else q_est
    a = attraction(market, state, spec.condition)
    return performance_ranking(market, a, quality, method=method)


class PolicyRunner:
    """Per-world policy evaluation; caches P-rank(IN) whose instance never changes."""

    def __init__(
        self,
        spec: PolicySpec,
        market: Market,
        rng: np.random.Generator,
        method: SolverMethod = SolverMethod.PARAMETRIC,
    ):
        self.spec = spec
        self.market = market
        self.rng = rng
        self.method = method
        self._cached: Optional[Ranking] = None

    @property
    def is_stationary(self) -> bool:
        return (
            self.spec.kind == PolicyKind.PERFORMANCE_RANK
            and self.spec.condition == InformationCondition.INDEPENDENT
        )

    def rank(self, state: MarketState, q_est: np.ndarray) -> Ranking:
        if self._cached is not None:
            return self._cached
        ranking = apply_policy(self.spec, self.market, state, q_est, self.rng, self.method)
        if self.is_stationary:
            logger.debug(f"Caching stationary {self.spec.label} playlist {ranking.digest()}")
            self._cached = ranking
        return ranking
