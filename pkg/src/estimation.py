import numpy as np

from .errors import DimensionMismatchError, ParameterError, StateCorruptionError
from .models import MarketState, QualityEstimate

DEFAULT_SAMPLE_SIZE = 10


def initial_estimate(
    q_true: np.ndarray, m: int, rng: np.random.Generator
) -> QualityEstimate:
    """Pre-sample every song with m Bernoulli(q_i) trials; q0_i = successes_i / m."""
    if m < 1:
        raise ParameterError(f"initial sample size must be positive, got {m}")
    quality = np.asarray(q_true, dtype=np.float64)
    successes = rng.binomial(m, quality).astype(np.float64)
    return QualityEstimate(successes=successes, m=m, current=successes / m)


def update_estimate(est: QualityEstimate, state: MarketState) -> np.ndarray:
    """q_i,k = (q0_i * m + D_i,k) / (m + S_i,k)."""
    if state.n != est.successes.size:
        raise DimensionMismatchError(
            f"state has {state.n} songs, estimate has {est.successes.size}"
        )
    if np.any(state.downloads > state.samples):
        raise StateCorruptionError("a song has more downloads than samplings")
    # integer-valued numerator and denominator, one rounding in the division
    return (est.successes + state.downloads) / (est.m + state.samples)


def estimation_error(q_est: np.ndarray, q_true: np.ndarray, subset) -> float:
    """Mean squared error of the estimates over the songs in `subset`."""
    songs = np.asarray(list(subset), dtype=np.int64)
    if songs.size == 0:
        raise ParameterError("estimation error needs a nonempty song subset")
    diff = np.asarray(q_est, dtype=np.float64)[songs] - np.asarray(q_true, dtype=np.float64)[songs]
    return float(np.mean(diff**2))


def top_quality_songs(q_true: np.ndarray, top_k: int) -> np.ndarray:
    """Indices of the top_k highest-quality songs; ties go to the lower index."""
    quality = np.asarray(q_true, dtype=np.float64)
    order = np.lexsort((np.arange(quality.size), -quality))
    return order[: min(top_k, quality.size)]


def estimator_variance(q_true: np.ndarray, m: int) -> np.ndarray:
    """Variance q(1 - q) / m of the pre-sampled estimate."""
    quality = np.asarray(q_true, dtype=np.float64)
    return quality * (1.0 - quality) / m
