"""Market settings: position visibility, independent Gaussian and negatively correlated songs."""

from typing import Optional

import numpy as np

from .errors import ParameterError
from .models import Market, ScenarioFile, ScenarioKind, ScenarioSpec

DEFAULT_EXPONENT = 0.8
DEFAULT_UPTICK = 5
DEFAULT_UPTICK_FACTOR = 1.2


def visibility_profile(
    n: int,
    exponent: float = DEFAULT_EXPONENT,
    bottom_uptick: Optional[int] = None,
    uptick_factor: float = DEFAULT_UPTICK_FACTOR,
) -> np.ndarray:
    """Power-law decay v_p = p^-exponent with a linear rise over the last positions.

    The rise ends at `uptick_factor` times the last power-law value and never
    exceeds the top position's visibility.
    """
    if n < 1:
        raise ParameterError(f"visibility profile needs at least one position, got {n}")
    uptick = min(DEFAULT_UPTICK, n - 1) if bottom_uptick is None else bottom_uptick
    if n < uptick + 1:
        raise ParameterError(f"degenerate profile: {n} positions cannot hold an uptick of {uptick}")

    head = n - uptick
    visibility = np.arange(1, head + 1, dtype=np.float64) ** -exponent
    if uptick == 0:
        return visibility
    floor = visibility[-1]
    rise = floor * (1.0 + (uptick_factor - 1.0) * np.arange(1, uptick + 1) / uptick)
    return np.concatenate([visibility, np.minimum(rise, visibility[0])])


def _min_max(values: np.ndarray) -> np.ndarray:
    low, high = values.min(), values.max()
    if high <= low:
        raise ParameterError("cannot normalize a constant vector")
    return (values - low) / (high - low)


def gaussian_setting(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Independent standard-normal appeal and quality, min-max normalized to [0, 1]."""
    if n < 2:
        raise ParameterError(f"gaussian setting needs at least two songs, got {n}")
    rng = np.random.default_rng(seed)
    quality = _min_max(rng.standard_normal(n))
    appeal = _min_max(rng.standard_normal(n))
    return appeal, quality


def negative_correlation_setting(
    n: int, seed: int, jitter: float = 0.05
) -> tuple[np.ndarray, np.ndarray]:
    """Quality as in the gaussian setting; appeal mirrors it, A = 1 - q plus jitter."""
    if n < 2:
        raise ParameterError(f"negative-correlation setting needs at least two songs, got {n}")
    if jitter < 0:
        raise ParameterError(f"jitter must be nonnegative, got {jitter}")
    rng = np.random.default_rng(seed)
    quality = _min_max(rng.standard_normal(n))
    mirrored = np.clip(1.0 - quality + rng.normal(0.0, jitter, n), 0.0, 1.0)
    return _min_max(mirrored), quality


def build_market(spec: ScenarioSpec) -> Market:
    if spec.kind == ScenarioKind.EXPLICIT:
        appeal, quality = np.asarray(spec.appeal), np.asarray(spec.quality)
    elif spec.kind == ScenarioKind.GAUSSIAN:
        appeal, quality = gaussian_setting(spec.n, spec.seed)
    else:
        appeal, quality = negative_correlation_setting(spec.n, spec.seed, spec.jitter)

    if spec.visibility is not None:
        visibility = np.asarray(spec.visibility)
    else:
        visibility = visibility_profile(
            appeal.size, spec.visibility_exponent, spec.bottom_uptick, spec.uptick_factor
        )
    return Market(
        appeal=appeal,
        quality=quality,
        visibility=visibility,
        alpha=spec.alpha,
        influence_transform=spec.influence_transform,
    )


def generate_scenario(spec: ScenarioSpec) -> ScenarioFile:
    return ScenarioFile(spec=spec, market=build_market(spec))
