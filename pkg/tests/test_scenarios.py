import numpy as np
import pytest
from pydantic import ValidationError

from src.errors import ParameterError
from src.models import ScenarioFile, ScenarioKind, ScenarioSpec
from src.scenarios import (
    build_market,
    gaussian_setting,
    generate_scenario,
    negative_correlation_setting,
    visibility_profile,
)


def test_visibility_single_position():
    assert visibility_profile(1).tolist() == [1.0]


def test_visibility_head_decays_and_tail_rises():
    visibility = visibility_profile(50)

    head, tail = visibility[:45], visibility[44:]
    assert visibility[0] == 1.0
    assert np.all(np.diff(head) < 0)
    assert np.all(np.diff(tail) > 0)
    assert visibility[-1] == pytest.approx(1.2 * visibility[44])
    assert np.all(visibility > 0) and np.all(visibility <= visibility[0])


def test_visibility_without_uptick_is_power_law():
    visibility = visibility_profile(4, exponent=1.0, bottom_uptick=0)

    assert visibility == pytest.approx([1.0, 0.5, 1 / 3, 0.25])


def test_visibility_tail_is_capped_at_top_position():
    visibility = visibility_profile(3, bottom_uptick=2, uptick_factor=5.0)

    assert visibility.tolist() == [1.0, 1.0, 1.0]


def test_visibility_rejects_oversized_uptick():
    with pytest.raises(ParameterError):
        visibility_profile(4, bottom_uptick=4)


def test_gaussian_setting_is_normalized_and_reproducible():
    appeal, quality = gaussian_setting(50, seed=7)
    again_appeal, again_quality = gaussian_setting(50, seed=7)

    for vector in (appeal, quality):
        assert vector.min() == 0.0 and vector.max() == 1.0
    assert np.array_equal(appeal, again_appeal) and np.array_equal(quality, again_quality)
    assert not np.array_equal(quality, gaussian_setting(50, seed=8)[1])


def test_gaussian_setting_is_uncorrelated_on_average():
    correlations = [np.corrcoef(*gaussian_setting(50, seed))[0, 1] for seed in range(200)]

    assert abs(np.mean(correlations)) < 0.05


def test_negative_correlation_without_jitter_mirrors_quality():
    appeal, quality = negative_correlation_setting(50, seed=3, jitter=0.0)

    assert appeal == pytest.approx(1.0 - quality, abs=1e-12)
    assert np.corrcoef(appeal, quality)[0, 1] == pytest.approx(-1.0)


def test_negative_correlation_across_seeds():
    for seed in range(100):
        appeal, quality = negative_correlation_setting(50, seed)
        assert np.corrcoef(appeal, quality)[0, 1] <= -0.9


def test_settings_share_quality_for_a_seed():
    _, gaussian_quality = gaussian_setting(20, seed=11)
    _, mirrored_quality = negative_correlation_setting(20, seed=11)

    assert np.array_equal(gaussian_quality, mirrored_quality)


def test_generated_scenarios_are_valid_markets():
    for seed in range(30):
        for kind in (ScenarioKind.GAUSSIAN, ScenarioKind.NEGATIVE_CORRELATION):
            market = build_market(ScenarioSpec(kind=kind, n=50, seed=seed))
            assert market.n == 50
            assert market.visibility[0] == visibility_profile(50)[0]


def test_explicit_scenario_keeps_vectors():
    spec = ScenarioSpec(
        kind="explicit", appeal=[0.2, 0.9], quality=[0.6, 0.3], visibility=[1.0, 0.4], alpha=2.0
    )
    market = build_market(spec)

    assert market.appeal.tolist() == [0.2, 0.9]
    assert market.visibility.tolist() == [1.0, 0.4]
    assert market.alpha == 2.0


def test_explicit_scenario_needs_vectors():
    with pytest.raises(ValidationError):
        ScenarioSpec(kind="explicit", quality=[0.5])


def test_generated_scenario_rejects_literal_vectors():
    with pytest.raises(ValidationError):
        ScenarioSpec(kind="gaussian", appeal=[0.5, 0.5])


def test_scenario_file_round_trips_losslessly():
    scenario = generate_scenario(ScenarioSpec(kind="gaussian", n=12, seed=5))
    restored = ScenarioFile.model_validate_json(scenario.model_dump_json())

    assert np.array_equal(restored.market.appeal, scenario.market.appeal)
    assert np.array_equal(restored.market.quality, scenario.market.quality)
    assert np.array_equal(restored.market.visibility, scenario.market.visibility)
    assert restored.spec == scenario.spec
