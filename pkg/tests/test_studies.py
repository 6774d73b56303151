# tests/test_studies.py
import math
import os
from unittest.mock import patch

import numpy as np
import pytest

from fga_sh.config import load_config
from fga_sh.errors import ContractError, InsufficientPointsError
from fga_sh.reconstruction import EstimatorAccumulator
from fga_sh.studies import (
    avoided_crossing_config,
    fit_slope,
    study_avoided_crossing,
    study_convergence,
    study_marcus,
    study_trajectory_scaling,
    trajectories_to_threshold,
)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def fake_simulate(config, workers=None, table=None):
    """Stand-in that hands the run parameters through as the 'estimate'."""
    return config.run, None, 1.0


def test_fit_slope_exact_line():
    x = np.arange(5.0)
    fit = fit_slope(x, 3.0 - 0.5 * x)
    assert fit.slope == pytest.approx(-0.5), "Wrong slope"
    assert fit.intercept == pytest.approx(3.0), "Wrong intercept"
    assert fit.residual == pytest.approx(0.0, abs=1e-12), "Exact line should have no residual"
    assert fit.points == 5, "Wrong point count"


def test_fit_slope_needs_points():
    with pytest.raises(InsufficientPointsError):
        fit_slope([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    with pytest.raises(InsufficientPointsError):
        fit_slope([1.0, 2.0, 3.0, np.nan], [1.0, 2.0, 3.0, 4.0])


def test_study_arguments(small_config):
    with pytest.raises(InsufficientPointsError):
        study_convergence(small_config, ns=[10, 20, 40], reference=object())
    with pytest.raises(InsufficientPointsError):
        study_marcus(small_config, deltas=[0.01, 0.02, 0.1])
    with pytest.raises(ContractError):
        study_marcus(small_config, deltas=[0.01, 0.02, 0.04, 0.08])
    with pytest.raises(InsufficientPointsError):
        study_trajectory_scaling(small_config, deltas=[0.01, 0.02])


def test_marcus_fit_on_quadratic_rates(small_config):
    with patch("fga_sh.studies.simulate", side_effect=fake_simulate), \
         patch("fga_sh.studies.build_table"), \
         patch("fga_sh.studies.transition_rate", side_effect=lambda run, norm: 0.3 * run.delta ** 2):
        result = study_marcus(small_config, deltas=[0.005, 0.01, 0.02, 0.05])
    assert result.fit.slope == pytest.approx(2.0), "Quadratic rates should fit slope 2"
    assert result.metrics["transition_rate"][0] == pytest.approx(0.3 * 0.005 ** 2), "Wrong recorded rate"
    assert result.to_dict()["fit"]["points"] == 4, "Wrong fit summary"


def test_convergence_fit_on_inverse_sqrt_errors(small_config):
    with patch("fga_sh.studies.simulate", side_effect=fake_simulate), \
         patch("fga_sh.studies.build_table"), \
         patch("fga_sh.studies._relative_error", side_effect=lambda run, ref: 2.0 / math.sqrt(run.trajectories)):
        result = study_convergence(small_config, ns=[100, 200, 400, 800], replicates=2, reference=object())
    assert result.fit.slope == pytest.approx(-0.5), "1/sqrt(N) errors should fit slope -1/2"
    assert len(result.metrics["errors"][0]) == 2, "Each N should carry one error per replicate"


def fake_range(calls):
    """Stand-in for simulate_range returning an empty-valued accumulator of the right size."""

    def run(config, start, stop, workers=None, table=None):
        calls.append((config.run.seed, start, stop))
        return EstimatorAccumulator(
            shape=(1,), count=stop - start,
            mean0=np.zeros(1, dtype=complex), mean1=np.zeros(1, dtype=complex),
            m2_0=np.zeros(1), m2_1=np.zeros(1),
        )

    return run


def test_trajectories_to_threshold_bisects(small_config):
    calls = []
    with patch("fga_sh.studies.simulate_range", side_effect=fake_range(calls)), \
         patch("fga_sh.studies.build_table"), \
         patch("fga_sh.studies.normalization_constant", return_value=1.0), \
         patch("fga_sh.studies._ensemble_error", side_effect=lambda acc, *args: 1.0 / math.sqrt(acc.count)):
        n = trajectories_to_threshold(small_config, object(), 0.08, start=64)
        capped = trajectories_to_threshold(small_config, object(), 0.01, start=64, cap=100)
    assert n == 160, f"Expected 160 trajectories, got {n}"
    assert capped is None, "Exceeding the cap should report None"


def test_trajectories_to_threshold_reuses_prefixes(small_config):
    """Growing N only evolves new indices: 64, 128, 256 then bisection from 128."""
    calls = []
    with patch("fga_sh.studies.simulate_range", side_effect=fake_range(calls)), \
         patch("fga_sh.studies.build_table"), \
         patch("fga_sh.studies.normalization_constant", return_value=1.0), \
         patch("fga_sh.studies._ensemble_error", side_effect=lambda acc, *args: 1.0 / math.sqrt(acc.count)):
        trajectories_to_threshold(small_config, object(), 0.08, replicates=3, start=64)
    seeds = sorted({seed for seed, _, _ in calls})
    assert len(seeds) == 3, "Each replicate should have its own seed"
    for seed in seeds:
        ranges = [(lo, hi) for s, lo, hi in calls if s == seed]
        assert ranges == [(0, 64), (64, 128), (128, 256), (128, 192), (128, 160), (128, 144)], \
            f"Wrong ranges for seed {seed}: {ranges}"


def test_trajectories_to_threshold_rejects_bad_threshold(small_config):
    with pytest.raises(ContractError):
        trajectories_to_threshold(small_config, object(), 1.5)


def test_trajectory_scaling_monotone(small_config):
    needed = {0.02: 100, 0.04: 200, 0.08: 400, 0.16: None}

    def fake_threshold(config, reference, threshold, *args):
        return needed[config.run.delta]

    config = small_config.with_updates(run={"dt": 0.0025})
    with patch("fga_sh.studies.compute_reference"), \
         patch("fga_sh.studies.trajectories_to_threshold", side_effect=fake_threshold):
        result = study_trajectory_scaling(config, deltas=[0.02, 0.04, 0.08, 0.16], threshold=0.1)
    assert result.metrics["trajectories"] == [100, 200, 400, None], "Wrong counts"
    assert result.metrics["exceeded"] == [False, False, False, True], "Cap flags wrong"
    assert result.notes["monotone"] is True, "Counts should be reported monotone"
    assert result.fit is None, "Three finite points are too few for a fit"


def test_avoided_crossing_config():
    base = load_config(os.path.join(CONFIG_DIR, "example6.cfg"))
    config = avoided_crossing_config(base, 0.01)
    assert config.run.delta == pytest.approx(0.1), "delta should be sqrt(eps)"
    assert config.packet.alpha == pytest.approx(50.0), "alpha should be 1/(2 eps)"
    assert config.packet.center == [pytest.approx(-0.2)], "Wrong center"
    assert config.run.final_time == pytest.approx(0.3), "Wrong final time"
    assert (config.grid.lower, config.grid.upper) == (pytest.approx(-1.6), pytest.approx(1.6)), "Wrong domain"
    assert config.grid.n == 1024, "Wrong grid size"
    assert config.reference.enabled, "Family members need a reference"


@pytest.mark.slow
def test_marcus_scaling():
    """Weak-coupling transfer grows as delta^2."""
    config = load_config(os.path.join(CONFIG_DIR, "example4.cfg"))
    result = study_marcus(config)
    assert abs(result.fit.slope - 2.0) <= 0.2, f"Slope {result.fit.slope:.2f} is not near 2"


@pytest.mark.slow
def test_monte_carlo_convergence():
    config = load_config(os.path.join(CONFIG_DIR, "example1.cfg"))
    result = study_convergence(config)
    assert result.notes["replicates"] >= 20, "Convergence needs at least 20 replicates"
    assert abs(result.fit.slope + 0.5) <= 0.15, f"Slope {result.fit.slope:.2f} is not near -1/2"


@pytest.mark.slow
def test_trajectory_count_grows_with_coupling():
    config = load_config(os.path.join(CONFIG_DIR, "example6.cfg"))
    result = study_trajectory_scaling(config)
    assert result.notes["monotone"], f"N(delta) should not decrease: {result.metrics['trajectories']}"
    assert result.fit is not None and result.fit.slope > 0, "log N should grow with delta"


@pytest.mark.slow
def test_avoided_crossing_is_uniform_in_eps():
    config = load_config(os.path.join(CONFIG_DIR, "example6.cfg"))
    result = study_avoided_crossing(config)
    assert not any(result.metrics["exceeded"]), "Every eps should reach the threshold under the cap"
    assert result.notes["spread"] < 4.0, f"Spread {result.notes['spread']:.2f} across eps is too wide"
