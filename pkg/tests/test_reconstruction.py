# tests/test_reconstruction.py
import math

import numpy as np
import pytest

from fga_sh.core import HopEvent, TrajectoryRecord, TrajectoryState, evolve_batch, initial_state
from fga_sh.errors import ContractError, DegenerateWeightError, EmptyEnsembleError
from fga_sh.potentials import FlatCoupling
from fga_sh.reconstruction import (
    TRUNCATION_RADIUS,
    EstimatorAccumulator,
    GaussianKernel,
    component_errors,
    l2_error,
    l2_norm,
    l2_stderr,
    merge_accumulators,
    reconstruct,
    trajectory_weight,
    transition_rate,
)
from fga_sh.rules import RateModel
from fga_sh.utils import WaveFunctionGrid

EPS = 0.04


def hop(value, rate=1.0, time=0.5):
    return HopEvent(
        time=time, from_surface=0, to_surface=1,
        coupling_value=complex(value), coupling_magnitude=abs(value), rate=rate,
    )


def make_record(hops=(), a_t=2.0, a0=2.0, rate_integral=0.0, q=0.1, p=1.0, s=0.3, t=1.0,
                rate_model=RateModel.STANDARD, delta=EPS):
    state = TrajectoryState(
        t=t,
        l=np.array(len(hops) % 2),
        Q=np.array([q]),
        P=np.array([p]),
        S=np.array(s),
        A=np.array(a_t, dtype=complex),
        dzQ=np.eye(1, dtype=complex),
        dzP=-1j * np.eye(1),
    )
    return TrajectoryRecord(
        final_state=state, hops=list(hops), rate_integral=rate_integral, initial_a=complex(a0),
        rate_model=rate_model, delta=delta, eps=EPS,
    )


def grid_1d(lower=-2.0, upper=2.0, n=256, u0=None, u1=None):
    return WaveFunctionGrid(lower=lower, upper=upper, n=n, eps=EPS, u0=u0, u1=u1)


def test_weight_without_hops():
    weight = trajectory_weight(make_record())
    assert weight.value == pytest.approx(1.0), "Unhopped weight should be A_T / |A0|"
    assert weight.parity == 0, "No hops go to u0"


def test_weight_single_hop():
    weight = trajectory_weight(make_record([hop(-1.0)]))
    assert weight.value == pytest.approx(1j), "(-i)(V/|V|) with V = -1 should be i"
    assert weight.parity == 1, "One hop goes to u1"


def test_weight_two_hops():
    r = 0.7
    weight = trajectory_weight(make_record([hop(1.0), hop(1.0)], a_t=1.0 + 1.0j, rate_integral=r))
    assert weight.value == pytest.approx(-math.exp(r) * (1.0 + 1.0j) / 2.0), "Wrong two-hop weight"
    assert weight.parity == 0, "Even hop counts go to u0"


def test_weight_complex_coupling_phase():
    weight = trajectory_weight(make_record([hop(0.5j)]))
    assert weight.value == pytest.approx(1.0), "(-i)(i) should be 1"


def test_weight_gap_modified():
    """Each hop carries (delta/eps)|V| / lambda under the modified rate."""
    record = make_record([hop(1.0, rate=0.5)], rate_model=RateModel.GAP_MODIFIED)
    assert trajectory_weight(record).value == pytest.approx(-2.0j), "Wrong modified-rate weight"


def test_weight_degenerate_cases():
    assert trajectory_weight(make_record([hop(0.0)])).value == 0.0, "Zero coupling should give zero weight"
    with pytest.raises(DegenerateWeightError):
        trajectory_weight(make_record(a0=0.0))


def test_hop_at_zero_coupling_deposits_nothing():
    """A scheduled hop where V01 vanishes leaves u1 empty instead of raising."""
    model = FlatCoupling(gap=0.0, coupling=0.0)
    init = initial_state(np.array([[0.1]]), np.array([[1.0]]), np.array([1.0]))
    record = evolve_batch(init, model, final_time=0.5, dt=0.01, delta=EPS, eps=EPS, hop_schedule=np.array([10]))[0]
    assert record.hop_count == 1 and record.hops[0].coupling_magnitude == 0.0, "Hop should sit at a zero coupling"
    assert trajectory_weight(record).value == 0.0, "Zero coupling should give zero weight"
    out = reconstruct([record], grid_1d(), normalization=1.0)
    assert np.all(out.u1 == 0) and np.all(out.u0 == 0), "Zero-weight path should contribute nothing"


def test_kernel_decays():
    kernel = GaussianKernel(Q=np.array([0.1]), P=np.array([1.0]), S=0.3)
    x = np.linspace(-2.0, 2.0, 101)[:, None]
    assert np.all(kernel.theta(x).imag >= 0), "Im Theta should be nonnegative"
    assert abs(kernel.evaluate(np.array([0.1]), EPS)) == pytest.approx(1.0), "Unit modulus at the center"
    assert kernel.evaluate(np.array([0.1]), EPS) == pytest.approx(np.exp(1j * 0.3 / EPS)), "Phase at center is S"


def test_reconstruct_single_record():
    record = make_record()
    grid = grid_1d()
    out = reconstruct([record], grid, normalization=3.0)
    x = grid.points()
    kernel = GaussianKernel.from_record(record)
    expected = 3.0 * kernel.evaluate(x, EPS)
    expected[np.abs(x[:, 0] - 0.1) > TRUNCATION_RADIUS * math.sqrt(EPS)] = 0.0
    assert np.allclose(out.u0, expected, atol=1e-12), "Wrong single-trajectory reconstruction"
    assert np.all(out.u1 == 0), "Unhopped record should not touch u1"
    assert out.t == pytest.approx(1.0), "Reconstruction should carry the final time"


def test_parity_routing():
    out = reconstruct([make_record([hop(1.0)])], grid_1d(), normalization=1.0)
    assert np.all(out.u0 == 0), "Odd hop count should not touch u0"
    assert np.abs(out.u1).max() > 0.5, "Odd hop count should fill u1"


def test_reconstruct_is_linear():
    a = [make_record(q=0.1), make_record([hop(1.0)], q=-0.4)]
    b = [make_record(q=0.5, p=-1.0, a_t=1.0 - 1.0j)]
    grid = grid_1d()
    whole = reconstruct(a + b, grid, 1.0)
    part_a = reconstruct(a, grid, 1.0)
    part_b = reconstruct(b, grid, 1.0)
    for c in (0, 1):
        combined = (2 * part_a.component(c) + part_b.component(c)) / 3
        assert np.allclose(whole.component(c), combined, atol=1e-12), f"Component {c} not linear in records"


def test_reconstruct_checks():
    grid = grid_1d()
    with pytest.raises(EmptyEnsembleError):
        reconstruct([], grid, 1.0)
    with pytest.raises(ContractError):
        reconstruct([make_record(t=1.0), make_record(t=2.0)], grid, 1.0)


def test_hop_truncation():
    """Records above max_hops count towards N but contribute nothing."""
    records = [make_record(), make_record([hop(1.0), hop(1.0)])]
    grid = grid_1d()
    truncated = reconstruct(records, grid, 1.0, max_hops=1)
    single = reconstruct(records[:1], grid, 1.0)
    assert np.allclose(truncated.u0, single.u0 / 2), "Truncated record should dilute, not vanish from N"


def test_accumulator_matches_sample_statistics():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 5)) + 1j * rng.normal(size=(30, 5))
    zeros = np.zeros(5, dtype=complex)

    def chunk(rows):
        acc = EstimatorAccumulator(shape=(5,))
        acc.add_sums(len(rows), rows.sum(0), np.sum(np.abs(rows) ** 2, 0), zeros, np.zeros(5), [1] * len(rows))
        return acc

    first = merge_accumulators([chunk(x[:10]), chunk(x[10:])])
    second = merge_accumulators([chunk(x[10:]), chunk(x[:10])])
    assert first.count == 30, "Wrong count"
    assert np.allclose(first.mean(0), x.mean(0)), "Wrong mean"
    expected = np.sqrt(np.sum(np.abs(x - x.mean(0)) ** 2, 0) / 29 / 30)
    assert np.allclose(first.stderr(0), expected, rtol=1e-10), "Wrong standard error"
    assert np.allclose(first.mean(0), second.mean(0)), "Merge order should not matter"
    assert np.allclose(first.stderr(0), second.stderr(0)), "Merge order should not matter"
    assert first.total_hops == 30, "Hop histogram should add up"


def test_accumulator_checks():
    with pytest.raises(EmptyEnsembleError):
        EstimatorAccumulator(shape=(4,)).to_grid(grid_1d(n=4), 1.0)
    with pytest.raises(ContractError):
        EstimatorAccumulator(shape=(4,)).merge(EstimatorAccumulator(shape=(5,)))
    with pytest.raises(EmptyEnsembleError):
        merge_accumulators([])


def test_l2_norm_examples():
    assert l2_norm(grid_1d()) == 0.0, "Zero wave function has zero norm"
    unit = WaveFunctionGrid(lower=0.0, upper=1.0, n=100, u0=np.ones(100))
    assert l2_norm(unit) == pytest.approx(1.0), "Constant 1 on [0, 1) has norm 1"
    g = WaveFunctionGrid(lower=-10.0, upper=10.0, n=2000)
    g.u0 = np.exp(-g.axis**2).astype(complex)
    assert l2_norm(g, 0) == pytest.approx((math.pi / 2) ** 0.25, rel=1e-10), "Wrong Gaussian norm"
    assert l2_norm(g, 1) == 0.0, "u1 is empty"
    with pytest.raises(ContractError):
        l2_norm(g, 2)


def test_l2_error_examples():
    b = WaveFunctionGrid(lower=0.0, upper=1.0, n=100, u0=np.ones(100))
    a = b.with_components(2 * b.u0, b.u1)
    assert l2_error(b, b) == 0.0, "Identical grids have zero error"
    assert l2_error(a, b, relative=True) == pytest.approx(1.0), "Doubling should give relative error 1"
    with pytest.raises(ContractError):
        l2_error(a, b.empty_like(), relative=True)
    with pytest.raises(ContractError):
        l2_error(a, WaveFunctionGrid(lower=0.0, upper=1.0, n=50))

    errors = component_errors(a, b)
    assert errors["rel_u0"] == pytest.approx(1.0), "Wrong u0 error"
    assert errors["abs_u1"] == 0.0 and errors["rel_u1"] is None, "Empty reference component has no relative error"


def test_transition_rate():
    g = WaveFunctionGrid(lower=-10.0, upper=10.0, n=2000)
    g.u1 = np.exp(-g.axis**2).astype(complex)
    assert transition_rate(g, 2.0) == pytest.approx(math.sqrt(math.pi / 2) / 4, rel=1e-10), "Wrong rate"
    rotated = g.with_components(g.u0, np.exp(0.7j) * g.u1)
    assert transition_rate(rotated, 2.0) == pytest.approx(transition_rate(g, 2.0)), "Rate should ignore phase"
    assert transition_rate(g.empty_like(), 1.0) == 0.0, "No u1 means no transfer"
    with pytest.raises(ContractError):
        transition_rate(g, 0.0)


def test_l2_stderr():
    g = WaveFunctionGrid(lower=0.0, upper=1.0, n=100)
    assert l2_stderr(g) == 0.0, "No standard errors recorded"
    g.stderr0 = np.ones(100)
    g.stderr1 = np.ones(100)
    assert l2_stderr(g, 0) == pytest.approx(1.0), "Wrong u0 standard error"
    assert l2_stderr(g) == pytest.approx(math.sqrt(2.0)), "Wrong combined standard error"
