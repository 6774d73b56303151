# tests/test_potentials.py
import numpy as np
import pytest

from fga_sh.errors import ContractError
from fga_sh.potentials import (
    CallablePotential,
    DualCrossing,
    ExtendedCoupling,
    FlatCoupling,
    SimpleCrossing,
    coupling_sup,
    eval_coupling,
    eval_diagonal,
    gradient,
    hessian,
    make_potential,
)

POINTS = np.linspace(-3.0, 3.0, 41)[:, None]


@pytest.mark.parametrize("tag", ["simple", "dual", "extended"])
def test_analytic_derivatives_match_finite_differences(tag):
    """Gradients and Hessians agree with central differences on both surfaces."""
    model = make_potential(tag)
    h = 1e-5
    for l in (0, 1):
        fd_grad = (eval_diagonal(model, l, POINTS + h) - eval_diagonal(model, l, POINTS - h)) / (2 * h)
        assert np.allclose(gradient(model, l, POINTS)[:, 0], fd_grad, rtol=1e-6, atol=1e-7), \
            f"Gradient of V{l}{l} wrong for {tag}"
        fd_hess = (gradient(model, l, POINTS + h) - gradient(model, l, POINTS - h))[:, 0] / (2 * h)
        assert np.allclose(hessian(model, l, POINTS)[:, 0, 0], fd_hess, rtol=1e-5, atol=1e-6), \
            f"Hessian of V{l}{l} wrong for {tag}"


def test_simple_crossing_values():
    model = SimpleCrossing()
    assert float(eval_diagonal(model, 0, [0.0])) == pytest.approx(0.0), "Surfaces should cross at x = 0"
    assert float(eval_diagonal(model, 0, [1.0])) == pytest.approx(np.tanh(1.0)), "Wrong V00"
    assert float(eval_diagonal(model, 1, [1.0])) == pytest.approx(-np.tanh(1.0)), "Wrong V11"
    assert complex(eval_coupling(model, [2.5])) == pytest.approx(1.0), "Wrong coupling"


def test_dual_crossing_values():
    model = DualCrossing()
    assert float(eval_diagonal(model, 0, [1.3])) == pytest.approx(0.0), "V00 should vanish"
    assert float(eval_diagonal(model, 1, [0.0])) == pytest.approx(-0.05), "Wrong well depth"
    assert complex(eval_coupling(model, [0.0])) == pytest.approx(0.015), "Wrong coupling amplitude"
    assert abs(complex(eval_coupling(model, [2.0]))) == pytest.approx(0.015 * np.exp(-0.24)), "Wrong coupling decay"


def test_extended_coupling_asymptotes():
    model = ExtendedCoupling()
    assert float(eval_diagonal(model, 0, [-50.0])) == pytest.approx(0.0, abs=3e-3), "V00 should vanish far left"
    assert float(eval_diagonal(model, 0, [50.0])) == pytest.approx(np.pi, abs=3e-3), "V00 should reach pi far right"
    assert float(eval_diagonal(model, 1, [0.0])) == pytest.approx(-np.pi / 2), "Wrong V11 at the origin"


def test_matrix_is_hermitian():
    model = make_potential("dual")
    mats = model.matrix(POINTS, 0.7)
    assert mats.shape == (POINTS.shape[0], 2, 2), "Wrong matrix shape"
    assert np.allclose(mats, np.conj(np.swapaxes(mats, -1, -2))), "Matrix potential should be Hermitian"
    assert np.allclose(mats[:, 0, 1], 0.7 * eval_coupling(model, POINTS)), "Off-diagonal should carry delta"


def test_flat_coupling_in_three_dimensions():
    model = FlatCoupling(gap=2.0, coupling=0.5, dimension=3)
    q = np.zeros((4, 3))
    assert np.allclose(eval_diagonal(model, 0, q), 1.0), "Wrong upper surface"
    assert np.allclose(eval_diagonal(model, 1, q), -1.0), "Wrong lower surface"
    assert gradient(model, 0, q).shape == (4, 3), "Wrong gradient shape"
    assert hessian(model, 1, q).shape == (4, 3, 3), "Wrong Hessian shape"
    assert coupling_sup(model, -1.0, 1.0) == pytest.approx(0.5), "Wrong coupling sup"


def test_callable_potential():
    """A harmonic pair with a Gaussian coupling built from callables."""
    model = CallablePotential(
        dimension=1,
        v00=lambda q: 0.5 * q[..., 0] ** 2,
        v11=lambda q: 0.5 * q[..., 0] ** 2 + 1.0,
        grad00=lambda q: q,
        grad11=lambda q: q,
        hess00=lambda q: np.ones(q.shape[:-1] + (1, 1)),
        hess11=lambda q: np.ones(q.shape[:-1] + (1, 1)),
        v01=lambda q: np.exp(-q[..., 0] ** 2),
        name="harmonic",
    )
    assert float(eval_diagonal(model, 1, [2.0])) == pytest.approx(3.0), "Wrong V11"
    assert gradient(model, 0, [[1.5]])[0, 0] == pytest.approx(1.5), "Wrong gradient"
    assert coupling_sup(model, -2.0, 2.0) == pytest.approx(1.0), "Coupling sup should be at the origin"
    assert model.describe()["name"] == "harmonic", "Name should appear in the description"

    uncoupled = CallablePotential(1, np.sin, np.sin, np.cos, np.cos, np.sin, np.sin)
    assert coupling_sup(uncoupled, -1.0, 1.0) == 0.0, "Missing v01 should mean no coupling"


def test_make_potential_errors():
    with pytest.raises(ContractError):
        make_potential("tully")
    with pytest.raises(ContractError):
        make_potential("simple", stiffness=3.0)
    model = make_potential("extended", stiffness=5.0)
    assert model.stiffness == 5.0, "Parameter override not applied"


def test_argument_checks():
    model = SimpleCrossing()
    with pytest.raises(ContractError):
        eval_diagonal(model, 2, [0.0])
    with pytest.raises(ContractError):
        eval_diagonal(model, 0, [0.0, 1.0])
    with pytest.raises(ContractError):
        CallablePotential(0, np.sin, np.sin, np.cos, np.cos, np.sin, np.sin)
