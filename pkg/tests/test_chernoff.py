import math

import numpy as np
import pytest
import scipy.linalg

from semigroup_lab import numcore
from semigroup_lab.chernoff import (
    ChernoffFamily,
    GeneratorSpec,
    adjoint_family,
    derivative_at_zero,
    evaluate_family,
    scalar_family,
)
from semigroup_lab.errors import DimensionError, ExtrapolationError, InputError, SingularityError

from conftest import rand_matrix

C_NIL = np.array([[0.0, 1.0], [0.0, 0.0]])
D_NIL = np.array([[0.0, 0.0], [1.0, 0.0]])


def all_recipes(rng, n=3):
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, n))
    return [
        ChernoffFamily.exact(A),
        ChernoffFamily.implicit_euler(-A @ A.T),
        ChernoffFamily.lie_trotter(A, B),
        ChernoffFamily.strang(A, B),
        ChernoffFamily.custom(lambda t: np.eye(n) + t * A, A),
    ]


def test_every_recipe_is_identity_at_zero(rng):
    for F in all_recipes(rng):
        out = evaluate_family(F, 0.0)
        assert np.array_equal(out, np.eye(3))
        assert out.dtype == np.float64


def test_implicit_euler_scalar():
    F = ChernoffFamily.implicit_euler([[-1.0]])
    assert evaluate_family(F, 0.25)[0, 0] == pytest.approx(0.8, rel=1e-15)


@pytest.mark.parametrize("t", [0.1, 0.7, 2.0])
def test_lie_trotter_commuting_scalars(t):
    F = ChernoffFamily.lie_trotter([[1.0]], [[2.0]])
    assert evaluate_family(F, t)[0, 0] == pytest.approx(math.exp(3 * t), rel=1e-14)


def test_recipe_formulas_against_scipy(rng):
    C, D = rng.standard_normal((2, 4, 4))
    t = 0.37
    e = scipy.linalg.expm
    cases = [
        (ChernoffFamily.exact(C), e(t * C)),
        (ChernoffFamily.implicit_euler(C), np.linalg.inv(np.eye(4) - t * C)),
        (ChernoffFamily.lie_trotter(C, D), e(t * C) @ e(t * D)),
        (ChernoffFamily.strang(C, D), e(t * C / 2) @ e(t * D) @ e(t * C / 2)),
    ]
    for F, ref in cases:
        assert np.linalg.norm(evaluate_family(F, t) - ref) <= 1e-12 * np.linalg.norm(ref)


def test_evaluate_is_deterministic(rng):
    for F in all_recipes(rng):
        assert np.array_equal(evaluate_family(F, 0.3), evaluate_family(F, 0.3))


def test_singularity_propagates():
    with pytest.raises(SingularityError):
        evaluate_family(ChernoffFamily.implicit_euler([[2.0]]), 0.5)


def test_negative_time_rejected():
    with pytest.raises(InputError):
        evaluate_family(ChernoffFamily.exact([[1.0]]), -0.1)


def test_mismatched_dims_rejected():
    with pytest.raises(DimensionError):
        ChernoffFamily.lie_trotter(np.eye(2), np.eye(3))
    F = ChernoffFamily.custom(lambda t: np.eye(2), np.eye(3))
    with pytest.raises(DimensionError):
        evaluate_family(F, 0.1)


def test_custom_requires_evaluator():
    with pytest.raises(InputError):
        ChernoffFamily("custom", (), GeneratorSpec(np.eye(2)))


def test_strang_flagged_extension(rng):
    flags = {F.recipe: F.is_extension for F in all_recipes(rng)}
    assert flags == {"exact": False, "implicit_euler": False, "lie_trotter": False, "strang": True, "custom": False}


# -- derivative at zero ----------------------------------------------------------

def test_derivative_exact_scalar():
    est = derivative_at_zero(ChernoffFamily.exact([[-0.5]]), [1.0])
    assert est.value[0] == pytest.approx(-0.5, abs=1e-8)


def test_derivative_constant_identity_family():
    F = ChernoffFamily.custom(lambda t: np.eye(3), np.zeros((3, 3)))
    est = derivative_at_zero(F, [1.0, -2.0, 3.0])
    assert np.array_equal(est.value, np.zeros(3))


def test_derivative_lie_trotter_nilpotent():
    F = ChernoffFamily.lie_trotter(C_NIL, D_NIL)
    f = np.array([1.0, 0.0])
    target = (C_NIL + D_NIL) @ f
    # oracle: plain difference quotients converge to (0, 1) at rate h
    for h in (1e-3, 1e-4, 1e-5):
        q = (scipy.linalg.expm(h * C_NIL) @ scipy.linalg.expm(h * D_NIL) @ f - f) / h
        assert np.linalg.norm(q - target) <= 2 * h
    assert np.allclose(target, [0.0, 1.0])
    est = derivative_at_zero(F, f)
    assert np.linalg.norm(est.value - target) <= 1e-6


def test_derivative_reproduces_generator_on_random_exact(rng):
    for _ in range(20):
        n = int(rng.integers(1, 9))
        A = rng.standard_normal((n, n))
        f = rng.standard_normal(n)
        est = derivative_at_zero(ChernoffFamily.exact(A), f)
        assert np.linalg.norm(est.value - A @ f) <= 1e-7 * (1 + np.linalg.norm(A @ f))
        assert est.order >= 1


def test_lie_trotter_and_strang_share_limit(rng):
    for _ in range(5):
        C, D = rng.standard_normal((2, 3, 3))
        f = rng.standard_normal(3)
        lie = derivative_at_zero(ChernoffFamily.lie_trotter(C, D), f).value
        strang = derivative_at_zero(ChernoffFamily.strang(C, D), f).value
        assert np.linalg.norm(lie - strang) <= 1e-6
        assert np.linalg.norm(lie - (C + D) @ f) <= 1e-6


def test_derivative_detects_nondifferentiable_family():
    # F(t) = 1 + sqrt(t): quotients 1/sqrt(h) blow up
    F = scalar_family(lambda t: 1.0 + math.sqrt(t), 0.0)
    with pytest.raises(ExtrapolationError):
        derivative_at_zero(F, [1.0])


def test_derivative_argument_checks():
    F = ChernoffFamily.exact([[1.0]])
    with pytest.raises(InputError):
        derivative_at_zero(F, [1.0], h0=0.0)
    with pytest.raises(InputError):
        derivative_at_zero(F, [1.0], levels=1)


# -- adjoint families ------------------------------------------------------------

def test_adjoint_of_symmetric_exact_family(rng):
    A = rng.standard_normal((3, 3))
    A = A + A.T
    F = ChernoffFamily.exact(A)
    G = adjoint_family(F)
    for t in (0.0, 0.1, 1.0):
        assert np.array_equal(evaluate_family(G, t), evaluate_family(F, t))


def test_adjoint_lie_trotter_reverses_order(rng):
    C, D = rand_matrix(rng, 3, True), rand_matrix(rng, 3, True)
    t = 0.4
    G = adjoint_family(ChernoffFamily.lie_trotter(C, D))
    expected = scipy.linalg.expm(t * D).conj().T @ scipy.linalg.expm(t * C).conj().T
    assert np.allclose(evaluate_family(G, t), expected, rtol=1e-12, atol=1e-13)


def test_adjoint_generator_is_adjoint(rng):
    for F in all_recipes(rng):
        G = adjoint_family(F)
        assert np.array_equal(G.generator.map, F.generator.map.conj().T)


def test_adjoint_pairing(rng):
    h = 0.1
    for F in all_recipes(rng):
        G = adjoint_family(F)
        x, phi = rng.standard_normal((2, 3))
        lhs = numcore.pairing(evaluate_family(F, h) @ x, phi)
        rhs = numcore.pairing(x, evaluate_family(G, h) @ phi)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_adjoint_values_match_adjoint_map(rng):
    for F in all_recipes(rng):
        G = adjoint_family(F)
        for t in (0.05, 0.5):
            assert np.allclose(evaluate_family(G, t), numcore.adjoint_map(evaluate_family(F, t)), rtol=1e-12, atol=1e-13)


def test_double_adjoint_recovers_values(rng):
    for F in all_recipes(rng):
        GG = adjoint_family(adjoint_family(F))
        for t in (0.0, 0.2, 1.3):
            a, b = evaluate_family(GG, t), evaluate_family(F, t)
            assert np.linalg.norm(a - b) <= 1e-14 * max(1.0, np.linalg.norm(b))
