import json
import math

import numpy as np
import pytest
import scipy.linalg

from semigroup_lab.cauchy import (
    CauchyProblem,
    derivative_representation_check,
    extend_from_local,
    integral_identity_check,
    reference_solution,
    semigroup_law_check,
    semigroup_law_study,
    solve_via_chernoff,
)
from semigroup_lab.chernoff import ChernoffFamily
from semigroup_lab.errors import InputError, ToleranceNotReached
from semigroup_lab.fixtures import laplacian_1d
from semigroup_lab.stability import GrowthBound

SCALAR = np.array([[-1.0]])
DOUBLING = [16, 32, 64, 128, 256, 512, 1024, 2048, 4096]


def test_reference_at_zero(rng):
    x0 = rng.standard_normal(3)
    p = CauchyProblem(rng.standard_normal((3, 3)), x0, 1.0)
    assert np.array_equal(reference_solution(p, 0.0), x0)


def test_reference_zero_generator(rng):
    x0 = rng.standard_normal(3)
    p = CauchyProblem(np.zeros((3, 3)), x0, 2.0)
    for s in (0.5, 2.0):
        assert np.array_equal(reference_solution(p, s), x0)


def test_reference_scalar():
    p = CauchyProblem(SCALAR, [1.0], 1.0)
    assert reference_solution(p, 1.0)[0] == pytest.approx(math.exp(-1), rel=1e-14)


def test_reference_beyond_horizon():
    with pytest.raises(InputError):
        reference_solution(CauchyProblem(SCALAR, [1.0], 1.0), 1.5)


# -- solve_via_chernoff ----------------------------------------------------------

def test_solve_exact_recipe_converges_immediately(rng):
    A = rng.standard_normal((3, 3))
    p = CauchyProblem(A, rng.standard_normal(3), 1.0)
    cert = solve_via_chernoff(ChernoffFamily.exact(A), p, np.linspace(0, 1, 5), 1e-6, [16, 32, 64])
    assert cert.n_used == 32
    assert len(cert.gaps) == 1
    assert cert.cauchy_gap <= 1e-12


def test_solve_implicit_euler_scalar():
    s_grid = np.linspace(0, 1, 5)
    p = CauchyProblem(SCALAR, [1.0], 1.0)
    cert = solve_via_chernoff(ChernoffFamily.implicit_euler(SCALAR), p, s_grid, 1e-4, DOUBLING)
    # oracle: scalar iteration (1 + 1/n)^(-k), k = n s
    n = cert.n_used
    oracle = np.array([(1 + 1 / n) ** (-round(n * s)) for s in s_grid])
    assert np.allclose(cert.states[:, 0], oracle, rtol=1e-12)
    assert np.max(np.abs(cert.states[:, 0] - np.exp(-s_grid))) <= 2e-4
    assert cert.gaps_monotone


def test_solve_mismatched_generator():
    p = CauchyProblem(SCALAR, [1.0], 1.0)
    with pytest.raises(InputError):
        solve_via_chernoff(ChernoffFamily.implicit_euler([[-2.0]]), p, [0.0, 1.0])


def test_solve_schedule_exhausted_carries_certificate():
    p = CauchyProblem(SCALAR, [1.0], 1.0)
    with pytest.raises(ToleranceNotReached) as info:
        solve_via_chernoff(ChernoffFamily.implicit_euler(SCALAR), p, [0.5, 1.0], 1e-9, [16, 32, 64])
    assert info.value.certificate.n_used == 64
    assert info.value.gap == info.value.certificate.cauchy_gap


def test_certificate_json(tmp_path):
    p = CauchyProblem(SCALAR, [1.0], 1.0)
    cert = solve_via_chernoff(ChernoffFamily.implicit_euler(SCALAR), p, [0.0, 0.5, 1.0], 1e-3)
    path = tmp_path / "cert.json"
    cert.save(path)
    data = json.loads(path.read_text())
    assert data["n_used"] == cert.n_used
    assert data["gaps"] == cert.gaps
    assert data["problem"]["horizon"] == 1.0
    assert set(data["residuals"]) == {"oracle_distance"}


def test_certificate_gaps_monotone_on_fixtures(rng):
    for A in (laplacian_1d(8), -np.eye(3) + 0.1 * rng.standard_normal((3, 3))):
        p = CauchyProblem(A, np.ones(A.shape[0]), 0.5)
        cert = solve_via_chernoff(ChernoffFamily.implicit_euler(A), p, np.linspace(0, 0.5, 5), 1e-3)
        assert cert.gaps_monotone


# -- derivative representation ---------------------------------------------------

def test_derivative_representation_zero_generator():
    p = CauchyProblem(np.zeros((2, 2)), [1.0, 2.0], 1.0)
    rep = derivative_representation_check(ChernoffFamily.implicit_euler(np.zeros((2, 2))), p, [0.0, 0.5, 1.0], 64)
    assert rep.max_residual == 0.0


def test_derivative_representation_scalar():
    p = CauchyProblem(SCALAR, [1.0], 1.0)
    F = ChernoffFamily.implicit_euler(SCALAR)
    rep = derivative_representation_check(F, p, [1.0], 4096)
    # trajectory of Z x0 = -1 is -(1 + 1/4096)^(-4096)
    oracle = -(1 + 1 / 4096) ** (-4096)
    assert abs(oracle + math.exp(-1)) <= 1e-3
    assert rep.residuals[0] <= 1e-3


def test_derivative_representation_refines():
    p = CauchyProblem(laplacian_1d(6), np.ones(6), 0.5)
    F = ChernoffFamily.implicit_euler(p.generator.map)
    grid = [0.1, 0.25, 0.5]
    maxima = [derivative_representation_check(F, p, grid, n).max_residual for n in (256, 1024, 4096)]
    assert maxima[0] > maxima[1] > maxima[2]


# -- integral identity -----------------------------------------------------------

def test_integral_identity_degenerate_interval():
    res = integral_identity_check(ChernoffFamily.exact(SCALAR), [1.0], [1.0], 0.5, 0.5, 64)
    assert res.residual == 0.0 and res.lhs == 0.0 and res.rhs == 0.0


def test_integral_identity_zero_functional():
    res = integral_identity_check(ChernoffFamily.exact(SCALAR), [1.0], [0.0], 0.0, 1.0, 64, bound=GrowthBound())
    assert res.residual == 0.0


def test_integral_identity_closed_form():
    res = integral_identity_check(ChernoffFamily.exact(SCALAR), [1.0], [1.0], 0.0, 1.0, 4096, 1024)
    exact = math.exp(-1) - 1
    assert res.lhs == pytest.approx(exact, rel=1e-13)
    # composite trapezoid error bound for e^{-s} on [0, 1]
    assert abs(res.rhs - exact) <= 1 / (12 * 1024**2)
    assert res.residual <= 1e-6
    assert res.passed


def test_integral_identity_bound_holds_on_matrix(rng):
    A = laplacian_1d(5)
    F = ChernoffFamily.implicit_euler(A)
    x, phi = rng.standard_normal((2, 5))
    for n in (256, 1024):
        res = integral_identity_check(F, x, phi, 0.1, 0.6, n, 512)
        assert res.passed


# -- semigroup law ---------------------------------------------------------------

def test_semigroup_law_s1_zero(rng):
    F = ChernoffFamily.implicit_euler(laplacian_1d(4))
    assert semigroup_law_check(F, 0.0, 0.7, rng.standard_normal(4), 50) == 0.0


def test_semigroup_law_exact_family(rng):
    A = rng.standard_normal((3, 3))
    x = rng.standard_normal(3)
    for s1, s2 in [(0.1, 0.2), (0.5, 0.5), (1.0, 0.3)]:
        assert semigroup_law_check(ChernoffFamily.exact(A), s1, s2, x, 10) <= 1e-12 * max(1.0, np.linalg.norm(x))


def test_semigroup_law_implicit_euler_scalar():
    F = ChernoffFamily.implicit_euler(SCALAR)
    # scalar oracle: (1 + 0.5/n)^(-2n) - (1 + 1/n)^(-n)
    oracle = [abs((1 + 0.5 / n) ** (-2 * n) - (1 + 1 / n) ** (-n)) for n in (100, 200, 400)]
    study = semigroup_law_study(F, 0.5, 0.5, [1.0], [100, 200, 400])
    assert np.allclose(study.residuals, oracle, rtol=1e-9)
    assert study.decreasing
    assert study.within_bound


# -- local-to-global reconstruction ----------------------------------------------

def _local(A, l):
    def G(s):
        assert 0 <= s < l
        return scipy.linalg.expm(s * A)
    return G


def test_extend_short_time_is_local(rng):
    A = rng.standard_normal((3, 3))
    G = _local(A, 1.0)
    assert np.array_equal(extend_from_local(G, 1.0, 0.3), G(0.3))


def test_extend_half_step(rng):
    A = rng.standard_normal((3, 3))
    G = _local(A, 1.0)
    assert np.array_equal(extend_from_local(G, 1.0, 0.5), G(0.5) @ G(0.0))


def test_extend_matches_expm(rng):
    A = rng.standard_normal((3, 3))
    l = 0.8
    out = extend_from_local(_local(A, l), l, 1.3 * l)
    ref = scipy.linalg.expm(1.3 * l * A)
    assert np.linalg.norm(out - ref) <= 1e-12 * np.linalg.norm(ref)


def test_extend_reconstruction_up_to_four_l(rng):
    A = 0.5 * rng.standard_normal((4, 4))
    l = 0.6
    G = _local(A, l)
    for s in np.linspace(0, 4 * l, 23):
        ref = scipy.linalg.expm(s * A)
        assert np.linalg.norm(extend_from_local(G, l, s) - ref) <= 1e-10 * np.linalg.norm(ref)
