import csv

import numpy as np
import pytest
import scipy.linalg

from semigroup_lab.chernoff import ChernoffFamily, GeneratorSpec, evaluate_family
from semigroup_lab.criteria import approximation_sequence_check, generator_boundedness_check
from semigroup_lab.evolution import convergence_study, floor_index
from semigroup_lab.fixtures import laplacian_1d
from semigroup_lab.stability import estimate_growth_bound

N_LIST = [64, 128, 256, 512, 1024, 2048, 4096]
S_VALUES = [0.25, 0.5, 1.0]


def iterate(F, f, t=1.0):
    def rule(s, n):
        return np.linalg.matrix_power(evaluate_family(F, t / n), floor_index(n, s, 1.0)) @ f
    return rule


def test_candidate_equal_to_iterate_gives_zero():
    A = laplacian_1d(4)
    F = ChernoffFamily.implicit_euler(A)
    f = np.ones(4)
    rep = approximation_sequence_check(F, f, S_VALUES, [16, 32, 64], iterate(F, f))
    assert np.allclose(rep.distances, 0.0, atol=1e-14)
    assert rep.passed


def test_reference_candidate_shrinks_at_first_order():
    A = np.array([[-1.0, 0.5], [0.0, -2.0]])
    F = ChernoffFamily.implicit_euler(A)
    f = np.array([1.0, 1.0])
    ref = lambda s, n: scipy.linalg.expm(s * A) @ f  # noqa: E731
    rep = approximation_sequence_check(F, f, S_VALUES, N_LIST, ref)
    for row in rep.distances:
        assert all(b < a for a, b in zip(row, row[1:]))
        slope = -np.polyfit(np.log(N_LIST[-4:]), np.log(row[-4:]), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.1)
    assert rep.passed


def test_constant_candidate_stagnates():
    A = np.array([[-1.0]])
    F = ChernoffFamily.implicit_euler(A)
    f = np.array([1.0])
    rep = approximation_sequence_check(F, f, [0.0] + S_VALUES, N_LIST, lambda s, n: f)
    verdicts = rep.verdicts
    assert verdicts[0.0] is True
    for s in S_VALUES:
        assert verdicts[s] is False
        # stagnation at the oracle gap |e^{-s} - 1|
        assert rep.distances[rep.s_values.index(s), -1] == pytest.approx(1 - np.exp(-s), rel=1e-3)


def test_criteria_csv(tmp_path):
    F = ChernoffFamily.implicit_euler(np.array([[-1.0]]))
    rep = approximation_sequence_check(F, [1.0], [0.5], [8, 16, 32], lambda s, n: np.array([np.exp(-s)]))
    path = tmp_path / "c.csv"
    rep.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["s", "n", "distance", "Z_norm", "verdict"]
    assert len(rows) == 4


def test_coherent_with_convergence_study():
    A = laplacian_1d(6)
    F = ChernoffFamily.implicit_euler(A)
    f = np.ones(6)
    ref = lambda s, n: scipy.linalg.expm(s * A) @ f  # noqa: E731
    rep = approximation_sequence_check(F, f, [1.0], N_LIST, ref)
    assert rep.passed
    conv = convergence_study(F, 1.0, N_LIST, f, ref(1.0, None))
    # s = 1 with t = 1 makes both routes the same iterate F(1/n)^n f
    assert np.allclose(rep.distances[0], conv.errors, rtol=1e-10)


# -- boundedness -----------------------------------------------------------------

def test_boundedness_constant_sequence(rng):
    Z = rng.standard_normal((3, 3))
    f = rng.standard_normal(3)
    bound, ok = generator_boundedness_check(GeneratorSpec(Z), [f] * 6)
    assert bound == pytest.approx(np.linalg.norm(Z @ f))
    assert ok


def test_boundedness_zero_generator(rng):
    rep = generator_boundedness_check(np.zeros((3, 3)), list(rng.standard_normal((4, 3))))
    assert rep.bound == 0.0 and rep.bounded


def test_boundedness_flags_blowup():
    Z = np.eye(2)
    seq = [np.array([1.0, 0.0]) * 10.0**k for k in range(9)]
    rep = generator_boundedness_check(Z, seq)
    assert not rep.bounded
    assert rep.tail_diameter > 0


def test_boundedness_contraction_iterates():
    A = laplacian_1d(8)
    F = ChernoffFamily.exact(A)
    bound = estimate_growth_bound(F)
    f = np.sin(np.arange(1, 9))
    step = evaluate_family(F, 0.01)
    seq = [f]
    for _ in range(50):
        seq.append(step @ seq[-1])
    rep = generator_boundedness_check(A, seq)
    # A commutes with exp(sA): ||A F^k f|| <= M ||A f||
    assert rep.bound <= bound.M * np.linalg.norm(A @ f) * (1 + 1e-10)
    assert rep.bounded


def test_boundedness_tail_diameter():
    seq = [np.array([float(k)]) for k in range(10)]
    rep = generator_boundedness_check(np.eye(1), seq)
    assert rep.tail_diameter == pytest.approx(4.0)
