"""Trotter splitting ``(exp(sC/n) exp(sD/n))^n`` for a sum of generators."""
from dataclasses import dataclass

import numpy as np

from . import numcore
from .chernoff import ChernoffFamily
from .errors import DimensionError, InputError
from .evolution import ConvergenceReport, _check_n_list
from .stability import CertGrid, GrowthBound, verify_growth_bound


@dataclass(frozen=True)
class SplitPair:
    """Ordered pair ``(C, D)``; the factor ``exp(sC/n)`` is applied last.

    For the opposite ordering build ``SplitPair(D, C)``.
    """

    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        C = numcore.as_operator(self.C, "C")
        D = numcore.as_operator(self.D, "D")
        if C.shape != D.shape:
            raise DimensionError(f"C is {C.shape} but D is {D.shape}")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def dim(self):
        return self.C.shape[0]

    @property
    def generator(self):
        return self.C + self.D

    def commutes(self, rtol=1e-12):
        comm = self.C @ self.D - self.D @ self.C
        scale = np.linalg.norm(self.C) * np.linalg.norm(self.D)
        return np.linalg.norm(comm) <= rtol * scale + numcore.ABS_FLOOR

    def family(self):
        return ChernoffFamily.lie_trotter(self.C, self.D, label="lie_trotter")

    def strang_family(self):
        return ChernoffFamily.strang(self.C, self.D, label="strang")


def trotter_apply(p: SplitPair, s: float, n: int, x) -> np.ndarray:
    """``(exp(sC/n) exp(sD/n))^n x``; each factor is evaluated once."""
    if n < 1:
        raise InputError("n must be >= 1")
    x = numcore.as_state(x, p.dim, "x")
    eC = numcore.matrix_exponential((s / n) * p.C)
    eD = numcore.matrix_exponential((s / n) * p.D)
    for _ in range(n):
        x = eC @ (eD @ x)
    return x


def trotter_reference(p: SplitPair, s: float, x) -> np.ndarray:
    return numcore.matrix_exponential(s * p.generator) @ numcore.as_state(x, p.dim, "x")


def _strang_apply(p, s, n, x):
    x = numcore.as_state(x, p.dim, "x")
    half = numcore.matrix_exponential((0.5 * s / n) * p.C)
    eD = numcore.matrix_exponential((s / n) * p.D)
    for _ in range(n):
        x = half @ (eD @ (half @ x))
    return x


def trotter_convergence(p: SplitPair, s: float, n_list, x, strang=False) -> ConvergenceReport:
    """Errors against ``exp(s(C+D)) x`` over ``n_list``.

    With ``strang=True`` the symmetric splitting is measured instead; its
    report carries ``extension=True``.
    """
    n_list = _check_n_list(n_list)
    ref = trotter_reference(p, s, x)
    apply = _strang_apply if strang else trotter_apply
    errors = [np.linalg.norm(apply(p, s, n, x) - ref) for n in n_list]
    return ConvergenceReport(
        n_list, errors, label="strang" if strang else "lie_trotter", extension=strang,
        reference_norm=float(np.linalg.norm(ref)),
    )


def trotter_stability_check(p: SplitPair, bound: GrowthBound, grid: CertGrid = None, tol=1e-10, jobs=1):
    return verify_growth_bound(p.family(), bound, grid, tol=tol, jobs=jobs)
