"""Abstract Cauchy problem ``x' = Z x``: oracle solution, product-formula
solution with a refinement certificate, and the identity checks that pin the
product-formula limit down."""
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from . import numcore
from .chernoff import ChernoffFamily, GeneratorSpec, adjoint_family, evaluate_family
from .errors import InputError, ToleranceNotReached
from .evolution import floor_index, trajectory
from .stability import CertGrid, estimate_growth_bound

DEFAULT_SCHEDULE = tuple(4**j for j in range(2, 9))


@dataclass(frozen=True)
class CauchyProblem:
    generator: GeneratorSpec
    x0: np.ndarray
    horizon: float

    def __post_init__(self):
        gen = self.generator
        if not isinstance(gen, GeneratorSpec):
            gen = GeneratorSpec(gen)
            object.__setattr__(self, "generator", gen)
        object.__setattr__(self, "x0", numcore.as_state(self.x0, gen.dim, "x0"))
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise InputError("horizon must be positive and finite")

    @property
    def dim(self):
        return self.generator.dim


def reference_solution(p: CauchyProblem, s: float) -> np.ndarray:
    """``exp(s Z) x0``, the oracle every identity check compares against."""
    if s < 0 or s > p.horizon * (1 + 1e-12):
        raise InputError(f"s={s} outside [0, {p.horizon}]")
    if s == 0:
        return p.x0.copy()
    return numcore.matrix_exponential(s * p.generator.map) @ p.x0


@dataclass
class SolutionCertificate:
    s_grid: np.ndarray
    states: np.ndarray
    n_schedule: List[int]
    n_used: int
    gaps: List[float]
    residuals: Dict[str, List[float]] = field(default_factory=dict)
    problem: dict = field(default_factory=dict)

    @property
    def cauchy_gap(self):
        return self.gaps[-1] if self.gaps else math.inf

    @property
    def gaps_monotone(self):
        return all(b <= a for a, b in zip(self.gaps, self.gaps[1:]))

    def to_json(self):
        def enc(z):
            z = complex(z)
            return z.real if z.imag == 0 else [z.real, z.imag]

        return {
            "problem": self.problem,
            "n_schedule": self.n_schedule,
            "n_used": self.n_used,
            "gaps": self.gaps,
            "cauchy_gap": self.cauchy_gap,
            "s_grid": [float(s) for s in self.s_grid],
            "states": [[enc(z) for z in row] for row in self.states],
            "residuals": self.residuals,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _same_generator(F, p):
    a, b = F.generator.map, p.generator.map
    if a.shape != b.shape:
        return False
    return np.linalg.norm(a - b) <= 1e-12 * max(np.linalg.norm(a), np.linalg.norm(b)) + numcore.ABS_FLOOR


def _grid(p, s_grid):
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid.ndim != 1 or s_grid.size == 0 or np.any(s_grid < 0) or np.any(s_grid > p.horizon * (1 + 1e-12)):
        raise InputError(f"s_grid must lie in [0, {p.horizon}]")
    return s_grid


def solve_via_chernoff(F: ChernoffFamily, p: CauchyProblem, s_grid, tol=1e-6, n_schedule=None) -> SolutionCertificate:
    """Refine ``n`` until successive floor-index trajectories agree within ``tol``.

    Trajectories use ``t = p.horizon``. The gap between consecutive ``n``
    is the max over the grid of the state distance. The default schedule
    grows ``n`` by a factor 4 (16 to 65536): for a first-order family the
    gap is then about three times the error of the finer trajectory, whereas
    doubling makes gap and error asymptotically equal.

    Raises
    ------
    InputError
        If the family's declared generator differs from the problem's.
    ToleranceNotReached
        If the schedule is exhausted; the partial certificate is attached.
    """
    if not _same_generator(F, p):
        raise InputError(f"family {F.label!r} declares a different generator than the problem")
    if not tol > 0:
        raise InputError("tol must be positive")
    n_schedule = [int(n) for n in (n_schedule or DEFAULT_SCHEDULE)]
    if len(n_schedule) < 2 or any(b <= a for a, b in zip(n_schedule, n_schedule[1:])):
        raise InputError("n_schedule must be increasing with at least two entries")
    s_grid = _grid(p, s_grid)
    t = p.horizon

    prev = trajectory(F, t, n_schedule[0], s_grid, p.x0).states
    gaps = []
    used = n_schedule[0]
    for n in n_schedule[1:]:
        cur = trajectory(F, t, n, s_grid, p.x0).states
        gaps.append(float(np.max(np.linalg.norm(cur - prev, axis=1))))
        prev, used = cur, n
        if gaps[-1] < tol:
            break
    oracle = np.array([reference_solution(p, s) for s in s_grid])
    cert = SolutionCertificate(
        s_grid=s_grid,
        states=prev,
        n_schedule=n_schedule,
        n_used=used,
        gaps=gaps,
        residuals={"oracle_distance": [float(v) for v in np.linalg.norm(prev - oracle, axis=1)]},
        problem={
            "dim": p.dim,
            "horizon": p.horizon,
            "generator": p.generator.label,
            "family": F.label,
            "recipe": F.recipe,
            "x0": [complex(z).real for z in p.x0] if not np.iscomplexobj(p.x0) else [[z.real, z.imag] for z in p.x0],
        },
    )
    if gaps[-1] >= tol:
        raise ToleranceNotReached(gaps[-1], tol, cert)
    return cert


@dataclass
class ResidualReport:
    s_grid: np.ndarray
    residuals: np.ndarray

    @property
    def max_residual(self):
        return float(np.max(self.residuals)) if self.residuals.size else 0.0


def derivative_representation_check(F: ChernoffFamily, p: CauchyProblem, s_grid, n: int, rel_step=1e-4):
    """Compare a central difference of the oracle solution with the trajectory of ``Z x0``.

    At ``s = 0`` the step falls back to ``rel_step`` itself.
    """
    if not _same_generator(F, p):
        raise InputError(f"family {F.label!r} declares a different generator than the problem")
    s_grid = _grid(p, s_grid)
    Z = p.generator.map
    zx0 = Z @ p.x0
    traj = trajectory(F, p.horizon, n, s_grid, zx0)
    out = []
    for j, s in enumerate(s_grid):
        h = s * rel_step if s > 0 else rel_step
        fwd = numcore.matrix_exponential((s + h) * Z) @ p.x0
        bwd = numcore.matrix_exponential((s - h) * Z) @ p.x0
        out.append(np.linalg.norm((fwd - bwd) / (2 * h) - traj.states[j]))
    return ResidualReport(s_grid, np.array(out))


@dataclass
class IdentityResidual:
    lhs: complex
    rhs: complex
    residual: float
    bound: float

    @property
    def passed(self):
        return self.residual <= self.bound


def _pair_rows(states, phi):
    return states @ np.conj(phi)


def integral_identity_check(
    F: ChernoffFamily, x, phi, l: float, m: float, n: int, quad_points=1024, t=None, bound=None,
) -> IdentityResidual:
    """Residual of ``T_m(x, p) - T_l(x, p) = int_l^m T_s(x, Z* p) ds``.

    ``T_s(x, p)`` is the pairing of the ``n``-th floor-index trajectory
    (time scale ``t``, default ``m``) with ``p``; the integral is a composite
    trapezoid over ``quad_points`` panels. The acceptance bound is
    ``C (1/n + (m-l)^2/quad_points^2)`` with ``C`` built from the growth bound.
    """
    if not 0 <= l <= m:
        raise InputError("need 0 <= l <= m")
    if quad_points < 1:
        raise InputError("quad_points must be positive")
    x = numcore.as_state(x, F.dim, "x")
    phi = numcore.as_state(phi, F.dim, "phi")
    if l == m:
        return IdentityResidual(0.0, 0.0, 0.0, 0.0)
    t = m if t is None else t
    zstar = adjoint_family(F).generator.map
    nodes = np.linspace(l, m, quad_points + 1)
    ends = trajectory(F, t, n, [l, m], x).states
    lhs = complex(np.vdot(phi, ends[1]) - np.vdot(phi, ends[0]))
    vals = _pair_rows(trajectory(F, t, n, nodes, x).states, zstar @ phi)
    rhs = complex(np.trapezoid(vals, nodes))
    if bound is None:
        bound = estimate_growth_bound(F, CertGrid(n_values=(1, 4, 16), m_values=(1, 4, 16), s_values=(0.25, 1.0, 4.0)))
    Z = F.generator.map
    znorm = numcore.operator_norm(Z) if Z.any() else 0.0
    const = bound.M * math.exp(max(bound.a, 0.0) * m) * np.linalg.norm(x) * np.linalg.norm(phi)
    const *= (1 + znorm) ** 3 * (1 + m - l) * max(t, 1.0)
    limit = const * (1.0 / n + (m - l) ** 2 / quad_points**2)
    res = abs(lhs - rhs)
    if np.isrealobj(x) and np.isrealobj(phi) and F.dtype.kind == "f":
        lhs, rhs = lhs.real, rhs.real
    return IdentityResidual(lhs, rhs, float(res), float(limit))


def approximant(F: ChernoffFamily, s: float, n: int) -> np.ndarray:
    """``F(s/n)^n``, the ``n``-th product-formula approximant of ``S(s)``."""
    if s == 0:
        return np.eye(F.dim, dtype=F.dtype)
    return np.linalg.matrix_power(evaluate_family(F, s / n), n)


def semigroup_law_check(F: ChernoffFamily, s1: float, s2: float, x, n: int) -> float:
    """``||A_n(s1) A_n(s2) x - A_n(s1 + s2) x||`` with ``A_n(s) = F(s/n)^n``."""
    if s1 < 0 or s2 < 0:
        raise InputError("s1 and s2 must be nonnegative")
    x = numcore.as_state(x, F.dim, "x")
    lhs = approximant(F, s1, n) @ (approximant(F, s2, n) @ x)
    rhs = approximant(F, s1 + s2, n) @ x
    return float(np.linalg.norm(lhs - rhs))


@dataclass
class SemigroupLawStudy:
    n_values: List[int]
    residuals: List[float]
    constant: float
    slack: float

    @property
    def decreasing(self):
        return all(b < a for a, b in zip(self.residuals, self.residuals[1:]))

    @property
    def within_bound(self):
        return all(r <= self.slack * self.constant / n for n, r in zip(self.n_values, self.residuals))


def semigroup_law_study(F: ChernoffFamily, s1: float, s2: float, x, n_values, slack=1.5) -> SemigroupLawStudy:
    """Residuals over ``n_values`` with ``C`` calibrated as ``n_0 r(n_0)``."""
    n_values = [int(n) for n in n_values]
    res = [semigroup_law_check(F, s1, s2, x, n) for n in n_values]
    return SemigroupLawStudy(n_values, res, n_values[0] * res[0], slack)


def extend_from_local(G: Callable[[float], np.ndarray], l: float, s: float) -> np.ndarray:
    """``G(l/2)^q G(s - q l/2)`` with ``q = floor(2 s / l)``; ``G`` is only sampled on ``[0, l/2]``."""
    if not l > 0:
        raise InputError("l must be positive")
    if s < 0:
        raise InputError("s must be nonnegative")
    q = floor_index(2, s, l)
    rest = max(s - q * l / 2, 0.0)
    tail = numcore.as_operator(G(rest))
    if q == 0:
        return tail
    return np.linalg.matrix_power(numcore.as_operator(G(l / 2)), q) @ tail
