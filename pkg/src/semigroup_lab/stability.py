"""Growth-bound certification ``||F(s/n)^m|| <= M exp(a m s / n)`` on a finite grid."""
import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence

import numpy as np

from . import numcore
from .chernoff import ChernoffFamily, evaluate_family
from .errors import ConvergenceError, FitError, InputError

DEFAULT_N = (1, 2, 4, 8, 16, 32)
DEFAULT_M = (1, 2, 4, 8, 16, 32)
DEFAULT_S = (0.25, 0.5, 1.0, 2.0, 4.0)
DEFAULT_TOL = 1e-10
NORM_TOL = 1e-12


@dataclass(frozen=True)
class GrowthBound:
    M: float = 1.0
    a: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.M) and math.isfinite(self.a)):
            raise InputError("growth bound constants must be finite")
        if self.M < 1:
            raise InputError(f"M must be >= 1, got {self.M}")

    def __call__(self, x):
        """Bound value ``M exp(a x)`` at exponent ``x = m s / n``."""
        return self.M * math.exp(self.a * x)


def _check_increasing(name, values, kind):
    values = tuple(values)
    if not values:
        raise InputError(f"{name} must be nonempty")
    for v in values:
        if not v > 0 or (kind is int and int(v) != v):
            raise InputError(f"{name} must hold positive {'integers' if kind is int else 'numbers'}, got {v!r}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InputError(f"{name} must be strictly increasing")
    return tuple(kind(v) for v in values)


@dataclass(frozen=True)
class CertGrid:
    n_values: Sequence[int] = DEFAULT_N
    m_values: Sequence[int] = DEFAULT_M
    s_values: Sequence[float] = DEFAULT_S

    def __post_init__(self):
        object.__setattr__(self, "n_values", _check_increasing("n_values", self.n_values, int))
        object.__setattr__(self, "m_values", _check_increasing("m_values", self.m_values, int))
        object.__setattr__(self, "s_values", _check_increasing("s_values", self.s_values, float))

    def points(self):
        return [(n, m, s) for n in self.n_values for m in self.m_values for s in self.s_values]

    def diagonal_points(self):
        return [(n, n, s) for n in self.n_values for s in self.s_values]


class GrowthRecord(NamedTuple):
    n: int
    m: int
    s: float
    lhs_norm: float
    rhs_bound: float

    @property
    def ratio(self):
        if self.rhs_bound == 0:
            return math.inf if self.lhs_norm > 0 else 0.0
        return self.lhs_norm / self.rhs_bound

    @property
    def exponent(self):
        return self.m * self.s / self.n


CSV_COLUMNS = ("n", "m", "s", "lhs_norm", "rhs_bound", "ratio")


@dataclass
class ViolationReport:
    records: List[GrowthRecord]
    tol: float
    bound: GrowthBound
    violations: List[GrowthRecord] = field(init=False)

    def __post_init__(self):
        self.violations = [r for r in self.records if r.lhs_norm > r.rhs_bound * (1 + self.tol)]

    @property
    def passed(self):
        return not self.violations

    @property
    def max_ratio(self):
        return max((r.ratio for r in self.records), default=0.0)

    def rows(self):
        for r in self.records:
            yield (r.n, r.m, r.s, r.lhs_norm, r.rhs_bound, r.ratio)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows():
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def power_norms(F: ChernoffFamily, points, norm_tol=NORM_TOL, jobs=1):
    """``||F(s/n)^m||`` for each ``(n, m, s)`` in ``points``, in input order."""
    groups = {}
    for idx, (n, m, s) in enumerate(points):
        groups.setdefault((n, s), []).append((m, idx))

    def run(key):
        n, s = key
        step = evaluate_family(F, s / n)
        power = np.eye(F.dim, dtype=step.dtype)
        done = 0
        out = []
        for m, idx in sorted(groups[key]):
            if m > done:
                power = power @ np.linalg.matrix_power(step, m - done)
                done = m
            try:
                out.append((idx, numcore.operator_norm(power, norm_tol)))
            except ConvergenceError as exc:
                raise ConvergenceError(f"{exc} at (n={n}, m={m}, s={s})", exc.iterations, (n, m, s)) from exc
        return out

    keys = list(groups)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, keys))
    else:
        results = [run(k) for k in keys]
    norms = [0.0] * len(points)
    for chunk in results:
        for idx, value in chunk:
            norms[idx] = value
    return norms


def _report(F, bound, points, tol, jobs):
    norms = power_norms(F, points, jobs=jobs)
    records = [GrowthRecord(n, m, s, lhs, bound(m * s / n)) for (n, m, s), lhs in zip(points, norms)]
    return ViolationReport(records, tol, bound)


def verify_growth_bound(F: ChernoffFamily, bound: GrowthBound, grid: CertGrid = None, tol=DEFAULT_TOL, jobs=1):
    """Compare ``||F(s/n)^m||`` with ``M exp(a m s/n) (1 + tol)`` at every grid point."""
    grid = grid or CertGrid()
    return _report(F, bound, grid.points(), tol, jobs)


def _upper_hull(xs, ys):
    pts = sorted(zip(xs, ys))
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # drop the middle point when it lies on or below the chord
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def estimate_growth_bound(F: ChernoffFamily, grid: CertGrid = None, jobs=1) -> GrowthBound:
    """Fit ``(M, a)`` so that the bound holds on ``grid``.

    The rate ``a`` is the least-squares slope through the upper convex hull
    of ``(m s / n, log ||F(s/n)^m||)``; ``M`` is then raised until every
    point is covered, and clamped to at least 1.
    """
    grid = grid or CertGrid()
    points = grid.points()
    xs_all = [m * s / n for n, m, s in points]
    if len(set(xs_all)) < 2:
        raise FitError("grid spans a single value of m*s/n; slope is undetermined")
    norms = power_norms(F, points, jobs=jobs)
    best = {}
    for x, v in zip(xs_all, norms):
        if v > 0:
            best[x] = max(best.get(x, 0.0), v)
    if not best:
        return GrowthBound(1.0, 0.0)
    if len(best) < 2:
        # powers vanish except at one exponent; no slope information
        x, v = next(iter(best.items()))
        return GrowthBound(max(1.0, v), 0.0)
    xs = np.array(list(best))
    ys = np.log(np.array([best[x] for x in xs]))
    hull = np.array(_upper_hull(xs, ys))
    hx, hy = hull[:, 0], hull[:, 1]
    a = float(np.polyfit(hx, hy, 1)[0]) if len(hx) > 2 else float((hy[1] - hy[0]) / (hx[1] - hx[0]))
    log_m = float(np.max(ys - a * xs))
    M = max(1.0, math.exp(log_m))
    return GrowthBound(M, a)


def check_i_star_equivalence(F: ChernoffFamily, bound: GrowthBound, grid: CertGrid = None, tol=DEFAULT_TOL):
    """True iff the full-grid condition and its ``m = n`` diagonal restriction agree."""
    grid = grid or CertGrid()
    full = _report(F, bound, grid.points(), tol, 1).passed
    diagonal = _report(F, bound, grid.diagonal_points(), tol, 1).passed
    return full == diagonal
