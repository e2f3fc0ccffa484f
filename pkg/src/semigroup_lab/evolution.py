"""Product-formula powers, floor-index trajectories and convergence studies."""
import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import numcore
from .chernoff import ChernoffFamily, evaluate_family, scaled_family
from .errors import DimensionError, InputError
from .stability import CertGrid, GrowthBound, estimate_growth_bound

EXACT_THRESHOLD = 1e-12
LIMIT_THRESHOLDS = (0.1, 0.01, 0.001)


def floor_index(n, s, t):
    """``floor(n s / t)`` with a guard against products like ``3 * 0.1 / 0.1``."""
    x = n * s / t
    return int(math.floor(x + 1e-9 * max(1.0, abs(x))))


def product_power(F: ChernoffFamily, t: float, n: int, x) -> np.ndarray:
    """``F(t/n)^n x`` by ``n`` applications of the single map ``F(t/n)``."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    step = evaluate_family(F, t / n)
    y = numcore.as_state(x, F.dim, "x")
    for _ in range(n):
        y = step @ y
    return y


@dataclass
class EvolutionTrace:
    family: ChernoffFamily
    t: float
    n: int
    s_grid: np.ndarray
    powers: np.ndarray
    states: np.ndarray
    x0: np.ndarray

    def state_at(self, j):
        return self.states[j]


def trajectory(F: ChernoffFamily, t: float, n: int, s_grid, x0) -> EvolutionTrace:
    """States ``F(t/n)^k x0`` with ``k = floor(n s / t)`` for every ``s`` in ``s_grid``.

    Powers are built incrementally in increasing ``k`` from one evaluation of
    ``F(t/n)``.
    """
    if not t > 0:
        raise InputError("t must be positive")
    if n < 1:
        raise InputError("n must be >= 1")
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid.ndim != 1 or np.any(s_grid < 0) or not np.all(np.isfinite(s_grid)):
        raise InputError("s_grid must be a 1-D list of nonnegative numbers")
    x0 = numcore.as_state(x0, F.dim, "x0")
    powers = np.array([floor_index(n, s, t) for s in s_grid], dtype=int)
    step = evaluate_family(F, t / n) if powers.max(initial=0) > 0 else None
    dtype = np.result_type(x0.dtype, F.dtype)
    states = np.empty((len(s_grid), F.dim), dtype=dtype)
    y = x0.astype(dtype)
    done = 0
    for j in np.argsort(powers, kind="stable"):
        while done < powers[j]:
            y = step @ y
            done += 1
        states[j] = y
    return EvolutionTrace(F, float(t), int(n), s_grid, powers, states, x0)


@dataclass
class PairingTrace:
    values: np.ndarray
    functional: np.ndarray


def weak_pairing_trace(trace: EvolutionTrace, phi) -> PairingTrace:
    phi = numcore.as_state(phi, name="phi")
    if phi.shape[0] != trace.states.shape[1]:
        raise DimensionError(f"functional has dimension {phi.shape[0]}, trace has {trace.states.shape[1]}")
    return PairingTrace(trace.states @ phi.conj(), phi)


def fit_order(n_values, errors):
    """Least-squares slope of ``-log e`` against ``log n`` over the tail of the sequence.

    Uses the last ``max(3, ceil(len/2))`` points; zero errors are dropped.
    Returns ``None`` when fewer than two usable points remain.
    """
    n_values = np.asarray(n_values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    tail = max(3, math.ceil(len(n_values) / 2))
    n_tail, e_tail = n_values[-tail:], errors[-tail:]
    keep = e_tail > 0
    if keep.sum() < 2:
        return None
    slope = np.polyfit(np.log(n_tail[keep]), np.log(e_tail[keep]), 1)[0]
    return float(-slope)


def local_orders(n_values, errors):
    out = [float("nan")]
    for (n0, e0), (n1, e1) in zip(zip(n_values, errors), zip(n_values[1:], errors[1:])):
        if e0 > 0 and e1 > 0:
            out.append(math.log(e0 / e1) / math.log(n1 / n0))
        else:
            out.append(float("nan"))
    return out


CONVERGENCE_COLUMNS = ("family", "n", "error", "local_order")


@dataclass
class ConvergenceReport:
    n_values: List[int]
    errors: List[float]
    label: str = ""
    extension: bool = False
    reference_norm: float = 1.0
    order: Optional[float] = field(init=False)
    local_orders: List[float] = field(init=False)

    def __post_init__(self):
        self.n_values = [int(n) for n in self.n_values]
        self.errors = [float(e) for e in self.errors]
        self.local_orders = local_orders(self.n_values, self.errors)
        self.order = None if self.exact else fit_order(self.n_values, self.errors)

    @property
    def exact(self):
        return max(self.errors) <= EXACT_THRESHOLD * max(1.0, self.reference_norm)

    @property
    def monotone(self):
        return all(b <= a for a, b in zip(self.errors, self.errors[1:]))

    @property
    def order_label(self):
        if self.exact:
            return "exact"
        return "nan" if self.order is None else repr(self.order)

    def rows(self):
        for n, e, p in zip(self.n_values, self.errors, self.local_orders):
            yield (self.label, n, e, p)

    def write_rows(self, writer):
        for label, n, e, p in self.rows():
            writer.writerow([label, n, repr(e), "" if math.isnan(p) else repr(p)])
        writer.writerow([self.label, "fit", "", self.order_label])

    def to_csv(self, path):
        write_convergence_csv(path, [self])


def write_convergence_csv(path, reports):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CONVERGENCE_COLUMNS)
        for rep in reports:
            rep.write_rows(writer)


def _check_n_list(n_list):
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3:
        raise InputError("n_list needs at least three entries")
    if any(n < 1 for n in n_list) or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise InputError("n_list must be strictly increasing positive integers")
    return n_list


def convergence_study(F: ChernoffFamily, t: float, n_list, x0, reference) -> ConvergenceReport:
    """Errors ``||F(t/n)^n x0 - reference||`` over ``n_list`` with a fitted order."""
    n_list = _check_n_list(n_list)
    reference = numcore.as_state(reference, F.dim, "reference")
    errors = [np.linalg.norm(product_power(F, t, n, x0) - reference) for n in n_list]
    return ConvergenceReport(
        n_list, errors, label=F.label, extension=F.is_extension, reference_norm=float(np.linalg.norm(reference))
    )


# -- small-step kernel diagnostics ---------------------------------------------

@dataclass
class LimitCheckReport:
    """Per-item residuals plus maxima over nested buckets ``ratio <= r``."""

    keys: list
    ratios: np.ndarray
    values: np.ndarray
    thresholds: Sequence[float]
    bucket_maxima: List[Optional[float]]
    rate: float

    @property
    def monotone(self):
        filled = [m for m in self.bucket_maxima if m is not None]
        return all(b <= a for a, b in zip(filled, filled[1:]))

    @property
    def passed(self):
        return self.monotone


def _bucket_maxima(ratios, values, thresholds):
    out = []
    for r in thresholds:
        mask = ratios <= r
        out.append(float(values[mask].max()) if mask.any() else None)
    return out


def _rescale(F, bound, grid):
    """Family shifted to growth rate zero; nonpositive rates need no shift."""
    if bound is None:
        bound = estimate_growth_bound(F, grid)
    rate = max(bound.a, 0.0)
    return scaled_family(F, rate), rate


def default_pairs():
    ks = (1000, 2000, 5000)
    return [(i, k) for k in ks for i in (1, 2, 5, 10, 20, 50, 100, 200) if i <= k]


def default_triples():
    return [(l + d, l, k) for k in (1000, 2000, 5000) for l in (1, 10, 100) for d in (1, 2, 5, 10, 20, 50, 100, 200)]


def small_step_limit_check(
    F: ChernoffFamily, t: float, g, pairs=None, bound: GrowthBound = None, grid: CertGrid = None,
    thresholds=LIMIT_THRESHOLDS,
) -> LimitCheckReport:
    """``||(F~^i(t/k) - I) g||`` for each ``(i, k)``, where ``F~`` has growth rate zero.

    ``bound`` defaults to :func:`estimate_growth_bound` on ``grid``.
    """
    pairs = list(pairs) if pairs is not None else default_pairs()
    if any(i < 0 or k < 1 for i, k in pairs):
        raise InputError("pairs need i >= 0 and k >= 1")
    g = numcore.as_state(g, F.dim, "g")
    G, rate = _rescale(F, bound, grid)
    cache = {}
    values = []
    for i, k in pairs:
        if k not in cache:
            cache[k] = evaluate_family(G, t / k)
        values.append(np.linalg.norm(np.linalg.matrix_power(cache[k], i) @ g - g))
    ratios = np.array([i / k for i, k in pairs])
    values = np.array(values)
    return LimitCheckReport(pairs, ratios, values, tuple(thresholds), _bucket_maxima(ratios, values, thresholds), rate)


def difference_quotient_check(
    F: ChernoffFamily, t: float, g, triples=None, bound: GrowthBound = None, grid: CertGrid = None,
    thresholds=LIMIT_THRESHOLDS,
) -> LimitCheckReport:
    """Residual of ``(F~^i - F~^l) g / ((i-l) t/k) - F~^{min(i,l)} Z~ g`` at step ``t/k``."""
    triples = list(triples) if triples is not None else default_triples()
    for i, l, k in triples:
        if i == l:
            raise InputError(f"triple ({i}, {l}, {k}) has i == l; the quotient is undefined")
        if i < 0 or l < 0 or k < 1:
            raise InputError(f"triple ({i}, {l}, {k}) needs i, l >= 0 and k >= 1")
    g = numcore.as_state(g, F.dim, "g")
    G, rate = _rescale(F, bound, grid)
    zg = G.generator.map @ g
    cache = {}
    values = []
    for i, l, k in triples:
        if k not in cache:
            cache[k] = evaluate_family(G, t / k)
        step = cache[k]
        lo = min(i, l)
        base = np.linalg.matrix_power(step, lo)
        diff = (np.linalg.matrix_power(step, i - lo) - np.linalg.matrix_power(step, l - lo)) @ (base @ g)
        values.append(np.linalg.norm(diff / ((i - l) * t / k) - base @ zg))
    ratios = np.array([abs(i - l) / k for i, l, k in triples])
    values = np.array(values)
    return LimitCheckReport(triples, ratios, values, tuple(thresholds), _bucket_maxima(ratios, values, thresholds), rate)
