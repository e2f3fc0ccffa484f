"""Chernoff families ``t -> F(t)`` with a declared candidate generator."""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import numcore
from .errors import DimensionError, ExtrapolationError, InputError

EXACT = "exact"
IMPLICIT_EULER = "implicit_euler"
LIE_TROTTER = "lie_trotter"
STRANG = "strang"
CUSTOM = "custom"

RECIPES = (EXACT, IMPLICIT_EULER, LIE_TROTTER, STRANG, CUSTOM)
# recipes that do not come from the product-formula theory itself
EXTENSION_RECIPES = frozenset({STRANG})


@dataclass(frozen=True)
class GeneratorSpec:
    """Candidate generator ``Z`` the family's derivative at zero should match."""

    map: np.ndarray
    label: str = "Z"

    def __post_init__(self):
        object.__setattr__(self, "map", numcore.as_operator(self.map, "generator"))

    @property
    def dim(self):
        return self.map.shape[0]


@dataclass(frozen=True, eq=False)
class ChernoffFamily:
    """A map ``t -> F(t)`` with ``F(0) = I``.

    Use the constructors :meth:`exact`, :meth:`implicit_euler`,
    :meth:`lie_trotter`, :meth:`strang` and :meth:`custom` rather than
    building instances by hand.
    """

    recipe: str
    operators: tuple
    generator: GeneratorSpec
    evaluator: Optional[Callable[[float], np.ndarray]] = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise InputError(f"unknown recipe {self.recipe!r}")
        ops = tuple(numcore.as_operator(op) for op in self.operators)
        dims = {op.shape[0] for op in ops} | {self.generator.dim}
        if len(dims) != 1:
            raise DimensionError(f"family constituents have mismatched dimensions {sorted(dims)}")
        if self.recipe == CUSTOM and self.evaluator is None:
            raise InputError("custom recipe needs an evaluator")
        object.__setattr__(self, "operators", ops)
        if not self.label:
            object.__setattr__(self, "label", self.recipe)

    @property
    def dim(self):
        return self.generator.dim

    @property
    def dtype(self):
        return np.result_type(np.float64, self.generator.map.dtype, *(op.dtype for op in self.operators))

    @property
    def is_extension(self):
        return self.recipe in EXTENSION_RECIPES

    @classmethod
    def exact(cls, A, label=""):
        A = numcore.as_operator(A)
        return cls(EXACT, (A,), GeneratorSpec(A, "A"), label=label)

    @classmethod
    def implicit_euler(cls, A, label=""):
        A = numcore.as_operator(A)
        return cls(IMPLICIT_EULER, (A,), GeneratorSpec(A, "A"), label=label)

    @classmethod
    def lie_trotter(cls, C, D, label=""):
        C = numcore.as_operator(C, "C")
        D = numcore.as_operator(D, "D")
        if C.shape != D.shape:
            raise DimensionError(f"split constituents differ in shape: {C.shape} vs {D.shape}")
        return cls(LIE_TROTTER, (C, D), GeneratorSpec(C + D, "C+D"), label=label)

    @classmethod
    def strang(cls, C, D, label=""):
        C = numcore.as_operator(C, "C")
        D = numcore.as_operator(D, "D")
        if C.shape != D.shape:
            raise DimensionError(f"split constituents differ in shape: {C.shape} vs {D.shape}")
        return cls(STRANG, (C, D), GeneratorSpec(C + D, "C+D"), label=label)

    @classmethod
    def custom(cls, evaluator, generator, label=""):
        """Wrap ``evaluator(t) -> matrix``; ``generator`` is the declared ``F'(0)``."""
        if not isinstance(generator, GeneratorSpec):
            generator = GeneratorSpec(generator)
        return cls(CUSTOM, (), generator, evaluator=evaluator, label=label)

    def __call__(self, t):
        return evaluate_family(self, t)


def evaluate_family(F: ChernoffFamily, t: float) -> np.ndarray:
    """Return ``F(t)``; ``F(0)`` is the identity for every recipe."""
    t = float(t)
    if not np.isfinite(t) or t < 0:
        raise InputError(f"family time must be a finite nonnegative number, got {t!r}")
    if t == 0.0:
        return np.eye(F.dim, dtype=F.dtype)
    expm = numcore.matrix_exponential
    if F.recipe == EXACT:
        return expm(t * F.operators[0])
    if F.recipe == IMPLICIT_EULER:
        return numcore.resolvent_step(F.operators[0], t)
    if F.recipe == LIE_TROTTER:
        C, D = F.operators
        return expm(t * C) @ expm(t * D)
    if F.recipe == STRANG:
        C, D = F.operators
        half = expm(0.5 * t * C)
        return half @ expm(t * D) @ half
    out = numcore.as_operator(F.evaluator(t), "custom evaluator output")
    if out.shape[0] != F.dim:
        raise DimensionError(f"custom evaluator returned dimension {out.shape[0]}, expected {F.dim}")
    return out


@dataclass(frozen=True)
class DerivativeEstimate:
    value: np.ndarray
    error: float
    order: float
    quotients: np.ndarray


def derivative_at_zero(F: ChernoffFamily, f, h0=1e-2, levels=5) -> DerivativeEstimate:
    """Richardson-extrapolated strong derivative ``F'(0) f``.

    Difference quotients ``(F(h) f - f) / h`` are taken on ``h = h0 / 2**j``
    and extrapolated assuming an expansion in integer powers of ``h``. The
    returned ``order`` is the convergence order observed in the first
    extrapolated column (``inf`` once differences hit rounding level) and
    ``error`` is the change produced by the last extrapolation column.

    Raises
    ------
    ExtrapolationError
        If the successive quotient differences stop shrinking before they
        reach rounding level.
    """
    if not h0 > 0:
        raise InputError("h0 must be positive")
    if levels < 2:
        raise InputError("need at least two levels")
    f = numcore.as_state(f, F.dim, "f")
    hs = h0 / 2.0 ** np.arange(levels)
    q = np.array([(evaluate_family(F, h) @ f - f) / h for h in hs])

    eps = np.finfo(float).eps
    scale = max(np.linalg.norm(f), max(np.linalg.norm(row) for row in q) * hs[-1])
    noise = 1e3 * eps * scale / hs[-1]
    diffs = np.array([np.linalg.norm(q[j] - q[j - 1]) for j in range(1, levels)])
    for j in range(1, len(diffs)):
        if diffs[j - 1] > noise and diffs[j] >= diffs[j - 1]:
            raise ExtrapolationError(
                f"difference quotients stopped contracting at h={hs[j + 1]:.3e} "
                f"({diffs[j]:.3e} >= {diffs[j - 1]:.3e})"
            )

    prev_row = [q[0]]
    first_col = []
    for j in range(1, levels):
        row = [q[j]]
        for k in range(1, j + 1):
            row.append(row[k - 1] + (row[k - 1] - prev_row[k - 1]) / (2.0**k - 1.0))
        first_col.append(row[1])
        prev_row = row
    error = float(np.linalg.norm(prev_row[-1] - prev_row[-2]))

    # order seen after one elimination step; falls back to raw quotients
    seq = first_col if len(first_col) >= 3 else list(q)
    d = [np.linalg.norm(b - a) for a, b in zip(seq, seq[1:])]
    if len(d) >= 2 and d[-1] > noise and d[-2] > noise:
        order = float(np.log2(d[-2] / d[-1]))
    else:
        order = float("inf")
    return DerivativeEstimate(value=prev_row[-1], error=error, order=order, quotients=q)


def adjoint_family(F: ChernoffFamily) -> ChernoffFamily:
    """The family ``t -> F(t)*`` with declared generator ``Z*``."""
    adj = numcore.adjoint_map
    gen = GeneratorSpec(adj(F.generator.map), f"({F.generator.label})*")
    label = f"adjoint({F.label})"
    if F.recipe in (EXACT, IMPLICIT_EULER):
        return ChernoffFamily(F.recipe, (adj(F.operators[0]),), gen, label=label)
    if F.recipe == LIE_TROTTER:
        # (e^{tC} e^{tD})* = e^{tD*} e^{tC*}
        C, D = F.operators
        return ChernoffFamily(LIE_TROTTER, (adj(D), adj(C)), gen, label=label)
    if F.recipe == STRANG:
        C, D = F.operators
        return ChernoffFamily(STRANG, (adj(C), adj(D)), gen, label=label)
    inner = F.evaluator
    return ChernoffFamily(CUSTOM, (), gen, evaluator=lambda t: adj(inner(t)), label=label)


def scalar_family(factor, generator, label="scalar"):
    """One-dimensional custom family ``F(t) = factor(t)``; handy for closed-form checks."""
    return ChernoffFamily.custom(
        lambda t: np.array([[factor(t)]], dtype=float), np.array([[generator]], dtype=float), label=label
    )


def scaled_family(F: ChernoffFamily, rate: float) -> ChernoffFamily:
    """``t -> exp(-rate t) F(t)``, whose generator is ``Z - rate I``."""
    if rate == 0:
        return F
    gen = GeneratorSpec(F.generator.map - rate * np.eye(F.dim), f"{F.generator.label}-{rate:g}I")
    return ChernoffFamily.custom(
        lambda t: np.exp(-rate * t) * evaluate_family(F, t), gen, label=f"{F.label}*exp(-{rate:g}t)"
    )
