"""Canonical operators used by tests, examples and the experiment runner."""
from dataclasses import dataclass, field

import numpy as np

from . import numcore
from .errors import InputError

KINDS = ("laplacian1d", "multiplication", "nilpotent_pair", "skew_pair", "random")


def laplacian_1d(k, bc="dirichlet"):
    """Second-difference operator on ``k`` interior points of ``[0, 1]``, scaled by ``(k+1)^2``."""
    if bc != "dirichlet":
        raise InputError(f"only dirichlet boundaries are supported, got {bc!r}")
    if k < 2:
        raise InputError("laplacian needs k >= 2")
    A = -2.0 * np.eye(k) + np.eye(k, k=1) + np.eye(k, k=-1)
    return (k + 1) ** 2 * A


def laplacian_eigenvalues(k):
    j = np.arange(1, k + 1)
    return -4.0 * (k + 1) ** 2 * np.sin(j * np.pi / (2 * (k + 1))) ** 2


def multiplication_operator(samples):
    samples = np.asarray(samples)
    if samples.ndim != 1 or samples.size == 0:
        raise InputError("samples must be a nonempty 1-D sequence")
    return numcore.as_operator(np.diag(samples))


def nilpotent_pair():
    """``C = [[0,1],[0,0]]``, ``D = [[0,0],[1,0]]``; ``C + D`` generates cosh/sinh."""
    return np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0, 0.0], [1.0, 0.0]])


def random_matrix(size, seed=0, scale=1.0, complex_field=False):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((size, size))
    if complex_field:
        A = A + 1j * rng.standard_normal((size, size))
    return scale * A / np.sqrt(size)


def skew_hermitian(size, seed=0, scale=1.0):
    A = random_matrix(size, seed, scale, complex_field=True)
    return 0.5 * (A - A.conj().T)


def skew_pair(size, seed=0, scale=1.0):
    """Two independent skew-Hermitian matrices; every exponential factor is unitary."""
    return skew_hermitian(size, seed, scale), skew_hermitian(size, seed + 1, scale)


@dataclass(frozen=True)
class FixtureDescriptor:
    kind: str
    size: int = 2
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown fixture kind {self.kind!r}; expected one of {KINDS}")
        if int(self.size) != self.size or self.size < 1:
            raise InputError("size must be a positive integer")
        if self.kind == "laplacian1d" and self.size < 2:
            raise InputError("laplacian1d needs size >= 2")

    @property
    def is_pair(self):
        return self.kind in ("nilpotent_pair", "skew_pair")

    def build(self, seed=0):
        """Return one matrix, or a ``(C, D)`` tuple for pair kinds."""
        p = self.params
        seed = p.get("seed", seed)
        scale = p.get("scale", 1.0)
        if self.kind == "laplacian1d":
            return laplacian_1d(self.size, p.get("bc", "dirichlet"))
        if self.kind == "multiplication":
            samples = p.get("samples")
            if samples is None:
                raise InputError("multiplication fixture needs params.samples")
            return multiplication_operator(samples)
        if self.kind == "nilpotent_pair":
            return nilpotent_pair()
        if self.kind == "skew_pair":
            return skew_pair(self.size, seed, scale)
        return random_matrix(self.size, seed, scale, p.get("complex", False))
