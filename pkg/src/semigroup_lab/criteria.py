"""Finite-dimensional diagnostics for approximation-sequence generator criteria."""
import csv
import itertools
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from . import numcore
from .chernoff import ChernoffFamily, GeneratorSpec, evaluate_family
from .errors import InputError
from .evolution import floor_index

DEFAULT_CEILING_FACTOR = 1e6
TAIL = 5


@dataclass
class ApproxSequenceReport:
    s_values: List[float]
    n_values: List[int]
    distances: np.ndarray  # shape (len(s_values), len(n_values))
    z_norms: np.ndarray
    tol: float

    @property
    def boundedness(self) -> Dict[float, float]:
        """``max_n ||Z f_n^s||`` per ``s``."""
        return {s: float(row.max()) for s, row in zip(self.s_values, self.z_norms)}

    def verdict(self, j):
        d = self.distances[j]
        last = d[-3:]
        settled = all(b <= a + numcore.ABS_FLOOR for a, b in zip(last, last[1:]))
        return bool(settled and d[-1] <= self.tol)

    @property
    def verdicts(self):
        return {s: self.verdict(j) for j, s in enumerate(self.s_values)}

    @property
    def passed(self):
        return all(self.verdicts.values())

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["s", "n", "distance", "Z_norm", "verdict"])
            for j, s in enumerate(self.s_values):
                verdict = "pass" if self.verdict(j) else "fail"
                for k, n in enumerate(self.n_values):
                    writer.writerow([repr(s), n, repr(float(self.distances[j, k])), repr(float(self.z_norms[j, k])), verdict])


def approximation_sequence_check(
    F: ChernoffFamily,
    f,
    s_values,
    n_list,
    candidate: Callable[[float, int], np.ndarray],
    t=1.0,
    tol=1e-3,
) -> ApproxSequenceReport:
    """Distances ``||F(t/n)^[n s] f - f_n^s||`` for a caller-supplied rule ``(s, n) -> f_n^s``.

    ``s`` passes when the distances are non-increasing (up to a ``1e-14``
    floor) over the last three ``n`` and the final distance is at most ``tol``.
    """
    f = numcore.as_state(f, F.dim, "f")
    s_values = [float(s) for s in s_values]
    n_list = [int(n) for n in n_list]
    if not s_values or len(n_list) < 1 or any(s < 0 for s in s_values):
        raise InputError("need nonnegative s_values and a nonempty n_list")
    Z = F.generator.map
    dist = np.zeros((len(s_values), len(n_list)))
    znorm = np.zeros_like(dist)
    for k, n in enumerate(n_list):
        step = evaluate_family(F, t / n)
        powers = [floor_index(n, s, 1.0) for s in s_values]
        y, done = f.copy(), 0
        for j in np.argsort(powers, kind="stable"):
            while done < powers[j]:
                y = step @ y
                done += 1
            cand = numcore.as_state(candidate(s_values[j], n), F.dim, "candidate")
            dist[j, k] = np.linalg.norm(y - cand)
            znorm[j, k] = np.linalg.norm(Z @ cand)
    return ApproxSequenceReport(s_values, n_list, dist, znorm, tol)


@dataclass
class BoundednessReport:
    bound: float
    bounded: bool
    ceiling: float
    tail_diameter: float

    def __iter__(self):
        yield self.bound
        yield self.bounded


def generator_boundedness_check(Z, sequence, ceiling=None) -> BoundednessReport:
    """``max_n ||Z f_n||`` and a blow-up verdict against ``ceiling``.

    ``ceiling`` defaults to ``1e6 * ||Z f_0||`` (or ``1e6`` when that is zero).
    The tail diameter is the largest pairwise distance among the last five
    elements and stands in for precompactness. Unpacks as ``(bound, bounded)``.
    """
    Zmap = Z.map if isinstance(Z, GeneratorSpec) else numcore.as_operator(Z)
    seq = [numcore.as_state(v, Zmap.shape[0], "sequence element") for v in sequence]
    if not seq:
        raise InputError("sequence must be nonempty")
    norms = [float(np.linalg.norm(Zmap @ v)) for v in seq]
    if ceiling is None:
        ceiling = DEFAULT_CEILING_FACTOR * (norms[0] if norms[0] > 0 else 1.0)
    tail = seq[-TAIL:]
    diameter = max((float(np.linalg.norm(a - b)) for a, b in itertools.combinations(tail, 2)), default=0.0)
    bound = max(norms)
    return BoundednessReport(bound, bound <= ceiling, float(ceiling), diameter)
