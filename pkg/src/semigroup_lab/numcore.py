"""Dense linear algebra on finite-dimensional operator surrogates.

Operators are plain square numpy arrays and states are 1-D arrays. Every
public function validates its inputs with :func:`as_operator` /
:func:`as_state` and returns fresh arrays, so callers may treat values as
immutable.
"""
import math
import os

import numpy as np

from .errors import ConvergenceError, DimensionError, FormatError, InputError, SingularityError

# absolute fallback for relative comparisons near zero
ABS_FLOOR = 1e-14

# [13/13] Pade coefficients and the matching scaling threshold (Higham 2005)
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152

NORM_MAX_ITER = 10000
NORM_SEED = 20240917


def _result_dtype(*arrays):
    return np.result_type(np.float64, *(a.dtype for a in arrays))


def as_operator(A, name="operator"):
    """Validate ``A`` as a finite square matrix and return it as an ndarray."""
    A = np.asarray(A)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise DimensionError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.issubdtype(A.dtype, np.number) or np.issubdtype(A.dtype, np.bool_):
        raise InputError(f"{name} must be numeric")
    A = A.astype(_result_dtype(A), copy=False)
    if not np.all(np.isfinite(A)):
        raise InputError(f"{name} contains NaN or Inf")
    return A


def as_state(x, dim=None, name="state"):
    x = np.asarray(x)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1 or x.size == 0:
        raise DimensionError(f"{name} must be a non-empty vector, got shape {x.shape}")
    x = x.astype(_result_dtype(x), copy=False)
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} contains NaN or Inf")
    if dim is not None and x.shape[0] != dim:
        raise DimensionError(f"{name} has dimension {x.shape[0]}, expected {dim}")
    return x


def identity(dim, dtype=np.float64):
    return np.eye(dim, dtype=dtype)


def apply(A, x):
    """Matrix-vector product ``A x``."""
    A = as_operator(A)
    x = as_state(x, A.shape[0])
    return A @ x


def compose(A, B):
    """Return the operator ``x -> A(Bx)``."""
    A = as_operator(A, "A")
    B = as_operator(B, "B")
    if A.shape != B.shape:
        raise DimensionError(f"cannot compose {A.shape} with {B.shape}")
    return A @ B


def adjoint_map(A):
    """Hilbert adjoint (conjugate transpose), so that ``pairing(A x, p) == pairing(x, A* p)``."""
    A = as_operator(A)
    return A.conj().T.copy()


def pairing(x, phi):
    """Duality pairing ``(x, phi)``, linear in ``x`` and conjugate-linear in ``phi``."""
    x = as_state(x, name="x")
    phi = as_state(phi, x.shape[0], name="phi")
    return np.vdot(phi, x)


def vector_norm(x):
    return float(np.linalg.norm(x))


def matrix_exponential(A):
    """Compute ``exp(A)`` by scaling and squaring with a [13/13] Pade approximant.

    Raises
    ------
    OverflowError
        If the result is not representable in double precision.
    """
    A = as_operator(A)
    dim = A.shape[0]
    ident = np.eye(dim, dtype=A.dtype)
    if not A.any():
        return ident
    norm1 = np.linalg.norm(A, 1)
    if norm1 > 1e300:
        raise OverflowError(f"matrix exponential overflows for 1-norm {norm1:.3e}")
    squarings = max(0, int(math.ceil(math.log2(norm1 / _THETA13))))
    X = A / 2.0**squarings
    b = _PADE13
    X2 = X @ X
    X4 = X2 @ X2
    X6 = X4 @ X2
    U = X @ (X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2) + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * ident)
    V = X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2) + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * ident
    with np.errstate(over="ignore", invalid="ignore"):
        R = np.linalg.solve(V - U, V + U)
        for _ in range(squarings):
            R = R @ R
    if not np.all(np.isfinite(R)):
        raise OverflowError("matrix exponential overflowed during squaring")
    return R


def resolvent_step(A, h):
    """Implicit Euler step ``(I - hA)^{-1}``."""
    A = as_operator(A)
    if not h > 0:
        raise InputError(f"step h must be positive, got {h!r}")
    M = np.eye(A.shape[0], dtype=A.dtype) - h * A
    # singular or numerically singular: reciprocal condition below machine epsilon
    if np.linalg.cond(M) * np.finfo(float).eps >= 1.0:
        raise SingularityError(h)
    try:
        return np.linalg.solve(M, np.eye(A.shape[0], dtype=A.dtype))
    except np.linalg.LinAlgError as exc:
        raise SingularityError(h) from exc


def _start_vector(rng, dim, dtype):
    v = rng.standard_normal(dim)
    if np.issubdtype(dtype, np.complexfloating):
        v = v + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def operator_norm(A, tol=1e-12, max_iter=NORM_MAX_ITER):
    """Spectral norm ``||A||_2`` by power iteration on the Gram operator ``A* A``.

    The start vector is drawn from a fixed seed, so the estimate is
    reproducible. A start vector annihilated by ``A* A`` triggers a restart
    from the next vector of the same stream.
    """
    if not tol > 0:
        raise InputError(f"tol must be positive, got {tol!r}")
    A = as_operator(A)
    if not A.any():
        return 0.0
    dim = A.shape[0]
    if dim == 1:
        return float(abs(A[0, 0]))
    # rescale so tiny or huge powers do not under- or overflow in the Gram product
    scale = float(np.max(np.abs(A)))
    A = A / scale
    gram = A.conj().T @ A
    rng = np.random.default_rng(NORM_SEED)
    v = _start_vector(rng, dim, A.dtype)
    estimate = 0.0
    for it in range(1, max_iter + 1):
        w = gram @ v
        wn = np.linalg.norm(w)
        if wn == 0.0:
            v = _start_vector(rng, dim, A.dtype)
            continue
        # Rayleigh quotient of the Gram operator is sigma_max^2 from below
        new = math.sqrt(max(np.vdot(v, w).real, 0.0))
        v = w / wn
        if abs(new - estimate) <= tol * max(new, ABS_FLOOR):
            return new * scale
        estimate = new
    raise ConvergenceError(
        f"power iteration did not reach relative tolerance {tol:g} in {max_iter} iterations",
        iterations=max_iter,
    )


def relative_close(a, b, rtol, scale=None):
    """Norm-scaled comparison with an absolute floor near zero."""
    a = np.asarray(a)
    b = np.asarray(b)
    if scale is None:
        scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return np.linalg.norm(a - b) <= rtol * scale + ABS_FLOOR


# -- plain-text matrix format -------------------------------------------------

def _format_entry(z, complex_field):
    if not complex_field:
        return repr(float(z.real))
    re, im = float(z.real), float(z.imag)
    sign = "-" if math.copysign(1.0, im) < 0 else "+"
    return f"{re!r}{sign}{abs(im)!r}i"


def _parse_entry(token, complex_field, lineno):
    try:
        if complex_field:
            if token.endswith("i"):
                token = token[:-1] + "j"
            return complex(token)
        return float(token)
    except ValueError:
        raise FormatError(f"line {lineno}: cannot parse entry {token!r}") from None


def dumps_matrix(A):
    """Serialize to ``dim k field R|C`` followed by ``k`` rows of entries."""
    A = as_operator(A)
    complex_field = np.iscomplexobj(A)
    lines = [f"dim {A.shape[0]} field {'C' if complex_field else 'R'}"]
    for row in A:
        lines.append(" ".join(_format_entry(z, complex_field) for z in row))
    return "\n".join(lines) + "\n"


def loads_matrix(text):
    rows = [ln for ln in text.splitlines() if ln.strip()]
    if not rows:
        raise FormatError("empty matrix text")
    header = rows[0].split()
    if len(header) != 4 or header[0] != "dim" or header[2] != "field" or header[3] not in ("R", "C"):
        raise FormatError(f"line 1: bad header {rows[0]!r}")
    try:
        dim = int(header[1])
    except ValueError:
        raise FormatError(f"line 1: bad dimension {header[1]!r}") from None
    if dim < 1:
        raise FormatError("line 1: dimension must be positive")
    if len(rows) - 1 != dim:
        raise FormatError(f"expected {dim} rows, found {len(rows) - 1}")
    complex_field = header[3] == "C"
    out = np.empty((dim, dim), dtype=complex if complex_field else float)
    for i, row in enumerate(rows[1:]):
        tokens = row.split()
        if len(tokens) != dim:
            raise FormatError(f"line {i + 2}: expected {dim} entries, found {len(tokens)}")
        out[i] = [_parse_entry(tok, complex_field, i + 2) for tok in tokens]
    return as_operator(out)


def save_matrix(path, A):
    text = dumps_matrix(A)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_matrix(path):
    with open(path) as fh:
        return loads_matrix(fh.read())
