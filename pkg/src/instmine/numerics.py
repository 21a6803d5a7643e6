"""Vector primitives: normalization, cosine similarity, and their gradients.

All functions operate on float64 numpy arrays. Unit vectors are plain
arrays carrying the convention ``|norm - 1| <= 1e-5``; callers are trusted
to uphold it, so cosine of unit vectors is a bare dot product.
"""

import numpy as np

from .errors import DegenerateVector, DimensionMismatch

# Norms at or below this are treated as degenerate (far below any real feature).
NORM_EPS = 1e-12

# Tolerance on the unit-norm invariant.
UNIT_TOL = 1e-5


def normalize(v):
    """Return v / ||v||, raising DegenerateVector for near-zero input."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n <= NORM_EPS:
        raise DegenerateVector(f"cannot normalize vector with norm {n:g}")
    return v / n


def normalize_rows(x):
    """Row-wise normalize a 2-D array; raises if any row is degenerate."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms <= NORM_EPS):
        bad = int(np.argmin(norms))
        raise DegenerateVector(f"row {bad} has norm {norms[bad]:g}")
    return x / norms[:, None]


def cosine(a, b):
    """Cosine similarity of two unit vectors (plain dot product)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} vs {b.shape}")
    return float(a @ b)


def similarity_matrix(a, b):
    """Pairwise cosine matrix between two stacks of unit vectors.

    Accepts (n, d) arrays or sequences of vectors; either side may be
    empty, in which case the matching dimension of the result is 0.
    """
    a = _as_matrix(a)
    b = _as_matrix(b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"dims {a.shape[1]} vs {b.shape[1]}")
    return a @ b.T


def _as_matrix(vectors):
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim == 1:
        # Empty list or a single vector; disambiguate by size.
        if arr.size == 0:
            return arr.reshape(0, 0)
        return arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected 2-D stack, got ndim={arr.ndim}")
    return arr


def cosine_grad_raw(u, b):
    """Gradient of cos(normalize(u), b) with respect to the raw vector u.

    Closed form: (b - (u_hat . b) u_hat) / ||u||, i.e. the component of b
    orthogonal to u, scaled by the inverse norm.
    """
    u = np.asarray(u, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if u.shape != b.shape:
        raise DimensionMismatch(f"shapes {u.shape} vs {b.shape}")
    n = np.linalg.norm(u)
    if n <= NORM_EPS:
        raise DegenerateVector(f"cannot differentiate through norm {n:g}")
    u_hat = u / n
    return (b - (u_hat @ b) * u_hat) / n
