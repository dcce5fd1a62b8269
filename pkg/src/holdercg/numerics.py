"""Dense linear-algebra helpers shared by the oracles, problems and solver."""

import math

import numpy as np

from .exceptions import ConvergenceError, DomainError

POWER_ITER_CAP = 10_000


def _as_finite(v, name="v"):
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def lp_norm(v, p):
    """Return ``(sum |v_i|^p)^(1/p)``; ``p = inf`` gives ``max |v_i|``."""
    if not p >= 1:
        raise DomainError(f"lp_norm requires p >= 1, got {p}")
    v = _as_finite(v)
    if v.size == 0:
        return 0.0
    if math.isinf(p):
        return float(np.max(np.abs(v)))
    a = np.abs(v)
    scale = a.max()
    if scale == 0.0:
        return 0.0
    # rescale so large p cannot overflow
    return float(scale * np.sum((a / scale) ** p) ** (1.0 / p))


def spectral_norm(A, rel_tol=1e-12, seed=0, max_iter=POWER_ITER_CAP):
    """Largest singular value of ``A`` by power iteration on ``A^T A``.

    The start vector is drawn from ``numpy.random.default_rng(seed)`` so the
    result is reproducible. Iteration stops once the relative change of the
    estimate drops below ``rel_tol``.

    Raises:
        DomainError: if ``rel_tol`` is not positive or ``A`` is not finite.
        ConvergenceError: if ``max_iter`` iterations do not reach ``rel_tol``.
    """
    if not rel_tol > 0:
        raise DomainError("rel_tol must be positive")
    A = _as_finite(A, "A")
    if A.ndim != 2:
        raise DomainError("A must be a matrix")
    if A.size == 0 or not np.any(A):
        return 0.0

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.shape[1])
    x /= np.linalg.norm(x)
    sigma = np.linalg.norm(A @ x)
    for _ in range(max_iter):
        y = A.T @ (A @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            # start vector fell into the null space; reseed deterministically
            x = rng.standard_normal(A.shape[1])
            x /= np.linalg.norm(x)
            continue
        x = y / ny
        new_sigma = np.linalg.norm(A @ x)
        if abs(new_sigma - sigma) <= rel_tol * new_sigma:
            return float(new_sigma)
        sigma = new_sigma
    raise ConvergenceError(
        f"power iteration did not reach rel_tol={rel_tol} in {max_iter} iterations"
    )


def project_simplex(y):
    """Euclidean projection of ``y`` onto the probability simplex.

    Sort-and-threshold: find the largest ``k`` with
    ``u_k > (sum_{j<=k} u_j - 1) / k`` for ``u`` sorted descending, then
    shift by that threshold and clip at zero.
    """
    y = _as_finite(y, "y")
    if y.ndim != 1 or y.size == 0:
        raise DomainError("project_simplex needs a non-empty vector")
    # shift so active entries sit near 0; keeps theta accurate for large |y|
    y = y - y.max()
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, y.size + 1)
    k = np.nonzero(u - css / ks > 0)[0][-1]
    theta = css[k] / (k + 1)
    return np.maximum(y - theta, 0.0)


def project_simplex_columns(Y):
    """Project every column of ``Y`` onto the simplex (vectorised)."""
    Y = _as_finite(Y, "Y")
    k, m = Y.shape
    Y = Y - Y.max(axis=0)
    U = -np.sort(-Y, axis=0)
    css = np.cumsum(U, axis=0) - 1.0
    ks = np.arange(1, k + 1)[:, None]
    cond = U - css / ks > 0
    # last True per column; row 0 is always True
    idx = k - 1 - np.argmax(cond[::-1], axis=0)
    theta = css[idx, np.arange(m)] / (idx + 1)
    return np.maximum(Y - theta, 0.0)


def random_orthonormal(rng, n, k=None):
    """``n x k`` matrix with orthonormal columns from QR of a Gaussian matrix.

    Columns are sign-corrected by the diagonal of ``R`` so the result is
    Haar distributed.
    """
    k = n if k is None else k
    Q, R = np.linalg.qr(rng.standard_normal((n, k)))
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d
