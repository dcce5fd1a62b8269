"""Closed-form linear minimization oracles and the Frank-Wolfe gap.

Every oracle solves ``min_v <u, v> + g(v)`` for one structure of ``g`` and
returns the minimizer together with ``g(v)``.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, OracleViolationError
from .numerics import lp_norm, project_simplex_columns

GAP_REL_TOL = 1e-12


@dataclass(frozen=True)
class LmoResult:
    v: np.ndarray
    g_of_v: float
    degenerate: bool = False


def lmo_lq_ball(u, q):
    """Minimize ``<u, x>`` over the unit ``l_q`` ball, ``q > 1``.

    The minimizer is ``x_i = -sign(u_i) |u_i|^(1/(q-1)) / ||u||_{q'}^(q'/q)``
    with ``1/q + 1/q' = 1``, so that ``||x||_q = 1`` and
    ``<u, x> = -||u||_{q'}``. The commonly quoted normalizer
    ``||u||_q^(-1/(q-1))`` only agrees with this when ``q = 2``.

    For ``u = 0`` every feasible point is optimal; ``v = 0`` is returned with
    ``degenerate=True``.
    """
    if not q > 1:
        raise DomainError(f"lmo_lq_ball requires q > 1, got {q}")
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        return LmoResult(np.zeros_like(u), 0.0, degenerate=True)
    s = 1.0 / (q - 1.0)
    a = np.abs(u)
    # scale by max |u_i| first; |u_i|^(1/(q-1)) overflows for q near 1
    w = (a / a.max()) ** s
    w /= lp_norm(w, q)
    return LmoResult(-np.sign(u) * w, 0.0)


def entropy(x, lam):
    """``lam * sum x_i log x_i`` with ``0 log 0 = 0``."""
    x = np.asarray(x, dtype=float)
    pos = x > 0
    return float(lam * np.sum(x[pos] * np.log(x[pos])))


def lmo_entropy_simplex(u, lam):
    """Minimize ``<u, x> + lam * sum x_i log x_i`` over the simplex (softmax)."""
    if not lam > 0:
        raise DomainError("lam must be positive")
    z = -np.asarray(u, dtype=float) / lam
    z -= z.max()
    w = np.exp(z)
    v = w / w.sum()
    return LmoResult(v, entropy(v, lam))


def lmo_box_quadratic(G, lam, alpha):
    """Minimize ``<G, U> + lam ||U||_F^2`` over ``0 <= U_ij <= alpha``."""
    if not (lam > 0 and alpha > 0):
        raise DomainError("lam and alpha must be positive")
    U = np.clip(-np.asarray(G, dtype=float) / (2.0 * lam), 0.0, alpha)
    return LmoResult(U, float(lam * np.sum(U * U)))


def lmo_simplex_quadratic(G, lam):
    """Minimize ``<G, V> + lam ||V||_F^2`` over column-stochastic ``V``.

    Per column this is the Euclidean projection of ``-g / (2 lam)`` onto the
    simplex.
    """
    if not lam > 0:
        raise DomainError("lam must be positive")
    V = project_simplex_columns(-np.asarray(G, dtype=float) / (2.0 * lam))
    return LmoResult(V, float(lam * np.sum(V * V)))


def fw_gap(grad, x, v, g_of_x, g_of_v):
    """Frank-Wolfe gap ``<grad, x - v> + g(x) - g(v)``.

    Tiny negative values from rounding are clamped to zero; anything below
    ``-1e-12 * scale`` means ``v`` did not minimize the subproblem.
    """
    grad = np.ravel(grad)
    x = np.ravel(x)
    v = np.ravel(v)
    delta = float(grad @ (x - v)) + g_of_x - g_of_v
    if delta >= 0.0:
        return delta
    scale = float(np.abs(grad) @ (np.abs(x) + np.abs(v))) + abs(g_of_x) + abs(g_of_v)
    if delta >= -GAP_REL_TOL * max(scale, 1.0):
        return 0.0
    raise OracleViolationError(f"negative Frank-Wolfe gap {delta:.3e} (scale {scale:.3e})")
