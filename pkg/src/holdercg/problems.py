"""Test problem families, their gradients, constants and random generators.

Three families are provided, each wrapped as a :class:`CompositeProblem`
acting on flat float vectors:

* ``lq_ball``: ``1/p ||Ax - b||_p^p`` over the unit ``l_q`` ball;
* ``entropy``: ``1/p ||Ax - b||_p^p + lam * sum x_i log x_i`` over the simplex;
* ``nmf``: ``1/2 ||X - UV||_F^2 + lam (||U||_F^2 + ||V||_F^2)`` with ``U`` in a
  box and the columns of ``V`` on the simplex. The variable ``(U, V)`` is
  stored as ``concat(U.ravel(), V.ravel())`` so the Euclidean norm of the flat
  vector is the Frobenius norm of the pair.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import DomainError
from .numerics import lp_norm, random_orthonormal
from .oracles import (
    LmoResult,
    entropy,
    lmo_box_quadratic,
    lmo_entropy_simplex,
    lmo_lq_ball,
    lmo_simplex_quadratic,
)

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class ProblemConstants:
    """Known structural constants; ``None`` means not certified."""

    nu: Optional[float] = None
    M: Optional[float] = None
    kappa: Optional[float] = None
    rho: Optional[float] = None
    D_g: float = math.inf


@dataclass
class CompositeProblem:
    f_value: Callable[[np.ndarray], float]
    f_grad: Callable[[np.ndarray], np.ndarray]
    g_value: Callable[[np.ndarray], float]
    lmo: Callable[[np.ndarray], LmoResult]
    x0: np.ndarray
    constants: ProblemConstants = field(default_factory=ProblemConstants)
    convex_f: bool = False
    name: str = "problem"
    sample_feasible: Optional[Callable[[np.random.Generator], np.ndarray]] = None
    # optional fast paths
    value_and_grad: Optional[Callable[[np.ndarray], tuple]] = None
    segment: Optional[Callable[[np.ndarray, np.ndarray], Callable[[float], float]]] = None

    def f_and_grad(self, x):
        if self.value_and_grad is not None:
            return self.value_and_grad(x)
        return self.f_value(x), self.f_grad(x)

    def phi(self, x):
        return self.f_value(x) + self.g_value(x)

    def f_on_segment(self, x, v):
        """Return ``tau -> f((1 - tau) x + tau v)``."""
        if self.segment is not None:
            return self.segment(x, v)
        d = v - x
        return lambda tau: self.f_value(x + tau * d)


# --------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class LpLqInstance:
    A: np.ndarray
    b: np.ndarray
    p: float
    q: float
    seed: int
    x_bar: np.ndarray
    spec_norm: float

    family = "lq_ball"

    @property
    def n(self):
        return self.A.shape[1]


@dataclass(frozen=True)
class EntropyInstance:
    A: np.ndarray
    b: np.ndarray
    p: float
    lam: float
    seed: int
    spec_norm: float

    family = "entropy"

    @property
    def n(self):
        return self.A.shape[1]


@dataclass(frozen=True)
class NmfInstance:
    X: np.ndarray
    lam: float
    alpha: float
    k: int
    seed: int
    U_star: np.ndarray
    V_star: np.ndarray
    v_law: str = "normal"
    noise: float = 0.01

    family = "nmf"

    @property
    def shape(self):
        return self.X.shape


# --------------------------------------------------------------------------
# lp residual objective


def _check_p(p):
    if not 1 < p <= 2:
        raise DomainError(f"p must lie in (1, 2], got {p}")


def _lp_terms(r, p):
    a = np.abs(r)
    return a, np.sign(r) * a ** (p - 1.0)


def lp_residual_value(inst, x):
    r = inst.A @ x - inst.b
    return float(np.sum(np.abs(r) ** inst.p) / inst.p)


def grad_lp_residual(inst, x):
    """Gradient ``A^T (|r|^(p-1) sign r)`` of ``1/p ||Ax - b||_p^p``."""
    r = inst.A @ x - inst.b
    return inst.A.T @ _lp_terms(r, inst.p)[1]


def _lp_value_and_grad(inst, x):
    r = inst.A @ x - inst.b
    a, w = _lp_terms(r, inst.p)
    return float(np.sum(a ** inst.p) / inst.p), inst.A.T @ w


def _lp_segment(inst, x, v):
    rx = inst.A @ x - inst.b
    dr = inst.A @ v - inst.b - rx
    p = inst.p
    return lambda tau: float(np.sum(np.abs(rx + tau * dr) ** p) / p)


def holder_constant_lp(p, m, spec_norm_A):
    """Hölder modulus of ``grad 1/p ||Ax - b||_p^p`` for exponent ``p - 1``.

    ``2^(2-p) * m^((p-1)(2-p)/(2p)) * ||A||_2^p`` where ``m`` is the number
    of rows of ``A``.
    """
    _check_p(p)
    if m < 1 or not spec_norm_A > 0:
        raise DomainError("m must be >= 1 and ||A||_2 positive")
    return 2.0 ** (2.0 - p) * m ** ((p - 1.0) * (2.0 - p) / (2.0 * p)) * spec_norm_A**p


def lq_ball_diameter(n, q):
    """Euclidean diameter of the unit ``l_q`` ball in ``R^n``.

    ``max ||x||_2`` over the ball is 1 for ``q <= 2`` and ``n^(1/2 - 1/q)``
    otherwise.
    """
    return 2.0 * n ** max(0.0, 0.5 - 1.0 / q)


def sample_lq_sphere(rng, n, q, radius=1.0):
    """Draw from the cone measure of the ``l_q`` sphere of the given radius.

    Coordinates follow the density proportional to ``exp(-|t|^q)`` (sampled
    exactly as ``Gamma(1/q)^(1/q)`` with a random sign) and are then rescaled
    onto the sphere.
    """
    mag = rng.gamma(1.0 / q, 1.0, size=n) ** (1.0 / q)
    g = np.where(rng.random(n) < 0.5, -mag, mag)
    return radius * g / lp_norm(g, q)


# --------------------------------------------------------------------------
# generators


def gen_lq_instance(n, q, seed, p=2.0):
    """Random instance of ``min 1/p ||Ax - b||_p^p`` over the ``l_q`` ball.

    ``A = U diag(d) U^T`` with Haar ``U`` and ``d ~ U[1, 100]``;
    ``b = A x_bar`` with ``x_bar`` on the ``l_q`` sphere of radius 10.
    """
    if n < 2:
        raise DomainError("n must be >= 2")
    _check_p(p)
    if not q > 1:
        raise DomainError("q must exceed 1")
    rng = np.random.default_rng(seed)
    U = random_orthonormal(rng, n)
    d = rng.uniform(1.0, 100.0, size=n)
    A = (U * d) @ U.T
    A = 0.5 * (A + A.T)
    x_bar = sample_lq_sphere(rng, n, q, radius=10.0)
    return LpLqInstance(A, A @ x_bar, float(p), float(q), int(seed), x_bar, float(d.max()))


def gen_entropy_instance(m, n, p, lam, seed):
    """Random instance of the entropy-regularized ``l_p`` problem.

    ``A = V diag(d) U^T`` with ``U`` (n x m) and ``V`` (m x m) orthonormal and
    ``d ~ U[0, 100]``; ``b ~ U[0, 1]^m``.
    """
    if m > n:
        raise DomainError("need m <= n")
    _check_p(p)
    if not lam > 0:
        raise DomainError("lam must be positive")
    rng = np.random.default_rng(seed)
    U = random_orthonormal(rng, n, m)
    V = random_orthonormal(rng, m)
    d = rng.uniform(0.0, 100.0, size=m)
    A = (V * d) @ U.T
    b = rng.uniform(0.0, 1.0, size=m)
    return EntropyInstance(A, b, float(p), float(lam), int(seed), float(d.max()))


def gen_nmf_instance(n, m, k, alpha, seed, lam=0.01, noise=0.01, v_law="normal"):
    """Random simplex-constrained NMF instance ``X = U* V* + E``.

    ``U* ~ U[0, alpha]``; ``V*`` is a random ``k x m`` matrix with columns
    rescaled to sum to one; ``E`` has i.i.d. ``N(0, noise^2)`` entries.

    ``v_law`` picks the entries of the unscaled ``V*``: ``"normal"`` draws
    standard normals (columns whose sum is below ``1e-8`` in magnitude are
    redrawn), ``"abs_normal"`` takes their absolute values so that ``V*``
    itself lies on the column simplex.
    """
    if not 1 <= k <= min(n, m):
        raise DomainError("need 1 <= k <= min(n, m)")
    if not (alpha > 0 and lam > 0):
        raise DomainError("alpha and lam must be positive")
    if v_law not in ("normal", "abs_normal"):
        raise DomainError(f"unknown v_law {v_law!r}")
    rng = np.random.default_rng(seed)
    U_star = rng.uniform(0.0, alpha, size=(n, k))

    def draw(cols):
        V = rng.standard_normal((k, cols))
        return np.abs(V) if v_law == "abs_normal" else V

    V_tilde = draw(m)
    bad = np.abs(V_tilde.sum(axis=0)) < 1e-8
    while np.any(bad):
        V_tilde[:, bad] = draw(int(bad.sum()))
        bad = np.abs(V_tilde.sum(axis=0)) < 1e-8
    V_star = V_tilde / V_tilde.sum(axis=0)
    X = U_star @ V_star + noise * rng.standard_normal((n, m))
    return NmfInstance(X, float(lam), float(alpha), int(k), int(seed), U_star, V_star, v_law, float(noise))


# --------------------------------------------------------------------------
# composite problems


def lq_problem(inst):
    q = inst.q
    n = inst.n
    nu = inst.p - 1.0

    def g_value(x):
        return 0.0 if lp_norm(x, q) <= 1.0 + FEAS_TOL else math.inf

    def sample(rng):
        return sample_lq_sphere(rng, n, q, radius=rng.uniform() ** (1.0 / n))

    return CompositeProblem(
        f_value=lambda x: lp_residual_value(inst, x),
        f_grad=lambda x: grad_lp_residual(inst, x),
        g_value=g_value,
        lmo=lambda u: lmo_lq_ball(u, q),
        x0=np.zeros(n),
        constants=ProblemConstants(
            nu=nu,
            M=holder_constant_lp(inst.p, inst.A.shape[0], inst.spec_norm),
            rho=max(2.0, q),
            D_g=lq_ball_diameter(n, q),
        ),
        convex_f=True,
        name=f"lq_ball(n={n}, q={q}, p={inst.p}, seed={inst.seed})",
        sample_feasible=sample,
        value_and_grad=lambda x: _lp_value_and_grad(inst, x),
        segment=lambda x, v: _lp_segment(inst, x, v),
    )


def _on_simplex(x):
    return x.min() >= -FEAS_TOL and abs(x.sum() - 1.0) <= FEAS_TOL * max(1, x.size)


def entropy_problem(inst):
    lam = inst.lam
    n = inst.n

    def g_value(x):
        return entropy(x, lam) if _on_simplex(x) else math.inf

    return CompositeProblem(
        f_value=lambda x: lp_residual_value(inst, x),
        f_grad=lambda x: grad_lp_residual(inst, x),
        g_value=g_value,
        lmo=lambda u: lmo_entropy_simplex(u, lam),
        x0=np.full(n, 1.0 / n),
        constants=ProblemConstants(
            nu=inst.p - 1.0,
            M=holder_constant_lp(inst.p, inst.A.shape[0], inst.spec_norm),
            kappa=lam,
            rho=2.0,
            D_g=math.sqrt(2.0),
        ),
        convex_f=True,
        name=f"entropy(m={inst.A.shape[0]}, n={n}, p={inst.p}, lam={lam}, seed={inst.seed})",
        sample_feasible=lambda rng: rng.dirichlet(np.full(n, rng.choice([0.1, 1.0]))),
        value_and_grad=lambda x: _lp_value_and_grad(inst, x),
        segment=lambda x, v: _lp_segment(inst, x, v),
    )


def nmf_value_and_grads(inst, U, V):
    """``f = 1/2 ||X - UV||_F^2`` and its block gradients ``(R V^T, U^T R)``."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    n, m = inst.X.shape
    if U.shape != (n, inst.k) or V.shape != (inst.k, m):
        raise DomainError(
            f"expected U {(n, inst.k)} and V {(inst.k, m)}, got {U.shape} and {V.shape}"
        )
    R = U @ V - inst.X
    return 0.5 * float(np.sum(R * R)), R @ V.T, U.T @ R


def nmf_lipschitz_bound(inst):
    """Upper bound on the Lipschitz constant of ``grad f`` over ``dom g``.

    For a direction ``(dU, dV)`` the second derivative is
    ``||dU V + U dV||^2 + 2 <UV - X, dU dV>``, bounded by
    ``(||U||^2 + ||V||^2 + ||UV - X||) ||(dU, dV)||^2``. Over the box and the
    column simplex ``||U||_F <= alpha sqrt(nk)`` and ``||V||_F <= sqrt(m)``.
    """
    n, m = inst.X.shape
    u2 = inst.alpha**2 * n * inst.k
    v2 = float(m)
    res = float(np.linalg.norm(inst.X)) + math.sqrt(u2 * v2)
    return u2 + v2 + res


def nmf_split(inst, z):
    n, m = inst.X.shape
    k = inst.k
    return z[: n * k].reshape(n, k), z[n * k :].reshape(k, m)


def nmf_problem(inst):
    n, m = inst.X.shape
    k, lam, alpha = inst.k, inst.lam, inst.alpha

    def value_and_grad(z):
        U, V = nmf_split(inst, z)
        f, GU, GV = nmf_value_and_grads(inst, U, V)
        return f, np.concatenate([GU.ravel(), GV.ravel()])

    def g_value(z):
        U, V = nmf_split(inst, z)
        tol = 1e-12 * alpha
        if U.min() < -tol or U.max() > alpha + tol:
            return math.inf
        if V.min() < -FEAS_TOL or np.max(np.abs(V.sum(axis=0) - 1.0)) > FEAS_TOL:
            return math.inf
        return lam * float(np.sum(z * z))

    def lmo(G):
        GU, GV = nmf_split(inst, G)
        ru = lmo_box_quadratic(GU, lam, alpha)
        rv = lmo_simplex_quadratic(GV, lam)
        return LmoResult(np.concatenate([ru.v.ravel(), rv.v.ravel()]), ru.g_of_v + rv.g_of_v)

    def sample(rng):
        U = rng.uniform(0.0, alpha, size=(n, k))
        V = rng.dirichlet(np.ones(k), size=m).T
        return np.concatenate([U.ravel(), V.ravel()])

    return CompositeProblem(
        f_value=lambda z: value_and_grad(z)[0],
        f_grad=lambda z: value_and_grad(z)[1],
        g_value=g_value,
        lmo=lmo,
        x0=np.concatenate([np.ones(n * k), np.full(k * m, 1.0 / k)]),
        constants=ProblemConstants(
            nu=1.0,
            M=nmf_lipschitz_bound(inst),
            kappa=2.0 * lam,
            rho=2.0,
            D_g=math.sqrt(alpha**2 * n * k + 2.0 * m),
        ),
        convex_f=False,
        name=f"nmf(n={n}, m={m}, k={k}, seed={inst.seed})",
        sample_feasible=sample,
        value_and_grad=value_and_grad,
    )


def make_problem(inst):
    builders = {"lq_ball": lq_problem, "entropy": entropy_problem, "nmf": nmf_problem}
    return builders[inst.family](inst)


# --------------------------------------------------------------------------
# persistence: the generator recipe plus seed is the canonical record


def instance_record(inst):
    """Self-describing dict from which :func:`instance_from_record` regenerates ``inst``."""
    if inst.family == "lq_ball":
        dims = {"n": inst.n}
        params = {"p": inst.p, "q": inst.q}
    elif inst.family == "entropy":
        dims = {"m": inst.A.shape[0], "n": inst.n}
        params = {"p": inst.p, "lam": inst.lam}
    else:
        n, m = inst.X.shape
        dims = {"n": n, "m": m, "k": inst.k}
        params = {"lam": inst.lam, "alpha": inst.alpha, "v_law": inst.v_law, "noise": inst.noise}
    return {"family": inst.family, "dims": dims, "params": params, "seed": inst.seed}


def instance_from_record(rec):
    fam, d, p, seed = rec["family"], rec["dims"], rec["params"], rec["seed"]
    if fam == "lq_ball":
        return gen_lq_instance(d["n"], p["q"], seed, p=p["p"])
    if fam == "entropy":
        return gen_entropy_instance(d["m"], d["n"], p["p"], p["lam"], seed)
    if fam == "nmf":
        return gen_nmf_instance(
            d["n"], d["m"], d["k"], p["alpha"], seed,
            lam=p["lam"], noise=p.get("noise", 0.01), v_law=p.get("v_law", "normal"),
        )
    raise DomainError(f"unknown family {fam!r}")


def save_instance(inst, path):
    with open(path, "w") as fh:
        json.dump(instance_record(inst), fh, indent=2, sort_keys=True)


def load_instance(path):
    with open(path) as fh:
        return instance_from_record(json.load(fh))
