"""Closed-form theoretical quantities for checking solver traces.

Contains the Hölder quadratic envelope ``L(eps)``, the line-search
certificates ``tilde_L`` and ``bar_L``, the rate envelopes ``gamma_t`` of the
four convergence theorems (two step rules times two structural regimes), the
corollary iteration bounds and sampled checks of the structural constants.

Gap arguments always mean ``phi(x_t) - phi*``. When the true ``phi*`` is
unknown a surrogate (the best value seen by a high-accuracy reference solve)
is used by callers.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .exceptions import DomainError

E_1_OVER_E = math.exp(1.0 / math.e)
ALGORITHMS = ("alg1", "alg2")
COMPLEXITY_REGIMES = (
    "nonconvex_bounded",
    "convex_bounded",
    "nonconvex_uniconv",
    "convex_uniconv_linear",
    "convex_uniconv_sublinear",
)


# --------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class BoundedDomain:
    D_g: float

    def __post_init__(self):
        if not (self.D_g > 0 and math.isfinite(self.D_g)):
            raise DomainError("D_g must be positive and finite")


@dataclass(frozen=True)
class UniformlyConvex:
    kappa: float
    rho: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.rho >= 2):
            raise DomainError("need kappa > 0 and rho >= 2")


@dataclass(frozen=True)
class RateBoundSpec:
    """Constants feeding the envelopes.

    ``gap0`` is ``phi(x_0) - phi*``. ``gaps`` optionally holds the observed
    sequence ``phi(x_t) - phi*``; it is used wherever a theorem refers to the
    gap at a later index, and ``gap0`` is used as a (larger) stand-in when it
    is missing. ``L_init`` and ``tilde_L0`` (the certificate at ``t = 0``)
    are only needed for the adaptive line search.
    """

    nu: float
    M: float
    regime: Union[BoundedDomain, UniformlyConvex]
    gap0: float
    gaps: Optional[Sequence[float]] = None
    L_init: Optional[float] = None
    tilde_L0: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.nu <= 1 and self.M > 0):
            raise DomainError("need nu in (0, 1] and M > 0")
        if not self.gap0 >= 0:
            raise DomainError("gap0 must be non-negative")
        if self.L_init is not None and not self.L_init > 0:
            raise DomainError("L_init must be positive")
        if self.tilde_L0 is not None and not self.tilde_L0 > 0:
            raise DomainError("tilde_L0 must be positive")
        if not isinstance(self.regime, (BoundedDomain, UniformlyConvex)):
            raise DomainError(f"unknown regime {self.regime!r}")

    def gap(self, t):
        """Gap at index ``t``; past the end of ``gaps`` the last value is used."""
        if not self.gaps:
            return self.gap0
        return max(0.0, float(self.gaps[min(int(t), len(self.gaps) - 1)]))

    @property
    def is_linear_case(self):
        r = self.regime
        return isinstance(r, UniformlyConvex) and self.nu == 1 and r.rho == 2


# --------------------------------------------------------------------------
# line-search certificates


def holder_envelope(eps, nu, M):
    """``L(eps) = ((1-nu)/(1+nu) / (2 eps))^((1-nu)/(1+nu)) M^(2/(1+nu))``.

    Any ``f`` with ``nu``-Hölder gradient satisfies the quadratic upper model
    with constant ``L(eps)`` up to an additive ``eps``. For ``nu = 1`` this is
    ``M`` for every ``eps``.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    if not (0 < nu <= 1 and M > 0):
        raise DomainError("need nu in (0, 1] and M > 0")
    if nu == 1:
        return float(M)
    e = (1.0 - nu) / (1.0 + nu)
    return ((1.0 - nu) / (1.0 + nu) / (2.0 * eps)) ** e * M ** (2.0 / (1.0 + nu))


def tilde_L(delta, dist, nu, M):
    """Line-search certificate: any trial ``L >= tilde_L`` is accepted."""
    if not (delta > 0 and dist > 0):
        raise DomainError("need delta > 0 and dist > 0")
    a = holder_envelope(delta / 2.0, nu, M)
    b = holder_envelope(delta * delta / (4.0 * dist * dist), nu, M) ** ((1.0 + nu) / (2.0 * nu))
    return max(a, b)


def tilde_L_closed_form(delta, dist, nu, M):
    """Expanded form of :func:`tilde_L`; used as an independent cross-check."""
    if not (delta > 0 and dist > 0):
        raise DomainError("need delta > 0 and dist > 0")
    r = (1.0 - nu) / (1.0 + nu)
    a = (r / delta) ** r * M ** (2.0 / (1.0 + nu))
    b = (2.0 * r) ** ((1.0 - nu) / (2.0 * nu)) * (dist / delta) ** ((1.0 - nu) / nu) * M ** (1.0 / nu)
    return max(a, b)


def bar_L(delta, spec):
    """Upper bound on ``tilde_L_t`` for every iterate with ``delta_t >= delta``."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    nu, M = spec.nu, spec.M
    r = (1.0 - nu) / (1.0 + nu)
    a = (r / delta) ** r * M ** (2.0 / (1.0 + nu))
    pre = (2.0 * r) ** ((1.0 - nu) / (2.0 * nu)) * M ** (1.0 / nu)
    reg = spec.regime
    if isinstance(reg, BoundedDomain):
        b = pre * (reg.D_g / delta) ** ((1.0 - nu) / nu)
    else:
        rho = reg.rho
        b = pre * (rho / (reg.kappa * delta ** (rho - 1.0))) ** ((1.0 - nu) / (rho * nu))
    return max(a, b)


def tilde_t0(spec):
    """``ceil((log2(L_init / tilde_L0))_+)``, the warm-up length of the line search."""
    if spec.L_init is None or spec.tilde_L0 is None:
        raise DomainError("adaptive envelopes need L_init and tilde_L0")
    return int(math.ceil(max(0.0, math.log2(spec.L_init / spec.tilde_L0))))


# --------------------------------------------------------------------------
# rate envelopes


def _log_pos(x):
    return math.log(x) if x > 1.0 else 0.0


def _power_gap(gap, expo):
    # gap^(-expo) with gap = 0 read as +inf
    return math.inf if gap <= 0.0 else gap ** (-expo)


@dataclass(frozen=True)
class Envelope:
    """Per-theorem constants plus evaluators of the resulting bounds.

    The envelope ``gamma(s)`` is indexed in the theorem's own clock; for the
    adaptive rule the bound on ``phi(x_t) - phi*`` is ``gamma(t - tilde_t0)``.
    """

    algorithm: str
    convex_f: bool
    linear: bool
    A: float
    t0: int
    tilde_t0: int
    gap_ref: float  # gap at 0 (alg1) or at tilde_t0 (alg2)
    gap_start: float  # gap at t0 (alg1) or at tilde_t0 + t0 (alg2)
    rate: float  # linear: exponent factor; otherwise additive slope in the bracket
    alpha: float  # bracket exponent; gamma = [gap^-alpha + slope (s - t0)]^(-1/alpha)
    i_exponent: float  # exponent of the second term of the delta* bound (i)
    i_scale: float  # (1+nu)/nu for alg1, 4 for alg2
    ii_threshold: float

    def gamma(self, s):
        if not self.convex_f:
            raise DomainError("gamma_t is only defined for convex f")
        if self.linear:
            return self.gap_ref * math.exp(-self.rate * s)
        base = _power_gap(self.gap_start, self.alpha) + self.rate * (s - self.t0)
        if math.isinf(base):
            return 0.0
        return base ** (-1.0 / self.alpha)

    def phi_gap_bound(self, t):
        """``(bound, valid)`` for ``phi(x_t) - phi*``."""
        if not self.convex_f:
            return math.nan, False
        start = self.tilde_t0 if self.linear else self.tilde_t0 + self.t0
        if t < start:
            return math.nan, False
        return self.gamma(t - self.tilde_t0), True

    def delta_star_bound_i(self, t):
        """Bound (i) on the best gap, valid for nonconvex ``f`` as well."""
        k = t + 1 - self.tilde_t0
        if k <= 0:
            return math.nan, False
        g = self.gap_ref
        return max(self.i_scale * g / k, (self.i_scale * self.A * g / k) ** self.i_exponent), True

    def delta_star_bound_ii(self, t):
        """Bound (ii) ``e^(1/e) gamma_(...)`` on the best gap for convex ``f``."""
        if not self.convex_f or t < self.ii_threshold:
            return math.nan, False
        s = t - self.tilde_t0
        idx = (s + 2) // 2 if self.linear else (s + self.t0 + 1) // 2
        return E_1_OVER_E * self.gamma(idx), True

    def delta_star_bound(self, t):
        vals = [b for b, ok in (self.delta_star_bound_i(t), self.delta_star_bound_ii(t)) if ok]
        return (min(vals), True) if vals else (math.nan, False)


def build_envelope(spec, algorithm="alg2", convex_f=True, linear=None):
    """Constants ``A``, ``t0`` and ``tilde_t0`` of the matching theorem.

    ``linear`` selects the linear-rate branch (only for ``nu = 1``,
    ``rho = 2``); ``None`` picks it automatically.
    """
    if algorithm not in ALGORITHMS:
        raise DomainError(f"algorithm must be one of {ALGORITHMS}")
    nu, M, reg = spec.nu, spec.M, spec.regime
    if linear is None:
        linear = spec.is_linear_case
    if linear and not spec.is_linear_case:
        raise DomainError("linear-rate branch needs nu = 1, rho = 2 and a uniformly convex regime")
    if not linear and spec.is_linear_case:
        raise DomainError("sublinear branch is undefined for nu = 1, rho = 2")

    adaptive = algorithm == "alg2"
    tt0 = tilde_t0(spec) if adaptive else 0
    Mx = 2.0 * M if adaptive else M
    gap_ref = spec.gap(tt0)

    if isinstance(reg, BoundedDomain):
        A = Mx ** (1.0 / nu) * reg.D_g ** ((1.0 + nu) / nu)
        alpha = 1.0 / nu
        i_exp = nu / (1.0 + nu)
        log_target = A**nu
    else:
        rho, kappa = reg.rho, reg.kappa
        A = (rho / kappa) ** ((1.0 + nu) / (rho * nu)) * Mx ** (1.0 / nu)
        alpha = math.inf if linear else (rho - 1.0 - nu) / (rho * nu)
        i_exp = rho * nu / ((rho - 1.0) * (1.0 + nu))
        log_target = None if linear else A ** (1.0 / alpha)

    if adaptive:
        i_scale = 4.0
    else:
        i_scale = (1.0 + nu) / nu

    if linear:
        t0 = 0
        c = min(1.0, reg.kappa / (4.0 * M)) / 4.0 if adaptive else min(1.0, reg.kappa / (2.0 * M)) / 2.0
        # the delta* threshold follows the recurrence lemma: 2 / c
        thr = tt0 + (8.0 * max(1.0, 4.0 * M / reg.kappa) if adaptive else 4.0 * max(1.0, 2.0 * M / reg.kappa))
        return Envelope(algorithm, convex_f, True, A, 0, tt0, gap_ref, gap_ref, c, math.inf, i_exp, i_scale, thr)

    if adaptive:
        t0 = int(math.ceil(4.0 * _log_pos(4.0 * gap_ref / log_target)))
    else:
        t0 = int(math.ceil((1.0 + nu) / nu * _log_pos((1.0 + nu) * gap_ref / (nu * log_target))))
    gap_start = spec.gap(tt0 + t0)
    if isinstance(reg, BoundedDomain):
        slope = 1.0 / (4.0 * nu * A) if adaptive else 1.0 / ((1.0 + nu) * A)
    else:
        rho = reg.rho
        if adaptive:
            slope = (rho - 1.0 - nu) / (4.0 * rho * nu * A)
        else:
            slope = (rho - 1.0 - nu) / (rho * (1.0 + nu) * A)
    lead = 8.0 * A if adaptive else 2.0 * (1.0 + nu) * A / nu
    thr = tt0 + t0 + lead * _power_gap(gap_start, alpha)
    return Envelope(algorithm, convex_f, False, A, t0, tt0, gap_ref, gap_start, slope, alpha, i_exp, i_scale, thr)


@dataclass(frozen=True)
class EnvelopeValue:
    t: int
    gamma: float
    gamma_valid: bool
    delta_star_bound: float
    delta_star_valid: bool
    A: float
    t0: int
    tilde_t0: int


def rate_envelope(t, spec, algorithm="alg2", convex_f=True, linear=None):
    """Theoretical bounds at iteration ``t``.

    ``gamma`` bounds ``phi(x_t) - phi*`` (convex ``f`` only) and
    ``delta_star_bound`` bounds ``min_{i<=t} delta_i``; each comes with a
    flag telling whether ``t`` lies in the theorem's validity range. The
    constants ``A``, ``t0`` and ``tilde_t0`` are reported for attribution.
    """
    if t < 0:
        raise DomainError("t must be non-negative")
    env = build_envelope(spec, algorithm, convex_f, linear)
    g, gv = env.phi_gap_bound(t)
    d, dv = env.delta_star_bound(t)
    return EnvelopeValue(int(t), g, gv, d, dv, env.A, env.t0, env.tilde_t0)


# --------------------------------------------------------------------------
# iteration complexity


def complexity_bound(eps, spec, regime):
    """Iterations of the adaptive rule guaranteed to reach ``delta_t <= eps``.

    ``regime`` is one of ``COMPLEXITY_REGIMES``. ``tilde_t0`` is taken as 0
    when ``spec`` carries no line-search information.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    if regime not in COMPLEXITY_REGIMES:
        raise DomainError(f"regime must be one of {COMPLEXITY_REGIMES}")
    nu, M, reg = spec.nu, spec.M, spec.regime
    bounded = regime.endswith("bounded")
    if bounded != isinstance(reg, BoundedDomain):
        raise DomainError(f"regime {regime!r} does not match {type(reg).__name__}")
    if spec.L_init is None or spec.tilde_L0 is None:
        spec = replace(spec, L_init=1.0, tilde_L0=1.0)  # tilde_t0 = 0
    tt0 = tilde_t0(spec)
    g_ref = spec.gap(tt0)

    if regime == "nonconvex_bounded":
        return tt0 + 4.0 * g_ref / eps * max(1.0, (2.0 * M * reg.D_g ** (1.0 + nu) / eps) ** (1.0 / nu))
    if regime == "nonconvex_uniconv":
        rho, kappa = reg.rho, reg.kappa
        e = (1.0 + nu) / (rho * nu)
        term = rho**e * (2.0 * M) ** (1.0 / nu) / (kappa**e * eps ** ((rho - 1.0 - nu) / (rho * nu)))
        return tt0 + 4.0 * g_ref / eps * max(1.0, term)
    if regime == "convex_uniconv_linear":
        if not spec.is_linear_case:
            raise DomainError("linear regime needs nu = 1 and rho = 2")
        return tt0 + 8.0 * max(1.0, 4.0 * M / reg.kappa) * max(1.0, _log_pos(g_ref / eps))

    env = build_envelope(spec, "alg2", True, linear=False)
    g = env.gap_start
    if g <= 0:
        return float(tt0 + env.t0)
    if regime == "convex_bounded":
        lead = 8.0 * (2.0 * M * reg.D_g ** (1.0 + nu) / g) ** (1.0 / nu)
        return tt0 + env.t0 + lead * max(1.0, nu * ((E_1_OVER_E * g / eps) ** (1.0 / nu) - 1.0))
    rho, kappa = reg.rho, reg.kappa
    a = (rho - 1.0 - nu) / (rho * nu)
    e = (1.0 + nu) / (rho * nu)
    lead = 8.0 * rho**e * (2.0 * M) ** (1.0 / nu) / (kappa**e * g**a)
    return tt0 + env.t0 + lead * max(1.0, ((E_1_OVER_E * g / eps) ** a - 1.0) / a)


# --------------------------------------------------------------------------
# sampled structural checks


def _near(rng, x, w):
    # point on the segment [x, w] at a log-uniform fraction of the way
    s = 10.0 ** rng.uniform(-8.0, 0.0)
    return x + s * (w - x)


def check_holder(problem, nu, M, n_pairs=500, seed=0):
    """Largest ``(||grad f(x) - grad f(y)|| - M ||x - y||^nu) / M`` over sampled pairs.

    Half of the pairs are independent feasible points, the other half put
    ``y`` on the segment from ``x`` towards another feasible point at a
    log-uniform distance, where weakly smooth gradients are tightest.
    A non-positive result means no violation was found.
    """
    if problem.sample_feasible is None:
        raise DomainError("problem has no feasible-point sampler")
    if not (0 < nu <= 1 and M > 0):
        raise DomainError("need nu in (0, 1] and M > 0")
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for i in range(n_pairs):
        x = problem.sample_feasible(rng)
        w = problem.sample_feasible(rng)
        y = w if i % 2 == 0 else _near(rng, x, w)
        lhs = np.linalg.norm(problem.f_grad(x) - problem.f_grad(y))
        rhs = M * np.linalg.norm(x - y) ** nu
        worst = max(worst, (lhs - rhs) / M)
    return float(worst)


def check_uniform_convexity(problem, kappa, rho, n_samples=500, seed=0):
    """Largest violation of the uniform-convexity inequality of the subproblem.

    For sampled feasible ``x`` let ``u = grad f(x)`` and ``v* = lmo(u)``;
    for a feasible ``v`` the inequality reads
    ``<u, v> + g(v) - <u, v*> - g(v*) >= kappa / rho ||v - v*||^rho``.
    The violation (left side shortfall) is divided by the rounding scale
    ``1 + |u| . (|v| + |v*|) + |g(v)| + |g(v*)|``. Half of the ``v`` are
    independent samples, half lie near ``v*``.
    """
    if problem.sample_feasible is None:
        raise DomainError("problem has no feasible-point sampler")
    if not (kappa > 0 and rho >= 2):
        raise DomainError("need kappa > 0 and rho >= 2")
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for i in range(n_samples):
        x = problem.sample_feasible(rng)
        u = problem.f_grad(x)
        res = problem.lmo(u)
        w = problem.sample_feasible(rng)
        v = w if i % 2 == 0 else _near(rng, res.v, w)
        gv = problem.g_value(v)
        excess = float(u @ (v - res.v)) + gv - res.g_of_v
        need = kappa / rho * np.linalg.norm(v - res.v) ** rho
        scale = 1.0 + float(np.abs(u) @ (np.abs(v) + np.abs(res.v))) + abs(gv) + abs(res.g_of_v)
        worst = max(worst, (need - excess) / scale)
    return float(worst)
