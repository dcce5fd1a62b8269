"""Conditional gradient main loop with pluggable step-size rules."""

import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from .exceptions import DomainError, LineSearchError, OracleViolationError
from .oracles import fw_gap

LS_TRIAL_CAP = 200
DESCENT_SLACK = 1e-12
STATIONARY_TOL = 1e-15


# --------------------------------------------------------------------------
# step-rule configuration


@dataclass(frozen=True)
class ParamDependent:
    """Hölder-parameter step ``min{1, (delta / (M dist^(1+nu)))^(1/nu)}``."""

    nu: float
    M: float

    def __post_init__(self):
        if not (0 < self.nu <= 1 and self.M > 0):
            raise DomainError("ParamDependent needs nu in (0, 1] and M > 0")


@dataclass(frozen=True)
class AdaptiveLS:
    """Parameter-free adaptive line search started from ``L_init``."""

    L_init: float = 1.0

    def __post_init__(self):
        if not self.L_init > 0:
            raise DomainError("AdaptiveLS needs L_init > 0")


def _check_offset(offset):
    if not (isinstance(offset, int) and offset >= 0):
        raise DomainError("schedule offset must be a non-negative int")


@dataclass(frozen=True)
class Diminishing:
    """Open-loop ``2 / (s + 2)`` with ``s = t + offset``.

    ``offset=1`` reproduces the schedule of a one-based iteration counter.
    """

    offset: int = 0

    def __post_init__(self):
        _check_offset(self.offset)


@dataclass(frozen=True)
class NesterovDiminishing:
    """Open-loop ``6 (s + 1) / ((s + 2)(2s + 3))`` with ``s = t + offset``."""

    offset: int = 0

    def __post_init__(self):
        _check_offset(self.offset)


@dataclass(frozen=True)
class ShortStep:
    """Classical short step ``min{1, delta / (L dist^2)}`` for known ``L``."""

    L: float

    def __post_init__(self):
        if not self.L > 0:
            raise DomainError("ShortStep needs L > 0")


StepRuleConfig = Union[ParamDependent, AdaptiveLS, Diminishing, NesterovDiminishing, ShortStep]


def rule_label(rule):
    if isinstance(rule, ParamDependent):
        return "param_dependent"
    if isinstance(rule, AdaptiveLS):
        return "adaptive_ls"
    if isinstance(rule, Diminishing):
        return "diminishing"
    if isinstance(rule, NesterovDiminishing):
        return "nesterov"
    if isinstance(rule, ShortStep):
        return "short_step"
    raise DomainError(f"unknown step rule {rule!r}")


# --------------------------------------------------------------------------
# step formulas


def step_param_dependent(delta, dist, nu, M):
    if delta <= 0.0:
        return 0.0
    if dist <= 0.0:
        raise OracleViolationError("positive gap with x_t == v_t")
    ratio = delta / (M * dist ** (1.0 + nu))
    if ratio >= 1.0:
        return 1.0
    return ratio ** (1.0 / nu)


def step_diminishing(t):
    return 2.0 / (t + 2.0)


def step_nesterov(t):
    return 6.0 * (t + 1.0) / ((t + 2.0) * (2.0 * t + 3.0))


def step_short(delta, dist, L):
    if delta <= 0.0:
        return 0.0
    if dist <= 0.0:
        raise OracleViolationError("positive gap with x_t == v_t")
    return min(1.0, delta / (L * dist * dist))


@dataclass
class LineSearchResult:
    x_next: np.ndarray
    f_next: float
    g_next: float
    L: float
    tau: float
    inner_count: int


def adaptive_line_search(problem, x, v, delta, phi_x, L_prev, dist=None):
    """Backtracking on the local quadratic model of ``phi`` along ``[x, v]``.

    Trial ``i`` uses ``L = 2^(i-1) L_prev`` and
    ``tau = min{1, delta / (2 L dist^2)}`` and accepts the first candidate with

        phi(x + tau (v - x)) <= phi(x) - tau delta / 2 + L tau^2 dist^2 / 2

    (compared with a ``1e-12 (1 + |phi(x)|)`` rounding slack).
    """
    if not (delta > 0 and L_prev > 0):
        raise DomainError("line search needs delta > 0 and L_prev > 0")
    if dist is None:
        dist = float(np.linalg.norm(v - x))
    d2 = dist * dist
    if d2 == 0.0:
        raise OracleViolationError("positive gap with x_t == v_t")
    f_seg = problem.f_on_segment(x, v)
    slack = DESCENT_SLACK * (1.0 + abs(phi_x))
    L = 0.5 * L_prev
    for i in range(LS_TRIAL_CAP):
        tau = min(1.0, delta / (2.0 * L * d2))
        cand = x + tau * (v - x)
        g_c = problem.g_value(cand)
        f_c = f_seg(tau)
        model = phi_x - 0.5 * tau * delta + 0.5 * L * tau * tau * d2
        if f_c + g_c <= model + slack:
            return LineSearchResult(cand, f_c, g_c, L, tau, i + 1)
        L *= 2.0
    raise LineSearchError(
        f"adaptive line search exceeded {LS_TRIAL_CAP} trials (last L={L / 2:.3e})", L / 2
    )


# --------------------------------------------------------------------------
# main loop


@dataclass(frozen=True)
class Termination:
    rel_gap_tol: float = 1e-6
    max_iter: Optional[int] = None
    max_seconds: Optional[float] = None

    def __post_init__(self):
        finite = (
            (self.rel_gap_tol is not None and self.rel_gap_tol > 0)
            or self.max_iter is not None
            or self.max_seconds is not None
        )
        if not finite:
            raise DomainError("at least one termination criterion must be finite")


@dataclass
class TraceRecord:
    t: int
    phi: float
    delta: float
    delta_star: float
    tau: Optional[float]
    L: Optional[float]
    inner: Optional[int]
    elapsed_s: float
    dist: float


@dataclass
class SolverTrace:
    rule: StepRuleConfig
    records: List[TraceRecord] = field(default_factory=list)
    status: str = "running"
    x: Optional[np.ndarray] = None
    best_phi: float = math.inf

    @property
    def iterations(self):
        """Number of updates performed before termination."""
        return self.records[-1].t if self.records else 0

    @property
    def converged(self):
        return self.status in ("converged", "stationary")

    def column(self, name):
        return np.array(
            [np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records],
            dtype=float,
        )


def solve(
    problem,
    rule,
    x0=None,
    term=Termination(),
    on_record: Optional[Callable[[TraceRecord], None]] = None,
):
    """Run the conditional gradient method from ``x0`` with step rule ``rule``.

    Stops once ``delta_t <= rel_gap_tol * delta_0``, at an exact stationary
    point, or when ``max_iter`` / ``max_seconds`` is reached. Every iteration
    appends a :class:`TraceRecord` (and passes it to ``on_record``); ``tau``,
    ``L`` and ``inner`` on a record describe the step taken from ``x_t``.
    """
    label = rule_label(rule)
    x = np.array(problem.x0 if x0 is None else x0, dtype=float)
    g_x = problem.g_value(x)
    if not math.isfinite(g_x):
        raise DomainError("x0 is not in dom g")

    trace = SolverTrace(rule=rule)
    L_prev = rule.L_init if label == "adaptive_ls" else None
    start = time.perf_counter()
    f_x, grad = problem.f_and_grad(x)
    delta0 = None
    delta_star = math.inf
    t = 0
    while True:
        phi_x = f_x + g_x
        trace.best_phi = min(trace.best_phi, phi_x)
        res = problem.lmo(grad)
        delta = fw_gap(grad, x, res.v, g_x, res.g_of_v)
        if delta <= STATIONARY_TOL * (1.0 + abs(phi_x)):
            delta = 0.0
        if delta0 is None:
            delta0 = delta
        delta_star = min(delta_star, delta)
        dist = float(np.linalg.norm(res.v - x))
        rec = TraceRecord(t, phi_x, delta, delta_star, None, None, None, 0.0, dist)

        status = None
        if delta == 0.0:
            status = "stationary"
        elif term.rel_gap_tol is not None and delta <= term.rel_gap_tol * delta0:
            status = "converged"
        elif term.max_iter is not None and t >= term.max_iter:
            status = "max_iter"
        elif term.max_seconds is not None and time.perf_counter() - start >= term.max_seconds:
            status = "max_seconds"
        if status is not None:
            rec.elapsed_s = time.perf_counter() - start
            trace.records.append(rec)
            if on_record is not None:
                on_record(rec)
            trace.status = status
            break

        if label == "adaptive_ls":
            ls = adaptive_line_search(problem, x, res.v, delta, phi_x, L_prev, dist=dist)
            x, f_x, g_x = ls.x_next, ls.f_next, ls.g_next
            rec.tau, rec.L, rec.inner = ls.tau, ls.L, ls.inner_count
            L_prev = ls.L
            grad = problem.f_grad(x)
        else:
            if label == "param_dependent":
                tau = step_param_dependent(delta, dist, rule.nu, rule.M)
            elif label == "diminishing":
                tau = step_diminishing(t + rule.offset)
            elif label == "nesterov":
                tau = step_nesterov(t + rule.offset)
            else:
                tau = step_short(delta, dist, rule.L)
            rec.tau = tau
            x = x + tau * (res.v - x)
            g_x = problem.g_value(x)
            if not math.isfinite(g_x):
                raise OracleViolationError("iterate left dom g")
            f_x, grad = problem.f_and_grad(x)
        rec.elapsed_s = time.perf_counter() - start
        trace.records.append(rec)
        if on_record is not None:
            on_record(rec)
        t += 1

    trace.x = x
    return trace
