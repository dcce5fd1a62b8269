"""Config-driven experiment harness and command-line entry point.

Subcommands:

* ``run``: one solve, trace CSV to a file or stdout;
* ``experiment``: batch solves over seeds for every config section, with a
  per-rule summary;
* ``bounds``: pairs a trace with its theoretical envelope;
* ``check``: sampled Hölder and uniform-convexity diagnostics.

Configs are INI files; each section is one experiment (one table row)::

    [lq_q2_p2]
    family = lq_ball
    n = 1000
    q = 2.0
    p = 2.0
    rules = alg1, alg2, diminishing:offset=1
    n_seeds = 10
    rel_gap_tol = 1e-6

A rule token is ``name`` or ``name:key=value:key=value`` with names
``alg1``, ``alg2``, ``diminishing``, ``nesterov`` and ``short``.
Exit codes: 0 all runs converged, 1 some run failed, 2 bad config or usage.
"""

import argparse
import configparser
import csv
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .exceptions import DomainError, HolderCGError
from .problems import (
    gen_entropy_instance,
    gen_lq_instance,
    gen_nmf_instance,
    make_problem,
)
from .solver import (
    AdaptiveLS,
    Diminishing,
    NesterovDiminishing,
    ParamDependent,
    ShortStep,
    Termination,
    rule_label,
    solve,
)
from .theory import (
    BoundedDomain,
    RateBoundSpec,
    UniformlyConvex,
    build_envelope,
    check_holder,
    check_uniform_convexity,
    tilde_L,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
FAMILIES = ("lq_ball", "entropy", "nmf")
TRACE_HEADER = ["t", "phi", "delta", "delta_star", "tau", "L", "inner", "elapsed_s"]
BOUNDS_HEADER = ["t", "phi_gap", "envelope", "delta_star", "delta_star_bound", "valid"]
REFERENCE_TOL = 1e-12
REFERENCE_MAX_ITER = 100_000
HOLDER_TOL = 1e-8

_FAMILY_KEYS = {
    "lq_ball": {"n": int, "q": float, "p": float},
    "entropy": {"m": int, "n": int, "p": float, "lam": float},
    "nmf": {"n": int, "m": int, "k": int, "alpha": float, "lam": float, "noise": float, "v_law": str},
}
_FAMILY_DEFAULTS = {
    "lq_ball": {"p": 2.0},
    "entropy": {},
    "nmf": {"lam": 0.01, "noise": 0.01, "v_law": "normal"},
}
_RUN_KEYS = {"rules", "n_seeds", "base_seed", "rel_gap_tol", "max_iter", "max_seconds", "family", "write_traces"}


class ConfigError(HolderCGError, ValueError):
    pass


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    family: str
    params: Dict[str, object]
    rules: Tuple[str, ...]
    n_seeds: int = 10
    base_seed: int = 0
    rel_gap_tol: float = 1e-6
    max_iter: Optional[int] = None
    max_seconds: Optional[float] = None
    write_traces: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"[{self.name}] family must be one of {FAMILIES}")
        if self.n_seeds < 1:
            raise ConfigError(f"[{self.name}] n_seeds must be >= 1")
        if not 0 < self.rel_gap_tol < 1:
            raise ConfigError(f"[{self.name}] rel_gap_tol must lie in (0, 1)")
        if not self.rules:
            raise ConfigError(f"[{self.name}] at least one rule is required")
        missing = set(_FAMILY_KEYS[self.family]) - set(self.params)
        if missing:
            raise ConfigError(f"[{self.name}] missing keys {sorted(missing)}")
        for tok in self.rules:
            parse_rule_token(tok)

    @property
    def termination(self):
        return Termination(self.rel_gap_tol, self.max_iter, self.max_seconds)


def _parse_scalar(name, key, raw, kind):
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"[{name}] bad value for {key}: {raw!r}") from exc


def config_from_mapping(name, mapping):
    """Build an :class:`ExperimentConfig` from string key/value pairs."""
    family = mapping.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"[{name}] family must be one of {FAMILIES}, got {family!r}")
    known = _FAMILY_KEYS[family]
    unknown = set(mapping) - set(known) - _RUN_KEYS
    if unknown:
        raise ConfigError(f"[{name}] unknown keys {sorted(unknown)}")
    params = dict(_FAMILY_DEFAULTS[family])
    for key, kind in known.items():
        if key in mapping:
            params[key] = _parse_scalar(name, key, mapping[key], kind)
    rules = tuple(tok.strip() for tok in mapping.get("rules", "").split(",") if tok.strip())

    def opt(key, kind, default=None):
        raw = mapping.get(key)
        return default if raw in (None, "", "none") else _parse_scalar(name, key, raw, kind)

    write = mapping.get("write_traces", "false").strip().lower() in ("1", "true", "yes", "on")
    return ExperimentConfig(
        name=name,
        family=family,
        params=params,
        rules=rules,
        n_seeds=opt("n_seeds", int, 10),
        base_seed=opt("base_seed", int, 0),
        rel_gap_tol=opt("rel_gap_tol", float, 1e-6),
        max_iter=opt("max_iter", int),
        max_seconds=opt("max_seconds", float),
        write_traces=write,
    )


def load_configs(path):
    """Every section of an INI file as an :class:`ExperimentConfig`."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not parser.sections():
        raise ConfigError(f"{path} defines no experiments")
    return [config_from_mapping(s, dict(parser[s])) for s in parser.sections()]


# --------------------------------------------------------------------------
# rules and instances


def parse_rule_token(token):
    """Split ``name:key=value:...`` into ``(name, {key: float})``."""
    name, *rest = token.split(":")
    if name not in ("alg1", "alg2", "diminishing", "nesterov", "short"):
        raise ConfigError(f"unknown rule {name!r}")
    opts = {}
    for item in rest:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"bad rule option {item!r} in {token!r}")
        try:
            opts[key.strip()] = float(val)
        except ValueError as exc:
            raise ConfigError(f"bad rule option {item!r} in {token!r}") from exc
    allowed = {"alg1": {"nu", "M"}, "alg2": {"L_init"}, "diminishing": {"offset"},
               "nesterov": {"offset"}, "short": {"L"}}[name]
    if set(opts) - allowed:
        raise ConfigError(f"rule {name!r} accepts only {sorted(allowed)}")
    return name, opts


def build_rule(token, problem):
    """Instantiate a rule token; ``alg1`` and ``short`` default to the problem's constants."""
    name, opts = parse_rule_token(token)
    c = problem.constants
    if name == "alg1":
        nu, M = opts.get("nu", c.nu), opts.get("M", c.M)
        if nu is None or M is None:
            raise ConfigError("alg1 needs nu and M (not certified for this problem)")
        return ParamDependent(nu, M)
    if name == "alg2":
        return AdaptiveLS(opts.get("L_init", 1.0))
    if name in ("diminishing", "nesterov"):
        off = opts.get("offset", 0.0)
        if off != int(off):
            raise ConfigError("offset must be an integer")
        cls = Diminishing if name == "diminishing" else NesterovDiminishing
        return cls(int(off))
    L = opts.get("L", c.M if c.nu == 1 else None)
    if L is None:
        raise ConfigError("short needs L")
    return ShortStep(L)


def generate_instance(family, params, seed):
    p = params
    if family == "lq_ball":
        return gen_lq_instance(p["n"], p["q"], seed, p=p.get("p", 2.0))
    if family == "entropy":
        return gen_entropy_instance(p["m"], p["n"], p["p"], p["lam"], seed)
    if family == "nmf":
        return gen_nmf_instance(
            p["n"], p["m"], p["k"], p["alpha"], seed,
            lam=p.get("lam", 0.01), noise=p.get("noise", 0.01), v_law=p.get("v_law", "normal"),
        )
    raise ConfigError(f"unknown family {family!r}")


# --------------------------------------------------------------------------
# experiments


@dataclass
class RunResult:
    seed: int
    rule: str
    status: str
    iterations: int
    seconds: float
    trace: Optional[object] = None
    error: Optional[str] = None

    @property
    def ok(self):
        return self.status in ("converged", "stationary")


@dataclass
class RuleSummary:
    rule: str
    mean_iterations: float
    mean_seconds: float
    successes: int
    failures: int


@dataclass
class SummaryRow:
    config: ExperimentConfig
    rules: List[RuleSummary] = field(default_factory=list)

    def by_rule(self, token):
        for r in self.rules:
            if r.rule == token:
                return r
        raise KeyError(token)


def _run_seed(cfg, seed, keep_traces):
    inst = generate_instance(cfg.family, cfg.params, seed)
    problem = make_problem(inst)
    out = []
    for tok in cfg.rules:
        try:
            rule = build_rule(tok, problem)
            tr = solve(problem, rule, term=cfg.termination)
            secs = tr.records[-1].elapsed_s
            out.append(RunResult(seed, tok, tr.status, tr.iterations, secs, tr if keep_traces else None))
        except HolderCGError as exc:
            out.append(RunResult(seed, tok, "error", 0, math.nan, None, f"{type(exc).__name__}: {exc}"))
    return out


def summarize(cfg, runs):
    row = SummaryRow(cfg)
    for tok in cfg.rules:
        mine = [r for r in runs if r.rule == tok]
        good = [r for r in mine if r.ok]
        mean_it = float(np.mean([r.iterations for r in good])) if good else math.nan
        mean_s = float(np.mean([r.seconds for r in good])) if good else math.nan
        row.rules.append(RuleSummary(tok, mean_it, mean_s, len(good), len(mine) - len(good)))
    return row


def run_experiment(cfg, jobs=None, keep_traces=False):
    """Solve seeds ``base_seed .. base_seed + n_seeds - 1`` with every rule.

    Each seed's runs happen in one worker (the instance is generated once
    per seed), so results do not depend on ``jobs``. Returns the summary and
    the per-run results ordered by seed then rule.
    """
    seeds = [cfg.base_seed + i for i in range(cfg.n_seeds)]
    jobs = (os.cpu_count() or 1) if jobs is None else max(1, int(jobs))
    if jobs == 1 or len(seeds) == 1:
        batches = [_run_seed(cfg, s, keep_traces) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(seeds))) as pool:
            batches = list(pool.map(_run_seed, [cfg] * len(seeds), seeds, [keep_traces] * len(seeds)))
    runs = [r for b in batches for r in b]
    return summarize(cfg, runs), runs


# --------------------------------------------------------------------------
# CSV output


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def emit_trace_csv(trace, path):
    """Write ``t,phi,delta,delta_star,tau,L,inner,elapsed_s`` rows; ``-`` is stdout."""
    if not trace.records:
        raise DomainError("empty trace")
    fh, close = _open_out(path)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in trace.records:
            w.writerow([_fmt(getattr(r, k)) for k in TRACE_HEADER])
    finally:
        if close:
            fh.close()


def _algorithm_of(trace):
    label = rule_label(trace.rule)
    if label == "param_dependent":
        return "alg1"
    if label == "adaptive_ls":
        return "alg2"
    raise DomainError(f"no rate theorem covers the {label} rule")


def bounds_rows(trace, spec, convex_f=True):
    """Rows pairing the observed gaps with the envelope; ``spec.gaps`` must be set."""
    if spec.gaps is None or len(spec.gaps) != len(trace.records):
        raise DomainError("spec.gaps must hold phi(x_t) - phi* for every record")
    env = build_envelope(spec, _algorithm_of(trace), convex_f)
    rows = []
    for r in trace.records:
        g, valid = env.phi_gap_bound(r.t)
        d, _ = env.delta_star_bound(r.t)
        rows.append((r.t, spec.gaps[r.t], g, r.delta_star, d, valid))
    return rows


def emit_bounds_csv(trace, spec, path, convex_f=True):
    """Write ``t,phi_gap,envelope,delta_star,delta_star_bound,valid`` rows."""
    rows = bounds_rows(trace, spec, convex_f)
    fh, close = _open_out(path)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BOUNDS_HEADER)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    finally:
        if close:
            fh.close()


def emit_summary_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["experiment", "family", "params", "rule", "mean_iterations", "mean_seconds", "successes", "failures"])
        for row in rows:
            params = ";".join(f"{k}={v}" for k, v in sorted(row.config.params.items()))
            for r in row.rules:
                w.writerow([row.config.name, row.config.family, params, r.rule,
                            _fmt(r.mean_iterations), _fmt(r.mean_seconds), r.successes, r.failures])


# --------------------------------------------------------------------------
# theory glue


def reference_phi_star(problem, traces=()):
    """Best objective over a tol-1e-12 adaptive solve and any given traces."""
    ref = solve(problem, AdaptiveLS(1.0), term=Termination(REFERENCE_TOL, REFERENCE_MAX_ITER))
    return min([ref.best_phi] + [t.best_phi for t in traces])


def rate_spec_for(problem, trace, phi_star, regime=None):
    """:class:`RateBoundSpec` for a finished trace of ``alg1`` or ``alg2``.

    ``regime`` is ``"bounded"`` or ``"uniconv"``; by default the uniformly
    convex regime is used whenever the problem certifies ``kappa``.
    """
    c = problem.constants
    if c.nu is None or c.M is None:
        raise DomainError("problem has no certified Hölder constants")
    if regime is None:
        regime = "uniconv" if c.kappa is not None else "bounded"
    if regime == "uniconv":
        if c.kappa is None:
            raise DomainError("problem has no certified uniform-convexity constant")
        reg = UniformlyConvex(c.kappa, c.rho)
    elif regime == "bounded":
        reg = BoundedDomain(c.D_g)
    else:
        raise DomainError(f"unknown regime {regime!r}")
    gaps = tuple(max(0.0, r.phi - phi_star) for r in trace.records)
    L_init = tL0 = None
    if isinstance(trace.rule, AdaptiveLS):
        r0 = trace.records[0]
        L_init = trace.rule.L_init
        tL0 = tilde_L(r0.delta, r0.dist, c.nu, c.M) if r0.delta > 0 else None
    return RateBoundSpec(c.nu, c.M, reg, gaps[0], gaps, L_init, tL0)


# --------------------------------------------------------------------------
# command line


def _build_parser():
    ap = argparse.ArgumentParser(prog="holdercg", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, multi=False):
        p.add_argument("--config", help="INI file with experiment sections")
        p.add_argument("--section", help="use only this section of the config")
        p.add_argument("--family", choices=FAMILIES, help="inline problem family (instead of --config)")
        p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                       help="inline family parameter or config key; repeatable")
        p.add_argument("--seed", type=int, help="seed (base seed for experiments)")
        p.add_argument("--tol", type=float, help="relative gap tolerance")
        p.add_argument("--max-iter", type=int, help="iteration cap")
        p.add_argument("--out-dir", help="directory for CSV outputs")
        if multi:
            p.add_argument("--jobs", type=int, help="worker processes (default: logical cores)")

    p = sub.add_parser("run", help="single solve, trace CSV")
    common(p)
    p.add_argument("--rule", required=True, help="rule token, e.g. alg2:L_init=1")
    p.add_argument("--out", default="-", help="trace CSV path (default stdout)")

    p = sub.add_parser("experiment", help="table reproduction over seeds")
    common(p, multi=True)

    p = sub.add_parser("bounds", help="trace versus theoretical envelope")
    common(p)
    p.add_argument("--rule", default="alg2", help="alg1 or alg2 token")
    p.add_argument("--regime", choices=("bounded", "uniconv"), help="theorem regime")
    p.add_argument("--out", default="-", help="bounds CSV path (default stdout)")

    p = sub.add_parser("check", help="sampled Hölder / uniform-convexity checks")
    common(p)
    p.add_argument("--pairs", type=int, default=500, help="samples per check")
    return ap


def _configs_from_args(args):
    overrides = {}
    for item in args.param:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = val.strip()
    if args.config:
        cfgs = load_configs(args.config)
        if args.section:
            cfgs = [c for c in cfgs if c.name == args.section]
            if not cfgs:
                raise ConfigError(f"no section {args.section!r} in {args.config}")
        if overrides:
            cfgs = [_apply_overrides(c, overrides) for c in cfgs]
    elif args.family:
        mapping = {"family": args.family, "rules": "alg2"}
        mapping.update(overrides)
        cfgs = [config_from_mapping("cli", mapping)]
    else:
        raise ConfigError("need --config or --family")
    out = []
    for c in cfgs:
        upd = {}
        if args.seed is not None:
            upd["base_seed"] = args.seed
        if args.tol is not None:
            upd["rel_gap_tol"] = args.tol
        if args.max_iter is not None:
            upd["max_iter"] = args.max_iter
        out.append(replace(c, **upd) if upd else c)
    return out


def _apply_overrides(cfg, overrides):
    mapping = {"family": cfg.family, "rules": ",".join(cfg.rules), "n_seeds": str(cfg.n_seeds),
               "base_seed": str(cfg.base_seed), "rel_gap_tol": repr(cfg.rel_gap_tol),
               "write_traces": str(cfg.write_traces)}
    if cfg.max_iter is not None:
        mapping["max_iter"] = str(cfg.max_iter)
    if cfg.max_seconds is not None:
        mapping["max_seconds"] = repr(cfg.max_seconds)
    mapping.update({k: str(v) for k, v in cfg.params.items()})
    mapping.update(overrides)
    return config_from_mapping(cfg.name, mapping)


def _single(cfgs):
    if len(cfgs) != 1:
        raise ConfigError("this subcommand needs exactly one experiment; use --section")
    return cfgs[0]


def _problem_for(cfg):
    return make_problem(generate_instance(cfg.family, cfg.params, cfg.base_seed))


def _cmd_run(args):
    cfg = _single(_configs_from_args(args))
    problem = _problem_for(cfg)
    trace = solve(problem, build_rule(args.rule, problem), term=cfg.termination)
    out = args.out
    if args.out_dir and out == "-":
        os.makedirs(args.out_dir, exist_ok=True)
        out = os.path.join(args.out_dir, f"{cfg.name}_{args.rule.replace(':', '_')}_seed{cfg.base_seed}.csv")
    emit_trace_csv(trace, out)
    print(f"{cfg.name} {args.rule} seed={cfg.base_seed}: {trace.status} after {trace.iterations} iterations",
          file=sys.stderr)
    return EXIT_OK if trace.converged else EXIT_FAIL


def _print_summary(row, stream=None):
    stream = stream or sys.stdout
    cfg = row.config
    params = " ".join(f"{k}={v}" for k, v in sorted(cfg.params.items()))
    print(f"[{cfg.name}] {cfg.family} {params} seeds={cfg.n_seeds} tol={cfg.rel_gap_tol:g}", file=stream)
    for r in row.rules:
        print(f"  {r.rule:<24} iters={r.mean_iterations:10.1f}  sec={r.mean_seconds:9.4f}  "
              f"ok={r.successes} failed={r.failures}", file=stream)


def _cmd_experiment(args):
    cfgs = _configs_from_args(args)
    rows, all_ok = [], True
    for cfg in cfgs:
        keep = cfg.write_traces and bool(args.out_dir)
        row, runs = run_experiment(cfg, jobs=args.jobs, keep_traces=keep)
        rows.append(row)
        _print_summary(row)
        for r in runs:
            if not r.ok:
                all_ok = False
                print(f"  failed: {r.rule} seed={r.seed} status={r.status} {r.error or ''}", file=sys.stderr)
        if keep:
            d = os.path.join(args.out_dir, cfg.name)
            os.makedirs(d, exist_ok=True)
            for r in runs:
                if r.trace is not None:
                    emit_trace_csv(r.trace, os.path.join(d, f"{r.rule.replace(':', '_')}_seed{r.seed}.csv"))
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        emit_summary_csv(rows, os.path.join(args.out_dir, "summary.csv"))
    return EXIT_OK if all_ok else EXIT_FAIL


def _cmd_bounds(args):
    cfg = _single(_configs_from_args(args))
    problem = _problem_for(cfg)
    trace = solve(problem, build_rule(args.rule, problem), term=cfg.termination)
    phi_star = reference_phi_star(problem, [trace])
    spec = rate_spec_for(problem, trace, phi_star, args.regime)
    out = args.out
    if args.out_dir and out == "-":
        os.makedirs(args.out_dir, exist_ok=True)
        out = os.path.join(args.out_dir, f"{cfg.name}_bounds_seed{cfg.base_seed}.csv")
    emit_bounds_csv(trace, spec, out, convex_f=problem.convex_f)
    return EXIT_OK if trace.converged else EXIT_FAIL


def _cmd_check(args):
    cfg = _single(_configs_from_args(args))
    problem = _problem_for(cfg)
    c = problem.constants
    seed = cfg.base_seed
    ok = True
    h = check_holder(problem, c.nu, c.M, n_pairs=args.pairs, seed=seed)
    ok &= h <= HOLDER_TOL
    print(f"holder nu={c.nu:g} M={c.M:.6g}: max relative violation {h:.3e}")
    if c.kappa is not None:
        u = check_uniform_convexity(problem, c.kappa, c.rho, n_samples=args.pairs, seed=seed)
        ok &= u <= HOLDER_TOL
        print(f"uniform convexity kappa={c.kappa:g} rho={c.rho:g}: max scaled violation {u:.3e}")
    else:
        print("uniform convexity: no certified constant for this problem")
    return EXIT_OK if ok else EXIT_FAIL


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "experiment": _cmd_experiment, "bounds": _cmd_bounds, "check": _cmd_check}
    try:
        return handlers[args.cmd](args)
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        sys.stderr.close()
        return EXIT_OK
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HolderCGError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
