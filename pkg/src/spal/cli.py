"""Batch experiment driver.

Subcommands
-----------
``solve``
    Run one algorithm on one problem; write ``trace.csv``, ``report.json``,
    and ``convergence.svg`` into the output directory.
``sweep``
    Cross a list of step counts with a list of seeds; write one
    ``sweep.csv`` row per cell plus ``slope.json`` with the log-log
    regression of median stationarity against T.  Cells run in a process
    pool and each writes its own result file atomically before the
    aggregates are assembled.
``audit``
    Run one of the numerical lemma audits and write ``audit.json``;
    exits 3 when violations were found.
``gen``
    Serialize a benchmark instance to a JSON document.
``params``
    Print the derived step-size schedule for given constants.

Configuration is an INI file with ``[problem]``, ``[oracle]``, ``[solver]``,
and ``[output]`` sections; any key can be overridden on the command line
with ``--set section.key=value``.  The output directory resolves as:
``--out-dir`` flag, then ``SPAL_OUTPUT_DIR``, then ``[output] dir``, then
the working directory.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 audit violation.
"""

from __future__ import annotations

import argparse
import ast
import configparser
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import _kernels, benchmarks, svgplot
from .core import OperatorNormError, SeededRng
from .diagnostics import (
    InnerSolveError,
    attach_potential,
    audit_error_bounds,
    audit_potential_lower_bound,
    audit_storm_recursion,
    hoffman_estimate,
)
from .geometry import ProjectionError, violation
from .oracles import AdditiveNoiseOracle, DegenerateSampler, ExactOracle
from .problem import problem_from_dict, problem_to_dict
from .solvers import (
    derive_params_alg1,
    derive_params_storm,
    choose_My,
    postprocess,
    run_alg1,
    run_alg2,
    run_alg3,
    snapshot_metrics,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_AUDIT = 3

_DEFAULT_PROBLEM = {"family": "nonconvex_qp", "n": 10, "m": 3, "seed": 0}


class ConfigError(Exception):
    """Bad config file, bad override, or inconsistent options."""


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def _coerce(text: str):
    """Parse an INI value: python literal when possible, else the string."""
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def load_config(path: str | None) -> dict:
    """Read an INI config into ``{section: {key: parsed value}}``."""
    cfg: dict = {}
    if path is None:
        return cfg
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys like T and M_y are case-sensitive
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    for section in cp.sections():
        cfg[section] = {k: _coerce(v) for k, v in cp.items(section)}
    return cfg


def apply_overrides(cfg: dict, sets) -> dict:
    for item in sets or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(
                f"override {item!r} is not of the form section.key=value"
            )
        key, value = item.split("=", 1)
        section, option = key.split(".", 1)
        cfg.setdefault(section, {})[option] = _coerce(value)
    return cfg


def _resolve_outdir(args, cfg: dict) -> str:
    if getattr(args, "out_dir", None):
        return args.out_dir
    env = os.environ.get("SPAL_OUTPUT_DIR")
    if env:
        return env
    return str(cfg.get("output", {}).get("dir", "."))


def _write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)  # 'inf' / 'nan' as strings
    return obj


def _dump_json(path: str, payload: dict) -> None:
    _write_atomic(path, json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# building blocks: problem, oracle, params
# ---------------------------------------------------------------------------


def build_problem(cfg: dict):
    """Return ``(instance or None, problem)`` from the [problem] section.

    A section that names neither ``family`` nor ``path`` is read as a
    partial override of the default problem (a small nonconvex QP), so
    ``--set problem.n=20`` alone works.
    """
    pc = dict(cfg.get("problem", {}))
    if "family" not in pc and "path" not in pc:
        pc = {**_DEFAULT_PROBLEM, **pc}
    path = pc.pop("path", None)
    if path is not None:
        if pc:
            raise ConfigError("[problem] path excludes other problem keys")
        with open(path) as fh:
            doc = json.load(fh)
        if "family" in doc:
            inst = benchmarks.make_instance(doc["family"], **doc["params"])
            return inst, inst.problem
        return None, problem_from_dict(doc)
    family = pc.pop("family")
    try:
        inst = benchmarks.make_instance(family, **pc)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for family {family!r}: {exc}") from exc
    return inst, inst.problem


def build_oracle(cfg: dict, instance, problem):
    oc = dict(cfg.get("oracle", {}))
    kind = oc.pop("kind", "exact")
    if kind == "exact":
        oracle = ExactOracle(problem.objective)
    elif kind == "additive":
        oracle = AdditiveNoiseOracle(problem.objective, float(oc.pop("sigma", 0.1)))
    elif kind == "finite_sum":
        if instance is None:
            raise ConfigError("finite_sum oracle needs a generated instance")
        oracle = benchmarks.finite_sum_oracle(instance)
    else:
        raise ConfigError(f"unknown oracle kind {kind!r}")
    if oc:
        raise ConfigError(f"unknown [oracle] keys: {sorted(oc)}")
    return oracle


_PARAM_KEYS = ("rho", "tau", "eta", "beta", "mu", "lam", "alpha", "M_y", "sigma_bar")
_RUN_KEYS = ("algorithm", "T", "seed", "trace_stride", "early_stop",
             "record_potential", "postprocess_B", "literal_lambda",
             "assert_bounded")

_EXPR_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name,
               ast.Load, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow,
               ast.USub, ast.UAdd)


def _schedule_value(raw, T: int) -> float:
    """Numeric solver override, or an arithmetic expression in ``T``.

    Expressions make one config express horizon-dependent schedules — a
    sweep cell at horizon ``T`` sees ``tau = 0.5*T**-0.5`` evaluated at its
    own ``T``.  Only ``+ - * / **``, numbers, and the name ``T`` are
    accepted.
    """
    try:
        return float(raw)
    except (TypeError, ValueError):
        pass
    try:
        tree = ast.parse(str(raw), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad solver value {raw!r}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _EXPR_NODES):
            raise ConfigError(
                f"solver value {raw!r}: only arithmetic in T is allowed")
        if isinstance(node, ast.Name) and node.id != "T":
            raise ConfigError(
                f"solver value {raw!r}: unknown name {node.id!r}")
        if isinstance(node, ast.Constant) and not isinstance(
                node.value, (int, float)):
            raise ConfigError(f"solver value {raw!r}: non-numeric constant")
    return float(eval(compile(tree, "<solver override>", "eval"),
                      {"__builtins__": {}}, {"T": T}))


def build_plan(cfg: dict) -> dict:
    """Assemble everything one run needs from a parsed config."""
    instance, problem = build_problem(cfg)
    oracle = build_oracle(cfg, instance, problem)
    sc = dict(cfg.get("solver", {}))
    algorithm = str(sc.pop("algorithm", "alg1"))
    if algorithm not in ("alg1", "alg2", "alg3"):
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    T = int(sc.pop("T", 1000))
    seed = int(sc.pop("seed", 0))
    rho = float(sc.pop("rho", 1.0))
    sigma_bar = float(sc.pop("sigma_bar", 1.0))
    l_f = problem.objective.l_f
    T_sched = max(T, 1)  # schedules need a horizon; a zero-step run ignores it
    if algorithm == "alg3":
        params = derive_params_storm(l_f, oracle.l0, problem.norm_A, rho,
                                     sigma_bar=sigma_bar, T=T_sched)
    else:
        params = derive_params_alg1(l_f, problem.norm_A, rho, sigma_bar, T_sched)
    overrides = {k: _schedule_value(sc.pop(k), T_sched)
                 for k in _PARAM_KEYS if k in sc}
    params = params.override(T=T, **overrides)
    early_stop = sc.pop("early_stop", None)
    plan = {
        "instance": instance,
        "problem": problem,
        "oracle": oracle,
        "algorithm": algorithm,
        "params": params,
        "seed": seed,
        "trace_stride": int(sc.pop("trace_stride", 1)),
        "early_stop": None if early_stop is None else float(early_stop),
        "record_potential": bool(sc.pop("record_potential", False)),
        "postprocess_B": int(sc.pop("postprocess_B", 0)),
        "literal_lambda": bool(sc.pop("literal_lambda", False)),
        "assert_bounded": bool(sc.pop("assert_bounded", False)),
    }
    if sc:
        raise ConfigError(f"unknown [solver] keys: {sorted(sc)}")
    try:
        params.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if plan["record_potential"] and algorithm == "alg2":
        raise ConfigError("record_potential needs stored iterates, which the "
                          "sampled-constraint variant does not keep")
    return plan


def execute_plan(plan: dict):
    problem, oracle, params = plan["problem"], plan["oracle"], plan["params"]
    common = dict(seed=plan["seed"], trace_stride=plan["trace_stride"],
                  early_stop=plan["early_stop"])
    if plan["algorithm"] == "alg1":
        result = run_alg1(problem, oracle, params,
                          record_iterates=plan["record_potential"], **common)
    elif plan["algorithm"] == "alg3":
        result = run_alg3(problem, oracle, params,
                          record_iterates=plan["record_potential"],
                          literal_lambda=plan["literal_lambda"], **common)
    else:
        instance = plan["instance"]
        sampler = instance.sampler if instance is not None and instance.sampler is not None \
            else DegenerateSampler(problem.A, problem.b)
        result = run_alg2(problem, oracle, sampler, params,
                          assert_bounded=plan["assert_bounded"], **common)
    if plan["record_potential"] and not result.diverged:
        attach_potential(problem, params, result.trace)
    certificate = None
    if plan["postprocess_B"] > 0 and result.snapshot is not None and not result.diverged:
        snap = result.snapshot
        certificate = postprocess(problem, oracle, params, snap.x, snap.y_next,
                                  snap.z, plan["postprocess_B"],
                                  rng=SeededRng(plan["seed"]).child(3))
    return result, certificate


# ---------------------------------------------------------------------------
# trace serialization
# ---------------------------------------------------------------------------


def trace_csv_text(trace) -> str:
    cols = trace.columns()
    names = list(cols)
    lines = [",".join(names)]
    n = len(trace)
    for r in range(n):
        lines.append(",".join(f"{float(cols[k][r]):.17g}" for k in names))
    return "\n".join(lines) + "\n"


def parse_trace_csv(text: str) -> dict:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    names = lines[0].split(",")
    cols: dict = {k: [] for k in names}
    for ln in lines[1:]:
        for k, cell in zip(names, ln.split(",")):
            cols[k].append(float(cell))
    return cols


def _final_metrics(trace) -> dict | None:
    if len(trace) == 0:
        return None
    cols = trace.columns()
    return {k: float(v[-1]) for k, v in cols.items()}


def _initial_metrics(problem) -> dict:
    x0 = problem.x0
    return {
        "feas": float(np.linalg.norm(problem.residual(x0))),
        "set_violation": float(violation(problem.domain, x0)),
        "objective": float(problem.objective.value(x0)),
    }


def _run_report(plan: dict, result, certificate) -> dict:
    problem = plan["problem"]
    report = {
        "algorithm": plan["algorithm"],
        "problem": {"name": problem.name, "dim": problem.dim,
                    "m": problem.n_constraints,
                    "family": problem.meta.get("family")},
        "oracle": {"kind": plan["oracle"].kind, "sigma2": plan["oracle"].sigma2,
                   "l0": plan["oracle"].l0},
        "params": plan["params"].as_dict(),
        "seed": plan["seed"],
        "initial": _initial_metrics(problem),
        "final": _final_metrics(result.trace),
        "t_completed": int(result.state.t),
        "t_star": (result.snapshot.t_star if result.snapshot else None),
        "counts": {"oracle_samples": result.n_oracle_samples,
                   "constraint_draws": result.n_constraint_draws},
        "wallclock": result.wallclock,
        "diverged": result.diverged,
        "early_stopped": result.early_stopped,
        "used_kernels": result.used_kernels,
        "jit": _kernels.USING_NUMBA,
    }
    if certificate is not None:
        report["certificate"] = {
            "residual_norm": certificate.residual_norm,
            "feasibility": certificate.feasibility,
            "batch": certificate.batch,
            "tau": certificate.tau,
            "dual_norm": float(np.linalg.norm(certificate.y)),
        }
    return report


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = apply_overrides(load_config(args.config), args.set)
    _fold_solver_flags(cfg, args)
    outdir = _resolve_outdir(args, cfg)
    os.makedirs(outdir, exist_ok=True)
    plan = build_plan(cfg)
    result, certificate = execute_plan(plan)

    csv_text = trace_csv_text(result.trace)
    _write_atomic(os.path.join(outdir, "trace.csv"), csv_text)
    _dump_json(os.path.join(outdir, "report.json"),
               _run_report(plan, result, certificate))
    # the figure is rendered from the CSV text just written, never from
    # live arrays: replotting the file reproduces it byte for byte
    svg = svgplot.convergence_chart(parse_trace_csv(csv_text),
                                    title=plan["problem"].name)
    _write_atomic(os.path.join(outdir, "convergence.svg"), svg)

    if result.diverged:
        print(f"numerical failure: iterates left finite range at step "
              f"{result.state.t} (partial trace written to {outdir})",
              file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {outdir}/trace.csv ({len(result.trace)} rows), report.json, "
          f"convergence.svg")
    return EXIT_OK


def _fold_solver_flags(cfg: dict, args) -> None:
    """Common command-line shortcuts into the [solver] section."""
    sc = cfg.setdefault("solver", {})
    for flag, key in (("algorithm", "algorithm"), ("T", "T"), ("seed", "seed"),
                      ("stride", "trace_stride"), ("early_stop", "early_stop"),
                      ("postprocess_B", "postprocess_B")):
        v = getattr(args, flag, None)
        if v is not None:
            sc[key] = v
    if getattr(args, "record_potential", False):
        sc["record_potential"] = True


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _parse_int_list(text: str) -> list[int]:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ConfigError(f"empty integer list: {text!r}")
    return out


def _sweep_cell(cell_json: str, outdir: str) -> dict:
    """One (T, seed) cell; runs in a worker process."""
    cfg = json.loads(cell_json)
    plan = build_plan(cfg)
    result, certificate = execute_plan(plan)
    final = _final_metrics(result.trace) or {}
    stat_star, feas_star = snapshot_metrics(plan["problem"], result)
    tr = result.trace
    # root-mean-square over the recorded steps: the quantity the convergence
    # guarantees bound is the squared residual averaged along the run, so its
    # root is the per-run summary that actually follows the advertised rate.
    # The last iterate does not — on nonconvex instances it parks on a face
    # of the set (residual collapses) or in a transient (residual lottery).
    stat_rms = float(np.sqrt(np.mean(tr.stat_est ** 2))) if len(tr) else float("nan")
    feas_rms = float(np.sqrt(np.mean(tr.feas ** 2))) if len(tr) else float("nan")
    row = {
        "T": plan["params"].T,
        "seed": plan["seed"],
        "algorithm": plan["algorithm"],
        "feas": final.get("feas", float("nan")),
        "set_violation": final.get("set_violation", float("nan")),
        "stat_est": final.get("stat_est", float("nan")),
        "dual_norm": final.get("dual_norm", float("nan")),
        "x_minus_z": final.get("x_minus_z", float("nan")),
        "resets": int(final.get("resets", 0)),
        "diverged": int(result.diverged),
        "t_star": (result.snapshot.t_star if result.snapshot else -1),
        "stat_tstar": stat_star,
        "feas_tstar": feas_star,
        "stat_rms": stat_rms,
        "feas_rms": feas_rms,
    }
    if certificate is not None:
        row["cert_residual"] = certificate.residual_norm
        row["cert_feas"] = certificate.feasibility
    _dump_json(os.path.join(outdir, "cells",
                            f"T{row['T']}_seed{row['seed']}.json"), row)
    return row


def _fit_slope(Ts: list[int], medians: list[float]):
    pts = [(math.log10(T), math.log10(v)) for T, v in zip(Ts, medians)
           if v > 0 and math.isfinite(v)]
    if len(pts) < 2:
        return None, None
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    slope, intercept = np.polyfit(xs, ys, 1)
    return float(slope), float(intercept)


def cmd_sweep(args) -> int:
    cfg = apply_overrides(load_config(args.config), args.set)
    _fold_solver_flags(cfg, args)
    outdir = _resolve_outdir(args, cfg)
    os.makedirs(os.path.join(outdir, "cells"), exist_ok=True)

    Ts = _parse_int_list(args.T_list)
    seeds = _parse_int_list(args.seeds)
    build_plan(dict(cfg))  # validate the base config before spawning workers

    cells = []
    for T in sorted(set(Ts)):
        for seed in seeds:
            c = json.loads(json.dumps(cfg))  # deep copy via JSON round-trip
            c.setdefault("solver", {})["T"] = T
            c["solver"]["seed"] = seed
            cells.append(json.dumps(c))

    jobs = args.jobs or min(len(cells), os.cpu_count() or 1)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells, [outdir] * len(cells)))
    else:
        rows = [_sweep_cell(c, outdir) for c in cells]
    rows.sort(key=lambda r: (r["T"], r["seed"]))

    names = list(rows[0])
    lines = [",".join(names)]
    for row in rows:
        lines.append(",".join(
            f"{row[k]:.17g}" if isinstance(row[k], float) else str(row[k])
            for k in names))
    _write_atomic(os.path.join(outdir, "sweep.csv"), "\n".join(lines) + "\n")

    uniq_T = sorted({r["T"] for r in rows})
    med_stat, med_feas = [], []
    for T in uniq_T:
        stats = [r["stat_rms"] for r in rows if r["T"] == T and not r["diverged"]]
        feats = [r["feas_rms"] for r in rows if r["T"] == T and not r["diverged"]]
        med_stat.append(float(np.median(stats)) if stats else float("nan"))
        med_feas.append(float(np.median(feats)) if feats else float("nan"))
    slope, intercept = _fit_slope(uniq_T, med_stat)
    _dump_json(os.path.join(outdir, "slope.json"), {
        "algorithm": rows[0]["algorithm"],
        "T": uniq_T,
        "metric": "rms_over_run",
        "median_stat": med_stat,
        "median_feas": med_feas,
        "slope": slope,
        "intercept": intercept,
        "n_cells": len(rows),
        "n_diverged": int(sum(r["diverged"] for r in rows)),
    })

    n_bad = sum(r["diverged"] for r in rows)
    if n_bad:
        print(f"{n_bad}/{len(rows)} cells diverged", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {outdir}/sweep.csv ({len(rows)} cells) and slope.json"
          + ("" if slope is None else f"; slope {slope:+.3f}"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------


_AUDIT_DEFAULT_PROBLEMS = {
    "error-bounds": {"family": "nonconvex_qp", "n": 8, "m": 3, "seed": 1},
    "potential-lower-bound": {"family": "nonconvex_qp", "n": 8, "m": 3, "seed": 1},
    "hoffman": {"family": "nonconvex_qp", "n": 8, "m": 3, "seed": 1},
    "storm-recursion": {"family": "consensus", "N": 4, "n": 2, "seed": 0},
}


def cmd_audit(args) -> int:
    cfg = apply_overrides(load_config(args.config), args.set)
    if "problem" not in cfg:
        cfg["problem"] = dict(_AUDIT_DEFAULT_PROBLEMS[args.lemma])
    outdir = _resolve_outdir(args, cfg)
    os.makedirs(outdir, exist_ok=True)
    cfg.setdefault("solver", {}).setdefault("T", 100)
    plan = build_plan(cfg)
    problem, params = plan["problem"], plan["params"]
    rng = SeededRng(args.seed)

    if args.lemma == "error-bounds":
        report = audit_error_bounds(problem, params, args.trials, rng=rng).as_dict()
    elif args.lemma == "potential-lower-bound":
        report = audit_potential_lower_bound(problem, params, args.trials,
                                             rng=rng).as_dict()
    elif args.lemma == "storm-recursion":
        if plan["instance"] is None:
            raise ConfigError("storm-recursion audit needs a generated instance")
        oracle = benchmarks.finite_sum_oracle(plan["instance"])
        pairs = []
        for k in range(args.trials):
            child = rng.child(k)
            x_old = problem.domain.sample_point(child)
            x_new = problem.domain.sample_point(child, scale=0.5)
            d_old = oracle.mean(x_old) + child.standard_normal(problem.dim)
            pairs.append((x_old, x_new, d_old))
        report = audit_storm_recursion(oracle, pairs, params.alpha).as_dict()
    else:  # hoffman
        half = hoffman_estimate(problem, params, max(1, args.trials // 2),
                                rng=rng)
        full = hoffman_estimate(problem, params, args.trials, rng=rng)
        change = abs(full - half) / max(full, 1e-30)
        stable = bool(math.isfinite(full) and change < args.stability)
        report = {
            "name": "global-regularity-estimate",
            "trials": args.trials,
            "estimate_half": half,
            "estimate": full,
            "relative_change": change,
            "tolerance": args.stability,
            "violations": 0 if stable else 1,
            "passed": stable,
        }

    report["lemma"] = args.lemma
    report["seed"] = args.seed
    _dump_json(os.path.join(outdir, "audit.json"), report)
    bad = int(report.get("violations", 0))
    print(f"{args.lemma}: {report.get('trials', args.trials)} trials, "
          f"{bad} violations -> {outdir}/audit.json")
    return EXIT_AUDIT if bad > 0 else EXIT_OK


# ---------------------------------------------------------------------------
# gen / params
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = apply_overrides(load_config(args.config), args.set)
    pc = cfg.setdefault("problem", {})
    if args.family:
        pc["family"] = args.family
    for kv in args.param or []:
        if "=" not in kv:
            raise ConfigError(f"--param needs key=value, got {kv!r}")
        k, v = kv.split("=", 1)
        pc[k] = _coerce(v)
    if not pc:
        cfg["problem"] = dict(_DEFAULT_PROBLEM)
    _, problem = build_problem(cfg)
    outdir = _resolve_outdir(args, cfg)
    os.makedirs(outdir, exist_ok=True)
    path = args.output or os.path.join(outdir, "instance.json")
    _dump_json(path, problem_to_dict(problem))
    print(path)
    return EXIT_OK


def cmd_params(args) -> int:
    if args.algorithm == "alg3":
        p = derive_params_storm(args.l_f, args.l0 if args.l0 is not None else args.l_f,
                                args.norm_A, args.rho, sigma_bar=args.sigma_bar,
                                T=args.T)
    else:
        p = derive_params_alg1(args.l_f, args.norm_A, args.rho, args.sigma_bar,
                               args.T)
    out = p.as_dict()
    out["algorithm"] = args.algorithm
    if args.safeguard is not None:
        M_V, M_Psi, M, r = args.safeguard
        out["M_y"] = choose_My(M_V, M_Psi, M, r)
    print(json.dumps(_json_safe(out), indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; that code means
    # "numerical failure" here, so remap to the config-error code
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def _add_common(sp):
    sp.add_argument("config", nargs="?", default=None,
                    help="INI config file (sections: problem/oracle/solver/output)")
    sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                    help="override one config key (repeatable)")
    sp.add_argument("--out-dir", default=None,
                    help="output directory (beats SPAL_OUTPUT_DIR and the config)")


def _add_run_flags(sp):
    sp.add_argument("--algorithm", choices=("alg1", "alg2", "alg3"), default=None)
    sp.add_argument("-T", type=int, default=None, help="iteration count")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--stride", type=int, default=None, help="trace row stride")
    sp.add_argument("--early-stop", dest="early_stop", type=float, default=None,
                    help="stop when feasibility and stationarity both fall below")
    sp.add_argument("--postprocess-B", dest="postprocess_B", type=int, default=None,
                    help="certificate batch size (0 disables)")
    sp.add_argument("--record-potential", dest="record_potential",
                    action="store_true",
                    help="store iterates and write the potential column")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spal",
                     description="stochastic smoothed proximal AL solver harness")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", parents=[], help="run one configuration")
    _add_common(sp)
    _add_run_flags(sp)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("sweep", help="cross T values with seeds")
    _add_common(sp)
    _add_run_flags(sp)
    sp.add_argument("--T-list", dest="T_list", required=True,
                    help="comma list or a..b range of iteration counts")
    sp.add_argument("--seeds", required=True,
                    help="comma list or a..b range of seeds")
    sp.add_argument("--jobs", type=int, default=None,
                    help="worker processes (default: one per cpu, capped)")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("audit", help="run a numerical lemma audit")
    _add_common(sp)
    sp.add_argument("--lemma", required=True,
                    choices=("error-bounds", "hoffman", "potential-lower-bound",
                             "storm-recursion"))
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--stability", type=float, default=0.1,
                    help="allowed relative drift for the regularity estimate")
    sp.set_defaults(fn=cmd_audit)

    sp = sub.add_parser("gen", help="serialize a benchmark instance")
    _add_common(sp)
    sp.add_argument("--family", default=None,
                    choices=sorted(benchmarks._FAMILIES))
    sp.add_argument("--param", action="append", metavar="KEY=VALUE",
                    help="generator parameter (repeatable)")
    sp.add_argument("-o", "--output", default=None, help="destination JSON path")
    sp.set_defaults(fn=cmd_gen)

    sp = sub.add_parser("params", help="print a derived schedule")
    sp.add_argument("--algorithm", choices=("alg1", "alg2", "alg3"),
                    default="alg1")
    sp.add_argument("--l-f", dest="l_f", type=float, required=True)
    sp.add_argument("--l0", dest="l0", type=float, default=None,
                    help="per-ticket smoothness (momentum variant; defaults to L_f)")
    sp.add_argument("--norm-A", dest="norm_A", type=float, required=True)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--sigma-bar", dest="sigma_bar", type=float, default=1.0)
    sp.add_argument("-T", type=int, default=1000)
    sp.add_argument("--safeguard", nargs=4, type=float, default=None,
                    metavar=("M_V", "M_PSI", "M", "R"),
                    help="also print the dual safeguard radius for these bounds")
    sp.set_defaults(fn=cmd_params)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (InnerSolveError, ProjectionError, OperatorNormError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError, KeyError, OSError,
            json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
