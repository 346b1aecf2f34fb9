"""
Command-line harness for the consensus flow.

Subcommands
-----------
run      integrate an instance described by a JSON config
repro    the built-in five-agent deadzone example, with figure data
check    interval optimality test at a scalar point
oracle   centralised reference solution as JSON
sweep    grid of (alpha, h, scheme) runs written to sweep.csv

Exit codes: 0 success / converged, 1 input or numerical error, 2 horizon
reached without convergence (or a failed reproduction), 3 not optimal.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import certify, oracle
from .dynamics import (
    DEFAULT_STOP_TOL,
    SCHEMES,
    ProblemInstance,
    resolve_scheme,
    run,
    sweep,
)
from .errors import ConfigError, ConsensusFlowError, NonFinite
from .experiment import PAPER_FLAT_OPTIMA, PAPER_OPTIMUM, paper_config, paper_instance
from .funcs import function_from_spec
from .network import network_from_spec
from .sets import Box, WholeSpace, set_from_spec

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_HORIZON = 2
EXIT_NOT_OPTIMAL = 3

DEFAULT_PARAMS = {
    "alpha": 1.0,
    "h": 1e-3,
    "t_end": 60.0,
    "stop_tol": DEFAULT_STOP_TOL,
    "scheme": "auto",
    "k_fraction": 0.5,
    "record_stride": 1,
    "seed": None,
}
DEFAULT_OUTPUTS = {"dir": "consensus_flow_out", "emit_svg": True, "emit_lyapunov": True}
OUT_ENV = "CONSENSUS_FLOW_OUT"


# -- config ingestion -----------------------------------------------------------


def _number(v, path, positive=False, nonneg=False):
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
        raise ConfigError(path, "expected a finite number")
    if positive and not v > 0:
        raise ConfigError(path, "must be positive")
    if nonneg and v < 0:
        raise ConfigError(path, "must be nonnegative")
    return float(v)


def _vector(v, q, path):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or len(v) != q:
        raise ConfigError(path, f"expected a list of {q} numbers")
    return [_number(e, f"{path}/{k}") for k, e in enumerate(v)]


def _parse_params(raw, path="/params"):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    unknown = sorted(set(raw) - set(DEFAULT_PARAMS))
    if unknown:
        raise ConfigError(f"{path}/{unknown[0]}", "unknown parameter")
    p = dict(DEFAULT_PARAMS)
    p.update(raw)
    for key in ("alpha", "h", "t_end", "stop_tol"):
        p[key] = _number(p[key], f"{path}/{key}", positive=True)
    kf = _number(p["k_fraction"], f"{path}/k_fraction", positive=True)
    if not kf < 1:
        raise ConfigError(f"{path}/k_fraction", "must lie in (0, 1)")
    p["k_fraction"] = kf
    if p["scheme"] not in SCHEMES + ("auto",):
        raise ConfigError(f"{path}/scheme", f"expected one of {', '.join(SCHEMES + ('auto',))}")
    rs = p["record_stride"]
    if not isinstance(rs, int) or isinstance(rs, bool) or rs < 1:
        raise ConfigError(f"{path}/record_stride", "expected a positive integer")
    seed = p["seed"]
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise ConfigError(f"{path}/seed", "expected an integer or null")
    return p


def _parse_outputs(raw, path="/outputs"):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    unknown = sorted(set(raw) - set(DEFAULT_OUTPUTS))
    if unknown:
        raise ConfigError(f"{path}/{unknown[0]}", "unknown output option")
    o = dict(DEFAULT_OUTPUTS)
    o.update(raw)
    if not isinstance(o["dir"], str) or not o["dir"]:
        raise ConfigError(f"{path}/dir", "expected a nonempty string")
    for key in ("emit_svg", "emit_lyapunov"):
        if not isinstance(o[key], bool):
            raise ConfigError(f"{path}/{key}", "expected true or false")
    return o


def instance_from_config(cfg, set_override=None):
    """Validate a config document and build ``(instance, params, outputs)``.

    Every problem is reported as a ConfigError carrying a JSON-pointer path.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("", "expected a JSON object at the top level")
    unknown = sorted(set(cfg) - {"agents", "graph", "params", "outputs", "description"})
    if unknown:
        raise ConfigError(f"/{unknown[0]}", "unknown top-level key")
    params = _parse_params(cfg.get("params"))
    outputs = _parse_outputs(cfg.get("outputs"))
    agents = cfg.get("agents")
    if not isinstance(agents, list) or not agents:
        raise ConfigError("/agents", "expected a nonempty list of agents")
    costs, sets, specs = [], [], []
    for i, a in enumerate(agents):
        path = f"/agents/{i}"
        if not isinstance(a, dict):
            raise ConfigError(path, "expected an object with cost, set and x0")
        for key in ("cost", "set", "x0"):
            if key not in a:
                raise ConfigError(f"{path}/{key}", "missing")
        costs.append(function_from_spec(a["cost"], f"{path}/cost"))
        if set_override == "whole":
            sets.append(WholeSpace(costs[-1].dim))
        else:
            sets.append(set_from_spec(a["set"], f"{path}/set"))
        specs.append(a)
    q = costs[0].dim
    for i, (f, S) in enumerate(zip(costs, sets)):
        if f.dim != q:
            raise ConfigError(f"/agents/{i}/cost", f"dimension {f.dim} differs from agent 0 ({q})")
        if S.dim != q:
            raise ConfigError(f"/agents/{i}/set", f"dimension {S.dim} differs from the cost dimension {q}")
    x0 = np.array([_vector(a["x0"], q, f"/agents/{i}/x0") for i, a in enumerate(specs)])
    lam0 = np.array(
        [_vector(a.get("lambda0", [0.0] * q), q, f"/agents/{i}/lambda0") for i, a in enumerate(specs)]
    )
    for i, S in enumerate(sets):
        if not S.contains(x0[i], 1e-12):
            raise ConfigError(f"/agents/{i}/x0", f"agent {i}: initial point {x0[i].tolist()} is outside its set")
    net = network_from_spec(cfg.get("graph"), q, "/graph")
    if net.n != len(agents):
        raise ConfigError("/graph/adjacency", f"expected {len(agents)} rows, one per agent, got {net.n}")
    P = ProblemInstance(tuple(costs), tuple(sets), x0, lam0, net, params["alpha"])
    return P, params, outputs


def load_config(path, set_override=None):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path} is not valid JSON (line {exc.lineno}, column {exc.colno})") from exc
    return instance_from_config(cfg, set_override)


# -- output writers -----------------------------------------------------------


def _fmt(v):
    # repr gives the shortest string that round-trips and never depends on locale
    return repr(float(v))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_trace_csv(path, trace):
    m, n, q = trace.x.shape
    nq = n * q
    header = (
        ["t"]
        + [f"x_{k}" for k in range(1, nq + 1)]
        + [f"lambda_{k}" for k in range(1, nq + 1)]
        + ["residual", "consensus_gap"]
    )
    X = trace.x.reshape(m, nq)
    Lm = trace.lam.reshape(m, nq)
    rows = (
        [float(trace.t[r])] + [float(v) for v in X[r]] + [float(v) for v in Lm[r]]
        + [float(trace.residual[r]), float(trace.consensus_gap[r])]
        for r in range(m)
    )
    write_csv(path, header, rows)


def write_lyapunov_csv(path, report):
    write_csv(
        path,
        ["t", "V1", "V2", "Vstar", "W", "consensus_gap"],
        ([float(v) for v in row] for row in report.rows()),
    )


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def line_chart_svg(path, t, series, title="", xlabel="t", max_points=1500):
    """Minimal static SVG line chart; ``series`` maps a label to values over ``t``."""
    t = np.asarray(t, dtype=float)
    step = max(1, int(math.ceil(len(t) / max_points)))
    idx = np.unique(np.append(np.arange(0, len(t), step), len(t) - 1)) if len(t) else np.array([], int)
    W, H, ml, mr, mt, mb = 640, 400, 70, 120, 36, 44
    ys = [np.asarray(v, dtype=float)[idx] for v in series.values()]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys]) if ys else np.array([])
    y0, y1 = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if y1 - y0 < 1e-12 * max(1.0, abs(y0)):
        y0, y1 = y0 - 0.5, y1 + 0.5
    x0, x1 = (float(t[0]), float(t[-1])) if len(t) else (0.0, 1.0)
    if x1 <= x0:
        x1 = x0 + 1.0

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * (W - ml - mr)

    def sy(v):
        return H - mb - (v - y0) / (y1 - y0) * (H - mt - mb)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<rect x="{ml}" y="{mt}" width="{W - ml - mr}" height="{H - mt - mb}" fill="none" stroke="#444"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        yv = y0 + frac * (y1 - y0)
        xv = x0 + frac * (x1 - x0)
        out.append(
            f'<text x="{ml - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end" font-family="sans-serif" '
            f'font-size="10">{yv:.4g}</text>'
        )
        out.append(
            f'<text x="{sx(xv):.1f}" y="{H - mb + 16}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="10">{xv:.4g}</text>'
        )
    out.append(
        f'<text x="{(ml + W - mr) / 2:.1f}" y="{H - 8}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12">{xlabel}</text>'
    )
    for k, (label, y) in enumerate(zip(series, ys)):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t[idx], y) if math.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + 14 + 16 * k
        out.append(f'<line x1="{W - mr + 10}" y1="{ly - 4}" x2="{W - mr + 28}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - mr + 32}" y="{ly}" font-family="sans-serif" font-size="11">{label}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


# -- shared pieces ----------------------------------------------------------------


def _out_dir(args, outputs=None):
    d = os.environ.get(OUT_ENV) or args.out_dir or (outputs or DEFAULT_OUTPUTS)["dir"]
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _apply_overrides(params, args):
    for key, attr in (("alpha", "alpha"), ("h", "h"), ("t_end", "t_end"), ("stop_tol", "stop_tol")):
        v = getattr(args, attr, None)
        if v is not None:
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"/params/{key}", "must be a positive finite number")
            params[key] = float(v)
    if getattr(args, "scheme", None) is not None:
        params["scheme"] = args.scheme
    if getattr(args, "seed", None) is not None:
        params["seed"] = args.seed
    return params


def try_certificate(P):
    """Certified optimum and multiplier for scalar interval instances, else None."""
    if P.q != 1 or not all(isinstance(S, (Box, WholeSpace)) for S in P.sets):
        return None
    try:
        res = oracle.grid_solve_1d(P)
        cert = certify.reconstruct_lambda_star(P, float(res.x_opt[0]))
    except ConsensusFlowError:
        return None
    return cert if cert.verified else None


def _lists(a):
    return np.asarray(a, dtype=float).tolist()


def _execute(P, params, out, emit_svg=True, emit_lyapunov=True, prefix=""):
    """Run the flow, write trace/lyapunov/summary files and return ``(trace, summary, audit)``."""
    scheme = resolve_scheme(P, params["scheme"])
    trace = run(
        P, params["h"], params["t_end"], params["stop_tol"], scheme,
        record_stride=params["record_stride"], seed=params["seed"],
    )
    write_trace_csv(out / f"{prefix}trace.csv", trace)
    cert = try_certificate(P)
    schedule = certify.build_gain_schedule(P.network, P.alpha, params["k_fraction"])
    audit = certify.lyapunov_audit(trace, P, schedule, cert=cert)
    # V-bar: centred on the run's own final state, available with or without a certificate
    vbar = certify.lyapunov_audit(trace, P, schedule).stats["V1"]
    if emit_lyapunov:
        write_lyapunov_csv(out / f"{prefix}lyapunov.csv", audit)
    final = trace.final_state
    summary = {
        "params": {**params, "scheme": scheme},
        "requested_scheme": params["scheme"],
        "initial_conditions": {"x0": _lists(P.x0), "lambda0": _lists(P.lam0)},
        "stop_reason": trace.meta["stop_reason"],
        "converged": trace.converged,
        "steps": trace.meta["steps"],
        "t_final": float(trace.t[-1]),
        "final_consensus": _lists(trace.consensus_value()),
        "final_x": _lists(final.x),
        "final_lambda": _lists(final.lam),
        "final_residual": float(trace.residual[-1]),
        "final_consensus_gap": float(trace.consensus_gap[-1]),
        "final_lambda_dot_norm": float(np.linalg.norm(trace.lamdot[-1])),
        "lambda_sup_norm": float(np.abs(trace.lam).max()),
        "equilibrium_residual": certify.equilibrium_residual(P, final),
        "dual_drift": certify.dual_drift(trace),
        "feasibility_violation": certify.feasibility_violation(trace, P),
        "gain_schedule": {
            "k": schedule.k,
            "identity_residual": schedule.identity_residual,
            "q_min": schedule.q_min,
        },
        "lyapunov": {
            "certified": audit.certified,
            "slack_per_step": audit.slack,
            **{name: vars(m) for name, m in audit.stats.items()},
            "Vbar": vars(vbar),
        },
    }
    if cert is not None:
        summary["certificate"] = {
            "x_star": _lists(cert.x_star),
            "lambda_star": _lists(cert.lambda_star),
            "residual": cert.residual,
            "min_Vstar": audit.min_vstar,
        }
    write_json(out / f"{prefix}summary.json", summary)
    if emit_svg:
        n = P.n * P.q
        line_chart_svg(
            out / f"{prefix}trace.svg", trace.t,
            {f"x_{k + 1}": trace.x.reshape(len(trace.t), n)[:, k] for k in range(n)},
            "primal estimates",
        )
    return trace, summary, audit


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


# -- subcommands ------------------------------------------------------------------


def cmd_run(args):
    P, params, outputs = load_config(args.config, args.set_override)
    params = _apply_overrides(params, args)
    if params["alpha"] != P.alpha:
        P = P.with_alpha(params["alpha"])
    out = _out_dir(args, outputs)
    trace, summary, _ = _execute(P, params, out, outputs["emit_svg"], outputs["emit_lyapunov"])
    print(
        f"{summary['stop_reason']} after {summary['steps']} steps; "
        f"consensus {summary['final_consensus']}; residual {summary['final_residual']:.3e}"
    )
    return EXIT_OK if trace.converged else EXIT_HORIZON


def cmd_repro(args):
    params = dict(DEFAULT_PARAMS)
    params = _apply_overrides(params, args)
    P = paper_instance(unconstrained=args.unconstrained, alpha=params["alpha"])
    out = _out_dir(args)
    trace, summary, audit = _execute(P, params, out, emit_svg=False, emit_lyapunov=True)
    m = len(trace.t)
    write_csv(
        out / "fig1.csv",
        ["t"] + [f"x_{i}" for i in range(1, 6)],
        ([float(trace.t[r])] + [float(v) for v in trace.x[r, :, 0]] for r in range(m)),
    )
    write_csv(
        out / "fig2.csv",
        ["t"] + [f"lambda_{i}" for i in range(1, 6)],
        ([float(trace.t[r])] + [float(v) for v in trace.lam[r, :, 0]] for r in range(m)),
    )
    write_lyapunov_csv(out / "fig3.csv", audit)
    if not args.no_svg:
        line_chart_svg(out / "fig1.svg", trace.t, {f"x_{i + 1}": trace.x[:, i, 0] for i in range(5)}, "primal estimates")
        line_chart_svg(out / "fig2.svg", trace.t, {f"lambda_{i + 1}": trace.lam[:, i, 0] for i in range(5)}, "dual variables")
        fig3 = {"V1": audit.V1, "W": audit.W}
        if audit.Vstar is not None:
            fig3 = {"V1": audit.V1, "V2": audit.V2, "Vstar": audit.Vstar, "W": audit.W}
        line_chart_svg(out / "fig3.svg", audit.t, fig3, "Lyapunov functions")
    xf = trace.final_state.x[:, 0]
    bounded = bool(np.all(np.isfinite(trace.lam)))
    lam_ok = summary["final_lambda_dot_norm"] <= params["stop_tol"]
    if args.unconstrained:
        lo, hi = PAPER_FLAT_OPTIMA
        c = float(np.mean(xf))
        ok = lo - 1e-2 <= c <= hi + 1e-2 and summary["final_consensus_gap"] <= 1e-6 and bounded and lam_ok
        claim = f"consensus {c:.6g} in [{lo - 1e-2:g}, {hi + 1e-2:g}]"
    else:
        err = float(np.abs(xf - PAPER_OPTIMUM).max())
        ok = err <= 1e-2 and bounded and lam_ok
        claim = f"max |x_i - ({PAPER_OPTIMUM:g})| = {err:.3e}"
    vbar = summary["lyapunov"]["Vbar"]
    print(
        f"V-bar monotonicity: max per-step increase {vbar['max_jump']:.3e}, "
        f"{vbar['violations']} steps above slack {audit.slack:.3e}"
    )
    if summary["lyapunov"]["certified"]:
        ly = summary["lyapunov"]
        print(
            f"certified monotonicity: V1* max increase {ly['V1']['max_jump']:.3e}, "
            f"V* max increase {ly['Vstar']['max_jump']:.3e}"
        )
    print(
        f"{'PASS' if ok else 'FAIL'}: {claim}; sup|lambda| = {summary['lambda_sup_norm']:.4g}; "
        f"final |lambda_dot| = {summary['final_lambda_dot_norm']:.3e}"
    )
    return EXIT_OK if ok else EXIT_HORIZON


def _instance_for(args):
    if args.config:
        P, params, _ = load_config(args.config, getattr(args, "set_override", None))
        return P, params
    return paper_instance(), dict(DEFAULT_PARAMS)


def cmd_check(args):
    P, _ = _instance_for(args)
    chk = certify.check_optimal_1d(P, args.at)
    print(f"x = {args.at!r}")
    print(f"subdifferential: [{chk.subdifferential.lo!r}, {chk.subdifferential.hi!r}]")
    print(f"normal cone: [{chk.normal_cone.lo!r}, {chk.normal_cone.hi!r}]")
    print(f"verdict: {'optimal' if chk.optimal else 'not optimal'}")
    if not chk.optimal:
        return EXIT_NOT_OPTIMAL
    cert = certify.reconstruct_lambda_star(P, args.at)
    print(f"lambda*: {_lists(cert.lambda_star.reshape(-1))}")
    print(f"equilibrium residual: {cert.residual:.3e}")
    return EXIT_OK


def _oracle_window(P):
    """A finite search window for an unbounded scalar problem: all kinks and starts, padded."""
    pts = [float(v) for v in P.x0.reshape(-1)]
    pts += [k for f in P.costs for k in f.kinks()]
    lo, hi = oracle.feasible_interval(P)
    a, b = min(pts) - 10.0, max(pts) + 10.0
    return max(lo, a), min(hi, b)


def cmd_oracle(args):
    P, _ = _instance_for(args)
    if P.q == 1 and all(isinstance(S, (Box, WholeSpace)) for S in P.sets):
        lo, hi = oracle.feasible_interval(P)
        bounds = None if math.isfinite(lo) and math.isfinite(hi) else _oracle_window(P)
        res = oracle.grid_solve_1d(P, args.resolution, bounds)
        out = res.to_dict()
        if bounds is not None:
            out["search_window"] = list(bounds)
    else:
        out = oracle.centralized_solve(P).to_dict()
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def parse_grid(spec, params):
    """``alpha=0.5,1,2;h=1e-3;scheme=auto`` (or a JSON file with the same keys) to cells."""
    if os.path.isfile(spec):
        with open(spec, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("", "grid file must hold an object")
    else:
        raw = {}
        for part in filter(None, (s.strip() for s in spec.split(";"))):
            key, sep, vals = part.partition("=")
            if not sep:
                raise ConfigError(f"/grid/{key}", "expected key=value[,value...]")
            raw[key.strip()] = [v.strip() for v in vals.split(",") if v.strip()]
    unknown = sorted(set(raw) - {"alpha", "h", "scheme"})
    if unknown:
        raise ConfigError(f"/grid/{unknown[0]}", "unknown grid key; use alpha, h, scheme")
    axes = {}
    for key in ("alpha", "h"):
        vals = raw.get(key, [params[key]])
        try:
            vals = [float(v) for v in (vals if isinstance(vals, list) else [vals])]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"/grid/{key}", "expected numbers") from exc
        if not vals or not all(v > 0 and math.isfinite(v) for v in vals):
            raise ConfigError(f"/grid/{key}", "expected positive numbers")
        axes[key] = vals
    schemes = raw.get("scheme", [params["scheme"]])
    schemes = schemes if isinstance(schemes, list) else [schemes]
    for s in schemes:
        if s not in SCHEMES + ("auto",):
            raise ConfigError("/grid/scheme", f"unknown scheme {s!r}")
    return [(a, h, s) for a in axes["alpha"] for h in axes["h"] for s in schemes]


def cmd_sweep(args):
    P, params = _instance_for(args)
    params = _apply_overrides(params, args)
    grid = parse_grid(args.grid, params)
    seeds = (params["seed"],)
    cells = sweep(P, [(a, h, resolve_or_keep(P, s)) for a, h, s in grid], seeds, params["t_end"], params["stop_tol"], args.jobs)
    out = _out_dir(args)
    header = ["index", "alpha", "h", "scheme", "seed", "final_consensus", "residual", "steps", "stop_reason", "error"]
    rows = []
    for c in cells:
        fc = "" if c.final_consensus is None else " ".join(_fmt(v) for v in c.final_consensus)
        rows.append([
            c.index, float(c.alpha), float(c.h), c.scheme, "" if c.seed is None else c.seed, fc,
            "" if c.residual is None else float(c.residual), "" if c.steps is None else c.steps,
            c.stop_reason or "", c.error or "",
        ])
    write_csv(out / "sweep.csv", header, rows)
    # wall-clock times vary between runs, so they stay out of the CSV outputs
    write_json(out / "sweep_timing.json", {"wall_ms": [round(c.wall_ms, 3) for c in cells]})
    n_ok = sum(c.ok for c in cells)
    print(f"{n_ok}/{len(cells)} cells succeeded; wrote {out / 'sweep.csv'}")
    return EXIT_OK if n_ok else EXIT_INPUT


def resolve_or_keep(P, scheme):
    # resolve "auto" up front so every row names the scheme that actually ran
    try:
        return resolve_scheme(P, scheme)
    except ConsensusFlowError:
        return scheme


def cmd_config(args):
    """Print the built-in example as a config document."""
    print(json.dumps(paper_config(unconstrained=args.unconstrained), indent=2))
    return EXIT_OK


# -- entry point ------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", help=f"output directory (the {OUT_ENV} variable takes precedence)")
    common.add_argument("--h", type=float, help="step size")
    common.add_argument("--alpha", type=float, help="coupling gain")
    common.add_argument("--t-end", type=float, dest="t_end", help="integration horizon")
    common.add_argument("--stop-tol", type=float, dest="stop_tol", help="residual threshold for convergence")
    common.add_argument("--scheme", choices=SCHEMES + ("auto",), help="time-stepping scheme")
    common.add_argument("--seed", type=int, help="seed recorded in run metadata")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (sweep only)")

    parser = argparse.ArgumentParser(prog="consensus-flow", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run an experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--set-override", choices=("whole",), help="replace every local set by the whole space")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("repro", parents=[common], help="reproduce the built-in five-agent example")
    p.add_argument("--unconstrained", action="store_true", help="drop the local interval constraints")
    p.add_argument("--no-svg", action="store_true", help="skip the SVG charts")
    p.set_defaults(func=cmd_repro)

    p = sub.add_parser("check", parents=[common], help="optimality test at a scalar point")
    p.add_argument("--config", help="instance config (default: the built-in example)")
    p.add_argument("--set-override", choices=("whole",))
    p.add_argument("--at", type=float, required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("oracle", parents=[common], help="centralised reference solution")
    p.add_argument("--config", help="instance config (default: the built-in example)")
    p.add_argument("--set-override", choices=("whole",))
    p.add_argument("--resolution", type=float, default=1e-3)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", parents=[common], help="grid of runs written to sweep.csv")
    p.add_argument("--config", help="instance config (default: the built-in example)")
    p.add_argument("--set-override", choices=("whole",))
    p.add_argument("--grid", required=True, help="e.g. 'alpha=0.5,1,2;h=1e-3;scheme=auto' or a JSON file")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("config", help="print the built-in example as a config file")
    p.add_argument("--unconstrained", action="store_true")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(str(exc))
    except NonFinite as exc:
        _err(f"numerical abort: {exc}")
    except (ConsensusFlowError, ValueError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
