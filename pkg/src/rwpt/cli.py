"""Command-line entry point.

Every command writes one JSON report (to ``--out/<command>.json`` or
stdout) and, where useful, plot data as CSV next to it.  Exit status: 0 when
the run passes its checks, 2 when it runs but fails them, 1 on a usage or
configuration error (one diagnostic line on stderr).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import asymptotic, harnack, kernel, mc, potential
from .errors import ConfigError, RwptError
from .lattice import disc, project_pi
from .report import dumps, envelope, to_jsonable
from .stepdist import (
    DistributionSpec,
    build_distribution,
    check_condition_A,
    check_strong_aperiodicity,
    moment,
)

DEFAULT_TOLERANCES = {
    "identity": 1e-8,
    "ruin": 0.05,
    "potkern_gap": 1e-3,
    "potkern_slope_rel": 0.05,
    "mc_n_se": 4.0,
    "residual": 1e-9,
}

CSV_HELP = {
    "validate": "no CSV",
    "green": "CSV: x1,x2,y1,y2,value (Green row of --x over the domain)",
    "escape": "CSV: x1,x2,exact,lower,upper (expected escape time at every domain point)",
    "hit": "CSV: x1,x2,y1,y2,value (hitting kernel) plus a JSON sidecar",
    "ruin": "CSV: x1,x2,ruin (exact ruin probability at every annulus point)",
    "potkern": "CSV: x1,x2,a,cauchy_gap (potential-kernel table)",
    "predict": "no CSV",
    "mc": "CSV: path_id,stop_index,x1,x2,steps (raw stop records)",
    "harnack-interior": "CSV: m,sup_ratio_dev,fitted_value",
    "harnack-interior-toral": "CSV: m,sup_ratio_dev,fitted_value",
    "harnack-exterior": "CSV: m,sup_ratio_dev,fitted_value",
    "harnack-exterior-toral": "CSV: m,sup_ratio_dev,fitted_value",
    "green-floor": "CSV: m,sup_ratio_dev,fitted_value (sup_ratio_dev holds the near-disc minimum)",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise ConfigError(message)


# parsing helpers ----------------------------------------------------------------

def parse_point(text) -> tuple[int, int]:
    if isinstance(text, (list, tuple)):
        vals = list(text)
    else:
        vals = [v for v in str(text).replace("(", "").replace(")", "").split(",") if v.strip()]
    if len(vals) != 2:
        raise ConfigError(f"expected a point 'x1,x2', got {text!r}")
    try:
        return int(vals[0]), int(vals[1])
    except ValueError:
        raise ConfigError(f"expected integer coordinates, got {text!r}") from None


def parse_int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from None


def _scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_dist(value) -> DistributionSpec:
    """``lazy_srw``, ``truncated_power_law:exponent=6,cutoff=64``, an inline
    JSON spec, or a spec mapping."""
    if isinstance(value, dict):
        return DistributionSpec.from_json(value)
    text = str(value).strip()
    if text.startswith("{"):
        return DistributionSpec.from_json(text)
    kind, _, rest = text.partition(":")
    params = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        k, eq, v = item.partition("=")
        if not eq:
            raise ConfigError(f"bad distribution parameter {item!r}")
        params[k.strip()] = _scalar(v.strip())
    return DistributionSpec(kind.strip(), params)


# options ---------------------------------------------------------------------------

OPTION_KEYS = ("dist", "dist_file", "r", "R", "m", "s", "K", "x", "y", "n_paths", "seed",
               "threads", "out", "tol_file", "formula", "params", "event", "eps", "j_max",
               "point_budget", "method", "cap", "n", "defect", "zoom_out", "stream")

NO_HASH = ("out", "threads", "config")


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common")
    g.add_argument("--config", help="JSON file with option values; flags win")
    g.add_argument("--dist", help="built-in name, name:key=val,..., or inline JSON spec")
    g.add_argument("--dist-file", help="JSON distribution spec file")
    g.add_argument("--seed", type=int, help="RNG seed (reported; used by mc)")
    g.add_argument("--threads", type=int, help="worker threads (default RWPT_THREADS or 1)")
    g.add_argument("--out", help="output directory for <command>.json and .csv")
    g.add_argument("--tol-file", help="JSON file overriding tolerances")
    g.add_argument("--point-budget", type=float, help="largest allowed linear system")
    g.add_argument("--method", choices=("auto", "direct", "iterative", "dense"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rwpt", description=__doc__.splitlines()[0],
                     formatter_class=argparse.RawDescriptionHelpFormatter,
                     epilog="Exit status: 0 pass, 2 experiment failure, 1 configuration error.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=f"{help_text}. {CSV_HELP[name]}.")
        _add_common(p)
        return p

    p = add("validate", "Build a distribution and report its flags and moments")
    p.add_argument("--n", type=float, help="disc radius for the entry check (default 20)")
    p.add_argument("--s", help="ring width for the entry check (default 5)")

    p = add("green", "Green function of the disc D(0, R)")
    p.add_argument("--R", type=float)
    p.add_argument("--K", type=int)
    p.add_argument("--x")
    p.add_argument("--y")

    p = add("escape", "Expected escape time from D(0, R), two routes plus closed-form bounds")
    p.add_argument("--R", type=float)
    p.add_argument("--K", type=int)
    p.add_argument("--x")

    p = add("hit", "Hitting kernel of D(0, r) by last exit and by the direct solve")
    p.add_argument("--r", type=float)
    p.add_argument("--R", type=float, help="planar ambient disc radius")
    p.add_argument("--K", type=int)
    p.add_argument("--x")

    p = add("ruin", "Probability of entering D(0, r) before leaving D(0, R)")
    p.add_argument("--r", type=float)
    p.add_argument("--R", type=float)
    p.add_argument("--K", type=int)
    p.add_argument("--x")

    p = add("potkern", "Potential kernel value, Cauchy gap and log fit")
    p.add_argument("--x")
    p.add_argument("--j-max", type=int)

    p = add("predict", "Closed-form predictor, paired with the exact value when available")
    p.add_argument("--formula", choices=asymptotic.FORMULAS)
    p.add_argument("--params", help="inline JSON of formula parameters")
    p.add_argument("--K", type=int)

    p = add("mc", "Monte Carlo estimate of an event with an exact oracle")
    p.add_argument("--event", choices=("escape", "ruin", "hit"))
    p.add_argument("--r", type=float)
    p.add_argument("--R", type=float)
    p.add_argument("--K", type=int)
    p.add_argument("--x")
    p.add_argument("--n-paths", type=int)
    p.add_argument("--cap", type=int)
    p.add_argument("--stream", type=int)

    for name, text in (("harnack-interior", "Interior Harnack ratios for the disc D(0, 4mr)"),
                       ("harnack-interior-toral", "Interior Harnack ratios on the torus"),
                       ("harnack-exterior", "Exterior Harnack ratios for the disc D(0, r+s)"),
                       ("harnack-exterior-toral", "Constrained exterior Harnack ratios on the torus"),
                       ("green-floor", "Exterior Green function floors")):
        p = add(name, text)
        p.add_argument("--r", type=int)
        p.add_argument("--m", help="comma-separated scale ratios")
        p.add_argument("--s", help="'auto' or an integer")
        p.add_argument("--K", type=int)
        if name == "green-floor":
            p.add_argument("--eps", type=float)
        if name == "harnack-interior":
            p.add_argument("--split", dest="event", action="store_const", const="split",
                           help="run the escape-first split check instead")
            p.add_argument("--no-defect", dest="defect", action="store_const", const=False)
        if name == "harnack-exterior":
            p.add_argument("--no-zoom-out", dest="zoom_out", action="store_const", const=False)
    return parser


def resolve_options(ns: argparse.Namespace) -> dict[str, Any]:
    """Merge ``--config`` JSON with explicit flags (flags win)."""
    opts: dict[str, Any] = {}
    if getattr(ns, "config", None):
        try:
            with open(ns.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {ns.config}: {exc}") from None
        unknown = set(cfg) - set(OPTION_KEYS) - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if cfg.get("command") not in (None, ns.command):
            raise ConfigError(f"config is for command {cfg['command']!r}, not {ns.command!r}")
        opts.update(cfg)
    for key in OPTION_KEYS:
        val = getattr(ns, key, None)
        if val is not None:
            opts[key] = val
    return opts


def load_tolerances(opts) -> dict[str, float]:
    tol = dict(DEFAULT_TOLERANCES)
    if opts.get("tol_file"):
        try:
            with open(opts["tol_file"]) as fh:
                extra = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read tolerances {opts['tol_file']}: {exc}") from None
        unknown = set(extra) - set(tol)
        if unknown:
            raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
        tol.update({k: float(v) for k, v in extra.items()})
    return tol


def load_distribution(opts):
    if opts.get("dist_file"):
        try:
            with open(opts["dist_file"]) as fh:
                spec = DistributionSpec.from_json(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read distribution {opts['dist_file']}: {exc}") from None
    elif opts.get("dist") is not None:
        spec = parse_dist(opts["dist"])
    else:
        raise ConfigError("--dist or --dist-file is required")
    return build_distribution(spec)


def _require(opts, *names):
    missing = [n for n in names if opts.get(n) is None]
    if missing:
        raise ConfigError("missing option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))
    return [opts[n] for n in names]


def _solver_opts(opts) -> dict:
    out = {}
    if opts.get("point_budget") is not None:
        out["point_budget"] = float(opts["point_budget"])
    if opts.get("method") is not None:
        out["method"] = opts["method"]
    return out


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# commands ----------------------------------------------------------------------------
# Each returns (result, provenance, passed, csv_writer or None).

def cmd_validate(d, opts, tol):
    n = float(opts.get("n") or 20)
    s = float(opts.get("s") or 5)
    cond = check_condition_A(d, n, s)
    flags = dict(d.flags)
    flags["strongly_aperiodic"] = bool(check_strong_aperiodicity(d))
    result = {
        "distribution": d.spec.to_json(),
        "flags": flags,
        "cov_scale": d.cov_scale,
        "gamma2": d.gamma2,
        "pi_gamma": d.pi_gamma,
        "moment_order": d.moment_order,
        "moments": {"0": moment(d, 0), "2": moment(d, 2),
                    f"{d.moment_order:g}": moment(d, d.moment_order)},
        "condition_A": cond.to_json(),
    }
    prov = {"cov_scale": "exact", "gamma2": "exact", "pi_gamma": "exact", "moments": "exact",
            "condition_A": "exact"}
    passed = all(bool(v) for k, v in flags.items()
                 if k in ("symmetric", "isotropic_cov", "strongly_aperiodic")) and cond.passed
    return result, prov, passed, None


def cmd_green(d, opts, tol):
    (R,) = _require(opts, "R")
    K = opts.get("K")
    x = parse_point(opts.get("x", "0,0"))
    y = parse_point(opts.get("y", "0,0"))
    g = kernel.green(d, disc((0, 0), R, K=K), **_solver_opts(opts))
    xi = project_pi(x, K) if K else x
    yi = project_pi(y, K) if K else y
    res = g.generator_residual(xi, yi) if g.index(xi) >= 0 and g.index(yi) >= 0 else 0.0
    sym = abs(g.value(xi, yi) - g.value(yi, xi))
    result = {"R": R, "K": K, "x": x, "y": y, "G_xy": g.value(xi, yi), "G_yx": g.value(yi, xi),
              "escape_time_x": g.escape_time(xi) if g.index(xi) >= 0 else 0.0,
              "generator_residual": res, "symmetry_gap": sym, "unknowns": g.size}
    prov = {"G_xy": "exact", "G_yx": "exact", "escape_time_x": "exact",
            "generator_residual": "exact", "symmetry_gap": "exact"}
    passed = res <= tol["residual"] and sym <= tol["residual"]

    def write(path):
        row = g.row(xi) if g.index(xi) >= 0 else np.zeros(g.size)
        _write_csv(path, ["x1", "x2", "y1", "y2", "value"],
                   ((xi[0], xi[1], int(p[0]), int(p[1]), float(v)) for p, v in zip(g.points, row)))
    return result, prov, passed, write


def cmd_escape(d, opts, tol):
    (R,) = _require(opts, "R")
    K = opts.get("K")
    x = parse_point(opts.get("x", "0,0"))
    xi = project_pi(x, K) if K else x
    B = disc((0, 0), R, K=K)
    g = kernel.green(d, B, **_solver_opts(opts))
    pts, direct = kernel.escape_times_direct(d, B, **_solver_opts(opts))
    via_green = g.chain.solver.solve(np.ones(g.size))
    gap = float(np.abs(via_green - direct).max())
    pred = asymptotic.predict("escape_bounds", {"dist": d, "n": R, "x": xi})
    lo = (R * R - (pts.astype(float) ** 2).sum(1)) / d.gamma2
    hi = lo + 2 * R + 1
    viol = int(((direct < lo - 1e-9) | (direct > hi + 1e-9)).sum())
    t_x = g.escape_time(xi)
    result = {"R": R, "K": K, "x": x, "escape_time": t_x,
              "escape_time_direct": float(direct[g.index(xi)]), "max_route_gap": gap,
              "bounds": list(pred.bounds), "bounds_hold_at_x": pred.bounds[0] - 1e-9 <= t_x <= pred.bounds[1] + 1e-9,
              "bound_violations": viol, "points": int(len(pts))}
    prov = {"escape_time": "exact", "escape_time_direct": "exact", "max_route_gap": "exact",
            "bounds": "predicted", "bound_violations": "exact"}
    passed = gap <= tol["identity"]

    def write(path):
        _write_csv(path, ["x1", "x2", "exact", "lower", "upper"],
                   ((int(p[0]), int(p[1]), float(v), float(a), float(b))
                    for p, v, a, b in zip(pts, direct, lo, hi)))
    return result, prov, passed, write


def cmd_hit(d, opts, tol):
    r, x = _require(opts, "r", "x")
    K = opts.get("K")
    x = parse_point(x)
    A = disc((0, 0), r, K=K)
    if K is None:
        (R,) = _require(opts, "R")
        ambient = disc((0, 0), R)
    else:
        ambient = None
    so = _solver_opts(opts)
    le = kernel.hitting_distribution_lastexit(d, A, ambient, x, **so)
    di = kernel.hitting_distribution_direct(d, A, ambient, x, **so)
    diff = le.sup_diff(di)
    result = {"r": r, "K": K, "R": opts.get("R"), "x": x, "total_mass": le.total,
              "lost_mass": le.lost_mass, "sup_diff_lastexit_direct": diff,
              "n_targets": int(len(le.points))}
    prov = {"total_mass": "exact", "lost_mass": "exact", "sup_diff_lastexit_direct": "exact"}
    passed = diff <= tol["identity"]

    def write(path):
        le.dump(path, path.with_suffix(".meta.json"), dist=d)
    return result, prov, passed, write


def cmd_ruin(d, opts, tol):
    r, R, x = _require(opts, "r", "R", "x")
    K = opts.get("K")
    x = parse_point(x)
    so = _solver_opts(opts)
    exact = kernel.ruin_probability(d, r, R, x, K=K, **so)
    formula = "ruin_toral" if K else "ruin_planar"
    params = {"dist": d, "r": r, "R": R, "x": x, "form": "ruin"}
    if K:
        params["K"] = K
    pred = asymptotic.predict(formula, params)
    rep = asymptotic.compare(pred, exact, tolerance=tol["ruin"], inputs=params)
    result = {"r": r, "R": R, "K": K, "x": x, "predicted": rep.predicted, "exact": exact,
              "abs_error": rep.abs_error, "tolerance": rep.tolerance_used,
              "error_term": rep.error_term, "pass": rep.passed}
    prov = {"predicted": "predicted", "exact": "exact", "abs_error": "exact",
            "tolerance": "fitted", "error_term": "predicted"}

    def write(path):
        pts, h = kernel.ruin_field(d, r, R, K=K, **so)
        _write_csv(path, ["x1", "x2", "ruin"], ((int(p[0]), int(p[1]), float(v)) for p, v in zip(pts, h)))
    return result, prov, rep.passed, write


def cmd_potkern(d, opts, tol):
    x = parse_point(opts.get("x", "1,0"))
    j_max = int(opts.get("j_max") or potential.DEFAULT_J_MAX)
    value, gap = potential.potential_kernel_report(d, x, j_max=j_max)
    fit = potential.fit_kernel_constants(d, [8, 16, 32, 64])
    target = 2.0 / d.pi_gamma
    slope_rel = abs(fit.slope - target) / target
    result = {"x": x, "j_max": j_max, "a": value, "cauchy_gap": gap,
              "fit": fit.to_json(), "target_slope": target, "slope_rel_error": slope_rel}
    prov = {"a": "exact", "cauchy_gap": "exact", "fit": "fitted", "target_slope": "predicted",
            "slope_rel_error": "fitted"}
    passed = gap <= tol["potkern_gap"] and slope_rel <= tol["potkern_slope_rel"]

    def write(path):
        potential.potential_table(d, j_max=j_max).dump(path, path.with_suffix(".meta.json"))
    return result, prov, passed, write


def cmd_predict(d, opts, tol):
    (formula,) = _require(opts, "formula")
    raw = opts.get("params") or "{}"
    try:
        params = json.loads(raw) if isinstance(raw, str) else dict(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--params is not valid JSON: {exc}") from None
    for key in ("x", "y", "z"):
        if key in params:
            params[key] = parse_point(params[key])
    if opts.get("K") is not None:
        params.setdefault("K", opts["K"])
    params["dist"] = d
    pred = asymptotic.predict(formula, params)
    try:
        exact = asymptotic.exact_value(formula, d, params)
    except (ValueError, KeyError):
        exact = None
    result = {"formula": formula, "predicted": pred.value, "direction": pred.direction,
              "bounds": pred.bounds, "error_term": pred.error, "notes": pred.notes}
    prov = {"predicted": "predicted", "bounds": "predicted", "error_term": "predicted"}
    passed = True
    if exact is not None:
        rep = asymptotic.compare(pred, exact, inputs=params)
        result.update({"exact": exact, "abs_error": rep.abs_error,
                       "tolerance": rep.tolerance_used, "consistent": rep.passed})
        prov.update({"exact": "exact", "abs_error": "exact", "tolerance": "fitted"})
        passed = rep.passed
    return result, prov, passed, None


def cmd_mc(d, opts, tol):
    event, x = _require(opts, "event", "x")
    K = opts.get("K")
    x = parse_point(x)
    n_paths = int(opts.get("n_paths") or 10_000)
    seed = int(opts.get("seed") or 0)
    stream = int(opts.get("stream") or 0)
    so = _solver_opts(opts)
    if event == "escape":
        (R,) = _require(opts, "R")
        ev = mc.EventSpec(mc.escape(disc((0, 0), R, K=K)), statistic="steps", label=f"escape D(0,{R:g})")
        g = kernel.green(d, disc((0, 0), R, K=K), **so)
        exact = g.escape_time(project_pi(x, K) if K else x)
    elif event == "ruin":
        r, R = _require(opts, "r", "R")
        ev = mc.EventSpec(mc.first_of([mc.hit(disc((0, 0), r, K=K)), mc.escape(disc((0, 0), R, K=K))]),
                          success=(0,), label=f"enter D(0,{r:g}) before leaving D(0,{R:g})")
        exact = kernel.ruin_probability(d, r, R, x, K=K, **so)
    else:
        (r,) = _require(opts, "r")
        if K is None:
            raise ConfigError("mc --event hit needs --K (toral target)")
        # probability of entering the target at a cell with positive first coordinate
        A = disc((0, 0), r, K=K)
        ev = mc.EventSpec(mc.hit(A), label=f"hit D(0,{r:g}) on torus K={K}")
        hk = kernel.hitting_distribution_direct(d, A, None, x, **so)
        exact = float(hk.masses[hk.points[:, 0] > 0].sum())
    sampler = mc.PathSampler(d, K=K, seed=seed, stream=stream)
    batch = mc.run(sampler, x, ev.stop, n_paths, cap=int(opts.get("cap") or mc.DEFAULT_CAP),
                   threads=opts.get("threads"))
    if event == "hit":
        proj = project_pi(batch.position, K)
        vals = (proj[:, 0] > 0).astype(float)
        mean = float(vals.mean())
        se = math.sqrt(max(mean * (1 - mean), 0.0) / n_paths)
        rep = mc.EstimateReport(ev.describe() + ", landing with x1 > 0", n_paths, mean, se,
                                (mean - 1.96 * se, mean + 1.96 * se), seed, stream,
                                int(batch.capped.sum()))
    else:
        rep = mc.summarize(batch, ev, seed, stream)
    ok = rep.within(exact, tol["mc_n_se"])
    result = {"event": event, "estimate": rep.to_json(), "exact": exact,
              "z": (rep.estimate - exact) / rep.se if rep.se > 0 else 0.0, "within": ok}
    prov = {"estimate": "mc", "exact": "exact", "z": "mc"}

    def write(path):
        batch.to_csv(path)
    return result, prov, ok, write


def _harnack_config(d, opts) -> harnack.HarnackConfig:
    r, m = _require(opts, "r", "m")
    s = opts.get("s", "auto")
    s = "auto" if s in (None, "auto") else int(s)
    kw = dict(dist=d, r=int(r), m_list=tuple(parse_int_list(m)), s=s, K=opts.get("K"),
              seed=int(opts.get("seed") or 0))
    if opts.get("eps") is not None:
        kw["eps"] = float(opts["eps"])
    if opts.get("point_budget") is not None:
        kw["point_budget"] = float(opts["point_budget"])
    if opts.get("method") is not None:
        kw["method"] = opts["method"]
    if opts.get("defect") is not None:
        kw["defect"] = bool(opts["defect"])
    if opts.get("zoom_out") is not None:
        kw["zoom_out"] = bool(opts["zoom_out"])
    return harnack.HarnackConfig(**kw)


def _harnack_cmd(fn: Callable):
    def run(d, opts, tol):
        rep = fn(_harnack_config(d, opts))
        out = rep.to_json()
        out.pop("config", None)
        prov = {"rows": "exact", "fit": "fitted", "checks": "exact"}
        return out, prov, rep.passed, rep.to_csv
    return run


def _interior_cmd(d, opts, tol):
    fn = harnack.interior_split if opts.get("event") == "split" else harnack.interior_harnack
    return _harnack_cmd(fn)(d, opts, tol)


COMMANDS: dict[str, Callable] = {
    "validate": cmd_validate,
    "green": cmd_green,
    "escape": cmd_escape,
    "hit": cmd_hit,
    "ruin": cmd_ruin,
    "potkern": cmd_potkern,
    "predict": cmd_predict,
    "mc": cmd_mc,
    "harnack-interior": _interior_cmd,
    "harnack-interior-toral": _harnack_cmd(harnack.interior_harnack_toral),
    "harnack-exterior": _harnack_cmd(harnack.exterior_harnack),
    "harnack-exterior-toral": _harnack_cmd(harnack.exterior_harnack_toral),
    "green-floor": _harnack_cmd(harnack.green_floor_probe),
}


def run(argv: Sequence[str] | None = None, stdout=None) -> int:
    """Parse ``argv``, run one command, emit artifacts; returns the exit code."""
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise ConfigError("a command is required; see rwpt --help")
        opts = resolve_options(ns)
        tol = load_tolerances(opts)
        if opts.get("threads") is None and os.environ.get("RWPT_THREADS"):
            opts["threads"] = int(os.environ["RWPT_THREADS"])
        d = load_distribution(opts)
        result, prov, passed, write_csv = COMMANDS[ns.command](d, opts, tol)
    except (ConfigError, RwptError, ValueError, KeyError, TypeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"rwpt: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    config = {k: v for k, v in opts.items() if k not in NO_HASH}
    config["command"] = ns.command
    config["dist"] = d.spec.to_json()
    config.pop("dist_file", None)
    config["tolerances"] = tol
    report = envelope(ns.command, to_jsonable(config), result, prov, passed,
                      seed=opts.get("seed"))
    text = dumps(report)
    if opts.get("out"):
        out = Path(opts["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{ns.command}.json").write_text(text)
        if write_csv is not None:
            write_csv(out / f"{ns.command}.csv")
        print(f"{ns.command}: {'pass' if passed else 'FAIL'} -> {out}", file=stdout)
    else:
        stdout.write(text)
    return 0 if passed else 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
