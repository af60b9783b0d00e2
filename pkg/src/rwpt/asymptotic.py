"""Closed-form predictors for escape times, ruin probabilities, jump bounds
and Green's function values, paired with exact evaluations.

Every predictor returns a :class:`Prediction` carrying the leading term,
its type (approximate equality or one-sided bound) and a symbolic error
descriptor.  Multiplicative constants that are only known to exist must be
supplied (fitted or configured); they are never invented here.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import MissingFittedConstant
from .potential import (  # noqa: F401  re-exported
    KernelFit,
    PotentialKernelTable,
    fit_kernel_constants,
    potential_kernel,
    potential_kernel_report,
    potential_table,
)
from .stepdist import StepDistribution, moment

FORMULAS = (
    "log_shift",
    "escape_bounds",
    "large_jump",
    "toral_exit_mismatch",
    "ruin_center",
    "ruin_planar",
    "ruin_toral",
    "annulus_overjump",
    "green_center",
    "green_x0",
    "green_xz_bound",
    "ext_green_bound",
    "boundary_sandwich",
)


@dataclass
class Prediction:
    """Leading-term prediction.

    ``direction`` is ``"approx"`` for asymptotic equalities, ``"upper"`` or
    ``"lower"`` for one-sided bounds and ``"between"`` for two-sided ones
    (then ``bounds`` holds ``(low, high)``).  ``error`` maps a symbolic
    order such as ``"r^-1/4"`` to its value at the instance.
    """

    formula: str
    value: float
    direction: str = "approx"
    bounds: tuple[float, float] | None = None
    error: dict[str, float] = field(default_factory=dict)
    notes: str = ""

    def __float__(self) -> float:
        return float(self.value)

    @property
    def error_scale(self) -> float:
        return float(sum(self.error.values()))


@dataclass
class PredictorReport:
    formula: str
    inputs: dict
    predicted: float
    exact: float
    abs_error: float
    rel_error: float
    tolerance_used: float
    passed: bool
    direction: str = "approx"
    bounds: tuple[float, float] | None = None
    error_term: dict = field(default_factory=dict)
    notes: str = ""

    def to_json(self) -> dict:
        out = asdict(self)
        out["provenance"] = {"predicted": "predicted", "exact": "exact",
                             "tolerance_used": "fitted"}
        return out


def _need(params: Mapping[str, Any], *names: str) -> list[Any]:
    missing = [n for n in names if params.get(n) is None]
    if missing:
        raise MissingFittedConstant(
            f"missing constant(s) {', '.join(missing)}; supply fitted or configured values"
        )
    return [params[n] for n in names]


def _norm(x) -> float:
    return math.hypot(float(x[0]), float(x[1]))


def _gamma2(params) -> float:
    d = params.get("dist")
    if isinstance(d, StepDistribution):
        return d.gamma2
    (g,) = _need(params, "gamma2")
    return float(g)


def _pi_gamma(params) -> float:
    d = params.get("dist")
    if isinstance(d, StepDistribution):
        return d.pi_gamma
    (p,) = _need(params, "pi_gamma")
    return float(p)


def _moment_pair(params) -> tuple[float, float]:
    """``(M, E|X|^M)`` from the distribution or explicit parameters."""
    d = params.get("dist")
    M = params.get("M")
    if isinstance(d, StepDistribution):
        M = float(M if M is not None else d.moment_order)
        return M, moment(d, M)
    M, CM = _need(params, "M", "C_M")
    return float(M), float(CM)


def _log_shift(p):
    x, y = p["x"], p["y"]
    nx, ny = _norm(x), _norm(y)
    if "m" in p:
        return Prediction("log_shift", math.log(ny), error={"m^-1": 1.0 / p["m"]})
    return Prediction("log_shift", math.log(ny), error={"|x|/|y|": nx / ny})


def _escape_bounds(p):
    n = float(p["n"])
    x = p.get("x", (0, 0))
    g2 = _gamma2(p)
    lo = (n * n - _norm(x) ** 2) / g2
    hi = lo + 2 * n + 1
    err = {}
    if p.get("K") is not None:
        M, _ = _moment_pair(p)
        err["K^-M n^4"] = float(p["K"]) ** (-M) * n ** 4
    return Prediction("escape_bounds", lo, "between", (lo, hi), err)


def _large_jump(p):
    K, n = float(p["K"]), float(p["n"])
    M, CM = _moment_pair(p)
    bound = CM / (K - 2 * n) ** M
    return Prediction("large_jump", bound, "upper", (0.0, bound), {"K^-M": K ** (-M)},
                      notes="Markov inequality bound on P(|X1| > K - 2n)")


def _toral_exit_mismatch(p):
    K, n = float(p["K"]), float(p["n"])
    M, CM = _moment_pair(p)
    form = p.get("form", "calibrated")
    if form == "calibrated":
        # a mismatch needs one jump longer than K - 2n before the planar exit
        (tail, esc) = _need(p, "tail_prob", "escape_time")
        bound = float(tail) * float(esc)
        notes = "P(|X1| > K-2n) * E^x T"
    else:
        (c,) = _need(p, "c")
        bound = float(c) * K ** (-M) * n * n
        notes = "c K^-M n^2"
    return Prediction("toral_exit_mismatch", bound, "upper", (0.0, bound),
                      {"K^-M n^2": K ** (-M) * n * n}, notes)


def _ruin_center(p):
    n = float(p["n"])
    nx = _norm(p["x"])
    val = math.log(n / nx) / math.log(n)
    return Prediction("ruin_center", val,
                      error={"|x|^-1/4 / log n": nx ** -0.25 / math.log(n),
                             "1/log n": val / math.log(n)})


def _ruin_value(p, name):
    r, R = float(p["r"]), float(p["R"])
    nx = _norm(p["x"])
    form = p.get("form", "ruin")
    if form == "ruin":
        val = math.log(R / nx) / math.log(R / r)
    elif form == "success":
        val = math.log(nx / r) / math.log(R / r)
    else:
        raise ValueError("form must be 'ruin' or 'success'")
    err = {"r^-1/4 / log(R/r)": r ** -0.25 / math.log(R / r)}
    if name == "ruin_toral":
        M, _ = _moment_pair(p)
        (K,) = _need(p, "K")
        err["K^-M R^2"] = float(K) ** (-M) * R * R
    return Prediction(name, val, error=err, notes=f"{form} form")


def _annulus_overjump(p):
    n, s = float(p["n"]), float(p["s"])
    M, _ = _moment_pair(p)
    (c,) = _need(p, "c")
    if p.get("form", "escape") == "escape":
        shape = max(s ** (-M + 2), n ** (-M + 2))
        key = "s^(2-M) v n^(2-M)"
    else:
        shape = n * n * math.log(n) ** 2 * (s ** (-M) + n ** (-M))
        key = "n^2 log(n)^2 (s^-M + n^-M)"
    return Prediction("annulus_overjump", float(c) * shape, "upper",
                      (0.0, float(c) * shape), {key: shape})


def _green_center(p):
    n = float(p["n"])
    (Cp,) = _need(p, "C_prime")
    val = 2.0 / _pi_gamma(p) * math.log(n) + float(Cp)
    err = {"n^-1/4": n ** -0.25}
    if p.get("K") is not None:
        M, _ = _moment_pair(p)
        err["K^-M n^2"] = float(p["K"]) ** (-M) * n * n
    return Prediction("green_center", val, error=err)


def _green_x0(p):
    n = float(p["n"])
    nx = _norm(p["x"])
    (C,) = _need(p, "C")
    val = 2.0 / _pi_gamma(p) * math.log(n / nx) + float(C)
    return Prediction("green_x0", val, error={"|x|^-1/4": nx ** -0.25})


def _green_xz_bound(p):
    n = float(p["n"])
    (c,) = _need(p, "c")
    b = float(c) * math.log(n)
    return Prediction("green_xz_bound", b, "upper", (0.0, b))


def _ext_green_bound(p):
    nx = _norm(p["x"])
    (c,) = _need(p, "c_j")
    b = float(c) * math.log(nx)
    return Prediction("ext_green_bound", b, "upper", (0.0, b))


def _boundary_sandwich(p):
    n = float(p["n"])
    rho = max(n - _norm(p["x"]), 1.0)
    c1, c2 = _need(p, "c1", "c2")
    lo, hi = float(c1) * rho / n, float(c2) * rho / n
    return Prediction("boundary_sandwich", lo, "between", (lo, hi),
                      notes="rho(x) read as the distance n - |x| to the boundary")


_DISPATCH: dict[str, Callable[[Mapping[str, Any]], Prediction]] = {
    "log_shift": _log_shift,
    "escape_bounds": _escape_bounds,
    "large_jump": _large_jump,
    "toral_exit_mismatch": _toral_exit_mismatch,
    "ruin_center": _ruin_center,
    "ruin_planar": lambda p: _ruin_value(p, "ruin_planar"),
    "ruin_toral": lambda p: _ruin_value(p, "ruin_toral"),
    "annulus_overjump": _annulus_overjump,
    "green_center": _green_center,
    "green_x0": _green_x0,
    "green_xz_bound": _green_xz_bound,
    "ext_green_bound": _ext_green_bound,
    "boundary_sandwich": _boundary_sandwich,
}


def predict(formula_id: str, params: Mapping[str, Any]) -> Prediction:
    """Evaluate one closed-form predictor.

    Raises
    ------
    MissingFittedConstant
        When a required constant (``C_prime``, ``C``, ``c``, ``c_j``,
        ``c1``, ``c2``) is not supplied.
    """
    try:
        fn = _DISPATCH[formula_id]
    except KeyError:
        raise ValueError(f"unknown formula {formula_id!r}; known: {FORMULAS}") from None
    return fn(params)


def compare(pred: Prediction, exact: float, tolerance: float | None = None,
            calibration: float = 1.0, inputs: Mapping[str, Any] | None = None) -> PredictorReport:
    """Pair a prediction with an exact value.

    For approximate equalities the tolerance defaults to ``calibration``
    times the summed error scale and ``passed`` means
    ``|predicted - exact| <= tolerance``.  For bounds, ``passed`` means the
    exact value lies on the stated side (``tolerance`` is extra slack).
    """
    exact = float(exact)
    diff = abs(pred.value - exact)
    rel = diff / abs(exact) if exact != 0 else math.inf if diff else 0.0
    if pred.direction == "approx":
        tol = float(tolerance) if tolerance is not None else calibration * pred.error_scale
        ok = diff <= tol
    else:
        tol = float(tolerance or 0.0)
        lo, hi = pred.bounds if pred.bounds is not None else (-math.inf, math.inf)
        if pred.direction == "upper":
            ok = exact <= hi + tol
        elif pred.direction == "lower":
            ok = exact >= pred.value - tol
        else:
            ok = lo - tol <= exact <= hi + tol
    clean = {k: _jsonable(v) for k, v in (inputs or {}).items() if k != "dist"}
    return PredictorReport(pred.formula, clean, float(pred.value), exact, diff, rel, tol, bool(ok),
                           pred.direction, pred.bounds, dict(pred.error), pred.notes)


def _jsonable(v):
    if isinstance(v, (tuple, list, np.ndarray)):
        return [_jsonable(u) for u in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


# exact evaluations -----------------------------------------------------------

def exact_value(formula_id: str, d: StepDistribution, params: Mapping[str, Any], **opts) -> float:
    """Exact counterpart of a predictor computed with the kernel module.

    ``opts`` (``point_budget``, ``method``, ...) go to the solver."""
    from . import kernel
    from .lattice import disc

    p = dict(params)
    if formula_id == "log_shift":
        x, y = p["x"], p["y"]
        return math.log(_norm((y[0] - x[0], y[1] - x[1])))
    if formula_id == "escape_bounds":
        K = p.get("K")
        g = kernel.green(d, disc((0, 0), p["n"], K=K), **opts)
        return kernel.expected_escape_time(g, p.get("x", (0, 0)))
    if formula_id == "large_jump":
        return d.tail_prob(float(p["K"]) - 2 * float(p["n"]))
    if formula_id == "annulus_overjump":
        # first exit from D(0,n) lands beyond the band n <= |y| < n + s
        n, s = float(p["n"]), float(p["s"])
        g = kernel.green(d, disc((0, 0), n, K=p.get("K")), **opts)
        pts, mass = g.exit_distribution(p.get("x", (0, 0)))
        far = np.hypot(pts[:, 0], pts[:, 1]) >= n + s
        return float(mass[far].sum())
    if formula_id in ("ruin_planar", "ruin_toral"):
        K = p.get("K") if formula_id == "ruin_toral" else None
        v = kernel.ruin_probability(d, p["r"], p["R"], p["x"], K=K, **opts)
        return v if p.get("form", "ruin") == "ruin" else 1.0 - v
    if formula_id == "ruin_center":
        g = kernel.green(d, disc((0, 0), p["n"], K=p.get("K")), **opts)
        return g.value(p["x"], (0, 0)) / g.value((0, 0), (0, 0))
    if formula_id == "green_center":
        g = kernel.green(d, disc((0, 0), p["n"], K=p.get("K")), **opts)
        return g.value((0, 0), (0, 0))
    if formula_id in ("green_x0",):
        g = kernel.green(d, disc((0, 0), p["n"], K=p.get("K")), **opts)
        return g.value(p["x"], (0, 0))
    if formula_id in ("green_xz_bound", "boundary_sandwich"):
        g = kernel.green(d, disc((0, 0), p["n"], K=p.get("K")), **opts)
        return g.value(p["x"], p.get("z", (0, 0)))
    raise ValueError(f"no exact evaluator for {formula_id!r}")


def fit_green_center(d: StepDistribution, ns, K: int | None = None) -> dict[str, float]:
    """Exact ``G_{D(0,n)}(0,0)`` regressed on ``log n``.

    Returns the free slope, its ``r^2``, and the intercept ``C'`` with the
    slope pinned to ``2/pi_Gamma``.
    """
    from . import kernel
    from .lattice import disc

    ns = [float(n) for n in ns]
    vals = np.array([kernel.green(d, disc((0, 0), n, K=K)).value((0, 0), (0, 0)) for n in ns])
    x = np.log(ns)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    resid = vals - A @ coef
    ss = float(((vals - vals.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    pinned = float(np.mean(vals - 2.0 / d.pi_gamma * x))
    return {"slope": float(coef[0]), "intercept": float(coef[1]), "r2": r2,
            "C_prime": pinned, "values": vals.tolist(), "ns": ns,
            "target_slope": 2.0 / d.pi_gamma}


def fit_bound_constant(exact, shape, safety: float = 1.0) -> float:
    """Smallest ``c`` with ``exact <= c * shape`` on a calibration grid,
    times ``safety``."""
    exact = np.asarray(exact, dtype=float)
    shape = np.asarray(shape, dtype=float)
    ok = shape > 0
    if not ok.any():
        return 0.0
    return safety * float(np.max(exact[ok] / shape[ok]))
