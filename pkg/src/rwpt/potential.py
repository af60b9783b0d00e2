"""Potential kernel ``a(x) = sum_j [p_j(0) - p_j(x)]`` by spectral partial sums.

The ``J``-step partial sum is evaluated on an ``L x L`` periodic grid through
the closed form of the geometric series of the characteristic function,

    a_J(x) = L^-2 sum_theta (1 - cos theta.x) (1 - phi^(J+1)) / (1 - phi),

which equals the sum of ``J + 1`` convolution powers as long as no mass
wraps around the grid.  Wrap-around is monitored with a Gaussian tail
estimate and reported as :class:`GridLeakage`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import special

from .errors import GridLeakage, InsufficientSpread, NotAperiodic
from .stepdist import StepDistribution

LEAKAGE_TOL = 1e-12
ACCELERATIONS = ("tail", "richardson", "none")
DEFAULT_J_MAX = 2 ** 16
DEFAULT_TABLE_RADIUS = 64


def _ein(z: np.ndarray) -> np.ndarray:
    """Entire exponential integral ``int_0^z (1 - e^-t)/t dt``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z <= 1.0
    zs = z[small]
    term = zs.copy()
    acc = term.copy()
    for k in range(2, 30):
        term = -term * zs * (k - 1) / (k * k)
        acc += term
    out[small] = acc
    zl = z[~small]
    out[~small] = special.exp1(zl) + np.log(zl) + np.euler_gamma
    return out


def _leakage(d: StepDistribution, J: int, L: int, radius: int) -> float:
    """Gaussian estimate of the mass that travels further than the grid
    half-width minus ``radius`` within ``J`` steps (per coordinate)."""
    t = L / 2 - radius - float(np.abs(d.offsets).max())
    if t <= 0:
        return 1.0
    sigma = math.sqrt(d.cov_scale * J)
    return 2.0 * float(special.erfc(t / (sigma * math.sqrt(2))))


def grid_size_for(d: StepDistribution, J: int, radius: int) -> int:
    """Smallest FFT-friendly even grid keeping the leakage below tolerance."""
    sigma = math.sqrt(d.cov_scale * J)
    # erfc(z / sqrt 2) = 5e-13 at z ~ 7.2
    half = 7.5 * sigma + radius + float(np.abs(d.offsets).max()) + 1
    L = sfft.next_fast_len(int(math.ceil(2 * half)), real=True)
    return L + (L % 2)


def _one_minus_phi(d: StepDistribution, L: int) -> np.ndarray:
    """``1 - phi(theta)`` on the half-spectrum grid ``(L, L//2 + 1)``."""
    t1 = 2 * np.pi * np.fft.fftfreq(L)[:, None]
    t2 = 2 * np.pi * np.fft.rfftfreq(L)[None, :]
    if len(d.offsets) <= 64:
        out = np.zeros((L, L // 2 + 1))
        for (v1, v2), p in zip(d.offsets, d.probs):
            if v1 == 0 and v2 == 0:
                continue
            out += 2.0 * p * np.sin((t1 * v1 + t2 * v2) / 2.0) ** 2
        return out
    grid = np.zeros((L, L))
    grid[d.offsets[:, 0] % L, d.offsets[:, 1] % L] = d.probs
    return 1.0 - sfft.rfft2(grid).real


def _partial_sum_fields(omega: np.ndarray, Js, L: int) -> dict[int, np.ndarray]:
    """Real-space ``sum_{j<=J} p_j`` on the periodic grid for each ``J``."""
    phi = 1.0 - omega
    zero = omega == 0
    safe = np.where(zero, 1.0, omega)
    pos = phi > 0
    log_phi = np.log1p(-np.where(pos, omega, 0.0))
    out = {}
    for J in Js:
        S = np.empty_like(omega)
        S[pos] = -np.expm1((J + 1) * log_phi[pos]) / safe[pos]
        neg = ~pos
        S[neg] = (1.0 - np.power(phi[neg], J + 1)) / safe[neg]
        S[zero] = J + 1
        out[J] = sfft.irfft2(S, s=(L, L))
    return out


def _gaussian_tail(d: StepDistribution, r2: np.ndarray, J: int) -> np.ndarray:
    """``sum_{j>J} [p_j(0) - p_j(x)]`` from the local limit theorem."""
    z = r2 / (2.0 * d.cov_scale * (J + 0.5))
    return _ein(z) / d.pi_gamma


@dataclass
class KernelFit:
    slope: float
    intercept: float
    r2: float
    n_points: int
    radii: tuple = ()

    def to_json(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "n_points": self.n_points, "radii": list(self.radii)}


@dataclass
class PotentialKernelTable:
    """Tabulated ``a(x)`` on the box ``|x_i| <= radius`` with an asymptotic
    extension ``(2/pi_Gamma) log|x| + C + (lam + kap cos 4 phi)/|x|^2``
    fitted on the outer ring of the table."""

    dist: StepDistribution
    j_max: int
    grid: int
    radius: int
    accel: str
    values: np.ndarray
    gaps: np.ndarray
    extension: tuple[float, float, float] = (0.0, 0.0, 0.0)
    fitted: dict = field(default_factory=dict)

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.int64)
        single = pts.ndim == 1
        pts = pts.reshape(-1, 2)
        out = np.empty(len(pts))
        w = self.radius
        inside = (np.abs(pts) <= w).all(1)
        p = pts[inside]
        out[inside] = self.values[p[:, 0] + w, p[:, 1] + w]
        if (~inside).any():
            out[~inside] = self.asymptotic(pts[~inside])
        return out[0] if single else out

    def value(self, x) -> float:
        return float(self(np.asarray(x)))

    def gap(self, x) -> float:
        w = self.radius
        if max(abs(x[0]), abs(x[1])) > w:
            raise KeyError(f"{tuple(x)} is outside the table")
        return float(self.gaps[x[0] + w, x[1] + w])

    def asymptotic(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        r2 = (pts ** 2).sum(1)
        C, lam, kap = self.extension
        cos4 = np.cos(4 * np.arctan2(pts[:, 1], pts[:, 0]))
        return np.log(r2) / self.dist.pi_gamma + C + (lam + kap * cos4) / r2

    def points(self) -> np.ndarray:
        w = self.radius
        xs = np.arange(-w, w + 1)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], 1)

    def dump(self, csv_path, meta_path=None) -> None:
        """CSV ``x1,x2,a,cauchy_gap`` and a JSON metadata sidecar."""
        pts = self.points()
        vals = self.values.ravel()
        gaps = self.gaps.ravel()
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "x2", "a", "cauchy_gap"])
            for (x1, x2), a, g in zip(pts, vals, gaps):
                w.writerow([int(x1), int(x2), repr(float(a)), repr(float(g))])
        if meta_path is not None:
            with open(meta_path, "w") as fh:
                json.dump(self.metadata(), fh, indent=2, sort_keys=True)

    def metadata(self) -> dict:
        C, lam, kap = self.extension
        return {
            "dist": self.dist.spec.to_json(),
            "j_max": self.j_max,
            "grid": self.grid,
            "radius": self.radius,
            "accel": self.accel,
            "extension": {"C": C, "lambda": lam, "kappa": kap},
            "fitted": self.fitted,
        }


def _require_aperiodic(d: StepDistribution) -> None:
    if not d.flags.get("strongly_aperiodic", False):
        raise NotAperiodic("the potential kernel series needs a strongly aperiodic walk")
    d.require_table()


def potential_table(d: StepDistribution, radius: int = DEFAULT_TABLE_RADIUS,
                    j_max: int | None = None, accel: str = "tail",
                    grid: int | None = None) -> PotentialKernelTable:
    """Tabulate ``a`` on ``|x_i| <= radius``.

    Parameters
    ----------
    j_max : int, optional
        Number of convolution powers.  Defaults to the larger of ``2**16``
        and the power of two above ``2 radius^2 / c``.
    accel : {"tail", "richardson", "none"}
        ``tail`` adds the Gaussian estimate of the omitted terms, which
        decay like ``|x|^2 / j^2``.  ``richardson`` combines ``a_J`` and
        ``a_{J/2}`` assuming a ``1/J`` error.
    grid : int, optional
        Periodic grid side.  Raises :class:`GridLeakage` if too small.
    """
    if accel not in ACCELERATIONS:
        raise ValueError(f"accel must be one of {ACCELERATIONS}")
    radius = int(radius)
    if j_max is None:
        need = 2 * radius * radius / max(d.cov_scale, 1e-12)
        j_max = max(DEFAULT_J_MAX, 1 << int(math.ceil(math.log2(max(need, 1)))))
    return _cached_table(d, radius, int(j_max), accel, grid)


@lru_cache(maxsize=16)
def _cached_table(d, radius, j_max, accel, grid) -> PotentialKernelTable:
    _require_aperiodic(d)
    L = grid or grid_size_for(d, j_max, radius)
    leak = _leakage(d, j_max, L, radius)
    if leak > LEAKAGE_TOL:
        raise GridLeakage(f"grid {L} leaks {leak:.2e} of the mass for j_max={j_max}")
    omega = _one_minus_phi(d, L)
    Js = [j_max, j_max // 2] + ([j_max // 4] if accel == "richardson" else [])
    fields = _partial_sum_fields(omega, Js, L)
    idx = np.arange(-radius, radius + 1) % L
    r = np.arange(-radius, radius + 1)
    r2 = (r[:, None] ** 2 + r[None, :] ** 2).astype(float)

    def a(J):
        F = fields[J]
        return F[0, 0] - F[np.ix_(idx, idx)]

    if accel == "tail":
        cur = a(j_max) + _gaussian_tail(d, r2, j_max)
        prev = a(j_max // 2) + _gaussian_tail(d, r2, j_max // 2)
    elif accel == "richardson":
        aJ, aH, aQ = a(j_max), a(j_max // 2), a(j_max // 4)
        cur, prev = 2 * aJ - aH, 2 * aH - aQ
    else:
        cur, prev = a(j_max), a(j_max // 2)
    del fields
    cur[radius, radius] = 0.0
    # exact symmetrisation removes FFT round-off asymmetry
    cur = 0.5 * (cur + cur[::-1, ::-1])
    table = PotentialKernelTable(d, j_max, L, radius, accel, cur, np.abs(cur - prev))
    table.extension = _fit_extension(table)
    return table


def _fit_extension(table: PotentialKernelTable) -> tuple[float, float, float]:
    pts = table.points()
    r2 = (pts ** 2).sum(1).astype(float)
    w = table.radius
    ring = (r2 >= (w / 2) ** 2) & (r2 <= w * w)
    p = pts[ring].astype(float)
    rr = r2[ring]
    y = table.values.ravel()[ring] - np.log(rr) / table.dist.pi_gamma
    cos4 = np.cos(4 * np.arctan2(p[:, 1], p[:, 0]))
    X = np.column_stack([np.ones_like(rr), 1 / rr, cos4 / rr])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return tuple(float(c) for c in coef)


def potential_kernel(d: StepDistribution, x, j_max: int = DEFAULT_J_MAX,
                     accel: str = "tail") -> float:
    """``a(x)`` from ``j_max`` convolution powers with series acceleration."""
    return potential_kernel_report(d, x, j_max, accel)[0]


def potential_kernel_report(d: StepDistribution, x, j_max: int = DEFAULT_J_MAX,
                            accel: str = "tail") -> tuple[float, float]:
    """``(a(x), Cauchy gap between j_max and j_max/2)``."""
    x = (int(x[0]), int(x[1]))
    radius = max(8, abs(x[0]), abs(x[1]))
    radius = 1 << int(math.ceil(math.log2(radius)))
    t = potential_table(d, radius=radius, j_max=j_max, accel=accel)
    return t.value(x), t.gap(x)


def ring_samples(radius: float, n_angles: int = 16) -> np.ndarray:
    """Nearest lattice points to ``n_angles`` equally spaced points on a circle."""
    th = 2 * np.pi * np.arange(n_angles) / n_angles
    pts = np.rint(np.column_stack([radius * np.cos(th), radius * np.sin(th)])).astype(np.int64)
    return np.unique(pts, axis=0)


def fit_kernel_constants(d: StepDistribution, radii, table: PotentialKernelTable | None = None,
                         n_angles: int = 16) -> KernelFit:
    """Least-squares fit ``a(x) ~ slope log|x| + intercept``.

    Raises
    ------
    InsufficientSpread
        If ``max(radii) / min(radii) < 8``.
    """
    radii = sorted(float(r) for r in radii)
    if len(radii) < 2 or radii[-1] / radii[0] < 8:
        raise InsufficientSpread("radii must span at least a factor of 8")
    if table is None:
        table = potential_table(d, radius=int(math.ceil(radii[-1])) + 1)
    xs, ys = [], []
    for r in radii:
        pts = ring_samples(r, n_angles)
        xs.append(0.5 * np.log((pts.astype(float) ** 2).sum(1)))
        ys.append(table(pts))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    X = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    r2 = 1.0 - float(resid @ resid) / float(((y - y.mean()) ** 2).sum())
    fit = KernelFit(float(coef[0]), float(coef[1]), r2, len(x), tuple(radii))
    table.fitted.update(fit.to_json())
    return fit
