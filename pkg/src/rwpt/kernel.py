"""Exact Green's functions, hitting distributions, escape times and ruin
probabilities from linear solves on killed transition operators.

All planar domains are finite.  Quantities that live on the infinite
exterior of a disc are handled in two ways: by a finite outer window
(:func:`exterior_green`, :func:`hitting_distribution_lastexit` with a planar
ambient region) or exactly through the potential kernel
(:class:`DiscExterior`).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg as sla

from ._chain import DEFAULT_POINT_BUDGET, KilledChain
from ._linalg import DEFAULT_RESIDUAL_TOL
from .errors import (
    PointOutsideAnnulus,
    RegionError,
    SourceInsideTarget,
    SourceOutsideAnnulus,
    SourceOutsideDomain,
)
from .lattice import Region, annulus, complement, disc, disc_points, enumerate_region, project_pi
from .stepdist import StepDistribution


def _pt(x) -> tuple[int, int]:
    return (int(x[0]), int(x[1]))


class GreenOperator:
    """Green's function ``G_B`` of the walk killed on leaving ``B``.

    Rows and columns are solved lazily and cached.  For a toral ``B`` all
    points are primary-copy representatives and queries are projected first.
    """

    def __init__(self, d: StepDistribution, domain: Region, chain: KilledChain,
                 residual_tol: float):
        self.dist = d
        self.domain = domain
        self.chain = chain
        self.residual_tol = residual_tol
        self._rows: dict[int, np.ndarray] = {}

    @property
    def points(self) -> np.ndarray:
        return self.chain.points

    @property
    def size(self) -> int:
        return self.chain.N

    def index(self, x) -> int:
        return self.chain.index(x)

    def row(self, x) -> np.ndarray:
        """``G_B(x, .)`` aligned with :attr:`points`."""
        i = self.index(x)
        if i < 0:
            raise SourceOutsideDomain(f"{_pt(x)} is not in the domain")
        if i not in self._rows:
            self._rows[i] = self.chain.green_row(i)
        return self._rows[i]

    def column(self, y) -> np.ndarray:
        j = self.index(y)
        if j < 0:
            raise SourceOutsideDomain(f"{_pt(y)} is not in the domain")
        return self.chain.green_column(j)

    def __call__(self, x, y) -> float:
        return self.value(x, y)

    def value(self, x, y) -> float:
        i, j = self.index(x), self.index(y)
        if i < 0 or j < 0:
            return 0.0
        return float(self.row(x)[j])

    def escape_time(self, x) -> float:
        return float(self.row(x).sum())

    def exit_distribution(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Where the walk from ``x`` first lands outside ``B``."""
        return self.chain.exit_points, self.chain.exit_masses(self.row(x))

    def generator_residual(self, x, y) -> float:
        """``|sum_z p1(x,z) G(z,y) - G(x,y) + 1{x=y}|``."""
        col = self.column(y)
        i = self.index(x)
        lhs = float((self.chain.P @ col)[i])
        return abs(lhs - col[i] + (1.0 if i == self.index(y) else 0.0))


def _live_points(B: Region, within: Region | None) -> np.ndarray:
    pts = enumerate_region(B, within=within)
    if B.toral and len(pts) == B.K * B.K:
        raise RegionError("a toral domain must leave a non-empty killing set")
    if len(pts) == 0:
        raise RegionError("empty domain")
    return pts


def green(d: StepDistribution, B: Region, residual_tol: float = DEFAULT_RESIDUAL_TOL,
          point_budget: float = DEFAULT_POINT_BUDGET, method: str = "auto",
          within: Region | None = None) -> GreenOperator:
    """Build the Green operator of ``B``.

    Parameters
    ----------
    B : Region
        Finite planar region, or any proper toral region.
    within : Region, optional
        Bounding region for planar complements.

    Raises
    ------
    DomainTooLarge
        More than ``point_budget`` points.
    SingularSystem
        The solver residual exceeded ``residual_tol``.
    """
    pts = _live_points(B, within)
    chain = KilledChain(d, pts, K=B.K, point_budget=point_budget, method=method,
                        residual_tol=residual_tol)
    return GreenOperator(d, B, chain, residual_tol)


def expected_escape_time(g: GreenOperator, x) -> float:
    """``E^x T_{B^c} = sum_z G_B(x, z)``."""
    if g.index(x) < 0:
        raise SourceOutsideDomain(f"{_pt(x)} is not in the domain")
    return g.escape_time(x)


def escape_times_direct(d: StepDistribution, B: Region, **opts) -> tuple[np.ndarray, np.ndarray]:
    """First-step analysis ``(I - P) t = 1`` for every point of ``B``."""
    chain = _chain_for(d, B, opts)
    t = chain.solver.solve(np.ones(chain.N))
    return chain.points, t


def expected_escape_time_direct(d: StepDistribution, B: Region, x, **opts) -> float:
    chain = _chain_for(d, B, opts)
    i = chain.index(x)
    if i < 0:
        raise SourceOutsideDomain(f"{_pt(x)} is not in the domain")
    return float(chain.solver.solve(np.ones(chain.N))[i])


def _chain_for(d, B, opts) -> KilledChain:
    within = opts.pop("within", None)
    return KilledChain(d, _live_points(B, within), K=B.K, **opts)


@dataclass
class HittingKernel:
    """First-entrance distribution of a target set from one source.

    ``lost_mass`` is the probability of leaving the ambient window before
    reaching the target (zero for toral kernels up to solver error).
    """

    target: Region
    ambient: Region | None
    source: tuple[int, int]
    points: np.ndarray
    masses: np.ndarray
    lost_mass: float = 0.0
    method: str = "lastexit"
    window: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {_pt(p): float(m) for p, m in zip(self.points, self.masses)}

    def at(self, y) -> float:
        hit = np.flatnonzero((self.points == np.asarray(y)).all(1))
        return float(self.masses[hit[0]]) if len(hit) else 0.0

    def values_at(self, ys) -> np.ndarray:
        lookup = self.as_dict()
        return np.array([lookup.get(_pt(y), 0.0) for y in ys])

    def sup_diff(self, other: "HittingKernel") -> float:
        a, b = self.as_dict(), other.as_dict()
        keys = set(a) | set(b)
        return max((abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys), default=0.0)

    def dump(self, csv_path, meta_path=None, dist: StepDistribution | None = None,
             residual_tol: float = DEFAULT_RESIDUAL_TOL) -> None:
        """CSV ``x1,x2,y1,y2,value`` plus a JSON sidecar."""
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "x2", "y1", "y2", "value"])
            for p, m in zip(self.points, self.masses):
                w.writerow([self.source[0], self.source[1], int(p[0]), int(p[1]), repr(float(m))])
        if meta_path is not None:
            meta = {
                "domain": self.ambient.to_json() if self.ambient is not None else None,
                "target": self.target.to_json(),
                "dist": dist.spec.to_json() if dist is not None else None,
                "residual_tol": residual_tol,
                "window": self.window,
                "method": self.method,
                "lost_mass": self.lost_mass,
            }
            with open(meta_path, "w") as fh:
                json.dump(meta, fh, indent=2, sort_keys=True)


def _hitting_chain(d, A: Region, ambient: Region | None, x, forbidden: Region | None, opts):
    """Chain on ``ambient minus (A u F)`` and the projected source."""
    x = _pt(x)
    if A.toral:
        x = project_pi(x, A.K)
    elif ambient is None or not ambient.bounded:
        raise RegionError("planar hitting needs a bounded ambient region")
    if A.contains(x)[0]:
        raise SourceInsideTarget(f"{x} lies in the target")
    if forbidden is not None and forbidden.contains(x)[0]:
        raise SourceInsideTarget(f"{x} lies in the forbidden set")
    if ambient is not None and not ambient.contains(x)[0]:
        raise SourceOutsideDomain(f"{x} is outside the ambient region")
    blocked = A if forbidden is None else Region("union", parts=(A, forbidden), K=A.K)
    pts = enumerate_region(complement(blocked), within=ambient)
    chain = KilledChain(d, pts, K=A.K, **opts)
    in_target = A.contains(chain.exit_points)
    return x, chain, in_target


def _window(ambient: Region | None) -> float | None:
    if ambient is None or ambient.toral:
        return None
    return float(ambient.outer_radius)


def hitting_distribution_lastexit(d: StepDistribution, A: Region, ambient: Region | None, x,
                                  **opts) -> HittingKernel:
    """``H_A(x, y) = sum_z G_{A^c}(x, z) p1(z, y)``.

    The Green row is obtained by one transposed solve on the complement of
    ``A`` (inside ``ambient`` for planar targets), then pushed through one
    step.  Planar kernels are truncated by the ambient window and report
    the escaped mass as ``lost_mass``.
    """
    x, chain, in_target = _hitting_chain(d, A, ambient, x, None, opts)
    g = chain.green_row(chain.index(x))
    mass = chain.exit_masses(g)
    return HittingKernel(A, ambient, x, chain.exit_points[in_target], mass[in_target],
                         lost_mass=float(mass[~in_target].sum()), method="lastexit",
                         window=_window(ambient))


def hitting_distribution_direct(d: StepDistribution, A: Region, ambient: Region | None, x,
                                **opts) -> HittingKernel:
    """Harmonic boundary-value oracle: ``(I - P) h_y = P 1{y}`` for each
    target cell ``y``, evaluated at ``x``."""
    x, chain, in_target = _hitting_chain(d, A, ambient, x, None, opts)
    cols = chain.exit_columns(in_target)
    H = chain.solver.solve(cols)
    row = np.atleast_2d(H)[chain.index(x)] if H.ndim == 2 else np.array([H[chain.index(x)]])
    escape = chain.exit_into(~in_target)
    lost = float(chain.solver.solve(escape)[chain.index(x)]) if (~in_target).any() else 0.0
    return HittingKernel(A, ambient, x, chain.exit_points[in_target], row,
                         lost_mass=lost, method="direct", window=_window(ambient))


def constrained_hitting(d: StepDistribution, A: Region, F: Region | None, ambient: Region | None,
                        x, **opts) -> tuple[HittingKernel, float]:
    """Entrance law into ``A`` on the event ``T_A < T_F``.

    Returns the kernel ``y -> P^x(S_{T_{A u F}} = y, T_A < T_F)`` and the
    probability ``P^x(T_A < T_F)``.  With a planar ambient window, leaving
    the window counts as reaching neither.
    """
    if F is not None and F.kind == "disc" and F.n == 0:
        F = None
    x, chain, in_target = _hitting_chain(d, A, ambient, x, F, opts)
    g = chain.green_row(chain.index(x))
    mass = chain.exit_masses(g)
    k = HittingKernel(A, ambient, x, chain.exit_points[in_target], mass[in_target],
                      lost_mass=float(mass[~in_target].sum()), method="constrained",
                      window=_window(ambient))
    return k, k.total


def _ruin_chain(d, r, R, K, opts):
    shell = annulus((0, 0), r, R - r, K=K) if K is not None else annulus((0, 0), r, R - r)
    pts = enumerate_region(shell)
    chain = KilledChain(d, pts, K=K, **opts)
    inner = disc((0, 0), r, K=K).contains(chain.exit_points)
    return chain, inner


def ruin_field(d: StepDistribution, r: float, R: float, K: int | None = None,
               **opts) -> tuple[np.ndarray, np.ndarray]:
    """``P^x(T_{D(0,r)} < T_{D(0,R)^c})`` for every ``x`` in the annulus."""
    chain, inner = _ruin_chain(d, r, R, K, opts)
    h = chain.solver.solve(chain.exit_into(inner))
    return chain.points, h


def ruin_probability(d: StepDistribution, r: float, R: float, x, K: int | None = None,
                     **opts) -> float:
    """Exact probability of entering ``D(0, r)`` before leaving ``D(0, R)``.

    Raises
    ------
    SourceOutsideAnnulus
        Unless ``r <= |x| < R``.
    """
    x = _pt(x) if K is None else project_pi(_pt(x), K)
    nx = math.hypot(*x)
    if not (r <= nx < R):
        raise SourceOutsideAnnulus(f"|x| = {nx:g} not in [{r}, {R})")
    chain, inner = _ruin_chain(d, r, R, K, opts)
    h = chain.solver.solve(chain.exit_into(inner))
    return float(h[chain.index(x)])


def exterior_green(d: StepDistribution, r: float, s: float, x, y, N: float, **opts) -> float:
    """Green's function of the annulus ``D(0, N) minus D(0, r + s)``.

    Raises
    ------
    PointOutsideAnnulus
        If ``x`` or ``y`` is outside the annulus or ``N < 2 max(|x|, |y|)``.
    """
    rho = r + s
    nx, ny = math.hypot(*x), math.hypot(*y)
    if min(nx, ny) < rho or max(nx, ny) >= N or N < 2 * max(nx, ny):
        raise PointOutsideAnnulus(f"points must satisfy {rho} <= |.| and N >= 2 max|.|")
    g = green(d, annulus((0, 0), rho, N - rho), **opts)
    return g.value(x, y)


def exterior_green_doubling(d: StepDistribution, r: float, s: float, x, y, N0: float | None = None,
                            rel_tol: float = 1e-8, max_points: float = DEFAULT_POINT_BUDGET,
                            **opts) -> dict[str, Any]:
    """Double the outer radius until the relative change is below ``rel_tol``
    or the point budget is reached.  Returns the sequence and whether the
    stop criterion was met."""
    N = N0 or 2 * max(math.hypot(*x), math.hypot(*y), r + s + 1)
    vals, radii = [], []
    converged = False
    while math.pi * N * N <= max_points:
        vals.append(exterior_green(d, r, s, x, y, N, **opts))
        radii.append(N)
        if len(vals) > 1 and abs(vals[-1] - vals[-2]) <= rel_tol * abs(vals[-1]):
            converged = True
            break
        N *= 2
    return {"values": vals, "radii": radii, "converged": converged,
            "value": vals[-1] if vals else math.nan}


class DiscExterior:
    """Exact exterior quantities for the planar target ``D(0, rho)``.

    With ``a`` the potential kernel and ``A = D(0, rho)``, the bounded
    harmonic functions on ``A^c`` and the exterior Green function have the
    representations

    ``H_A(x, y) = c_y + sum_z a(x - z) mu_y(z)``  with ``sum mu_y = 0``,
    ``G(x, y) = c'_y - a(x - y) + sum_z a(x - z) nu_y(z)`` with ``sum nu_y = 1``,

    fixed by the boundary values on ``A``.  Both use one bordered system of
    size ``|A| + 1``, factored once.
    """

    def __init__(self, d: StepDistribution, rho: float, table=None):
        from .potential import PotentialKernelTable, potential_table

        self.dist = d
        self.rho = rho
        self.inner = disc_points(rho)
        self.target = disc((0, 0), rho)
        m = len(self.inner)
        self.table: PotentialKernelTable = table or potential_table(d)
        diff = self.inner[:, None, :] - self.inner[None, :, :]
        Amat = self.table(diff.reshape(-1, 2)).reshape(m, m)
        M = np.zeros((m + 1, m + 1))
        M[:m, :m] = Amat
        M[:m, m] = 1.0
        M[m, :m] = 1.0
        self._lu = sla.lu_factor(M)
        rhs = np.zeros((m + 1, m))
        rhs[:m, :m] = np.eye(m)
        sol = sla.lu_solve(self._lu, rhs)
        self._mu = sol[:m]
        self._c = sol[m]

    def _a_rows(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64).reshape(-1, 2)
        diff = xs[:, None, :] - self.inner[None, :, :]
        return self.table(diff.reshape(-1, 2)).reshape(len(xs), len(self.inner))

    def hitting(self, xs) -> np.ndarray:
        """``H_A(x, y)`` for each row ``x`` and each ``y`` in :attr:`inner`."""
        return self._a_rows(xs) @ self._mu + self._c

    def hitting_kernel(self, x) -> HittingKernel:
        h = self.hitting([x])[0]
        return HittingKernel(self.target, None, _pt(x), self.inner.copy(), h,
                             method="potential", window=math.inf)

    def escape_potential(self, xs) -> np.ndarray:
        """The function vanishing on ``A``, harmonic off ``A`` and growing
        like ``(2/pi_Gamma) log|x|``."""
        rhs = np.zeros(len(self.inner) + 1)
        rhs[-1] = 1.0
        sol = sla.lu_solve(self._lu, rhs)
        vals = self._a_rows(xs) @ sol[:-1] + sol[-1]
        vals[self.target.contains(np.asarray(xs, dtype=np.int64).reshape(-1, 2))] = 0.0
        return vals

    def green(self, xs, y) -> np.ndarray:
        """``G_{A^c}(x, y)`` for each row ``x`` (zero on ``A``)."""
        xs = np.asarray(xs, dtype=np.int64).reshape(-1, 2)
        y = np.asarray(y, dtype=np.int64)
        rhs = np.zeros(len(self.inner) + 1)
        rhs[:-1] = self.table(self.inner - y)
        rhs[-1] = 1.0
        sol = sla.lu_solve(self._lu, rhs)
        nu, c = sol[:-1], sol[-1]
        vals = c - self.table(xs - y) + self._a_rows(xs) @ nu
        vals[self.target.contains(xs)] = 0.0
        return vals
