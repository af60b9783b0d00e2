"""Killed transition operators on finite planar or toral point sets."""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy import signal

from ._linalg import DEFAULT_RESIDUAL_TOL, LinearSolver
from .errors import DomainTooLarge, UnsupportedDistribution
from .lattice import project_pi
from .stepdist import StepDistribution

DEFAULT_POINT_BUDGET = 500_000
SPARSE_ENTRY_LIMIT = 10_000_000
SPARSE_HARD_LIMIT = 60_000_000
DENSE_POINT_LIMIT = 8_000


class KilledChain:
    """The walk restricted to ``points`` and killed on leaving them.

    Parameters
    ----------
    d : StepDistribution
        Step law; needs a finite support table.
    points : (N, 2) int array
        Live states.  For toral chains they are primary-copy points.
    K : int, optional
        Torus side; ``None`` for the plane.

    Notes
    -----
    ``P`` is the ``N x N`` substochastic matrix among live states.  Mass
    leaving the live set lands on the *exit cells*; for the plane these are
    actual lattice points, for the torus they are primary-copy points of the
    complement.  Small supports use a sparse exit matrix; large supports
    fall back to a dense ``P`` and FFT convolutions for the exit masses.
    """

    def __init__(self, d: StepDistribution, points, K: int | None = None,
                 point_budget: float = DEFAULT_POINT_BUDGET,
                 method: str = "auto", residual_tol: float = DEFAULT_RESIDUAL_TOL):
        if d.offsets is None:
            raise UnsupportedDistribution("exact solves need a finite step table")
        pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        if len(pts) == 0:
            raise ValueError("empty live set")
        if len(pts) > point_budget:
            raise DomainTooLarge(f"{len(pts)} points exceed the budget of {int(point_budget)}")
        self.d = d
        self.K = K
        self.points = pts
        self.N = len(pts)
        self.method = method
        self.residual_tol = residual_tol
        self._rho = int(np.abs(d.offsets).max())
        self._build_index()
        S = len(d.offsets)
        # wide supports on small sets go dense; everything else stays sparse
        self.dense = self.N * S > SPARSE_ENTRY_LIMIT and self.N <= DENSE_POINT_LIMIT
        if self.dense:
            self._build_dense()
        elif self.N * S > SPARSE_HARD_LIMIT:
            raise DomainTooLarge(
                f"{self.N} points with {S} support offsets exceed the sparse assembly limit"
            )
        else:
            self._build_sparse()
        self._solver: LinearSolver | None = None

    # index --------------------------------------------------------------
    def _build_index(self):
        if self.K is None:
            pad = self._rho
            self._lo = self.points.min(0) - pad
            hi = self.points.max(0) + pad
            self._shape = tuple(int(v) for v in (hi - self._lo + 1))
        else:
            self._lo = np.array([-(self.K // 2)] * 2, dtype=np.int64)
            self._shape = (self.K, self.K)
        grid = np.full(self._shape, -1, dtype=np.int64)
        loc = self.points - self._lo
        grid[loc[:, 0], loc[:, 1]] = np.arange(self.N)
        self._grid = grid

    def _wrap(self, pts):
        return pts if self.K is None else project_pi(pts, self.K)

    def index(self, x) -> int:
        """Row of ``x`` in the chain, or -1 when ``x`` is not live."""
        p = np.asarray(self._wrap(np.atleast_2d(np.asarray(x, dtype=np.int64))))[0] - self._lo
        if np.any(p < 0) or p[0] >= self._shape[0] or p[1] >= self._shape[1]:
            return -1
        return int(self._grid[p[0], p[1]])

    def indices(self, pts) -> np.ndarray:
        pts = np.asarray(self._wrap(np.asarray(pts, dtype=np.int64).reshape(-1, 2))) - self._lo
        ok = (pts >= 0).all(1) & (pts[:, 0] < self._shape[0]) & (pts[:, 1] < self._shape[1])
        out = np.full(len(pts), -1, dtype=np.int64)
        out[ok] = self._grid[pts[ok, 0], pts[ok, 1]]
        return out

    def _offsets(self):
        offs, probs = self.d.offsets, self.d.probs
        if self.K is None:
            return offs, probs
        folded = project_pi(offs, self.K)
        key = (folded[:, 0] + self.K) * (3 * self.K) + folded[:, 1] + self.K
        uniq, inv = np.unique(key, return_inverse=True)
        acc = np.zeros(len(uniq))
        np.add.at(acc, inv, probs)
        out = np.stack([uniq // (3 * self.K) - self.K, uniq % (3 * self.K) - self.K], 1)
        return out, acc

    # sparse assembly ------------------------------------------------------
    def _build_sparse(self):
        offs, probs = self._offsets()
        rows_l, cols_l, vals_l = [], [], []
        rows_e, cells_e, vals_e = [], [], []
        ar = np.arange(self.N)
        W = self._shape[1]
        for v, p in zip(offs, probs):
            tgt = self._wrap(self.points + v) - self._lo
            j = self._grid[tgt[:, 0], tgt[:, 1]]
            live = j >= 0
            rows_l.append(ar[live])
            cols_l.append(j[live])
            vals_l.append(np.full(live.sum(), p))
            rows_e.append(ar[~live])
            cells_e.append(tgt[~live, 0] * W + tgt[~live, 1])
            vals_e.append(np.full((~live).sum(), p))
        rows = np.concatenate(rows_l)
        self.P = sp.csr_matrix(
            (np.concatenate(vals_l), (rows, np.concatenate(cols_l))), shape=(self.N, self.N)
        )
        cells = np.concatenate(cells_e)
        uniq, inv = np.unique(cells, return_inverse=True)
        self.exit_points = np.stack([uniq // W, uniq % W], 1) + self._lo
        self.E = sp.csr_matrix(
            (np.concatenate(vals_e), (np.concatenate(rows_e), inv)), shape=(self.N, len(uniq))
        )

    # dense assembly -------------------------------------------------------
    def _step_lookup(self, diff):
        """``p1`` evaluated at integer differences (toral ones folded)."""
        if self.K is None:
            grid, w = self.d.kernel_grid()
            ok = (np.abs(diff) <= w).all(-1)
            out = np.zeros(diff.shape[:-1])
            out[ok] = grid[diff[ok][..., 0] + w, diff[ok][..., 1] + w]
            return out
        fold = self._fold_grid()
        h = self.K // 2
        loc = np.mod(diff + h, self.K)
        return fold[loc[..., 0], loc[..., 1]]

    def _fold_grid(self):
        if not hasattr(self, "_fold"):
            offs, probs = self._offsets()
            h = self.K // 2
            fold = np.zeros((self.K, self.K))
            fold[offs[:, 0] + h, offs[:, 1] + h] = probs
            self._fold = fold
        return self._fold

    def _build_dense(self):
        P = np.empty((self.N, self.N))
        chunk = max(1, 2_000_000 // self.N)
        for i0 in range(0, self.N, chunk):
            i1 = min(self.N, i0 + chunk)
            diff = self.points[None, :, :] - self.points[i0:i1, None, :]
            P[i0:i1] = self._step_lookup(diff)
        self.P = P
        self.E = None
        live = np.zeros(self._shape)
        loc = self.points - self._lo
        live[loc[:, 0], loc[:, 1]] = 1.0
        reach = self._spread(live, support_only=True) > 0.5
        reach &= live == 0
        cells = np.argwhere(reach)
        self.exit_points = cells + self._lo
        self._exit_cells = cells

    def _spread(self, field, support_only=False):
        """Push a field on the index grid forward by one step."""
        if self.K is None:
            grid, _ = self.d.kernel_grid()
            if support_only:
                grid = (grid > 0).astype(float)
            return signal.fftconvolve(field, grid, mode="same")
        fold = self._fold_grid()
        if support_only:
            fold = (fold > 0).astype(float)
        h = self.K // 2
        kern = np.roll(np.roll(fold, -h, 0), -h, 1)
        return np.fft.irfft2(np.fft.rfft2(field) * np.fft.rfft2(kern), s=field.shape)

    # operators ------------------------------------------------------------
    @property
    def solver(self) -> LinearSolver:
        if self._solver is None:
            if self.dense:
                A = np.eye(self.N) - self.P
            else:
                A = (sp.identity(self.N, format="csr") - self.P).tocsr()
            self._solver = LinearSolver(A, method=self.method, residual_tol=self.residual_tol)
        return self._solver

    def exit_masses(self, g: np.ndarray) -> np.ndarray:
        """``sum_z g(z) p1(z, w)`` for every exit cell ``w``."""
        if not self.dense:
            return np.asarray(self.E.T @ g).ravel()
        field = np.zeros(self._shape)
        loc = self.points - self._lo
        field[loc[:, 0], loc[:, 1]] = g
        out = self._spread(field)
        c = self._exit_cells
        return out[c[:, 0], c[:, 1]]

    def exit_columns(self, mask: np.ndarray) -> np.ndarray:
        """Dense ``N x k`` one-step masses into the selected exit cells."""
        cols = np.flatnonzero(mask)
        if not self.dense:
            return self.E[:, cols].toarray()
        diff = self.exit_points[cols][None, :, :] - self.points[:, None, :]
        return self._step_lookup(diff)

    def exit_into(self, mask: np.ndarray) -> np.ndarray:
        """One-step probability of landing in the selected exit cells."""
        if not self.dense:
            return np.asarray(self.E[:, np.flatnonzero(mask)].sum(axis=1)).ravel()
        return self.exit_columns(mask).sum(axis=1)

    def green_row(self, i: int) -> np.ndarray:
        """``G(x_i, .)`` over the live points (transposed solve)."""
        e = np.zeros(self.N)
        e[i] = 1.0
        return self.solver.solve(e, transpose=True)

    def green_column(self, j: int) -> np.ndarray:
        e = np.zeros(self.N)
        e[j] = 1.0
        return self.solver.solve(e)

    def apply_P(self, f: np.ndarray) -> np.ndarray:
        return self.P @ f
