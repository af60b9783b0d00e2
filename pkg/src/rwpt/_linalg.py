"""Linear solves for killed transition operators ``I - P``."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularSystem

DIRECT_LIMIT = 20_000
DEFAULT_RESIDUAL_TOL = 1e-10


class LinearSolver:
    """Factorization or iterative context for ``A x = b``.

    ``method`` is ``"auto"`` (sparse LU below :data:`DIRECT_LIMIT` unknowns,
    algebraic-multigrid preconditioned CG above), ``"direct"``,
    ``"iterative"`` or ``"dense"``.  ``A`` must be symmetric positive
    definite for the iterative route, which holds for killed symmetric walks.
    """

    def __init__(self, A, method: str = "auto", residual_tol: float = DEFAULT_RESIDUAL_TOL):
        self.A = A
        self.n = A.shape[0]
        self.residual_tol = residual_tol
        if method == "auto":
            if not sp.issparse(A):
                method = "dense"
            else:
                method = "direct" if self.n < DIRECT_LIMIT else "iterative"
        self.method = method
        if method == "dense":
            dense = A.toarray() if sp.issparse(A) else np.asarray(A)
            self._lu = sla.lu_factor(dense, check_finite=False)
            if np.any(np.diag(self._lu[0]) == 0):
                raise SingularSystem("killed operator is singular")
        elif method == "direct":
            try:
                self._lu = spla.splu(sp.csc_matrix(A))
            except RuntimeError as exc:
                raise SingularSystem(str(exc)) from exc
        elif method == "iterative":
            import pyamg

            self._ml = pyamg.smoothed_aggregation_solver(sp.csr_matrix(A))
        else:
            raise ValueError(f"unknown solver method {method!r}")

    def solve(self, b, transpose: bool = False) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.method == "dense":
            x = sla.lu_solve(self._lu, b, trans=1 if transpose else 0, check_finite=False)
        elif self.method == "direct":
            x = self._lu.solve(b, trans="T" if transpose else "N")
        else:
            # symmetric operator: the transpose solve is the same solve
            if b.ndim == 1:
                x = self._amg(b)
            else:
                x = np.column_stack([self._amg(b[:, k]) for k in range(b.shape[1])])
        self._check(x, b, transpose)
        return x

    def _amg(self, b):
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            return np.zeros_like(b)
        res: list[float] = []
        x = self._ml.solve(b, tol=self.residual_tol * 1e-2, accel="cg", maxiter=1000, residuals=res)
        return x

    def _check(self, x, b, transpose):
        A = self.A.T if transpose else self.A
        r = A @ x - b
        rn = np.linalg.norm(r, axis=0)
        bn = np.linalg.norm(b, axis=0)
        bad = rn > self.residual_tol * np.maximum(bn, 1e-300)
        if np.any(bad & (bn > 0)):
            raise SingularSystem(
                f"relative residual {float(np.max(rn / np.maximum(bn, 1e-300))):.3g} "
                f"exceeds {self.residual_tol:g} ({self.method} solver)"
            )
