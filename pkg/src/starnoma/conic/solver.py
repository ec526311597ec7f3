"""Clarabel-backed solve with a CVXOPT fallback and an independent feasibility re-check."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .program import (
    DEFAULT_TOL,
    INFEASIBLE,
    MAX_ITERS,
    NUMERICAL_ERROR,
    OPTIMAL,
    Affine,
    ConicProgram,
    HermitianVar,
    _assemble,
    hermitian_from_params,
    svec_len,
    svec_to_matrix,
)

log = logging.getLogger(__name__)


@dataclass
class SolveResult:
    status: str
    x: np.ndarray
    objective: float
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    solve_time: float = 0.0
    backend: str = "clarabel"

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def value(self, var):
        if isinstance(var, HermitianVar):
            return hermitian_from_params(self.x[var.offset : var.offset + var.size], var.n)
        if isinstance(var, Affine):
            return var.evaluate(self.x)
        raise TypeError(f"cannot evaluate {type(var).__name__}")


def _settings(tol: float, max_iter: int):
    import clarabel

    s = clarabel.DefaultSettings()
    s.verbose = False
    inner = min(1e-8, tol / 10.0)
    s.tol_gap_abs = inner
    s.tol_gap_rel = inner
    s.tol_feas = inner
    s.max_iter = max_iter
    return s


def check_residuals(program: ConicProgram, x: np.ndarray, std=None) -> dict:
    """Constraint violations of ``x`` measured outside the solver.

    ``primal`` is the worst equality/inequality violation relative to
    ``1 + |b|_inf``; ``psd_min_eig`` the smallest eigenvalue over all
    PSD constraints (LMIs and Hermitian blocks).
    """
    if std is None:
        std = program.standard_form()
    c, c0, A_dense, _, b, _ = std
    scale = 1.0 + (np.max(np.abs(b)) if b.size else 0.0)
    worst = 0.0
    for e in program.eqs:
        worst = max(worst, abs(e.evaluate(x)))
    for e in program.ineqs:
        worst = max(worst, e.evaluate(x))
    min_eig = np.inf
    for lmi in program.lmis:
        k = len(lmi)
        M = np.array([[lmi[i][j].evaluate(x) for j in range(k)] for i in range(k)])
        min_eig = min(min_eig, float(np.linalg.eigvalsh(M)[0]))
    for X in program.blocks:
        Xv = hermitian_from_params(x[X.offset : X.offset + X.size], X.n)
        min_eig = min(min_eig, float(np.linalg.eigvalsh(Xv)[0]))
    return {"primal": worst / scale, "psd_min_eig": min_eig if np.isfinite(min_eig) else 0.0}


def _svec_to_full_rows(rows, rhs, k: int):
    """Rows acting on a scaled-triangle svec, rewritten for the full column-major matrix."""
    iu, ju = np.triu_indices(k)
    order = np.lexsort((iu, ju))  # column-major upper triangle, the svec order
    pos = np.zeros((k, k), dtype=int)
    pos[iu[order], ju[order]] = np.arange(len(order))
    pos = np.triu(pos) + np.triu(pos, 1).T
    scale = np.where(np.eye(k, dtype=bool), 1.0, 1.0 / np.sqrt(2.0))
    sel = pos.T.ravel()  # column-major
    return rows[sel] * scale.T.ravel()[:, None], rhs[sel] * scale.T.ravel()


def _clarabel(std, n: int, tol: float, max_iter: int):
    import clarabel
    import scipy.sparse as sp

    c, _, A_dense, (tr, tc, tv), b, cones = std
    A = _assemble(A_dense, tr, tc, tv, len(b), n)
    cl_cones = []
    for kind, dim in cones:
        if kind == "zero":
            cl_cones.append(clarabel.ZeroConeT(dim))
        elif kind == "nonneg":
            cl_cones.append(clarabel.NonnegativeConeT(dim))
        else:
            cl_cones.append(clarabel.PSDTriangleConeT(dim))
    P = sp.csc_matrix((n, n))
    sol = clarabel.DefaultSolver(P, c, A, b, cl_cones, _settings(tol, max_iter)).solve()
    name = str(sol.status)
    if name in ("Solved", "AlmostSolved"):
        kind = "solved"
    elif name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        kind = "infeasible"
    elif name in ("MaxIterations", "MaxTime"):
        kind = "max_iters"
    else:
        kind = "failed"
    gap = abs(sol.obj_val - sol.obj_val_dual) / (1.0 + abs(sol.obj_val))
    return kind, np.asarray(sol.x, dtype=float), float(sol.obj_val), float(gap), int(sol.iterations), float(sol.solve_time)


def _cvxopt(std, n: int, tol: float, max_iter: int):
    import time

    import scipy.sparse as sp
    from cvxopt import matrix, solvers, spmatrix

    def cvx(M):
        M = sp.coo_matrix(M)
        return spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(), M.shape)

    c, _, A_dense, (tr, tc, tv), b, cones = std
    A = _assemble(A_dense, tr, tc, tv, len(b), n).tocsr()
    eq, eq_rhs, lin, lin_rhs, psd, psd_rhs, dims = [], [], [], [], [], [], []
    pos = 0
    for kind, dim in cones:
        size = dim if kind != "psd" else dim * (dim + 1) // 2
        rows, rhs = A[pos : pos + size], b[pos : pos + size]
        pos += size
        if kind == "zero":
            eq.append(rows)
            eq_rhs.append(rhs)
        elif kind == "nonneg":
            lin.append(rows)
            lin_rhs.append(rhs)
        else:
            full, h = _svec_to_full_rows(rows.toarray(), rhs, dim)
            psd.append(sp.csr_matrix(full))
            psd_rhs.append(h)
            dims.append(dim)
    G = sp.vstack(lin + psd) if lin or psd else sp.csr_matrix((0, n))
    h = np.concatenate(lin_rhs + psd_rhs) if lin_rhs or psd_rhs else np.zeros(0)
    kw = {}
    if eq:
        kw = {"A": cvx(sp.vstack(eq)), "b": matrix(np.concatenate(eq_rhs))}
    opts = {"show_progress": False, "abstol": 1e-8, "reltol": 1e-8, "feastol": 1e-8, "maxiters": max_iter}
    cone_dims = {"l": sum(m.shape[0] for m in lin), "q": [], "s": dims}
    t0 = time.perf_counter()
    try:
        sol = solvers.conelp(matrix(c), cvx(G), matrix(h), cone_dims, options=opts, **kw)
    except (ArithmeticError, ValueError) as exc:
        log.debug("cvxopt failed: %s", exc)
        return "failed", np.zeros(n), np.nan, np.inf, 0, time.perf_counter() - t0
    elapsed = time.perf_counter() - t0
    if sol["status"] == "primal infeasible":
        return "infeasible", np.zeros(n), np.nan, np.inf, int(sol["iterations"]), elapsed
    if sol["x"] is None or sol["primal objective"] is None:
        return "failed", np.zeros(n), np.nan, np.inf, int(sol["iterations"]), elapsed
    x = np.array(sol["x"]).ravel()
    p_obj, d_obj = float(sol["primal objective"]), float(sol["dual objective"])
    gap = abs(p_obj - d_obj) / (1.0 + abs(p_obj))
    kind = "solved" if sol["status"] in ("optimal", "unknown") else "failed"
    return kind, x, p_obj, gap, int(sol["iterations"]), elapsed


_BACKENDS = {"clarabel": _clarabel, "cvxopt": _cvxopt}


def solve(program: ConicProgram, tol: float = DEFAULT_TOL, max_iter: int = 200) -> SolveResult:
    """Solve ``program``; ``status == 'optimal'`` only after the re-check passes.

    Certification: the solver's relative duality gap and the independent
    primal residual must both be within ``tol``, and every PSD constraint
    must have minimum eigenvalue >= ``-tol``. Clarabel runs first; when its
    answer fails the re-check (it stalls near a 1e-6 gap on some
    near-degenerate programs) the program is handed to CVXOPT and the same
    re-check applies.
    """
    std = program.standard_form()
    n = program.num_vars
    sign = -1.0 if program.sense == "max" else 1.0
    result = None
    for backend in ("clarabel", "cvxopt"):
        kind, x, obj, gap, iters, elapsed = _BACKENDS[backend](std, n, tol, max_iter)
        res = {}
        if kind == "solved":
            res = check_residuals(program, x, std)
            res["gap"] = gap
            good = res["primal"] <= tol and res["psd_min_eig"] >= -tol and gap <= tol
            status = OPTIMAL if good else NUMERICAL_ERROR
            if not good:
                log.debug("%s solution failed re-check: %s", backend, res)
        elif kind == "infeasible":
            status = INFEASIBLE
        elif kind == "max_iters":
            status = MAX_ITERS
        else:
            status = NUMERICAL_ERROR
        result = SolveResult(
            status=status,
            x=x,
            objective=sign * (obj + std[1]),
            residuals=res,
            iterations=iters,
            solve_time=elapsed,
            backend=backend,
        )
        if status in (OPTIMAL, INFEASIBLE):
            break
    return result
