"""Convex QPs with tridiagonal Hessian and neighbour-coupled constraints.

Solves ``min 1/2 v'Qv - c'v  s.t.  A v >= b`` where ``Q`` is symmetric
positive definite tridiagonal and every row of ``A`` touches at most two
adjacent variables. Each interior-point iteration solves the augmented KKT
system by sparse LU, which costs time linear in the size; the normal-equations
matrix ``Q + A'DA`` would be tridiagonal as well but loses definiteness in
floating point once the barrier weights spread far apart. The interior-point
estimate of the active set is then polished by solving the
equality-constrained KKT system exactly.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError


@dataclass
class QPResult:
    x: np.ndarray
    multipliers: np.ndarray
    kkt_residual: float
    iterations: int
    polished: bool


def tridiag(diag, off):
    n = len(diag)
    return sp.diags([off, diag, off], [-1, 0, 1], shape=(n, n), format="csr")


def kkt_residual(Q, c, A, b, x, lam):
    """Largest violation among stationarity, feasibility, dual sign and complementarity."""
    slack = A @ x - b
    stat = Q @ x - c - A.T @ lam
    return float(max(
        np.max(np.abs(stat), initial=0.0),
        np.max(np.maximum(-slack, 0.0), initial=0.0),
        np.max(np.maximum(-lam, 0.0), initial=0.0),
        np.max(np.abs(lam * slack), initial=0.0),
    ))


def _step_to_boundary(z, dz):
    neg = dz < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-z[neg] / dz[neg])))


def _interior_point(Q, c, A, b, tol, max_iter):
    m = A.shape[0]
    n = Q.shape[0]
    x = spla.spsolve(Q.tocsc(), c) if Q.shape[0] else np.zeros(0)
    x = np.atleast_1d(x)
    s = np.maximum(A @ x - b, 1.0)
    lam = np.ones(m)
    cscale = 1.0 + np.max(np.abs(c), initial=0.0)
    bscale = 1.0 + np.max(np.abs(b), initial=0.0)
    for it in range(1, max_iter + 1):
        rd = Q @ x - c - A.T @ lam
        rp = A @ x - s - b
        mu = float(s @ lam) / m
        if (np.max(np.abs(rd)) <= tol * cscale and np.max(np.abs(rp), initial=0.0) <= tol * bscale
                and mu <= tol * cscale * bscale):
            return x, s, lam, it
        # augmented Newton system [Q, -A'; A, S/L]; stays well conditioned when
        # the barrier weights lam/s spread over many orders of magnitude
        K = sp.bmat([[Q, -A.T], [A, sp.diags(s / lam)]], format="csc")
        try:
            lu = spla.splu(K)
        except RuntimeError as exc:
            raise NumericalError(f"interior-point Newton system singular at iteration {it}") from exc

        def newton(rc):
            sol = lu.solve(np.concatenate([-rd, -rp + rc / lam]))
            dx, dl = sol[:n], sol[n:]
            ds = A @ dx + rp
            return dx, ds, dl

        # predictor
        dx, ds, dl = newton(-s * lam)
        ap = _step_to_boundary(s, ds)
        ad = _step_to_boundary(lam, dl)
        mu_aff = float((s + ap * ds) @ (lam + ad * dl)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        # corrector
        dx, ds, dl = newton(-s * lam - ds * dl + sigma * mu)
        alpha = 0.995 * min(_step_to_boundary(s, ds), _step_to_boundary(lam, dl))
        alpha = min(alpha, 1.0)
        x = x + alpha * dx
        s = np.maximum(s + alpha * ds, 1e-300)
        lam = np.maximum(lam + alpha * dl, 1e-300)
    return x, s, lam, max_iter


def _solve_active(Q, c, A, b, active):
    n = Q.shape[0]
    As = A[active]
    K = sp.bmat([[Q, -As.T], [As, None]], format="csc")
    rhs = np.concatenate([c, b[active]])
    with np.errstate(all="ignore"):
        try:
            sol = spla.spsolve(K, rhs)
        except RuntimeError:
            return None
    if not np.all(np.isfinite(sol)):
        return None
    full = np.zeros(A.shape[0])
    full[active] = sol[n:]
    return sol[:n], full


def _polish(Q, c, A, b, s, lam, max_rounds=30):
    """Primal-dual active-set refinement started from the interior-point guess."""
    active = np.flatnonzero(lam > s)
    best = None
    seen = set()
    for _ in range(max_rounds):
        key = active.tobytes()
        if key in seen:
            break
        seen.add(key)
        out = _solve_active(Q, c, A, b, active)
        if out is None:
            break
        x, full = out
        res = kkt_residual(Q, c, A, b, x, full)
        if best is None or res < best[2]:
            best = (x, full, res)
        slack = A @ x - b
        nxt = np.flatnonzero(full - slack > 0)
        if np.array_equal(nxt, active):
            break
        active = nxt
    return None if best is None else best[:2]


def solve_qp(Q, c, A, b, *, tol=1e-13, max_iter=200):
    """Solve ``min 1/2 x'Qx - c'x  s.t.  A x >= b``.

    ``Q`` and ``A`` are scipy sparse matrices with the structure described in
    the module docstring. Raises :class:`NumericalError` if neither the
    interior-point iterate nor its polished version satisfies the KKT
    conditions to ``1e-9``.
    """
    Q = sp.csr_matrix(Q)
    A = sp.csr_matrix(A)
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    x, s, lam, iters = _interior_point(Q, c, A, b, tol, max_iter)
    best = (x, lam, kkt_residual(Q, c, A, b, x, lam), False)
    polished = _polish(Q, c, A, b, s, lam)
    if polished is not None:
        px, plam = polished
        res = kkt_residual(Q, c, A, b, px, plam)
        if res <= best[2]:
            best = (px, plam, res, True)
    if not best[2] <= 1e-9:
        raise NumericalError(
            f"QP solve failed: KKT residual {best[2]:.3e} after {iters} iterations; "
            f"iterate head {np.array2string(best[0][:5], precision=6)}")
    return QPResult(best[0], best[1], best[2], iters, best[3])
