"""Dense primal active-set solver for small convex quadratic programs.

    minimize    0.5 x'Qx + c'x
    subject to  A x <= b,  E x = d

Q must be positive semidefinite; a feasible start x0 is required. Problems
here have at most a few hundred variables, so KKT systems are solved densely
(least squares, which also copes with redundant active rows).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KKT_TOL = 1e-8


@dataclass
class QpResult:
    x: np.ndarray
    objective: float
    status: str  # "optimal" | "iteration_limit"
    iterations: int


def _objective(Q, c, x) -> float:
    return float(0.5 * x @ Q @ x + c @ x)


def solve_qp(Q, c, A=None, b=None, E=None, d=None, x0=None, max_iter=None) -> QpResult:
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
    A = np.zeros((0, n)) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(0) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    E = np.zeros((0, n)) if E is None else np.atleast_2d(np.asarray(E, dtype=float))
    d = np.zeros(0) if d is None else np.atleast_1d(np.asarray(d, dtype=float))
    if x0 is None:
        raise ValueError("active-set solver needs a feasible starting point")
    x = np.asarray(x0, dtype=float).copy()
    if A.size and np.any(A @ x > b + 1e-7):
        raise ValueError("starting point violates inequality constraints")
    if E.size and np.any(np.abs(E @ x - d) > 1e-7):
        raise ValueError("starting point violates equality constraints")
    if max_iter is None:
        max_iter = 50 * (n + len(b) + len(d) + 2)

    active: list[int] = [i for i in range(len(b)) if b[i] - A[i] @ x < KKT_TOL]
    n_eq = E.shape[0]

    for it in range(1, max_iter + 1):
        W = A[active] if active else np.zeros((0, n))
        C = np.vstack([E, W])
        m = C.shape[0]
        KKT = np.zeros((n + m, n + m))
        KKT[:n, :n] = Q
        if m:
            KKT[:n, n:] = C.T
            KKT[n:, :n] = C
        rhs = np.concatenate([-(Q @ x + c), np.zeros(m)])
        sol, *_ = np.linalg.lstsq(KKT, rhs, rcond=None)
        p = sol[:n]
        lam = sol[n:]

        if np.linalg.norm(p) <= KKT_TOL:
            if not active:
                return QpResult(x=x, objective=_objective(Q, c, x), status="optimal", iterations=it)
            ineq_lam = lam[n_eq:]
            worst = int(np.argmin(ineq_lam))
            if ineq_lam[worst] >= -KKT_TOL:
                return QpResult(x=x, objective=_objective(Q, c, x), status="optimal", iterations=it)
            active.pop(worst)
            continue

        # longest step along p before an inactive constraint blocks
        alpha, blocker = 1.0, None
        if len(b):
            inactive = [i for i in range(len(b)) if i not in active]
            for i in inactive:
                ap = A[i] @ p
                if ap > KKT_TOL:
                    step = (b[i] - A[i] @ x) / ap
                    if step < alpha - 1e-14:
                        alpha, blocker = max(step, 0.0), i
        x = x + alpha * p
        if blocker is not None:
            active.append(blocker)

    return QpResult(x=x, objective=_objective(Q, c, x), status="iteration_limit", iterations=max_iter)
