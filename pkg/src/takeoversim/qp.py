"""Dense active-set solver for small box/rate-constrained QPs.

Problems have the form

    min  0.5 x'Hx + g'x
    s.t. lower <= x <= upper
         l_ineq <= A_ineq x <= u_ineq

with H symmetric positive (semi)definite.  Sizes here are tiny (n <= ~10
decision variables for a condensed MPC with a scalar input), so everything
is dense and a primal active-set iteration with at most one working-set
change per step is both simple and fast.  Rows with equal lower and upper
bound are held as equalities throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_TOL = 1e-10
_REG = 1e-9
MAX_ITER = 200

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter"
STATUS_INFEASIBLE = "infeasible"


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    A_ineq: np.ndarray | None = None
    l_ineq: np.ndarray | None = None
    u_ineq: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).ravel()
        n = self.g.size
        if self.H.shape != (n, n):
            raise ValueError(f"H shape {self.H.shape} does not match g size {n}")
        if not np.allclose(self.H, self.H.T, atol=1e-10):
            raise ValueError("H must be symmetric")
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bound vectors must have the same size as g")
        if self.A_ineq is not None:
            self.A_ineq = np.atleast_2d(np.asarray(self.A_ineq, dtype=float))
            if self.A_ineq.shape[1] != n:
                raise ValueError("A_ineq column count must equal n")
            self.l_ineq = np.asarray(self.l_ineq, dtype=float).ravel()
            self.u_ineq = np.asarray(self.u_ineq, dtype=float).ravel()
            if self.l_ineq.size != self.A_ineq.shape[0] or \
                    self.u_ineq.size != self.A_ineq.shape[0]:
                raise ValueError("inequality bound sizes must match A_ineq rows")

    @property
    def n(self) -> int:
        return self.g.size


@dataclass
class QpSolution:
    x: np.ndarray
    objective: float
    status: str
    kkt_residual: float
    iterations: int
    regularized: bool = False
    active_set: list = field(default_factory=list)


def dump(problem: QpProblem) -> str:
    """Plain-text rendering of a problem, for debugging dumps."""
    lines = [f"QpProblem n={problem.n}"]
    lines.append("H =\n" + np.array2string(problem.H, precision=6))
    lines.append("g = " + np.array2string(problem.g, precision=6))
    lines.append("lower = " + np.array2string(problem.lower, precision=6))
    lines.append("upper = " + np.array2string(problem.upper, precision=6))
    if problem.A_ineq is not None:
        lines.append("A_ineq =\n" + np.array2string(problem.A_ineq, precision=6))
        lines.append("l_ineq = " + np.array2string(problem.l_ineq, precision=6))
        lines.append("u_ineq = " + np.array2string(problem.u_ineq, precision=6))
    return "\n".join(lines)


def _constraint_rows(problem: QpProblem):
    """All constraints as (a, lo, hi) rows; box rows first."""
    n = problem.n
    rows_a = list(np.eye(n))
    lo = list(problem.lower)
    hi = list(problem.upper)
    if problem.A_ineq is not None:
        rows_a += list(problem.A_ineq)
        lo += list(problem.l_ineq)
        hi += list(problem.u_ineq)
    return np.array(rows_a), np.array(lo), np.array(hi)


def _feasible_start(x0: np.ndarray, A: np.ndarray, lo: np.ndarray,
                    hi: np.ndarray, n: int) -> np.ndarray | None:
    """Find a feasible point near x0.

    Equality rows (lo == hi) are restored exactly by a min-norm least
    squares correction; the remaining rows are satisfied by cyclic
    projection restricted to the equality manifold.
    """
    eq = (hi - lo) <= _TOL
    if eq.any():
        Aeq = A[eq]
        beq = lo[eq]
        corr, *_ = np.linalg.lstsq(Aeq, beq - Aeq @ x0, rcond=None)
        x = x0 + corr
        proj = np.eye(n) - np.linalg.pinv(Aeq) @ Aeq
    else:
        x = np.clip(x0, lo[:n], hi[:n])
        proj = np.eye(n)
    dirs = A @ proj.T
    denoms = np.einsum("ij,ij->i", A, dirs)
    for _ in range(300):
        vals = A @ x
        worst = max((lo - vals).max(), (vals - hi).max())
        if worst <= 1e-11:
            return x
        for i in range(A.shape[0]):
            if eq[i]:
                continue
            v = A[i] @ x
            target = lo[i] if v < lo[i] else (hi[i] if v > hi[i] else None)
            if target is None:
                continue
            if abs(denoms[i]) < 1e-14:
                return None  # violated row orthogonal to the manifold
            x = x + dirs[i] * ((target - v) / denoms[i])
    vals = A @ x
    if max((lo - vals).max(), (vals - hi).max()) <= 1e-9:
        return x
    return None


def solve(problem: QpProblem, warm_start: np.ndarray | None = None) -> QpSolution:
    """Solve the QP; deterministic for identical inputs.

    A warm start only changes the iteration path, never the optimum
    (beyond solver tolerance).  Status is ``infeasible`` when the
    constraint set is empty, ``max_iter`` after MAX_ITER working-set
    changes.
    """
    n = problem.n
    H = problem.H
    regularized = False
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        H = H + _REG * np.eye(n)
        regularized = True
        np.linalg.cholesky(H)  # PSD + regularization must factor

    A, lo, hi = _constraint_rows(problem)
    if np.any(lo > hi + _TOL):
        return QpSolution(np.full(n, np.nan), np.nan, STATUS_INFEASIBLE,
                          np.inf, 0, regularized)

    g = problem.g

    def objective(x):
        return 0.5 * x @ H @ x + g @ x

    # Unconstrained fast path.
    x_unc = np.linalg.solve(H, -g)
    vals = A @ x_unc
    if np.all(vals >= lo - 1e-12) and np.all(vals <= hi + 1e-12):
        res = float(np.abs(H @ x_unc + g).max())
        return QpSolution(x_unc, objective(x_unc), STATUS_OPTIMAL, res, 0,
                          regularized)

    x0 = np.zeros(n) if warm_start is None else np.asarray(warm_start, float).ravel()
    x = _feasible_start(x0, A, lo, hi, n)
    if x is None:
        x = _feasible_start(np.zeros(n), A, lo, hi, n)
    if x is None:
        return QpSolution(np.full(n, np.nan), np.nan, STATUS_INFEASIBLE,
                          np.inf, 0, regularized)

    m = A.shape[0]
    equality = np.abs(hi - lo) <= _TOL
    # Working set: constraint index -> side (-1 lower, +1 upper, 0 equality).
    work: dict[int, int] = {i: 0 for i in range(m) if equality[i]}

    status = STATUS_MAX_ITER
    iters = 0
    for iters in range(1, MAX_ITER + 1):
        idx = sorted(work)
        if idx:
            Aw = A[idx]
            bw = np.array([hi[i] if work[i] > 0 else lo[i] for i in idx])
            k = len(idx)
            KKT = np.block([[H, Aw.T], [Aw, np.zeros((k, k))]])
            rhs = np.concatenate([-g, bw])
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(KKT, rhs, rcond=None)[0]
            x_eq, mult = sol[:n], sol[n:]
        else:
            x_eq = x_unc
            mult = np.zeros(0)

        p = x_eq - x
        if np.abs(p).max() <= 1e-12:
            # Multiplier signs: upper-side actives need mult >= 0,
            # lower-side actives need mult <= 0.
            offend, worst = None, _TOL
            for j, i in enumerate(idx):
                side = work[i]
                if side == 0:
                    continue
                off = -mult[j] if side > 0 else mult[j]
                if off > worst:
                    offend, worst = i, off
            if offend is None:
                status = STATUS_OPTIMAL
                break
            del work[offend]
            continue

        # Longest feasible step along p; blocking row enters the set.
        step = 1.0
        blocking, block_side = None, 0
        Ap = A @ p
        Ax = A @ x
        for i in range(m):
            if i in work:
                continue
            if Ap[i] > _TOL:
                t = (hi[i] - Ax[i]) / Ap[i]
                side = 1
            elif Ap[i] < -_TOL:
                t = (lo[i] - Ax[i]) / Ap[i]
                side = -1
            else:
                continue
            if t < step - 1e-14:
                step, blocking, block_side = max(t, 0.0), i, side
        x = x + step * p
        if blocking is not None:
            work[blocking] = block_side

    # KKT residuals at the returned point.
    idx = sorted(work)
    stat = H @ x + g
    comp = 0.0
    if idx and status == STATUS_OPTIMAL:
        Aw = A[idx]
        lam, *_ = np.linalg.lstsq(Aw.T, -stat, rcond=None)
        stat = stat + Aw.T @ lam
        vals_w = Aw @ x
        for j, i in enumerate(idx):
            tgt = hi[i] if work[i] > 0 else lo[i]
            comp = max(comp, abs(lam[j] * (vals_w[j] - tgt)))
    vals = A @ x
    primal = max(0.0, float((lo - vals).max()), float((vals - hi).max()))
    kkt = max(float(np.abs(stat).max()), primal, comp)
    return QpSolution(x, objective(x), status, kkt, iters, regularized,
                      active_set=[(i, work[i]) for i in idx])


class CondensedMpc:
    """Precomputed condensing for x+ = A_d x + B_d u, y = C x.

    States are eliminated by forward substitution so the decision vector
    is the input sequence (u_0..u_{N-1}); the stacked prediction matrices
    F, G depend only on the model and are built once.  ``problem_for``
    then assembles the per-tick QP from the current state, reference and
    rate anchor.
    """

    def __init__(self, a_d, b_d, c_out, n_horizon: int, w_out, q_in: float,
                 u_min: float, u_max: float, du_min: float, du_max: float,
                 du_first: tuple[float, float] | None = None):
        A = np.atleast_2d(np.asarray(a_d, dtype=float))
        self.nx = A.shape[0]
        if A.shape != (self.nx, self.nx):
            raise ValueError("a_d must be square")
        B = np.asarray(b_d, dtype=float).reshape(self.nx)
        C = np.atleast_2d(np.asarray(c_out, dtype=float))
        if C.shape[1] != self.nx:
            raise ValueError("c_out column count must match the state size")
        self.ny = C.shape[0]
        N = int(n_horizon)
        if N < 1:
            raise ValueError("horizon must be >= 1")
        self.N = N
        W = np.atleast_2d(np.asarray(w_out, dtype=float))
        if W.shape != (self.ny, self.ny):
            raise ValueError("w_out must be ny x ny")
        self.q_in = float(q_in)

        F = np.zeros((N * self.ny, self.nx))
        G = np.zeros((N * self.ny, N))
        powers = [np.eye(self.nx)]
        for _ in range(N):
            powers.append(A @ powers[-1])
        for i in range(1, N + 1):
            F[(i - 1) * self.ny:i * self.ny] = C @ powers[i]
            for j in range(i):
                G[(i - 1) * self.ny:i * self.ny, j] = C @ (powers[i - 1 - j] @ B)
        self.F, self.G = F, G
        self.Wbar = np.kron(np.eye(N), W)
        H = 2.0 * (G.T @ self.Wbar @ G + self.q_in * np.eye(N))
        self.H = 0.5 * (H + H.T)
        self._M = 2.0 * G.T @ self.Wbar    # g = M (F x0 - ref)

        self.lower = np.full(N, u_min)
        self.upper = np.full(N, u_max)
        D = np.eye(N)
        for i in range(1, N):
            D[i, i - 1] = -1.0
        self.D = D
        self.du = (du_min, du_max)
        self.du_first = du_first if du_first is not None else (du_min, du_max)

    def problem_for(self, x0, ref, u_prev: float,
                    w_scale: float = 1.0) -> QpProblem:
        """Assemble the QP at the current state/reference.

        ``w_scale`` uniformly rescales the tracking weight (used when the
        output map itself carries a per-tick normalization).
        """
        x = np.asarray(x0, dtype=float).reshape(self.nx)
        R = np.asarray(ref, dtype=float).reshape(self.N * self.ny)
        if w_scale == 1.0:
            H = self.H
            g = self._M @ (self.F @ x - R)
        else:
            H = 2.0 * (w_scale * (self.G.T @ self.Wbar @ self.G)
                       + self.q_in * np.eye(self.N))
            H = 0.5 * (H + H.T)
            g = w_scale * (self._M @ (self.F @ x - R))
        l_rate = np.concatenate([[u_prev + self.du_first[0]],
                                 np.full(self.N - 1, self.du[0])])
        u_rate = np.concatenate([[u_prev + self.du_first[1]],
                                 np.full(self.N - 1, self.du[1])])
        return QpProblem(H=H, g=g, lower=self.lower.copy(),
                         upper=self.upper.copy(), A_ineq=self.D,
                         l_ineq=l_rate, u_ineq=u_rate)


def condense(a_d, b_d, c_out, x0, n_horizon: int, w_out, q_in: float,
             ref, u_min: float, u_max: float, du_min: float, du_max: float,
             u_prev: float, du_first: tuple[float, float] | None = None
             ) -> QpProblem:
    """One-shot condensing of an input-sequence MPC into a dense QP.

    Predicts x_{i+1} = A_d x_i + B_d u_i from x0, outputs y_i = C x_i for
    i = 1..N, and builds

        J = sum_i (y_i - ref_i)' W (y_i - ref_i) + q * sum_i u_i^2

    over the decision vector (u_0..u_{N-1}).  Box bounds apply per input;
    rate rows bound u_i - u_{i-1} with the u_{-1} = u_prev anchor.
    ``du_first`` optionally overrides the (min, max) rate window of the
    first move, for anchors sampled at a different period.
    """
    template = CondensedMpc(a_d, b_d, c_out, n_horizon, w_out, q_in,
                            u_min, u_max, du_min, du_max, du_first)
    return template.problem_for(x0, ref, u_prev)
