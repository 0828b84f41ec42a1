"""Constrained finite-horizon LQ MPC: condensing, QP solution, closed loop.

The horizon-``N`` problem from measured state ``xhat`` is

    min  sum_{k<N} [x_k; u_k]^T H [x_k; u_k] + x_N^T Pf x_N
    s.t. x_0 = xhat,  x_{k+1} = A x_k + B u_k,
         C x_k + D u_k + e <= 0,   k = 0..N-1.

Eliminating the states gives a dense QP in the stacked inputs
``U = [u_0; ...; u_{N-1}]``:

    min  U^T Hq U + 2 xhat^T F^T U + xhat^T Y xhat
    s.t. G U + W xhat + w <= 0.
"""
from dataclasses import dataclass
import warnings

import numpy as np
import scipy.linalg

from . import lqmodel as lqm
from . import matkit as mk
from .errors import InfeasibleQp, LqrhcError, MaxIterations, NotPD
from .matkit import DEFAULT_TOL

__all__ = [
    "MpcProblem", "CondensedQp", "QpResult", "ClosedLoopTrace",
    "condense", "active_set_qp", "solve_qp", "simulate", "trace_rows",
]

DIVERGENCE_BOUND = 1e12


@dataclass(frozen=True)
class MpcProblem:
    problem: lqm.LqProblem
    horizon: int
    constraints: lqm.AffineConstraintSet = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        c = self.constraints
        if c is not None and (c.C.shape[1] != self.problem.n_x
                              or c.D.shape[1] != self.problem.n_u):
            raise ValueError("constraint blocks do not match problem dimensions")


@dataclass(frozen=True)
class CondensedQp:
    H: np.ndarray          # (N n_u, N n_u)
    F: np.ndarray          # (N n_u, n_x)
    Y: np.ndarray          # (n_x, n_x)
    G: np.ndarray          # (rows, N n_u)
    W: np.ndarray          # (rows, n_x)
    w: np.ndarray          # (rows,)
    Sx: np.ndarray         # stacked state prediction, ((N+1) n_x, n_x)
    Su: np.ndarray         # ((N+1) n_x, N n_u)
    n_u: int

    @property
    def n_rows(self):
        return self.G.shape[0]

    def objective(self, xhat, U):
        xhat, U = np.ravel(xhat), np.ravel(U)
        return float(U @ self.H @ U + 2.0 * xhat @ self.F.T @ U + xhat @ self.Y @ xhat)

    def constraint_values(self, xhat, U):
        return self.G @ np.ravel(U) + self.W @ np.ravel(xhat) + self.w

    def predict(self, xhat, U):
        n_x = self.Sx.shape[1]
        return (self.Sx @ np.ravel(xhat) + self.Su @ np.ravel(U)).reshape(-1, n_x)


def condense(mpc):
    p, N = mpc.problem, mpc.horizon
    A, B = p.A, p.B
    n_x, n_u = p.n_x, p.n_u
    Sx = np.zeros(((N + 1) * n_x, n_x))
    Su = np.zeros(((N + 1) * n_x, N * n_u))
    Sx[:n_x] = np.eye(n_x)
    for k in range(N):
        r0, r1 = (k + 1) * n_x, (k + 2) * n_x
        Sx[r0:r1] = A @ Sx[k * n_x:r0]
        Su[r0:r1] = A @ Su[k * n_x:r0]
        Su[r0:r1, k * n_u:(k + 1) * n_u] = B
    Qbar = scipy.linalg.block_diag(*([p.Q] * N + [p.Pf]))
    Rbar = scipy.linalg.block_diag(*([p.R] * N))
    Sbar = np.zeros((N * n_u, (N + 1) * n_x))
    for k in range(N):
        Sbar[k * n_u:(k + 1) * n_u, k * n_x:(k + 1) * n_x] = p.S
    H = Su.T @ Qbar @ Su + Su.T @ Sbar.T + Sbar @ Su + Rbar
    H = 0.5 * (H + H.T)
    F = Su.T @ Qbar @ Sx + Sbar @ Sx
    Y = Sx.T @ Qbar @ Sx
    c = mpc.constraints
    if c is None:
        G = np.zeros((0, N * n_u))
        W = np.zeros((0, n_x))
        w = np.zeros(0)
    else:
        Cbar = scipy.linalg.block_diag(*([c.C] * N))
        Dbar = scipy.linalg.block_diag(*([c.D] * N))
        G = Cbar @ Su[:N * n_x] + Dbar
        W = Cbar @ Sx[:N * n_x]
        w = np.tile(c.e, N)
    if not mk.is_pd(H):
        warnings.warn("condensed Hessian is not positive definite; "
                      "solve_qp will reject it", RuntimeWarning, stacklevel=2)
    return CondensedQp(H, F, 0.5 * (Y + Y.T), G, W, w, Sx, Su, n_u)


@dataclass(frozen=True)
class QpResult:
    x: np.ndarray
    value: float
    active_set: tuple
    multipliers: np.ndarray     # one per row of G; zero off the active set
    iterations: int


def active_set_qp(H, g, G, h, max_iter=None, feas_tol=1e-11):
    """Strictly convex QP ``min 1/2 x^T H x + g^T x`` s.t. ``G x <= h``.

    Dual active-set method (Goldfarb-Idnani). It starts from the
    unconstrained minimizer with an empty working set and adds the most
    violated constraint (lowest index on ties) until the iterate is primal
    feasible; dual feasibility holds throughout.

    Raises
    ------
    NotPD
        ``H`` is not positive definite.
    InfeasibleQp
        The violated constraint cannot be satisfied together with the
        current working set, which proves infeasibility.
    MaxIterations
        More than ``100 * (rows + 1)`` working-set changes.
    """
    H = np.asarray(H, float)
    g = np.asarray(g, float).reshape(-1)
    G = np.asarray(G, float).reshape(-1, g.size)
    h = np.asarray(h, float).reshape(-1)
    m = G.shape[0]
    if max_iter is None:
        max_iter = 100 * (m + 1)
    cf = (mk.cholesky(H), True)

    def Hinv(v):
        return scipy.linalg.cho_solve(cf, v, check_finite=False)

    x = -Hinv(g)
    active = []
    u = np.zeros(0)
    rownorm = np.linalg.norm(G, axis=1)
    it = 0
    while True:
        viol = G @ x - h
        thr = feas_tol * np.maximum(1.0, np.maximum(np.abs(h), rownorm * np.linalg.norm(x)))
        viol[active] = -np.inf
        if m == 0 or np.max(viol - thr) <= 0.0:
            break
        p = int(np.argmax(np.where(viol > thr, viol, -np.inf)))
        a = -G[p]                      # constraint as a^T x >= -h_p
        u_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                raise MaxIterations(f"active-set QP exceeded {max_iter} iterations")
            Ha = Hinv(a)
            if active:
                N = -G[active].T
                HN = Hinv(N)
                r = mk.solve(N.T @ HN, N.T @ Ha)
                z = Ha - HN @ r
            else:
                r = np.zeros(0)
                z = Ha
            za = float(z @ a)
            s_p = float(a @ x + h[p])
            pos = np.flatnonzero(r > 1e-14 * max(1.0, np.max(np.abs(r), initial=0.0)))
            if pos.size:
                ratios = u[pos] / r[pos]
                t1 = float(np.min(ratios))
                tied = pos[ratios <= t1 * (1 + 1e-12) + 1e-300]
                drop = min(tied, key=lambda j: active[j])
            else:
                t1, drop = np.inf, None
            if za <= 1e-10 * float(a @ Ha):
                # a is in the span of the working-set normals
                if drop is None:
                    raise InfeasibleQp(f"constraint row {p} cannot be satisfied")
                u = u - t1 * r
                u_p += t1
                del active[drop]
                u = np.delete(u, drop)
                continue
            t2 = -s_p / za
            t = min(t1, t2)
            x = x + t * z
            u = u - t * r
            u_p += t
            if t2 <= t1:
                active.append(p)
                u = np.append(u, u_p)
                break
            del active[drop]
            u = np.delete(u, drop)
    lam = np.zeros(m)
    lam[active] = np.maximum(u, 0.0)
    val = 0.5 * x @ H @ x + g @ x
    order = sorted(range(len(active)), key=lambda j: active[j])
    return QpResult(x, float(val), tuple(active[j] for j in order), lam, it)


def solve_qp(qp, xhat):
    """Minimize the condensed objective at ``xhat``.

    Returns a :class:`QpResult` whose ``value`` is the MPC objective
    (including the constant ``xhat^T Y xhat``) and whose ``x`` is the
    stacked input sequence.
    """
    xhat = np.ravel(np.asarray(xhat, float))
    g = 2.0 * qp.F @ xhat
    h = -(qp.W @ xhat + qp.w)
    res = active_set_qp(2.0 * qp.H, g, qp.G, h)
    value = res.value + float(xhat @ qp.Y @ xhat)
    return QpResult(res.x, value, res.active_set, res.multipliers, res.iterations)


@dataclass(frozen=True)
class ClosedLoopTrace:
    states: np.ndarray         # (J+1, n_x)
    inputs: np.ndarray         # (J, n_u)
    values: np.ndarray         # (J,)
    n_active: np.ndarray       # (J,)
    status: str                # "completed" | "diverged" | "infeasible" | "max_iterations" | "failed"
    message: str = ""

    @property
    def final_state(self):
        return self.states[-1]


def simulate(mpc, xhat0, N_sim, qp=None):
    """Receding-horizon closed loop ``x+ = A x + B u_0*`` for ``N_sim`` steps.

    Stops early with status ``"diverged"`` once ``||x|| > 1e12``, or with the
    QP failure status if a step cannot be solved; the partial trace is kept.
    """
    p = mpc.problem
    if qp is None:
        qp = condense(mpc)
    x = np.ravel(np.asarray(xhat0, float))
    if x.size != p.n_x:
        raise ValueError(f"xhat0 must have {p.n_x} entries")
    states, inputs, values, n_act = [x], [], [], []
    status, msg = "completed", ""
    for _ in range(N_sim):
        try:
            res = solve_qp(qp, x)
        except InfeasibleQp as exc:
            status, msg = "infeasible", str(exc)
            break
        except MaxIterations as exc:
            status, msg = "max_iterations", str(exc)
            break
        except LqrhcError as exc:
            status, msg = "failed", str(exc)
            break
        u0 = res.x[:p.n_u]
        x = p.A @ x + p.B @ u0
        inputs.append(u0)
        values.append(res.value)
        n_act.append(len(res.active_set))
        states.append(x)
        if np.linalg.norm(x) > DIVERGENCE_BOUND:
            status, msg = "diverged", f"||x|| exceeded {DIVERGENCE_BOUND:g}"
            break
    return ClosedLoopTrace(np.array(states), np.array(inputs).reshape(-1, p.n_u),
                           np.array(values), np.array(n_act, dtype=int), status, msg)


def trace_rows(trace):
    """CSV rows ``j, x_0.., u_0.., qp_value, n_active``; the last state has no input."""
    n_x = trace.states.shape[1]
    n_u = trace.inputs.shape[1]
    rows = []
    for j, xs in enumerate(trace.states):
        row = {"j": j}
        row.update({f"x{i}": float(v) for i, v in enumerate(xs)})
        has_u = j < len(trace.inputs)
        for i in range(n_u):
            row[f"u{i}"] = float(trace.inputs[j, i]) if has_u else ""
        row["qp_value"] = float(trace.values[j]) if has_u else ""
        row["n_active"] = int(trace.n_active[j]) if has_u else ""
        rows.append(row)
    return rows
