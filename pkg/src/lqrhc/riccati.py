"""Riccati recursion, DARE and reverse DARE solutions, and solution gaps.

The recursion is

    K_{n+1} = (R + B^T P_n B)^{-1} (S + B^T P_n A)
    P_{n+1} = Q + A^T P_n A - (S^T + A^T P_n B) K_{n+1}

and a DARE solution is any symmetric fixed point of it.

Stabilizing solutions are computed by iterating the *rotated* problem,
whose stage cost is positive definite, from zero and shifting the limit
back by the storage matrix. The reverse equation is handled the same way
after flipping the sign of its (negative definite) rotated stage cost.
"""
from dataclasses import dataclass
import itertools

import numpy as np

from . import lqmodel as lqm
from . import matkit as mk
from .errors import (NoCertificate, NonConvergence, NotControllable,
                     NotStabilizable, SingularInnerMatrix, SingularMatrix)
from .matkit import DEFAULT_TOL, Spectrum

__all__ = [
    "DareSolution", "RdareData", "RiccatiTrajectory", "SolutionGap",
    "AntistabTest", "NotExists",
    "inner_matrix", "feedback", "riccati_step", "iterate", "dare_residual",
    "classify", "dare_solution", "lyapunov_solve", "solve_dare_hewer",
    "bootstrap_stabilizing", "bootstrap_rdare_stabilizing",
    "solve_dare_stabilizing", "build_rdare", "solve_rdare_stabilizing",
    "antistab_existence_test", "solve_dare_antistabilizing", "gap",
    "gap_step", "verify_inner_pd", "enumerate_dare_solutions",
]


@dataclass(frozen=True)
class DareSolution:
    P: np.ndarray
    K: np.ndarray
    classification: str          # "stabilizing" | "antistabilizing" | "mixed"
    closed_loop_spectrum: Spectrum
    residual: float

    @property
    def exists(self):
        return True


@dataclass(frozen=True)
class NotExists:
    """The antistabilizing solution does not exist.

    ``Pbar_s``, the stabilizing solution of the reverse equation, stands in
    for it in terminal-cost design.
    """
    Pbar_s: np.ndarray
    determinant: float

    @property
    def exists(self):
        return False


@dataclass(frozen=True)
class RdareData:
    Abar: np.ndarray
    Bbar: np.ndarray
    Qbar: np.ndarray
    Sbar: np.ndarray
    Rbar: np.ndarray
    Khat: np.ndarray

    @property
    def Hbar(self):
        return np.block([[self.Qbar, self.Sbar.T], [self.Sbar, self.Rbar]])

    def negated_problem(self):
        """The forward problem ``(Abar, Bbar)`` with stage cost ``-Hbar``."""
        return lqm.LqProblem.from_arrays(self.Abar, self.Bbar, -self.Qbar,
                                         -self.Sbar, -self.Rbar)


@dataclass(frozen=True)
class RiccatiTrajectory:
    """``P_seq[n]`` is ``P_n`` for ``n = 0..N``; ``K_seq[n-1]`` is ``K_n``."""
    P_seq: list
    K_seq: list

    @property
    def horizon(self):
        return len(self.K_seq)

    def P(self, n):
        return self.P_seq[n]

    def K(self, n):
        if n < 1:
            raise IndexError("K_n is defined for n >= 1")
        return self.K_seq[n - 1]


@dataclass(frozen=True)
class SolutionGap:
    Delta: np.ndarray
    R_ref: np.ndarray
    A_ref: np.ndarray
    kind: str                    # "vs_stabilizing" | "vs_antistabilizing"
    residual: float


@dataclass(frozen=True)
class AntistabTest:
    exists: bool
    determinant: float
    threshold: float

    @property
    def verdict(self):
        return "exists" if self.exists else "not_exists"


# ---------------------------------------------------------------------------
# Recursion
# ---------------------------------------------------------------------------

def inner_matrix(problem, P):
    """``R + B^T P B``."""
    B = problem.B
    M = problem.R + B.T @ P @ B
    return 0.5 * (M + M.T)


def feedback(problem, P):
    """``K = (R + B^T P B)^{-1} (S + B^T P A)``.

    Raises
    ------
    SingularInnerMatrix
        If ``R + B^T P B`` has an eigenvalue of modulus at most
        ``1e-12 * max(1, ||R + B^T P B||_F)``.
    """
    M = inner_matrix(problem, P)
    ev = mk.sym_eigvals(M)
    if np.min(np.abs(ev)) <= 1e-12 * mk.scale_of(M):
        raise SingularInnerMatrix(
            f"R + B^T P B is singular (eigenvalues {ev})")
    try:
        return mk.solve(M, problem.S + problem.B.T @ P @ problem.A)
    except SingularMatrix as exc:
        raise SingularInnerMatrix(str(exc)) from None


def riccati_step(P, problem):
    """One step of the Riccati recursion; returns ``(P_next, K_next)``."""
    A, B = problem.A, problem.B
    K = feedback(problem, P)
    Pn = problem.Q + A.T @ P @ A - (problem.S.T + A.T @ P @ B) @ K
    return 0.5 * (Pn + Pn.T), K


def iterate(problem, N, P0=None):
    """Run the recursion ``N`` steps from ``P0`` (default: the terminal cost)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    P = problem.Pf if P0 is None else mk.as_sym(P0, "P0")
    Ps, Ks = [P], []
    for _ in range(N):
        P, K = riccati_step(P, problem)
        Ps.append(P)
        Ks.append(K)
    return RiccatiTrajectory(Ps, Ks)


def dare_residual(problem, P):
    P = np.asarray(P, dtype=float)
    Pn, _ = riccati_step(P, problem)
    return mk.fro(Pn - P)


def classify(spectrum, margin=DEFAULT_TOL.schur_margin):
    mods = np.abs(spectrum.eigenvalues)
    if np.all(mods < 1.0 - margin):
        return "stabilizing"
    if np.all(mods > 1.0 + margin):
        return "antistabilizing"
    return "mixed"


def dare_solution(problem, P, margin=DEFAULT_TOL.schur_margin):
    """Package a DARE solution with its feedback and spectral class."""
    P = mk.as_sym(P, "P")
    Pn, K = riccati_step(P, problem)
    spec = mk.eigenvalues(problem.A - problem.B @ K)
    return DareSolution(P, K, classify(spec, margin), spec, mk.fro(Pn - P))


# ---------------------------------------------------------------------------
# Certificate-free stabilizing solve (Hewer's policy iteration)
# ---------------------------------------------------------------------------

def lyapunov_solve(Acl, W):
    """Solve ``X = Acl^T X Acl + W`` through its Kronecker form."""
    n = Acl.shape[0]
    At = Acl.T
    M = np.eye(n * n) - np.kron(At, At)
    X = mk.solve(M, W.reshape(-1, 1)).reshape(n, n)
    return 0.5 * (X + X.T)


def _closed_loop_cost(problem, K):
    Q, S, R = problem.Q, problem.S, problem.R
    QK = Q - S.T @ K - K.T @ S + K.T @ R @ K
    return 0.5 * (QK + QK.T)


def _initial_stabilizing_gain(sys, tol):
    # identity-weighted LQR gain stabilizes any stabilizable pair
    n_x, n_u = sys.n_x, sys.n_u
    aux = lqm.LqProblem.from_arrays(sys.A, sys.B, np.eye(n_x),
                                    np.zeros((n_u, n_x)), np.eye(n_u))
    P = np.zeros((n_x, n_x))
    for _ in range(tol.riccati_max_iter):
        Pn, K = riccati_step(P, aux)
        if mk.fro(Pn - P) <= 1e-10 * mk.scale_of(Pn):
            break
        P = Pn
    K = feedback(aux, Pn)
    if not mk.is_schur_stable(sys.A - sys.B @ K, tol.schur_margin):
        raise NotStabilizable("(A, B) is not stabilizable")
    return K


def solve_dare_hewer(problem, tol=DEFAULT_TOL, max_iter=100):
    """Stabilizing DARE solution by policy iteration, without a storage matrix.

    Policy evaluation is invariant under cost rotation up to the shift by
    ``Lambda``, so the iteration behaves like the positive definite case
    whenever some strict storage exists, even though none is supplied.
    """
    K = _initial_stabilizing_gain(problem.sys, tol)
    P = None
    for _ in range(max_iter):
        Acl = problem.A - problem.B @ K
        Pn = lyapunov_solve(Acl, _closed_loop_cost(problem, K))
        K = feedback(problem, Pn)
        if P is not None and mk.fro(Pn - P) <= 1e-12 * mk.scale_of(Pn):
            return Pn
        P = Pn
    raise NonConvergence(f"policy iteration did not converge in {max_iter} steps")


def bootstrap_stabilizing(problem, tol=DEFAULT_TOL):
    if not lqm.is_stabilizable(problem.sys, tol.rank_tol, tol.schur_margin):
        raise NotStabilizable("(A, B) is not stabilizable")
    return solve_dare_hewer(problem, tol)


def bootstrap_rdare_stabilizing(problem, tol=DEFAULT_TOL):
    """``Pbar_s`` by policy iteration on the sign-flipped reverse problem."""
    if not lqm.is_controllable(problem.sys, tol.rank_tol):
        raise NotControllable("the reverse equation needs (A, B) controllable")
    rd = build_rdare(problem)
    return -solve_dare_hewer(rd.negated_problem(), tol)


# ---------------------------------------------------------------------------
# Stabilizing solution through the rotated iteration
# ---------------------------------------------------------------------------

def _strict_storage(problem, storage, tol):
    if storage is None:
        for cand in lqm.suggest_storage(problem, tol):
            if cand.check.strict:
                return cand.storage.Lambda
        raise NoCertificate(
            "no suggested storage matrix is strict; supply Lambda explicitly")
    L = lqm._lam(storage)
    chk = lqm.check_predissipativity(problem.cost, problem.sys, L, tol.pd_tol)
    if not chk.strict:
        raise NoCertificate(
            f"Lambda does not certify strict pre-dissipativity "
            f"(lambda_min of rotated cost = {chk.lambda_min:.3e})")
    return L


def _iterate_to_fixed_point(problem, tol, P0=None):
    P = np.zeros((problem.n_x, problem.n_x)) if P0 is None else P0
    for _ in range(tol.riccati_max_iter):
        Pn, _ = riccati_step(P, problem)
        if mk.fro(Pn - P) <= tol.riccati_tol * mk.scale_of(P):
            return Pn
        P = Pn
    raise NonConvergence(
        f"Riccati iteration did not converge in {tol.riccati_max_iter} steps "
        f"(last step {mk.fro(Pn - P):.3e})")


def solve_dare_stabilizing(problem, storage=None, tol=DEFAULT_TOL):
    """Unique stabilizing DARE solution.

    Parameters
    ----------
    problem : LqProblem
    storage : StorageMatrix or array_like, optional
        Strict storage matrix. When omitted, the first strict candidate of
        :func:`lqrhc.lqmodel.suggest_storage` is used.
    tol : Tolerances

    Raises
    ------
    NoCertificate
        No strict storage matrix is available.
    NotStabilizable, NonConvergence
    """
    if not lqm.is_stabilizable(problem.sys, tol.rank_tol, tol.schur_margin):
        raise NotStabilizable("(A, B) is not stabilizable")
    L = _strict_storage(problem, storage, tol)
    rot = lqm.rotate_problem(problem, L)
    P = _iterate_to_fixed_point(rot, tol) - L
    return dare_solution(problem, P, tol.schur_margin)


# ---------------------------------------------------------------------------
# Reverse DARE
# ---------------------------------------------------------------------------

def build_rdare(problem, Khat=None):
    """Data of the reverse DARE.

    ``Abar = A^{-1}``, ``Bbar = A^{-1} B``, ``Qbar = -Abar^T Q Abar``,
    ``Sbar = S Abar - Bbar^T Q Abar``,
    ``Rbar = -R + S Bbar + Bbar^T S^T - Bbar^T Q Bbar``.
    If ``A`` is singular the problem is first pre-stabilized with ``Khat``
    (drawn by :func:`lqrhc.lqmodel.make_invertible_prestabilizer` if not given).
    """
    if Khat is None:
        Khat = lqm.make_invertible_prestabilizer(problem.sys)
    Khat = mk.as_matrix(Khat, "Khat")
    p = problem if not np.any(Khat) else lqm.prestabilize(problem, Khat)
    A, B, Q, S, R = p.A, p.B, p.Q, p.S, p.R
    Abar = mk.solve(A, np.eye(p.n_x))
    Bbar = Abar @ B
    Qbar = -Abar.T @ Q @ Abar
    Sbar = S @ Abar - Bbar.T @ Q @ Abar
    Rbar = -R + S @ Bbar + Bbar.T @ S.T - Bbar.T @ Q @ Bbar
    return RdareData(Abar, Bbar, 0.5 * (Qbar + Qbar.T), Sbar,
                     0.5 * (Rbar + Rbar.T), Khat)


def solve_rdare_stabilizing(problem, storage=None, tol=DEFAULT_TOL, Khat=None):
    """Stabilizing solution ``Pbar_s`` of the reverse DARE.

    The problem is rotated by a strict ``Lambda``; the reverse stage cost of
    the rotated problem is negative definite, so its negation defines a
    forward DARE with positive definite cost whose stabilizing solution is
    ``-(Pbar_s + Lambda)``.
    """
    if not lqm.is_controllable(problem.sys, tol.rank_tol):
        raise NotControllable("the reverse equation needs (A, B) controllable")
    L = _strict_storage(problem, storage, tol)
    if Khat is None:
        Khat = lqm.make_invertible_prestabilizer(problem.sys)
    rot = lqm.rotate_problem(problem, L)
    neg = build_rdare(rot, Khat).negated_problem()
    X = _iterate_to_fixed_point(neg, tol)
    Pbar = -X - L
    return 0.5 * (Pbar + Pbar.T)


def antistab_existence_test(problem):
    """Nonsingularity of ``[[R, S], [B, A]]``.

    The determinant is invariant under cost rotation and pre-stabilization,
    and equals ``det(A) det(R - S A^{-1} B)`` when ``A`` is invertible.
    """
    M = np.block([[problem.R, problem.S], [problem.B, problem.A]])
    det = float(np.linalg.det(M))
    thr = 1e-9 * mk.scale_of(M) ** M.shape[0]
    return AntistabTest(abs(det) > thr, det, thr)


def solve_dare_antistabilizing(problem, storage=None, tol=DEFAULT_TOL):
    """Antistabilizing DARE solution, or :class:`NotExists` carrying ``Pbar_s``."""
    test = antistab_existence_test(problem)
    Pbar = solve_rdare_stabilizing(problem, storage, tol)
    if not test.exists:
        return NotExists(Pbar, test.determinant)
    return dare_solution(problem, Pbar, tol.schur_margin)


# ---------------------------------------------------------------------------
# Gaps between solutions
# ---------------------------------------------------------------------------

def _gap_rhs(B, A_ref, R_ref, Delta):
    M = R_ref + B.T @ Delta @ B
    M = 0.5 * (M + M.T)
    ev = mk.sym_eigvals(M)
    if np.min(np.abs(ev)) <= 1e-12 * mk.scale_of(M):
        raise SingularInnerMatrix("R_ref + B^T Delta B is singular")
    X = A_ref.T @ Delta @ B
    out = A_ref.T @ Delta @ A_ref - X @ mk.solve(M, X.T)
    return 0.5 * (out + out.T)


def gap(problem, P, ref):
    """Difference ``Delta = P - P_ref`` and the residual of its Riccati equation.

    ``Delta`` solves ``Delta = A_ref^T Delta A_ref - A_ref^T Delta B
    (R_ref + B^T Delta B)^{-1} B^T Delta A_ref`` whenever ``P`` and the
    reference both solve the DARE.
    """
    kinds = {"stabilizing": "vs_stabilizing", "antistabilizing": "vs_antistabilizing"}
    if ref.classification not in kinds:
        raise ValueError("reference must be the stabilizing or antistabilizing solution")
    P = mk.as_sym(P, "P")
    Delta = P - ref.P
    R_ref = inner_matrix(problem, ref.P)
    A_ref = problem.A - problem.B @ ref.K
    res = mk.fro(Delta - _gap_rhs(problem.B, A_ref, R_ref, Delta))
    return SolutionGap(Delta, R_ref, A_ref, kinds[ref.classification], res)


def gap_step(problem, Delta, ref):
    """One Riccati step in gap coordinates: maps ``P_n - P_ref`` to ``P_{n+1} - P_ref``."""
    R_ref = inner_matrix(problem, ref.P)
    A_ref = problem.A - problem.B @ ref.K
    return _gap_rhs(problem.B, A_ref, R_ref, mk.as_sym(Delta, "Delta"))


def verify_inner_pd(problem, P, tol=DEFAULT_TOL.pd_tol):
    """True iff ``R + B^T P B`` is positive definite."""
    return mk.is_pd(inner_matrix(problem, P), tol)


# ---------------------------------------------------------------------------
# Enumeration of symmetric solutions (n_x <= 2)
# ---------------------------------------------------------------------------

def _scalar_solutions(problem):
    a, b = problem.A[0, 0], problem.B[:, 0]
    if problem.n_u != 1:
        raise ValueError("scalar closed form needs n_u = 1")
    b = b[0]
    q, s, r = problem.Q[0, 0], problem.S[0, 0], problem.R[0, 0]
    # (P - q - a^2 P)(r + b^2 P) + (s + a b P)^2 = 0
    c2 = b * b
    c1 = r * (1 - a * a) - q * b * b + 2 * a * b * s
    c0 = s * s - q * r
    if c2 == 0.0:
        roots = [] if c1 == 0.0 else [-c0 / c1]
    else:
        roots = [z.real for z in np.roots([c2, c1, c0]) if abs(z.imag) < 1e-12]
    return [np.array([[z]]) for z in roots]


def enumerate_dare_solutions(problem, seeds=None, rtol=1e-9):
    """All real symmetric DARE solutions for ``n_x <= 2``.

    The scalar case uses the closed-form quadratic. For ``n_x = 2`` the
    residual is driven to zero from a grid of starting points (plus any
    ``seeds``) and distinct roots are kept; completeness is not guaranteed.
    Solutions with singular ``R + B^T P B`` are discarded.
    """
    if problem.n_x == 1 and problem.n_u == 1:
        cands = _scalar_solutions(problem)
    elif problem.n_x <= 2:
        cands = _root_search_2x2(problem, seeds)
    else:
        raise ValueError("enumeration is only provided for n_x <= 2")
    out = []
    for P in cands:
        try:
            res = dare_residual(problem, P)
        except SingularInnerMatrix:
            continue
        if res > rtol * mk.scale_of(P):
            continue
        if any(mk.fro(P - Q) <= 1e-7 * mk.scale_of(P) for Q in out):
            continue
        out.append(P)
    out.sort(key=lambda P: float(np.trace(P)))
    return out


def _root_search_2x2(problem, seeds):
    import scipy.optimize

    n = problem.n_x
    iu = np.triu_indices(n)

    def unpack(p):
        P = np.zeros((n, n))
        P[iu] = p
        return P + np.triu(P, 1).T

    def fun(p):
        P = unpack(p)
        try:
            Pn, _ = riccati_step(P, problem)
        except SingularInnerMatrix:
            return np.full(len(p), 1e6)
        return (Pn - P)[iu]

    starts = []
    for P in seeds or []:
        starts.append(np.asarray(P, float)[iu])
    span = 1.0 + max((mk.fro(P) for P in seeds or []), default=10.0)
    grid = np.linspace(-span, span, 5)
    for p in itertools.product(grid, repeat=len(iu[0])):
        starts.append(np.array(p))
    found = []
    for p0 in starts:
        sol = scipy.optimize.root(fun, p0, method="hybr", tol=1e-14)
        if sol.success:
            found.append(unpack(sol.x))
    return found
