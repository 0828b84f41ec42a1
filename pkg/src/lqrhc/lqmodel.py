"""Linear-quadratic problem data and its structural transformations.

The stage cost is ``l(x, u) = [x; u]^T H [x; u]`` with
``H = [[Q, S^T], [S, R]]``, and the terminal cost is ``x^T Pf x``. A storage
matrix ``Lambda`` rotates the cost into

    H_Lambda = [[Q + Lambda - A^T Lambda A, S^T - A^T Lambda B],
                [S - B^T Lambda A,          R - B^T Lambda B]],

which leaves every finite-horizon feedback unchanged when the terminal cost
is shifted to ``Pf + Lambda``.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import matkit as mk
from .errors import NotControllable, PrestabilizerFailure
from .matkit import DEFAULT_TOL, Definiteness

__all__ = [
    "LinearSystem", "StageCost", "TerminalCost", "StorageMatrix", "LqProblem",
    "AffineConstraintSet", "StaircaseDecomposition", "PredissipativityCheck",
    "StorageCandidate",
    "rotation_terms", "rotate_cost", "rotate_problem", "check_predissipativity",
    "suggest_storage", "prestabilize", "congruence_matrix",
    "congruence_residual", "kalman_matrix", "kalman_rank", "staircase",
    "is_controllable", "is_stabilizable", "make_invertible_prestabilizer",
    "generate_predissipative_instance", "unstable_scalar_problem",
    "singular_reverse_problem", "box_constraints",
    "problem_to_dict", "problem_from_dict",
]


@dataclass(frozen=True)
class LinearSystem:
    """Dynamics ``x+ = A x + B u``."""
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = mk.as_matrix(self.A, "A")
        B = mk.as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]


@dataclass(frozen=True)
class StageCost:
    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = mk.as_sym(self.Q, "Q")
        R = mk.as_sym(self.R, "R")
        S = mk.as_matrix(self.S, "S")
        if S.shape != (R.shape[0], Q.shape[0]):
            raise ValueError(
                f"S must be {R.shape[0]}x{Q.shape[0]} (n_u x n_x), got {S.shape}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", R)

    @property
    def H(self):
        return np.block([[self.Q, self.S.T], [self.S, self.R]])

    @classmethod
    def from_H(cls, H, n_x):
        H = mk.as_sym(H, "H")
        return cls(H[:n_x, :n_x], H[n_x:, :n_x], H[n_x:, n_x:])


@dataclass(frozen=True)
class TerminalCost:
    Pf: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Pf", mk.as_sym(self.Pf, "Pf"))


@dataclass(frozen=True)
class StorageMatrix:
    """Quadratic storage function ``x^T Lambda x``; may be indefinite."""
    Lambda: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Lambda", mk.as_sym(self.Lambda, "Lambda"))


def _lam(storage):
    if isinstance(storage, StorageMatrix):
        return storage.Lambda
    return mk.as_sym(storage, "Lambda")


@dataclass(frozen=True)
class LqProblem:
    sys: LinearSystem
    cost: StageCost
    terminal: TerminalCost = None

    def __post_init__(self):
        n_x, n_u = self.sys.n_x, self.sys.n_u
        if self.cost.Q.shape[0] != n_x or self.cost.R.shape[0] != n_u:
            raise ValueError(
                f"cost blocks Q {self.cost.Q.shape}, R {self.cost.R.shape} do not "
                f"match n_x={n_x}, n_u={n_u}")
        if self.terminal is None:
            object.__setattr__(self, "terminal", TerminalCost(np.zeros((n_x, n_x))))
        elif self.terminal.Pf.shape[0] != n_x:
            raise ValueError(f"Pf must be {n_x}x{n_x}")

    @classmethod
    def from_arrays(cls, A, B, Q, S, R, Pf=None):
        sys = LinearSystem(A, B)
        if Pf is None:
            Pf = np.zeros((sys.n_x, sys.n_x))
        return cls(sys, StageCost(Q, S, R), TerminalCost(Pf))

    def with_terminal(self, Pf):
        return LqProblem(self.sys, self.cost, TerminalCost(Pf))

    def with_cost(self, cost):
        return LqProblem(self.sys, cost, self.terminal)

    A = property(lambda self: self.sys.A)
    B = property(lambda self: self.sys.B)
    Q = property(lambda self: self.cost.Q)
    S = property(lambda self: self.cost.S)
    R = property(lambda self: self.cost.R)
    H = property(lambda self: self.cost.H)
    Pf = property(lambda self: self.terminal.Pf)
    n_x = property(lambda self: self.sys.n_x)
    n_u = property(lambda self: self.sys.n_u)


@dataclass(frozen=True)
class AffineConstraintSet:
    """Path constraints ``C x + D u + e <= 0`` (componentwise)."""
    C: np.ndarray
    D: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        C = mk.as_matrix(self.C, "C")
        D = mk.as_matrix(self.D, "D")
        e = np.asarray(self.e, dtype=float).reshape(-1)
        if not (C.shape[0] == D.shape[0] == e.shape[0]):
            raise ValueError(
                f"constraint row counts disagree: C {C.shape}, D {D.shape}, e {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ValueError("e has non-finite entries")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "e", e)

    @property
    def n_rows(self):
        return self.C.shape[0]

    def values(self, x, u):
        return self.C @ np.ravel(x) + self.D @ np.ravel(u) + self.e


def box_constraints(n_x, n_u, x_max=None, u_max=None):
    """Symmetric box ``|x_i| <= x_max``, ``|u_i| <= u_max`` as an affine set."""
    C, D, e = [], [], []
    if x_max is not None:
        I = np.eye(n_x)
        C += [I, -I]
        D += [np.zeros((n_x, n_u))] * 2
        e += [-np.full(n_x, float(x_max))] * 2
    if u_max is not None:
        I = np.eye(n_u)
        C += [np.zeros((n_u, n_x))] * 2
        D += [I, -I]
        e += [-np.full(n_u, float(u_max))] * 2
    if not C:
        raise ValueError("need x_max or u_max")
    return AffineConstraintSet(np.vstack(C), np.vstack(D), np.concatenate(e))


# ---------------------------------------------------------------------------
# Cost rotation and pre-dissipativity
# ---------------------------------------------------------------------------

def rotation_terms(sys, storage):
    """The matrix ``G`` with ``H_Lambda = H + G``."""
    L = _lam(storage)
    A, B = sys.A, sys.B
    return np.block([[L - A.T @ L @ A, -A.T @ L @ B],
                     [-B.T @ L @ A, -B.T @ L @ B]])


def rotate_cost(cost, sys, storage):
    """Rotate a stage cost with storage matrix ``Lambda``.

    Returns the blocks ``Q + Lambda - A^T Lambda A``, ``S - B^T Lambda A``
    and ``R - B^T Lambda B``.
    """
    L = _lam(storage)
    A, B = sys.A, sys.B
    return StageCost(cost.Q + L - A.T @ L @ A,
                     cost.S - B.T @ L @ A,
                     cost.R - B.T @ L @ B)


def rotate_problem(problem, storage):
    """Rotated stage cost together with the shifted terminal cost ``Pf + Lambda``."""
    L = _lam(storage)
    return LqProblem(problem.sys, rotate_cost(problem.cost, problem.sys, L),
                     TerminalCost(problem.Pf + L))


@dataclass(frozen=True)
class PredissipativityCheck:
    verdict: str                # "strict" | "semidefinite" | "fails"
    lambda_min: float
    H_rotated: np.ndarray
    definiteness: Definiteness

    @property
    def strict(self):
        return self.verdict == "strict"


def check_predissipativity(cost, sys, storage, tol=DEFAULT_TOL.pd_tol):
    """Test whether ``Lambda`` certifies quadratic strict (x,u)-pre-dissipativity.

    The certified epsilon is the smallest eigenvalue of the rotated cost
    matrix; the verdict is ``"strict"`` when it is positive definite at
    ``tol``, ``"semidefinite"`` when only PSD.
    """
    Hr = rotate_cost(cost, sys, storage).H
    d = mk.definiteness(Hr, tol)
    if d is Definiteness.PD:
        verdict = "strict"
    elif d is Definiteness.PSD:
        verdict = "semidefinite"
    else:
        verdict = "fails"
    return PredissipativityCheck(verdict, mk.lambda_min(Hr), Hr, d)


@dataclass(frozen=True)
class StorageCandidate:
    storage: StorageMatrix
    label: str
    check: PredissipativityCheck


def suggest_storage(problem, tol=DEFAULT_TOL):
    """Heuristic storage candidates built from stabilizing Riccati solutions.

    Candidates are, in order:

    ``midpoint``
        ``-(Pbar_s + P_s)/2``. Only PSD in general when ``n_x > n_u``,
        because both endpoints give rotated costs of rank ``n_u``.
    ``minus_rdare``
        ``-Pbar_s``; the rotated cost is PSD but singular.
    ``shifted``
        ``-P_s(H - eps I)``, the stabilizing solution for the stage cost
        lowered by ``eps I``. The rotated cost is then at least ``eps I``.
        ``eps`` is halved from ``max(1, ||H||_F)/2`` until the lowered
        problem still admits a stabilizing solution.

    Each candidate carries its verdict; nothing guarantees a strict one.
    The reverse-equation candidates are skipped when ``(A, B)`` is only
    stabilizable.
    """
    from .errors import LqrhcError
    from .riccati import (bootstrap_rdare_stabilizing, bootstrap_stabilizing,
                          solve_dare_hewer)

    def cand(label, L):
        st = StorageMatrix(L)
        return StorageCandidate(
            st, label, check_predissipativity(problem.cost, problem.sys, st, tol.pd_tol))

    Ps = bootstrap_stabilizing(problem, tol)
    out = []
    if is_controllable(problem.sys, tol.rank_tol):
        Pbar = bootstrap_rdare_stabilizing(problem, tol)
        out += [cand("midpoint", -0.5 * (Pbar + Ps)), cand("minus_rdare", -Pbar)]
    n = problem.n_x + problem.n_u
    eps = 0.5 * mk.scale_of(problem.H)
    for _ in range(48):
        lowered = problem.with_cost(StageCost.from_H(problem.H - eps * np.eye(n), problem.n_x))
        try:
            c = cand("shifted", -solve_dare_hewer(lowered, tol))
        except (LqrhcError, np.linalg.LinAlgError):
            c = None
        if c is not None and c.check.strict:
            out.append(c)
            break
        eps *= 0.5
    return out


# ---------------------------------------------------------------------------
# Pre-stabilization
# ---------------------------------------------------------------------------

def prestabilize(problem, Khat):
    """Substitute ``u = v - Khat x``.

    The new system is ``(A - B Khat, B)`` with cost blocks
    ``Q - S^T Khat - Khat^T S + Khat^T R Khat``, ``S - R Khat`` and ``R``.
    The terminal cost is unchanged.
    """
    K = mk.as_matrix(Khat, "Khat")
    if K.shape != (problem.n_u, problem.n_x):
        raise ValueError(f"Khat must be {problem.n_u}x{problem.n_x}, got {K.shape}")
    Q, S, R = problem.Q, problem.S, problem.R
    QK = Q - S.T @ K - K.T @ S + K.T @ R @ K
    SK = S - R @ K
    return LqProblem(LinearSystem(problem.A - problem.B @ K, problem.B),
                     StageCost(0.5 * (QK + QK.T), SK, R), problem.terminal)


def congruence_matrix(Khat):
    """``M = [[I, 0], [-Khat, I]]`` mapping ``(x, v)`` to ``(x, u)``."""
    K = mk.as_matrix(Khat, "Khat")
    n_u, n_x = K.shape
    return np.block([[np.eye(n_x), np.zeros((n_x, n_u))], [-K, np.eye(n_u)]])


def congruence_residual(problem, storage, Khat):
    """Relative mismatch between ``M^T H_Lambda M`` and ``H_{Khat,Lambda}``."""
    M = congruence_matrix(Khat)
    lhs = M.T @ rotate_cost(problem.cost, problem.sys, storage).H @ M
    pk = prestabilize(problem, Khat)
    rhs = rotate_cost(pk.cost, pk.sys, storage).H
    return mk.fro(lhs - rhs) / mk.scale_of(rhs)


# ---------------------------------------------------------------------------
# Controllability
# ---------------------------------------------------------------------------

def kalman_matrix(sys):
    blocks = [sys.B]
    for _ in range(sys.n_x - 1):
        blocks.append(sys.A @ blocks[-1])
    return np.hstack(blocks)


def kalman_rank(sys, rank_tol=DEFAULT_TOL.rank_tol):
    sv = np.linalg.svd(kalman_matrix(sys), compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rank_tol * sv[0]))


@dataclass(frozen=True)
class StaircaseDecomposition:
    """Orthogonal change of basis exposing the controllable subspace first.

    In the new coordinates ``A_t = T^T A T = [[A11, A12], [0, A22]]`` and
    ``B_t = T^T B = [[B1], [0]]`` with ``(A11, B1)`` controllable.
    """
    basis: np.ndarray
    n_ctrl: int
    A_t: np.ndarray
    B_t: np.ndarray

    @property
    def A11(self):
        return self.A_t[:self.n_ctrl, :self.n_ctrl]

    @property
    def A12(self):
        return self.A_t[:self.n_ctrl, self.n_ctrl:]

    @property
    def A22(self):
        return self.A_t[self.n_ctrl:, self.n_ctrl:]

    @property
    def B1(self):
        return self.B_t[:self.n_ctrl]


def staircase(sys, rank_tol=DEFAULT_TOL.rank_tol):
    U, sv, _ = np.linalg.svd(kalman_matrix(sys))
    r = 0 if sv[0] == 0.0 else int(np.sum(sv > rank_tol * sv[0]))
    T = U
    A_t = T.T @ sys.A @ T
    B_t = T.T @ sys.B
    # the uncontrollable blocks are zero up to rounding; clean them
    A_t[r:, :r] = 0.0
    B_t[r:, :] = 0.0
    return StaircaseDecomposition(T, r, A_t, B_t)


def is_controllable(sys, rank_tol=DEFAULT_TOL.rank_tol):
    return kalman_rank(sys, rank_tol) == sys.n_x


def is_stabilizable(sys, rank_tol=DEFAULT_TOL.rank_tol, margin=DEFAULT_TOL.schur_margin):
    sc = staircase(sys, rank_tol)
    if sc.n_ctrl == sys.n_x:
        return True
    return mk.is_schur_stable(sc.A22, margin)


def make_invertible_prestabilizer(sys, seed=0, max_draws=100):
    """A gain ``Khat`` with ``A - B Khat`` invertible.

    ``Khat = 0`` is returned when ``A`` is already invertible; otherwise
    standard normal gains are drawn from ``numpy.random.default_rng(seed)``.
    """
    def ok(M):
        return abs(np.linalg.det(M)) > 1e-9 * mk.scale_of(M)

    K = np.zeros((sys.n_u, sys.n_x))
    if ok(sys.A):
        return K
    if not is_controllable(sys):
        raise NotControllable("(A, B) must be controllable to pre-stabilize")
    rng = np.random.default_rng(seed)
    for _ in range(max_draws):
        K = rng.standard_normal((sys.n_u, sys.n_x))
        if ok(sys.A - sys.B @ K):
            return K
    raise PrestabilizerFailure(f"no invertible A - B Khat after {max_draws} draws")


# ---------------------------------------------------------------------------
# Test-instance generator and reference problems
# ---------------------------------------------------------------------------

def _random_roots(rng, n):
    # moduli kept away from the unit circle and from zero
    roots = []
    while len(roots) < n:
        if n - len(roots) >= 2 and rng.random() < 0.3:
            mod = _random_modulus(rng)
            ang = rng.uniform(0.3, math.pi - 0.3)
            roots += [mod * np.exp(1j * ang), mod * np.exp(-1j * ang)]
        else:
            roots.append(_random_modulus(rng) * rng.choice([-1.0, 1.0]))
    return np.array(roots)


def _random_modulus(rng):
    if rng.random() < 0.5:
        return rng.uniform(0.3, 0.85)
    return rng.uniform(1.2, 2.2)


def generate_predissipative_instance(seed, n_x, n_u):
    """Random controllable LQ problem with a known strict storage matrix.

    A positive definite rotated cost and a symmetric ``Lambda`` are drawn
    first; the returned stage cost is the un-rotated one, so it is often
    indefinite while ``Lambda`` certifies strict pre-dissipativity.
    ``A`` is a companion matrix under a random well-conditioned similarity.

    Returns
    -------
    (LqProblem, StorageMatrix)
    """
    if not (1 <= n_x <= 8 and 1 <= n_u <= 8):
        raise ValueError("sizes must be in 1..8")
    rng = np.random.default_rng(seed)
    coeffs = np.real(np.poly(_random_roots(rng, n_x)))
    Ac = np.zeros((n_x, n_x))
    Ac[:-1, 1:] = np.eye(n_x - 1)
    Ac[-1, :] = -coeffs[1:][::-1]
    bc = np.zeros((n_x, 1))
    bc[-1, 0] = 1.0
    Q1, _ = np.linalg.qr(rng.standard_normal((n_x, n_x)))
    Q2, _ = np.linalg.qr(rng.standard_normal((n_x, n_x)))
    T = Q1 @ np.diag(rng.uniform(0.6, 1.6, n_x)) @ Q2
    A = T @ Ac @ np.linalg.inv(T)
    B = np.hstack([T @ bc, 0.5 * rng.standard_normal((n_x, n_u - 1))])
    if n_u > 1:
        mix, _ = np.linalg.qr(rng.standard_normal((n_u, n_u)))
        B = B @ mix
    n = n_x + n_u
    M = rng.standard_normal((n, n))
    core = M @ M.T / n + 0.3 * np.eye(n)
    Lr = rng.standard_normal((n_x, n_x))
    L = 0.5 * (Lr + Lr.T)
    sys = LinearSystem(A, B)
    H = core - rotation_terms(sys, L)
    H = 0.5 * (H + H.T)
    problem = LqProblem(sys, StageCost.from_H(H, n_x), TerminalCost(np.zeros((n_x, n_x))))
    return problem, StorageMatrix(L)


def unstable_scalar_problem(Pf=0.0):
    """``A=2, B=1, Q=0, S=0, R=1``: input-only cost on an unstable scalar plant.

    Its DARE has the two solutions ``P=0`` (antistabilizing) and ``P=3``
    (stabilizing), and ``Lambda = -c`` is a strict storage for ``0 < c < 3``.
    """
    return LqProblem.from_arrays([[2.0]], [[1.0]], [[0.0]], [[0.0]], [[1.0]], [[Pf]])


def singular_reverse_problem(Pf=0.0):
    """``A=B=Q=S=R=1``: ``R - S A^{-1} B = 0``, so no antistabilizing solution."""
    return LqProblem.from_arrays([[1.0]], [[1.0]], [[1.0]], [[1.0]], [[1.0]], [[Pf]])


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

PROBLEM_KEYS = ("A", "B", "Q", "S", "R", "Pf", "Lambda", "C", "D", "e")


def problem_to_dict(problem, storage=None, constraints=None):
    d = {"n_x": problem.n_x, "n_u": problem.n_u,
         "A": problem.A.tolist(), "B": problem.B.tolist(),
         "Q": problem.Q.tolist(), "S": problem.S.tolist(),
         "R": problem.R.tolist(), "Pf": problem.Pf.tolist()}
    if storage is not None:
        d["Lambda"] = _lam(storage).tolist()
    if constraints is not None:
        d["C"] = constraints.C.tolist()
        d["D"] = constraints.D.tolist()
        d["e"] = constraints.e.tolist()
    return d


def problem_from_dict(d):
    """Parse the problem schema; returns ``(problem, storage, constraints)``.

    ``storage`` and ``constraints`` are ``None`` when absent. Unknown keys
    raise ``KeyError`` naming the key.
    """
    allowed = set(PROBLEM_KEYS) | {"n_x", "n_u"}
    for k in d:
        if k not in allowed:
            raise KeyError(f"unknown problem key {k!r}")
    for k in ("A", "B", "R"):
        if k not in d:
            raise KeyError(f"missing problem key {k!r}")
    A = mk.as_matrix(d["A"], "A")
    B = mk.as_matrix(d["B"], "B")
    n_x, n_u = A.shape[0], B.shape[1]
    if d.get("n_x", n_x) != n_x or d.get("n_u", n_u) != n_u:
        raise ValueError(f"declared dimensions ({d.get('n_x')}, {d.get('n_u')}) "
                         f"do not match A, B ({n_x}, {n_u})")
    Q = d.get("Q", np.zeros((n_x, n_x)))
    S = d.get("S", np.zeros((n_u, n_x)))
    Pf = d.get("Pf", np.zeros((n_x, n_x)))
    problem = LqProblem.from_arrays(A, B, Q, np.reshape(np.asarray(S, float), (n_u, n_x)),
                                    d["R"], Pf)
    storage = StorageMatrix(d["Lambda"]) if "Lambda" in d else None
    constraints = None
    present = [k for k in ("C", "D", "e") if k in d]
    if present:
        if len(present) != 3:
            raise KeyError("constraints need all of 'C', 'D', 'e'")
        C = np.reshape(np.asarray(d["C"], float), (-1, n_x))
        D = np.reshape(np.asarray(d["D"], float), (-1, n_u))
        constraints = AffineConstraintSet(C, D, d["e"])
    return problem, storage, constraints
