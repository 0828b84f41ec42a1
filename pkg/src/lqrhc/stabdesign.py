"""Terminal-cost design and receding-horizon stability analysis.

With ``Pf = Pbar_s + E`` and ``E`` positive definite, the receding-horizon
feedback ``u = -K_N x`` stabilizes the plant for every sufficiently long
horizon ``N``. ``Pbar_s`` is the stabilizing solution of the reverse DARE,
which coincides with the antistabilizing DARE solution when that exists.
"""
from dataclasses import dataclass, field
import warnings

import numpy as np

from . import lqmodel as lqm
from . import matkit as mk
from . import riccati as ric
from .errors import SingularInnerMatrix
from .matkit import DEFAULT_TOL

__all__ = [
    "TerminalDesign", "HorizonRecord", "HorizonReport", "LyapunovCertificate",
    "BoundaryDesignWarning",
    "design_terminal", "min_stabilizing_horizon", "closed_loop_eigs_vs_N",
    "lyapunov_decrease_check", "lyapunov_sweep", "horizon_rows",
]


class BoundaryDesignWarning(UserWarning):
    """``E`` is PSD but not PD; no stability statement covers this case."""


@dataclass(frozen=True)
class TerminalDesign:
    Pf: np.ndarray
    basis: str            # "antistabilizing" | "rdare_stabilizing"
    E: np.ndarray
    margin: float         # lambda_min(E)
    Pbar_s: np.ndarray

    @property
    def boundary(self):
        return self.margin <= DEFAULT_TOL.pd_tol * mk.scale_of(self.E)


def design_terminal(problem, E, storage=None, tol=DEFAULT_TOL):
    """Terminal cost ``Pf = Pbar_s + E``.

    ``basis`` is ``"antistabilizing"`` when the antistabilizing solution
    exists (it then equals ``Pbar_s``), else ``"rdare_stabilizing"``.

    Raises
    ------
    ValueError
        If ``E`` is not positive semidefinite. A PSD but singular ``E`` only
        emits :class:`BoundaryDesignWarning`.
    """
    E = mk.as_sym(E, "E")
    if E.shape != (problem.n_x, problem.n_x):
        raise ValueError(f"E must be {problem.n_x}x{problem.n_x}")
    d = mk.definiteness(E, tol.pd_tol)
    if not d.is_psd:
        raise ValueError(f"E must be positive definite, got {d.value}")
    if d is not mk.Definiteness.PD:
        warnings.warn("E is only positive semidefinite: boundary design without "
                      "a stability guarantee", BoundaryDesignWarning, stacklevel=2)
    Pbar = ric.solve_rdare_stabilizing(problem, storage, tol)
    basis = ("antistabilizing" if ric.antistab_existence_test(problem).exists
             else "rdare_stabilizing")
    return TerminalDesign(Pbar + E, basis, E, mk.lambda_min(E), Pbar)


@dataclass(frozen=True)
class HorizonRecord:
    N: int
    spectral_radius: float
    error: str = None


@dataclass(frozen=True)
class HorizonReport:
    records: list
    min_stabilizing_N: int      # None when not found
    N_max: int
    margin: float

    @property
    def found(self):
        return self.min_stabilizing_N is not None

    @property
    def radii(self):
        return np.array([r.spectral_radius for r in self.records])


def _radius_sweep(problem, Pf, N_max):
    p = problem if Pf is None else problem.with_terminal(Pf)
    A, B = p.A, p.B
    P = p.Pf
    records = []
    for N in range(1, N_max + 1):
        try:
            P, K = ric.riccati_step(P, p)
        except SingularInnerMatrix as exc:
            # every later horizon depends on this step
            records += [HorizonRecord(n, float("nan"), str(exc))
                        for n in range(N, N_max + 1)]
            break
        records.append(HorizonRecord(N, mk.spectral_radius(A - B @ K)))
    return records


def min_stabilizing_horizon(problem, Pf=None, N_max=200, margin=DEFAULT_TOL.schur_margin):
    """Smallest ``N`` with ``rho(A - B K_N) < 1 - margin``.

    Parameters
    ----------
    problem : LqProblem
    Pf : array_like, optional
        Terminal cost; defaults to ``problem.Pf``.
    N_max : int
    margin : float

    Returns
    -------
    HorizonReport
        ``min_stabilizing_N`` is ``None`` if no horizon up to ``N_max``
        stabilizes. The full spectral-radius trace is kept.
    """
    if N_max < 1:
        raise ValueError("N_max must be >= 1")
    records = _radius_sweep(problem, Pf, N_max)
    n_min = next((r.N for r in records
                  if r.error is None and r.spectral_radius < 1.0 - margin), None)
    return HorizonReport(records, n_min, N_max, margin)


def closed_loop_eigs_vs_N(problem, Pf=None, N_max=20):
    """``max |eig(A - B K_N)|`` for ``N = 1..N_max``."""
    return [r.spectral_radius for r in _radius_sweep(problem, Pf, N_max)]


@dataclass(frozen=True)
class LyapunovCertificate:
    N: int
    certified: bool
    decrease_margin: float     # lambda_min(Q_{lam,K_N} - A_K^T (P_{lam,N} - P_{lam,N-1}) A_K)
    value_margin: float        # lambda_min(P_{lam,N})

    @property
    def margin(self):
        return min(self.decrease_margin, self.value_margin)


def _certificate(p, L, P_prev, P_cur, K, N, pd_tol):
    A, B = p.A, p.B
    AK = A - B @ K
    QK = p.Q - p.S.T @ K - K.T @ p.S + K.T @ p.R @ K
    Qlam = QK + L - AK.T @ L @ AK
    D = Qlam - AK.T @ (P_cur - P_prev) @ AK
    Plam = P_cur + L
    dec = mk.lambda_min(D)
    val = mk.lambda_min(Plam)
    ok = mk.is_pd(D, pd_tol) and mk.is_pd(Plam, pd_tol)
    return LyapunovCertificate(N, ok, dec, val)


def lyapunov_sweep(problem, storage, N_max, Pf=None, tol=DEFAULT_TOL):
    """Lyapunov decrease certificates for every ``N = 1..N_max``.

    The rotated value matrix ``P_N + Lambda`` must be PD and the rotated
    closed-loop stage cost must dominate the one-step growth of the value
    matrix along ``A - B K_N``.
    """
    p = problem if Pf is None else problem.with_terminal(Pf)
    L = lqm._lam(storage)
    P = p.Pf
    out = []
    for N in range(1, N_max + 1):
        Pn, K = ric.riccati_step(P, p)
        out.append(_certificate(p, L, P, Pn, K, N, tol.pd_tol))
        P = Pn
    return out


def lyapunov_decrease_check(problem, storage, N, Pf=None, tol=DEFAULT_TOL):
    if N < 1:
        raise ValueError("N must be >= 1")
    return lyapunov_sweep(problem, storage, N, Pf, tol)[-1]


def horizon_rows(report, Pf_tag, certificates=None):
    """CSV rows ``Pf_tag, N, spectral_radius, certified``."""
    cert = {c.N: c.certified for c in certificates or []}
    return [{"Pf_tag": Pf_tag, "N": r.N, "spectral_radius": r.spectral_radius,
             "certified": cert.get(r.N, "")} for r in report.records]
