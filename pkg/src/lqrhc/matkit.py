"""Dense real matrix kernel: spectra, definiteness, solves and factorizations.

Matrices are plain ``numpy.ndarray`` objects. ``as_matrix`` and ``as_sym``
validate inputs at module boundaries; everything downstream assumes finite,
2-D float arrays.
"""
from dataclasses import dataclass, replace
import enum
import math
import warnings

import numpy as np
import scipy.linalg

from .errors import EigenvalueNonConvergence, NotPD, SingularMatrix

__all__ = [
    "Tolerances", "DEFAULT_TOL", "Definiteness", "Spectrum",
    "as_matrix", "as_sym", "fro", "scale_of",
    "eigenvalues", "spectral_radius", "is_schur_stable",
    "sym_eigvals", "lambda_min", "definiteness", "is_pd",
    "solve", "cholesky", "hessenberg",
]

EIG_MAX_DIM = 50


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds used throughout the package.

    All thresholds are relative: they are multiplied by
    ``max(1, ||M||_F)`` of the matrix under test.
    """
    pd_tol: float = 1e-9
    schur_margin: float = 1e-9
    riccati_tol: float = 1e-13
    riccati_max_iter: int = 10000
    rank_tol: float = 1e-9

    def with_(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


DEFAULT_TOL = Tolerances()


class Definiteness(enum.Enum):
    PD = "PD"
    PSD = "PSD"
    INDEFINITE = "indefinite"
    NSD = "NSD"
    ND = "ND"

    def mirror(self):
        return _MIRROR[self]

    @property
    def is_psd(self):
        return self in (Definiteness.PD, Definiteness.PSD)


_MIRROR = {
    Definiteness.PD: Definiteness.ND,
    Definiteness.ND: Definiteness.PD,
    Definiteness.PSD: Definiteness.NSD,
    Definiteness.NSD: Definiteness.PSD,
    Definiteness.INDEFINITE: Definiteness.INDEFINITE,
}


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    spectral_radius: float

    def __len__(self):
        return len(self.eigenvalues)


def as_matrix(m, name="matrix"):
    """Return ``m`` as a finite 2-D float array with positive dimensions."""
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise ValueError(f"{name} has an empty dimension: {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def as_sym(m, name="matrix"):
    """Validate symmetry and return the symmetrized matrix ``(M + M^T)/2``."""
    a = as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got {a.shape}")
    asym = np.max(np.abs(a - a.T))
    if asym > 1e-12 * max(1.0, fro(a)):
        raise ValueError(f"{name} is not symmetric (max asymmetry {asym:.3e})")
    return 0.5 * (a + a.T)


def fro(m):
    return float(np.linalg.norm(m))


def scale_of(m):
    return max(1.0, fro(m))


def _square(m, name="matrix"):
    a = as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got {a.shape}")
    return a


# ---------------------------------------------------------------------------
# Eigenvalues: balancing, Householder Hessenberg reduction, Francis QR
# ---------------------------------------------------------------------------

def _balance(a):
    # Parlett-Reinsch scaling by powers of two; similarity, exact in floating point
    a = a.copy()
    n = a.shape[0]
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            r = np.sum(np.abs(a[i, :])) - abs(a[i, i])
            c = np.sum(np.abs(a[:, i])) - abs(a[i, i])
            if c == 0.0 or r == 0.0:
                continue
            g = r / radix
            f = 1.0
            s = c + r
            while c < g:
                f *= radix
                c *= sqrdx
            g = r * radix
            while c > g:
                f /= radix
                c /= sqrdx
            if (c + r) / f < 0.95 * s:
                done = False
                a[i, :] /= f
                a[:, i] *= f
    return a


def hessenberg(m):
    """Upper Hessenberg form of ``m`` by Householder reflections.

    Returns ``(H, Q)`` with ``Q`` orthogonal and ``Q^T m Q = H``.
    """
    h = _square(m).copy()
    n = h.shape[0]
    q = np.eye(n)
    for k in range(n - 2):
        x = h[k + 1:, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        v[0] += math.copysign(alpha, x[0])
        vn = np.linalg.norm(v)
        if vn == 0.0:
            continue
        v /= vn
        h[k + 1:, :] -= 2.0 * np.outer(v, v @ h[k + 1:, :])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        q[:, k + 1:] -= 2.0 * np.outer(q[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h, q


def _hqr(h):
    """Eigenvalues of an upper Hessenberg matrix by the Francis double-shift QR."""
    n = h.shape[0]
    a = h.tolist()
    wr = [0.0] * n
    wi = [0.0] * n
    eps = np.finfo(float).eps
    anorm = 0.0
    for i in range(n):
        for j in range(max(i - 1, 0), n):
            anorm += abs(a[i][j])
    nn = n - 1
    t = 0.0
    its = 0
    x = y = w = 0.0
    while nn >= 0:
        l = nn
        while l > 0:
            s = abs(a[l - 1][l - 1]) + abs(a[l][l])
            if s == 0.0:
                s = anorm
            if abs(a[l][l - 1]) <= eps * s:
                a[l][l - 1] = 0.0
                break
            l -= 1
        x = a[nn][nn]
        if l == nn:
            wr[nn] = x + t
            wi[nn] = 0.0
            nn -= 1
            its = 0
            continue
        y = a[nn - 1][nn - 1]
        w = a[nn][nn - 1] * a[nn - 1][nn]
        if l == nn - 1:
            p = 0.5 * (y - x)
            q = p * p + w
            z = math.sqrt(abs(q))
            x += t
            if q >= 0.0:
                z = p + math.copysign(z, p)
                wr[nn - 1] = wr[nn] = x + z
                if z != 0.0:
                    wr[nn] = x - w / z
                wi[nn - 1] = wi[nn] = 0.0
            else:
                wr[nn - 1] = wr[nn] = x + p
                wi[nn - 1] = z
                wi[nn] = -z
            nn -= 2
            its = 0
            continue
        if its == 30:
            raise EigenvalueNonConvergence(
                "QR iteration did not converge; matrix may be ill-conditioned")
        if its == 10 or its == 20:
            # exceptional shift
            t += x
            for i in range(nn + 1):
                a[i][i] -= x
            s = abs(a[nn][nn - 1]) + abs(a[nn - 1][nn - 2])
            y = x = 0.75 * s
            w = -0.4375 * s * s
        its += 1
        m = nn - 2
        while True:
            z = a[m][m]
            r = x - z
            s = y - z
            p = (r * s - w) / a[m + 1][m] + a[m][m + 1]
            q = a[m + 1][m + 1] - z - r - s
            r = a[m + 2][m + 1]
            s = abs(p) + abs(q) + abs(r)
            p /= s
            q /= s
            r /= s
            if m == l:
                break
            u = abs(a[m][m - 1]) * (abs(q) + abs(r))
            v = abs(p) * (abs(a[m - 1][m - 1]) + abs(z) + abs(a[m + 1][m + 1]))
            if u <= eps * v:
                break
            m -= 1
        for i in range(m, nn - 1):
            a[i + 2][i] = 0.0
            if i != m:
                a[i + 2][i - 1] = 0.0
        for k in range(m, nn):
            if k != m:
                p = a[k][k - 1]
                q = a[k + 1][k - 1]
                r = 0.0
                if k + 1 != nn:
                    r = a[k + 2][k - 1]
                x = abs(p) + abs(q) + abs(r)
                if x != 0.0:
                    p /= x
                    q /= x
                    r /= x
            s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
            if s == 0.0:
                continue
            if k == m:
                if l != m:
                    a[k][k - 1] = -a[k][k - 1]
            else:
                a[k][k - 1] = -s * x
            p += s
            x = p / s
            y = q / s
            z = r / s
            q /= p
            r /= p
            for j in range(k, nn + 1):
                p = a[k][j] + q * a[k + 1][j]
                if k + 1 != nn:
                    p += r * a[k + 2][j]
                    a[k + 2][j] -= p * z
                a[k + 1][j] -= p * y
                a[k][j] -= p * x
            mmin = nn if nn < k + 3 else k + 3
            for i in range(l, mmin + 1):
                p = x * a[i][k] + y * a[i][k + 1]
                if k + 1 != nn:
                    p += z * a[i][k + 2]
                    a[i][k + 2] -= p * r
                a[i][k + 1] -= p * q
                a[i][k] -= p
    return np.array(wr) + 1j * np.array(wi)


def eigenvalues(m):
    """Complex eigenvalues of a real square matrix.

    Parameters
    ----------
    m : (n, n) array_like
        Finite real matrix, ``n <= 50``.

    Returns
    -------
    Spectrum
        Eigenvalues sorted by decreasing modulus, and the spectral radius.

    Raises
    ------
    EigenvalueNonConvergence
        If the QR iteration exceeds 30 sweeps for some eigenvalue.
    """
    a = _square(m)
    n = a.shape[0]
    if n > EIG_MAX_DIM:
        raise ValueError(f"eigenvalues supports dimension <= {EIG_MAX_DIM}, got {n}")
    if n == 1:
        ev = np.array([complex(a[0, 0])])
    else:
        h, _ = hessenberg(_balance(a))
        ev = _hqr(h)
    order = np.lexsort((-ev.imag, -ev.real, -np.abs(ev)))
    ev = ev[order]
    return Spectrum(ev, float(np.max(np.abs(ev))))


def spectral_radius(m):
    return eigenvalues(m).spectral_radius


def is_schur_stable(m, margin=DEFAULT_TOL.schur_margin):
    """True iff every eigenvalue of ``m`` satisfies ``|mu| < 1 - margin``."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    return spectral_radius(m) < 1.0 - margin


# ---------------------------------------------------------------------------
# Symmetric matrices
# ---------------------------------------------------------------------------

def sym_eigvals(m):
    """Ascending eigenvalues of a symmetric matrix (LAPACK ``syevd``)."""
    a = np.asarray(m, dtype=float)
    return np.linalg.eigvalsh(0.5 * (a + a.T))


def lambda_min(m):
    return float(sym_eigvals(m)[0])


def definiteness(m, tol=DEFAULT_TOL.pd_tol):
    """Classify a symmetric matrix at threshold ``tol * max(1, ||m||_F)``.

    >>> definiteness([[3., 2.], [2., 2.]])
    <Definiteness.PD: 'PD'>
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    a = as_sym(m)
    thr = tol * scale_of(a)
    ev = sym_eigvals(a)
    lo, hi = ev[0], ev[-1]
    if lo > thr:
        return Definiteness.PD
    if hi < -thr:
        return Definiteness.ND
    if lo >= -thr:
        return Definiteness.PSD
    if hi <= thr:
        return Definiteness.NSD
    return Definiteness.INDEFINITE


def is_pd(m, tol=DEFAULT_TOL.pd_tol):
    return definiteness(m, tol) is Definiteness.PD


# ---------------------------------------------------------------------------
# Linear solves
# ---------------------------------------------------------------------------

def solve(m, rhs):
    """Solve ``m X = rhs`` by LU with partial pivoting.

    Raises
    ------
    SingularMatrix
        If some pivot satisfies ``|u_ii| <= 1e-12 * ||m||_F``.
    """
    a = np.asarray(m, dtype=float)
    b = np.asarray(rhs, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"solve needs a square matrix, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"rhs has {b.shape[0]} rows, expected {a.shape[0]}")
    if a.shape[0] == 1:
        if a[0, 0] == 0.0:
            raise SingularMatrix("pivot 0 is zero")
        return b / a[0, 0]
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrix
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, perm = scipy.linalg.lu_factor(a, check_finite=False)
    thr = 1e-12 * fro(a)
    pivots = np.abs(np.diag(lu))
    if np.min(pivots) <= thr:
        k = int(np.argmin(pivots))
        raise SingularMatrix(f"pivot {k} has magnitude {pivots[k]:.3e} <= {thr:.3e}")
    return scipy.linalg.lu_solve((lu, perm), b, check_finite=False)


def cholesky(m):
    """Lower-triangular ``L`` with ``L L^T = m``.

    Raises
    ------
    NotPD
        If a pivot ``L_ii**2`` is at most ``1e-12 * max(1, ||m||_F)``.
    """
    a = as_sym(m)
    thr = 1e-12 * scale_of(a)
    try:
        L = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPD(str(exc)) from None
    piv = np.diag(L) ** 2
    if np.min(piv) <= thr:
        raise NotPD(f"pivot {np.min(piv):.3e} <= {thr:.3e}")
    return L
