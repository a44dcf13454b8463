"""Small dense-matrix numerics used by every other module.

Everything here works on matrices of dimension at most eight (converters
have two or three energy-storage elements), so clarity wins over BLAS-level
throughput.  Functions are pure; arrays passed in are never modified.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import ConvergenceError, NoBracketError, SingularJacobianError

ROOT_TOL = 1e-12
NEWTON_TOL = 1e-10
EIG_TOL = 1e-9
MAX_EIG_DIM = 8


def as_matrix(A, name="A", square=False):
    """Validate and return ``A`` as a finite 2-d float array."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {A.shape}")
    if square and A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def as_vector(x, name="x", dim=None):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise ValueError(f"{name} must have length {dim}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def mat_exp(A, t=1.0):
    """Return ``expm(A * t)``.

    Scaling and squaring with a degree-13 Pade approximant, as provided by
    :func:`scipy.linalg.expm`.
    """
    A = as_matrix(A, square=True)
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    return scipy.linalg.expm(A * t)


def augmented(A, b):
    """Return the (N+1)x(N+1) generator ``[[A, b], [0, 0]]``."""
    n = A.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A
    M[:n, n] = b
    return M


def affine_flow(A, b, x0, t):
    """Exact solution at time ``t`` of ``x' = A x + b`` with ``x(0) = x0``.

    Parameters
    ----------
    A : (N, N) array_like
    b : (N,) array_like
        Constant forcing term.
    x0 : (N,) array_like
    t : float
        Elapsed time, ``t >= 0``.

    Returns
    -------
    x : (N,) ndarray
    """
    A = as_matrix(A, square=True)
    n = A.shape[0]
    b = as_vector(b, "b", n)
    x0 = as_vector(x0, "x0", n)
    if t < 0:
        raise ValueError("t must be non-negative")
    P = scipy.linalg.expm(augmented(A, b) * t)
    return P[:n, :n] @ x0 + P[:n, n]


# ---------------------------------------------------------------------------
# eigenvalues


def _quadratic_roots(s, p):
    """Roots of ``z**2 - s z + p`` without cancellation."""
    half = 0.5 * s
    disc = half * half - p
    if disc >= 0:
        q = half + math.copysign(math.sqrt(disc), half)
        if q == 0.0:
            return [0.0 + 0j, 0.0 + 0j]
        return [complex(q), complex(p / q)]
    w = math.sqrt(-disc)
    return [complex(half, w), complex(half, -w)]


def _polish(coeffs, z, steps=3):
    """Newton-polish a root of a monic polynomial; keep only improvements."""
    poly = np.poly1d(coeffs)
    dpoly = poly.deriv()
    best, best_val = z, abs(poly(z))
    for _ in range(steps):
        d = dpoly(z)
        if d == 0:
            break
        z = z - poly(z) / d
        val = abs(poly(z))
        if val < best_val:
            best, best_val = z, val
        else:
            break
    return best


def _cubic_real_root(a, b, c):
    """One real root of ``x**3 + a x**2 + b x + c``."""
    shift = a / 3.0
    p = b - a * a / 3.0
    q = 2.0 * a**3 / 27.0 - a * b / 3.0 + c
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0:
        u = np.cbrt(-q / 2.0 - math.copysign(math.sqrt(disc), q))
        t = u - p / (3.0 * u) if u != 0 else 0.0
    elif p == 0:
        t = 0.0
    else:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = max(-1.0, min(1.0, 3.0 * q / (p * m)))
        t = m * math.cos(math.acos(arg) / 3.0)
    return t - shift


def _closed_form_eigenvalues(A):
    n = A.shape[0]
    if n == 1:
        return [complex(A[0, 0])]
    if n == 2:
        tr = A[0, 0] + A[1, 1]
        det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        return _quadratic_roots(tr, det)
    tr = np.trace(A)
    minors = (A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
              + A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]
              + A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
    det = np.linalg.det(A)
    coeffs = [1.0, -tr, minors, -det]
    r = _cubic_real_root(-tr, minors, -det)
    r = _polish(coeffs, r).real
    # deflate: x^2 + (a + r) x + (b + (a + r) r)
    s = tr - r
    p = det / r if abs(r) > 1e-3 * max(1.0, abs(s)) else minors - r * s
    roots = [complex(r)]
    for z in _quadratic_roots(s, p):
        roots.append(_polish(coeffs, z))
    if abs(roots[1].imag) > 0:
        # conjugate-symmetry cleanup after polishing
        z = complex(roots[1].real, abs(roots[1].imag))
        roots[1], roots[2] = z, z.conjugate()
    return roots


def sort_eigenvalues(lams):
    """Deterministic order: descending modulus, then positive imaginary first."""
    return np.array(sorted(lams, key=lambda z: (-round(abs(z), 12), -z.imag, -z.real)),
                    dtype=complex)


def eigenvalues(A):
    """All eigenvalues of a small square matrix, with multiplicity.

    Closed forms are used up to 3x3 (the matrix is scaled to unit max-norm
    first); larger matrices go through LAPACK's Hessenberg QR iteration.
    Complex eigenvalues come in exact conjugate pairs.

    Raises
    ------
    ConvergenceError
        If the QR iteration fails to converge.
    """
    A = as_matrix(A, square=True)
    n = A.shape[0]
    if n > MAX_EIG_DIM:
        raise ValueError(f"eigenvalues supports N <= {MAX_EIG_DIM}, got {n}")
    scale = np.max(np.abs(A))
    if scale == 0.0:
        return np.zeros(n, dtype=complex)
    if n <= 3:
        lams = [z * scale for z in _closed_form_eigenvalues(A / scale)]
    else:
        try:
            lams = list(np.linalg.eigvals(A))
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"QR iteration did not converge: {exc}") from exc
        lams = _symmetrize(lams)
    return sort_eigenvalues(lams)


def _symmetrize(lams):
    out = []
    for z in lams:
        z = complex(z)
        if abs(z.imag) <= EIG_TOL * max(1.0, abs(z)):
            z = complex(z.real, 0.0)
        out.append(z)
    pos = sorted((z for z in out if z.imag > 0), key=lambda z: (z.real, z.imag))
    real = [z for z in out if z.imag == 0]
    return real + [w for z in pos for w in (z, z.conjugate())]


# ---------------------------------------------------------------------------
# scalar and vector solvers


def bracketed_root(f, lo, hi, tol=ROOT_TOL):
    """Root of a scalar function inside a sign-change bracket.

    Brent's method (inverse quadratic interpolation and secant steps guarded
    by bisection).  The result always lies in ``[lo, hi]``.

    Raises
    ------
    NoBracketError
        If ``f(lo)`` and ``f(hi)`` have the same strict sign.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo, hi = float(min(lo, hi)), float(max(lo, hi))
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoBracketError(f"no sign change on [{lo}, {hi}]: f = {flo}, {fhi}")
    root = scipy.optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps,
                                 maxiter=500)
    return min(max(root, lo), hi)


def fd_jacobian(F, z, f0=None, rel_step=1e-7):
    """Central-difference Jacobian of ``F`` at ``z``."""
    z = np.asarray(z, dtype=float)
    cols = []
    for i in range(z.size):
        h = rel_step * (1.0 + abs(z[i]))
        e = np.zeros_like(z)
        e[i] = h
        cols.append((np.asarray(F(z + e)) - np.asarray(F(z - e))) / (2 * h))
    return np.column_stack(cols)


@dataclass(frozen=True)
class NewtonInfo:
    iterations: int
    residual: float
    condition: float


def newton_solve(F, z0, jac=None, tol=NEWTON_TOL, max_iter=50,
                 max_halvings=20, max_condition=1e12, full_output=False):
    """Damped Newton iteration for a small square system ``F(z) = 0``.

    Parameters
    ----------
    F : callable
        Maps an (M,) array to an (M,) array.
    z0 : (M,) array_like
        Starting point.
    jac : callable, optional
        Analytic Jacobian; central differences are used when omitted.
    tol : float
        Convergence threshold on ``max|F(z)|``.
    max_iter : int
    max_halvings : int
        Step-halvings per iteration while enforcing an Armijo decrease of
        ``|F|``.
    max_condition : float
        Jacobians with a larger 2-norm condition number are rejected.
    full_output : bool
        Also return a :class:`NewtonInfo`.

    Raises
    ------
    SingularJacobianError, ConvergenceError
    """
    z = as_vector(z0, "z0").copy()
    fz = np.asarray(F(z), dtype=float)
    cond = 1.0
    for it in range(max_iter + 1):
        res = np.max(np.abs(fz))
        if not np.isfinite(res):
            raise ConvergenceError(f"non-finite residual at iteration {it}")
        if res <= tol:
            if full_output:
                return z, NewtonInfo(it, res, cond)
            return z
        if it == max_iter:
            break
        J = np.asarray(jac(z) if jac is not None else fd_jacobian(F, z), dtype=float)
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > max_condition:
            raise SingularJacobianError(f"Jacobian condition {cond:.3g} at iteration {it}")
        step = np.linalg.solve(J, -fz)
        norm0 = np.linalg.norm(fz)
        alpha = 1.0
        best = None
        for _ in range(max_halvings + 1):
            trial = z + alpha * step
            ft = np.asarray(F(trial), dtype=float)
            nt = np.linalg.norm(ft)
            if np.isfinite(nt) and nt <= (1.0 - 1e-4 * alpha) * norm0:
                best = (trial, ft)
                break
            if np.isfinite(nt) and nt < norm0 and (best is None or nt < np.linalg.norm(best[1])):
                best = (trial, ft)
            alpha *= 0.5
        if best is None:
            raise ConvergenceError(
                f"line search failed at iteration {it}, residual {res:.3g}")
        z, fz = best
    raise ConvergenceError(f"no convergence in {max_iter} iterations, residual {res:.3g}")
