"""Dense real-matrix primitives: SVD, matrix exponential, Lyapunov solvers,
and the proximal operators of the l1 and nuclear norms.

Matrices are plain float64 ndarrays validated at the public entry points.
All functions are pure; outputs are freshly allocated and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConstructionError, NumericalError, StabilityError

__all__ = [
    "SvdResult",
    "as_matrix",
    "svd",
    "matrix_exponential",
    "solve_lyapunov_continuous",
    "solve_lyapunov_discrete",
    "prox_l1",
    "prox_nuclear",
    "power_spectral_norm",
]


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Validate and return ``values`` as a finite 2-D float64 array."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ConstructionError(f"{name} must be 2-D, got shape {m.shape}")
    if m.size and not np.isfinite(m).all():
        raise ConstructionError(f"{name} contains non-finite entries")
    return m


def _require_square(m: np.ndarray, name: str) -> None:
    if m.shape[0] != m.shape[1]:
        raise ConstructionError(f"{name} must be square, got shape {m.shape}")


@dataclass(frozen=True)
class SvdResult:
    """Thin singular value decomposition ``M = U diag(S) V^T``.

    ``U`` and ``V`` hold orthonormal columns; ``S`` is non-increasing and
    non-negative.  Each column pair is oriented so the largest-magnitude
    entry of the ``U`` column is positive, which makes the factorization
    deterministic for golden tests.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


def svd(m) -> SvdResult:
    """Thin SVD with the deterministic sign convention described above."""
    m = as_matrix(m, "svd input")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    v = vh.T.copy()
    u = u.copy()
    for j in range(u.shape[1]):
        pivot = np.argmax(np.abs(u[:, j]))
        if u[pivot, j] < 0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]
    return SvdResult(U=u, S=s, V=v)


def matrix_exponential(m) -> np.ndarray:
    """Matrix exponential ``e^M`` (scaling-and-squaring with a Pade core)."""
    m = as_matrix(m, "matrix_exponential input")
    _require_square(m, "matrix_exponential input")
    with np.errstate(over="ignore", invalid="ignore"):
        out = scipy.linalg.expm(m)
    if not np.isfinite(out).all():
        raise NumericalError(
            "matrix exponential overflowed the representable range"
        )
    return out


def _spectral_abscissa(a: np.ndarray) -> float:
    """Largest real part over the eigenvalues of ``a``."""
    return float(np.max(np.linalg.eigvals(a).real)) if a.size else -np.inf


def _finalize_lyapunov(q: np.ndarray, residual: float, name: str) -> np.ndarray:
    q = 0.5 * (q + q.T)
    scale = max(float(np.linalg.norm(q)), np.finfo(float).tiny)
    if not np.isfinite(q).all() or residual > 1e-10 * scale:
        raise NumericalError(
            f"{name} solve failed: residual {residual:.3e} "
            f"exceeds 1e-10 * ||Q||_F = {1e-10 * scale:.3e}"
        )
    if np.min(np.linalg.eigvalsh(q)) <= 0:
        raise NumericalError(f"{name} solution is not positive definite")
    return q


def solve_lyapunov_continuous(a) -> np.ndarray:
    """Solve ``A Q + Q A^T + I = 0`` for the stationary covariance ``Q``.

    Requires ``A`` Hurwitz (all eigenvalues in the open left half-plane);
    that is exactly the condition for a positive definite solution.  Uses
    the Schur-based Bartels-Stewart solver; the returned matrix is
    symmetrized and checked against the residual bound
    ``||AQ + QA^T + I||_F <= 1e-10 ||Q||_F``.
    """
    a = as_matrix(a, "A")
    _require_square(a, "A")
    if _spectral_abscissa(a) >= 0:
        raise StabilityError(
            "continuous Lyapunov equation needs a Hurwitz matrix "
            f"(spectral abscissa {_spectral_abscissa(a):.6g} >= 0)"
        )
    n = a.shape[0]
    try:
        q = scipy.linalg.solve_continuous_lyapunov(a, -np.eye(n))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Lyapunov solve failed: {exc}") from exc
    residual = float(np.linalg.norm(a @ q + q @ a.T + np.eye(n)))
    return _finalize_lyapunov(q, residual, "continuous Lyapunov")


def solve_lyapunov_discrete(a, eta: float) -> np.ndarray:
    """Solve ``A Q + Q A^T + eta A Q A^T + I = 0`` for ``Q``.

    Equivalent to the standard discrete-time equation
    ``M Q M^T - Q = -eta I`` with ``M = I + eta A``, which has a positive
    definite solution iff the spectral radius of ``M`` is below one.
    """
    a = as_matrix(a, "A")
    _require_square(a, "A")
    if eta <= 0:
        raise ConstructionError("eta must be positive")
    n = a.shape[0]
    m = np.eye(n) + eta * a
    rho = float(np.max(np.abs(np.linalg.eigvals(m)))) if n else 0.0
    if rho >= 1:
        raise StabilityError(
            f"discrete Lyapunov equation needs spectral radius of I + eta*A "
            f"below one (got {rho:.6g})"
        )
    try:
        q = scipy.linalg.solve_discrete_lyapunov(m, eta * np.eye(n), method="bilinear")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Lyapunov solve failed: {exc}") from exc
    residual = float(np.linalg.norm(a @ q + q @ a.T + eta * (a @ q @ a.T) + np.eye(n)))
    return _finalize_lyapunov(q, residual, "discrete Lyapunov")


def prox_l1(m, tau: float) -> np.ndarray:
    """Entrywise soft threshold: ``sign(m) * max(|m| - tau, 0)``.

    This is the proximal map of ``tau * ||.||_1``; entries with
    ``|m| <= tau`` map to exactly zero.
    """
    m = as_matrix(m, "prox_l1 input")
    if tau < 0:
        raise ConstructionError("tau must be non-negative")
    return np.sign(m) * np.maximum(np.abs(m) - tau, 0.0)


def prox_nuclear(m, tau: float) -> tuple[np.ndarray, int]:
    """Singular value soft threshold; returns ``(matrix, rank)``.

    The proximal map of ``tau * ||.||_*``: singular values are shrunk by
    ``tau`` and clipped at zero, and ``rank`` counts the survivors
    (exact zeros after thresholding, no extra tolerance).
    """
    if tau < 0:
        raise ConstructionError("tau must be non-negative")
    res = svd(m)
    shrunk = np.maximum(res.S - tau, 0.0)
    rank = int(np.count_nonzero(shrunk))
    return (res.U * shrunk) @ res.V.T, rank


def power_spectral_norm(s, iters: int = 50, tol: float = 1e-8) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Deterministic start vector (a fixed ramp, so crafted symmetric inputs
    whose top eigenvector is orthogonal to the all-ones vector still
    converge).  Intended for solver step-size selection; not a general
    spectral-norm routine.
    """
    s = as_matrix(s, "power_spectral_norm input")
    _require_square(s, "power_spectral_norm input")
    n = s.shape[0]
    if n == 0:
        return 0.0
    v = 1.0 + np.arange(n) / max(n, 1)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = s @ v
        norm = np.linalg.norm(w)
        if norm <= 1e-300:
            return 0.0
        v = w / norm
        new_lam = float(v @ (s @ v))
        if abs(new_lam - lam) <= tol * max(abs(new_lam), 1.0):
            return new_lam
        lam = new_lam
    return lam
