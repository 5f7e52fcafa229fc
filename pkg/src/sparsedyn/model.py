"""Ground-truth system model, stationary covariances, and the constants
used by the recovery theory.

A system couples ``p`` observed variables ``x`` and ``r`` latent variables
``u`` through the joint drift matrix ``[[A, B], [C, D]]``.  Marginalizing
the latent series biases the naive least-squares estimate of ``A`` by the
low-rank matrix ``L = B R Q^{-1}`` built from the stationary covariance
blocks; everything in this module exists to compute that bias and the
constants (stability margin, incoherence, sample complexity, error
multipliers) that govern when the sparse part of ``A`` is recoverable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, ConstructionError, NumericalError
from .linalg import as_matrix, solve_lyapunov_continuous, solve_lyapunov_discrete, svd

__all__ = [
    "SystemParams",
    "SteadyState",
    "AssumptionReport",
    "stability_margin",
    "steady_state",
    "population_mle",
    "incoherence_mu",
    "identifiability_alpha",
    "lasso_incoherence_theta",
    "row_supports",
    "support_size",
    "max_row_l1",
    "latent_effect_constant",
    "theoretical_lambdas",
    "sample_complexity_T",
    "control_parameter",
    "theorem_constants",
    "assumption_report",
]


@dataclass(frozen=True)
class SystemParams:
    """Block parameters of the joint linear system.

    ``eta`` is the sampling step of the discrete-time model; ``eta = 0``
    means the system is interpreted in continuous time.  For ``eta > 0``
    the step must stay below ``2 / sigma_max(joint)``, the coarsest
    sampling for which the discrete model can remain contractive.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    eta: float = 0.0

    def __post_init__(self):
        a = as_matrix(self.A, "A")
        p = a.shape[0]
        if a.shape != (p, p):
            raise ConstructionError(f"A must be square, got {a.shape}")
        b = as_matrix(self.B, "B") if np.size(self.B) or np.ndim(self.B) == 2 else np.zeros((p, 0))
        r = b.shape[1]
        c = as_matrix(self.C, "C")
        d = as_matrix(self.D, "D")
        if b.shape != (p, r):
            raise ConstructionError(f"B must be {p} x r, got {b.shape}")
        if c.shape != (r, p):
            raise ConstructionError(f"C must be {r} x {p}, got {c.shape}")
        if d.shape != (r, r):
            raise ConstructionError(f"D must be {r} x {r}, got {d.shape}")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "C", c)
        object.__setattr__(self, "D", d)
        if self.eta < 0:
            raise ConstructionError("eta must be non-negative")
        if self.eta > 0:
            smax = float(np.linalg.norm(self.joint(), 2))
            if smax > 0 and self.eta >= 2.0 / smax:
                raise ConstructionError(
                    f"eta = {self.eta:.6g} is not below 2/sigma_max(joint) "
                    f"= {2.0 / smax:.6g}"
                )

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @property
    def r(self) -> int:
        return self.B.shape[1]

    def joint(self) -> np.ndarray:
        """The (p+r) x (p+r) drift matrix ``[[A, B], [C, D]]``."""
        top = np.hstack([self.A, self.B])
        bottom = np.hstack([self.C, self.D])
        return np.vstack([top, bottom])


@dataclass(frozen=True)
class SteadyState:
    """Stationary covariance blocks and the latent-effect matrix.

    ``Q`` (p x p), ``R`` (r x p) and ``P`` (r x r) are the blocks of the
    joint stationary covariance; ``L = B R Q^{-1}`` is the rank-<=r bias
    that corrupts the naive estimate of ``A``.  ``Cmin``/``Dmax`` are the
    extreme eigenvalues of the joint covariance and ``stability_margin``
    the A1 margin of the generating system.
    """

    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    L: np.ndarray
    Cmin: float
    Dmax: float
    stability_margin: float

    def joint(self) -> np.ndarray:
        top = np.hstack([self.Q, self.R.T])
        bottom = np.hstack([self.R, self.P])
        return np.vstack([top, bottom])


def stability_margin(params: SystemParams) -> float:
    """Stability margin of assumption A1 (positive iff A1 holds).

    Continuous systems: ``-lambda_max((M + M^T) / 2)`` for the joint drift
    ``M``.  Discrete systems: ``(1 - sigma_max(I + eta M)^2) / eta``.
    """
    m = params.joint()
    if params.eta == 0:
        sym = 0.5 * (m + m.T)
        return -float(np.max(np.linalg.eigvalsh(sym)))
    step = np.eye(m.shape[0]) + params.eta * m
    smax = float(np.linalg.norm(step, 2))
    return (1.0 - smax**2) / params.eta


def steady_state(params: SystemParams) -> SteadyState:
    """Stationary covariance blocks of the joint system.

    Solves the joint Lyapunov equation (continuous for ``eta = 0``,
    discrete otherwise), splits the solution into blocks, and forms
    ``L = B R Q^{-1}``.  Requires spectral stability of the joint drift;
    the A1 margin is reported but not required, since the stationary
    covariance exists for any Hurwitz system.
    """
    joint = params.joint()
    if params.eta == 0:
        qj = solve_lyapunov_continuous(joint)
    else:
        qj = solve_lyapunov_discrete(joint, params.eta)
    p = params.p
    q = qj[:p, :p]
    r_blk = qj[p:, :p]
    p_blk = qj[p:, p:]
    if float(np.min(np.linalg.eigvalsh(q))) < 1e-12:
        raise NumericalError("observed-block stationary covariance is numerically singular")
    if params.r:
        l_mat = params.B @ np.linalg.solve(q, r_blk.T).T
    else:
        l_mat = np.zeros((p, p))
    eigs = np.linalg.eigvalsh(qj)
    return SteadyState(
        Q=q,
        R=r_blk,
        P=p_blk,
        L=l_mat,
        Cmin=float(eigs[0]),
        Dmax=float(eigs[-1]),
        stability_margin=stability_margin(params),
    )


def population_mle(params: SystemParams) -> np.ndarray:
    """Infinite-data limit of least squares that ignores latent variables.

    Equals ``A + L``: the true interaction matrix plus the latent-effect
    bias, which is what row-wise regression of increments on states
    converges to.
    """
    return params.A + steady_state(params).L


def incoherence_mu(l_mat, rank_tol: float = 1e-8) -> float:
    """Incoherence of the singular subspaces of a low-rank matrix.

    With thin SVD ``L = U diag(s) V^T`` truncated at relative tolerance
    ``rank_tol`` and effective rank ``k``, returns the smallest ``mu``
    satisfying all three subspace-spread conditions:

    ``max_i ||U^T e_i||^2 <= mu k / p``,
    ``max_j ||V^T e_j||^2 <= mu k / p``,
    ``||U V^T||_inf^2 <= mu k / p^2``.

    A zero matrix has rank 0 and returns ``mu = 0``.
    """
    l_mat = as_matrix(l_mat, "L")
    if l_mat.shape[0] != l_mat.shape[1]:
        raise ConstructionError("L must be square")
    p = l_mat.shape[0]
    res = svd(l_mat)
    if res.S.size == 0 or res.S[0] <= 0:
        return 0.0
    k = int(np.count_nonzero(res.S > rank_tol * res.S[0]))
    u = res.U[:, :k]
    v = res.V[:, :k]
    row_leverage = float(np.max(np.sum(u * u, axis=1)))
    col_leverage = float(np.max(np.sum(v * v, axis=1)))
    cross_inf = float(np.max(np.abs(u @ v.T)))
    return max(
        (p / k) * row_leverage,
        (p / k) * col_leverage,
        (p * p / k) * cross_inf**2,
    )


def identifiability_alpha(mu: float, r: int, p: int) -> float:
    """Identifiability number ``3 sqrt(mu r / p)``; below one is required."""
    if mu < 0 or r < 0 or p < 1:
        raise ConstructionError("need mu >= 0, r >= 0, p >= 1")
    return 3.0 * math.sqrt(mu * r / p)


def row_supports(a: np.ndarray) -> list[tuple[int, ...]]:
    """Exact nonzero column indices of each row (generated systems are
    sparse by construction, so zero means exactly zero)."""
    return [tuple(np.nonzero(a[k])[0]) for k in range(a.shape[0])]


def support_size(a: np.ndarray) -> int:
    """Max nonzero count over all rows and columns (exact zeros)."""
    a = as_matrix(a, "A")
    nz = a != 0
    if not nz.any():
        return 0
    return int(max(nz.sum(axis=0).max(), nz.sum(axis=1).max()))


def lasso_incoherence_theta(q, supports) -> float:
    """Design incoherence of the observed stationary covariance.

    For each support set ``S`` (deduplicated), measures how strongly the
    off-support columns load on the support block through
    ``Q[S^c, S] Q[S, S]^{-1}`` in max-row-l1 norm; returns one minus the
    worst case.  Negative values signal the incoherence assumption fails
    (returned, not raised).
    """
    q = as_matrix(q, "Q")
    if q.shape[0] != q.shape[1]:
        raise ConstructionError("Q must be square")
    p = q.shape[0]
    unique = {tuple(sorted(set(int(i) for i in s))) for s in supports}
    worst = 0.0
    for s in unique:
        if not s:
            raise ConstructionError("support sets must be non-empty")
        if any(i < 0 or i >= p for i in s):
            raise ConstructionError(f"support {s} out of range for p = {p}")
        comp = tuple(i for i in range(p) if i not in s)
        if not comp:
            continue
        s_idx = np.array(s)
        c_idx = np.array(comp)
        block = q[np.ix_(s_idx, s_idx)]
        cross = q[np.ix_(s_idx, c_idx)]
        try:
            w = np.linalg.solve(block, cross).T
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular support block {s}: {exc}") from exc
        worst = max(worst, float(np.max(np.sum(np.abs(w), axis=1))))
    return 1.0 - worst


def max_row_l1(b: np.ndarray) -> float:
    """Largest row l1 norm (the (inf,1) operator norm)."""
    if b.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(b), axis=1)))


def latent_effect_constant(
    params: SystemParams,
    margin: float,
    x0_norm2: float = 0.0,
    u0_norm2: float = 0.0,
) -> float:
    """Constant ``m`` capturing initial-condition and latent-input effects:
    ``max(80 / sqrt(margin) * ||B||_{inf,1}, sqrt(|x0|^2 + |u0|^2 + (sqrt(eta)+1)^2))``.
    """
    if margin <= 0:
        raise AssumptionError("A1: stability margin must be positive to form m")
    latent_term = 80.0 / math.sqrt(margin) * max_row_l1(params.B)
    init_term = math.sqrt(x0_norm2 + u0_norm2 + (math.sqrt(params.eta) + 1.0) ** 2)
    return max(latent_term, init_term)


def _log_model_size(s: int, r: int, p: int, delta: float) -> float:
    return math.log(4.0 * ((s + 2 * r) * p + r * r) / delta)


def theoretical_lambdas(
    params: SystemParams,
    *,
    D: float,
    theta: float,
    alpha: float,
    s: int,
    n: int,
    delta: float,
    x0_norm2: float = 0.0,
    u0_norm2: float = 0.0,
    horizon: float | None = None,
) -> tuple[float, float]:
    """Theory-prescribed regularizer weights ``(lambda_A, lambda_L)``.

    ``lambda_A = 16 m (4 - theta) / (theta sqrt(D)) * sqrt(log(4((s+2r)p + r^2)/delta) / T)``
    with ``T = n * eta`` (override via ``horizon`` for continuous systems),
    and ``lambda_L = lambda_A * sqrt(p) * ratio`` where

    ``ratio = (1/(1-alpha)) * ((3 alpha sqrt(s)/4 + (8-theta) s / (theta (4-theta)))
    * (theta sqrt(p) / (9 s sqrt(s)) + 1) + 1/2)``.
    """
    if D <= 0:
        raise AssumptionError("A1: stability margin must be positive")
    if theta <= 0:
        raise AssumptionError("A3: incoherence theta must be positive")
    if not alpha < 1:
        raise AssumptionError("A2: identifiability alpha must be below one")
    if n < 1:
        raise ConstructionError("n must be at least 1")
    if not 0 < delta < 1:
        raise ConstructionError("delta must lie in (0, 1)")
    if s < 1:
        raise ConstructionError("s must be at least 1")
    horizon_t = horizon if horizon is not None else n * params.eta
    if horizon_t <= 0:
        raise ConstructionError(
            "observation horizon n * eta must be positive (pass horizon= for "
            "continuous systems)"
        )
    m = latent_effect_constant(params, D, x0_norm2, u0_norm2)
    p, r = params.p, params.r
    lam_a = (
        16.0 * m * (4.0 - theta) / (theta * math.sqrt(D))
        * math.sqrt(_log_model_size(s, r, p, delta) / horizon_t)
    )
    sqrt_s = math.sqrt(s)
    ratio = (1.0 / (1.0 - alpha)) * (
        (3.0 * alpha * sqrt_s / 4.0 + (8.0 - theta) * s / (theta * (4.0 - theta)))
        * (theta * math.sqrt(p) / (9.0 * s * sqrt_s) + 1.0)
        + 0.5
    )
    lam_l = lam_a * math.sqrt(p) * ratio
    return lam_a, lam_l


def sample_complexity_T(
    s: int,
    r: int,
    p: int,
    D: float,
    theta: float,
    cmin: float,
    delta: float,
    K: float = 3.0e6,
) -> float:
    """Worst-case horizon ``T = K s^3 / (D^2 theta^2 Cmin^2) * log(4((s+2r)p + r^2)/delta)``."""
    if min(s, p) < 1 or r < 0 or D <= 0 or theta <= 0 or cmin <= 0 or K <= 0:
        raise ConstructionError("sample_complexity_T needs positive inputs")
    if not 0 < delta < 1:
        raise ConstructionError("delta must lie in (0, 1)")
    return K * s**3 / (D**2 * theta**2 * cmin**2) * _log_model_size(s, r, p, delta)


def control_parameter(eta: float, n: int, s: int, r: int, p: int) -> float:
    """Rescaled horizon ``Theta = eta n / (s^3 log((s+2r)p + r^2))``.

    The success-probability curves of the recovery experiments collapse
    when plotted against this parameter (natural logarithm).
    """
    if eta <= 0 or n < 1 or s < 1 or r < 0 or p < 1:
        raise ConstructionError("control_parameter needs positive inputs")
    return eta * n / (s**3 * math.log((s + 2 * r) * p + r * r))


def theorem_constants(
    alpha: float,
    theta: float,
    cmin: float,
    dmax: float,
    s: int,
    lambda_a: float,
    l_spectral: float,
) -> tuple[float, float]:
    """Error-bound multipliers ``(nu, rho0)``.

    ``nu = alpha theta / (2 Dmax) + (8 - theta) sqrt(s) / (Cmin (4 - theta))``
    bounds the entrywise error of the sparse estimate as ``nu * lambda_A``;
    ``rho0 = min(alpha / 4, theta alpha lambda_A / (5 theta alpha lambda_A +
    16 Dmax ||L||_2))`` bounds the relative spectral error of the low-rank
    estimate as ``rho0 / (1 - 5 rho0)``.
    """
    nu = alpha * theta / (2.0 * dmax) + (8.0 - theta) * math.sqrt(s) / (
        cmin * (4.0 - theta)
    )
    numer = theta * alpha * lambda_a
    denom = 5.0 * numer + 16.0 * dmax * l_spectral
    rho0 = min(alpha / 4.0, numer / denom) if denom > 0 else 0.0
    return nu, rho0


@dataclass(frozen=True)
class AssumptionReport:
    """Every assumption constant for one system, with pass/fail flags.

    Fields that require a failed assumption to evaluate (for example the
    theoretical regularizers when identifiability fails) are ``None``.
    """

    D: float
    mu: float
    alpha: float
    theta: float
    s: int
    cmin: float
    dmax: float
    l_spectral: float
    m: float | None
    lambda_a_theory: float | None
    lambda_l_theory: float | None
    t_required: float | None
    nu: float | None
    rho0: float | None
    n: int
    delta: float
    K: float
    passes: dict = field(default_factory=dict)


def assumption_report(
    params: SystemParams,
    n: int,
    delta: float = 0.1,
    K: float = 3.0e6,
    x0_norm2: float = 0.0,
    u0_norm2: float = 0.0,
    horizon: float | None = None,
    rank_tol: float = 1e-8,
) -> AssumptionReport:
    """Evaluate every assumption constant for ``params``.

    Computes the stability margin, incoherence, identifiability and design
    incoherence unconditionally (they only need a solvable steady state);
    the regularizer/sample-complexity/error constants are filled only when
    the assumptions they rely on hold, otherwise left as ``None``.
    """
    ss = steady_state(params)
    margin = ss.stability_margin
    mu = incoherence_mu(ss.L, rank_tol)
    alpha = identifiability_alpha(mu, params.r, params.p)
    theta = lasso_incoherence_theta(ss.Q, row_supports(params.A))
    s = max(support_size(params.A), 1)
    l_spectral = float(np.linalg.norm(ss.L, 2))
    passes = {"A1": margin > 0, "A2": alpha < 1, "A3": theta > 0}

    m_const = lam_a = lam_l = t_req = nu = rho0 = None
    if passes["A1"]:
        m_const = latent_effect_constant(params, margin, x0_norm2, u0_norm2)
    if passes["A3"]:
        t_req = sample_complexity_T(s, params.r, params.p, margin, theta, ss.Cmin, delta, K) \
            if passes["A1"] else None
    horizon_t = horizon if horizon is not None else n * params.eta
    if all(passes.values()) and horizon_t > 0:
        lam_a, lam_l = theoretical_lambdas(
            params,
            D=margin,
            theta=theta,
            alpha=alpha,
            s=s,
            n=n,
            delta=delta,
            x0_norm2=x0_norm2,
            u0_norm2=u0_norm2,
            horizon=horizon,
        )
        nu, rho0 = theorem_constants(alpha, theta, ss.Cmin, ss.Dmax, s, lam_a, l_spectral)
    return AssumptionReport(
        D=margin,
        mu=mu,
        alpha=alpha,
        theta=theta,
        s=s,
        cmin=ss.Cmin,
        dmax=ss.Dmax,
        l_spectral=l_spectral,
        m=m_const,
        lambda_a_theory=lam_a,
        lambda_l_theory=lam_l,
        t_required=t_req,
        nu=nu,
        rho0=rho0,
        n=n,
        delta=delta,
        K=K,
        passes=passes,
    )
