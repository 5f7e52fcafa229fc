"""Sample-path simulation and reduction to sufficient statistics.

Two samplers share the recursion ``X(i+1) = F X(i) + noise``:

* ``simulate_discrete`` iterates the discrete-time model directly, with
  ``F = I + eta * joint`` and isotropic noise of covariance ``eta I``;
* ``simulate_continuous`` subsamples the continuous-time flow at step
  ``eta``, with ``F = exp(eta * joint)`` and the one-step noise drawn from
  either the exact flow-filtered covariance (``mode="exact"``, via the
  Van Loan block-exponential integral) or its Riemann-sum approximation
  over ``K`` sub-bins (``mode="binned"``, matching integration schemes that
  hold the driving noise constant within each bin).

The solver never touches raw paths: ``sufficient_stats`` reduces a
trajectory to the two cross-moment matrices and the squared-increment sum
that determine the least-squares objective.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError, DataError, DivergenceError, NumericalError, StabilityError
from .linalg import matrix_exponential, solve_lyapunov_continuous, solve_lyapunov_discrete
from .model import SystemParams
from .rng import CounterRng

__all__ = [
    "Trajectory",
    "SufficientStats",
    "simulate_discrete",
    "simulate_continuous",
    "exact_increment_covariance",
    "binned_increment_covariance",
    "sufficient_stats",
    "merge_stats",
    "trajectory_to_csv",
    "trajectory_from_csv",
]

_BLOWUP_LIMIT = 1e10


@dataclass(frozen=True)
class Trajectory:
    """Observed sample path ``x(0..n)`` at sampling step ``eta``.

    ``x`` has shape (n+1, p).  The latent path ``u`` is retained only when
    the simulator was asked to keep it.
    """

    x: np.ndarray
    eta: float
    u: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ConstructionError("trajectory needs at least two samples of shape (n+1, p)")
        if not np.isfinite(x).all():
            raise ConstructionError("trajectory contains non-finite values")
        if self.eta <= 0:
            raise ConstructionError("eta must be positive")
        object.__setattr__(self, "x", x)
        if self.u is not None:
            u = np.asarray(self.u, dtype=np.float64)
            if u.shape[0] != x.shape[0] or not np.isfinite(u).all():
                raise ConstructionError("latent path inconsistent with observed path")
            object.__setattr__(self, "u", u)

    @property
    def n(self) -> int:
        """Number of transitions."""
        return self.x.shape[0] - 1

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def horizon(self) -> float:
        """Total observation time ``T = n * eta``."""
        return self.n * self.eta


@dataclass(frozen=True)
class SufficientStats:
    """Single-pass reduction of a trajectory.

    ``S1 = (1/n) sum x(i) x(i)^T`` and
    ``S2 = (1/(eta n)) sum (x(i+1) - x(i)) x(i)^T``; together with
    ``sq_increment_sum = sum ||x(i+1) - x(i)||^2`` they determine the
    least-squares objective and its gradient for any candidate drift.
    """

    S1: np.ndarray
    S2: np.ndarray
    n: int
    eta: float
    sq_increment_sum: float


def _initial_state(params: SystemParams, x0, u0, init: str, rng, stationary_cov) -> np.ndarray:
    """Starting joint state: zeros (default), explicit vectors, or a draw
    from the stationary Gaussian (which removes burn-in)."""
    if init not in ("zero", "stationary"):
        raise ConstructionError(f"unknown init {init!r} (expected 'zero' or 'stationary')")
    if init == "stationary":
        if x0 is not None or u0 is not None:
            raise ConstructionError("explicit x0/u0 conflict with init='stationary'")
        cov = stationary_cov()
        return np.linalg.cholesky(cov) @ rng.normals(params.p + params.r)
    m = params.p + params.r
    state = np.zeros(m)
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (params.p,):
            raise ConstructionError(f"x0 must have shape ({params.p},)")
        state[: params.p] = x0
    if u0 is not None:
        u0 = np.asarray(u0, dtype=float)
        if u0.shape != (params.r,):
            raise ConstructionError(f"u0 must have shape ({params.r},)")
        state[params.p:] = u0
    return state


def _apply_discard(xs: np.ndarray, us: np.ndarray | None, discard: int, n: int):
    if not 0 <= discard <= n - 1:
        raise ConstructionError("discard must satisfy 0 <= discard <= n - 1")
    if discard:
        xs = xs[discard:]
        us = us[discard:] if us is not None else None
    return xs, us


def _spectral_radius(m: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(m)))) if m.size else 0.0


def _run_recursion(
    f: np.ndarray,
    noise: np.ndarray,
    state: np.ndarray,
    p: int,
    keep_latent: bool,
    check_blowup: bool,
) -> tuple[np.ndarray, np.ndarray | None]:
    n = noise.shape[0]
    xs = np.empty((n + 1, p))
    us = np.empty((n + 1, state.size - p)) if keep_latent else None
    xs[0] = state[:p]
    if us is not None:
        us[0] = state[p:]
    for i in range(n):
        state = f @ state + noise[i]
        xs[i + 1] = state[:p]
        if us is not None:
            us[i + 1] = state[p:]
        if check_blowup and i % 64 == 0 and np.max(np.abs(state)) > _BLOWUP_LIMIT:
            raise DivergenceError(f"state norm exceeded {_BLOWUP_LIMIT:g} at step {i}")
    if check_blowup and np.max(np.abs(state)) > _BLOWUP_LIMIT:
        raise DivergenceError(f"state norm exceeded {_BLOWUP_LIMIT:g} at final step")
    return xs, us


def simulate_discrete(
    params: SystemParams,
    n: int,
    x0=None,
    u0=None,
    seed: int = 0,
    keep_latent: bool = False,
    noise: np.ndarray | None = None,
    init: str = "zero",
    discard: int = 0,
) -> Trajectory:
    """Iterate ``X(i+1) = (I + eta*joint) X(i) + w(i)``, ``w ~ N(0, eta I)``.

    ``noise`` overrides the Gaussian draws with an explicit (n, p+r) array
    (used by tests to inject specific increments).  ``init="stationary"``
    draws the starting state from the stationary Gaussian instead of
    zeros (consuming p+r normals before the path noise); ``discard``
    drops that many leading samples as burn-in.  Requires spectral radius
    of ``I + eta*joint`` below one so the iteration is convergent.
    """
    if params.eta <= 0:
        raise ConstructionError("discrete simulation needs params.eta > 0")
    if n < 1:
        raise ConstructionError("n must be at least 1")
    m = params.p + params.r
    f = np.eye(m) + params.eta * params.joint()
    if _spectral_radius(f) >= 1:
        raise StabilityError(
            "discrete iteration is not convergent: spectral radius of "
            "I + eta*joint is >= 1"
        )
    rng = CounterRng(seed)
    state = _initial_state(
        params, x0, u0, init, rng,
        lambda: solve_lyapunov_discrete(params.joint(), params.eta),
    )
    if noise is None:
        w = rng.normal_matrix(n, m) * np.sqrt(params.eta)
    else:
        w = np.asarray(noise, dtype=float)
        if w.shape != (n, m):
            raise ConstructionError(f"noise must have shape ({n}, {m})")
    xs, us = _run_recursion(f, w, state, params.p, keep_latent, check_blowup=True)
    xs, us = _apply_discard(xs, us, discard, n)
    return Trajectory(x=xs, eta=params.eta, u=us)


def exact_increment_covariance(joint: np.ndarray, eta: float) -> np.ndarray:
    """Covariance ``G(eta) = int_0^eta e^{sM} e^{sM^T} ds`` of the exact
    one-step stochastic increment, via the Van Loan block exponential."""
    m = joint.shape[0]
    block = np.zeros((2 * m, 2 * m))
    block[:m, :m] = -joint
    block[:m, m:] = np.eye(m)
    block[m:, m:] = joint.T
    e = matrix_exponential(block * eta)
    g = e[m:, m:].T @ e[:m, m:]
    return 0.5 * (g + g.T)


def binned_increment_covariance(joint: np.ndarray, eta: float, bins: int) -> np.ndarray:
    """Covariance of the binned approximation of the one-step increment.

    Holding the driving noise constant on each of ``bins`` sub-intervals
    and flowing each bin's increment to the end of the step gives a sum
    ``sum_k e^{(eta - tau_k) M} dW_k`` with ``dW_k ~ N(0, (eta/bins) I)``
    and ``tau_k`` the right endpoint of bin ``k``, so the mixing matrices
    are ``e^{j eta M / bins}`` for ``j = 0 .. bins-1`` (the newest bin
    enters unfiltered).  The result is the left Riemann sum of the exact
    integral and converges to it at rate O(eta / bins).
    """
    if bins < 1:
        raise ConstructionError("bins must be at least 1")
    m = joint.shape[0]
    step = matrix_exponential(joint * (eta / bins))
    g = np.zeros((m, m))
    factor = np.eye(m)
    for _ in range(bins):
        g += factor @ factor.T
        factor = factor @ step
    g *= eta / bins
    return 0.5 * (g + g.T)


def simulate_continuous(
    params: SystemParams,
    eta: float,
    n: int,
    mode: str = "binned",
    bins: int = 10,
    seed: int = 0,
    x0=None,
    u0=None,
    keep_latent: bool = False,
    noise: np.ndarray | None = None,
    init: str = "zero",
    discard: int = 0,
) -> Trajectory:
    """Subsample the continuous-time flow at step ``eta``.

    Both modes share the deterministic flow ``X(i+1) = e^{eta M} X(i)``;
    they differ in the one-step noise covariance (exact flow integral vs.
    its ``bins``-bin Riemann approximation).  Increments are sampled
    through the Cholesky factor of that covariance, which reproduces the
    respective Gaussian law exactly.  ``noise`` overrides the underlying
    standard normal draws (an (n, p+r) array; zeros give the noise-free
    flow).  ``init="stationary"`` starts from a draw of the continuous
    stationary Gaussian; ``discard`` drops leading samples as burn-in.
    Requires a Hurwitz joint drift.
    """
    if eta <= 0:
        raise ConstructionError("sampling step eta must be positive")
    if n < 1:
        raise ConstructionError("n must be at least 1")
    joint = params.joint()
    if joint.size and float(np.max(np.linalg.eigvals(joint).real)) >= 0:
        raise StabilityError("continuous simulation needs a Hurwitz joint drift")
    if mode == "exact":
        cov = exact_increment_covariance(joint, eta)
    elif mode == "binned":
        cov = binned_increment_covariance(joint, eta, bins)
    else:
        raise ConstructionError(f"unknown mode {mode!r} (expected 'exact' or 'binned')")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"increment covariance not positive definite: {exc}") from exc
    m = joint.shape[0]
    rng = CounterRng(seed)
    state = _initial_state(
        params, x0, u0, init, rng,
        lambda: solve_lyapunov_continuous(joint),
    )
    if noise is None:
        z = rng.normal_matrix(n, m)
    else:
        z = np.asarray(noise, dtype=float)
        if z.shape != (n, m):
            raise ConstructionError(f"noise must have shape ({n}, {m})")
    increments = z @ chol.T
    f = matrix_exponential(joint * eta)
    xs, us = _run_recursion(f, increments, state, params.p, keep_latent, check_blowup=False)
    xs, us = _apply_discard(xs, us, discard, n)
    return Trajectory(x=xs, eta=eta, u=us)


def sufficient_stats(traj: Trajectory) -> SufficientStats:
    """Reduce a trajectory to its least-squares sufficient statistics."""
    xc = traj.x[:-1]
    dx = traj.x[1:] - xc
    n = traj.n
    s1 = xc.T @ xc / n
    s1 = 0.5 * (s1 + s1.T)
    s2 = dx.T @ xc / (traj.eta * n)
    return SufficientStats(
        S1=s1,
        S2=s2,
        n=n,
        eta=traj.eta,
        sq_increment_sum=float(np.sum(dx * dx)),
    )


def merge_stats(parts: list[SufficientStats]) -> SufficientStats:
    """Merge chunk statistics; transition counts weight the averages."""
    if not parts:
        raise ConstructionError("merge_stats needs at least one chunk")
    eta = parts[0].eta
    if any(abs(p.eta - eta) > 1e-15 for p in parts):
        raise ConstructionError("cannot merge statistics with different eta")
    total = sum(p.n for p in parts)
    s1 = sum(p.S1 * p.n for p in parts) / total
    s2 = sum(p.S2 * p.n for p in parts) / total
    sq = float(sum(p.sq_increment_sum for p in parts))
    return SufficientStats(S1=0.5 * (s1 + s1.T), S2=s2, n=total, eta=eta, sq_increment_sum=sq)


def trajectory_to_csv(traj: Trajectory, comments: list[str] | None = None) -> str:
    """Render a trajectory as CSV: optional '#' comment lines, then a
    ``t,x1..xp`` header and one row per sample with ``t = i * eta``."""
    buf = io.StringIO()
    for line in comments or []:
        buf.write(f"# {line}\n")
    cols = ",".join(f"x{j + 1}" for j in range(traj.p))
    buf.write(f"t,{cols}\n")
    for i in range(traj.x.shape[0]):
        t = i * traj.eta
        row = ",".join(f"{v:.17g}" for v in traj.x[i])
        buf.write(f"{t:.17g},{row}\n")
    return buf.getvalue()


def trajectory_from_csv(text: str) -> Trajectory:
    """Parse the CSV format written by :func:`trajectory_to_csv`.

    The sampling step is recovered from the time column, which must be a
    uniform, strictly increasing grid.
    """
    rows = []
    header = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if header is None:
            header = stripped.split(",")
            if header[0] != "t" or len(header) < 2:
                raise DataError(f"line {lineno}: expected header 't,x1,...'")
            continue
        parts = stripped.split(",")
        if len(parts) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from exc
    if header is None or len(rows) < 2:
        raise DataError("trajectory CSV needs a header and at least two rows")
    data = np.asarray(rows)
    times = data[:, 0]
    steps = np.diff(times)
    eta = float(steps[0])
    if eta <= 0 or np.max(np.abs(steps - eta)) > 1e-9 * max(eta, 1.0):
        raise DataError("time column must be a uniform, strictly increasing grid")
    return Trajectory(x=data[:, 1:], eta=eta)
