import numpy as np
import pytest

from sparsedyn.errors import ConstructionError
from sparsedyn.evaluate import block_cross_validate, recovery_report
from sparsedyn.generate import GenSpec, gen_illustrative, gen_random_system
from sparsedyn.model import steady_state
from sparsedyn.rng import CounterRng
from sparsedyn.simulate import (
    Trajectory,
    simulate_continuous,
    sufficient_stats,
)
from sparsedyn.solver import (
    MODE_PURE_LASSO,
    SolverConfig,
    fit,
    fit_lasso,
    objective,
    smooth_gradient,
)

from reference import central_difference_gradient, solver_subgradient_reference


def _stats_from_system(seed: int, p: int = 3, r: int = 0, s: int = 1,
                       n: int = 40, eta: float = 0.1):
    params = gen_random_system(GenSpec(p=p, r=r, s=s, seed=seed))
    traj = simulate_continuous(params, eta=eta, n=n, mode="exact", seed=seed + 1)
    return sufficient_stats(traj), traj


# ----------------------------------------------------------- objective


def test_objective_zero_model_is_constant():
    stats, traj = _stats_from_system(seed=1)
    zero = np.zeros((3, 3))
    val = objective(zero, zero, stats, stats.sq_increment_sum, 1.0, 1.0)
    expected = stats.sq_increment_sum / (2 * stats.eta**2 * stats.n)
    assert abs(val - expected) < 1e-12 * max(1.0, expected)


def test_objective_matches_per_sample_sum():
    stats, traj = _stats_from_system(seed=2, n=5)
    rng = CounterRng(7)
    a = rng.normal_matrix(3, 3)
    l_mat = rng.normal_matrix(3, 3)
    lam_a, lam_l = 0.3, 0.7
    val = objective(a, l_mat, stats, stats.sq_increment_sum, lam_a, lam_l)
    m = a + l_mat
    direct = 0.0
    for i in range(traj.n):
        resid = traj.x[i + 1] - traj.x[i] - traj.eta * (m @ traj.x[i])
        direct += float(resid @ resid)
    direct /= 2 * traj.eta**2 * traj.n
    direct += lam_a * np.abs(a).sum()
    direct += lam_l * np.linalg.svd(l_mat, compute_uv=False).sum()
    assert abs(val - direct) < 1e-10 * max(1.0, abs(direct))


def test_objective_approaches_continuous_limit():
    # Simulate fine paths, evaluate the continuous-time loss on each by
    # quadrature (trapezoid for the dt integral, left-point sum for the
    # stochastic one), and check the subsampled discrete objective minus
    # its data constant approaches that value as eta shrinks.  The gap is
    # a path functional, so compare medians over independent paths.
    params = gen_random_system(GenSpec(p=3, r=0, s=1, seed=9))
    h = 0.002
    n_fine = 10000  # T = 20
    m = CounterRng(5).normal_matrix(3, 3) * 0.5
    horizon = n_fine * h

    gaps = {0.1: [], 0.01: []}
    for seed in range(7):
        traj = simulate_continuous(params, eta=h, n=n_fine, mode="exact", seed=33 + seed)
        mx = traj.x @ m.T
        quad = np.sum(mx * mx, axis=1)
        dt_integral = h * (0.5 * quad[0] + quad[1:-1].sum() + 0.5 * quad[-1])
        dx = traj.x[1:] - traj.x[:-1]
        ito_sum = float(np.sum(dx * mx[:-1]))
        continuous_value = dt_integral / (2 * horizon) - ito_sum / horizon
        for eta in (0.1, 0.01):
            stride = round(eta / h)
            sub = Trajectory(x=traj.x[::stride], eta=eta)
            stats = sufficient_stats(sub)
            const = stats.sq_increment_sum / (2 * eta**2 * stats.n)
            val = objective(m, np.zeros((3, 3)), stats, stats.sq_increment_sum, 0.0, 0.0)
            gaps[eta].append(abs(val - const - continuous_value))
    assert np.median(gaps[0.01]) < np.median(gaps[0.1])


# ------------------------------------------------------------ gradient


def test_gradient_zero_at_normal_equations():
    stats, _ = _stats_from_system(seed=3)
    m = stats.S2 @ np.linalg.inv(stats.S1)
    g = smooth_gradient(m, stats)
    assert np.max(np.abs(g)) < 1e-10


@pytest.mark.parametrize("p", [2, 4, 8])
def test_gradient_matches_finite_differences(p):
    stats, _ = _stats_from_system(seed=10 + p, p=p, n=60)
    m = CounterRng(20 + p).normal_matrix(p, p)

    def smooth_value(mm):
        return objective(mm, np.zeros((p, p)), stats, stats.sq_increment_sum, 0.0, 0.0)

    g = smooth_gradient(m, stats)
    fd = central_difference_gradient(smooth_value, m, h=1e-6)
    assert np.max(np.abs(g - fd) / np.maximum(np.abs(g), 1.0)) < 1e-5


def test_gradient_zero_data():
    stats = sufficient_stats(Trajectory(x=np.zeros((6, 3)), eta=0.1))
    m = CounterRng(1).normal_matrix(3, 3)
    assert np.all(smooth_gradient(m, stats) == 0)


# ----------------------------------------------------------------- fit


def test_fit_over_regularized_returns_zero():
    stats, _ = _stats_from_system(seed=4, n=60)
    lam_a = float(np.max(np.abs(stats.S2))) * 1.5
    lam_l = float(np.linalg.norm(stats.S2, 2)) * 1.5
    est = fit(stats, stats.sq_increment_sum, SolverConfig(lambda_a=lam_a, lambda_l=lam_l))
    assert np.all(est.Ahat == 0) and np.all(est.Lhat == 0)
    assert est.converged


def test_fit_lasso_over_regularized_returns_zero():
    stats, _ = _stats_from_system(seed=5, n=60)
    lam_a = float(np.max(np.abs(stats.S2))) * 1.5
    est = fit_lasso(stats, stats.sq_increment_sum,
                    SolverConfig(lambda_a=lam_a, mode=MODE_PURE_LASSO))
    assert np.all(est.Ahat == 0)


@pytest.mark.parametrize("lasso", [False, True])
def test_fit_matches_subgradient_reference_p2(lasso):
    stats, _ = _stats_from_system(seed=6, p=2, n=30)
    lam_a, lam_l = 0.3, 0.4
    mode = MODE_PURE_LASSO if lasso else "sparse_plus_lowrank"
    config = SolverConfig(lambda_a=lam_a, lambda_l=0.0 if lasso else lam_l,
                          mode=mode, max_iter=20000, tol=1e-12)
    est = fit(stats, stats.sq_increment_sum, config)
    ref = solver_subgradient_reference(
        stats.S1, stats.S2, stats.eta, stats.n, stats.sq_increment_sum,
        lam_a, lam_l, iters=100000, lasso=lasso,
    )
    final = est.objective_trace[-1]
    # FISTA must not be worse, and the subgradient best must be close.
    assert final <= ref + 1e-9
    assert abs(final - ref) < 1e-3


def test_fit_trace_non_increasing_with_restart():
    for seed in range(6):
        stats, _ = _stats_from_system(seed=30 + seed, p=4, r=2, s=1, n=80)
        lam = 0.05 + 0.1 * (seed % 3)
        est = fit(stats, stats.sq_increment_sum,
                  SolverConfig(lambda_a=lam, lambda_l=2 * lam, max_iter=500, tol=1e-10))
        trace = np.array(est.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12 * np.maximum(1.0, np.abs(trace[:-1])))


def test_fit_plain_fista_available():
    stats, _ = _stats_from_system(seed=40, p=4, r=2, s=1, n=80)
    est = fit(stats, stats.sq_increment_sum,
              SolverConfig(lambda_a=0.05, lambda_l=0.1, restart=False, max_iter=300))
    assert np.isfinite(est.objective_trace).all()


def test_fit_fixed_point_after_convergence():
    # The stopping rule bounds the one-step movement through the descent
    # lemma: ||next - current||_F <= sqrt(2 step |delta f|) with
    # |delta f| <= tol * max(1, |f|).
    from sparsedyn.linalg import prox_l1, prox_nuclear

    stats, _ = _stats_from_system(seed=41, p=4, r=2, s=1, n=80)
    tol = 1e-10
    config = SolverConfig(lambda_a=0.05, lambda_l=0.1, max_iter=20000, tol=tol)
    est = fit(stats, stats.sq_increment_sum, config)
    assert est.converged
    step = est.step_used
    g = smooth_gradient(est.Ahat + est.Lhat, stats)
    a_next = prox_l1(est.Ahat - step * g, step * config.lambda_a)
    l_next, _ = prox_nuclear(est.Lhat - step * g, step * config.lambda_l)
    move = np.sqrt(np.linalg.norm(a_next - est.Ahat) ** 2
                   + np.linalg.norm(l_next - est.Lhat) ** 2)
    f_final = est.objective_trace[-1]
    assert move <= np.sqrt(2 * step * tol * max(1.0, abs(f_final))) * 10


def test_fit_fixed_point_exact_at_zero_solution():
    # Over-regularized problems converge to the exact fixed point 0, where
    # one further step moves by far less than 10 * tol.
    from sparsedyn.linalg import prox_l1, prox_nuclear

    stats, _ = _stats_from_system(seed=42, n=60)
    lam_a = float(np.max(np.abs(stats.S2))) * 2.0
    lam_l = float(np.linalg.norm(stats.S2, 2)) * 2.0
    config = SolverConfig(lambda_a=lam_a, lambda_l=lam_l, tol=1e-8)
    est = fit(stats, stats.sq_increment_sum, config)
    step = est.step_used
    g = smooth_gradient(est.Ahat + est.Lhat, stats)
    a_next = prox_l1(est.Ahat - step * g, step * lam_a)
    l_next, _ = prox_nuclear(est.Lhat - step * g, step * lam_l)
    move = np.linalg.norm(a_next - est.Ahat) + np.linalg.norm(l_next - est.Lhat)
    assert move < 10 * config.tol


def test_fit_mode_equivalence_without_latents():
    stats, _ = _stats_from_system(seed=8, p=4, r=0, s=2, n=4000, eta=0.05)
    lam_a = 0.05
    lam_l_big = float(np.linalg.norm(stats.S2, 2)) * 2.0
    joint = fit(stats, stats.sq_increment_sum,
                SolverConfig(lambda_a=lam_a, lambda_l=lam_l_big,
                             max_iter=20000, tol=1e-13))
    lasso = fit_lasso(stats, stats.sq_increment_sum,
                      SolverConfig(lambda_a=lam_a, mode=MODE_PURE_LASSO,
                                   max_iter=20000, tol=1e-13))
    assert np.all(joint.Lhat == 0)
    assert np.linalg.norm(joint.Ahat - lasso.Ahat) < 1e-6


def test_fit_scaling_covariance():
    stats, traj = _stats_from_system(seed=12, p=3, r=0, s=1, n=200)
    scale = 2.5
    scaled = sufficient_stats(Trajectory(x=traj.x * scale, eta=traj.eta))
    lam_a, lam_l = 0.08, 0.15
    base = fit(stats, stats.sq_increment_sum,
               SolverConfig(lambda_a=lam_a, lambda_l=lam_l, max_iter=20000, tol=1e-13))
    rescaled = fit(scaled, scaled.sq_increment_sum,
                   SolverConfig(lambda_a=lam_a * scale**2, lambda_l=lam_l * scale**2,
                                max_iter=20000, tol=1e-13))
    assert np.linalg.norm(base.Ahat - rescaled.Ahat) < 1e-5
    assert np.linalg.norm(base.Lhat - rescaled.Lhat) < 1e-5


def test_solver_config_validation():
    with pytest.raises(ConstructionError):
        SolverConfig(lambda_a=0.0, lambda_l=1.0)
    with pytest.raises(ConstructionError):
        SolverConfig(lambda_a=1.0, lambda_l=0.0)  # required outside lasso mode
    with pytest.raises(ConstructionError):
        SolverConfig(lambda_a=1.0, lambda_l=1.0, max_iter=0)
    with pytest.raises(ConstructionError):
        SolverConfig(lambda_a=1.0, lambda_l=1.0, tol=0.0)
    SolverConfig(lambda_a=1.0, mode=MODE_PURE_LASSO)  # lambda_l optional here


# ------------------------------------------- statistical recovery runs


def test_fit_illustrative_signed_recovery():
    # Structured system p=16, r=2: the sparse block is -I (minimum
    # magnitude 1), the latent effect is dense low-rank.  With constants
    # chosen by chunked cross-validation on a long exact-mode run
    # (T = 800, far into the recovered regime), the fitted sparse block
    # must reproduce the signed support of -I exactly.  The constant grid
    # is calibrated to the support-recovery range of the weight scale:
    # one-step prediction error alone is flat to within its noise floor
    # across c, so the grid spans c where selection is sign-consistent and
    # CV resolves the latent weight d.
    params = gen_illustrative(16, 2)
    truth = steady_state(params)
    traj = simulate_continuous(params, eta=0.1, n=8000, mode="exact", seed=2718)
    selection = block_cross_validate(
        traj, grid_c=[2.0, 3.0], grid_d=[0.3, 1.0, 3.0], chunk_count=5,
        s_ref=1, r_ref=2,
    )
    stats = sufficient_stats(traj)
    est = fit(stats, stats.sq_increment_sum,
              SolverConfig(lambda_a=selection.lambda_a, lambda_l=selection.lambda_l,
                           max_iter=5000, tol=1e-10))
    report = recovery_report(est.Ahat, params.A, est.Lhat, truth.L)
    assert report.signed_match, (
        f"signed support not recovered: linf={report.linf_error:.4f}, "
        f"cv=({selection.c}, {selection.d})"
    )


def test_fit_lasso_denser_than_joint_on_latent_systems():
    # With latent series present and matched data/regularizer, the
    # latent-blind estimate must absorb the low-rank effect into many
    # spurious entries: its support is a superset in most trials and never
    # sparser, and strictly denser in the median.
    sparser_or_equal = []
    strictly_denser = []
    for seed in range(10):
        params = gen_random_system(GenSpec(p=20, r=2, s=2, seed=900 + seed))
        traj = simulate_continuous(params, eta=0.05, n=12000, mode="binned", seed=seed)
        stats = sufficient_stats(traj)
        from sparsedyn.evaluate import lambda_pair_from_constants

        lam_a, lam_l = lambda_pair_from_constants(0.6, 0.5, 20, 2, 2, 0.05, traj.n)
        joint = fit(stats, stats.sq_increment_sum,
                    SolverConfig(lambda_a=lam_a, lambda_l=lam_l, max_iter=3000, tol=1e-9))
        lasso = fit_lasso(stats, stats.sq_increment_sum,
                          SolverConfig(lambda_a=lam_a, mode=MODE_PURE_LASSO,
                                       max_iter=3000, tol=1e-9))
        nnz_joint = int(np.count_nonzero(joint.Ahat))
        nnz_lasso = int(np.count_nonzero(lasso.Ahat))
        sparser_or_equal.append(nnz_joint <= nnz_lasso)
        strictly_denser.append(nnz_lasso > nnz_joint)
    assert np.median(sparser_or_equal) == 1.0
    assert np.median(strictly_denser) == 1.0
