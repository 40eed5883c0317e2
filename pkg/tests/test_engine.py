import numpy as np
import pytest
from scipy import integrate, stats

from bbmeld import BiasBasis, GpsSeries, Track1D, ValidationError, VarianceParams
from bbmeld.engine import (
    GpsBlockModel,
    MeldConfig,
    build_grid,
    dense_joint_posterior,
    dense_system,
    dense_track_moments,
    eb_fit,
    fit_hyper,
    gps_block_posterior,
    meld,
    phi_log_posterior,
    posterior_at,
    segment_conditional,
)
from bbmeld.engine.fit import OptConfig
from bbmeld.engine.meld import _component
from bbmeld.errors import IndefiniteHessianError
from bbmeld.simulation import SimSpec, make_bench_instance, simulate_trip

from conftest import random_indices, random_instance
from oracles import brute_joint, brute_posterior

TH = np.log([0.2, 0.1])


def fixed(phi, Q=0, **kw):
    return MeldConfig(q_order=Q, phi=VarianceParams(*phi), **kw)


# --- fix-level block ------------------------------------------------------------


@pytest.mark.parametrize("Q", [0, 1, 2])
def test_block_matches_dense_fix_level_model(rng, Q):
    idx = np.array([1, 7, 15, 26])
    if Q == 2:
        idx = np.array([1, 5, 9, 15, 26])
    y = GpsSeries(idx, rng.normal(size=len(idx)))
    x_g = rng.normal(size=len(idx))
    x_g[0] = y.values[0]
    block = gps_block_posterior(TH, x_g, y, BiasBasis(Q))
    mean, cov = brute_joint(x_g, idx, y.values, y.sigma2_G, 0.2, 0.1, Q, times=idx)
    np.testing.assert_allclose(block.mean, mean, atol=1e-8)
    np.testing.assert_allclose(block.cov, cov, atol=1e-8)


def test_block_pins_to_exact_fixes(rng):
    idx = np.array([1, 4, 9, 13, 20])
    y = GpsSeries(idx, rng.normal(size=5), 1e-12)
    block = gps_block_posterior(TH, rng.normal(size=5), y, BiasBasis(0))
    np.testing.assert_allclose(block.eta_mean, y.values[1:-1], atol=1e-6)


def test_block_constant_offset_goes_to_intercept():
    idx = np.array([1, 5, 12, 20, 30])
    yv = np.array([0.0, 1.0, -0.5, 2.0, 1.0])
    c = 3.0
    y = GpsSeries(idx, yv, 1e-10)
    block = gps_block_posterior(np.log([0.2, 1e-10]), yv + c, y, BiasBasis(1))
    assert block.beta_mean[0] == pytest.approx(c, abs=1e-4)
    np.testing.assert_allclose(block.eta_mean, yv[1:-1], atol=1e-4)
    # with real noise the intercept still centres on the offset and eta shrinks toward Y
    y = GpsSeries(idx, yv, 0.0625)
    block = gps_block_posterior(TH, yv + c, y, BiasBasis(1))
    sd = np.sqrt(block.cov[0, 0])
    assert abs(block.beta_mean[0] - c) < 2 * sd


def test_block_rejects_unidentifiable_order():
    y = GpsSeries(np.array([1, 5, 9, 12]), np.zeros(4))
    with pytest.raises(ValidationError, match="interior fixes"):
        phi_log_posterior(TH, np.zeros(4), y, BiasBasis(2))


def _quadrature_log_marginal(theta, x_g, idx, yv, s2g):
    # K=4, Q=0: integrate the two interior eta values numerically
    sH, sD = np.exp(theta)
    T = idx[-1]
    A, B = yv[0], yv[-1]
    t_int = idx[1:-1].astype(float)
    f = A + (B - A) * (t_int - 1) / (T - 1)
    R = sH * (np.minimum.outer(t_int, t_int) - 1) * (T - np.maximum.outer(t_int, t_int)) / (T - 1)
    t_obs = idx[1:].astype(float)
    C = sD * (np.minimum.outer(t_obs, t_obs) - 1)
    prior = stats.multivariate_normal(f, R)
    dr = stats.multivariate_normal(np.zeros(3), C)
    sg = np.sqrt(s2g)

    def integrand(e2, e1):
        eta = np.array([e1, e2])
        resid = x_g[1:] - np.array([e1, e2, B])
        return (prior.pdf(eta) * dr.pdf(resid) * stats.norm.pdf(yv[1], e1, sg) * stats.norm.pdf(yv[2], e2, sg))

    m = yv[1:3]
    w = 8 * np.sqrt(s2g)
    val, _ = integrate.dblquad(integrand, m[0] - w, m[0] + w, m[1] - w, m[1] + w, epsabs=1e-14, epsrel=1e-10)
    return np.log(val)


def test_phi_log_posterior_matches_quadrature():
    idx = np.array([1, 3, 7, 10])
    yv = np.array([0.0, 0.4, -0.3, 0.5])
    x_g = np.array([0.0, 0.7, -0.1, 0.2])
    y = GpsSeries(idx, yv, 0.0625)
    thetas = [np.log([0.2, 0.1]), np.log([0.05, 0.3]), np.log([0.5, 0.02])]
    ours = np.array([phi_log_posterior(th, x_g, y, BiasBasis(0)) for th in thetas])
    ref = np.array([_quadrature_log_marginal(th, x_g, idx, yv, 0.0625) for th in thetas])
    np.testing.assert_allclose(ours - ours[0], ref - ref[0], atol=1e-6)


def test_phi_profile_shape_invariant_to_common_shift(rng):
    idx = random_indices(rng, 200, 12)
    yv = rng.normal(size=12)
    x_g = yv + rng.normal(size=12)
    y0 = GpsSeries(idx, yv)
    y1 = GpsSeries(idx, yv + 5.0)
    grid = [np.log([a, b]) for a in (0.05, 0.2, 1.0) for b in (0.02, 0.1, 0.5)]
    v0 = np.array([phi_log_posterior(th, x_g, y0, BiasBasis(1)) for th in grid])
    v1 = np.array([phi_log_posterior(th, x_g + 5.0, y1, BiasBasis(1)) for th in grid])
    np.testing.assert_allclose(v1 - v1[0], v0 - v0[0], atol=1e-8)


def test_perturbed_fixes_lower_the_maximum():
    drops = []
    for seed in range(8):
        _, x, y = simulate_trip(make_bench_instance("small", seed, beta=()))
        x_g = x.values[y.indices - 1]
        clean = eb_fit(x_g, y, BiasBasis(0)).log_post_max
        noise = np.random.default_rng(seed).normal(0, 1.0, y.K)
        noise[[0, -1]] = 0.0
        bent = GpsSeries(y.indices, y.values + noise, y.sigma2_G)
        drops.append(clean - eb_fit(x_g, bent, BiasBasis(0)).log_post_max)
    assert np.mean(drops) > 0
    assert np.mean(np.array(drops) > 0) >= 0.75


# --- EB fit ------------------------------------------------------------------------


@pytest.mark.slow
def test_eb_fit_recovers_truth():
    hits = 0
    for seed in range(100):
        spec = SimSpec(5000, _even_indices(5000, 200), (0.09, 0.04), (), 0.0625, (0.0, 0.0), seed)
        _, x, y = simulate_trip(spec)
        fit = eb_fit(x.values[y.indices - 1], y, BiasBasis(0))
        sd = np.sqrt(np.diag(np.linalg.inv(fit.hessian)))
        hits += bool(np.all(np.abs(fit.theta_hat - np.log([0.09, 0.04])) <= 3 * sd))
    assert hits >= 90


def _even_indices(T, K):
    return tuple(np.unique(np.round(np.linspace(1, T, K)).astype(int)).tolist())


def test_eb_fit_independent_of_starts():
    _, x, y = simulate_trip(make_bench_instance("small", 3, beta=()))
    x_g = x.values[y.indices - 1]
    a = eb_fit(x_g, y, BiasBasis(0))
    b = eb_fit(x_g, y, BiasBasis(0), OptConfig(theta_start=(2.0, -6.0)))
    c = eb_fit(x_g, y, BiasBasis(0), OptConfig(n_starts=5, start_spread=3.0))
    np.testing.assert_allclose(b.theta_hat, a.theta_hat, atol=1e-5)
    np.testing.assert_allclose(c.theta_hat, a.theta_hat, atol=1e-5)
    assert np.all(np.linalg.eigvalsh(a.hessian) > 0)


def test_larger_gps_variance_inflates_path_variance():
    up = 0
    for seed in range(20):
        _, x, y = simulate_trip(make_bench_instance("small", seed, beta=()))
        x_g = x.values[y.indices - 1]
        lo = eb_fit(x_g, GpsSeries(y.indices, y.values, 0.0625), BiasBasis(0)).theta_hat[0]
        hi = eb_fit(x_g, GpsSeries(y.indices, y.values, 2.0), BiasBasis(0)).theta_hat[0]
        up += hi > lo
    assert up > 10


def test_eb_fit_flags_flat_direction():
    # DR identical to the fixes and no noise: the DR-error variance runs to zero
    idx = np.arange(1, 40, 3)
    y = GpsSeries(idx, np.sin(idx / 5.0), 0.0625)
    with pytest.raises((IndefiniteHessianError, ArithmeticError)):
        eb_fit(y.values.copy(), y, BiasBasis(0))


# --- grid --------------------------------------------------------------------------


class _Quadratic:
    def __init__(self, H, sharp=1.0):
        self.H = np.asarray(H, dtype=float)
        self.sharp = sharp

    def log_posterior(self, th):
        th = np.asarray(th)
        return -0.5 * self.sharp * th @ self.H @ th

    def posterior(self, th):
        return None


def test_grid_on_exact_quadratic():
    H = np.array([[4.0, 1.0], [1.0, 2.0]])
    g = build_grid(np.zeros(2), H, _Quadratic(H))
    assert g.steps == {"1+": 2, "1-": 2, "2+": 2, "2-": 2}
    assert len(g) == 25
    assert abs(g.weights.sum() - 1.0) <= 1e-12


def test_grid_on_sharply_peaked_surface():
    H = np.array([[4.0, 1.0], [1.0, 2.0]])
    g = build_grid(np.zeros(2), H, _Quadratic(H, sharp=4.0))
    assert len(g) == 9
    centre = int(np.argmin(np.abs(g.z).sum(axis=1)))
    assert np.argmax(g.weights) == centre


def test_grid_zero_threshold_is_single_point():
    H = np.eye(2)
    g = build_grid(np.zeros(2), H, _Quadratic(H), delta_pi=0.0)
    assert len(g) == 1 and g.weights[0] == 1.0


def test_grid_cap_warns():
    H = np.eye(2)
    with pytest.warns(UserWarning, match="cap"):
        g = build_grid(np.zeros(2), H, _Quadratic(H, sharp=1e-6), grid_cap=4)
    assert g.capped and len(g) == 81


def test_grid_rejects_indefinite_hessian():
    with pytest.raises(IndefiniteHessianError):
        build_grid(np.zeros(2), np.diag([1.0, -1.0]), _Quadratic(np.eye(2)))


# --- segment conditional ----------------------------------------------------------------


def test_segment_shrinkage_closed_form(rng):
    T = 30
    x = np.cumsum(rng.normal(size=T))
    x -= x[0]
    yT = 2.5
    rho = 0.2 / 0.3
    mean, var = segment_conditional(TH, np.array([0.0, yT]), np.zeros((2, 2)), x, BiasBasis(0), 1, T,
                                    left_anchor=0.0)
    t = np.arange(2, T)
    lin = (t - 1) / (T - 1)
    np.testing.assert_allclose(mean, yT * lin + rho * (x[1:-1] - x[-1] * lin), atol=1e-12)
    assert np.all(var > 0)


def test_equal_variances_give_half_shrinkage():
    assert VarianceParams(0.4, 0.4).rho == 0.5
    x = np.array([0.0, 2.0, 0.0])
    mean, _ = segment_conditional(np.log([0.4, 0.4]), np.zeros(2), np.zeros((2, 2)), x, BiasBasis(0), 1, 3, 0.0)
    assert mean[0] == pytest.approx(1.0)


@pytest.mark.parametrize("Q", [0, 1, 2])
def test_segments_reproduce_exact_posterior(rng, Q):
    # feed the exact segment-state law; segment-wise moments must equal the dense ones
    _, x, y = random_instance(rng, T=50, K=5, Q=Q)
    mean, cov = brute_joint(x.values, y.indices, y.values, y.sigma2_G, 0.2, 0.1, Q)
    T = x.T
    full_m = np.concatenate((mean[:Q], [y.values[0]], mean[Q:], [y.values[-1]]))
    full_c = np.zeros((Q + T, Q + T))
    keep = np.r_[np.arange(Q), Q + 1 + np.arange(T - 2)]
    full_c[np.ix_(keep, keep)] = cov
    ref_sd = np.sqrt(np.diag(full_c)[Q:])
    for k in range(y.K - 1):
        a, b = y.indices[k], y.indices[k + 1]
        if b - a < 2:
            continue
        sel = np.r_[np.arange(Q), Q + a - 1, Q + b - 1]
        m, v = segment_conditional(TH, full_m[sel], full_c[np.ix_(sel, sel)], x.values[a - 1:b], BiasBasis(Q),
                                   int(a), T, left_anchor=y.values[0] if k == 0 else None)
        np.testing.assert_allclose(m, full_m[Q + a:Q + b - 1], atol=1e-8)
        np.testing.assert_allclose(np.sqrt(v), ref_sd[a:b - 1], atol=1e-8)


# --- dense oracle -------------------------------------------------------------------------


def test_dense_matches_independent_oracle(rng):
    _, x, y = random_instance(rng, T=60, K=6, Q=2)
    m, s = dense_track_moments(x.values, y, TH, BiasBasis(2))
    rm, rs, _, _ = brute_posterior(x.values, y.indices, y.values, y.sigma2_G, 0.2, 0.1, 2)
    np.testing.assert_allclose(m, rm, atol=1e-9)
    np.testing.assert_allclose(s, rs, atol=1e-9)


def test_dense_reverts_to_prior_without_information(rng):
    T = 40
    y = GpsSeries(np.array([1, T]), np.array([1.0, -3.0]))
    x = rng.normal(size=T)
    m, _ = dense_track_moments(x, y, np.log([0.3, 1e12]), BiasBasis(0))
    f = 1.0 + (-4.0) * (np.arange(T)) / (T - 1)
    np.testing.assert_allclose(m, f, atol=1e-6)


def test_dense_residual_quadratic_form_nonnegative(rng):
    for Q in (0, 1, 3):
        _, x, y = random_instance(rng, T=50, K=7, Q=Q)
        s = dense_system(x.values, y, TH, BiasBasis(Q))
        assert s.m3 - s.m2 @ np.linalg.solve(s.m1, s.m2) >= -1e-9


def test_dense_size_cap():
    T = 30
    y = GpsSeries(np.array([1, T]), np.zeros(2))
    with pytest.raises(ValidationError, match="capped"):
        dense_joint_posterior(np.zeros(T), y, TH, BiasBasis(0), max_t=20)


def test_fix_level_block_error_shrinks_with_ratio(rng):
    # without the detail statistics the block only uses the fixes; its error fades as DR noise grows
    _, x, y = random_instance(rng, T=120, K=8, Q=1, phi=(0.01, 0.1))
    errs = []
    for ratio in (1, 10, 100, 1e4):
        th = np.log([0.01, ratio * y.sigma2_G])
        cfg = MeldConfig(q_order=1, phi=VarianceParams.from_theta(th), detail_beta=False)
        pt = meld(x, y, BiasBasis(1), cfg)
        m, s = dense_track_moments(x.values, y, th, BiasBasis(1))
        errs.append(max(np.abs(pt.mean - m).max(), np.abs(pt.sd - s).max()))
    assert errs[0] > errs[1] > errs[2] > errs[3]
    assert errs[3] < 1e-3


# --- meld ---------------------------------------------------------------------------------


@pytest.mark.parametrize("Q", [0, 1, 2, 4])
def test_meld_fixed_phi_equals_dense(rng, Q):
    _, x, y = random_instance(rng, T=90, K=9, Q=Q)
    pt = meld(x, y, BiasBasis(Q), fixed((0.2, 0.1), Q))
    m, s = dense_track_moments(x.values, y, TH, BiasBasis(Q))
    np.testing.assert_allclose(pt.mean, m, atol=1e-9)
    np.testing.assert_allclose(pt.sd, s, atol=1e-9)


def test_meld_endpoints_pinned(small_instance):
    _, x, y = small_instance
    pt = meld(x, y, BiasBasis(1))
    assert pt.mean[0] == y.values[0] and pt.mean[-1] == y.values[-1]
    assert pt.sd[0] == 0.0 and pt.sd[-1] == 0.0
    assert np.all(pt.sd >= 0)
    assert len(pt.mean) == x.T


def test_meld_reanchors_dr_start(small_instance):
    _, x, y = small_instance
    shifted = Track1D.from_values(x.values + 7.0)
    a = meld(x, y, BiasBasis(1), fixed((0.2, 0.1), 1))
    b = meld(shifted, y, BiasBasis(1), fixed((0.2, 0.1), 1))
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-10)


def test_meld_translation_equivariant(small_instance):
    _, x, y = small_instance
    a = meld(x, y, BiasBasis(0))
    b = meld(Track1D.from_values(x.values + 3.0), GpsSeries(y.indices, y.values + 3.0), BiasBasis(0))
    np.testing.assert_allclose(b.mean, a.mean + 3.0, atol=1e-8)
    np.testing.assert_allclose(b.sd, a.sd, atol=1e-8)


def test_dr_ignored_when_its_noise_dominates(rng):
    T = 400
    idx = np.array([1, 80, 150, 260, 330, T])
    y = GpsSeries(idx, np.array([0.0, 1.0, 0.5, 2.0, 1.0, 1.5]))
    line = np.interp(np.arange(1, T + 1), idx, y.values)
    wild = line + np.cumsum(rng.normal(0, 0.5, T))
    cfg = fixed((0.01, 1e8))
    a = meld(Track1D.from_values(line), y, BiasBasis(0), cfg)
    b = meld(Track1D.from_values(wild), y, BiasBasis(0), cfg)
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-5)
    np.testing.assert_allclose(a.sd, b.sd, atol=1e-8)


def test_single_grid_point_is_plug_in(small_instance):
    _, x, y = small_instance
    eb = meld(x, y, BiasBasis(1), MeldConfig(q_order=1, delta_pi=0.0))
    assert eb.grid_size == 1
    plug = meld(x, y, BiasBasis(1), MeldConfig(q_order=1, phi=eb.phi_hat))
    np.testing.assert_allclose(eb.mean, plug.mean, atol=1e-12)
    np.testing.assert_allclose(eb.sd, plug.sd, atol=1e-12)


def test_mixture_variance_not_below_components(small_instance):
    _, x, y = small_instance
    cfg = MeldConfig(q_order=1)
    mf = fit_hyper(x, y, BiasBasis(1), cfg)
    pt = meld(x, y, BiasBasis(1), cfg)
    comps = np.array([_component(mf, gp)[1] for gp in mf.grid.points])
    assert len(comps) > 1
    assert np.all(pt.sd[1:-1] ** 2 >= comps.min(axis=0)[1:-1] - 1e-12)


def test_bridge_shaped_band_with_exact_fixes(rng):
    _, x, _ = random_instance(rng, T=200, K=6)
    idx = np.array([1, 40, 90, 130, 170, 200])
    y = GpsSeries(idx, rng.normal(size=6), 1e-14)
    pt = meld(x, y, BiasBasis(0), fixed((0.2, 0.1)))
    np.testing.assert_allclose(pt.sd[idx - 1], 0.0, atol=1e-5)
    for a, b in zip(idx[:-1], idx[1:]):
        seg = pt.sd[a - 1:b]
        j = int(np.argmax(seg))
        assert 0 < j < len(seg) - 1


def test_meld_is_bit_deterministic(small_instance):
    _, x, y = small_instance
    a = meld(x, y, BiasBasis(1))
    b = meld(x, y, BiasBasis(1))
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.sd, b.sd)


def test_posterior_at_matches_full_track(small_instance):
    _, x, y = small_instance
    cfg = MeldConfig(q_order=1)
    pt = meld(x, y, BiasBasis(1), cfg)
    t = np.array([1, 5, 33, int(y.indices[3]), x.T])
    m, s = posterior_at(x, y, t, BiasBasis(1), cfg)
    np.testing.assert_allclose(m, pt.mean[t - 1], atol=1e-12)
    np.testing.assert_allclose(s, pt.sd[t - 1], atol=1e-12)


def test_meld_memory_guard(small_instance):
    _, x, y = small_instance
    with pytest.raises(ValidationError, match="max_t"):
        meld(x, y, BiasBasis(0), MeldConfig(max_t=10))


def test_meld_grid_weights_normalized(small_instance):
    _, x, y = small_instance
    pt = meld(x, y, BiasBasis(1))
    assert abs(sum(pt.extras["grid_weights"]) - 1.0) <= 1e-12
    assert pt.grid_size == len(pt.extras["grid_weights"])


def test_block_model_counts_evaluations():
    idx = np.array([1, 4, 9, 15])
    y = GpsSeries(idx, np.zeros(4))
    m = GpsBlockModel(np.zeros(4), y, BiasBasis(0))
    m.log_posterior(TH)
    m.log_posterior(TH)
    assert m.n_evals == 2
