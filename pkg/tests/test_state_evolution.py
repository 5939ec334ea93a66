import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from gcm.exceptions import DegenerateOverlap, SingularDenominator
from gcm.feature_models import kernel_diagonal_model, vanilla_model, with_unit_gamma
from gcm.errors import mse_errors
from gcm.model import ConjugateOverlaps, Overlaps, SolverOptions, SpectralModel, TaskSpec
from gcm.proximal import prox, prox_hinge
from gcm.state_evolution import (
    clip_alignment,
    hat_channel,
    hat_channel_quadrature,
    hat_channel_ridge,
    hat_channel_square_classification,
    initial_overlaps,
    solve,
    variance_channel,
    weight_norm,
)

RIDGE = TaskSpec(lam=0.1)
LOGISTIC = TaskSpec(loss="logistic", teacher="sign", lam=1e-2, metric="zero_one")
HINGE = TaskSpec(loss="hinge", teacher="sign", lam=0.1, metric="zero_one")


def vanilla_ridge_oracle(alpha, lam):
    """Closed-form fixed point for identity covariances and rho = 1.

    V solves lam V^2 + (lam + alpha - 1) V - 1 = 0, then m and q follow from
    the variance channel with every eigenvalue equal to one.
    """
    b = lam + alpha - 1.0
    v = (-b + math.sqrt(b * b + 4.0 * lam)) / (2.0 * lam)
    v_hat = alpha / (1.0 + v)
    m = v_hat * v
    k = alpha * v**2 / (1.0 + v) ** 2
    q = (k * (1.0 - 2.0 * m) + v_hat**2 * v**2) / (1.0 - k)
    return v, q, m


def random_model(rng, d, gamma=1.0):
    w = rng.uniform(0.05, 3.0, d)
    t = np.abs(rng.standard_normal(d)) * math.sqrt(gamma)
    explained = float(np.sum(t**2 / w)) / (gamma * d)
    return SpectralModel(w, t, explained * rng.uniform(1.0, 1.5), gamma)


def test_variance_channel_zero_hats():
    ov = variance_channel(ConjugateOverlaps(0, 0, 0), vanilla_model(5), 1.0)
    assert (ov.v, ov.q, ov.m) == (1.0, 0.0, 0.0)


def test_variance_channel_collapses_on_identity():
    ov = variance_channel(ConjugateOverlaps(1, 1, 1), vanilla_model(7), 1.0)
    assert ov.v == pytest.approx(0.5)
    assert ov.q == pytest.approx(0.5)
    assert ov.m == pytest.approx(0.5)


def test_variance_channel_matches_dense_trace_formulas():
    rng = np.random.default_rng(0)
    d, p = 16, 24
    a = rng.standard_normal((d, d))
    omega = a @ a.T / d + 0.1 * np.eye(d)
    phi = rng.standard_normal((p, d)) / math.sqrt(d)
    theta0 = rng.standard_normal(p)
    lam, gamma = 0.3, p / d
    hats = ConjugateOverlaps(1.7, 0.4, 0.9)
    # dense oracle without any eigendecomposition
    r = np.linalg.inv(lam * np.eye(d) + hats.v_hat * omega)
    proj = phi.T @ theta0
    tt = np.outer(proj, proj)
    v = np.trace(r @ omega) / d
    q = np.trace((hats.q_hat * omega + hats.m_hat**2 * tt) @ omega @ r @ r) / d
    m = hats.m_hat * np.trace(tt @ r) / (math.sqrt(gamma) * d)
    w2 = np.trace((hats.q_hat * omega + hats.m_hat**2 * tt) @ r @ r) / d

    evals, evecs = np.linalg.eigh(omega)
    t = np.abs(evecs.T @ proj)
    model = SpectralModel(evals, t, 1.1 * np.sum(t**2 / evals) / p, gamma)
    ov = variance_channel(hats, model, lam)
    assert ov.v == pytest.approx(v, rel=1e-12)
    assert ov.q == pytest.approx(q, rel=1e-12)
    assert ov.m == pytest.approx(m, rel=1e-12)
    assert weight_norm(hats, model, lam) == pytest.approx(w2, rel=1e-12)


def test_variance_channel_singular_denominator():
    with pytest.raises(SingularDenominator):
        variance_channel(ConjugateOverlaps(-2.0, 0, 0), vanilla_model(3), 1.0)


def test_zero_eigenvalues_do_not_contribute():
    hats = ConjugateOverlaps(1.3, 0.5, 0.8)
    base = SpectralModel([2.0, 1.0], [1.0, 0.5], 1.0)
    padded = SpectralModel([2.0, 1.0, 0.0, 0.0], [1.0, 0.5, 0.0, 0.0], 1.0)
    a, b = variance_channel(hats, base, 0.5), variance_channel(hats, padded, 0.5)
    assert b.v * 4 == pytest.approx(a.v * 2)
    assert b.q * 4 == pytest.approx(a.q * 2)
    assert b.m * 4 == pytest.approx(a.m * 2)


def test_ridge_hat_examples():
    h = hat_channel_ridge(Overlaps(0, 0, 0), 1.0, 1.0, 1.0)
    assert h.as_array() == pytest.approx([1.0, 1.0, 1.0])
    assert hat_channel_ridge(Overlaps(0.4, 0.3, 0.2), 1.0, 0.0, 1.0).as_array() == pytest.approx([0, 0, 0])
    h = hat_channel_ridge(Overlaps(1, 1, 1), 1.0, 2.0, 4.0)
    assert h.as_array() == pytest.approx([1.0, 0.0, 0.5])


def test_square_classification_hat_examples():
    h = hat_channel_square_classification(Overlaps(0, 0, 0), 1.0, 1.0, 1.0)
    assert h.as_array() == pytest.approx([1.0, 1.0, math.sqrt(2 / math.pi)])
    assert hat_channel_square_classification(Overlaps(1, 1, 0.1), 1.0, 0.0, 1.0).as_array() == pytest.approx([0, 0, 0])
    rho, q = 2.0, 0.7
    c = math.sqrt(2 / (math.pi * rho))
    m = (1 + q) / (2 * c)
    assert hat_channel_square_classification(Overlaps(0.5, q, m), rho, 1.3, 1.0).q_hat == pytest.approx(0.0, abs=1e-15)


def test_square_classification_closed_form_matches_quadrature():
    task = TaskSpec(loss="square", teacher="sign", lam=0.1)
    ov = Overlaps(0.6, 0.8, 0.5)
    closed = hat_channel_square_classification(ov, 1.0, 1.7, 2.0)
    quad = hat_channel_quadrature(ov, 1.0, 1.7, 2.0, task)
    np.testing.assert_allclose(quad.as_array(), closed.as_array(), rtol=1e-10)


@pytest.mark.parametrize("task", [LOGISTIC, HINGE])
def test_quadrature_at_zero_alignment_and_no_data(task):
    # with m = 0 the labels are independent of the student field, Z0 = 1/2
    # and dZ0 = y / sqrt(2 pi rho); oddness f(-w, -y) = -f(w, y) then gives
    # m_hat = 2 alpha E[f(sqrt(q) xi, +1)] / sqrt(2 pi rho), which is not zero
    v, q, rho, alpha = 0.8, 1.2, 1.3, 2.0
    h = hat_channel_quadrature(Overlaps(v, q, 0.0), rho, alpha, 1.0, task)

    def f(x):
        return float(prox(task.loss, math.sqrt(q) * x, 1.0, v).f_g) * stats.norm.pdf(x)

    kinks = [k / math.sqrt(q) for k in (1.0, 1.0 - v)]
    ref, _ = integrate.quad(f, -12, 12, points=kinks, epsabs=1e-13, limit=200)
    assert h.m_hat == pytest.approx(2 * alpha * ref / math.sqrt(2 * math.pi * rho), rel=1e-9)
    assert hat_channel_quadrature(Overlaps(0.8, 1.2, 0.3), 1.0, 0.0, 1.0, task).as_array() == pytest.approx([0, 0, 0])


def test_quadrature_rejects_degenerate_overlaps():
    with pytest.raises(DegenerateOverlap):
        hat_channel_quadrature(Overlaps(1.0, 0.0, 0.0), 1.0, 1.0, 1.0, LOGISTIC)
    with pytest.raises(DegenerateOverlap):
        hat_channel_quadrature(Overlaps(1.0, 1.0, 1.0), 1.0, 1.0, 1.0, LOGISTIC)


def test_hinge_hats_match_monte_carlo():
    """Direct sampling of the teacher and student fields, 10^7 draws.

    The m_hat expectation uses the score identity
    d/d omega0 E[g(sign(omega0 + sqrt(V0) eta))] = E[g * eta] / sqrt(V0).
    """
    q, m, rho, v, alpha = 1.0, 0.5, 1.0, 0.7, 1.5
    v0 = rho - m * m / q
    rng = np.random.default_rng(2024)
    sums = np.zeros(3)
    sq_sums = np.zeros(3)
    total = 0
    for _ in range(10):
        xi = rng.standard_normal(1_000_000)
        eta = rng.standard_normal(1_000_000)
        y = np.where(m / math.sqrt(q) * xi + math.sqrt(v0) * eta >= 0, 1.0, -1.0)
        r = prox_hinge(math.sqrt(q) * xi, y, v)
        samples = np.stack([-r.f_g_prime, r.f_g**2, r.f_g * eta / math.sqrt(v0)])
        sums += samples.sum(axis=1)
        sq_sums += (samples**2).sum(axis=1)
        total += xi.size
    mean = sums / total
    stderr = np.sqrt((sq_sums / total - mean**2) / total)
    mc = alpha * mean
    h = hat_channel_quadrature(Overlaps(v, q, m), rho, alpha, 1.0, HINGE)
    got = h.as_array()
    assert np.all(np.abs(got - mc) < 4 * alpha * stderr + 1e-12)
    np.testing.assert_allclose(got, mc, rtol=5e-3)


def test_hat_dispatch_uses_closed_forms():
    m = vanilla_model(4)
    ov = Overlaps(0.5, 0.4, 0.3)
    assert hat_channel(ov, m, RIDGE, 2.0) == hat_channel_ridge(ov, 1.0, 2.0, 1.0)
    sq = TaskSpec(loss="square", teacher="sign")
    assert hat_channel(ov, m, sq, 2.0) == hat_channel_square_classification(ov, 1.0, 2.0, 1.0)


def test_initial_overlaps_and_clip():
    ov = initial_overlaps(2.0)
    assert (ov.v, ov.q) == (1.0, 1.0)
    assert ov.m == pytest.approx(0.01 * math.sqrt(2.0))
    c = clip_alignment(Overlaps(1.0, 1.0, -3.0), 1.0)
    assert c.m == pytest.approx(-0.999)
    assert clip_alignment(Overlaps(1.0, 1.0, 0.5), 1.0).m == 0.5


def test_zero_samples_ridge():
    model = SpectralModel([2.0, 1.0, 0.5], [1.0, 1.0, 1.0], 2.0)
    res = solve(model, TaskSpec(lam=0.5), 0.0, SolverOptions(tol=1e-13))
    assert res.converged
    assert res.overlaps.v == pytest.approx(np.mean([2.0, 1.0, 0.5]) / 0.5, rel=1e-9)
    assert res.overlaps.q == pytest.approx(0.0, abs=1e-9)
    assert res.overlaps.m == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0, 2.0, 4.0, 8.0])
@pytest.mark.parametrize("lam", [1e-3, 0.1, 1.0])
def test_vanilla_ridge_matches_closed_form(alpha, lam):
    res = solve(vanilla_model(10), TaskSpec(lam=lam), alpha, SolverOptions(tol=1e-12, max_iter=100_000))
    assert res.converged
    np.testing.assert_allclose(res.overlaps.as_array(), vanilla_ridge_oracle(alpha, lam), rtol=1e-8)


def test_kernel_model_hats_coincide():
    rng = np.random.default_rng(1)
    omega = rng.uniform(0.1, 2.0, 20)
    model = kernel_diagonal_model(omega, rng.standard_normal(20))
    res = solve(model, TaskSpec(lam=0.2), 1.5)
    assert res.hats.v_hat == pytest.approx(res.hats.m_hat, rel=1e-12)
    assert res.hats.v_hat == pytest.approx(1.5 / (1 + res.overlaps.v), rel=1e-7)


def reapply(res, model, task, alpha, opts):
    ov = variance_channel(res.hats, model, task.lam)
    hats = hat_channel(ov, model, task, alpha, opts)
    return ov, hats


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0.2, 5.0), lam=st.floats(1e-2, 2.0),
       kind=st.sampled_from(["ridge", "square_sign", "logistic", "hinge"]))
def test_fixed_point_residual_on_reapplication(seed, alpha, lam, kind):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 12)
    if kind == "ridge":
        task = TaskSpec(lam=lam)
    elif kind == "square_sign":
        task = TaskSpec(loss="square", teacher="sign", lam=lam)
    else:
        task = TaskSpec(loss=kind, teacher="sign", lam=lam)
    opts = SolverOptions()
    res = solve(model, task, alpha, opts)
    assert res.converged and res.residual <= opts.tol
    ov, hats = reapply(res, model, task, alpha, opts)
    assert np.max(np.abs(ov.as_array() - res.overlaps.as_array())) < 10 * opts.tol
    assert np.max(np.abs(hats.as_array() - res.hats.as_array())) < 10 * opts.tol
    assert res.overlaps.m**2 <= model.rho * res.overlaps.q


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0.2, 5.0), gamma=st.floats(0.2, 5.0))
def test_gamma_enters_only_through_rescaled_projection(seed, alpha, gamma):
    model = random_model(np.random.default_rng(seed), 9, gamma)
    for task in (TaskSpec(lam=0.3), TaskSpec(loss="logistic", teacher="sign", lam=0.3)):
        opts = SolverOptions(tol=1e-12, max_iter=100_000)
        a = solve(model, task, alpha, opts)
        b = solve(with_unit_gamma(model), task, alpha, opts)
        np.testing.assert_allclose(a.overlaps.as_array(), b.overlaps.as_array(), rtol=1e-9, atol=1e-12)


def test_ridge_error_decreases_past_interpolation_peak():
    # identity covariances with a fifth of the teacher variance invisible to
    # the student; without it the noiseless error 1 - alpha has no peak
    model = SpectralModel(np.ones(8), np.full(8, math.sqrt(0.8)), 1.0)
    alphas = np.arange(0.25, 8.01, 0.25)
    errs = [mse_errors(solve(model, TaskSpec(lam=1e-3), a).overlaps, 1.0).e_gen for a in alphas]
    peak = int(np.argmax(errs))
    assert abs(alphas[peak] - 1.0) <= 0.25
    assert np.all(np.diff(errs[peak:]) < 0)


@pytest.mark.parametrize("alpha", [1.0, 2.0, 4.0])
def test_quadrature_doubling_on_logistic_acceptance_configuration(alpha):
    model = vanilla_model(10)
    opts = SolverOptions(tol=1e-11, max_iter=100_000)
    base = solve(model, LOGISTIC, alpha, opts)
    fine = solve(model, LOGISTIC, alpha, SolverOptions(tol=1e-11, max_iter=100_000, quad_nodes=512))
    assert base.converged and fine.converged
    assert np.max(np.abs(base.overlaps.as_array() - fine.overlaps.as_array())) < 1e-6


def test_hermite_rule_agrees_with_panel_rule_for_logistic():
    model = vanilla_model(10)
    a = solve(model, LOGISTIC, 2.0, SolverOptions(tol=1e-11))
    b = solve(model, LOGISTIC, 2.0, SolverOptions(tol=1e-11, quad_rule="hermite", quad_nodes=255))
    np.testing.assert_allclose(a.overlaps.as_array(), b.overlaps.as_array(), rtol=1e-6)


@pytest.mark.parametrize("alpha", [0.5, 2.0, 6.0])
def test_hinge_panel_rule_is_stable_under_node_doubling(alpha):
    model = vanilla_model(10)
    a = solve(model, HINGE, alpha, SolverOptions(tol=1e-11))
    b = solve(model, HINGE, alpha, SolverOptions(tol=1e-11, quad_nodes=512))
    assert np.max(np.abs(a.overlaps.as_array() - b.overlaps.as_array())) < 1e-6


def test_nonconvergence_is_reported_not_raised():
    res = solve(vanilla_model(4), LOGISTIC, 2.0, SolverOptions(max_iter=3))
    assert not res.converged
    assert res.iterations == 3
    assert res.residual > 1e-8


def test_warm_start_converges_faster():
    model = vanilla_model(4)
    cold = solve(model, LOGISTIC, 2.0)
    warm = solve(model, LOGISTIC, 2.1, init=cold.overlaps)
    again = solve(model, LOGISTIC, 2.1)
    assert warm.iterations < again.iterations
    np.testing.assert_allclose(warm.overlaps.as_array(), again.overlaps.as_array(), atol=1e-7)


@pytest.mark.parametrize("alpha", [-1.0, float("nan"), float("inf")])
def test_invalid_alpha(alpha):
    with pytest.raises(ValueError):
        solve(vanilla_model(3), RIDGE, alpha)
