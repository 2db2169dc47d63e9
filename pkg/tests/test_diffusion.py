import math

import numpy as np
import pytest

import voxtend as vx
from voxtend import SeedStream, build_schedule, forward_jump, forward_step, mse
from voxtend.diffusion import mean_from_noise, reverse_step, step_variance
from voxtend.schedule import NoiseSchedule


def raw_schedule(beta, alpha, alpha_bar):
    return NoiseSchedule(beta=np.asarray(beta, float), alpha=np.asarray(alpha, float),
                         alpha_bar=np.asarray(alpha_bar, float))


# -- forward_step -----------------------------------------------------------

def test_forward_step_zero_noise_edge():
    sched = raw_schedule([0.0], [1.0], [1.0])
    x = np.arange(12.0).reshape(3, 4) + 0.25
    out = forward_step(x, 1, sched, SeedStream(1))
    assert np.array_equal(out, x)


def test_forward_step_variance_monte_carlo(sched200):
    # x_prev = 0 so the output is sqrt(1-alpha_t) * eps
    t = 150
    x = np.zeros((250, 400))
    out = forward_step(x, t, sched200, SeedStream(7))
    target = 1.0 - sched200.alpha_at(t)
    assert abs(out.var() - target) / target < 0.03


def test_forward_step_deterministic(sched200):
    x = SeedStream(3).normal((5, 6))
    a = forward_step(x, 42, sched200, SeedStream(11))
    b = forward_step(x, 42, sched200, SeedStream(11))
    assert a.tobytes() == b.tobytes()


def test_forward_step_rejects_bad_step(sched200):
    with pytest.raises(ValueError):
        forward_step(np.zeros((2, 2)), 0, sched200, SeedStream(0))
    with pytest.raises(ValueError):
        forward_step(np.zeros((2, 2)), 201, sched200, SeedStream(0))


# -- forward_jump -----------------------------------------------------------

def test_forward_jump_no_noise_limit():
    sched = raw_schedule([0.0], [1.0], [1.0])
    x0 = SeedStream(5).normal((4, 4))
    xt, _ = forward_jump(x0, 1, sched, SeedStream(6))
    assert np.array_equal(xt, x0)


def test_forward_jump_pure_noise_limit():
    sched = raw_schedule([0.5], [0.5], [1e-12])
    x0 = SeedStream(5).normal((4, 4)) * 3.0
    xt, eps = forward_jump(x0, 1, sched, SeedStream(6))
    assert np.max(np.abs(xt - eps)) < 1e-5


def test_forward_jump_mean_monte_carlo(sched200):
    t = 120
    x0 = np.full((100, 1000), 0.7)
    xt, _ = forward_jump(x0, t, sched200, SeedStream(9))
    bar = sched200.alpha_bar_at(t)
    n = xt.size
    band = 3.0 * math.sqrt((1.0 - bar) / n)
    assert abs(xt.mean() - math.sqrt(bar) * 0.7) < band


def test_forward_jump_returns_drawn_noise(sched200):
    x0 = SeedStream(2).normal((3, 3))
    xt, eps = forward_jump(x0, 60, sched200, SeedStream(2))
    bar = sched200.alpha_bar_at(60)
    recon = math.sqrt(bar) * x0 + math.sqrt(1.0 - bar) * eps
    assert np.allclose(xt, recon, rtol=0, atol=0)


# -- mean_from_noise --------------------------------------------------------

def test_mean_identity_limit():
    sched = raw_schedule([0.0], [1.0], [0.9])
    x = SeedStream(1).normal((2, 5))
    out = mean_from_noise(x, np.zeros_like(x), 1, sched)
    assert np.allclose(out, x, rtol=0, atol=0)


def test_mean_scalar_example():
    # oracle: 60-digit evaluation of the posterior-mean formula at
    # xt=1, eps=0.5, alpha=0.99, alpha_bar=0.9
    sched = raw_schedule([0.01], [0.99], [0.9])
    out = mean_from_noise(np.array([[1.0]]), np.array([[0.5]]), 1, sched)
    assert abs(out[0, 0] - 0.98914677210511887) < 1e-15


def test_mean_affine_in_noise_pred():
    # finite-difference slope oracle: d mean / d eps = -(1-a)/(sqrt(a) sqrt(1-abar))
    sched = raw_schedule([0.03], [0.97], [0.8])
    x = SeedStream(4).normal((3, 3))
    e = SeedStream(5).normal((3, 3))
    h = 1e-6
    slope_fd = (mean_from_noise(x, e + h, 1, sched) - mean_from_noise(x, e - h, 1, sched)) / (2 * h)
    expected = -(1.0 - 0.97) / (math.sqrt(0.97) * math.sqrt(1.0 - 0.8))
    assert np.max(np.abs(slope_fd - expected)) < 1e-9


def test_mean_guards():
    sched = raw_schedule([0.0], [1.0], [1.0])
    with pytest.raises(ZeroDivisionError):
        mean_from_noise(np.zeros((2, 2)), np.zeros((2, 2)), 1, sched)
    with pytest.raises(ValueError):
        mean_from_noise(np.zeros((2, 2)), np.zeros((2, 3)), 1, build_schedule("linear", 5))


# -- step_variance ----------------------------------------------------------

def test_variance_boundary_is_beta1(sched200):
    assert step_variance(1, sched200) == sched200.beta_at(1)


def test_variance_t2_formula_oracle():
    # oracle: high-precision evaluation of (1-abar_1)/(1-abar_2) * beta_2
    s = build_schedule("linear", 1000)
    assert abs(step_variance(2, s) - 5.4531876613026054e-05) / 5.4531876613026054e-05 < 1e-12


def test_variance_positive_everywhere(sched200):
    for t in range(1, 201):
        assert step_variance(t, sched200) > 0.0


def test_variance_beta_kind(sched200):
    assert step_variance(17, sched200, kind="beta") == sched200.beta_at(17)
    with pytest.raises(ValueError):
        step_variance(17, sched200, kind="learned")


# -- reverse_step -----------------------------------------------------------

def test_reverse_final_step_is_mean(sched200):
    mu = SeedStream(8).normal((4, 4))
    out = reverse_step(np.zeros((4, 4)), mu, 1, sched200, SeedStream(9))
    assert np.array_equal(out, mu)


def test_reverse_step_deterministic(sched200):
    x = SeedStream(3).normal((4, 4))
    mu = SeedStream(4).normal((4, 4))
    a = reverse_step(x, mu, 99, sched200, SeedStream(10))
    b = reverse_step(x, mu, 99, sched200, SeedStream(10))
    assert a.tobytes() == b.tobytes()


def test_reverse_step_variance_monte_carlo():
    sched = build_schedule("linear", 1000)
    t = 500
    mu = np.zeros((250, 400))
    out = reverse_step(mu, mu, t, sched, SeedStream(12))
    target = step_variance(t, sched)
    assert abs(out.var() - target) / target < 0.03


def test_reverse_step_shape_mismatch(sched200):
    with pytest.raises(ValueError):
        reverse_step(np.zeros((2, 2)), np.zeros((3, 2)), 5, sched200, SeedStream(0))


# -- mse ---------------------------------------------------------------------

def test_mse_examples():
    assert mse(np.ones((3, 3)), np.ones((3, 3))) == 0.0
    assert mse(np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]])) == 0.5


def test_mse_matches_elementwise_loop():
    a = SeedStream(20).normal((7, 5))
    b = SeedStream(21).normal((7, 5))
    acc = 0.0
    for i in range(7):
        for j in range(5):
            acc += (a[i, j] - b[i, j]) ** 2
    assert abs(mse(a, b) - acc / 35.0) < 1e-15


def test_mse_shape_mismatch():
    with pytest.raises(ValueError):
        mse(np.zeros((2, 2)), np.zeros((2, 3)))


# -- chain-level invariants ---------------------------------------------------

def test_marginal_consistency_stepwise_vs_jump(sched200):
    # iterating forward_step t times must match the closed-form marginal
    t = 30
    n = 10_000
    x0_row = np.array([0.9, -1.3, 0.4, 2.0])
    x = np.tile(x0_row, (n, 1))
    seed = SeedStream(77)
    for step in range(1, t + 1):
        x = forward_step(x, step, sched200, seed)
    bar = sched200.alpha_bar_at(t)
    target_mean = math.sqrt(bar) * x0_row
    target_var = 1.0 - bar
    mean_band = 3.0 * math.sqrt(target_var / n)
    var_band = 3.0 * target_var * math.sqrt(2.0 / (n - 1))
    assert np.all(np.abs(x.mean(axis=0) - target_mean) < mean_band)
    assert np.all(np.abs(x.var(axis=0) - target_var) < var_band)


def test_pipeline_purity(sched200):
    # the same seed must reproduce a multi-op sampling pipeline bit-exactly
    def pipeline(seed_value):
        seed = SeedStream(seed_value)
        x, _ = forward_jump(np.ones((4, 4)), 200, sched200, seed)
        for t in range(200, 0, -1):
            mu = mean_from_noise(x, x * 0.1, t, sched200)
            x = reverse_step(x, mu, t, sched200, seed)
        return x

    assert pipeline(5).tobytes() == pipeline(5).tobytes()
    assert pipeline(5).tobytes() != pipeline(6).tobytes()
