import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpmot.diffusion import (DiffusionSchedule, Trajectory, diffuse_to, forward_step, reverse_step,
                             schedule_from_spec, ve_schedule, vp_schedule)
from dpmot.errors import InputError
from dpmot.scores import GaussianMixture, GMMScore, noise_var_at


def constant_ve(T=5, c=1.0):
    sig = np.full(T + 1, c)
    sig[0] = 0.0
    # bypass the strict-increase check: this schedule only exercises step arithmetic
    sched = object.__new__(DiffusionSchedule)
    for k, v in dict(kind="ve", T=T, params={"const": c}, sigmas=sig, betas=None).items():
        object.__setattr__(sched, k, v)
    return sched


# --- schedules ----------------------------------------------------------------

def test_ve_defaults():
    s = ve_schedule()
    assert s.T == 100
    assert s.sigma(1) == pytest.approx(0.01) and s.sigma(100) == pytest.approx(5.0)
    assert np.all(np.diff(s.sigmas[1:]) > 0)
    ratios = s.sigmas[2:] / s.sigmas[1:-1]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)


def test_vp_defaults():
    s = vp_schedule()
    assert s.betas[1] == pytest.approx(1e-4) and s.betas[100] == pytest.approx(0.02)
    np.testing.assert_allclose(np.diff(s.betas[1:]), np.diff(s.betas[1:])[0], rtol=1e-9)
    np.testing.assert_allclose(s.sigmas[1:], np.sqrt(s.betas[1:]))


@given(st.integers(2, 300), st.floats(1e-4, 1.0), st.floats(1.01, 50.0))
def test_ve_monotone(T, lo, factor):
    s = ve_schedule(T, lo, lo * factor)
    assert np.all(s.sigmas[1:] > 0) and np.all(np.diff(s.sigmas[1:]) > 0)


@given(st.integers(2, 300), st.floats(1e-6, 0.4), st.floats(1.01, 2.0))
def test_vp_monotone(T, lo, factor):
    s = vp_schedule(T, lo, min(lo * factor, 0.99))
    assert np.all((s.betas[1:] > 0) & (s.betas[1:] < 1)) and np.all(np.diff(s.betas[1:]) > 0)


@pytest.mark.parametrize("args", [dict(T=1), dict(sigma_min=0.0), dict(sigma_min=2.0, sigma_max=1.0)])
def test_ve_invalid(args):
    with pytest.raises(InputError):
        ve_schedule(**args)


def test_vp_invalid():
    with pytest.raises(InputError):
        vp_schedule(beta_min=0.1, beta_max=1.5)


def test_schedule_from_spec_and_digest():
    a = schedule_from_spec({"kind": "ve", "T": 30, "sigma_min": 0.005, "sigma_max": 2.0})
    b = ve_schedule(30, 0.005, 2.0)
    assert a.digest() == b.digest()
    assert a.digest() != ve_schedule(31, 0.005, 2.0).digest()
    with pytest.raises(InputError):
        schedule_from_spec({"kind": "edm"})


# --- forward ------------------------------------------------------------------

def test_forward_identity_with_zero_drift_and_noise():
    x = np.array([0.3, -1.2])
    np.testing.assert_array_equal(forward_step(x, 0, constant_ve(), np.zeros(2)), x)


def test_forward_vp_drift():
    s = vp_schedule(T=10, beta_min=0.01, beta_max=0.02)
    # state t=9 -> 10 uses beta_10 = 0.02
    np.testing.assert_allclose(forward_step([1.0, 0.0], 9, s, np.zeros(2)), [0.99, 0.0], atol=1e-15)


def test_forward_range():
    s = ve_schedule(10)
    with pytest.raises(InputError):
        forward_step([0.0], 10, s, [0.0])
    with pytest.raises(InputError):
        forward_step([0.0], -1, s, [0.0])


def test_forward_shape_mismatch():
    with pytest.raises(InputError):
        forward_step([0.0, 1.0], 0, ve_schedule(10), [0.0])


@pytest.mark.parametrize("M", [1, 5, 20])
def test_ve_forward_variance(M):
    s = ve_schedule(20, 0.05, 1.0)
    x = diffuse_to(np.zeros((100_000, 1)), M, s, seed=3)
    assert np.var(x) == pytest.approx(np.sum(s.sigmas[1:M + 1] ** 2), rel=0.03)


def test_forward_steps_with_zero_noise_keep_x0():
    s = ve_schedule(10)
    x0 = np.array([1.5, -2.0])
    x = x0
    for t in range(7):
        x = forward_step(x, t, s, np.zeros(2))
    np.testing.assert_array_equal(x, x0)


def test_single_gaussian_marginal():
    s = ve_schedule(20, 0.05, 1.0)
    sd = 0.7
    x0 = sd * np.random.default_rng(0).standard_normal((100_000, 2))
    xm = diffuse_to(x0, 12, s, seed=9)
    expected = sd ** 2 + noise_var_at(s, 12)
    cov = np.cov(xm.T)
    np.testing.assert_allclose(np.diag(cov), expected, rtol=0.05)
    assert abs(cov[0, 1]) < 0.05 * expected


def test_vp_marginal_variance():
    s = vp_schedule(50, 0.01, 0.2)
    x = diffuse_to(np.zeros((100_000, 1)), 50, s, seed=4)
    assert np.var(x) == pytest.approx(noise_var_at(s, 50), rel=0.03)


def test_diffuse_to_deterministic():
    s = ve_schedule(10)
    x0 = np.random.default_rng(1).standard_normal((10, 3))
    np.testing.assert_array_equal(diffuse_to(x0, 7, s, seed=5), diffuse_to(x0, 7, s, seed=5))
    assert diffuse_to(x0[0], 7, s, seed=5).shape == (3,)


@pytest.mark.parametrize("M", [0, 11])
def test_diffuse_to_range(M):
    with pytest.raises(InputError):
        diffuse_to([0.0], M, ve_schedule(10), seed=0)


# --- reverse ------------------------------------------------------------------

def test_reverse_identity():
    x = np.array([2.0, -1.0])
    np.testing.assert_array_equal(reverse_step(x, 3, constant_ve(), np.zeros(2)), x)


def test_reverse_contracts_far_points():
    s = ve_schedule()
    score = GMMScore(GaussianMixture([1.0], [[0.0, 0.0]], [1.0]), s)
    for t in (1, 50, 100):
        x = np.array([[30.0, -40.0]])
        out = reverse_step(x, t, s, score(x, t))
        assert np.linalg.norm(out) < np.linalg.norm(x)


def test_reverse_closed_form():
    s = vp_schedule(10)
    x, sc, z = np.array([1.0, 2.0]), np.array([0.5, -0.5]), np.array([0.1, 0.2])
    t = 4
    expected = x - (-0.5 * s.betas[t] * x - s.betas[t] * sc) + np.sqrt(s.betas[t]) * z
    np.testing.assert_allclose(reverse_step(x, t, s, sc, z), expected, atol=1e-15)


@given(st.integers(1, 100), st.lists(st.floats(-10, 10), min_size=2, max_size=2),
       st.lists(st.floats(-10, 10), min_size=2, max_size=2), st.booleans())
def test_langevin_equals_general_for_ve(t, x, sc, noisy):
    s = ve_schedule()
    z = np.array([0.3, -0.7]) if noisy else None
    a = reverse_step(np.array(x), t, s, np.array(sc), z, variant="general")
    b = reverse_step(np.array(x), t, s, np.array(sc), z, variant="langevin")
    np.testing.assert_array_equal(a, b)


def test_langevin_differs_for_vp():
    s = vp_schedule(10)
    x = np.array([1.0, 1.0])
    assert not np.array_equal(reverse_step(x, 5, s, np.zeros(2), variant="general"),
                              reverse_step(x, 5, s, np.zeros(2), variant="langevin"))


def test_reverse_errors():
    s = ve_schedule(10)
    with pytest.raises(InputError):
        reverse_step([0.0], 0, s, [0.0])
    with pytest.raises(InputError):
        reverse_step([0.0], 11, s, [0.0])
    with pytest.raises(InputError):
        reverse_step([0.0, 0.0], 3, s, [0.0])
    with pytest.raises(InputError):
        reverse_step([0.0], 3, s, [0.0], variant="ode")


def test_reverse_decreases_negative_log_density():
    # deterministic reverse steps with the exact score climb the density
    s = ve_schedule()
    gm = GaussianMixture([1.0], [[0.0, 0.0]], [1.0])
    score = GMMScore(gm, s)
    starts = np.sqrt(noise_var_at(s, s.T) + 1) * np.random.default_rng(2).standard_normal((200, 2))
    ok = 0
    for x in starts:
        x = x[None, :]
        monotone = True
        for t in range(s.T, 0, -1):
            y = reverse_step(x, t, s, score(x, t))
            if -score.log_density(y, t - 1)[0] > -score.log_density(x, t)[0] + 1e-12:
                monotone = False
            x = y
        ok += monotone
    assert ok >= 0.95 * len(starts)


# --- trajectory ---------------------------------------------------------------

def test_trajectory_csv(tmp_path):
    tr = Trajectory()
    for t in (5, 4, 3):
        tr.append(t, [float(t), -float(t)])
    tr.to_csv(tmp_path / "tr.csv")
    rows = list(csv.reader(open(tmp_path / "tr.csv")))
    assert rows[0] == ["t", "x0", "x1"] and rows[1][0] == "5" and len(rows) == 4


def test_trajectory_rejects_non_monotone():
    tr = Trajectory()
    tr.append(3, [0.0])
    tr.append(2, [0.0])
    with pytest.raises(InputError):
        tr.append(4, [0.0])
    with pytest.raises(InputError):
        tr.append(1, [0.0, 1.0])
