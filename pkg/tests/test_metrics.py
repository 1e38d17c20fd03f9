import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpmot.errors import InputError
from dpmot.metrics import (BayesClassifier, MmrReport, assignment_w2, energy_distance, energy_permutation_null,
                           mixture_flags, mmr, mode_mixture_indicator, permutation_threshold)
from dpmot.scores import GaussianMixture

CIFAR_CLASSES = ["airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"]


# --- indicator ----------------------------------------------------------------

def test_horse_deer_case_is_flagged():
    probs = dict.fromkeys(CIFAR_CLASSES, 0.3 / 8)
    probs["horse"], probs["deer"] = 0.3, 0.4
    p = np.array([probs[c] for c in CIFAR_CLASSES])
    assert mode_mixture_indicator(p, 0.2) == 1


def test_dominant_class_not_flagged():
    p = np.array([0.99] + [0.01 / 9] * 9)
    assert mode_mixture_indicator(p, 0.1) == 0


def test_threshold_inclusive():
    assert mode_mixture_indicator([0.5, 0.5], 0.5) == 1


def test_single_class_above_threshold():
    assert mode_mixture_indicator([0.7, 0.2, 0.1], 0.25) == 0


@pytest.mark.parametrize("probs", [[0.5, 0.6], [1.2, -0.2], [np.nan, 1.0]])
def test_invalid_probabilities(probs):
    with pytest.raises(InputError):
        mode_mixture_indicator(probs, 0.2)


@pytest.mark.parametrize("lam", [0.0, 1.0, -0.1])
def test_invalid_threshold(lam):
    with pytest.raises(InputError):
        mode_mixture_indicator([0.5, 0.5], lam)


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=10), st.floats(0.01, 0.98), st.floats(0.0, 0.5))
def test_indicator_monotone_in_lambda(raw, lam, bump):
    p = np.array(raw) / np.sum(raw)
    hi = min(lam + bump, 0.99)
    assert mode_mixture_indicator(p, hi) <= mode_mixture_indicator(p, lam)


# --- mmr ----------------------------------------------------------------------

def test_reported_rate_arithmetic():
    flags = np.zeros(50_000, dtype=np.int8)
    flags[:699] = 1
    rep = MmrReport.from_flags(flags, 0.1)
    assert rep.mmr == 699 / 50_000 == 0.01398
    assert f"{rep.count}({100 * rep.mmr:.2f}%)" == "699(1.40%)"


def test_unambiguous_batch():
    gm = GaussianMixture([0.5, 0.5], [[-3.0, 0.0], [3.0, 0.0]], [0.5])
    x = np.array([[-3.0, 0.1], [3.1, 0.0], [2.5, -1.0]])
    assert mmr(x, BayesClassifier(gm), 0.1).mmr == 0.0


def test_midline_points():
    gm = GaussianMixture([0.25] * 4, [[1, 1], [-1, 1], [-1, -1], [1, -1]], [0.3])
    clean = [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [1.1, 0.9], [-0.9, -1.2], [1.0, -0.8]]
    # on the midline between two modes the posterior splits evenly between them
    mixed = [[0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
    rep = mmr(np.array(clean + mixed, dtype=float), BayesClassifier(gm), 0.2)
    assert rep.K == 10 and rep.count == 3 and rep.mmr == 0.3
    assert rep.flags.tolist() == [0] * 7 + [1] * 3


def test_empty_batch():
    gm = GaussianMixture([1.0], [[0.0]], [1.0])
    with pytest.raises(InputError):
        mmr(np.zeros((0, 1)), BayesClassifier(gm), 0.2)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=200))
def test_mmr_is_flag_mean(bits):
    rep = MmrReport.from_flags(bits, 0.2)
    assert 0.0 <= rep.mmr <= 1.0
    assert rep.mmr == sum(bits) / len(bits)


def test_report_json():
    rep = MmrReport.from_flags([1, 0, 0, 1], 0.3)
    doc = json.loads(rep.to_json(include_flags=True))
    assert doc == {"K": 4, "lambda": 0.3, "mixed": 2, "mmr": 0.5, "flags": [1, 0, 0, 1]}


def test_bayes_classifier_normalised():
    gm = GaussianMixture([0.2, 0.3, 0.5], [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0.4])
    p = BayesClassifier(gm)(np.random.default_rng(0).standard_normal((100, 2)))
    assert p.shape == (100, 3) and np.all(p >= 0)
    np.testing.assert_allclose(p.sum(1), 1.0, atol=1e-9)
    assert mixture_flags(p, 0.2).shape == (100,)


# --- energy distance -------------------------------------------------------------

def test_energy_distance_identical():
    a = np.random.default_rng(0).standard_normal((300, 2))
    assert abs(energy_distance(a, a)) < 1e-12


def test_energy_distance_formula():
    a = np.array([[0.0], [1.0]])
    b = np.array([[3.0]])
    # 2 * mean|a-b| - mean|a-a'| - mean|b-b'| with V-statistic means
    assert energy_distance(a, b) == pytest.approx(2 * 2.5 - 0.5 - 0.0)


def test_energy_dimension_mismatch():
    with pytest.raises(InputError):
        energy_distance(np.zeros((3, 2)), np.zeros((3, 1)))


def test_same_distribution_below_null_percentile():
    r = np.random.default_rng(1)
    a, b = r.standard_normal((10_000, 2)), r.standard_normal((10_000, 2))
    thr = permutation_threshold(energy_permutation_null(a, b, seed=2))
    assert energy_distance(a, b) < thr


def test_shifted_distribution_far_above_null():
    r = np.random.default_rng(3)
    a, b = r.standard_normal((10_000, 1)), 3 + r.standard_normal((10_000, 1))
    thr = permutation_threshold(energy_permutation_null(a, b, seed=4))
    assert energy_distance(a, b) >= 10 * thr


def test_permutation_null_matches_direct_recomputation():
    r = np.random.default_rng(5)
    a, b = r.standard_normal((40, 2)), r.standard_normal((30, 2)) + 0.5
    null = energy_permutation_null(a, b, n_permutations=3, seed=6)
    from dpmot import rng as rngmod

    g = rngmod.stream(6, rngmod.PERMUTATION)
    pooled = np.vstack([a, b])
    for k in range(3):
        perm = g.permutation(70)
        assert null[k] == pytest.approx(energy_distance(pooled[perm[:40]], pooled[perm[40:]]), rel=1e-10)


def test_threshold_rank():
    null = np.arange(19.0)[::-1]
    assert permutation_threshold(null) == 18.0
    assert permutation_threshold(np.arange(99.0)) == 94.0


# --- assignment W2 -----------------------------------------------------------------

def test_w2_identical():
    a = np.random.default_rng(0).standard_normal((20, 3))
    assert assignment_w2(a, a) == 0.0


def test_w2_1d_sorting():
    r = np.random.default_rng(1)
    a, b = r.standard_normal(50), r.standard_normal(50) * 2 + 1
    expected = math.sqrt(np.mean((np.sort(a) - np.sort(b)) ** 2))
    assert assignment_w2(a, b) == pytest.approx(expected, rel=1e-12)


def test_w2_matches_brute_force():
    r = np.random.default_rng(2)
    a, b = r.standard_normal((8, 2)), r.standard_normal((8, 2))
    cost = ((a[:, None] - b[None]) ** 2).sum(-1)
    perms = np.array(list(itertools.permutations(range(8))))
    best = cost[np.arange(8), perms].mean(axis=1).min()
    assert assignment_w2(a, b) == pytest.approx(math.sqrt(best), rel=1e-12)


def test_w2_errors():
    with pytest.raises(InputError):
        assignment_w2(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(InputError):
        assignment_w2(np.zeros((513, 1)), np.zeros((513, 1)))


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12))
def test_w2_metric_properties(seed, n):
    r = np.random.default_rng(seed)
    a, b, c = (r.standard_normal((n, 2)) for _ in range(3))
    ab = assignment_w2(a, b)
    assert ab == pytest.approx(assignment_w2(b, a), abs=1e-12)
    assert assignment_w2(a, c) <= ab + assignment_w2(b, c) + 1e-9
