import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transfer_lmr.synthgen import (METEOR_COUNTS, SynthSpec, class_means, generate, make_hdd_like,
                                   make_meteor_like, oracle_log_posterior, pair_separation)


def test_meteor_counts():
    assert make_meteor_like(1).counts == METEOR_COUNTS
    spec = make_meteor_like(10)
    assert spec.counts == (511, 153, 30, 21, 7)
    assert spec.counts[0] // spec.counts[-1] == 73
    assert spec.confusable_pairs == ((0, 3, 0.9), (1, 2, 0.9))


def test_hdd_profile():
    spec = make_hdd_like(10)
    assert spec.num_classes == 11
    assert spec.counts[0] == 486 and spec.counts[-1] == 7


@pytest.mark.parametrize("k", [0, -3])
def test_bad_divisor(k):
    with pytest.raises(ValueError):
        make_meteor_like(k)


def test_generated_counts_match_spec():
    spec = SynthSpec(counts=(12, 5, 3), D=8, T=4, test_counts=(2, 2, 0))
    train, test = generate(spec)
    assert tuple(train.class_counts) == (12, 5, 3)
    assert tuple(test.class_counts) == (2, 2, 0)
    assert train.features.shape == (20, 4, 8) and train.features.dtype == np.float32


def test_balanced_test_by_default():
    _, test = generate(SynthSpec(counts=(30, 2), D=4, T=3, test_per_class=9))
    assert tuple(test.class_counts) == (9, 9)


def test_alpha_one_collapses_pair():
    m = class_means(make_meteor_like(10, alpha=1.0))
    assert np.allclose(m[0], m[3]) and np.allclose(m[1], m[2])


@given(st.floats(0.0, 1.0), st.floats(0.2, 5.0), st.integers(0, 2**16))
@settings(max_examples=40)
def test_pair_cosine(alpha, scale, seed):
    spec = make_meteor_like(10, D=16, seed=seed, alpha=alpha, scale=scale)
    m = class_means(spec)
    h, t = m[0], m[3]
    cos = h @ t / (np.linalg.norm(h) * np.linalg.norm(t))
    assert cos == pytest.approx(alpha / math.sqrt(alpha**2 + (1 - alpha) ** 2), abs=1e-6)


def test_unpaired_means_orthogonal():
    m = class_means(make_meteor_like(10, D=16))
    assert abs(m[0] @ m[4]) < 1e-12 and abs(m[3] @ m[4]) < 1e-12


def test_deterministic():
    spec = make_meteor_like(20, D=16, seed=3)
    a, b = generate(spec), generate(spec)
    assert a[0] == b[0] and a[1] == b[1]
    c = generate(make_meteor_like(20, D=16, seed=4))
    assert not np.array_equal(a[0].features, c[0].features)


def test_class_stream_independent_of_other_counts():
    # each class draws from its own stream, so changing one count leaves the others untouched
    a, _ = generate(SynthSpec(counts=(5, 7), D=4, T=3))
    b, _ = generate(SynthSpec(counts=(9, 7), D=4, T=3))
    assert np.array_equal(a.features[5:], b.features[9:])


def test_empirical_means_converge():
    spec = SynthSpec(counts=(2000, 500), D=6, T=5, sigma=0.4, drift=0.8, seed=11)
    train, _ = generate(spec)
    means = class_means(spec)
    for j, n in enumerate(spec.counts):
        emp = train.features[train.labels == j].astype(np.float64).mean(axis=(0, 1))
        # time-averaged drift is exactly zero; per-coordinate noise std is sigma / sqrt(n T)
        assert np.all(np.abs(emp - means[j]) <= 3 * spec.sigma / math.sqrt(n))


def test_drift_makes_timesteps_differ():
    spec = SynthSpec(counts=(50,), D=8, T=7, sigma=0.01, drift=2.0)
    train, _ = generate(spec)
    spread = train.features.std(axis=1).mean()
    assert spread > 0.1


def test_bayes_oracle_confuses_tail_into_head():
    spec = make_meteor_like(10, test_per_class=2000)
    _, test = generate(spec)
    priors = np.asarray(spec.counts) / sum(spec.counts)
    pred = oracle_log_posterior(spec, test.features.mean(axis=1), priors).argmax(axis=1)
    tail, head = test.labels == 3, test.labels == 0
    assert np.mean(pred[tail] == 0) >= 0.30
    assert np.mean(pred[head] == 0) >= 0.90


def test_pair_separation_grows_with_scale():
    lo = pair_separation(make_meteor_like(10, scale=1.0), 0, 3)
    hi = pair_separation(make_meteor_like(10, scale=3.5), 0, 3)
    assert hi == pytest.approx(3.5 * lo)


@pytest.mark.parametrize("kw,field", [
    (dict(confusable_pairs=((0, 1, 1.2),)), "alpha"),
    (dict(confusable_pairs=((0, 1, -0.1),)), "alpha"),
    (dict(sigma=0.0), "sigma"),
    (dict(counts=(4, 0)), "counts"),
    (dict(D=1), "D"),
    (dict(confusable_pairs=((0, 0, 0.5),)), "confusable_pairs"),
])
def test_invalid_spec_names_field(kw, field):
    base = dict(counts=(4, 4), D=4, T=2)
    base.update(kw)
    with pytest.raises(ValueError, match=field):
        SynthSpec(**base)
