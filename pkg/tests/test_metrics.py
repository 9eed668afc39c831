import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import jensenshannon

from qpsca.metrics import euclidean, js_distance, js_divergence, kl_divergence, normalize, rmse, sad

from support import random_prob


def test_normalize_examples():
    assert normalize([1, 1, 2]).tolist() == [0.25, 0.25, 0.5]
    assert normalize([0, 0]).tolist() == [0.5, 0.5]
    assert normalize([-0.01, 1.01]).tolist() == [0.0, 1.0]
    with pytest.raises(ValueError):
        normalize([])


def test_distances():
    assert euclidean([1, 2], [1, 2]) == 0
    assert euclidean([0, 0], [3, 4]) == 5
    assert rmse([0, 0], [3, 4]) == pytest.approx(5 / math.sqrt(2))
    assert sad([1, 2], [0, 4]) == 3
    with pytest.raises(ValueError):
        sad([1], [1, 2])
    with pytest.raises(ValueError):
        euclidean([1], [1, 2])


def test_kl_branches():
    assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0
    assert kl_divergence([1, 0], [0, 1]) == math.inf
    assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(1.0)
    # x = 0 contributes nothing whatever y is
    assert kl_divergence([0, 1], [0.5, 0.5]) == pytest.approx(1.0)


def test_js_examples():
    assert js_divergence([0.2, 0.8], [0.2, 0.8]) == 0
    assert js_divergence([1, 0], [0, 1]) == 1.0
    assert js_distance([1, 0], [0, 1]) == 1.0
    assert js_divergence([1, 0], [0.5, 0.5]) == pytest.approx(0.311278, abs=1e-6)
    assert js_distance([1, 0], [0.5, 0.5]) == pytest.approx(0.557923, abs=1e-6)


@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
@settings(max_examples=200, deadline=None)
def test_js_distance_matches_scipy(seed, n):
    rng = np.random.default_rng(seed)
    p, q = random_prob(rng, n), random_prob(rng, n)
    assert js_distance(p, q) == pytest.approx(jensenshannon(p, q, base=2), abs=1e-9)


@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
@settings(max_examples=200, deadline=None)
def test_metric_axioms(seed, n):
    rng = np.random.default_rng(seed)
    p, q, r = (random_prob(rng, n) for _ in range(3))
    assert js_distance(p, q) == js_distance(q, p)
    assert js_distance(p, p) <= 1e-12
    assert js_distance(p, r) <= js_distance(p, q) + js_distance(q, r) + 1e-9
    assert 0 <= js_divergence(p, q) <= 1
    assert kl_divergence(p, p) == 0
    assert sad(p, q) >= euclidean(p, q) - 1e-15
    assert rmse(p, q) * math.sqrt(n) == pytest.approx(euclidean(p, q))
