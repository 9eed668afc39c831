"""Distances between trace segments. All logarithms are base 2."""

from __future__ import annotations

import numpy as np


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def normalize(samples) -> np.ndarray:
    """Clamp negatives to zero and scale to unit sum; all-zero input maps to uniform."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("cannot normalize an empty vector")
    x = np.clip(x, 0.0, None)
    s = x.sum()
    if s <= 0:
        return np.full(x.size, 1.0 / x.size)
    return x / s


def euclidean(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.sqrt(np.sum((a - b) ** 2)))


def rmse(a, b) -> float:
    a, b = _pair(a, b)
    if a.size == 0:
        raise ValueError("rmse of empty vectors")
    return euclidean(a, b) / np.sqrt(a.size)


def sad(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.sum(np.abs(a - b)))


def _kl_terms(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    terms = np.zeros_like(p)
    both = (p > 0) & (q > 0)
    terms[both] = p[both] * np.log2(p[both] / q[both])
    terms[(p > 0) & (q <= 0)] = np.inf
    return terms


def kl_divergence(p, q) -> float:
    p, q = _pair(p, q)
    return float(np.sum(_kl_terms(p, q)))


def js_divergence(p, q) -> float:
    p, q = _pair(p, q)
    m = 0.5 * (p + q)
    jsd = 0.5 * np.sum(_kl_terms(p, m)) + 0.5 * np.sum(_kl_terms(q, m))
    return float(min(max(jsd, 0.0), 1.0))


def js_distance(p, q) -> float:
    return float(np.sqrt(js_divergence(p, q)))
