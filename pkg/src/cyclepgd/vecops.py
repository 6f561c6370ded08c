"""Flat-vector numerics: elementwise sign, L-infinity projection, clamping,
cosine similarity. Everything is float64 in, float64 out; the attack loop's
revisit detection relies on these being bit-reproducible for equal inputs.
"""

from __future__ import annotations

import math

import numpy as np

from .validation import check_positive, check_vector


def sign_vec(v: np.ndarray) -> np.ndarray:
    """Elementwise sign with sign(0) = 0 (zero-gradient coordinates stay put)."""
    v = check_vector(v, name="v")
    return np.sign(v) + 0.0  # + 0.0 folds -0.0 into +0.0


def project_linf(v: np.ndarray, eps: float) -> np.ndarray:
    """Nearest point in the L-inf ball of radius eps: per-coordinate clip."""
    v = check_vector(v, name="v")
    eps = check_positive(eps, "eps")
    return np.clip(v, -eps, eps)


def clamp_domain(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Clip every coordinate into the feature domain [lo, hi]."""
    x = check_vector(x, name="x")
    if not lo < hi:
        raise ValueError(f"domain bounds must satisfy lo < hi, got [{lo}, {hi}]")
    return np.clip(x, lo, hi)


def linf_norm(v: np.ndarray) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(np.max(np.abs(v))) if v.size else 0.0


def l2_norm(v: np.ndarray) -> float:
    return float(np.sqrt(np.dot(v, v)))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between a and b; raises on a zero vector.

    The denominator is sqrt(dot(a,a) * dot(b,b)), so bit-identical inputs
    give exactly 1.0 (sqrt(x*x) == x under IEEE round-to-nearest).
    """
    a = check_vector(a, name="a")
    b = check_vector(b, dim=a.shape[0], name="b")
    na2 = float(np.dot(a, a))
    nb2 = float(np.dot(b, b))
    if na2 == 0.0 or nb2 == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm input")
    return float(np.dot(a, b)) / math.sqrt(na2 * nb2)
