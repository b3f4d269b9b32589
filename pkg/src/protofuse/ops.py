"""Plain-vector numerical ops: softmax, cosine similarity, KL divergence.

These are the argument-validated, numpy-in/numpy-out counterparts of the
graph composites in ``autodiff``; inference paths and tests use them
directly.
"""

from __future__ import annotations

import numpy as np

from .autodiff import zero_norm_events
from .errors import InvalidArgumentError

PROB_SUM_TOL = 1e-6
KL_FLOOR = 1e-12


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """exp(l_i/T) / sum_j exp(l_j/T), computed with max-subtraction."""
    x = np.asarray(logits, dtype=np.float64)
    if x.size == 0:
        raise InvalidArgumentError("softmax of empty vector")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("softmax input must be finite")
    if not temperature > 0.0:
        raise InvalidArgumentError("softmax temperature must be positive")
    z = (x - x.max()) / temperature
    e = np.exp(z)
    return e / e.sum()


def cosine_similarity(a, b) -> float:
    """a.b / (|a||b|); a zero-norm argument yields 0 and bumps the diagnostic counter."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise InvalidArgumentError("cosine_similarity expects two equal-length vectors")
    na = np.sqrt((va * va).sum())
    nb = np.sqrt((vb * vb).sum())
    if na == 0.0 or nb == 0.0:
        zero_norm_events.add()
        return 0.0
    return float((va @ vb) / (na * nb))


def _check_distribution(p: np.ndarray, name: str) -> None:
    if np.any(p < 0.0):
        raise InvalidArgumentError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > PROB_SUM_TOL:
        raise InvalidArgumentError(f"{name} does not sum to 1 within {PROB_SUM_TOL}")


def kl_divergence(p, q) -> float:
    """sum_i p_i ln(p_i / q_i) with 0 ln 0 := 0 and q clamped below at 1e-12."""
    vp = np.asarray(p, dtype=np.float64)
    vq = np.asarray(q, dtype=np.float64)
    if vp.shape != vq.shape or vp.ndim != 1:
        raise InvalidArgumentError("kl_divergence expects two equal-length vectors")
    _check_distribution(vp, "p")
    _check_distribution(vq, "q")
    mask = vp > 0.0
    terms = vp[mask] * (np.log(vp[mask]) - np.log(np.maximum(vq[mask], KL_FLOOR)))
    return float(terms.sum())
