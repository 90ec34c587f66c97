"""Cross-entropy and temperature-scaled contrastive (InfoNCE) losses."""

from __future__ import annotations

import numpy as np


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy; returns (loss, grad w.r.t. logits)."""
    n = logits.shape[0]
    p = softmax(logits.astype(np.float64))
    loss = -np.mean(np.log(p[np.arange(n), labels] + 1e-300))
    grad = p.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return float(loss), grad.astype(logits.dtype)


def info_nce(projections, temperature, top_k=5):
    """Contrastive loss over 2N projections paired as (2i, 2i+1).

    Cosine similarities; for each anchor the positive is its pair mate and
    every other non-self projection is a negative.  Returns
    (mean loss, grad w.r.t. projections, top-k agreement) where the
    agreement is the fraction of anchors whose positive ranks within the
    k most similar candidates.
    """
    m = projections.shape[0]
    if m < 4 or m % 2 != 0:
        raise ValueError("need an even number of projections, at least 4")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    p64 = projections.astype(np.float64)
    norms = np.linalg.norm(p64, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero-norm projection vector")
    z = p64 / norms
    sims = (z @ z.T) / temperature
    np.fill_diagonal(sims, -np.inf)
    pos = np.arange(m) ^ 1  # pair mate index

    row_max = sims.max(axis=1, keepdims=True)
    e = np.exp(sims - row_max)
    denom = e.sum(axis=1, keepdims=True)
    logp = sims - row_max - np.log(denom)
    loss = float(-logp[np.arange(m), pos].mean())

    # top-k agreement: rank of the positive among non-self candidates
    better = (sims > sims[np.arange(m), pos][:, None]).sum(axis=1)
    agreement = float((better < top_k).mean())

    # d loss / d sims, then back through cosine normalization
    gsims = e / denom
    gsims[np.arange(m), pos] -= 1.0
    gsims /= m
    gz = (gsims + gsims.T) @ z / temperature
    gp = (gz - z * (gz * z).sum(axis=1, keepdims=True)) / norms
    return loss, gp.astype(projections.dtype), agreement
