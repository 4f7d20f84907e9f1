"""Identity cross-entropy, hetero-center triplet loss, and the total objective.

The total objective is a weighted sum of three terms applied at different
points of the encoder head: softmax cross-entropy on classifier logits, the
margin-gated class-conditional MMD loss on pooled features, and the
hetero-center triplet loss on pooled features. Zero-weighted terms are
skipped entirely, so ablation runs never evaluate the corresponding code and
contribute bitwise-zero gradient.

The hetero-center triplet loss compares per-(identity, modality) centroid
vectors: for each identity, both the visible- and thermal-anchored hinge use
the cross-modal center pair as positive and the hardest (minimum-distance)
center of any other identity, over both modalities, as negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import counters
from .data import THERMAL, VISIBLE, FeatureSet
from .kernels import KernelSpec
from .mmd import MarginConfig, loss_margin_mmd_id, loss_mmd_id, loss_mmd_marginal

MMD_VARIANTS = ("margin_id", "id", "marginal", "none")


@dataclass(frozen=True)
class LossWeights:
    """Weights of the total objective; defaults follow the reference recipe."""

    lambda_id: float = 1.0
    lambda_margin_mmd: float = 0.25
    lambda_hctri: float = 2.0

    def __post_init__(self):
        if self.lambda_id < 0 or self.lambda_margin_mmd < 0 or self.lambda_hctri < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass(frozen=True)
class HcTriConfig:
    margin_rho1: float = 0.3

    def __post_init__(self):
        if self.margin_rho1 < 0:
            raise ValueError(f"hc-tri margin must be >= 0, got {self.margin_rho1}")


@dataclass(frozen=True)
class LossBundle:
    """Scalar terms plus gradients in pooled-feature and logit space."""

    total: float
    id_term: float
    margin_mmd_term: float
    hctri_term: float
    grad_pooled: np.ndarray   # (N, D): lambda-weighted sum of metric-loss gradients
    grad_logits: np.ndarray   # (N, C): lambda-weighted cross-entropy gradient
    active_classes: int | None = None    # margin-gate survivors, when applicable
    class_mmd2: np.ndarray | None = None  # raw per-class MMD^2, when applicable


def loss_id(logits, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy; gradient is (softmax - onehot) / N."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.min() < 0 or labels.max() >= c:
        bad = labels[(labels < 0) | (labels >= c)][0]
        raise ValueError(f"label {bad} out of range for {c} classes")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[np.arange(n), labels]))
    probs = np.exp(shifted - log_z[:, None])
    grad = probs
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad


def hetero_centers(batch: FeatureSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-identity centroids of each modality.

    Returns (identities ascending, visible centers, thermal centers).
    """
    ids = np.unique(batch.identities)
    dim = batch.features.shape[1]
    cv = np.empty((len(ids), dim))
    ct = np.empty((len(ids), dim))
    for i, c in enumerate(ids):
        for modality, out in ((VISIBLE, cv), (THERMAL, ct)):
            rows = batch.features[(batch.identities == c) & (batch.modalities == modality)]
            if len(rows) == 0:
                name = "visible" if modality == VISIBLE else "thermal"
                raise ValueError(f"identity {c} has no {name} samples")
            out[i] = rows.mean(axis=0)
    return ids, cv, ct


def _safe_direction(diff: np.ndarray, dist: float) -> np.ndarray:
    # subgradient choice at coincident centers: zero direction
    return diff / dist if dist > 0 else np.zeros_like(diff)


def loss_hc_tri(batch: FeatureSet, cfg: HcTriConfig) -> tuple[float, np.ndarray]:
    """Hetero-center triplet loss with batch-hard negative mining over centers.

    Hinge terms at exactly zero are inactive; ties in the hardest-negative
    minimum are broken by a fixed candidate order (ascending identity, visible
    before thermal), and only the first minimizer receives gradient.
    """
    ids, cv, ct = hetero_centers(batch)
    p = len(ids)
    if p < 2:
        raise ValueError(f"hc-tri needs >= 2 identities in the batch, got {p}")

    # protocol-level cost: P positive distances, 2(P-1) negatives per anchor
    d_pos = np.linalg.norm(cv - ct, axis=1)
    counters.center_distances.add(p + 2 * p * 2 * (p - 1))

    # anchors: visible centers then thermal; candidates interleaved in the
    # tie-break order so argmin lands on the first minimizer
    anchors = np.vstack([cv, ct])
    cand = np.empty((2 * p, cv.shape[1]))
    cand[0::2] = cv
    cand[1::2] = ct
    diff = anchors[:, None, :] - cand[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    anchor_identity = np.concatenate([np.arange(p), np.arange(p)])
    cand_identity = np.repeat(np.arange(p), 2)
    d_masked = np.where(cand_identity[None, :] != anchor_identity[:, None], d, np.inf)
    neg_idx = np.argmin(d_masked, axis=1)
    d_neg = d_masked[np.arange(2 * p), neg_idx]

    terms = cfg.margin_rho1 + np.concatenate([d_pos, d_pos]) - d_neg
    loss = float(terms[terms > 0].sum())

    grad_cv = np.zeros_like(cv)
    grad_ct = np.zeros_like(ct)
    for a in np.where(terms > 0)[0]:
        i = int(a % p)
        u = _safe_direction(cv[i] - ct[i], float(d_pos[i]))
        grad_cv[i] += u
        grad_ct[i] -= u
        k = int(neg_idx[a])
        j, cand_grad = k // 2, grad_cv if k % 2 == 0 else grad_ct
        anchor_grad = grad_cv if a < p else grad_ct
        w = _safe_direction(anchors[a] - cand[k], float(d_neg[a]))
        anchor_grad[i] -= w
        cand_grad[j] += w

    # centers are means, so each member feature receives grad / cell size
    grad = np.zeros_like(batch.features)
    for i, c in enumerate(ids):
        for modality, grad_center in ((VISIBLE, grad_cv), (THERMAL, grad_ct)):
            rows = np.where((batch.identities == c) & (batch.modalities == modality))[0]
            grad[rows] = grad_center[i] / len(rows)
    return float(loss), grad


def loss_total(
    batch: FeatureSet,
    logits,
    labels,
    *,
    kernel_spec: KernelSpec,
    margin: MarginConfig,
    hctri: HcTriConfig,
    weights: LossWeights,
    estimator: str = "biased",
    mmd_variant: str = "margin_id",
) -> LossBundle:
    """Weighted total objective with gradients accumulated per term.

    ``mmd_variant`` selects which distribution-alignment loss the
    ``lambda_margin_mmd`` weight applies to (the margin-gated one by default;
    ``"id"`` and ``"marginal"`` exist for ablations, ``"none"`` for pure
    baselines). Terms with zero weight are skipped outright.
    """
    if mmd_variant not in MMD_VARIANTS:
        raise ValueError(f"mmd_variant must be one of {MMD_VARIANTS}, got {mmd_variant!r}")
    logits = np.asarray(logits, dtype=np.float64)
    if len(logits) != len(batch):
        raise ValueError(f"batch has {len(batch)} features but logits have {len(logits)} rows")

    grad_pooled = np.zeros_like(batch.features)
    grad_logits = np.zeros_like(logits)
    id_term = 0.0
    mmd_term = 0.0
    hctri_term = 0.0
    active_classes = None
    class_mmd2 = None

    if weights.lambda_id != 0.0:
        id_term, g = loss_id(logits, labels)
        grad_logits += weights.lambda_id * g

    if weights.lambda_margin_mmd != 0.0 and mmd_variant != "none":
        if mmd_variant == "margin_id":
            res = loss_margin_mmd_id(batch, kernel_spec, margin, estimator)
            active_classes = res.active_classes
            class_mmd2 = res.class_mmd2
        elif mmd_variant == "id":
            res = loss_mmd_id(batch, kernel_spec, estimator)
            class_mmd2 = res.class_mmd2
        else:
            res = loss_mmd_marginal(batch, kernel_spec, estimator)
        mmd_term = res.value
        grad_pooled += weights.lambda_margin_mmd * res.grad

    if weights.lambda_hctri != 0.0:
        hctri_term, g = loss_hc_tri(batch, hctri)
        grad_pooled += weights.lambda_hctri * g

    total = (
        weights.lambda_id * id_term
        + weights.lambda_margin_mmd * mmd_term
        + weights.lambda_hctri * hctri_term
    )
    return LossBundle(
        total=float(total),
        id_term=float(id_term),
        margin_mmd_term=float(mmd_term),
        hctri_term=float(hctri_term),
        grad_pooled=grad_pooled,
        grad_logits=grad_logits,
        active_classes=active_classes,
        class_mmd2=class_mmd2,
    )


__all__ = [
    "MMD_VARIANTS",
    "LossWeights",
    "HcTriConfig",
    "LossBundle",
    "loss_id",
    "hetero_centers",
    "loss_hc_tri",
    "loss_total",
]
