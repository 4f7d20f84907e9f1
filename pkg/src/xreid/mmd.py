"""Squared maximum mean discrepancy estimators and the alignment losses.

MMD^2 between two samples is estimated either with the biased V-statistic
(full double sums, diagonal included; nonnegative) or the unbiased
U-statistic (diagonal excluded; may be negative). On top of the estimators
sit three losses over a labeled feature batch:

* marginal: MMD^2 between all visible and all thermal features;
* class-conditional: the average of per-identity MMD^2 values;
* margin-gated class-conditional: a per-identity hard gate that passes the
  full MMD^2 through while it exceeds the margin rho and contributes exactly
  zero (value and gradient) once it does not.

All gradients with respect to the input features are analytic, derived from
d k(x,y)/dx = k(x,y) (y-x)/sigma^2 summed over mixture scales. Median
heuristic bandwidths are treated as constants by the gradients; for the
class-conditional losses the heuristic is evaluated per class on that
class's union of modalities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import counters
from .data import THERMAL, VISIBLE, FeatureSet
from .kernels import KernelSpec, resolve_bandwidth, squared_distances

_ESTIMATORS = ("biased", "unbiased")


@dataclass(frozen=True)
class MmdEstimate:
    """One MMD^2 estimate with its three expectation terms.

    ``value == same_x_term + same_y_term - 2 * cross_term`` exactly as
    computed; raw estimates are never clamped (the unbiased one may be
    negative).
    """

    value: float
    same_x_term: float
    same_y_term: float
    cross_term: float


@dataclass(frozen=True)
class MarginConfig:
    """Margin on squared MMD; rho = 0 recovers the plain class-conditional loss."""

    rho: float = 1.4

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"margin rho must be >= 0, got {self.rho}")


@dataclass(frozen=True)
class LossValue:
    value: float
    grad: np.ndarray  # d loss / d feature, one row per batch feature


@dataclass(frozen=True)
class ClassMmdResult:
    value: float
    grad: np.ndarray
    class_ids: np.ndarray     # ascending identity order used for the reduction
    class_mmd2: np.ndarray    # raw per-class MMD^2 (pre-gate)


@dataclass(frozen=True)
class MarginMmdResult:
    value: float
    grad: np.ndarray
    active_classes: int       # classes whose MMD^2 exceeded rho
    class_ids: np.ndarray
    class_mmd2: np.ndarray


def _check_sets(xs, ys, estimator: str) -> tuple[np.ndarray, np.ndarray]:
    if estimator not in _ESTIMATORS:
        raise ValueError(f"estimator must be one of {_ESTIMATORS}, got {estimator!r}")
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs[None, :]
    if ys.ndim == 1:
        ys = ys[None, :]
    if xs.shape[0] == 0 or ys.shape[0] == 0:
        raise ValueError("MMD requires nonempty sample sets")
    if xs.shape[1] != ys.shape[1]:
        raise ValueError(f"dimension mismatch: xs has {xs.shape[1]}, ys has {ys.shape[1]}")
    if estimator == "unbiased" and (xs.shape[0] < 2 or ys.shape[0] < 2):
        raise ValueError(
            f"unbiased estimator needs >= 2 samples per set, got {xs.shape[0]} and {ys.shape[0]}"
        )
    return xs, ys


def _count_pairs(n: int, m: int, estimator: str) -> None:
    # distinct kernel pairs after exploiting symmetry; mixture size does not
    # multiply the count
    if estimator == "unbiased":
        same = n * (n - 1) // 2 + m * (m - 1) // 2
    else:
        same = n * (n + 1) // 2 + m * (m + 1) // 2
    counters.kernel_pairs.add(same + n * m)


def _kernel_sums(d2: np.ndarray, bandwidths: np.ndarray, want_grad: bool):
    """Mixture kernel matrix K and, if wanted, A = (1/S) sum_s K_s / sigma_s^2.

    A is the weight matrix appearing in the analytic feature gradient.
    """
    k = np.zeros_like(d2)
    a = np.zeros_like(d2) if want_grad else None
    for s2 in bandwidths:
        ks = np.exp(-d2 / (2.0 * s2))
        k += ks
        if want_grad:
            a += ks / s2
    k /= len(bandwidths)
    if want_grad:
        a /= len(bandwidths)
    return k, a


def _mmd2_core(xs, ys, spec: KernelSpec, estimator: str, want_grad: bool):
    """Shared engine: terms of the estimate plus optional feature gradients."""
    base = resolve_bandwidth(spec, xs, ys)
    bw = spec.bandwidths(base)
    n, m = xs.shape[0], ys.shape[0]

    kxx, axx = _kernel_sums(squared_distances(xs, xs), bw, want_grad)
    kyy, ayy = _kernel_sums(squared_distances(ys, ys), bw, want_grad)
    kxy, axy = _kernel_sums(squared_distances(xs, ys), bw, want_grad)
    _count_pairs(n, m, estimator)

    if estimator == "biased":
        same_x = float(kxx.mean())
        same_y = float(kyy.mean())
        norm_x = 2.0 / (n * n)
        norm_y = 2.0 / (m * m)
    else:
        same_x = float((kxx.sum() - np.trace(kxx)) / (n * (n - 1)))
        same_y = float((kyy.sum() - np.trace(kyy)) / (m * (m - 1)))
        norm_x = 2.0 / (n * (n - 1))
        norm_y = 2.0 / (m * (m - 1))
    cross = float(kxy.mean())
    value = same_x + same_y - 2.0 * cross
    terms = (value, same_x, same_y, cross)
    if not want_grad:
        return terms, None, None

    # d/dx_i of the same-set double sum: both orderings of each pair
    # contribute, the diagonal cancels itself, so the expression is the same
    # for both estimators up to normalization.
    gx = norm_x * (axx @ xs - xs * axx.sum(axis=1, keepdims=True))
    gx -= (2.0 / (n * m)) * (axy @ ys - xs * axy.sum(axis=1, keepdims=True))
    gy = norm_y * (ayy @ ys - ys * ayy.sum(axis=1, keepdims=True))
    gy -= (2.0 / (n * m)) * (axy.T @ xs - ys * axy.sum(axis=0)[:, None])
    return terms, gx, gy


def _estimate(xs, ys, spec: KernelSpec, estimator: str) -> MmdEstimate:
    xs, ys = _check_sets(xs, ys, estimator)
    (value, same_x, same_y, cross), _, _ = _mmd2_core(xs, ys, spec, estimator, want_grad=False)
    return MmdEstimate(value, same_x, same_y, cross)


def mmd2_biased(xs, ys, spec: KernelSpec) -> MmdEstimate:
    """Biased (V-statistic) MMD^2: full double sums including the diagonal."""
    return _estimate(xs, ys, spec, "biased")


def mmd2_unbiased(xs, ys, spec: KernelSpec) -> MmdEstimate:
    """Unbiased (U-statistic) MMD^2: same-set diagonals excluded. May be negative."""
    return _estimate(xs, ys, spec, "unbiased")


def _split_modalities(batch: FeatureSet) -> tuple[np.ndarray, np.ndarray]:
    vis = np.where(batch.modalities == VISIBLE)[0]
    th = np.where(batch.modalities == THERMAL)[0]
    if len(vis) == 0:
        raise ValueError("batch has no visible features")
    if len(th) == 0:
        raise ValueError("batch has no thermal features")
    return vis, th


def loss_mmd_marginal(batch: FeatureSet, spec: KernelSpec, estimator: str = "biased") -> LossValue:
    """MMD^2 between the batch's visible and thermal features, with gradients."""
    vis, th = _split_modalities(batch)
    xs, ys = _check_sets(batch.features[vis], batch.features[th], estimator)
    (value, _, _, _), gx, gy = _mmd2_core(xs, ys, spec, estimator, want_grad=True)
    grad = np.zeros_like(batch.features)
    grad[vis] = gx
    grad[th] = gy
    if estimator == "unbiased":
        value = max(0.0, value)
    return LossValue(value, grad)


def _per_class(batch: FeatureSet, spec: KernelSpec, rho: float | None, estimator: str):
    """Class-conditional engine shared by the plain and margin-gated losses.

    ``rho=None`` disables the gate. Classes are reduced in ascending identity
    order; a gated class contributes exactly zero value and gradient.
    """
    ids = np.unique(batch.identities)
    grad = np.zeros_like(batch.features)
    class_mmd2 = np.empty(len(ids))
    total = 0.0
    active = 0
    for i, c in enumerate(ids):
        vis = np.where((batch.identities == c) & (batch.modalities == VISIBLE))[0]
        th = np.where((batch.identities == c) & (batch.modalities == THERMAL))[0]
        if len(vis) == 0 or len(th) == 0:
            missing = "visible" if len(vis) == 0 else "thermal"
            raise ValueError(f"identity {c} has no {missing} features in the batch")
        xs, ys = _check_sets(batch.features[vis], batch.features[th], estimator)
        (value, _, _, _), gx, gy = _mmd2_core(xs, ys, spec, estimator, want_grad=True)
        class_mmd2[i] = value
        if rho is None or value - rho > 0:
            total += value
            grad[vis] += gx
            grad[th] += gy
            active += 1
    c_count = len(ids)
    total /= c_count
    grad /= c_count
    if estimator == "unbiased":
        total = max(0.0, total)
    return total, grad, active, ids, class_mmd2


def loss_mmd_id(batch: FeatureSet, spec: KernelSpec, estimator: str = "biased") -> ClassMmdResult:
    """Average per-identity MMD^2 between modalities, with gradients."""
    total, grad, _, ids, values = _per_class(batch, spec, None, estimator)
    return ClassMmdResult(total, grad, ids, values)


def loss_margin_mmd_id(
    batch: FeatureSet,
    spec: KernelSpec,
    margin: MarginConfig,
    estimator: str = "biased",
) -> MarginMmdResult:
    """Margin-gated class-conditional MMD loss.

    A class contributes its full MMD^2 while MMD^2 - rho > 0 and exactly
    zero (no gradient) otherwise; the loss is the class average of the
    surviving terms.
    """
    if margin.rho < 0:
        raise ValueError(f"margin rho must be >= 0, got {margin.rho}")
    total, grad, active, ids, values = _per_class(batch, spec, margin.rho, estimator)
    return MarginMmdResult(total, grad, active, ids, values)


__all__ = [
    "MmdEstimate",
    "MarginConfig",
    "LossValue",
    "ClassMmdResult",
    "MarginMmdResult",
    "mmd2_biased",
    "mmd2_unbiased",
    "loss_mmd_marginal",
    "loss_mmd_id",
    "loss_margin_mmd_id",
]
