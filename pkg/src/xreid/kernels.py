"""RBF (Gaussian) kernels, Gram matrices, and bandwidth selection.

Everything downstream (the MMD estimators and losses) is built on the single
kernel k(x, y) = exp(-||x - y||^2 / (2 sigma^2)), optionally averaged over a
mixture of bandwidth scales with uniform weights. The feature map is never
materialized; only kernel values are.

Bandwidth is either fixed or chosen by the median heuristic (median of all
pairwise squared distances over the data at hand). The heuristic is treated
as a constant by every gradient computation in this library: no gradient
flows through bandwidth selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Default mixture scales: five kernels spanning two octaves either side of
#: the base bandwidth, a common multi-kernel convention.
DEFAULT_MIXTURE_SCALES = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class KernelSpec:
    """Bandwidth strategy and mixture definition for RBF kernels.

    ``sigma_squared=None`` selects the median heuristic; a positive float
    fixes the base bandwidth. ``mixture_scales`` multiply the base bandwidth,
    with uniform mixture weights; ``(1.0,)`` reduces to a single kernel.
    """

    sigma_squared: float | None = None
    mixture_scales: tuple[float, ...] = DEFAULT_MIXTURE_SCALES

    def __post_init__(self):
        if self.sigma_squared is not None and not self.sigma_squared > 0:
            raise ValueError(f"fixed sigma_squared must be > 0, got {self.sigma_squared}")
        scales = tuple(float(s) for s in self.mixture_scales)
        if len(scales) == 0:
            raise ValueError("mixture_scales must be nonempty")
        if any(s <= 0 for s in scales):
            raise ValueError(f"mixture_scales must all be > 0, got {scales}")
        object.__setattr__(self, "mixture_scales", scales)

    @property
    def is_median_heuristic(self) -> bool:
        return self.sigma_squared is None

    def bandwidths(self, base: float) -> np.ndarray:
        """Per-scale bandwidths sigma_s^2 = scale_s * base."""
        return np.asarray(self.mixture_scales) * base


@dataclass(frozen=True)
class GramMatrix:
    """Materialized pairwise kernel values between two sets of vectors."""

    values: np.ndarray

    @property
    def row_count(self) -> int:
        return self.values.shape[0]

    @property
    def col_count(self) -> int:
        return self.values.shape[1]


def _as_matrix(xs, name: str) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs[None, :]
    if xs.ndim != 2:
        raise ValueError(f"{name} must be a vector or an (N, D) matrix, got shape {xs.shape}")
    if xs.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    return xs


def squared_distances(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances between rows, clipped at 0."""
    xx = np.sum(xs * xs, axis=1)[:, None]
    yy = np.sum(ys * ys, axis=1)[None, :]
    d2 = xx + yy - 2.0 * xs @ ys.T
    return np.maximum(d2, 0.0)


def rbf_kernel(x, y, sigma_squared: float) -> float:
    """exp(-||x - y||^2 / (2 sigma^2)) for a single pair of vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: x has {x.shape[0]}, y has {y.shape[0]}")
    if not sigma_squared > 0:
        raise ValueError(f"sigma_squared must be > 0, got {sigma_squared}")
    d = x - y
    return float(np.exp(-np.dot(d, d) / (2.0 * sigma_squared)))


def median_heuristic_bandwidth(features) -> float:
    """Median of all N(N-1)/2 pairwise squared distances over the rows.

    Returns 1.0 when the median is 0 (all points identical) so that a
    collapsed batch never produces a degenerate bandwidth.
    """
    xs = _as_matrix(getattr(features, "features", features), "features")
    n = xs.shape[0]
    if n < 2:
        raise ValueError(f"median heuristic needs at least 2 vectors, got {n}")
    d2 = squared_distances(xs, xs)
    pairs = d2[np.triu_indices(n, k=1)]
    med = float(np.median(pairs))
    return med if med > 0 else 1.0


def resolve_bandwidth(spec: KernelSpec, xs: np.ndarray, ys: np.ndarray | None = None) -> float:
    """Base bandwidth for this call: the fixed value, or the median heuristic
    over the union of the inputs."""
    if not spec.is_median_heuristic:
        return float(spec.sigma_squared)
    union = xs if ys is None else np.vstack([xs, ys])
    return median_heuristic_bandwidth(union)


def mixture_kernel_matrix(d2: np.ndarray, bandwidths: np.ndarray) -> np.ndarray:
    """Uniform mixture of RBF kernels over precomputed squared distances."""
    out = np.zeros_like(d2)
    for s2 in bandwidths:
        out += np.exp(-d2 / (2.0 * s2))
    return out / len(bandwidths)


def gram(xs, ys, spec: KernelSpec) -> GramMatrix:
    """Gram matrix of the kernel mixture between two sets of vectors.

    Under the median heuristic the base bandwidth is computed once from the
    union of ``xs`` and ``ys`` for this call.
    """
    xs = _as_matrix(xs, "xs")
    ys = _as_matrix(ys, "ys")
    if xs.shape[1] != ys.shape[1]:
        raise ValueError(f"dimension mismatch: xs has {xs.shape[1]}, ys has {ys.shape[1]}")
    base = resolve_bandwidth(spec, xs, ys)
    d2 = squared_distances(xs, ys)
    return GramMatrix(mixture_kernel_matrix(d2, spec.bandwidths(base)))


__all__ = [
    "DEFAULT_MIXTURE_SCALES",
    "KernelSpec",
    "GramMatrix",
    "rbf_kernel",
    "median_heuristic_bandwidth",
    "resolve_bandwidth",
    "squared_distances",
    "mixture_kernel_matrix",
    "gram",
]
