"""Minimal trainable two-stream encoder with exact reverse-mode gradients.

Architecture, applied per local descriptor: a modality-specific dense stack
(independent weights per modality), a shared dense stack, ReLU after every
dense layer, then generalized-mean (GeM) pooling across each sample's H
descriptor outputs, batch normalization, and a linear identity classifier.
Pooled (pre-BN) features feed the metric losses and retrieval; logits feed
the identity loss.

The forward pass records a tape; ``backward`` replays it to produce exact
gradients for every parameter, including BN batch statistics in training
mode and (optionally) the GeM power. Training updates use momentum SGD with
linear warmup and two step decays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import THERMAL, VISIBLE

CHECKPOINT_MAGIC = "xreid-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EncoderShape:
    """Static architecture description (widths, head sizes, BN constants)."""

    descriptor_dim: int
    num_classes: int
    specific_widths: tuple[int, ...] = (32, 64)
    shared_widths: tuple[int, ...] = (64, 64)
    gem_p: float = 3.0
    gem_p_learnable: bool = False
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "specific_widths", tuple(int(w) for w in self.specific_widths))
        object.__setattr__(self, "shared_widths", tuple(int(w) for w in self.shared_widths))
        if self.gem_p < 1:
            raise ValueError(f"gem_p must be >= 1, got {self.gem_p}")

    @property
    def embedding_dim(self) -> int:
        for widths in (self.shared_widths, self.specific_widths):
            if widths:
                return widths[-1]
        return self.descriptor_dim


@dataclass
class EncoderParams:
    """All weights plus BN running statistics (stored but not trained)."""

    shape: EncoderShape
    specific_visible: list  # [(w, b)] per layer, identical shapes to thermal
    specific_thermal: list
    shared: list
    gem_p: np.ndarray       # 0-d array so it can be updated like any parameter
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray
    cls_w: np.ndarray
    cls_b: np.ndarray

    def named_arrays(self):
        """(name, array) for every stored array, in canonical order."""
        for branch, layers in (
            ("specific_visible", self.specific_visible),
            ("specific_thermal", self.specific_thermal),
            ("shared", self.shared),
        ):
            for i, (w, b) in enumerate(layers):
                yield f"{branch}.{i}.w", w
                yield f"{branch}.{i}.b", b
        yield "gem_p", self.gem_p
        yield "bn.gamma", self.bn_gamma
        yield "bn.beta", self.bn_beta
        yield "bn.running_mean", self.bn_running_mean
        yield "bn.running_var", self.bn_running_var
        yield "classifier.w", self.cls_w
        yield "classifier.b", self.cls_b

    def trainable_names(self) -> list[str]:
        names = [n for n, _ in self.named_arrays() if not n.startswith("bn.running")]
        if not self.shape.gem_p_learnable:
            names.remove("gem_p")
        return names

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            shape=self.shape,
            specific_visible=[(w.copy(), b.copy()) for w, b in self.specific_visible],
            specific_thermal=[(w.copy(), b.copy()) for w, b in self.specific_thermal],
            shared=[(w.copy(), b.copy()) for w, b in self.shared],
            gem_p=self.gem_p.copy(),
            bn_gamma=self.bn_gamma.copy(),
            bn_beta=self.bn_beta.copy(),
            bn_running_mean=self.bn_running_mean.copy(),
            bn_running_var=self.bn_running_var.copy(),
            cls_w=self.cls_w.copy(),
            cls_b=self.cls_b.copy(),
        )


def _init_stack(rng, in_dim: int, widths: tuple[int, ...]):
    layers = []
    for out_dim in widths:
        w = rng.standard_normal((in_dim, out_dim)) * np.sqrt(2.0 / in_dim)
        layers.append((w, np.zeros(out_dim)))
        in_dim = out_dim
    return layers, in_dim


def init_params(shape: EncoderShape, rng: np.random.Generator) -> EncoderParams:
    """He-initialized weights, zero biases, unit BN scale.

    The two modality-specific stacks start as copies of one draw (mirroring
    a shared pretrained backbone) and only diverge through training; with
    independent draws the initial cross-modal gap is pure weight noise and
    the metric losses fire on every pair from step one.
    """
    specific_visible, mid = _init_stack(rng, shape.descriptor_dim, shape.specific_widths)
    specific_thermal = [(w.copy(), b.copy()) for w, b in specific_visible]
    shared, emb = _init_stack(rng, mid, shape.shared_widths)
    cls_w = rng.standard_normal((emb, shape.num_classes)) * np.sqrt(1.0 / emb)
    return EncoderParams(
        shape=shape,
        specific_visible=specific_visible,
        specific_thermal=specific_thermal,
        shared=shared,
        gem_p=np.asarray(float(shape.gem_p)),
        bn_gamma=np.ones(emb),
        bn_beta=np.zeros(emb),
        bn_running_mean=np.zeros(emb),
        bn_running_var=np.ones(emb),
        cls_w=cls_w,
        cls_b=np.zeros(shape.num_classes),
    )


def gem_pool(channel_values, p: float) -> float:
    """Generalized power mean ((1/H) sum x^p)^(1/p) of nonnegative values."""
    x = np.asarray(channel_values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("gem_pool needs at least one value")
    if np.any(x < 0):
        raise ValueError(f"gem_pool inputs must be nonnegative, got min {x.min()}")
    if p < 1:
        raise ValueError(f"gem power must be >= 1, got {p}")
    return float(np.mean(x ** p) ** (1.0 / p))


def _run_stack(layers, x, record):
    for w, b in layers:
        pre = x @ w + b
        record.append((x, pre))
        x = np.maximum(pre, 0.0)
    return x


@dataclass
class Tape:
    """Everything the matching backward pass needs."""

    params: EncoderParams
    train: bool
    n: int
    h: int
    vis_rows: np.ndarray
    th_rows: np.ndarray
    specific_visible: list = field(default_factory=list)
    specific_thermal: list = field(default_factory=list)
    shared: list = field(default_factory=list)
    gem_in: np.ndarray | None = None     # (N, H, D) post-ReLU descriptor outputs
    gem_mean: np.ndarray | None = None   # (N, D) mean of x^p
    pooled: np.ndarray | None = None
    bn_mu: np.ndarray | None = None
    bn_var: np.ndarray | None = None
    bn_ivar: np.ndarray | None = None
    bn_xhat: np.ndarray | None = None
    bn_out: np.ndarray | None = None
    logits: np.ndarray | None = None


@dataclass(frozen=True)
class Forward:
    pooled: np.ndarray
    bn_features: np.ndarray
    logits: np.ndarray
    tape: Tape


def forward(
    params: EncoderParams,
    descriptors,
    modalities,
    train: bool = True,
) -> Forward:
    """Run the two-stream encoder over a batch of descriptor grids.

    In training mode BN uses batch statistics and updates the running ones in
    place; in eval mode it uses the stored running statistics and the pass is
    exactly per-sample.
    """
    descriptors = np.asarray(descriptors, dtype=np.float64)
    modalities = np.asarray(modalities)
    n, h, d_in = descriptors.shape
    if d_in != params.shape.descriptor_dim:
        raise ValueError(
            f"descriptor dim {d_in} does not match encoder input dim {params.shape.descriptor_dim}"
        )

    flat = descriptors.reshape(n * h, d_in)
    flat_modality = np.repeat(modalities, h)
    vis_rows = np.where(flat_modality == VISIBLE)[0]
    th_rows = np.where(flat_modality == THERMAL)[0]
    tape = Tape(params=params, train=train, n=n, h=h, vis_rows=vis_rows, th_rows=th_rows)

    mid_dim = params.shape.specific_widths[-1] if params.shape.specific_widths else d_in
    mid = np.empty((n * h, mid_dim))
    mid[vis_rows] = _run_stack(params.specific_visible, flat[vis_rows], tape.specific_visible)
    mid[th_rows] = _run_stack(params.specific_thermal, flat[th_rows], tape.specific_thermal)
    out = _run_stack(params.shared, mid, tape.shared)

    emb = out.shape[1]
    gem_in = out.reshape(n, h, emb)
    p = float(params.gem_p)
    gem_mean = np.mean(gem_in ** p, axis=1)
    pooled = gem_mean ** (1.0 / p)

    eps = params.shape.bn_eps
    if train:
        mu = pooled.mean(axis=0)
        var = pooled.var(axis=0)
        mom = params.shape.bn_momentum
        params.bn_running_mean *= 1.0 - mom
        params.bn_running_mean += mom * mu
        params.bn_running_var *= 1.0 - mom
        params.bn_running_var += mom * var
    else:
        mu = params.bn_running_mean
        var = params.bn_running_var
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = (pooled - mu) * ivar
    bn_out = params.bn_gamma * xhat + params.bn_beta
    logits = bn_out @ params.cls_w + params.cls_b

    tape.gem_in = gem_in
    tape.gem_mean = gem_mean
    tape.pooled = pooled
    tape.bn_mu = mu
    tape.bn_var = var
    tape.bn_ivar = ivar
    tape.bn_xhat = xhat
    tape.bn_out = bn_out
    tape.logits = logits
    return Forward(pooled=pooled, bn_features=bn_out, logits=logits, tape=tape)


def _stack_backward(layers, record, d_out, grads, prefix):
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        x, pre = record[i]
        d_pre = d_out * (pre > 0)
        grads[f"{prefix}.{i}.w"] = x.T @ d_pre
        grads[f"{prefix}.{i}.b"] = d_pre.sum(axis=0)
        d_out = d_pre @ w.T
    return d_out


def backward(tape: Tape, grad_pooled, grad_logits) -> dict:
    """Exact gradients of (grad_pooled . pooled + grad_logits . logits).

    Returns a name -> array dict matching the trainable parameters. BN batch
    statistics are differentiated through in training mode.
    """
    params = tape.params
    grad_pooled = np.asarray(grad_pooled, dtype=np.float64)
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    if grad_pooled.shape != tape.pooled.shape:
        raise ValueError(
            f"grad_pooled shape {grad_pooled.shape} does not match tape pooled {tape.pooled.shape}"
        )
    if grad_logits.shape != tape.logits.shape:
        raise ValueError(
            f"grad_logits shape {grad_logits.shape} does not match tape logits {tape.logits.shape}"
        )
    grads: dict[str, np.ndarray] = {}
    n, h = tape.n, tape.h

    # classifier
    grads["classifier.w"] = tape.bn_out.T @ grad_logits
    grads["classifier.b"] = grad_logits.sum(axis=0)
    d_bn_out = grad_logits @ params.cls_w.T

    # batch norm
    grads["bn.gamma"] = (d_bn_out * tape.bn_xhat).sum(axis=0)
    grads["bn.beta"] = d_bn_out.sum(axis=0)
    d_xhat = d_bn_out * params.bn_gamma
    if tape.train:
        m = float(n)
        d_pooled_bn = (tape.bn_ivar / m) * (
            m * d_xhat - d_xhat.sum(axis=0) - tape.bn_xhat * (d_xhat * tape.bn_xhat).sum(axis=0)
        )
    else:
        d_pooled_bn = d_xhat * tape.bn_ivar
    d_pooled = grad_pooled + d_pooled_bn

    # GeM: pooled = mean(x^p)^(1/p) per channel over H descriptors
    p = float(params.gem_p)
    m_pos = tape.gem_mean > 0
    safe_mean = np.where(m_pos, tape.gem_mean, 1.0)
    outer = np.where(m_pos, safe_mean ** (1.0 / p - 1.0), 0.0)
    d_gem_in = (d_pooled * outer / h)[:, None, :] * tape.gem_in ** (p - 1.0)
    if params.shape.gem_p_learnable:
        with np.errstate(divide="ignore", invalid="ignore"):
            log_m = np.where(m_pos, np.log(np.where(m_pos, tape.gem_mean, 1.0)), 0.0)
            x_logx = np.where(tape.gem_in > 0, tape.gem_in ** p * np.log(np.where(tape.gem_in > 0, tape.gem_in, 1.0)), 0.0)
        mean_xlogx = x_logx.mean(axis=1)
        d_p_per = np.where(
            m_pos,
            tape.pooled * (-log_m / p**2 + mean_xlogx / (p * np.where(m_pos, tape.gem_mean, 1.0))),
            0.0,
        )
        grads["gem_p"] = np.asarray((d_pooled * d_p_per).sum())

    d_shared_out = d_gem_in.reshape(n * h, -1)
    d_mid = _stack_backward(params.shared, tape.shared, d_shared_out, grads, "shared")
    _stack_backward(
        params.specific_visible, tape.specific_visible, d_mid[tape.vis_rows], grads, "specific_visible"
    )
    _stack_backward(
        params.specific_thermal, tape.specific_thermal, d_mid[tape.th_rows], grads, "specific_thermal"
    )
    return grads


@dataclass(frozen=True)
class SgdHyper:
    """Momentum SGD with warmup and two step decays, as one schedule."""

    base_lr: float
    momentum: float = 0.9
    weight_decay: float = 5e-4
    warmup_epochs: int = 2
    total_epochs: int = 20


def lr_factor(epoch: int, hyper: SgdHyper) -> float:
    """Multiplier on base_lr: linear warmup from 0.1, then x0.1 at 60% and 90%."""
    if hyper.warmup_epochs > 0 and epoch < hyper.warmup_epochs:
        return 0.1 + 0.9 * epoch / hyper.warmup_epochs
    factor = 1.0
    first = max(int(0.6 * hyper.total_epochs), hyper.warmup_epochs)
    second = max(int(0.9 * hyper.total_epochs), hyper.warmup_epochs)
    if epoch >= first:
        factor *= 0.1
    if epoch >= second:
        factor *= 0.1
    return factor


class SgdState:
    """Per-parameter momentum buffers."""

    def __init__(self):
        self.velocity: dict[str, np.ndarray] = {}


def sgd_step(
    params: EncoderParams,
    grads: dict,
    state: SgdState,
    hyper: SgdHyper,
    epoch: int = 0,
) -> None:
    """One momentum-SGD update in place.

    Weight decay is added to the raw gradient for every parameter except the
    BN scale/shift and the GeM power; the GeM power is clamped back to >= 1
    after the update. Non-finite gradients abort the step.
    """
    lr = hyper.base_lr * lr_factor(epoch, hyper)
    arrays = dict(params.named_arrays())
    for name in params.trainable_names():
        if name not in grads:
            raise ValueError(f"missing gradient for parameter {name!r}")
        g = np.asarray(grads[name], dtype=np.float64)
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.isfinite(g).sum())
            raise FloatingPointError(
                f"non-finite gradient in {name!r}: {bad} of {np.size(g)} entries"
            )
        arr = arrays[name]
        if g.shape != arr.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name!r} shape {arr.shape}")
        decay = 0.0 if name in ("bn.gamma", "bn.beta", "gem_p") else hyper.weight_decay
        step = g + decay * arr
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(arr)
            state.velocity[name] = v
        v *= hyper.momentum
        v += step
        arr -= lr * v
    if params.shape.gem_p_learnable and params.gem_p < 1.0:
        params.gem_p[...] = 1.0


def save_checkpoint(params: EncoderParams, path) -> None:
    """Write parameters as a self-describing binary container.

    Layout: one UTF-8 JSON header line (magic, version, shape metadata, and
    an ordered array table of name/shape/dtype), a newline, then the raw
    little-endian row-major array blobs concatenated in table order.
    """
    entries = list(params.named_arrays())
    header = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "shape": {
            "descriptor_dim": params.shape.descriptor_dim,
            "num_classes": params.shape.num_classes,
            "specific_widths": list(params.shape.specific_widths),
            "shared_widths": list(params.shape.shared_widths),
            "gem_p": params.shape.gem_p,
            "gem_p_learnable": params.shape.gem_p_learnable,
            "bn_eps": params.shape.bn_eps,
            "bn_momentum": params.shape.bn_momentum,
        },
        "arrays": [
            {"name": name, "shape": list(arr.shape), "dtype": "<f8"} for name, arr in entries
        ],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path, expected_shape: EncoderShape | None = None) -> EncoderParams:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises on magic/version mismatch and on any shape disagreement with
    ``expected_shape`` when one is given.
    """
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("magic") != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not an encoder checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        s = header["shape"]
        shape = EncoderShape(
            descriptor_dim=s["descriptor_dim"],
            num_classes=s["num_classes"],
            specific_widths=tuple(s["specific_widths"]),
            shared_widths=tuple(s["shared_widths"]),
            gem_p=s["gem_p"],
            gem_p_learnable=s["gem_p_learnable"],
            bn_eps=s["bn_eps"],
            bn_momentum=s["bn_momentum"],
        )
        if expected_shape is not None and shape != expected_shape:
            raise ValueError(
                f"{path}: checkpoint shape {shape} does not match expected {expected_shape}"
            )
        arrays = {}
        for entry in header["arrays"]:
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"{path}: truncated blob for {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(entry["shape"]).copy()

    def stack(prefix):
        layers = []
        i = 0
        while f"{prefix}.{i}.w" in arrays:
            layers.append((arrays[f"{prefix}.{i}.w"], arrays[f"{prefix}.{i}.b"]))
            i += 1
        return layers

    params = EncoderParams(
        shape=shape,
        specific_visible=stack("specific_visible"),
        specific_thermal=stack("specific_thermal"),
        shared=stack("shared"),
        gem_p=arrays["gem_p"].reshape(()),
        bn_gamma=arrays["bn.gamma"],
        bn_beta=arrays["bn.beta"],
        bn_running_mean=arrays["bn.running_mean"],
        bn_running_var=arrays["bn.running_var"],
        cls_w=arrays["classifier.w"],
        cls_b=arrays["classifier.b"],
    )
    expected_names = [n for n, _ in params.named_arrays()]
    if [e["name"] for e in header["arrays"]] != expected_names:
        raise ValueError(f"{path}: array table does not match the declared architecture")
    return params


__all__ = [
    "EncoderShape",
    "EncoderParams",
    "Forward",
    "Tape",
    "SgdHyper",
    "SgdState",
    "init_params",
    "forward",
    "backward",
    "gem_pool",
    "lr_factor",
    "sgd_step",
    "save_checkpoint",
    "load_checkpoint",
]
