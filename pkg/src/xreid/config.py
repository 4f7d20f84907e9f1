"""Plain-text experiment configuration: ``section.key = value`` lines.

One flat schema covers every module knob; unknown keys are hard errors so a
typo can never silently fall back to a default. A config object serializes
back to the same format with every key resolved, and parsing that resolved
text reproduces the object exactly, which is what makes re-runs bit-for-bit
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

from .data import BatchSpec, SyntheticSpec
from .encoder import EncoderShape, SgdHyper
from .kernels import KernelSpec
from .losses import MMD_VARIANTS, HcTriConfig, LossWeights
from .mmd import MarginConfig


def _parse_bool(s: str) -> bool:
    if s == "true":
        return True
    if s == "false":
        return False
    raise ValueError(f"expected 'true' or 'false', got {s!r}")


def _parse_float_list(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _parse_int_list(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _parse_bandwidth(s: str):
    if s == "median":
        return None
    return float(s)


def _parse_choice(*choices):
    def parse(s: str) -> str:
        if s not in choices:
            raise ValueError(f"expected one of {choices}, got {s!r}")
        return s

    return parse


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "median"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# key -> (parser, default). Order defines the canonical resolved layout.
# The experiment-level kernel mixture is deliberately narrower than the
# library default: with median-heuristic bandwidths, wide scales cap the
# per-class MMD^2 well below the default margin rho and the gate would never
# open (see the margin loss docs).
SCHEMA: dict[str, tuple] = {
    "seed": (int, 0),
    "output.dir": (str, "runs/default"),
    "data.num_identities": (int, 50),
    "data.samples_per_identity": (int, 20),
    "data.descriptor_count": (int, 4),
    "data.descriptor_dim": (int, 8),
    "data.identity_spread": (float, 1.0),
    "data.within_noise": (float, 0.08),
    "data.thermal_noise_scale": (float, 2.0),
    "data.modality_shift": (float, 4.0),
    "data.per_identity_shift_rotation": (_parse_bool, True),
    "batch.p": (int, 4),
    "batch.k": (int, 4),
    "kernel.sigma_squared": (_parse_bandwidth, None),
    "kernel.mixture_scales": (_parse_float_list, (0.0625, 0.125, 0.25, 0.5)),
    "mmd.estimator": (_parse_choice("biased", "unbiased"), "biased"),
    "mmd.variant": (_parse_choice(*MMD_VARIANTS), "margin_id"),
    "mmd.margin_rho": (float, 1.4),
    "hctri.margin_rho1": (float, 0.3),
    "loss.lambda_id": (float, 1.0),
    "loss.lambda_margin_mmd": (float, 0.25),
    "loss.lambda_hctri": (float, 2.0),
    "encoder.specific_widths": (_parse_int_list, (32, 64)),
    "encoder.shared_widths": (_parse_int_list, (64, 64)),
    "encoder.gem_p": (float, 3.0),
    "encoder.gem_p_learnable": (_parse_bool, False),
    "optim.base_lr": (float, 0.0005),
    "optim.momentum": (float, 0.9),
    "optim.weight_decay": (float, 0.0005),
    "optim.warmup_epochs": (int, 3),
    "train.epochs": (int, 60),
    "eval.trials": (int, 10),
    "eval.query_modality": (_parse_choice("thermal", "visible"), "thermal"),
    "eval.ranking": (_parse_choice("cosine", "euclidean"), "cosine"),
    "eval.features": (_parse_choice("pooled", "bn"), "pooled"),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    values: dict

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        return cls({key: default for key, (_, default) in SCHEMA.items()})

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        cfg = cls.defaults()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            cfg.set(key, value, where=f"{source}:{lineno}")
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read(), source=str(path))

    def set(self, key: str, value: str, where: str = "override") -> None:
        if key not in SCHEMA:
            raise ConfigError(f"{where}: unknown config key {key!r}")
        parser, _ = SCHEMA[key]
        try:
            self.values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from exc

    def __getitem__(self, key: str):
        return self.values[key]

    def to_text(self) -> str:
        lines = [f"{key} = {_fmt(self.values[key])}" for key in SCHEMA]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    # --- typed views onto the module configs ---

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def output_dir(self) -> str:
        return self.values["output.dir"]

    def synthetic_spec(self) -> SyntheticSpec:
        v = self.values
        return SyntheticSpec(
            num_identities=v["data.num_identities"],
            samples_per_identity_per_modality=v["data.samples_per_identity"],
            descriptor_count=v["data.descriptor_count"],
            descriptor_dim=v["data.descriptor_dim"],
            identity_spread=v["data.identity_spread"],
            within_noise=v["data.within_noise"],
            thermal_noise_scale=v["data.thermal_noise_scale"],
            modality_shift=v["data.modality_shift"],
            per_identity_shift_rotation=v["data.per_identity_shift_rotation"],
            seed=v["seed"],
        )

    def batch_spec(self) -> BatchSpec:
        return BatchSpec(p=self.values["batch.p"], k=self.values["batch.k"])

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(
            sigma_squared=self.values["kernel.sigma_squared"],
            mixture_scales=self.values["kernel.mixture_scales"],
        )

    def margin(self) -> MarginConfig:
        return MarginConfig(rho=self.values["mmd.margin_rho"])

    def hctri(self) -> HcTriConfig:
        return HcTriConfig(margin_rho1=self.values["hctri.margin_rho1"])

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            lambda_id=self.values["loss.lambda_id"],
            lambda_margin_mmd=self.values["loss.lambda_margin_mmd"],
            lambda_hctri=self.values["loss.lambda_hctri"],
        )

    def encoder_shape(self, num_classes: int) -> EncoderShape:
        v = self.values
        return EncoderShape(
            descriptor_dim=v["data.descriptor_dim"],
            num_classes=num_classes,
            specific_widths=v["encoder.specific_widths"],
            shared_widths=v["encoder.shared_widths"],
            gem_p=v["encoder.gem_p"],
            gem_p_learnable=v["encoder.gem_p_learnable"],
        )

    def sgd_hyper(self) -> SgdHyper:
        v = self.values
        return SgdHyper(
            base_lr=v["optim.base_lr"],
            momentum=v["optim.momentum"],
            weight_decay=v["optim.weight_decay"],
            warmup_epochs=v["optim.warmup_epochs"],
            total_epochs=v["train.epochs"],
        )


__all__ = ["SCHEMA", "ConfigError", "ExperimentConfig"]
