"""Flat `key = value` run configuration.

Unknown keys are rejected so typos surface immediately.  Environment
variables are never consulted.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import DataFormatError
from .scenes import SceneSpec

SOURCE_CHOICES = ("none", "cooccurrence", "wup", "both")


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"config line {lineno}: expected `key = value`")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise DataFormatError(f"config line {lineno}: empty key or value")
        if key in out:
            raise DataFormatError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config_file(path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise DataFormatError(f"config file {p} not found")
    return parse_config_text(p.read_text(encoding="utf-8"))


def _convert(key: str, value: str, target_type):
    try:
        if target_type is bool:
            lowered = value.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return target_type(value)
    except ValueError:
        raise DataFormatError(
            f"config key {key!r}: cannot read {value!r} as {target_type.__name__}"
        ) from None


@dataclass
class RunConfig:
    """Training and ablation settings with the documented defaults."""

    beta: float = 0.3
    gamma: float = 0.15
    lam: float = 0.8
    lr: float = 1e-3
    lr_decay: float = 1e-4
    batch_size: int = 10
    iterations: int = 200
    seed: int = 0
    val_fraction: float = 0.2
    center_bias: bool = True
    channels: int = 32
    heads: int = 8
    n_priors: int = 16
    sources: str = "both"
    theta_cooccurrence: float | None = None
    theta_wup: float | None = None
    fixation_blur_sigma: float = 2.0
    data_dir: str | None = None
    graph_cooccurrence: str | None = None
    graph_wup: str | None = None
    ablate_seeds: list[int] = field(default_factory=lambda: [0, 1, 2])

    # config-file key -> (attribute, type); `lambda` is a keyword in Python
    _KEYS = {
        "beta": ("beta", float),
        "gamma": ("gamma", float),
        "lambda": ("lam", float),
        "lr": ("lr", float),
        "lr_decay": ("lr_decay", float),
        "batch_size": ("batch_size", int),
        "iterations": ("iterations", int),
        "seed": ("seed", int),
        "val_fraction": ("val_fraction", float),
        "center_bias": ("center_bias", bool),
        "channels": ("channels", int),
        "heads": ("heads", int),
        "n_priors": ("n_priors", int),
        "sources": ("sources", str),
        "theta_cooccurrence": ("theta_cooccurrence", float),
        "theta_wup": ("theta_wup", float),
        "fixation_blur_sigma": ("fixation_blur_sigma", float),
        "data_dir": ("data_dir", str),
        "graph_cooccurrence": ("graph_cooccurrence", str),
        "graph_wup": ("graph_wup", str),
        "ablate_seeds": ("ablate_seeds", None),
    }

    def __post_init__(self):
        if min(self.beta, self.gamma, self.lam) < 0:
            raise DataFormatError("loss weights must be non-negative")
        if self.lr <= 0 or self.lr_decay < 0:
            raise DataFormatError("learning rate must be positive, decay non-negative")
        if self.batch_size < 1 or self.iterations < 1:
            raise DataFormatError("batch size and iterations must be at least 1")
        if not (0.0 <= self.val_fraction < 1.0):
            raise DataFormatError("val_fraction must lie in [0, 1)")
        if self.seed < 0 or any(s < 0 for s in self.ablate_seeds):
            raise DataFormatError("seeds must be non-negative")
        if self.sources not in SOURCE_CHOICES:
            raise DataFormatError(f"sources must be one of {SOURCE_CHOICES}")
        if self.channels % self.heads:
            raise DataFormatError("heads must divide channels")
        if self.n_priors < 1:
            raise DataFormatError("n_priors must be at least 1")
        if not self.ablate_seeds:
            raise DataFormatError("ablate_seeds must name at least one seed")

    @classmethod
    def from_dict(cls, raw: dict[str, str]) -> "RunConfig":
        kwargs = {}
        for key, value in raw.items():
            if key not in cls._KEYS:
                raise DataFormatError(f"unknown config key {key!r}")
            attr, target_type = cls._KEYS[key]
            if key == "ablate_seeds":
                try:
                    kwargs[attr] = [int(v) for v in value.split(",") if v.strip()]
                except ValueError:
                    raise DataFormatError("ablate_seeds must be comma-separated "
                                          "integers") from None
            else:
                kwargs[attr] = _convert(key, value, target_type)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_dict(load_config_file(path))

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)

    def source_names(self) -> list[str]:
        if self.sources == "none":
            return []
        if self.sources == "both":
            return ["cooccurrence", "wup"]
        return [self.sources]


_SCENE_KEYS = {
    "width": int,
    "height": int,
    "min_objects": int,
    "max_objects": int,
    "fixations": int,
    "blur_sigma": float,
    "seed": int,
}


def scene_spec_from_dict(raw: dict[str, str]) -> SceneSpec:
    kwargs = {}
    for key, value in raw.items():
        if key not in _SCENE_KEYS:
            raise DataFormatError(f"unknown scene key {key!r}")
        attr = "n_fixations" if key == "fixations" else key
        kwargs[attr] = _convert(key, value, _SCENE_KEYS[key])
    return SceneSpec(**kwargs)


def scene_spec_from_file(path) -> SceneSpec:
    return scene_spec_from_dict(load_config_file(path))
