"""Flat ``key = value`` run configuration.

One assignment per line, ``#`` starts a comment.  Values are parsed as int,
float, bool (``true``/``false``) or left as strings; comma-separated values
become lists.  ``rho``, ``lambda`` and ``T`` have no defaults and must be
stated explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .attacks import EVAL_EPSILON
from .neuron import LifParams
from .training import REGIMES, TrainConfig

REQUIRED = ("rho", "lambda", "T")


class ConfigError(ValueError):
    pass


def _parse_scalar(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if "," in value:
            out[key] = [_parse_scalar(v.strip()) for v in value.split(",") if v.strip()]
        else:
            out[key] = _parse_scalar(value)
    return out


@dataclass
class RunConfig:
    """Everything ``train`` needs, resolved from a config file."""

    rho: float
    lam: float
    T: int
    seed: int = 0
    u_th: float = 1.0
    chi: float = 0.5
    omega: float = 1.0
    epochs: int = 30
    batch_size: int = 64
    lr0: float = 0.1
    weight_decay: float = 5e-4
    regime: str = "at"
    neuron: str = "dlif"
    layer_sizes: list = field(default_factory=lambda: [784, 128])
    num_classes: int = 10
    init_gain: float = 1.0
    msmppd_normalize: bool = True
    train_dlif: bool = True
    dataset: str = "blobs"
    samples_per_class: int = 1000
    test_samples_per_class: int = 250
    blob_robust_dims: int = 8
    blob_robust_gap: float = 0.5
    blob_robust_std: float = 0.2
    blob_weak_gap: float = 0.02
    blob_weak_std: float = 0.05
    blob_background: float = 0.1
    idx_train_images: Optional[str] = None
    idx_train_labels: Optional[str] = None
    idx_test_images: Optional[str] = None
    idx_test_labels: Optional[str] = None
    idx_subset: Optional[int] = None
    checkpoint_every: int = 0
    eval_pgd_iters: int = 10
    eval_epsilon_over_255: float = 8.0
    eval_step_over_255: Optional[float] = None
    eval_samples: int = 500

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            rho=self.rho,
            chi=self.chi,
            omega=self.omega,
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr0=self.lr0,
            weight_decay=self.weight_decay,
            perturb_regime=self.regime,
            seed=self.seed,
            train_dlif=self.train_dlif,
            gaussian_sigma=EVAL_EPSILON,
            msmppd_normalize=self.msmppd_normalize,
        )

    def lif(self) -> LifParams:
        return LifParams(lam=self.lam, u_th=self.u_th)

    def metadata(self) -> dict:
        return {
            "seed": self.seed,
            "lambda": self.lam,
            "u_th": self.u_th,
            "T": self.T,
            "rho": self.rho,
            "chi": self.chi,
            "omega": self.omega,
        }

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["lambda"] = d.pop("lam")
        return d


def config_from_dict(raw: dict) -> RunConfig:
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    raw = dict(raw)
    raw["lam"] = raw.pop("lambda")
    known = set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    if isinstance(raw.get("layer_sizes"), int):
        raw["layer_sizes"] = [raw["layer_sizes"]]
    cfg = RunConfig(**raw)
    if cfg.regime not in REGIMES:
        raise ConfigError(f"regime must be one of {REGIMES}, got {cfg.regime!r}")
    if cfg.neuron not in ("lif", "dlif"):
        raise ConfigError(f"neuron must be lif or dlif, got {cfg.neuron!r}")
    if cfg.dataset not in ("blobs", "idx"):
        raise ConfigError(f"dataset must be blobs or idx, got {cfg.dataset!r}")
    try:
        cfg.lif()
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config not found: {path}")
    return config_from_dict(parse_config_text(path.read_text()))


def render_config(cfg: RunConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
