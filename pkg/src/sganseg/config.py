"""``key = value`` run configuration files."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    threads: int = 1
    # networks and training
    preset: str = "desk"
    epochs: int = 5
    batch: int = 16
    lr: float = 1e-4
    beta1: float = 0.5
    w_vgg: float = 1e-5
    w_adv: float = 1e-3
    vgg_reduce: str = "sum"
    cascade: bool = False
    # degradation ranges
    sigma_min: float = 0.0
    sigma_max: float = 50.0
    s_min: float = 1.0
    s_max: float = 4.0
    blur_min: float = 0.0
    blur_max: float = 3.0
    kappa_min: float = 1.0
    kappa_max: float = 3.0
    # phantoms
    phantom_size: int = 96
    contrast_min: float = 0.3
    contrast_max: float = 0.6
    noise_min: float = 0.0
    noise_max: float = 12.0
    texture_sigma: float = 0.03
    # segmentation
    fg_dilation: float = 0.1
    inner_scale: float = 1.0
    outer_scale: float = 1.5
    gmm_k: int = 5
    gmm_iters: int = 10
    gamma: float = 50.0
    max_iters: int = 5

    def updated(self, **overrides) -> "RunConfig":
        """Copy with non-None overrides applied and validated."""
        return parse_pairs({k: v for k, v in overrides.items() if v is not None}, self)

    def dumps(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(name: str, kind, value):
    if not isinstance(value, str):
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, kind):
            return value
        raise ConfigError(f"{name}: expected {kind.__name__}, got {value!r}")
    text = value.strip()
    try:
        if kind is bool:
            if text.lower() in ("true", "yes", "1"):
                return True
            if text.lower() in ("false", "no", "0"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot read {text!r} as {kind.__name__}") from None


def parse_pairs(values: dict, base: RunConfig = RunConfig()) -> RunConfig:
    kinds = {f.name: type(getattr(base, f.name)) for f in fields(base)}
    unknown = sorted(set(values) - set(kinds))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = replace(base, **{k: _coerce(k, kinds[k], v) for k, v in values.items()})
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    checks = [
        (cfg.epochs >= 0, "epochs must be >= 0"),
        (cfg.batch >= 1, "batch must be >= 1"),
        (cfg.lr > 0, "lr must be > 0"),
        (0 <= cfg.beta1 < 1, "beta1 must be in [0, 1)"),
        (cfg.vgg_reduce in ("sum", "mean"), "vgg_reduce must be sum or mean"),
        (0 <= cfg.sigma_min < cfg.sigma_max <= 50, "need 0 <= sigma_min < sigma_max <= 50"),
        (1 <= cfg.s_min <= cfg.s_max <= 4, "need 1 <= s_min <= s_max <= 4"),
        (0 <= cfg.blur_min < cfg.blur_max <= 3, "need 0 <= blur_min < blur_max <= 3"),
        (1 <= cfg.kappa_min <= cfg.kappa_max <= 3, "need 1 <= kappa_min <= kappa_max <= 3"),
        (0 <= cfg.contrast_min <= cfg.contrast_max <= 1, "need 0 <= contrast_min <= contrast_max <= 1"),
        (0 <= cfg.noise_min <= cfg.noise_max <= 50, "need 0 <= noise_min <= noise_max <= 50"),
        (cfg.phantom_size >= 32, "phantom_size must be >= 32"),
        (cfg.gmm_k >= 1 and cfg.max_iters >= 1 and cfg.gmm_iters >= 1, "GrabCut iteration counts must be >= 1"),
        (cfg.gamma >= 0, "gamma must be >= 0"),
        (0 < cfg.inner_scale < cfg.outer_scale, "need 0 < inner_scale < outer_scale"),
        (cfg.threads >= 1, "threads must be >= 1"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


def parse_config(text: str, base: RunConfig = RunConfig()) -> RunConfig:
    values = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {n}: expected 'key = value', got {raw.strip()!r}")
        values[key.strip()] = value
    return parse_pairs(values, base)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())
