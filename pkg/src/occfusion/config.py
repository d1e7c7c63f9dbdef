"""Pipeline configuration: defaults < key=value file < command-line flags."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

from occfusion.evaluation import DEFAULT_CUTOFF_M, DEFAULT_IOU_THRESHOLD

DEFAULT_GROUND_HEIGHT = -1.73


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    calib: Optional[Path] = None
    ground_height: float = DEFAULT_GROUND_HEIGHT
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    cutoff_m: float = DEFAULT_CUTOFF_M
    workers: int = 1
    output: Optional[Path] = None
    ap_method: str = "all_points"

    def __post_init__(self):
        if not 0 < self.iou_threshold <= 1:
            raise ConfigError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if not self.cutoff_m > 0:
            raise ConfigError(f"cutoff_m must be positive, got {self.cutoff_m}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.ap_method not in ("all_points", "11_point"):
            raise ConfigError(f"unknown ap_method {self.ap_method!r}")

    def updated(self, **overrides) -> "PipelineConfig":
        """Apply overrides, ignoring keys whose value is None."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


_CASTS = {
    "calib": Path,
    "ground_height": float,
    "iou_threshold": float,
    "cutoff_m": float,
    "workers": int,
    "output": Path,
    "ap_method": str,
}


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CASTS:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        try:
            values[key] = _CASTS[key](value)
        except ValueError:
            raise ConfigError(f"line {n}: bad value {value!r} for {key}") from None
    return values


def load_config(path=None, **flags) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        cfg = cfg.updated(**parse_config(Path(path).read_text(encoding="utf-8")))
    known = {f.name for f in fields(PipelineConfig)}
    return cfg.updated(**{k: v for k, v in flags.items() if k in known})
