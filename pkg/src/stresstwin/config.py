"""Run configuration: one overridable home for every pipeline constant."""

import json
import os
from dataclasses import dataclass, field, fields

from .errors import ConfigInvalid

ENV_DATA_DIR = "STRESSTWIN_DATA_DIR"
ENV_OUT_DIR = "STRESSTWIN_OUT_DIR"


@dataclass
class RunConfig:
    data_dir: str = "."
    output_dir: str = "out"
    baseline_record: str = "118"
    window_s: float = 10.0
    stride_s: float = 5.0
    context_s: float = 60.0
    eps: float = 1e-6
    train_fraction: float = 0.7
    seed: int = 2025
    n_trees: int = 100
    mtry: int = 3
    min_samples_leaf: int = 2
    max_depth: int | None = None
    split_unit: str = "window"  # or "record" for leakage-safe splitting
    shap_on: str = "test"  # or "train" / "all"
    level_source: str = "predicted"  # or "rule" / "score"
    dwell_windows: int = 2
    tick_ms: int = 200
    chunk_s: float = 1.0
    sim_max_duration_s: float | None = None
    sim_latency_table: dict | None = None
    tachogram_segment: int = 256
    noise_segment: int = 8192
    detector_prominence_k: float = 4.0
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        positive = (
            "window_s",
            "stride_s",
            "context_s",
            "eps",
            "train_fraction",
            "n_trees",
            "mtry",
            "min_samples_leaf",
            "dwell_windows",
            "tick_ms",
            "chunk_s",
            "tachogram_segment",
            "noise_segment",
            "detector_prominence_k",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigInvalid(f"{name} must be positive")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigInvalid("train_fraction must be inside (0, 1)")
        if self.split_unit not in ("window", "record"):
            raise ConfigInvalid(f"split_unit {self.split_unit!r} unknown")
        if self.shap_on not in ("test", "train", "all"):
            raise ConfigInvalid(f"shap_on {self.shap_on!r} unknown")
        if self.level_source not in ("predicted", "rule", "score"):
            raise ConfigInvalid(f"level_source {self.level_source!r} unknown")


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional JSON file, env, and overrides."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if path is not None:
        with open(path) as fh:
            payload = json.load(fh)
        if not isinstance(payload, dict):
            raise ConfigInvalid("config file must hold a JSON object")
        for key, value in payload.items():
            if key in known:
                setattr(cfg, key, value)
            else:
                cfg.extra[key] = value
    if os.environ.get(ENV_DATA_DIR):
        cfg.data_dir = os.environ[ENV_DATA_DIR]
    if os.environ.get(ENV_OUT_DIR):
        cfg.output_dir = os.environ[ENV_OUT_DIR]
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise ConfigInvalid(f"unknown config key {key!r}")
        setattr(cfg, key, value)
    cfg.validate()
    return cfg
