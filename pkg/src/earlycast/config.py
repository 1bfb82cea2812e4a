"""Experiment configuration: presets, INI files, CLI overrides.

Precedence, lowest to highest: preset defaults, config file values, CLI
flags. The config file is an INI document (flat key/value with sections)
with a versioned schema:

    [meta]        schema_version
    [experiment]  seed, repetitions, preset, models, workers, out_dir,
                  emit_traces, emit_predictions
    [thresholds]  theta_hi, theta_lo
    [train]       lstm_epochs, tcn_epochs, warmup_steps
    [synth]       any SynthConfig field (n_trials, catch_fraction, ...)
"""
from __future__ import annotations

import configparser
import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataFormatError
from .rng import derive_seed
from .synth import SynthConfig

SCHEMA_VERSION = 1
ALL_MODELS = ("MTO", "MTM", "HYB", "PSC", "TCN10", "TCN30", "TCN60")

PRESETS = {
    "full": {"n_trials": 1975, "repetitions": 10, "lstm_epochs": None, "tcn_epochs": None},
    "desk": {"n_trials": 400, "repetitions": 3, "lstm_epochs": 50, "tcn_epochs": 100},
}


@dataclass
class ExperimentConfig:
    master_seed: int = 7
    repetitions: int = 10
    preset: str = "full"
    models: tuple[str, ...] = ALL_MODELS
    out_dir: str = "earlycast-out"
    workers: int = 1
    emit_traces: bool = False
    emit_predictions: bool = False
    theta_hi: float = 0.75
    theta_lo: float = 0.25
    lstm_epochs: int | None = None  # None: per-variant paper defaults
    tcn_epochs: int | None = None
    warmup_steps: int = 10
    synth: SynthConfig = field(default_factory=SynthConfig)

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.models:
            raise ValueError("model roster must be nonempty")
        bad = [m for m in self.models if m not in ALL_MODELS]
        if bad:
            raise ValueError(f"unknown models: {bad}")

    def to_hashable(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out_dir")   # location does not change the experiment
        d.pop("workers")   # parallelism does not change results
        return d

    def config_hash(self) -> str:
        payload = json.dumps(self.to_hashable(), sort_keys=True, default=list)
        return f"{derive_seed('experiment-config', payload):016x}"


def default_out_dir() -> str:
    return os.environ.get("EARLYCAST_OUT", "earlycast-out")


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _coerce(value: str, like):
    if isinstance(like, bool):
        key = value.strip().lower()
        if key not in _BOOL:
            raise DataFormatError(f"expected boolean, got {value!r}")
        return _BOOL[key]
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, tuple):
        parts = [p.strip() for p in value.split(",") if p.strip()]
        return tuple(type(like[0])(p) for p in parts) if like else tuple(parts)
    return value


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Resolve a config from preset defaults, an INI file and overrides."""
    file_vals: dict = {}
    synth_vals: dict = {}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise DataFormatError(f"config file {path} not found")
        if parser.has_section("meta"):
            version = parser.getint("meta", "schema_version", fallback=SCHEMA_VERSION)
            if version != SCHEMA_VERSION:
                raise DataFormatError(f"unsupported config schema_version {version}")
        mapping = {
            ("experiment", "seed"): "master_seed",
            ("experiment", "repetitions"): "repetitions",
            ("experiment", "preset"): "preset",
            ("experiment", "models"): "models",
            ("experiment", "workers"): "workers",
            ("experiment", "out_dir"): "out_dir",
            ("experiment", "emit_traces"): "emit_traces",
            ("experiment", "emit_predictions"): "emit_predictions",
            ("thresholds", "theta_hi"): "theta_hi",
            ("thresholds", "theta_lo"): "theta_lo",
            ("train", "lstm_epochs"): "lstm_epochs",
            ("train", "tcn_epochs"): "tcn_epochs",
            ("train", "warmup_steps"): "warmup_steps",
        }
        for (section, key), attr in mapping.items():
            if parser.has_option(section, key):
                file_vals[attr] = parser.get(section, key)
        if parser.has_section("synth"):
            for key, value in parser.items("synth"):
                synth_vals[key] = value

    overrides = dict(overrides or {})
    preset = overrides.get("preset") or file_vals.get("preset") or "full"
    if preset not in PRESETS:
        raise DataFormatError(f"unknown preset {preset!r}")
    cfg = ExperimentConfig(preset=preset,
                           repetitions=PRESETS[preset]["repetitions"],
                           lstm_epochs=PRESETS[preset]["lstm_epochs"],
                           tcn_epochs=PRESETS[preset]["tcn_epochs"],
                           out_dir=default_out_dir(),
                           synth=SynthConfig(n_trials=PRESETS[preset]["n_trials"]))

    defaults = ExperimentConfig()
    for attr, raw in file_vals.items():
        if attr == "preset":
            continue
        if attr == "models":
            cfg.models = tuple(m.strip().upper() for m in raw.split(",") if m.strip())
        elif attr in ("lstm_epochs", "tcn_epochs"):
            setattr(cfg, attr, None if raw.strip().lower() == "none" else int(raw))
        else:
            setattr(cfg, attr, _coerce(raw, getattr(defaults, attr)))
    synth_defaults = SynthConfig()
    for key, raw in synth_vals.items():
        if not hasattr(synth_defaults, key):
            raise DataFormatError(f"unknown [synth] key {key!r}")
        setattr(cfg.synth, key, _coerce(raw, getattr(synth_defaults, key)))

    for attr, value in overrides.items():
        if value is None or attr == "preset":
            continue
        setattr(cfg, attr, value)
    cfg.__post_init__()
    cfg.synth.__post_init__()
    return cfg


def save_config(path, cfg: ExperimentConfig) -> None:
    parser = configparser.ConfigParser()
    parser["meta"] = {"schema_version": str(SCHEMA_VERSION)}
    parser["experiment"] = {
        "seed": str(cfg.master_seed),
        "repetitions": str(cfg.repetitions),
        "preset": cfg.preset,
        "models": ",".join(cfg.models),
        "workers": str(cfg.workers),
        "out_dir": cfg.out_dir,
        "emit_traces": str(cfg.emit_traces).lower(),
        "emit_predictions": str(cfg.emit_predictions).lower(),
    }
    parser["thresholds"] = {"theta_hi": repr(cfg.theta_hi), "theta_lo": repr(cfg.theta_lo)}
    parser["train"] = {
        "lstm_epochs": "none" if cfg.lstm_epochs is None else str(cfg.lstm_epochs),
        "tcn_epochs": "none" if cfg.tcn_epochs is None else str(cfg.tcn_epochs),
        "warmup_steps": str(cfg.warmup_steps),
    }
    synth_defaults = SynthConfig()
    parser["synth"] = {
        f.name: ",".join(repr(v) for v in getattr(cfg.synth, f.name))
        if isinstance(getattr(cfg.synth, f.name), tuple)
        else repr(getattr(cfg.synth, f.name))
        for f in dataclasses.fields(synth_defaults)
    }
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
