"""Experiment configuration: an INI-style file with CLI overrides.

A config fully describes one benchmark run (dataset source, feature
mode, model selection, hyperparameters, seed, output directory), so a
run can be reproduced from its manifest snapshot alone. CLI `--set
section.key=value` overrides win over the file.
"""

import configparser
from dataclasses import dataclass, field, fields
from typing import Dict, Optional, Tuple

KNOWN_MODELS = ("dnn", "knn", "ridge", "tree", "dqn")

DEFAULTS: Dict[str, Dict[str, str]] = {
    "dataset": {
        "source": "synthetic",  # synthetic | csv
        "csv_path": "",
        "csv_format": "canonical",  # canonical | antwerp
        "gateways": "9",
        "placement": "grid",
        "samples": "6500",
        "length_m": "1000",
        "width_m": "1000",
        "sf_policy": "distance_binned",  # fixed:<sf> | distance_binned | uniform_random
        "tx_power_dbm": "14",
        "frequency_hz": "868e6",
        "path_loss_exponent": "2.0",
        "shadowing_sigma_db": "0.0",
        "bandwidth_hz": "125e3",
        "noise_figure_db": "6",
    },
    "features": {
        "mode": "with_sf",  # with_sf | without_sf
    },
    "split": {
        "train": "5000",
        "val": "500",
        "test": "1000",
    },
    "models": {
        "selection": "all",  # comma list of dnn,knn,ridge,tree,dqn or "all"
        "knn_k": "11",
        "ridge_lambda": "1.0",
        "tree_depth": "10",
    },
    "dnn": {
        "epochs": "100",
        "batch_size": "512",
        "learning_rate": "0.0005",
        "beta1": "0.1",
        "beta2": "0.99",
    },
    "dqn": {
        "episodes": "2000",
        "precision_m": "10",
        "gamma": "0.1",
        "learning_rate": "0.0005",
        "batch_size": "512",
        "buffer_capacity": "50000",
        "target_sync_steps": "1000",
        "warmup_size": "1024",
        "history_len": "10",
        "max_steps": "20",
        "hidden": "128,128,64",
    },
    "run": {
        "seed": "0",
        "out_dir": "runs/benchmark",
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Parsed view over the (section, key) table."""

    raw: Dict[str, Dict[str, str]] = field(default_factory=dict)

    def __post_init__(self):
        merged = {s: dict(kv) for s, kv in DEFAULTS.items()}
        for section, kv in self.raw.items():
            if section not in merged:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in kv.items():
                if key not in merged[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                merged[section][key] = value
        self.raw = merged

    def get(self, section: str, key: str) -> str:
        return self.raw[section][key]

    def get_int(self, section: str, key: str) -> int:
        return int(self.raw[section][key])

    def get_float(self, section: str, key: str) -> float:
        return float(self.raw[section][key])

    def seed(self) -> int:
        return self.get_int("run", "seed")

    def models(self) -> Tuple[str, ...]:
        sel = self.get("models", "selection").strip()
        names = KNOWN_MODELS if sel == "all" else tuple(m.strip() for m in sel.split(","))
        for name in names:
            if name not in KNOWN_MODELS:
                raise ConfigError(f"unknown model {name!r} (choose from {KNOWN_MODELS})")
        return names

    def with_sf(self) -> bool:
        mode = self.get("features", "mode")
        if mode not in ("with_sf", "without_sf"):
            raise ConfigError(f"features.mode must be with_sf or without_sf, got {mode!r}")
        return mode == "with_sf"

    def split_sizes(self) -> Tuple[int, int, int]:
        return (
            self.get_int("split", "train"),
            self.get_int("split", "val"),
            self.get_int("split", "test"),
        )

    def hidden_layers(self, section: str) -> Tuple[int, ...]:
        return tuple(int(v) for v in self.get(section, "hidden").split(","))

    def snapshot(self) -> Dict[str, Dict[str, str]]:
        return {s: dict(kv) for s, kv in self.raw.items()}


def load_config(path: Optional[str] = None, overrides: Tuple[str, ...] = ()) -> ExperimentConfig:
    """Read the INI file (optional) and apply `section.key=value` overrides."""
    raw: Dict[str, Dict[str, str]] = {}
    if path:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        raw = {section: dict(parser[section]) for section in parser.sections()}
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, value = item.split("=", 1)
        section, key = dotted.split(".", 1)
        raw.setdefault(section.strip(), {})[key.strip()] = value.strip()
    return ExperimentConfig(raw=raw)
