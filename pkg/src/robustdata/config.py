"""Experiment configuration: a strict JSON document with defaults.

Sections: distribution, model, train, attack, robust_learn, eval.
Every field is optional and falls back to the defaults below; unknown
keys anywhere are rejected. The config hash is the first 16 hex digits
of the SHA-256 of the fully-resolved canonical document, so two
documents that differ only in key order or in spelling out defaults
hash identically.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .attacks import AttackConfig
from .errors import ParameterError
from .models import TrainConfig
from .theory import DistributionSpec

_DEFAULTS = {
    "distribution": {
        "d": 100,
        "mu": 0.4,
        "p": 0.9,
        "mode": "gaussian",
        "law": "gaussian",
        "n_train": 20000,
        "n_test": 10000,
    },
    "model": {
        "arch": "linear",
    },
    "train": {
        "lr": 0.01,
        "momentum": 0.9,
        "weight_decay": 1e-3,
        "epochs": 12,
        "batch_size": 128,
    },
    "attack": {
        "norm": "linf",
        "eps": 0.8,
        "alpha": None,  # eps / 10
        "steps": 10,
        "clamp": None,
    },
    "robust_learn": {
        "epochs": 50,
        "gamma": 0.05,
        "beta": 0.01,
        "batch_size": 128,
        "mode": "meta-gradient",
        "lam": 1e-3,
    },
    "eval": {
        "architectures": ["linear"],
        "seeds": [0],
        "budgets": [0.4, 0.8],
        "subsample_fractions": [1.0],
    },
}


@dataclass
class ExperimentConfig:
    doc: dict = field(default_factory=dict)

    def __post_init__(self):
        self.doc = _validate(self.doc)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls(json.load(f))

    def section(self, name: str) -> dict:
        return dict(self.doc[name])

    def config_hash(self) -> str:
        canonical = json.dumps(self.doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    # typed views -----------------------------------------------------------
    def distribution_spec(self) -> DistributionSpec:
        d = self.section("distribution")
        return DistributionSpec(d=d["d"], mu=d["mu"], p=d["p"], mode=d["mode"], law=d["law"])

    def train_config(self, seed: int = 0) -> TrainConfig:
        t = self.section("train")
        return TrainConfig(
            lr=t["lr"],
            momentum=t["momentum"],
            weight_decay=t["weight_decay"],
            epochs=t["epochs"],
            batch_size=t["batch_size"],
            seed=seed,
        )

    def attack_config(self) -> AttackConfig:
        a = self.section("attack")
        clamp = tuple(a["clamp"]) if a["clamp"] is not None else None
        return AttackConfig(norm=a["norm"], eps=a["eps"], alpha=a["alpha"], steps=a["steps"], clamp=clamp)


def _validate(doc: dict) -> dict:
    if not isinstance(doc, dict):
        raise ParameterError("config must be a JSON object")
    unknown = set(doc) - set(_DEFAULTS)
    if unknown:
        raise ParameterError(f"unknown config sections: {sorted(unknown)}")
    resolved = {}
    for section, defaults in _DEFAULTS.items():
        given = doc.get(section, {})
        if not isinstance(given, dict):
            raise ParameterError(f"config section {section!r} must be an object")
        bad = set(given) - set(defaults)
        if bad:
            raise ParameterError(f"unknown keys in config section {section!r}: {sorted(bad)}")
        resolved[section] = {**defaults, **given}
    return resolved
