"""Evaluation protocol: natural training on a candidate dataset, then
attacks on clean-distribution test data.

A fresh classifier is always re-initialized from the plan's seed, so
nothing leaks from whatever produced the dataset. Robustness is always
measured on perturbations of clean test points, never of the candidate
dataset itself.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackConfig, robust_accuracy
from .dataset import Dataset
from .errors import ParameterError
from .learning import adversarially_train_reference, attack_for_dataset, baseline_adv_dataset
from .models import LinearClassifier, MlpClassifier, TrainConfig, accuracy, sgd_train
from .rng import RngStream

REPORT_COLUMNS = ["arch", "seed", "budget", "natural_acc", "robust_acc", "seconds"]


def atomic_write_text(path, text: str) -> None:
    """Write-temp-then-rename so partial artifacts never appear."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".report-")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def parse_arch(arch: str) -> tuple[str, list[int]]:
    """'linear' or 'mlp:<w1>-<w2>-...' into (kind, hidden widths)."""
    if arch == "linear":
        return "linear", []
    if arch.startswith("mlp:"):
        widths = [int(tok) for tok in arch.split(":", 1)[1].split("-") if tok]
        if not widths or any(w < 1 for w in widths):
            raise ParameterError(f"bad mlp architecture {arch!r}")
        return "mlp", widths
    raise ParameterError(f"unknown architecture {arch!r}")


def make_model(arch: str, width: int, num_classes: int, seed: int):
    kind, hidden = parse_arch(arch)
    if kind == "linear":
        if num_classes != 2:
            raise ParameterError("linear classifier is binary")
        return LinearClassifier.zeros(width)
    return MlpClassifier.init([width] + hidden + [num_classes], RngStream(seed))


def model_factory(arch: str, width: int, num_classes: int = 2):
    return lambda seed: make_model(arch, width, num_classes, seed)


@dataclass
class EvalPlan:
    dataset: Dataset
    test: Dataset
    architectures: list[str]
    seeds: list[int]
    budgets: list[float]
    attack: AttackConfig
    train: TrainConfig

    def __post_init__(self):
        if not self.architectures or not self.seeds or not self.budgets:
            raise ParameterError("need at least one architecture, seed, and budget")


@dataclass
class RunReport:
    cells: list[dict] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add_cell(self, arch: str, seed: int, budget: float, natural_acc: float, robust_acc: float, seconds: float):
        if robust_acc > natural_acc + 1e-12:
            raise ParameterError("robust accuracy cannot exceed natural accuracy")
        self.cells.append(
            dict(arch=arch, seed=seed, budget=budget, natural_acc=natural_acc, robust_acc=robust_acc, seconds=seconds)
        )

    def sorted_cells(self) -> list[dict]:
        return sorted(self.cells, key=lambda c: (c["arch"], c["seed"], c["budget"]))

    def cell(self, arch: str, seed: int, budget: float) -> dict:
        for c in self.cells:
            if c["arch"] == arch and c["seed"] == seed and abs(c["budget"] - budget) < 1e-12:
                return c
        raise KeyError((arch, seed, budget))

    def write_csv(self, path) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(REPORT_COLUMNS)
        for c in self.sorted_cells():
            writer.writerow(
                [c["arch"], c["seed"], repr(c["budget"]), repr(c["natural_acc"]), repr(c["robust_acc"]), f"{c['seconds']:.3f}"]
            )
        atomic_write_text(path, buf.getvalue())

    def write_json(self, path) -> None:
        doc = {"provenance": self.provenance, "cells": self.sorted_cells()}
        atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization: everything except wall times."""
        cells = [{k: v for k, v in c.items() if k != "seconds"} for c in self.sorted_cells()]
        doc = {"provenance": self.provenance, "cells": cells}
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def evaluate_dataset(plan: EvalPlan, rng: RngStream) -> RunReport:
    """Train naturally per (arch, seed), then attack on the clean test set."""
    report = RunReport(
        provenance={
            "seeds": list(plan.seeds),
            "architectures": list(plan.architectures),
            "budgets": list(plan.budgets),
            "train_seed_base": plan.train.seed,
            "dataset_provenance": _json_safe(plan.dataset.provenance),
        }
    )
    num_classes = max(2, int(plan.test.classes().size))
    for arch in plan.architectures:
        for seed in plan.seeds:
            start = time.perf_counter()
            cfg = TrainConfig(
                lr=plan.train.lr,
                momentum=plan.train.momentum,
                weight_decay=plan.train.weight_decay,
                epochs=plan.train.epochs,
                batch_size=plan.train.batch_size,
                seed=seed,
            )
            model = make_model(arch, plan.dataset.width, num_classes, seed)
            sgd_train(model, plan.dataset, cfg)
            natural = accuracy(model, plan.test)
            elapsed = time.perf_counter() - start
            for budget in plan.budgets:
                t0 = time.perf_counter()
                attack = attack_for_dataset(plan.attack.with_eps(budget), plan.test)
                robust = robust_accuracy(model, plan.test, attack, rng.child(seed))
                report.add_cell(arch, seed, budget, natural, robust, elapsed + time.perf_counter() - t0)
    return report


def transfer_matrix(
    dataset: Dataset,
    architectures: list[str],
    seeds: list[int],
    attack_cfg: AttackConfig,
    rng: RngStream,
    train: TrainConfig,
    test: Dataset,
) -> RunReport:
    """Cross grid of natural/robust accuracy across architectures and seeds."""
    plan = EvalPlan(dataset, test, architectures, seeds, [attack_cfg.eps], attack_cfg, train)
    return evaluate_dataset(plan, rng)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


# ---------------------------------------------------------------------------
# two-dimensional demonstration
# ---------------------------------------------------------------------------


@dataclass
class Figure2Result:
    robust_model_w: np.ndarray
    retrained_model_w: np.ndarray
    robust_natural_acc: float
    robust_robust_acc: float
    retrained_natural_acc: float
    retrained_robust_acc: float
    angle_degrees: float

    def to_kv_lines(self) -> list[str]:
        return [
            f"toy.robust_natural_acc={self.robust_natural_acc:.4f}",
            f"toy.robust_robust_acc={self.robust_robust_acc:.4f}",
            f"toy.retrained_natural_acc={self.retrained_natural_acc:.4f}",
            f"toy.retrained_robust_acc={self.retrained_robust_acc:.4f}",
            f"toy.angle_degrees={self.angle_degrees:.2f}",
        ]


def two_gaussians(rng: RngStream, n_per_class: int, mean=(2.0, 2.0)) -> Dataset:
    """Balanced 2-D toy: class y has mean y * mean, identity covariance."""
    mean = np.asarray(mean, dtype=np.float64)
    y = np.concatenate([np.ones(n_per_class), -np.ones(n_per_class)]).astype(np.int64)
    noise = rng.normal(0.0, 1.0, (2 * n_per_class, 2))
    X = y[:, None] * mean[None, :] + noise
    return Dataset(X, y, None, {"generator": "two-gaussians", "mean": mean.tolist()})


def figure2_toy(
    rng: RngStream,
    eps: float = 1.0,
    n_per_class: int = 200,
    n_test_per_class: int = 2000,
    csv_path=None,
) -> Figure2Result:
    """Natural training on adversarial examples of a robust classifier.

    Adversarially trains a robust linear classifier on the 2-D toy,
    generates its PGD adversarial examples, naturally retrains a fresh
    classifier on them, and reports both models' accuracy on clean test
    data. Optionally dumps the point clouds and both decision lines as
    CSV (2n point rows + 2 line rows after the header).
    """
    train = two_gaussians(rng.child(10), n_per_class)
    test = two_gaussians(rng.child(11), n_test_per_class)
    attack = AttackConfig(norm="linf", eps=eps, steps=10)
    train_cfg = TrainConfig(lr=0.01, momentum=0.9, weight_decay=1e-3, epochs=40, batch_size=50, seed=0)

    factory = model_factory("linear", 2)
    robust_model, _ = adversarially_train_reference(factory, train, attack, train_cfg, rng.child(12))
    adv_data = baseline_adv_dataset(robust_model, train, attack, rng.child(13))
    retrained, _ = sgd_train(factory(0), adv_data, train_cfg)

    w_rob, w_ret = robust_model.w, retrained.w
    cosine = float(np.dot(w_rob, w_ret) / max(np.linalg.norm(w_rob) * np.linalg.norm(w_ret), 1e-300))
    result = Figure2Result(
        robust_model_w=w_rob.copy(),
        retrained_model_w=w_ret.copy(),
        robust_natural_acc=accuracy(robust_model, test),
        robust_robust_acc=robust_accuracy(robust_model, test, attack, rng.child(14)),
        retrained_natural_acc=accuracy(retrained, test),
        retrained_robust_acc=robust_accuracy(retrained, test, attack, rng.child(15)),
        angle_degrees=float(np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0)))),
    )

    if csv_path is not None:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["kind", "x1", "x2", "label"])
        for row, label in zip(train.features, train.labels):
            writer.writerow(["nat", repr(row[0]), repr(row[1]), label])
        for row, label in zip(adv_data.features, adv_data.labels):
            writer.writerow(["adv", repr(row[0]), repr(row[1]), label])
        writer.writerow(["line_robust", repr(w_rob[0]), repr(w_rob[1]), 0])
        writer.writerow(["line_retrained", repr(w_ret[0]), repr(w_ret[1]), 0])
        atomic_write_text(csv_path, buf.getvalue())
    return result
