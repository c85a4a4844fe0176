"""Tri-level robust dataset learning and the baseline dataset generators.

One learning run keeps a single classifier alive and, per mini-batch:

  1. takes one plain gradient step on the robust batch (the one-step
     parameter estimate),
  2. builds PGD adversarial examples of the paired natural batch against
     the updated classifier,
  3. moves the robust batch by -beta * sign(meta-gradient), where the
     meta-gradient is the derivative of the adversarial loss through the
     step-1 update: -gamma * d/d(data) <d(train)/d(theta), g>.

The adversarial examples are constants with respect to the data: the
meta-gradient flows only through the parameter update. In the default
meta-gradient mode g is the adversarial-loss gradient at the updated
parameters; in the alternating mode the classifier is frozen at its
pre-step value when g is evaluated, so the two modes coincide as
gamma -> 0. Labels are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .attacks import AttackConfig, pgd_attack
from .dataset import Dataset
from .errors import ContractError, ParameterError
from .models import TrainConfig, batch_loss_graph, default_loss_kind, sgd_train
from .rng import RngStream

META_GRADIENT = "meta-gradient"
ALTERNATING = "alternating"


@dataclass
class RobustLearnConfig:
    epochs: int
    gamma: float
    beta: float
    attack: AttackConfig
    batch_size: int = 128
    theta0_seed: int = 0
    mode: str = META_GRADIENT
    lam: float = 1e-3  # ridge coefficient of the classifier objective
    value_range: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.gamma <= 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if self.beta < 0:  # beta = 0 freezes the data, a useful control
            raise ParameterError(f"beta must be >= 0, got {self.beta}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mode not in (META_GRADIENT, ALTERNATING):
            raise ParameterError(f"unknown mode {self.mode!r}")


@dataclass
class EpochTrace:
    clean_loss: float
    adv_loss: float
    update_norm: float


def attack_for_dataset(cfg: AttackConfig, dataset: Dataset) -> AttackConfig:
    """Attack config with the dataset's value range as the clamp, if any."""
    if cfg.clamp is None and dataset.value_range is not None:
        return AttackConfig(cfg.norm, cfg.eps, cfg.alpha, cfg.steps, dataset.value_range, cfg.random_start)
    return cfg


def learn_robust_dataset(
    x_nat: Dataset,
    model_factory: Callable[[int], object],
    cfg: RobustLearnConfig,
    rng: RngStream,
) -> tuple[Dataset, list[EpochTrace]]:
    """Run the tri-level learner; returns the learned dataset and per-epoch trace."""
    model = model_factory(cfg.theta0_seed)
    loss_kind = default_loss_kind(model)
    y = model.targets(x_nat.labels)
    x_natural = x_nat.features
    x_rob = x_natural.copy()
    n = x_nat.n

    value_range = cfg.value_range if cfg.value_range is not None else x_nat.value_range
    attack_cfg = attack_for_dataset(cfg.attack, x_nat)

    params = [p.copy() for p in model.params()]
    shuffle = rng.child(1)
    trace: list[EpochTrace] = []

    for _ in range(cfg.epochs):
        order = shuffle.permutation(n)
        clean_losses, adv_losses, update_norms = [], [], []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            b_nat, yb = x_natural[idx], y[idx]
            if b_nat.shape != x_rob[idx].shape:
                raise ContractError("natural/robust batch misalignment")

            # step 1: one-step parameter estimate on the robust batch
            data_leaf = Tensor(x_rob[idx])
            theta_prev = [Tensor(p) for p in params]
            train_out = batch_loss_graph(model, theta_prev, data_leaf, yb, loss_kind, cfg.lam)
            theta_grads = ad.backward(train_out, theta_prev)
            params = [t.data - cfg.gamma * g.data for t, g in zip(theta_prev, theta_grads)]
            model.set_params(params)

            # step 2: adversarial examples of the natural batch (constants below)
            x_adv = pgd_attack(model, b_nat, yb, attack_cfg, loss_kind)

            # step 3: signed meta-gradient update of the robust batch
            g_point = params if cfg.mode == META_GRADIENT else [t.data for t in theta_prev]
            adv_leaves = [Tensor(p) for p in g_point]
            adv_out = batch_loss_graph(model, adv_leaves, Tensor(x_adv), yb, loss_kind, cfg.lam)
            g_adv = ad.backward(adv_out, adv_leaves)

            inner = ad.constant(0.0)
            for tg, g in zip(theta_grads, g_adv):
                inner = ad.add(inner, ad.tsum(ad.mul(tg, ad.constant(g.data))))
            meta = -cfg.gamma * ad.backward(inner, [data_leaf])[0].data

            step = -cfg.beta * np.sign(meta)
            updated = x_rob[idx] + step
            if value_range is not None:
                np.clip(updated, value_range[0], value_range[1], out=updated)
            update_norms.append(float(np.linalg.norm(updated - x_rob[idx])))
            x_rob[idx] = updated

            clean_losses.append(train_out.item())
            adv_losses.append(adv_out.item())
        trace.append(
            EpochTrace(
                float(np.mean(clean_losses)),
                float(np.mean(adv_losses)),
                float(np.mean(update_norms)),
            )
        )

    provenance = dict(
        x_nat.provenance,
        generator="robust-learn",
        mode=cfg.mode,
        epochs=cfg.epochs,
        gamma=cfg.gamma,
        beta=cfg.beta,
        eps=cfg.attack.eps,
        seed=rng.seed,
        theta0_seed=cfg.theta0_seed,
    )
    learned = Dataset(x_rob, x_nat.labels.copy(), value_range, provenance)
    return learned, trace


def baseline_adv_dataset(
    model, x_nat: Dataset, attack_cfg: AttackConfig, rng: RngStream, chunk: int = 4096
) -> Dataset:
    """Replace every row by its PGD adversarial example against `model`."""
    attack_cfg = attack_for_dataset(attack_cfg, x_nat)
    rows = []
    for start in range(0, x_nat.n, chunk):
        X = x_nat.features[start : start + chunk]
        yb = x_nat.labels[start : start + chunk]
        rows.append(pgd_attack(model, X, yb, attack_cfg, rng=rng.child(start)))
    provenance = dict(
        x_nat.provenance,
        generator="adv-data",
        eps=attack_cfg.eps,
        norm=attack_cfg.norm,
        steps=attack_cfg.steps,
    )
    return Dataset(np.concatenate(rows, axis=0), x_nat.labels.copy(), x_nat.value_range, provenance)


def adversarially_train_reference(
    model_factory: Callable[[int], object],
    dataset: Dataset,
    attack_cfg: AttackConfig,
    train_cfg: TrainConfig,
    rng: RngStream,
) -> tuple[object, list[float]]:
    """PGD adversarial training: each batch is attacked before the SGD step.

    Shuffling follows train_cfg.seed exactly as in sgd_train, so with a
    vanishing attack budget the trajectory coincides with natural training;
    `rng` only feeds the attack (random starts, when enabled).
    """
    model = model_factory(train_cfg.seed)
    loss_kind = default_loss_kind(model)
    y = model.targets(dataset.labels)
    attack_cfg = attack_for_dataset(attack_cfg, dataset)

    params = [p.copy() for p in model.params()]
    velocity = [np.zeros_like(p) for p in params]
    shuffle = RngStream(train_cfg.seed)
    trace: list[float] = []

    for _ in range(train_cfg.epochs):
        order = shuffle.permutation(dataset.n)
        epoch_losses = []
        for start in range(0, dataset.n, train_cfg.batch_size):
            idx = order[start : start + train_cfg.batch_size]
            model.set_params(params)
            x_adv = pgd_attack(model, dataset.features[idx], y[idx], attack_cfg, loss_kind)
            leaves = [Tensor(p) for p in params]
            out = batch_loss_graph(model, leaves, Tensor(x_adv), y[idx], loss_kind, train_cfg.weight_decay)
            grads = ad.backward(out, leaves)
            for p, v, g in zip(params, velocity, grads):
                v *= train_cfg.momentum
                v += g.data
                p -= train_cfg.lr * v
            epoch_losses.append(out.item())
        trace.append(float(np.mean(epoch_losses)))

    model.set_params(params)
    return model, trace


def natural_twin(model_factory: Callable[[int], object], dataset: Dataset, train_cfg: TrainConfig):
    """Naturally trained counterpart used as the control in comparisons."""
    model = model_factory(train_cfg.seed)
    return sgd_train(model, dataset, train_cfg)
