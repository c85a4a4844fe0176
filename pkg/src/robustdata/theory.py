"""The robust/non-robust feature abstraction model and its closed forms.

The data model has one strongly label-correlated coordinate x1 (equals y
with probability p) and d weakly correlated coordinates. Three sampling
modes:

  * gaussian          x_i ~ N(mu * y, 1)           (the base model)
  * general-symmetric x_i ~ mu_i * y + symmetric   (uniform/laplace/gaussian)
  * robust-star       x_i = 1                      (the analytically optimal
                                                    robust dataset: strong
                                                    feature kept, weak ones
                                                    made uninformative)

Closed forms implemented below, for weight vectors with equal tail
weights c: natural accuracy, and robust accuracy under the worst-case
l-infinity perturbation delta = -eps * sign(y*w). The robust case shifts
the weak-feature mean from mu to mu - eps and moves x1 to y*(1 -+ eps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset
from .errors import ParameterError
from .rng import RngStream

GAUSSIAN = "gaussian"
GENERAL_SYMMETRIC = "general-symmetric"
ROBUST_STAR = "robust-star"

_LAW_KINDS = ("gaussian", "uniform", "laplace")


def phi(x: float) -> float:
    """Standard normal CDF; erf-based, absolute error below 1e-12."""
    return 0.5 * (1.0 + math.erf(float(x) / math.sqrt(2.0)))


@dataclass
class DistributionSpec:
    """Parameters of the abstraction model (total width d + 1)."""

    d: int
    mu: float = 0.0
    p: float = 0.9
    mode: str = GAUSSIAN
    law: str = "gaussian"  # tail law for general-symmetric mode
    law_means: Optional[Sequence[float]] = None  # per-coordinate means, default mu

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError(f"d must be >= 1, got {self.d}")
        if not 0.5 < self.p <= 1.0:
            raise ParameterError(f"p must be in (0.5, 1], got {self.p}")
        if self.mode not in (GAUSSIAN, GENERAL_SYMMETRIC, ROBUST_STAR):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.mode == GENERAL_SYMMETRIC:
            if self.law not in _LAW_KINDS:
                raise ParameterError(f"unknown symmetric law {self.law!r}")
            means = self.tail_means()
            if np.any(np.abs(means) > 1.0):
                raise ParameterError("symmetric tail means must satisfy |mu_i| <= 1")

    def tail_means(self) -> np.ndarray:
        if self.law_means is not None:
            means = np.asarray(self.law_means, dtype=np.float64)
            if means.shape != (self.d,):
                raise ParameterError(f"law_means must have length d={self.d}")
            return means
        return np.full(self.d, float(self.mu))


def _centered_unit_variance(law: str, rng: RngStream, shape) -> np.ndarray:
    if law == "gaussian":
        return rng.normal(0.0, 1.0, shape)
    if law == "uniform":
        return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), shape)
    if law == "laplace":
        return rng.laplace(0.0, 1.0 / math.sqrt(2.0), shape)
    raise ParameterError(f"unknown symmetric law {law!r}")


def sample(spec: DistributionSpec, n: int, rng: RngStream) -> Dataset:
    """Draw n labeled points. Draw order is fixed: labels, x1 flips, tails."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    seed, counter = rng.seed, rng.counter
    y = rng.rademacher(n)
    keep = 2.0 * rng.bernoulli(spec.p, n) - 1.0  # +1 keep, -1 flip
    x1 = y * keep

    if spec.mode == ROBUST_STAR:
        tails = np.ones((n, spec.d))
    elif spec.mode == GAUSSIAN:
        tails = spec.mu * y[:, None] + rng.normal(0.0, 1.0, (n, spec.d))
    else:
        tails = spec.tail_means()[None, :] * y[:, None] + _centered_unit_variance(
            spec.law, rng, (n, spec.d)
        )

    features = np.concatenate([x1[:, None], tails], axis=1)
    provenance = {
        "generator": "distribution",
        "mode": spec.mode,
        "d": spec.d,
        "mu": spec.mu,
        "p": spec.p,
        "law": spec.law if spec.mode == GENERAL_SYMMETRIC else None,
        "seed": seed,
        "counter": counter,
    }
    return Dataset(features, y.astype(np.int64), None, provenance)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def optimal_linf_perturbation(w: np.ndarray, y: int, eps: float) -> np.ndarray:
    """Worst-case l-infinity perturbation of the hinge: delta = -eps * sign(y*w)."""
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    return -eps * np.sign(float(y) * np.asarray(w, dtype=np.float64))


def closed_form_accuracies(
    w: np.ndarray, spec: DistributionSpec, eps: float, tail_rtol: float = 0.25
) -> tuple[float, float]:
    """(natural, robust) accuracy of an equal-tail-weight linear classifier.

    Tail weights may deviate from their mean by up to tail_rtol of the
    weight scale; the mean is used as the common value c.
    """
    if spec.mode != GAUSSIAN:
        raise ParameterError("closed forms cover the gaussian model only")
    w = np.asarray(w, dtype=np.float64)
    if w.size != spec.d + 1:
        raise ParameterError(f"weight length {w.size} does not match d+1={spec.d + 1}")
    w1, tail = float(w[0]), w[1:]
    c = float(tail.mean())
    if c < 0:
        raise ParameterError(f"tail weight must be nonnegative, got mean {c}")
    scale = max(abs(w1), abs(c), 1e-12)
    if np.max(np.abs(tail - c)) > tail_rtol * scale:
        raise ParameterError("tail weights deviate too much from a common value")

    d, mu, p = spec.d, spec.mu, spec.p
    sqd = math.sqrt(d)
    if c == 0.0:
        if w1 == 0.0:
            raise ParameterError("w must not be identically zero")
        natural = p if w1 > 0 else 1.0 - p
        # budget >= 1 flips the strong feature, so nothing survives
        robust = natural if eps < 1.0 else 0.0
        return natural, robust

    r = w1 / c
    natural = p * phi((r + d * mu) / sqd) + (1.0 - p) * phi((-r + d * mu) / sqd)
    # worst case: x1 -> y*(1 -+ eps) and weak means mu -> mu - eps
    shift = eps * abs(r)
    robust = p * phi((r - shift + d * (mu - eps)) / sqd) + (1.0 - p) * phi(
        (-r - shift + d * (mu - eps)) / sqd
    )
    return natural, robust


def monte_carlo_accuracies(
    w: np.ndarray,
    spec: DistributionSpec,
    eps: float,
    n: int,
    rng: RngStream,
    chunk: int = 200_000,
) -> tuple[float, float]:
    """Independent oracle for closed_form_accuracies: simulate the model directly.

    Draws full (d+1)-dimensional samples in chunks, applies the
    closed-form worst-case perturbation to each, and counts sign
    agreements for both the clean and perturbed points.
    """
    w = np.asarray(w, dtype=np.float64)
    nat_hits = rob_hits = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        ds = sample(spec, m, rng)
        y = ds.labels.astype(np.float64)
        margins = y * (ds.features @ w)
        nat_hits += int(np.sum(margins > 0))
        # per-row worst case: subtract eps * ||w||_1 from the signed margin
        rob_hits += int(np.sum(margins - eps * np.abs(w).sum() > 0))
        done += m
    return nat_hits / n, rob_hits / n


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------


@dataclass
class WeightTolerances:
    tail_cv: float = 0.2
    nonneg_slack: float = 1e-3
    ordering_slack: float = 0.1
    vanish_ratio: float = 0.05


@dataclass
class WeightStructureReport:
    """Outcome of the four weight-structure checks plus measured statistics."""

    tail_equal: bool
    nonnegative: bool
    ordering: bool
    tail_vanishing: bool
    w1: float
    tail_mean: float
    tail_std: float
    tail_cv: float
    tail_min: float
    tail_max_abs: float

    def to_kv_lines(self, prefix: str = "weights") -> list[str]:
        out = []
        for name, value in self.__dict__.items():
            if isinstance(value, bool):
                out.append(f"{prefix}.{name}={int(value)}")
            else:
                out.append(f"{prefix}.{name}={value:.6g}")
        return out


def verify_weight_structure(
    w: np.ndarray, d: int, tol: WeightTolerances = WeightTolerances()
) -> WeightStructureReport:
    """Check a weight vector against the optimal-SVM structure results.

    Naturally trained weights should have equal, nonnegative tail weights
    with w1 < sqrt(d) * tail; robust-dataset weights should instead have a
    vanishing tail and positive w1.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.size != d + 1:
        raise ParameterError(f"weight length {w.size} does not match d+1={d + 1}")
    w1, tail = float(w[0]), w[1:]
    tail_mean = float(tail.mean())
    tail_std = float(tail.std())
    cv = tail_std / abs(tail_mean) if tail_mean != 0 else math.inf

    return WeightStructureReport(
        tail_equal=cv <= tol.tail_cv,
        nonnegative=bool(tail.min() >= -tol.nonneg_slack and w1 >= -tol.nonneg_slack),
        ordering=bool(w1 < (1.0 + tol.ordering_slack) * math.sqrt(d) * tail_mean),
        tail_vanishing=bool(np.max(np.abs(tail)) <= tol.vanish_ratio * abs(w1)),
        w1=w1,
        tail_mean=tail_mean,
        tail_std=tail_std,
        tail_cv=cv,
        tail_min=float(tail.min()),
        tail_max_abs=float(np.max(np.abs(tail))),
    )


# ---------------------------------------------------------------------------
# symmetric-sum check
# ---------------------------------------------------------------------------


@dataclass
class SymmetricLaw:
    kind: str
    mean: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in _LAW_KINDS:
            raise ParameterError(f"unknown symmetric law {self.kind!r}")
        if self.scale <= 0:
            raise ParameterError(f"scale must be positive, got {self.scale}")

    def draw(self, n: int, rng: RngStream) -> np.ndarray:
        return self.mean + self.scale * _centered_unit_variance(self.kind, rng, n)


@dataclass
class SymmetricSumReport:
    skewness: float
    n: int
    tolerance: float

    @property
    def symmetric(self) -> bool:
        return abs(self.skewness) <= self.tolerance

    def to_kv_lines(self, prefix: str = "symmetric_sum") -> list[str]:
        return [
            f"{prefix}.skewness={self.skewness:.6g}",
            f"{prefix}.n={self.n}",
            f"{prefix}.symmetric={int(self.symmetric)}",
        ]


def symmetric_sum_check(
    laws: Sequence[SymmetricLaw], n: int, rng: RngStream, tolerance: float = 0.05
) -> SymmetricSumReport:
    """Empirical skewness of a sum of independent symmetric draws.

    A symmetric distribution has zero third central moment, and sums of
    independent symmetric distributions stay symmetric; the check
    estimates the standardized skewness of the centered sum.
    """
    if not laws:
        raise ParameterError("need at least one law")
    total = np.zeros(n)
    for law in laws:
        total += law.draw(n, rng)
    centered = total - total.mean()
    std = centered.std()
    if std == 0:
        return SymmetricSumReport(0.0, n, tolerance)
    skew = float(np.mean(centered**3) / std**3)
    return SymmetricSumReport(skew, n, tolerance)
