import numpy as np
import pytest

from robustdata.attacks import AttackConfig, closed_form_linear_robust_accuracy
from robustdata.dataset import Dataset, subsample
from robustdata.errors import ParameterError
from robustdata.evaluation import model_factory
from robustdata.learning import (
    ALTERNATING,
    RobustLearnConfig,
    adversarially_train_reference,
    baseline_adv_dataset,
    learn_robust_dataset,
    natural_twin,
)
from robustdata.models import LinearClassifier, TrainConfig, accuracy
from robustdata.rng import RngStream
from robustdata.theory import DistributionSpec, sample

D, MU, P, N = 20, 0.4, 0.9, 2000
EPS = 2 * MU
ATTACK = AttackConfig(norm="linf", eps=EPS, steps=10)
FRESH_TRAIN = TrainConfig(lr=0.002, momentum=0.9, weight_decay=1e-3, epochs=40, batch_size=128, seed=0)


def task(seed=0, n=N, n_test=4000):
    rng = RngStream(seed)
    spec = DistributionSpec(d=D, mu=MU, p=P)
    return sample(spec, n, rng.child(1)), sample(spec, n_test, rng.child(2))


def learner_config(**overrides):
    base = dict(epochs=50, gamma=0.05, beta=0.01, attack=ATTACK, batch_size=128, theta0_seed=0, lam=1e-3)
    base.update(overrides)
    return RobustLearnConfig(**base)


def test_config_validation():
    with pytest.raises(ParameterError):
        learner_config(epochs=0)
    with pytest.raises(ParameterError):
        learner_config(gamma=0.0)
    with pytest.raises(ParameterError):
        learner_config(beta=-0.1)
    with pytest.raises(ParameterError):
        learner_config(mode="bogus")


def test_beta_zero_freezes_data():
    train, _ = task()
    factory = model_factory("linear", D + 1)
    learned, trace = learn_robust_dataset(train, factory, learner_config(beta=0.0, epochs=3), RngStream(3))
    np.testing.assert_array_equal(learned.features, train.features)
    np.testing.assert_array_equal(learned.labels, train.labels)
    assert len(trace) == 3


def test_vanishing_budget_keeps_clean_accuracy():
    # eps -> 0: the adversarial batch equals the natural batch and the meta
    # step descends the clean loss, so learned data must stay (nearly) as
    # trainable as the natural data
    train, test = task()
    factory = model_factory("linear", D + 1)
    tiny = AttackConfig(norm="linf", eps=1e-9, steps=3)
    learned, _ = learn_robust_dataset(train, factory, learner_config(attack=tiny, epochs=10), RngStream(2))
    on_learned, _ = natural_twin(factory, learned, FRESH_TRAIN)
    on_natural, _ = natural_twin(factory, train, FRESH_TRAIN)
    assert accuracy(on_learned, test) >= accuracy(on_natural, test) - 0.01


def test_labels_never_modified():
    train, _ = task()
    factory = model_factory("linear", D + 1)
    learned, _ = learn_robust_dataset(train, factory, learner_config(epochs=2), RngStream(3))
    np.testing.assert_array_equal(learned.labels, train.labels)
    adv = baseline_adv_dataset(LinearClassifier(np.ones(D + 1)), train, ATTACK, RngStream(4))
    np.testing.assert_array_equal(adv.labels, train.labels)
    sub = subsample(learned, 0.5, RngStream(5))
    assert set(np.unique(sub.labels)) <= {-1, 1}


def test_learning_is_deterministic():
    train, _ = task()
    factory = model_factory("linear", D + 1)
    a, _ = learn_robust_dataset(train, factory, learner_config(epochs=3), RngStream(17))
    b, _ = learn_robust_dataset(train, factory, learner_config(epochs=3), RngStream(17))
    assert np.array_equal(a.features, b.features)  # bit-identical


def test_value_range_respected_every_update():
    rng = RngStream(6)
    X = np.clip(rng.normal(0.5, 0.2, (256, 5)), 0.0, 1.0)
    y = np.where(rng.uniform(0, 1, 256) < 0.5, 1, -1)
    train = Dataset(X, y, value_range=(0.0, 1.0))
    factory = model_factory("linear", 5)
    cfg = learner_config(epochs=4, beta=0.05, attack=AttackConfig(norm="linf", eps=0.1, steps=5))
    learned, _ = learn_robust_dataset(train, factory, cfg, RngStream(7))
    assert learned.features.min() >= 0.0
    assert learned.features.max() <= 1.0
    assert learned.value_range == (0.0, 1.0)


def test_adversarial_loss_trace_decreases():
    train, _ = task()
    factory = model_factory("linear", D + 1)
    _, trace = learn_robust_dataset(train, factory, learner_config(), RngStream(8))
    assert trace[-1].adv_loss < trace[0].adv_loss
    assert all(np.isfinite([t.clean_loss, t.adv_loss, t.update_norm]).all() for t in trace)


def test_meta_gradient_direction_nonzero():
    train, _ = task()
    factory = model_factory("linear", D + 1)
    _, trace = learn_robust_dataset(train, factory, learner_config(epochs=1), RngStream(9))
    assert trace[0].update_norm > 0


def test_modes_coincide_for_tiny_gamma():
    train, _ = task()
    factory = model_factory("linear", D + 1)
    # the sign pattern of the meta step is gamma-invariant; as gamma -> 0 the
    # two adversarial-gradient evaluation points merge
    a, _ = learn_robust_dataset(train, factory, learner_config(epochs=2, gamma=1e-9), RngStream(10))
    b, _ = learn_robust_dataset(
        train, factory, learner_config(epochs=2, gamma=1e-9, mode=ALTERNATING), RngStream(10)
    )
    np.testing.assert_array_equal(a.features, b.features)


def test_alternating_mode_differs_on_nonlinear_model():
    # on a linear model the signed step rarely sees the g-evaluation point;
    # an MLP makes the two modes measurably different
    rng = RngStream(13)
    X = rng.normal(0, 1, (120, 4))
    y = np.where(X[:, 0] + 0.5 * X[:, 1] > 0, 1, -1)
    train = Dataset(X, y)
    factory = model_factory("mlp:8", 4)
    cfg = dict(epochs=3, beta=0.02, attack=AttackConfig(norm="linf", eps=0.3, steps=5), batch_size=40, theta0_seed=0)
    a, _ = learn_robust_dataset(train, factory, RobustLearnConfig(gamma=0.5, **cfg), RngStream(14))
    b, _ = learn_robust_dataset(train, factory, RobustLearnConfig(gamma=0.5, mode=ALTERNATING, **cfg), RngStream(14))
    assert not np.array_equal(a.features, b.features)


def test_end_to_end_separation():
    # the headline run: natural retraining on the learned data is robust,
    # the natural-data control is not
    train, test = task()
    factory = model_factory("linear", D + 1)
    learned, _ = learn_robust_dataset(train, factory, learner_config(), RngStream(12))
    fresh, _ = natural_twin(factory, learned, FRESH_TRAIN)
    control, _ = natural_twin(factory, train, FRESH_TRAIN)
    rob_fresh = closed_form_linear_robust_accuracy(fresh, test, EPS)
    rob_control = closed_form_linear_robust_accuracy(control, test, EPS)
    assert rob_fresh >= 0.7
    assert rob_control <= 0.1


def test_mlp_learner_smoke():
    rng = RngStream(13)
    X = rng.normal(0, 1, (200, 4))
    y = np.where(X[:, 0] + X[:, 1] > 0, 1, -1)
    train = Dataset(X, y)
    factory = model_factory("mlp:8", 4)
    cfg = learner_config(epochs=2, batch_size=50, attack=AttackConfig(norm="linf", eps=0.2, steps=3))
    learned, trace = learn_robust_dataset(train, factory, cfg, RngStream(14))
    assert learned.features.shape == X.shape
    assert len(trace) == 2


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


def test_baseline_constant_model_returns_input():
    train, _ = task()
    adv = baseline_adv_dataset(LinearClassifier(np.zeros(D + 1)), train, ATTACK, RngStream(15))
    np.testing.assert_array_equal(adv.features, train.features)


def test_baseline_rows_stay_in_threat_ball():
    train, _ = task()
    model, _ = natural_twin(model_factory("linear", D + 1), train, FRESH_TRAIN)
    adv = baseline_adv_dataset(model, train, ATTACK, RngStream(16))
    assert np.max(np.abs(adv.features - train.features)) <= EPS + 1e-9
    assert adv.n == train.n


def test_adversarial_training_beats_natural_on_synthetic_task():
    # the adversarial-training budget stays below 2p-1 = 0.8: at exactly that
    # value the adversarial hinge is first-order flat in the strong-feature
    # weight and training cannot pick it up; evaluation still uses the task
    # budget eps = 2 mu
    train, test = task()
    factory = model_factory("linear", D + 1)
    at_attack = AttackConfig(norm="linf", eps=0.6, steps=10)
    at_model, trace = adversarially_train_reference(factory, train, at_attack, FRESH_TRAIN, RngStream(17))
    control, _ = natural_twin(factory, train, FRESH_TRAIN)
    rob_at = closed_form_linear_robust_accuracy(at_model, test, EPS)
    rob_nat = closed_form_linear_robust_accuracy(control, test, EPS)
    assert rob_at >= 0.6
    assert rob_nat <= 0.1
    assert rob_at >= rob_nat + 0.10
    assert np.isfinite(trace).all()
    assert trace[-1] < trace[0]


def test_adversarial_training_tiny_budget_matches_natural():
    train, _ = task()
    factory = model_factory("linear", D + 1)
    tiny = AttackConfig(norm="linf", eps=1e-9, steps=3)
    at_model, _ = adversarially_train_reference(factory, train, tiny, FRESH_TRAIN, RngStream(18))
    nat_model, _ = natural_twin(factory, train, FRESH_TRAIN)
    np.testing.assert_allclose(at_model.w, nat_model.w, atol=1e-6)


def test_subsample_trend_on_learned_dataset():
    train, test = task()
    factory = model_factory("linear", D + 1)
    learned, _ = learn_robust_dataset(train, factory, learner_config(), RngStream(19))
    robs = []
    for frac in (0.1, 0.2, 1.0):
        ds = learned if frac == 1.0 else subsample(learned, frac, RngStream(20))
        fresh, _ = natural_twin(factory, ds, FRESH_TRAIN)
        robs.append(closed_form_linear_robust_accuracy(fresh, test, EPS))
    assert robs[0] <= robs[1] <= robs[2]
