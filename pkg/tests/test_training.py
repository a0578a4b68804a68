import numpy as np
import pytest

from gil import linalg
from gil.datasets import ConfigError, Dataset, SequenceDataset, split, synthetic_mnar, synthetic_sequences
from gil.models import mlp_init
from gil.rl import TrainingDiverged
from gil.training import (
    TrainConfig,
    ablation_gradients,
    carry_forward,
    contrastive_distance,
    impute,
    predict_proba,
    train,
    train_ablation_input,
    train_baseline,
    train_gil,
    train_gil_d,
    train_gil_h,
)
from conftest import max_rel_error, numeric_grad

SMALL = dict(batch_size=16, hidden=(12, 8), rl_hidden=(16, 16), eval_every=25)


@pytest.fixture(scope="module")
def data():
    ds = synthetic_mnar(n=300, d=6, seed=2)
    return split(ds, 0.25, 0)


@pytest.fixture(scope="module")
def seq_data():
    return split(synthetic_sequences(n=60, d=3, min_len=2, max_len=4, seed=4), 0.25, 0)


def trajectory(fn, tr, te, cfg):
    snaps = []
    fn(tr, te, cfg, callback=lambda it, model: snaps.append([p.copy() for p in model.params()]))
    return snaps


def same(a, b):
    return len(a) == len(b) and all(
        all(np.array_equal(x, y) for x, y in zip(pa, pb)) for pa, pb in zip(a, b))


def test_forced_ones_equals_plain_training(data):
    tr, te = data
    cfg = TrainConfig(max_iter=100, force_importance="ones", **SMALL)
    gil = trajectory(train_gil, tr, te, cfg)
    plain = trajectory(train_baseline, tr, te, TrainConfig(imputer="zero", max_iter=100, **SMALL))
    assert same(gil, plain)


def test_mask_mixture_equals_gil_h(data):
    tr, te = data
    cfg = TrainConfig(max_iter=100, mixture=(0, 1, 0), **SMALL)
    assert same(trajectory(train_gil, tr, te, cfg), trajectory(train_gil_h, tr, te, cfg))


def test_forced_mask_equals_gil_h(data):
    tr, te = data
    cfg = TrainConfig(max_iter=50, force_importance="mask", **SMALL)
    assert same(trajectory(train_gil, tr, te, cfg), trajectory(train_gil_h, tr, te, cfg))


def test_gil_h_with_zero_placeholder_equals_zero_imputation(data):
    tr, te = data
    cfg = TrainConfig(max_iter=60, **SMALL)
    assert same(trajectory(train_gil_h, tr, te, cfg),
                trajectory(train_baseline, tr, te, TrainConfig(imputer="zero", max_iter=60, **SMALL)))


def test_gil_h_fully_observed_equals_plain_training():
    ds = synthetic_mnar(n=200, d=5, seed=0)
    full = ds.with_values(ds.truth)
    tr, te = split(full, 0.25, 0)
    cfg = TrainConfig(max_iter=40, placeholder=3.0, **SMALL)
    assert same(trajectory(train_gil_h, tr, te, cfg),
                trajectory(train_baseline, tr, te, TrainConfig(imputer="mean", max_iter=40, **SMALL)))


@pytest.mark.parametrize("variant", ["gil_h", "gil"])
def test_always_missing_feature_column_frozen(data, variant):
    tr, te = data
    values = tr.values.copy()
    values[:, 3] = np.nan
    tr = tr.with_values(values)
    cfg = TrainConfig(variant=variant, max_iter=80, **SMALL)
    snaps = trajectory(lambda *a, **k: train(*a, **k), tr, te, cfg)
    init = mlp_init([6, 12, 8, 2], ["relu", "relu", "softmax"], np.random.SeedSequence(0).spawn(5)[0])
    assert np.array_equal(snaps[-1][0][:, 3], init.weights[0][:, 3])
    assert not np.array_equal(snaps[-1][0][:, 0], init.weights[0][:, 0])


def test_contrastive_distance_hand_arithmetic():
    f = np.array([[1.0, 2.0], [0.0, 1.0], [3.0, 1.0], [2.0, 2.0]])
    # pos = rows 0-1, neg = rows 2-3; quarters are single rows
    cross = np.mean((f[0] - f[2]) ** 2) + np.mean((f[1] - f[3]) ** 2)
    within = np.mean((f[0] - f[1]) ** 2) + np.mean((f[2] - f[3]) ** 2)
    assert cross == 2.5 + 2.5 and within == 1.0 + 1.0
    assert abs(contrastive_distance(f) - 3.0) <= 1e-10


def test_contrastive_distance_homogeneous_is_zero():
    assert contrastive_distance(np.ones((8, 3))) == 0.0
    with pytest.raises(ConfigError):
        contrastive_distance(np.ones((6, 3)))


def test_gil_d_zero_coefficient_matches_gil_rewards(data):
    tr, te = data
    cfg = TrainConfig(max_iter=40, c=0.0, balanced=True, **SMALL)
    _, _, rep_d = train_gil_d(tr, te, cfg)
    _, _, rep = train_gil(tr, te, cfg)
    assert rep_d.rewards == rep.rewards


def test_gil_d_term_never_touches_supervised_step(data):
    """First-step model weights do not depend on c; only later actions do."""
    tr, te = data
    first = {}
    for c in (0.0, 5.0):
        snaps = trajectory(train_gil_d, tr, te, TrainConfig(max_iter=3, c=c, **SMALL))
        first[c] = snaps[0]
    assert all(np.array_equal(a, b) for a, b in zip(first[0.0], first[5.0]))


def test_gil_d_config_errors(data):
    tr, te = data
    multi = Dataset(np.zeros((40, 2)), np.arange(40) % 3, 3)
    with pytest.raises(ConfigError):
        train_gil_d(multi, multi, TrainConfig(**SMALL))
    with pytest.raises(ConfigError):
        TrainConfig(variant="gil_d", batch_size=18).validate()
    with pytest.raises(ConfigError):
        TrainConfig(variant="gil_d", c=-1.0).validate()


def test_rewards_are_non_positive(data):
    tr, te = data
    _, _, rep = train_gil(tr, te, TrainConfig(max_iter=30, **SMALL))
    assert len(rep.rewards) == 30 and max(rep.rewards) <= 0.0


def test_ablation_frozen_weighting_equals_plain(data):
    tr, te = data
    cfg = TrainConfig(max_iter=60, freeze_weighting=True, **SMALL)
    assert same(trajectory(train_ablation_input, tr, te, cfg),
                trajectory(train_baseline, tr, te, TrainConfig(imputer="zero", max_iter=60, **SMALL)))


def test_ablation_gradients_match_finite_differences(rng):
    model = mlp_init([4, 5, 3], ["tanh", "softmax"], 0)
    weighting = mlp_init([4, 6, 4], ["tanh", "sigmoid"], 1)
    x = rng.normal(size=(3, 4))
    y = linalg.one_hot([0, 2, 1], 3)

    def value():
        return ablation_gradients(model, weighting, x, y)[0]

    _, dense, h_dense, _ = ablation_gradients(model, weighting, x, y)
    for p, g in zip(model.params(), dense):
        assert max_rel_error(g, numeric_grad(value, p)) <= 1e-5
    for p, g in zip(weighting.params(), h_dense):
        assert max_rel_error(g, numeric_grad(value, p)) <= 1e-5


@pytest.mark.parametrize("variant", ["gil", "gil_h", "gil_d", "ablation_input", "baseline"])
def test_variants_produce_finite_reports(data, variant):
    tr, te = data
    model, _, rep = train(tr, te, TrainConfig(variant=variant, max_iter=50, **SMALL))
    assert rep.iterations == list(range(1, 51))
    assert [it for it, _ in rep.evals] == [25, 50]
    assert all(np.isfinite(v) for v in rep.train_loss)
    assert 0 <= rep.final.accuracy <= 1 and 0 <= rep.final.auc <= 1
    assert rep.best.accuracy >= rep.final.accuracy
    assert predict_proba(model, te.filled).shape == (len(te), 2)


def test_batch_action_mode(data):
    tr, te = data
    _, ac, rep = train_gil(tr, te, TrainConfig(max_iter=30, action_mode="batch", **SMALL))
    assert len(rep.td_errors) == 30 and ac is not None


def test_importance_after_preconditioning_runs(data):
    tr, te = data
    _, _, rep = train_gil(tr, te, TrainConfig(max_iter=20, importance_after_precondition=True, **SMALL))
    assert np.isfinite(rep.final.loss)


def test_replay_and_targets_run(data):
    tr, te = data
    cfg = TrainConfig(max_iter=20, replay_capacity=200, replay_batch=32, targets=True, **SMALL)
    _, ac, rep = train_gil(tr, te, cfg)
    assert len(ac.replay) == 200 and np.isfinite(rep.final.loss)


def test_determinism(data):
    tr, te = data
    cfg = TrainConfig(max_iter=30, **SMALL)
    _, _, a = train_gil(tr, te, cfg)
    _, _, b = train_gil(tr, te, cfg)
    assert a.train_loss == b.train_loss and a.rewards == b.rewards and a.evals == b.evals


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_with_report(data):
    tr, te = data
    cfg = TrainConfig(variant="baseline", optimizer="sgd", lr=1e300, decay_steps=0, max_iter=20, **SMALL)
    with pytest.raises(TrainingDiverged) as err:
        train(tr, te, cfg)
    assert err.value.report.iterations


def test_mean_imputer_arithmetic():
    ds = Dataset(np.array([[2.0, 1.0], [np.nan, 1.0], [4.0, 1.0]]), np.array([0, 1, 0]), 2)
    out = impute(ds, "mean", ds.column_means)
    assert out[1, 0] == 3.0


def test_carry_forward_rule():
    seq = np.array([[1.0], [np.nan], [np.nan], [5.0]])
    assert carry_forward(seq, np.array([9.0]))[:, 0].tolist() == [1, 1, 1, 5]
    lead = np.array([[np.nan], [2.0]])
    assert carry_forward(lead, np.array([9.0]))[:, 0].tolist() == [9, 2]


def test_noise_mean_imputer_is_noisier_than_mean(rng):
    ds = synthetic_mnar(n=500, d=4, seed=0)
    mean = impute(ds, "mean", ds.column_means)
    noisy = impute(ds, "noise_mean", ds.column_means, rng, 1.0, np.nanstd(ds.values, axis=0))
    miss = ds.mask == 0
    assert np.mean((noisy - ds.truth)[miss] ** 2) > np.mean((mean - ds.truth)[miss] ** 2)
    assert np.array_equal(noisy[~miss], ds.values[~miss])


def test_carry_forward_on_tabular_is_config_error(data):
    tr, te = data
    with pytest.raises(ConfigError):
        train_baseline(tr, te, TrainConfig(imputer="carry_forward", **SMALL))


def test_baseline_reports_imputation_mse(data):
    tr, te = data
    _, rep, mse = train_baseline(tr, te, TrainConfig(imputer="mean", max_iter=10, **SMALL))
    assert mse is not None and mse == rep.imputation_mse and mse > 0


LSTM = dict(model="lstm", batch_size=6, lstm_hidden=5, rl_hidden=(8, 8), eval_every=10)


@pytest.mark.parametrize("variant", ["gil", "gil_h", "gil_d", "ablation_input", "baseline"])
def test_lstm_variants_run(seq_data, variant):
    tr, te = seq_data
    imputer = "carry_forward" if variant == "baseline" else "zero"
    cfg = TrainConfig(variant=variant, imputer=imputer, max_iter=10, **LSTM)
    if variant == "gil_d":
        cfg = TrainConfig(variant=variant, max_iter=10, **{**LSTM, "batch_size": 8})
    model, _, rep = train(tr, te, cfg)
    assert np.isfinite(rep.final.loss) and len(predict_proba(model, te.filled)) == len(te)


def test_lstm_forced_ones_equals_plain(seq_data):
    tr, te = seq_data
    gil = trajectory(train_gil, tr, te, TrainConfig(max_iter=15, force_importance="ones", **LSTM))
    plain = trajectory(train_baseline, tr, te, TrainConfig(imputer="zero", max_iter=15, **LSTM))
    assert same(gil, plain)


def test_lstm_mask_mixture_equals_gil_h(seq_data):
    tr, te = seq_data
    cfg = TrainConfig(max_iter=15, mixture=(0, 1, 0), **LSTM)
    assert same(trajectory(train_gil, tr, te, cfg), trajectory(train_gil_h, tr, te, cfg))
