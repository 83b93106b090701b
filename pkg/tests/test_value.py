import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from retrostar.value import (DimensionMismatch, EmptyDataset, LearnedModel, RouteTuple, TrainConfig,
                             ValueOracle, load_oracle, loss_con, loss_reg, mean_losses, objective, pack,
                             train)


class LookupModel:
    """Stand-in model: the value of a one-hot vector is looked up by its hot index."""

    def __init__(self, values):
        self.values = values

    def __call__(self, x):
        return self.values[int(np.argmax(x))]


def onehot(i, d=4):
    v = np.zeros(d)
    v[i] = 1.0
    return v


def random_tuples(rng, n, d, max_cands=3, max_reactants=3):
    tuples = []
    for _ in range(n):
        cands = [(float(rng.uniform(0, 3)), [rng.normal(size=d) for _ in range(rng.integers(1, max_reactants + 1))])
                 for _ in range(rng.integers(1, max_cands + 1))]
        tuples.append(RouteTuple(rng.normal(size=d), float(rng.uniform(0, 6)),
                                 int(rng.integers(len(cands))), cands))
    return tuples


# -- oracles ---------------------------------------------------------------------

def test_zero_oracle():
    assert ValueOracle.zero()("anything") == 0.0


def test_table_oracle_defaults_to_zero():
    oracle = ValueOracle.from_table({"a": 1.5})
    assert oracle("a") == 1.5 and oracle("b") == 0.0


def test_table_oracle_rejects_negative_values():
    with pytest.raises(ValueError):
        ValueOracle.from_table({"a": -1.0})


def test_learned_oracle_is_nonnegative_and_memoised():
    model = LearnedModel.init(16, 8, seed=3, output_bias=-20.0)
    oracle = ValueOracle.learned(model)
    v = oracle("mol-1")
    assert v >= 0.0 and oracle("mol-1") == v


def test_load_oracle_specs(tmp_path):
    table = tmp_path / "t.json"
    table.write_text(json.dumps({"a": 2.0}))
    assert load_oracle(f"table:{table}")("a") == 2.0
    model = LearnedModel.init(8, 4, seed=1)
    model.save(tmp_path / "m.json")
    assert load_oracle(f"model:{tmp_path / 'm.json'}").kind.value == "learned"
    with pytest.raises(ValueError):
        load_oracle("nonsense")


# -- losses ------------------------------------------------------------------------

def test_loss_reg_example():
    model = LookupModel({0: 3.0})
    tup = RouteTuple(onehot(0), 5.0, 0, [(1.0, [onehot(1)])])
    assert loss_reg(model, tup) == 4.0


@pytest.mark.parametrize("cost, reactant_value, expected", [
    (2.0, 4.0, 0.0),   # 5 + 0.1 - 2 - 4 < 0
    (1.0, 2.6, 1.5),   # 5 + 0.1 - 1 - 2.6
    (4.9, 0.0, 0.2),   # 5 + 0.1 - 4.9
])
def test_loss_con_examples(cost, reactant_value, expected):
    model = LookupModel({0: 5.0, 1: 0.0, 2: reactant_value})
    tup = RouteTuple(onehot(0), 5.0, 0, [(0.0, [onehot(1)]), (cost, [onehot(2)])])
    assert loss_con(model, tup, 1, 0.1) == pytest.approx(expected, abs=1e-12)


def test_loss_con_bad_index():
    model = LookupModel({0: 1.0, 1: 1.0})
    tup = RouteTuple(onehot(0), 1.0, 0, [(1.0, [onehot(1)])])
    with pytest.raises(IndexError):
        loss_con(model, tup, 3, 0.1)


def test_route_tuple_validation():
    with pytest.raises(IndexError):
        RouteTuple(onehot(0), 1.0, 2, [(1.0, [onehot(1)])])
    with pytest.raises(ValueError):
        RouteTuple(onehot(0), -1.0, 0, [(1.0, [onehot(1)])])


def test_objective_agrees_with_per_tuple_losses():
    rng = np.random.default_rng(5)
    tuples = random_tuples(rng, 12, 6)
    model = LearnedModel.init(6, 5, seed=2, output_bias=1.0)
    eps, lam = 0.1, 0.7
    expected = []
    for t in tuples:
        others = [j for j in range(len(t.candidates)) if j != t.best_reaction]
        con = np.mean([loss_con(model, t, j, eps) for j in others]) if others else 0.0
        expected.append(loss_reg(model, t) + lam * con)
    value, _ = objective(model, pack(tuples), eps, lam, with_grad=False)
    assert value == pytest.approx(float(np.mean(expected)), rel=1e-12)


def hinge_args(model, tuples, eps):
    args = []
    for t in tuples:
        for j, (c, rs) in enumerate(t.candidates):
            if j != t.best_reaction:
                args.append(t.v + eps - c - sum(model(x) for x in rs))
    return np.array(args)


def gradient_check(seed, d=10, hidden=7, n=10, step=1e-6):
    """Max relative error between the analytic gradient and central differences."""
    rng = np.random.default_rng(seed)
    tuples = random_tuples(rng, n, d)
    model = LearnedModel.init(d, hidden, seed=seed, output_bias=0.5)
    eps, lam = 0.1, 1.3
    if len(hinge_args(model, tuples, eps)) and np.min(np.abs(hinge_args(model, tuples, eps))) < 1e-3:
        return None
    packed = pack(tuples)
    _, grad = objective(model, packed, eps, lam)
    theta = model.get_params()
    worst = 0.0
    for i in range(len(theta)):
        plus, minus = theta.copy(), theta.copy()
        plus[i] += step
        minus[i] -= step
        model.set_params(plus)
        f_plus = objective(model, packed, eps, lam, with_grad=False)[0]
        model.set_params(minus)
        f_minus = objective(model, packed, eps, lam, with_grad=False)[0]
        fd = (f_plus - f_minus) / (2 * step)
        worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-6))
    model.set_params(theta)
    return worst


def test_gradient_matches_finite_differences():
    checked = 0
    for seed in range(6):
        err = gradient_check(seed)
        if err is None:
            continue
        checked += 1
        assert err < 1e-4, f"seed {seed}: {err}"
    assert checked >= 3


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, 6, elements=st.floats(-50, 50)), st.integers(0, 100))
def test_model_output_is_nonnegative(x, seed):
    model = LearnedModel.init(6, 4, seed=seed, output_bias=-3.0)
    assert model(x) >= 0.0


# -- training ----------------------------------------------------------------------

def test_fits_a_linear_target():
    rng = np.random.default_rng(0)
    d = 8
    w = rng.uniform(0.2, 1.0, size=d)
    xs = rng.uniform(0, 1, size=(200, d))
    tuples = [RouteTuple(x, float(x @ w), 0, [(0.0, [x])]) for x in xs]
    model = train(tuples, TrainConfig(epochs=200, learning_rate=0.05, batch_size=32, hidden_dim=16, lam=0.0))
    preds = model.predict(xs)
    targets = xs @ w
    rel = np.mean((preds - targets) ** 2) / np.var(targets)
    assert rel < 0.10
    assert model.history[-1] < model.history[0]


def test_single_tuple_is_fitted():
    tup = RouteTuple(onehot(1, 5), 2.5, 0, [(2.5, [onehot(3, 5)])])
    model = train([tup], TrainConfig(epochs=400, lam=0.0, learning_rate=0.05, hidden_dim=8))
    assert model(tup.target_features) == pytest.approx(2.5, abs=0.05)


def test_training_is_deterministic():
    rng = np.random.default_rng(1)
    tuples = random_tuples(rng, 30, 6)
    cfg = TrainConfig(epochs=5, hidden_dim=6, batch_size=8, rng_seed=4)
    a, b = train(tuples, cfg), train(tuples, cfg)
    assert np.array_equal(a.get_params(), b.get_params())
    assert a.history == b.history


def test_model_json_roundtrip(tmp_path):
    model = LearnedModel.init(9, 5, seed=7, output_bias=0.3)
    path = tmp_path / "model.json"
    model.save(path)
    loaded = LearnedModel.load(path)
    assert np.array_equal(loaded.get_params(), model.get_params())
    x = np.linspace(-1, 1, 9)
    assert loaded(x) == model(x)


def test_empty_dataset_rejected():
    with pytest.raises(EmptyDataset):
        train([])


def test_dimension_mismatch():
    tuples = [RouteTuple(np.zeros(4), 1.0, 0, [(1.0, [np.zeros(4)])]),
              RouteTuple(np.zeros(5), 1.0, 0, [(1.0, [np.zeros(5)])])]
    with pytest.raises(DimensionMismatch):
        pack(tuples)
    model = LearnedModel.init(3, 2)
    with pytest.raises(DimensionMismatch):
        model(np.zeros(4))


def test_mean_losses_split():
    rng = np.random.default_rng(2)
    tuples = random_tuples(rng, 10, 5)
    model = LearnedModel.init(5, 4, seed=0)
    reg, con = mean_losses(model, tuples, 0.1)
    assert reg >= 0 and con >= -1e-12
    assert reg == pytest.approx(np.mean([loss_reg(model, t) for t in tuples]), rel=1e-12)
