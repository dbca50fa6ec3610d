import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snaplab.data import DataError, PropertyPredicate, Record, Schema, SynthSpec, TabularDataset, synth_sample
from snaplab.models import (
    ModelSpec,
    TrainConfig,
    TrainedModel,
    TrainingDivergedError,
    bayes_from_spec,
    evaluate,
    init_params,
    logit,
    loss_and_grads,
    one_hot,
    predict_confidence,
    train,
)

SCHEMA = Schema.from_dict({"a": ["0", "1"], "b": ["0", "1"]})


def xor_data(reps=50):
    rows = [(("0", "0"), 0), (("0", "1"), 1), (("1", "0"), 1), (("1", "1"), 0)] * reps
    return TabularDataset.from_records(SCHEMA, rows)


def numeric_grad(params, X, y, l2, i, j, h=1e-5):
    out = np.zeros_like(params[i][j])
    for idx in np.ndindex(out.shape):
        plus = [[W.copy(), b.copy()] for W, b in params]
        minus = [[W.copy(), b.copy()] for W, b in params]
        plus[i][j][idx] += h
        minus[i][j][idx] -= h
        out[idx] = (loss_and_grads(plus, X, y, l2)[0] - loss_and_grads(minus, X, y, l2)[0]) / (2 * h)
    return out


@pytest.mark.parametrize("hidden", [(), (5,), (4, 3)])
def test_gradient_check(hidden):
    rng = np.random.default_rng(len(hidden))
    X = rng.normal(size=(7, 4))
    y = rng.integers(0, 2, size=7).astype(float)
    params = [[W, b + rng.normal(size=b.shape)] for W, b in init_params([4, *hidden, 1], rng)]
    _, grads = loss_and_grads(params, X, y, 0.01)
    for i in range(len(params)):
        for j in range(2):
            num = numeric_grad(params, X, y, 0.01, i, j)
            rel = np.abs(num - grads[i][j]) / np.maximum(np.abs(num) + np.abs(grads[i][j]), 1e-8)
            assert rel.max() <= 1e-4


def test_glorot_bounds():
    params = init_params([10, 6, 1], np.random.default_rng(0))
    assert np.abs(params[0][0]).max() <= np.sqrt(6 / 16)
    assert not params[0][1].any()


def test_one_hot():
    X = one_hot(SCHEMA, np.array([[0, 1], [1, 0]]))
    assert X.tolist() == [[1, 0, 0, 1], [0, 1, 1, 0]]


def test_training_is_deterministic():
    cfg = TrainConfig(epochs=5, seed=3)
    a = train(ModelSpec("mlp", (4,)), xor_data(), cfg)
    b = train(ModelSpec("mlp", (4,)), xor_data(), cfg)
    assert all(np.array_equal(x, y) for (W1, b1), (W2, b2) in zip(a.params, b.params) for x, y in ((W1, W2), (b1, b2)))


def test_mlp_learns_xor_and_logistic_cannot():
    cfg = TrainConfig(epochs=300, batch_size=32, learning_rate=0.02, seed=1)
    data = xor_data()
    mlp = train(ModelSpec("mlp", (8,)), data, cfg)
    assert evaluate(mlp, data).accuracy == 1.0
    lin = train(ModelSpec("logistic"), data, cfg)
    assert evaluate(lin, data).accuracy <= 0.75


def test_sgd_runs():
    m = train(ModelSpec("logistic"), xor_data(), TrainConfig(epochs=2, optimizer="sgd", learning_rate=0.1))
    assert np.isfinite(m.prob1(xor_data())).all()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_detected():
    rows = [(("0", "0"), 0), (("1", "1"), 1)] * 20
    data = TabularDataset.from_records(SCHEMA, rows)
    with pytest.raises(TrainingDivergedError):
        train(ModelSpec("mlp", (4,)), data, TrainConfig(epochs=50, optimizer="sgd", learning_rate=1e200))


def test_config_validation():
    with pytest.raises(ValueError):
        ModelSpec("mlp")
    with pytest.raises(ValueError):
        ModelSpec("logistic", (3,))
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)


def hand_logistic(w, bias):
    params = [(np.array(w, dtype=float).reshape(-1, 1), np.array([bias], dtype=float))]
    return TrainedModel(ModelSpec("logistic"), SCHEMA, params)


def test_manual_forward_pass():
    m = hand_logistic([0.0, 1.0, 0.0, -0.5], 0.25)
    # record (a=1, b=1): z = 1.0 - 0.5 + 0.25
    y0, y1 = predict_confidence(m, ("1", "1"))
    assert y1 == pytest.approx(1 / (1 + np.exp(-0.75)))
    assert y0 + y1 == pytest.approx(1.0)


def test_symmetric_weights_give_half():
    m = hand_logistic([0.3, 0.3, 0.3, 0.3], -0.6)
    assert predict_confidence(m, ("0", "1")) == pytest.approx((0.5, 0.5))
    assert logit(m, ("0", "1")) == pytest.approx(0.0)


def test_logit_of_known_confidence():
    m = hand_logistic([0.0, 0.0, 0.0, 0.0], 1.0)
    assert logit(m, Record(("0", "0"), 1)) == pytest.approx(1.0)
    assert logit(m, ("0", "0"), c=0) == pytest.approx(-1.0)


def test_logits_finite_under_saturation():
    m = hand_logistic([100.0, 100.0, 100.0, 100.0], 0.0)
    z = logit(m, ("0", "0"))
    assert np.isfinite(z) and z == pytest.approx(np.log((1 - 1e-12) / 1e-12))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=5, max_size=5), st.integers(0, 3))
def test_antisymmetry_and_normalisation(wb, cell):
    m = hand_logistic(wb[:4], wb[4])
    values = (str(cell // 2), str(cell % 2))
    y0, y1 = predict_confidence(m, values)
    assert y0 + y1 == pytest.approx(1.0)
    assert logit(m, values, 0) == -logit(m, values, 1)


def test_evaluate_confusion_matrix():
    m = hand_logistic([-1.0, 1.0, 0.0, 0.0], 0.0)  # predicts 1 iff a == "1"
    rows = [
        (("1", "0"), 1), (("1", "1"), 1), (("1", "0"), 0),  # tp tp fp
        (("0", "0"), 1), (("0", "1"), 0), (("0", "0"), 0),  # fn tn tn
    ]
    met = evaluate(m, TabularDataset.from_records(SCHEMA, rows))
    assert met.accuracy == pytest.approx(4 / 6)
    assert met.precision == pytest.approx(2 / 3) and met.recall == pytest.approx(2 / 3)
    assert met.f1 == pytest.approx(2 / 3)


def test_evaluate_perfect_and_no_positives():
    m = hand_logistic([-1.0, 1.0, 0.0, 0.0], 0.0)
    data = TabularDataset.from_records(SCHEMA, [(("1", "0"), 1), (("0", "0"), 0)])
    assert evaluate(m, data).f1 == 1.0
    never = hand_logistic([0, 0, 0, 0], -5.0)
    met = evaluate(never, data)
    assert met.precision == 0.0 and met.precision_undefined


def test_schema_mismatch():
    m = hand_logistic([0, 0, 0, 0], 0)
    other = TabularDataset.from_records(Schema.from_dict({"x": ["0"]}), [(("0",), 0)])
    with pytest.raises(DataError, match="schema"):
        m.prob1(other)


def small_spec():
    codes = [[0, 0], [0, 1], [1, 0]]
    return SynthSpec(SCHEMA, codes, [0.2, 0.3, 0.5], [0.1, 0.5, 0.9], PropertyPredicate.of(a="0"))


def test_bayes_oracle_logits():
    m = bayes_from_spec(small_spec())
    assert logit(m, ("0", "0")) == pytest.approx(np.log(0.1 / 0.9))
    assert logit(m, ("0", "1")) == pytest.approx(0.0)
    with pytest.raises(DataError, match="off-support"):
        logit(m, ("1", "1"))


def test_save_load_round_trip(tmp_path):
    data = synth_sample(small_spec(), 300, 1)
    m = train(ModelSpec("mlp", (3,)), data, TrainConfig(epochs=3))
    m.save(tmp_path / "m.json")
    back = TrainedModel.load(tmp_path / "m.json")
    assert np.array_equal(back.logits(data), m.logits(data))
    b = bayes_from_spec(small_spec())
    b.save(tmp_path / "b.json")
    assert np.array_equal(TrainedModel.load(tmp_path / "b.json").logits(data), b.logits(data))


def test_format_tag_checked(tmp_path):
    m = hand_logistic([0, 0, 0, 0], 0)
    obj = m.to_json()
    obj["format"] = "something-else"
    with pytest.raises(ValueError):
        TrainedModel.from_json(obj)
