import numpy as np
import pytest

from snaplab.data import DataError, PropertyPredicate, Schema, TabularDataset
from snaplab.poison import PoisonConfig, build_poison_set, choose_labels, poison_indices

F = PropertyPredicate.of(segment="P")


def test_exactly_one_amount():
    with pytest.raises(DataError):
        PoisonConfig(F)
    with pytest.raises(DataError):
        PoisonConfig(F, rate=0.01, count=3)


def test_rate_bounds():
    with pytest.raises(DataError):
        PoisonConfig(F, rate=1.0)


def test_sub_property_must_imply_target():
    PoisonConfig(F, poison_property=PropertyPredicate.of(segment="P", age="young"), rate=0.01)
    with pytest.raises(DataError, match="imply"):
        PoisonConfig(F, poison_property=PropertyPredicate.of(age="young"), rate=0.01)


def test_resolve_count_rounds_half_up():
    assert PoisonConfig(F, rate=0.0045).resolve_count(1000) == 5
    assert PoisonConfig(F, count=8).resolve_count(10**6) == 8


def test_json_round_trip():
    cfg = PoisonConfig(F, poison_property=PropertyPredicate.of(segment="P", age="mid"), victim_label=0, target_label=1, count=4)
    assert PoisonConfig.from_json(cfg.to_json()) == cfg


def test_choose_labels_majority_and_tie():
    schema = Schema.from_dict({"segment": ["P", "Q"]})
    ds = TabularDataset(schema, np.array([[0], [0], [0], [1]]), np.array([1, 1, 0, 0]))
    assert choose_labels(ds, F) == (1, 0)
    tie = TabularDataset(schema, np.array([[0], [0]]), np.array([1, 0]))
    assert choose_labels(tie, F) == (0, 1)


def test_poison_set_contents(small_census):
    spec, ds = small_census
    cfg = PoisonConfig(F, rate=0.01).resolved(ds)
    assert (cfg.victim_label, cfg.target_label) == (0, 1)
    ps = build_poison_set(ds, cfg, 10000, seed=5)
    assert len(ps) == 100
    assert F.mask(ps).all() and (ps.labels == 1).all()


def test_poison_drawn_from_victim_label(small_census):
    spec, ds = small_census
    cfg = PoisonConfig(F, count=50).resolved(ds)
    idx = poison_indices(ds, cfg, 10000, seed=1)
    assert (ds.labels[idx] == 0).all() and len(set(idx.tolist())) == 50


def test_sub_property_poisoning(small_census):
    spec, ds = small_census
    sub = PropertyPredicate.of(segment="P", hours="part")
    ps = build_poison_set(ds, PoisonConfig(F, poison_property=sub, count=30), 10000, seed=2)
    assert sub.mask(ps).all()


def test_exclusion_respected(small_census):
    spec, ds = small_census
    cfg = PoisonConfig(F, count=20).resolved(ds)
    first = poison_indices(ds, cfg, 0, seed=1)
    second = poison_indices(ds, cfg, 0, seed=1, exclude=first)
    assert not set(first.tolist()) & set(second.tolist())


def test_exhaustion_errors(small_census):
    spec, ds = small_census
    with pytest.raises(DataError, match="insufficient"):
        build_poison_set(ds, PoisonConfig(F, count=10**6), 0, seed=0)


def test_explicit_labels_must_differ(small_census):
    _, ds = small_census
    with pytest.raises(DataError):
        PoisonConfig(F, victim_label=1, target_label=1, count=1).resolved(ds)
