"""Label-flip poison sets drawn from the attacker's pool."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal, Union

import numpy as np

from .data import DataError, PropertyPredicate, TabularDataset, query_indices, round_half_up

Label = Union[int, Literal["auto"]]


@dataclass(frozen=True)
class PoisonConfig:
    """What to poison and how much.

    Exactly one of ``rate`` (fraction of the owner's training size) or
    ``count`` (absolute number of records) is set. ``poison_property``
    defaults to ``target_property`` and must imply it when given.
    """

    target_property: PropertyPredicate
    poison_property: PropertyPredicate | None = None
    victim_label: Label = "auto"
    target_label: Label = "auto"
    rate: float | None = None
    count: int | None = None

    def __post_init__(self):
        if (self.rate is None) == (self.count is None):
            raise DataError("give exactly one of rate or count")
        if self.rate is not None and not 0 <= self.rate < 1:
            raise DataError("poison rate must lie in [0, 1)")
        if self.count is not None and self.count < 0:
            raise DataError("poison count must be non-negative")
        if not self.effective_property.implies(self.target_property):
            raise DataError("poison property must imply the target property")

    @property
    def effective_property(self) -> PropertyPredicate:
        return self.poison_property or self.target_property

    def resolve_count(self, n: int) -> int:
        return self.count if self.count is not None else round_half_up(self.rate * n)

    def resolved(self, pool: TabularDataset) -> "PoisonConfig":
        """Fill in ``auto`` labels from the pool's target subpopulation."""
        v, v_target = self.victim_label, self.target_label
        if v == "auto" or v_target == "auto":
            maj, mino = choose_labels(pool, self.target_property)
            v = maj if v == "auto" else v
            v_target = (1 - v) if v_target == "auto" else v_target
        if v == v_target:
            raise DataError("victim and target labels must differ")
        return replace(self, victim_label=int(v), target_label=int(v_target))

    def to_json(self) -> dict:
        return {
            "target_property": self.target_property.to_json(),
            "poison_property": None if self.poison_property is None else self.poison_property.to_json(),
            "victim_label": self.victim_label,
            "target_label": self.target_label,
            "rate": self.rate,
            "count": self.count,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PoisonConfig":
        pp = obj.get("poison_property")
        return cls(
            target_property=PropertyPredicate.from_json(obj["target_property"]),
            poison_property=None if pp is None else PropertyPredicate.from_json(pp),
            victim_label=obj.get("victim_label", "auto"),
            target_label=obj.get("target_label", "auto"),
            rate=obj.get("rate"),
            count=obj.get("count"),
        )


def choose_labels(pool: TabularDataset, f: PropertyPredicate) -> tuple[int, int]:
    """Victim label = majority label inside ``f`` (ties go to 0); target = the other."""
    labels = pool.labels[f.mask(pool)]
    if labels.size == 0:
        raise DataError("empty subpopulation")
    ones = int(labels.sum())
    v = 1 if ones > labels.size - ones else 0
    return v, 1 - v


def poison_indices(pool: TabularDataset, cfg: PoisonConfig, n: int, seed: int, exclude=()) -> np.ndarray:
    if cfg.victim_label == "auto" or cfg.target_label == "auto":
        cfg = cfg.resolved(pool)
    if cfg.victim_label == cfg.target_label:
        raise DataError("victim and target labels must differ")
    count = cfg.resolve_count(n)
    return query_indices(pool, cfg.effective_property, cfg.victim_label, count, seed, exclude)


def build_poison_set(
    pool: TabularDataset, cfg: PoisonConfig, n: int, seed: int, exclude=()
) -> TabularDataset:
    """Sample ``count`` records with the poison property and victim label, flipped to the target label."""
    if cfg.victim_label == "auto" or cfg.target_label == "auto":
        cfg = cfg.resolved(pool)
    idx = poison_indices(pool, cfg, n, seed, exclude)
    return pool.take(idx).with_labels(cfg.target_label)
