"""Categorical tabular datasets, property predicates and synthetic distributions.

Datasets are stored column-coded: every feature value is replaced by its
index in the feature's domain, so a dataset is an ``(n, d)`` integer array
plus a length-``n`` label vector. ``Record`` objects are materialised only
when callers iterate.
"""

from __future__ import annotations

import builtins
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed data, schemas or sampling requests."""


def round_half_up(x: float) -> int:
    """Nearest integer with ties rounded up; guards against ``0.035 * 10000`` drift."""
    return int(math.floor(round(x, 9) + 0.5))


@dataclass(frozen=True)
class Schema:
    features: tuple[tuple[str, tuple[str, ...]], ...]
    label_domain: tuple[int, int] = (0, 1)

    def __post_init__(self):
        names = [name for name, _ in self.features]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate feature names in {names}")
        for name, values in self.features:
            if len(set(values)) != len(values):
                raise DataError(f"duplicate values in domain of {name!r}")
        if tuple(self.label_domain) != (0, 1):
            raise DataError("label domain must be exactly {0, 1}")

    @classmethod
    def from_dict(cls, domains: dict[str, Sequence]) -> "Schema":
        return cls(tuple((str(k), tuple(str(v) for v in vals)) for k, vals in domains.items()))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.features)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(values) for _, values in self.features)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown feature {name!r}") from None

    def code(self, name: str, value) -> int:
        values = self.features[self.index(name)][1]
        try:
            return values.index(str(value))
        except ValueError:
            raise DataError(f"value {value!r} not in domain of {name!r}") from None

    def encode(self, values: Sequence) -> np.ndarray:
        if len(values) != len(self.features):
            raise DataError(f"expected {len(self.features)} values, got {len(values)}")
        return np.array([self.code(name, v) for name, v in zip(self.names, values)], dtype=np.int64)

    def decode(self, codes: Sequence[int]) -> tuple[str, ...]:
        return tuple(self.features[j][1][int(c)] for j, c in enumerate(codes))

    def to_json(self) -> list[dict]:
        return [{"name": name, "values": list(values)} for name, values in self.features]

    @classmethod
    def from_json(cls, items: list[dict]) -> "Schema":
        return cls(tuple((str(d["name"]), tuple(str(v) for v in d["values"])) for d in items))


class Record(NamedTuple):
    values: tuple[str, ...]
    label: int


@dataclass(frozen=True, eq=False)
class TabularDataset:
    """A schema plus coded feature matrix ``codes`` and binary ``labels``."""

    schema: Schema
    codes: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64).reshape(-1, len(self.schema.features))
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if codes.shape[0] != labels.shape[0]:
            raise DataError("codes and labels differ in length")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise DataError("non-binary label")
        if codes.size:
            sizes = np.array(self.schema.sizes)
            if (codes < 0).any() or (codes >= sizes).any():
                raise DataError("feature code outside its domain")
        codes.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_records(cls, schema: Schema, records: Iterable) -> "TabularDataset":
        rows, labels = [], []
        for values, label in records:
            rows.append(schema.encode(values))
            labels.append(int(label))
        codes = np.array(rows, dtype=np.int64).reshape(-1, len(schema.features))
        return cls(schema, codes, np.array(labels, dtype=np.int64))

    @classmethod
    def empty(cls, schema: Schema) -> "TabularDataset":
        return cls(schema, np.zeros((0, len(schema.features)), np.int64), np.zeros(0, np.int64))

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __iter__(self) -> Iterator[Record]:
        for row, label in zip(self.codes, self.labels):
            yield Record(self.schema.decode(row), int(label))

    def __getitem__(self, i: int) -> Record:
        return Record(self.schema.decode(self.codes[i]), int(self.labels[i]))

    @property
    def records(self) -> list[Record]:
        return list(self)

    def take(self, indices) -> "TabularDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return TabularDataset(self.schema, self.codes[idx], self.labels[idx])

    def drop(self, indices) -> "TabularDataset":
        keep = np.ones(len(self), dtype=bool)
        keep[np.asarray(indices, dtype=np.int64)] = False
        return self.take(np.flatnonzero(keep))

    def with_labels(self, labels) -> "TabularDataset":
        return TabularDataset(self.schema, self.codes, np.broadcast_to(labels, len(self)).copy())

    def concat(self, *others: "TabularDataset") -> "TabularDataset":
        for other in others:
            if other.schema != self.schema:
                raise DataError("schema mismatch in concat")
        return TabularDataset(
            self.schema,
            np.concatenate([self.codes] + [o.codes for o in others]),
            np.concatenate([self.labels] + [o.labels for o in others]),
        )

    def same_as(self, other: "TabularDataset") -> bool:
        return (
            self.schema == other.schema
            and np.array_equal(self.codes, other.codes)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True)
class PropertyPredicate:
    """Conjunction of ``feature == value`` clauses."""

    clauses: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple((str(f), str(v)) for f, v in self.clauses))

    @classmethod
    def of(cls, **clauses) -> "PropertyPredicate":
        return cls(tuple(clauses.items()))

    def check(self, schema: Schema) -> None:
        for name, value in self.clauses:
            schema.code(name, value)

    def mask(self, data: TabularDataset) -> np.ndarray:
        return self.mask_codes(data.schema, data.codes)

    def mask_codes(self, schema: Schema, codes: np.ndarray) -> np.ndarray:
        self.check(schema)
        out = np.ones(codes.shape[0], dtype=bool)
        for name, value in self.clauses:
            out &= codes[:, schema.index(name)] == schema.code(name, value)
        return out

    def __call__(self, schema: Schema, values: Sequence) -> bool:
        return bool(self.mask_codes(schema, schema.encode(values)[None, :])[0])

    def implies(self, other: "PropertyPredicate") -> bool:
        """True when every clause of ``other`` also appears in ``self``."""
        return set(other.clauses) <= set(self.clauses)

    def to_json(self) -> list[dict]:
        return [{"feature": f, "value": v} for f, v in self.clauses]

    @classmethod
    def from_json(cls, items) -> "PropertyPredicate":
        if isinstance(items, dict):
            return cls(tuple(items.items()))
        return cls(tuple((d["feature"], d["value"]) for d in items))


@dataclass(frozen=True, eq=False)
class SynthSpec:
    """A finite joint distribution over full feature assignments and a binary label.

    ``cell_codes[i]`` is a coded assignment with probability ``probs[i]`` and
    label conditional ``p_y1[i] = P[Y=1 | cell i]``.
    """

    schema: Schema
    cell_codes: np.ndarray
    probs: np.ndarray
    p_y1: np.ndarray
    property: PropertyPredicate = field(default_factory=lambda: PropertyPredicate(()))

    def __post_init__(self):
        codes = np.asarray(self.cell_codes, dtype=np.int64).reshape(-1, len(self.schema.features))
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        p_y1 = np.asarray(self.p_y1, dtype=float).reshape(-1)
        if not (codes.shape[0] == probs.size == p_y1.size) or probs.size == 0:
            raise DataError("cells, probabilities and conditionals must align and be non-empty")
        if any(size == 0 for size in self.schema.sizes):
            raise DataError("every feature domain must be non-empty")
        if (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-12:
            raise DataError(f"cell probabilities must be non-negative and sum to 1 (got {probs.sum()!r})")
        if ((p_y1 < 0) | (p_y1 > 1)).any():
            raise DataError("conditionals must lie in [0, 1]")
        if len({tuple(r) for r in codes}) != codes.shape[0]:
            raise DataError("duplicate cell assignment")
        if (codes < 0).any() or (codes >= np.array(self.schema.sizes)).any():
            raise DataError("cell value outside its domain")
        self.property.check(self.schema)
        for arr in (codes, probs, p_y1):
            arr.setflags(write=False)
        object.__setattr__(self, "cell_codes", codes)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "p_y1", p_y1)

    @builtins.property
    def property_mask(self) -> np.ndarray:
        return self.property.mask_codes(self.schema, self.cell_codes)

    def cell_of(self, codes: np.ndarray) -> np.ndarray:
        """Cell index for each coded row, ``-1`` when off-support."""
        lookup = {tuple(r): i for i, r in enumerate(self.cell_codes.tolist())}
        return np.array([lookup.get(tuple(r), -1) for r in np.atleast_2d(codes).tolist()], dtype=np.int64)

    def to_json(self) -> dict:
        return {
            "features": self.schema.to_json(),
            "cells": [
                {"assign": dict(zip(self.schema.names, self.schema.decode(row))), "prob": float(pr), "p_y1": float(q)}
                for row, pr, q in zip(self.cell_codes, self.probs, self.p_y1)
            ],
            "property": self.property.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SynthSpec":
        schema = Schema.from_json(obj["features"])
        cells = obj["cells"]
        codes = [schema.encode([c["assign"][name] for name in schema.names]) for c in cells]
        return cls(
            schema,
            np.array(codes, dtype=np.int64).reshape(-1, len(schema.features)),
            np.array([c["prob"] for c in cells], dtype=float),
            np.array([c["p_y1"] for c in cells], dtype=float),
            PropertyPredicate.from_json(obj.get("property", [])),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "SynthSpec":
        return cls.from_json(json.loads(Path(path).read_text()))


def load_csv(path, label_column: str = "label") -> TabularDataset:
    """Read a header-first CSV; feature domains are the observed values in first-seen order."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} has no header row") from None
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"ragged row at line {lineno}: {len(row)} fields, expected {len(header)}")
            rows.append(row)
    li = header.index(label_column)
    feature_cols = [j for j in range(len(header)) if j != li]
    domains: dict[str, dict[str, int]] = {header[j]: {} for j in feature_cols}
    codes = np.zeros((len(rows), len(feature_cols)), dtype=np.int64)
    labels = np.zeros(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        if row[li].strip() not in ("0", "1"):
            raise DataError(f"non-binary label {row[li]!r} on row {i + 2}")
        labels[i] = int(row[li])
        for k, j in enumerate(feature_cols):
            codes[i, k] = domains[header[j]].setdefault(row[j], len(domains[header[j]]))
    schema = Schema(tuple((name, tuple(d)) for name, d in domains.items()))
    return TabularDataset(schema, codes, labels)


def write_csv(data: TabularDataset, path, label_column: str = "label") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.schema.names) + [label_column])
        for values, label in data:
            writer.writerow(list(values) + [label])


def synth_sample(spec: SynthSpec, n: int, seed: int) -> TabularDataset:
    if n < 0:
        raise DataError("n must be non-negative")
    rng = np.random.default_rng(seed)
    cells = rng.choice(spec.probs.size, size=n, p=spec.probs)
    labels = (rng.random(n) < spec.p_y1[cells]).astype(np.int64)
    return TabularDataset(spec.schema, spec.cell_codes[cells], labels)


def exact_marginals(spec: SynthSpec, v: int) -> tuple[float, float]:
    """Exact ``t = P[f(X)=1]`` and ``pi_v = P[Y=v | f(X)=1]``."""
    mask = spec.property_mask
    t = float(spec.probs[mask].sum())
    if t <= 0:
        raise DataError("empty property")
    p_v = spec.p_y1 if v == 1 else 1.0 - spec.p_y1
    return t, float((spec.probs[mask] * p_v[mask]).sum() / t)


def mix_poison_spec(spec: SynthSpec, v: int, v_target: int, p: float) -> SynthSpec:
    """Exact distribution of ``p * D_p + (1 - p) * D``.

    ``D_p`` draws ``(x, y)`` from the clean distribution restricted to
    ``f(x) = 1, y = v`` and relabels it ``v_target``.
    """
    if not 0 <= p < 1:
        raise DataError("poison rate must lie in [0, 1)")
    if v == v_target:
        raise DataError("victim and target labels must differ")
    p_v = spec.p_y1 if v == 1 else 1.0 - spec.p_y1
    victim = np.where(spec.property_mask, spec.probs * p_v, 0.0)
    mass = victim.sum()
    if mass <= 0:
        raise DataError("zero (f=1, Y=v) mass")
    if p == 0:
        return spec
    poison = victim / mass
    probs = (1 - p) * spec.probs + p * poison
    p_target_clean = spec.p_y1 if v_target == 1 else 1.0 - spec.p_y1
    joint_target = (1 - p) * spec.probs * p_target_clean + p * poison
    with np.errstate(invalid="ignore", divide="ignore"):
        p_target = np.where(probs > 0, joint_target / probs, p_target_clean)
    p_target = np.clip(p_target, 0.0, 1.0)
    p_y1 = p_target if v_target == 1 else 1.0 - p_target
    probs = probs / probs.sum()
    return SynthSpec(spec.schema, spec.cell_codes, probs, p_y1, spec.property)


def split(pool: TabularDataset, ratio: float = 0.5, seed: int = 0) -> tuple[TabularDataset, TabularDataset]:
    """Disjoint without-replacement split; the first part holds ``round(ratio * n)`` rows."""
    if not 0 <= ratio <= 1:
        raise DataError("ratio must lie in [0, 1]")
    perm = np.random.default_rng(seed).permutation(len(pool))
    k = round_half_up(ratio * len(pool))
    return pool.take(np.sort(perm[:k])), pool.take(np.sort(perm[k:]))


def construct_world(
    pool: TabularDataset, f: PropertyPredicate, t: float, n: int, seed: int
) -> TabularDataset:
    """Draw ``n`` records without replacement with exactly ``round(t * n)`` satisfying ``f``."""
    if not 0 <= t <= 1:
        raise DataError("target fraction must lie in [0, 1]")
    k = round_half_up(t * n)
    mask = f.mask(pool)
    inside, outside = np.flatnonzero(mask), np.flatnonzero(~mask)
    if inside.size < k:
        raise DataError(f"insufficient pool: need {k} property records, have {inside.size}")
    if outside.size < n - k:
        raise DataError(f"insufficient pool: need {n - k} non-property records, have {outside.size}")
    rng = np.random.default_rng(seed)
    chosen = np.concatenate(
        [rng.choice(inside, size=k, replace=False), rng.choice(outside, size=n - k, replace=False)]
    )
    return pool.take(rng.permutation(chosen))


def query_indices(
    pool: TabularDataset, f: PropertyPredicate, v: int, m: int, seed: int, exclude=()
) -> np.ndarray:
    eligible = f.mask(pool) & (pool.labels == v)
    exclude = np.asarray(exclude, dtype=np.int64)
    if exclude.size:
        eligible[exclude] = False
    candidates = np.flatnonzero(eligible)
    if candidates.size < m:
        raise DataError(f"insufficient eligible records: need {m}, have {candidates.size}")
    return np.random.default_rng(seed).choice(candidates, size=m, replace=False)


def sample_query_set(
    pool: TabularDataset, f: PropertyPredicate, v: int, m: int = 1000, seed: int = 0, exclude=()
) -> TabularDataset:
    """Records with ``f(x) = 1`` and label ``v``, skipping pool rows listed in ``exclude``."""
    return pool.take(query_indices(pool, f, v, m, seed, exclude))
