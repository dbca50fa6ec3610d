"""Shadow-model confidence learning and the distinguishing, existence,
label-only and size-estimation attacks."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Literal, NamedTuple

import numpy as np

from . import theory
from .data import DataError, PropertyPredicate, TabularDataset, construct_world, query_indices, round_half_up
from .models import ModelSpec, TrainConfig, TrainedModel, train
from .poison import PoisonConfig, poison_indices

log = logging.getLogger(__name__)


def derive_seed(root_seed: int, *tags) -> int:
    """Stable 63-bit seed from a root seed and arbitrary tags."""
    h = hashlib.blake2b(repr((int(root_seed),) + tags).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little") >> 1


@dataclass(frozen=True)
class AttackConfig:
    f: PropertyPredicate
    t0: float
    t1: float
    n: int
    poison: PoisonConfig
    k: int = 4
    query_size: int = 1000
    shadow_query_size: int | None = None
    model: ModelSpec = ModelSpec("logistic")
    train: TrainConfig = TrainConfig()
    root_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.t0 < self.t1 <= 1:
            raise ValueError("need 0 <= t0 < t1 <= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.query_size < 1:
            raise ValueError("query_size must be >= 1")

    @property
    def ds_size(self) -> int:
        return self.shadow_query_size or self.query_size

    @property
    def poison_count(self) -> int:
        return self.poison.resolve_count(self.n)

    @property
    def clean_size(self) -> int:
        return self.n - self.poison_count

    def resolved(self, pool: TabularDataset) -> "AttackConfig":
        return replace(self, poison=self.poison.resolved(pool))

    def to_json(self) -> dict:
        return {
            "f": self.f.to_json(),
            "t0": self.t0,
            "t1": self.t1,
            "n": self.n,
            "k": self.k,
            "query_size": self.query_size,
            "shadow_query_size": self.shadow_query_size,
            "poison": self.poison.to_json(),
            "model": {"kind": self.model.kind, "hidden_layers": list(self.model.hidden_layers)},
            "train": {**self.train.__dict__, "betas": list(self.train.betas)},
            "root_seed": self.root_seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AttackConfig":
        f = PropertyPredicate.from_json(obj["f"])
        poison = dict(obj.get("poison", {}))
        poison.setdefault("target_property", obj["f"])
        model = obj.get("model", {})
        tc = dict(obj.get("train", {}))
        if "betas" in tc:
            tc["betas"] = tuple(tc["betas"])
        return cls(
            f=f,
            t0=obj["t0"],
            t1=obj["t1"],
            n=obj["n"],
            poison=PoisonConfig.from_json(poison),
            k=obj.get("k", 4),
            query_size=obj.get("query_size", 1000),
            shadow_query_size=obj.get("shadow_query_size"),
            model=ModelSpec(model.get("kind", "logistic"), tuple(model.get("hidden_layers", ()))),
            train=TrainConfig(**tc),
            root_seed=obj.get("root_seed", 0),
        )


@dataclass(frozen=True, eq=False)
class DistinguishingTest:
    """Fitted world Gaussians plus threshold; ``high_world`` is decided on the ``> T`` side."""

    pair: theory.GaussianPair
    threshold: theory.ThresholdResult
    high_world: int
    victim_label: int
    target_label: int
    t0: float
    t1: float
    world_logits: tuple[np.ndarray, np.ndarray] = field(repr=False, default=(np.empty(0), np.empty(0)))

    @property
    def T(self) -> float:
        return self.threshold.T


class AttackOutcome(NamedTuple):
    guess: int
    votes_above_T: int
    total_queries: int
    logit_mean: float
    logit_std: float


class Iteration(NamedTuple):
    t_hat: float
    overlap: float
    left: int
    right: int
    interval: tuple[float, float]


class EstimationTrace(NamedTuple):
    iterations: list[Iteration]
    estimate: float
    stop_reason: Literal["overlap", "iteration_cap", "exhausted"]
    shadow_models: int


def fit_gaussian(values: np.ndarray) -> tuple[float, float]:
    """Maximum-likelihood mean and (population) standard deviation."""
    values = np.asarray(values, dtype=float)
    sd = float(values.std())
    if not sd > 0:
        raise DataError("degenerate logit distribution")
    return float(values.mean()), sd


def split_attacker_pool(cfg: AttackConfig, pool: TabularDataset):
    """Carve the poison set and ``D_s`` out of the attacker pool.

    Returns ``(cfg, poison_set, D_s, world_pool)`` with labels resolved and
    the three datasets pairwise disjoint.
    """
    cfg = cfg.resolved(pool)
    pc = cfg.poison
    p_idx = poison_indices(pool, pc, cfg.n, derive_seed(cfg.root_seed, "poison"))
    s_idx = query_indices(pool, cfg.f, pc.victim_label, cfg.ds_size, derive_seed(cfg.root_seed, "D_s"), exclude=p_idx)
    poison_set = pool.take(p_idx).with_labels(pc.target_label)
    return cfg, poison_set, pool.take(s_idx), pool.drop(np.concatenate([p_idx, s_idx]))


def train_shadow(cfg: AttackConfig, world_pool: TabularDataset, poison_set: TabularDataset, t: float, *tags) -> TrainedModel:
    data = construct_world(world_pool, cfg.f, t, cfg.n - len(poison_set), derive_seed(cfg.root_seed, "world", *tags))
    tc = replace(cfg.train, seed=derive_seed(cfg.root_seed, "init", *tags))
    return train(cfg.model, data.concat(poison_set), tc)


def fit_test(cfg: AttackConfig, logits0: np.ndarray, logits1: np.ndarray) -> DistinguishingTest:
    mu0, s0 = fit_gaussian(logits0)
    mu1, s1 = fit_gaussian(logits1)
    pair = theory.GaussianPair(mu0, s0, mu1, s1)
    return DistinguishingTest(
        pair=pair,
        threshold=theory.optimal_threshold(pair),
        high_world=0 if mu0 > mu1 else 1,
        victim_label=int(cfg.poison.victim_label),
        target_label=int(cfg.poison.target_label),
        t0=cfg.t0,
        t1=cfg.t1,
        world_logits=(np.asarray(logits0), np.asarray(logits1)),
    )


def learn_confidence_model(
    cfg: AttackConfig, attacker_pool: TabularDataset, poison_set: TabularDataset | None = None
) -> tuple[DistinguishingTest, TabularDataset]:
    """Train ``k`` shadow models per world and fit the distinguishing test.

    When ``poison_set`` is omitted it is drawn from the attacker pool. Use
    ``split_attacker_pool`` first to share one poison set with the owner.
    """
    cfg, own_poison, D_s, world_pool = split_attacker_pool(cfg, attacker_pool)
    poison_set = own_poison if poison_set is None else poison_set
    logits = []
    for world, t in enumerate((cfg.t0, cfg.t1)):
        per_model = [
            train_shadow(cfg, world_pool, poison_set, t, world, i).logits(D_s, cfg.poison.target_label)
            for i in range(cfg.k)
        ]
        logits.append(np.concatenate(per_model))
    return fit_test(cfg, *logits), D_s


def _outcome(guess: int, above: int, z: np.ndarray) -> AttackOutcome:
    return AttackOutcome(guess, above, int(z.size), float(z.mean()), float(z.std()))


def decide(test: DistinguishingTest, z: np.ndarray, T: float | None = None) -> AttackOutcome:
    """Majority vote of logits against the threshold; ties go to the larger-t world."""
    T = test.T if T is None else T
    above = int((z > T).sum())
    below = z.size - above
    if above > below:
        guess = test.high_world
    elif below > above:
        guess = 1 - test.high_world
    else:
        guess = 1
    return _outcome(guess, above, z)


def distinguish(test: DistinguishingTest, target: TrainedModel, D_q: TabularDataset) -> AttackOutcome:
    if len(D_q) == 0:
        raise DataError("empty query set")
    return decide(test, target.logits(D_q, test.target_label))


def property_existence(
    cfg: AttackConfig, attacker_pool: TabularDataset, target: TrainedModel, D_q: TabularDataset | None = None
) -> AttackOutcome:
    """Distinguishing test with ``t0 = 0``; the poison amount must be an absolute count."""
    if cfg.t0 != 0:
        raise ValueError("property existence needs t0 = 0")
    if cfg.poison.count is None:
        raise ValueError("property existence takes an absolute poison count")
    test, D_s = learn_confidence_model(cfg, attacker_pool)
    return distinguish(test, target, D_s if D_q is None else D_q)


def label_only_distinguish(target_label: int, target: TrainedModel, D_q: TabularDataset) -> AttackOutcome:
    """Vote with predicted labels only: world 0 iff a strict majority is predicted ``target_label``."""
    if len(D_q) == 0:
        raise DataError("empty query set")
    pred = target.predict(D_q)
    hits = int((pred == target_label).sum())
    guess = 0 if hits > len(D_q) / 2 else 1
    # summary stats are of the 0/1 votes: no confidences are read
    return _outcome(guess, hits, (pred == target_label).astype(float))


class CleanCalibration(NamedTuple):
    pi_v: float
    mu: float
    sigma: float


def calibrate_clean(cfg: AttackConfig, attacker_pool: TabularDataset, models: int = 1) -> CleanCalibration:
    """Estimate ``pi_v`` from the pool and the clean-logit Gaussian from unpoisoned shadows at ``t1``."""
    cfg, _, D_s, world_pool = split_attacker_pool(cfg, attacker_pool)
    inside = attacker_pool.labels[cfg.f.mask(attacker_pool)]
    pi_v = float((inside == cfg.poison.victim_label).mean())
    empty = TabularDataset.empty(attacker_pool.schema)
    z = np.concatenate(
        [train_shadow(cfg, world_pool, empty, cfg.t1, "clean", i).logits(D_s, cfg.poison.target_label) for i in range(models)]
    )
    mu, sigma = fit_gaussian(z)
    return CleanCalibration(pi_v, mu, sigma)


def label_only_poison_rate(cfg: AttackConfig, attacker_pool: TabularDataset) -> theory.LabelOnlyRate:
    cal = calibrate_clean(cfg, attacker_pool)
    return theory.label_only_rate(cfg.t0, cfg.t1, cal.pi_v, cal.mu, cal.sigma)


def estimate_property_size(
    cfg: AttackConfig,
    world_pool: TabularDataset,
    poison_set: TabularDataset,
    target: TrainedModel,
    D_q: TabularDataset,
    k_per_guess: int = 2,
    precision: float = 0.001,
    max_iter: int = 6,
    overlap_threshold: float = 0.95,
) -> EstimationTrace:
    """Binary search for the property fraction of the target's training set.

    Each probe trains ``k_per_guess`` shadows at fraction ``t_hat`` with the
    same poison set and measures how many of their ``D_q`` logits land in
    the target's ``[min, max]`` logit range. Smaller fractions shift logits
    up, so shadow logits right of the range mean ``t_hat`` is too small.
    When no probe reaches the overlap threshold the estimate is the probe
    with the highest overlap, ties broken by closest mean logit.
    """
    v_target = int(cfg.poison.target_label)
    z = target.logits(D_q, v_target)
    lo_z, hi_z = float(z.min()), float(z.max())
    if lo_z == hi_z:
        raise DataError("degenerate target logit interval")
    grid = round_half_up(1 / precision)
    lo, hi = 0, grid
    iterations: list[Iteration] = []
    scores = []
    reason = "iteration_cap"
    for _ in range(max_iter):
        if hi - lo <= 1:
            reason = "exhausted"
            break
        mid = (lo + hi) // 2
        t_hat = mid * precision
        shadow = np.concatenate(
            [
                train_shadow(cfg, world_pool, poison_set, t_hat, "estimate", mid, i).logits(D_q, v_target)
                for i in range(k_per_guess)
            ]
        )
        left = int((shadow < lo_z).sum())
        right = int((shadow > hi_z).sum())
        overlap = 1 - (left + right) / shadow.size
        iterations.append(Iteration(t_hat, overlap, left, right, (lo * precision, hi * precision)))
        scores.append((overlap, -abs(shadow.mean() - z.mean()), t_hat))
        log.debug("probe t=%.3f overlap=%.3f left=%d right=%d", t_hat, overlap, left, right)
        if overlap >= overlap_threshold:
            return EstimationTrace(iterations, t_hat, "overlap", k_per_guess * len(iterations))
        if right > left:
            lo = mid
        else:
            hi = mid
    estimate = max(scores)[2] if scores else float("nan")
    return EstimationTrace(iterations, estimate, reason, k_per_guess * len(iterations))
