"""Experiment orchestration: sweep one attack parameter, measure distinguishing
accuracy over many owner models and query sets, persist everything."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.stats import binomtest

from . import theory
from .attack import (
    AttackConfig,
    CleanCalibration,
    calibrate_clean,
    derive_seed,
    distinguish,
    label_only_distinguish,
    learn_confidence_model,
    split_attacker_pool,
)
from .data import TabularDataset, construct_world, split
from .models import evaluate, train

Axis = Literal["poison_rate", "poison_count", "k", "query_size", "t_separation"]
OBS_FIELDS = [
    "obs", "axis_index", "axis_value", "trial", "world", "target", "query_set",
    "guess", "correct", "votes", "total", "precision", "recall", "f1",
]


class ExperimentInterrupted(RuntimeError):
    def __init__(self, message: str, resume_token: str):
        super().__init__(f"{message} (resume with token {resume_token})")
        self.resume_token = resume_token


@dataclass(frozen=True)
class ExperimentPlan:
    attack: AttackConfig
    axis: Axis = "poison_rate"
    values: tuple = ()
    trials: int = 5
    targets_per_world: int = 10
    query_sets_per_target: int = 10
    mode: Literal["distinguish", "label_only"] = "distinguish"
    eval_size: int = 2000
    calibrate: bool = False
    disjoint_queries: bool = False

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if min(self.trials, self.targets_per_world, self.query_sets_per_target) < 1:
            raise ValueError("trials, targets_per_world and query_sets_per_target must be >= 1")

    @property
    def observations_per_trial(self) -> int:
        return 2 * self.targets_per_world * self.query_sets_per_target

    def config_for(self, value) -> AttackConfig:
        cfg = self.attack
        if self.axis == "poison_rate":
            return replace(cfg, poison=replace(cfg.poison, rate=float(value), count=None))
        if self.axis == "poison_count":
            return replace(cfg, poison=replace(cfg.poison, rate=None, count=int(value)))
        if self.axis == "k":
            return replace(cfg, k=int(value))
        if self.axis == "query_size":
            return replace(cfg, query_size=int(value))
        if self.axis == "t_separation":
            return replace(cfg, t1=float(value))
        raise ValueError(f"unknown axis {self.axis!r}")

    def to_json(self) -> dict:
        return {
            "attack": self.attack.to_json(),
            "axis": self.axis,
            "values": list(self.values),
            "trials": self.trials,
            "targets_per_world": self.targets_per_world,
            "query_sets_per_target": self.query_sets_per_target,
            "mode": self.mode,
            "eval_size": self.eval_size,
            "calibrate": self.calibrate,
            "disjoint_queries": self.disjoint_queries,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentPlan":
        rest = {k: v for k, v in obj.items() if k != "attack"}
        return cls(attack=AttackConfig.from_json(obj["attack"]), **rest)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:12]


@dataclass
class AxisResult:
    axis_value: float
    accuracy: float
    ci_lo: float
    ci_hi: float
    n_obs: int
    precision: float
    recall: float
    f1: float
    seconds: float


@dataclass
class ExperimentReport:
    plan: ExperimentPlan
    results: list[AxisResult]
    observations: list[dict]
    calibration: CleanCalibration | None = None
    logits: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "plan_hash": self.plan.digest(),
            "plan": self.plan.to_json(),
            "results": [r.__dict__ for r in self.results],
            "calibration": None if self.calibration is None else self.calibration._asdict(),
            "seeds": {"root_seed": self.plan.attack.root_seed},
        }

    def accuracy_from_observations(self) -> dict:
        out: dict = {}
        for row in self.observations:
            out.setdefault(row["axis_index"], []).append(int(row["correct"]))
        return {k: sum(v) / len(v) for k, v in sorted(out.items())}


def binomial_ci(successes: int, n: int) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(successes, n).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def _run_cell(plan: ExperimentPlan, cfg: AttackConfig, attacker, owner, eval_set, ai: int, trial: int):
    cfg, poison_set, D_s, world_pool = split_attacker_pool(cfg, attacker)
    if plan.disjoint_queries:
        # fresh f=1, y=v records that played no part in fitting the threshold
        pool = world_pool.take(np.flatnonzero(cfg.f.mask(world_pool) & (world_pool.labels == cfg.poison.victim_label)))
        D_s = pool.take(np.arange(min(len(pool), cfg.query_size * 4)))
    test = None
    if plan.mode == "distinguish":
        test, _ = learn_confidence_model(cfg, attacker, poison_set)
    rows = []
    for world, t in enumerate((cfg.t0, cfg.t1)):
        for j in range(plan.targets_per_world):
            tags = ("owner", world, j)
            data = construct_world(owner, cfg.f, t, cfg.clean_size, derive_seed(cfg.root_seed, *tags))
            target = train(cfg.model, data.concat(poison_set), replace(cfg.train, seed=derive_seed(cfg.root_seed, "init", *tags)))
            metrics = evaluate(target, eval_set)
            rng = np.random.default_rng(derive_seed(cfg.root_seed, "queries", world, j))
            for q in range(plan.query_sets_per_target):
                m = min(cfg.query_size, len(D_s))
                D_q = D_s.take(np.sort(rng.choice(len(D_s), size=m, replace=False)))
                if plan.mode == "label_only":
                    out = label_only_distinguish(cfg.poison.target_label, target, D_q)
                else:
                    out = distinguish(test, target, D_q)
                rows.append({
                    "axis_index": ai, "axis_value": plan.values[ai], "trial": trial, "world": world,
                    "target": j, "query_set": q, "guess": out.guess, "correct": int(out.guess == world),
                    "votes": out.votes_above_T, "total": out.total_queries,
                    "precision": metrics.precision, "recall": metrics.recall, "f1": metrics.f1,
                })
    return rows, test


def _read_observations(path: Path) -> list[dict]:
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    ints = {"obs", "axis_index", "trial", "world", "target", "query_set", "guess", "correct", "votes", "total"}
    return [{k: (int(v) if k in ints else float(v)) for k, v in r.items()} for r in rows]


def _write_observations(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=OBS_FIELDS)
        writer.writeheader()
        for i, row in enumerate(rows):
            writer.writerow({"obs": i, **row})


def run_experiment(
    plan: ExperimentPlan, dataset: TabularDataset, out_dir=None, resume: bool = False
) -> ExperimentReport:
    """Run every (axis value, trial) cell of ``plan`` on ``dataset``.

    The dataset is split 50/50 into attacker and owner pools. Each trial
    learns one distinguishing test (skipped in label-only mode) and trains
    ``targets_per_world`` owner models per world, each queried with
    ``query_sets_per_target`` query sets drawn from ``D_s``. With
    ``out_dir`` set, results land in ``out_dir/<plan hash>/``; a failure
    flushes completed cells and raises ``ExperimentInterrupted``.
    """
    root = plan.attack.root_seed
    attacker, owner = split(dataset, 0.5, derive_seed(root, "split"))
    eval_rng = np.random.default_rng(derive_seed(root, "eval"))
    eval_set = attacker.take(np.sort(eval_rng.choice(len(attacker), size=min(plan.eval_size, len(attacker)), replace=False)))

    run_dir = None
    done: list[dict] = []
    if out_dir is not None:
        run_dir = Path(out_dir) / plan.digest()
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "plan.json").write_text(json.dumps(plan.to_json(), indent=1))
        obs_path = run_dir / "observations.csv"
        if resume and obs_path.exists():
            done = [{k: v for k, v in r.items() if k != "obs"} for r in _read_observations(obs_path)]
    per_cell = plan.observations_per_trial

    calibration = calibrate_clean(plan.attack, attacker) if plan.calibrate else None
    cells: dict[tuple[int, int], list[dict]] = {}
    for r in done:
        cells.setdefault((r["axis_index"], r["trial"]), []).append(r)
    cells = {k: v for k, v in cells.items() if len(v) == per_cell}
    logits: dict = {}
    seconds: dict[int, float] = {}
    try:
        for ai, value in enumerate(plan.values):
            start = time.perf_counter()
            base = plan.config_for(value)
            for trial in range(plan.trials):
                if (ai, trial) in cells:
                    continue
                cfg = replace(base, root_seed=derive_seed(root, "cell", ai, trial))
                rows, test = _run_cell(plan, cfg, attacker, owner, eval_set, ai, trial)
                cells[(ai, trial)] = rows
                if trial == 0 and test is not None:
                    logits[ai] = test.world_logits
            seconds[ai] = time.perf_counter() - start
    except Exception as exc:
        if run_dir is not None:
            flushed = [r for key in sorted(cells) for r in cells[key]]
            _write_observations(run_dir / "observations.csv", flushed)
            raise ExperimentInterrupted(str(exc), str(run_dir)) from exc
        raise

    observations = [r for key in sorted(cells) for r in cells[key]]
    results = []
    for ai, value in enumerate(plan.values):
        obs = [r for r in observations if r["axis_index"] == ai]
        k = sum(r["correct"] for r in obs)
        lo, hi = binomial_ci(k, len(obs))
        results.append(AxisResult(
            axis_value=value,
            accuracy=k / len(obs) if obs else 0.0,
            ci_lo=lo, ci_hi=hi, n_obs=len(obs),
            precision=float(np.mean([r["precision"] for r in obs])) if obs else 0.0,
            recall=float(np.mean([r["recall"] for r in obs])) if obs else 0.0,
            f1=float(np.mean([r["f1"] for r in obs])) if obs else 0.0,
            seconds=seconds.get(ai, 0.0),
        ))
    report = ExperimentReport(plan, results, [{"obs": i, **r} for i, r in enumerate(observations)], calibration, logits)
    if run_dir is not None:
        _write_observations(run_dir / "observations.csv", [{k: v for k, v in r.items() if k != "obs"} for r in report.observations])
        (run_dir / "report.json").write_text(json.dumps(report.to_json(), indent=1))
        if logits:
            np.savez(run_dir / "logits.npz", **{f"{ai}_{w}": z for ai, pair in logits.items() for w, z in enumerate(pair)})
    return report


def load_report(run_dir) -> ExperimentReport:
    """Rebuild a report from a run directory written by ``run_experiment``."""
    run_dir = Path(run_dir)
    obj = json.loads((run_dir / "report.json").read_text())
    plan = ExperimentPlan.from_json(obj["plan"])
    cal = obj.get("calibration")
    logits: dict = {}
    if (run_dir / "logits.npz").exists():
        with np.load(run_dir / "logits.npz") as npz:
            for key in npz.files:
                ai, w = map(int, key.split("_"))
                logits.setdefault(ai, [None, None])[w] = npz[key]
    return ExperimentReport(
        plan,
        [AxisResult(**r) for r in obj["results"]],
        _read_observations(run_dir / "observations.csv"),
        None if cal is None else CleanCalibration(**cal),
        {ai: tuple(pair) for ai, pair in logits.items()},
    )


def _write_csv(path: Path, header: list[str], rows) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def logit_histogram(world_logits, bins: int = 40) -> list[tuple]:
    """Rows ``(world, bin_lo, bin_hi, count)`` on a shared bin grid."""
    pooled = np.concatenate([np.asarray(z) for z in world_logits]) if len(world_logits) else np.empty(0)
    if pooled.size == 0:
        return []
    edges = np.histogram_bin_edges(pooled, bins=bins)
    rows = []
    for world, z in enumerate(world_logits):
        counts, _ = np.histogram(z, bins=edges)
        rows += [(world, float(a), float(b), int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts)]
    return rows


def emit_plot_data(
    report: ExperimentReport,
    kind: Literal["accuracy_curve", "logit_histogram", "theory_overlay"],
    out_dir,
    rates=None,
) -> list[Path]:
    """Write plot-ready CSVs for ``kind`` into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if kind == "accuracy_curve":
        rows = [(r.axis_value, r.accuracy, r.ci_lo, r.ci_hi, r.n_obs) for r in report.results]
        return [_write_csv(out / "accuracy_curve.csv", ["axis_value", "accuracy", "ci_lo", "ci_hi", "n_obs"], rows)]
    if kind == "logit_histogram":
        header = ["world", "bin_lo", "bin_hi", "count"]
        if not report.logits:
            return [_write_csv(out / "logit_histogram.csv", header, [])]
        return [
            _write_csv(out / f"logit_histogram_{ai}.csv", header, logit_histogram(z))
            for ai, z in sorted(report.logits.items())
        ]
    if kind == "theory_overlay":
        header = ["world", "t", "p", "mu_tilde", "sigma_tilde_sq"]
        cal = report.calibration
        cfg = report.plan.attack
        if cal is None:
            return [_write_csv(out / "theory_overlay.csv", header, [])]
        if rates is None:
            rates = report.plan.values if report.plan.axis == "poison_rate" else np.round(np.arange(0, 0.051, 0.001), 6)
        rows = theory.theory_curves((cfg.t0, cfg.t1), cal.pi_v, cal.mu, cal.sigma, rates)
        return [_write_csv(out / "theory_overlay.csv", header, [[r[h] for h in header] for r in rows])]
    raise ValueError(f"unknown plot kind {kind!r}")
