"""Command-line entry point: ``snaplab <command> [subcommand] [flags]``.

Every command reads one JSON config (``--config``) and writes its outputs
into ``--out``. Datasets come from ``--dataset`` (CSV); when omitted,
commands that need data sample the built-in synthetic distribution.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness, theory
from .attack import (
    AttackConfig,
    derive_seed,
    distinguish,
    estimate_property_size,
    label_only_distinguish,
    label_only_poison_rate,
    learn_confidence_model,
    split_attacker_pool,
)
from .data import DataError, SynthSpec, construct_world, load_csv, split, synth_sample, write_csv
from .models import ModelSpec, TrainConfig, TrainedModel, evaluate, train
from .poison import PoisonConfig, build_poison_set
from .synthetic import census_like

log = logging.getLogger("snaplab")


def _config(args) -> dict:
    if not args.config:
        return {}
    return json.loads(Path(args.config).read_text())


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, default=_jsonable))
    print(path)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def _dataset(args, cfg: dict):
    if args.dataset:
        return load_csv(args.dataset, args.label_col)
    synth = cfg.get("synth", {})
    spec = SynthSpec.from_json(synth["spec"]) if "spec" in synth else census_like(**synth.get("census_like", {}))
    n = int(synth.get("samples", 120000))
    log.info("no --dataset given; sampling %d records from the synthetic distribution", n)
    return synth_sample(spec, n, derive_seed(args.seed or 0, "dataset"))


def _model_parts(cfg: dict) -> tuple[ModelSpec, TrainConfig]:
    m = cfg.get("model", {})
    tc = dict(cfg.get("train", {}))
    if "betas" in tc:
        tc["betas"] = tuple(tc["betas"])
    return ModelSpec(m.get("kind", "logistic"), tuple(m.get("hidden_layers", ()))), TrainConfig(**tc)


def cmd_synth(args) -> None:
    cfg = _config(args)
    spec = SynthSpec.from_json(cfg) if "cells" in cfg else census_like(**cfg.get("census_like", {}))
    out = _out(args)
    spec.save(out / "spec.json")
    data = synth_sample(spec, args.samples, args.seed)
    write_csv(data, out / "samples.csv", args.label_col)
    print(out / "samples.csv")


def cmd_poison(args) -> None:
    cfg = _config(args)
    pool = _dataset(args, cfg)
    pc = PoisonConfig.from_json(cfg["poison"]).resolved(pool)
    poison_set = build_poison_set(pool, pc, int(cfg["n"]), args.seed)
    out = _out(args)
    write_csv(poison_set, out / "poison.csv", args.label_col)
    _dump(pc.to_json(), out / "poison_config.json")


def cmd_train(args) -> None:
    cfg = _config(args)
    data = _dataset(args, cfg)
    spec, tc = _model_parts(cfg)
    tc = replace(tc, seed=args.seed)
    train_set, eval_set = split(data, cfg.get("train_ratio", 0.8), derive_seed(args.seed, "holdout"))
    model = train(spec, train_set, tc)
    out = _out(args)
    model.save(out / "model.json")
    _dump(evaluate(model, eval_set)._asdict(), out / "metrics.json")


def _attack_setup(args, cfg: dict):
    acfg = AttackConfig.from_json(cfg["attack"] if "attack" in cfg else cfg)
    if args.seed is not None:
        acfg = replace(acfg, root_seed=args.seed)
    data = _dataset(args, cfg)
    attacker, owner = split(data, 0.5, derive_seed(acfg.root_seed, "split"))
    return acfg, attacker, owner


def _target(args, cfg, acfg, owner, poison_set, t: float) -> TrainedModel:
    if args.target:
        return TrainedModel.load(args.target)
    data = construct_world(owner, acfg.f, t, acfg.clean_size, derive_seed(acfg.root_seed, "target", t))
    return train(acfg.model, data.concat(poison_set), replace(acfg.train, seed=derive_seed(acfg.root_seed, "target-init", t)))


def _logit_dump(path: Path, test) -> None:
    rows = [(w, float(z)) for w, zs in enumerate(test.world_logits) for z in zs]
    with path.open("w") as fh:
        fh.write("world,logit\n")
        fh.writelines(f"{w},{z!r}\n" for w, z in rows)


def cmd_attack(args) -> None:
    cfg = _config(args)
    acfg, attacker, owner = _attack_setup(args, cfg)
    out = _out(args)
    world = int(cfg.get("target_world", args.world))
    if args.mode == "exist":
        if acfg.t0 != 0:
            raise DataError("attack exist needs t0 = 0 in the config")
        if acfg.poison.count is None:
            raise DataError("attack exist takes poison.count, not poison.rate")
    result: dict = {"mode": args.mode, "config": acfg.to_json(), "root_seed": acfg.root_seed}

    if args.mode == "label-only" and cfg.get("auto_rate", False):
        rate = label_only_poison_rate(acfg, attacker)
        result["rate_selection"] = rate._asdict()
        acfg = replace(acfg, poison=replace(acfg.poison, rate=rate.p_star, count=None))
        result["config"] = acfg.to_json()

    acfg, poison_set, D_s, world_pool = split_attacker_pool(acfg, attacker)
    if args.mode == "estimate":
        true_t = float(cfg.get("target_t", acfg.t1))
        target = _target(args, cfg, acfg, owner, poison_set, true_t)
        D_q = D_s.take(np.arange(min(acfg.query_size, len(D_s))))
        est = cfg.get("estimate", {})
        trace = estimate_property_size(acfg, world_pool, poison_set, target, D_q, **est)
        result.update(
            target_t=None if args.target else true_t,
            estimate=trace.estimate,
            stop_reason=trace.stop_reason,
            shadow_models=trace.shadow_models,
            iterations=[it._asdict() for it in trace.iterations],
        )
        _dump(result, out / "result.json")
        return

    target_t = (acfg.t0, acfg.t1)[world]
    target = _target(args, cfg, acfg, owner, poison_set, target_t)
    D_q = D_s.take(np.arange(min(acfg.query_size, len(D_s))))
    if args.mode == "label-only":
        outcome = label_only_distinguish(acfg.poison.target_label, target, D_q)
    else:
        test, _ = learn_confidence_model(acfg, attacker, poison_set)
        outcome = distinguish(test, target, D_q)
        result["test"] = {
            "pair": test.pair.__dict__,
            "T": test.T,
            "alpha": test.threshold.alpha,
            "beta": test.threshold.beta,
            "high_world": test.high_world,
            "shadow_logits": [
                {"world": w, "mean": float(z.mean()), "std": float(z.std()), "count": int(z.size)}
                for w, z in enumerate(test.world_logits)
            ],
        }
        if args.dump_logits:
            _logit_dump(out / "logits.csv", test)
    result.update(target_world=None if args.target else world, outcome=outcome._asdict())
    _dump(result, out / "result.json")


def cmd_theory(args) -> None:
    cfg = _config(args)
    out = _out(args)
    if args.what == "curves":
        rates = cfg.get("rates") or list(np.round(np.arange(0.0, cfg.get("p_max", 0.05) + 1e-12, cfg.get("step", 0.001)), 9))
        rows = theory.theory_curves((cfg["t0"], cfg["t1"]), cfg["pi_v"], cfg["mu"], cfg["sigma"], rates)
        header = ["world", "t", "p", "mu_tilde", "sigma_tilde_sq"]
        harness._write_csv(out / "curves.csv", header, [[r[h] for h in header] for r in rows])
        print(out / "curves.csv")
    elif args.what == "threshold":
        res = theory.optimal_threshold(theory.GaussianPair(cfg["mu0"], cfg["sigma0"], cfg["mu1"], cfg["sigma1"]))
        _dump({"T": res.T, "alpha": res.alpha, "beta": res.beta, "J": res.J, "mode": res.mode}, out / "threshold.json")
    elif args.what == "queries":
        q = theory.required_queries(cfg["alpha"], cfg["beta"], cfg["epsilon"])
        _dump({**cfg, "queries": q}, out / "queries.json")
    elif args.what == "pstar":
        res = theory.label_only_rate(cfg["t0"], cfg["t1"], cfg["pi_v"], cfg["mu"], cfg["sigma"])
        _dump(res._asdict(), out / "pstar.json")


def cmd_experiment(args) -> None:
    out = _out(args)
    if args.what == "run":
        cfg = _config(args)
        plan = harness.ExperimentPlan.from_json(cfg["plan"] if "plan" in cfg else cfg)
        if args.seed is not None:
            plan = replace(plan, attack=replace(plan.attack, root_seed=args.seed))
        data = _dataset(args, cfg)
        report = harness.run_experiment(plan, data, out, resume=args.resume)
        run_dir = out / plan.digest()
        for r in report.results:
            print(f"{r.axis_value}\taccuracy={r.accuracy:.3f}\t[{r.ci_lo:.3f}, {r.ci_hi:.3f}]\tn={r.n_obs}")
        print(run_dir)
    else:
        if not args.run:
            raise DataError("experiment plot needs --run <run directory>")
        report = harness.load_report(args.run)
        for kind in args.kind:
            for path in harness.emit_plot_data(report, kind, out):
                print(path)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=None, help="root seed (u64)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--dataset", help="CSV dataset; default samples the synthetic distribution")
    common.add_argument("--label-col", default="label", help="label column name in CSVs")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="snaplab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="sample records from a synthetic distribution")
    p.add_argument("--samples", type=int, default=10000)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("poison", parents=[common], help="build a label-flip poison set")
    p.set_defaults(func=cmd_poison)

    p = sub.add_parser("train", parents=[common], help="train a classifier and report holdout metrics")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", parents=[common], help="run one attack against one target model")
    p.add_argument("mode", choices=["distinguish", "exist", "label-only", "estimate"])
    p.add_argument("--target", help="saved target model JSON; default trains one from the owner pool")
    p.add_argument("--world", type=int, choices=[0, 1], default=1, help="world of the trained target")
    p.add_argument("--dump-logits", action="store_true", help="write shadow logits to logits.csv")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("theory", parents=[common], help="closed-form curves, thresholds and budgets")
    p.add_argument("what", choices=["curves", "threshold", "queries", "pstar"])
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("experiment", parents=[common], help="run a sweep or emit plot data")
    p.add_argument("what", choices=["run", "plot"])
    p.add_argument("--resume", action="store_true")
    p.add_argument("--run", help="run directory for plot")
    p.add_argument(
        "--kind", nargs="+", default=["accuracy_curve", "logit_histogram", "theory_overlay"],
        choices=["accuracy_curve", "logit_histogram", "theory_overlay"],
    )
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command in ("synth", "poison", "train") and args.seed is None:
        args.seed = 0
    try:
        args.func(args)
    except KeyError as exc:
        print(f"snaplab: error: missing config key {exc}", file=sys.stderr)
        return 2
    except (DataError, theory.TheoryError, ValueError, FileNotFoundError) as exc:
        print(f"snaplab: error: {exc}", file=sys.stderr)
        return 2
    except harness.ExperimentInterrupted as exc:
        print(f"snaplab: interrupted: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
