"""
Distinguishing 1% from 3.5%
===========================

Train shadow models in both worlds, fit the logit test, then attack
freshly trained owner models at a few poison rates. Runs in seconds.
"""

from snaplab import AttackConfig, ExperimentPlan, PoisonConfig, TrainConfig, census_like, run_experiment, synth_sample

# A census-like table where 10% of the population has the property
spec = census_like(property_share=0.1)
data = synth_sample(spec, 120000, seed=1)

cfg = AttackConfig(
    f=spec.property,
    t0=0.01,
    t1=0.035,
    n=10000,
    poison=PoisonConfig(spec.property, rate=0.0),
    k=4,
    shadow_query_size=2000,
    train=TrainConfig(epochs=20, learning_rate=0.01),
    root_seed=7,
)

# 10 owner models per world, 10 query sets each: 200 guesses per rate
plan = ExperimentPlan(cfg, "poison_rate", (0.0, 0.002, 0.005, 0.01), trials=1, calibrate=True)
report = run_experiment(plan, data, out_dir="runs")

for r in report.results:
    print(f"p={r.axis_value:.3f}  accuracy={r.accuracy:.3f}  95% CI [{r.ci_lo:.3f}, {r.ci_hi:.3f}]  owner F1={r.f1:.3f}")

# Everything needed to redraw the figures lands next to the run
from snaplab import emit_plot_data

for kind in ("accuracy_curve", "logit_histogram", "theory_overlay"):
    for path in emit_plot_data(report, kind, "plots"):
        print("wrote", path)
