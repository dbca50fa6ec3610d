"""
Estimating the property fraction
================================

Binary search over the fraction: train a couple of shadows at each guess
and compare their logits with the target's logit range.
"""

import numpy as np

from snaplab import AttackConfig, PoisonConfig, TrainConfig, census_like, construct_world, split, synth_sample, train
from snaplab.attack import estimate_property_size, split_attacker_pool

spec = census_like(property_share=0.5, effect_scale=0.0)
attacker, owner = split(synth_sample(spec, 600000, seed=5), 0.5, seed=6)

tc = TrainConfig(epochs=20, batch_size=2048, learning_rate=0.01)
cfg = AttackConfig(f=spec.property, t0=0.0, t1=0.5, n=100000, poison=PoisonConfig(spec.property, rate=0.01), train=tc)
cfg, poison, D_s, world_pool = split_attacker_pool(cfg, attacker)

# The owner secretly trains with 10% of records in the property
secret = 0.10
target = train(cfg.model, construct_world(owner, cfg.f, secret, cfg.clean_size, seed=1).concat(poison), tc)

trace = estimate_property_size(cfg, world_pool, poison, target, D_s)
for it in trace.iterations:
    print(f"guess {it.t_hat:.3f}  overlap {it.overlap:.2f}  left {it.left:4d}  right {it.right:4d}")
print(f"estimate {trace.estimate:.3f} (true {secret}), {trace.shadow_models} shadow models, stopped on {trace.stop_reason}")
