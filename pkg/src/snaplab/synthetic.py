"""Ready-made synthetic distributions for demos and tests."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.special import expit, logit

from .data import PropertyPredicate, Schema, SynthSpec

DOMAINS = {
    "segment": ("A", "B", "C", "P"),
    "education": ("hs", "college", "grad"),
    "age": ("young", "mid", "senior"),
    "hours": ("part", "full"),
    "sector": ("retail", "tech", "public", "health"),
}


def census_like(
    property_share: float = 0.3,
    pi_v: float = 0.9,
    effect_scale: float = 0.6,
    property_effects: bool = False,
    seed: int = 0,
) -> SynthSpec:
    """Product-form feature distribution with a logistic label model.

    The property is ``segment == P`` with marginal ``property_share``.
    Inside the property the label is 0 with probability ``pi_v`` (exactly,
    unless ``property_effects`` lets the other features modulate it around
    that level). Outside it the label follows ``sigmoid(b + sum effects)``
    with effects drawn from ``seed``.
    """
    rng = np.random.default_rng(seed)
    schema = Schema(tuple((k, v) for k, v in DOMAINS.items()))
    marginals = {
        "segment": np.array([(1 - property_share) / 3] * 3 + [property_share]),
        "education": np.array([0.5, 0.35, 0.15]),
        "age": np.array([0.3, 0.45, 0.25]),
        "hours": np.array([0.3, 0.7]),
        "sector": np.array([0.3, 0.3, 0.2, 0.2]),
    }
    effects = {name: rng.normal(0, effect_scale, size=len(vals)) for name, vals in DOMAINS.items()}
    effects["segment"][3] = 0.0
    codes, probs, p_y1 = [], [], []
    for combo in itertools.product(*(range(len(v)) for v in DOMAINS.values())):
        prob, score = 1.0, -0.8
        for name, j in zip(DOMAINS, combo):
            prob *= marginals[name][j]
            score += effects[name][j]
        if combo[0] == 3:
            base = logit(1 - pi_v)
            q = expit(base + 0.5 * (score + 0.8)) if property_effects else 1 - pi_v
        else:
            q = expit(score)
        codes.append(combo)
        probs.append(prob)
        p_y1.append(float(q))
    probs = np.array(probs)
    return SynthSpec(schema, np.array(codes), probs / probs.sum(), np.array(p_y1), PropertyPredicate.of(segment="P"))
