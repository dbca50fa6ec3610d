"""
How poisoning moves logits
==========================

A walk through the closed-form side of the library: what label-flip
poisoning does to a clean logit, how the two worlds separate as the rate
grows, where to put the threshold and how many queries a vote needs.
"""

import numpy as np

from snaplab import theory
from snaplab.theory import GaussianPair, TheoryParams

# Two worlds: 1% or 3.5% of the owner's records carry the property.
# Inside the property 90% of records have the victim label, and a clean
# model's logit toward the target label is roughly N(-1.8, 0.9^2).
t0, t1, pi_v, mu, sigma = 0.01, 0.035, 0.9, -1.8, 0.9

# A single clean logit of 0 under 3% poisoning of a 1% property
print("one logit:", theory.poisoned_logit(0.03, 0.01, 1.0, 0.0))

# Sweep the poison rate and watch both worlds shift up and tighten.
# The smaller world moves faster, which is the whole attack.
print(f"{'p':>6} {'mu~ (t0)':>9} {'mu~ (t1)':>9} {'var (t0)':>9} {'var (t1)':>9}")
for p in (0.0, 0.002, 0.005, 0.01, 0.02):
    m0 = theory.poisoned_moments(TheoryParams(p, t0, pi_v, mu, sigma))
    m1 = theory.poisoned_moments(TheoryParams(p, t1, pi_v, mu, sigma))
    print(f"{p:6.3f} {m0.mu_tilde:9.3f} {m1.mu_tilde:9.3f} {m0.sigma_tilde_sq:9.3f} {m1.sigma_tilde_sq:9.3f}")

# Pick the smallest rate whose predicted variance is small in both worlds
p = theory.select_poison_rate_by_variance(t0, t1, pi_v, mu, sigma)
print("rate from the variance rule:", p)

# Threshold between the two predicted Gaussians, and the vote size
m0 = theory.poisoned_moments(TheoryParams(p, t0, pi_v, mu, sigma))
m1 = theory.poisoned_moments(TheoryParams(p, t1, pi_v, mu, sigma))
pair = GaussianPair(m0.mu_tilde, np.sqrt(m0.sigma_tilde_sq), m1.mu_tilde, np.sqrt(m1.sigma_tilde_sq))
thr = theory.optimal_threshold(pair)
print(f"T = {thr.T:.3f}, alpha = {thr.alpha:.3f}, beta = {thr.beta:.3f}")
print("queries for 99.9% confidence:", theory.required_queries(thr.alpha, thr.beta, 1e-3))

# Label-only: poison just enough that the small world's mean logit
# crosses 0 while the large world's stays below
rate = theory.label_only_rate(t0, t1, pi_v, mu, sigma)
print(f"label-only window ({rate.p_lo:.4f}, {rate.p_hi:.4f}), p* = {rate.p_star:.4f}")
