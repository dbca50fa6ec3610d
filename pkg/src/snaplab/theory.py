"""Closed-form analysis of logits under label-flip poisoning.

Notation: ``p`` poison rate, ``t`` fraction of clean samples with the
property, ``pi_v`` share of the victim label inside the property, and
``c = p / (pi_v (1 - p) t)``. A clean logit ``phi`` (w.r.t. the target
label) maps to the poisoned logit ``log(c + e^phi (1 + c))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np
from scipy.optimize import bisect


class TheoryError(ValueError):
    pass


@dataclass(frozen=True)
class TheoryParams:
    p: float
    t: float
    pi_v: float
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not 0 <= self.p < 1:
            raise TheoryError(f"poison rate must lie in [0, 1), got {self.p}")
        if not 0 < self.t <= 1:
            raise TheoryError(f"property fraction must lie in (0, 1], got {self.t}")
        if not 0 < self.pi_v <= 1:
            raise TheoryError(f"pi_v must lie in (0, 1], got {self.pi_v}")
        if not self.sigma > 0:
            raise TheoryError("sigma must be positive")

    @property
    def c(self) -> float:
        return poison_factor(self.p, self.t, self.pi_v)


def poison_factor(p: float, t: float, pi_v: float) -> float:
    if t <= 0:
        raise TheoryError("t = 0 has no closed form; use empirical shadow logits")
    return p / (pi_v * (1 - p) * t)


def poisoned_logit(p: float, t: float, pi_v: float, phi):
    """Poisoned logit w.r.t. the target label as a function of the clean logit ``phi``."""
    c = TheoryParams(p, t, pi_v).c
    phi = np.asarray(phi, dtype=float)
    # log(c + e^phi (1 + c)) without overflow for large phi
    out = np.logaddexp(np.log(c) if c > 0 else -np.inf, phi + np.log1p(c))
    return float(out) if out.ndim == 0 else out


def mixture_logit(p: float, t: float, pi_v: float, phi):
    """Exact poisoned log-odds when the poison is an honest ``f=1, y=v`` resample.

    For ``D~ = p D_p + (1 - p) D`` with ``D_p`` drawn from the clean
    ``(f(x)=1, y=v)`` slice, ``P~[v~|x] / P~[v|x] = e^phi + c`` exactly.
    ``poisoned_logit`` instead adds ``c (1 + e^phi)``; the two agree only as
    ``e^phi -> 0``.
    """
    c = TheoryParams(p, t, pi_v).c
    phi = np.asarray(phi, dtype=float)
    out = np.logaddexp(np.log(c) if c > 0 else -np.inf, phi)
    return float(out) if out.ndim == 0 else out


class Moments(NamedTuple):
    M: float
    V: float
    mu_tilde: float
    sigma_tilde_sq: float


def poisoned_moments(params: TheoryParams) -> Moments:
    """Log-normal moment match of the poisoned logit for ``phi ~ N(mu, sigma^2)``.

    ``M`` and ``V`` are the exact mean and variance of ``e^{poisoned logit}``;
    ``mu_tilde`` and ``sigma_tilde_sq`` are the Gaussian parameters whose
    exponential has that mean and variance.
    """
    c, mu, s2 = params.c, params.mu, params.sigma**2
    M = c + math.exp(mu + s2 / 2) * (1 + c)
    V = math.expm1(s2) * math.exp(2 * mu + s2) * (1 + c) ** 2
    # V / M^2 written so that c = 0 reduces to expm1(s2) exactly
    ratio = math.expm1(s2) * ((1 + c) / (c * math.exp(-mu - s2 / 2) + 1 + c)) ** 2
    sigma_tilde_sq = math.log1p(ratio)
    return Moments(M, V, math.log(M) - sigma_tilde_sq / 2, sigma_tilde_sq)


def norm_cdf(x: float) -> float:
    """Standard normal CDF via ``math.erfc`` (double-precision accurate in both tails)."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class GaussianPair:
    mu0: float
    sigma0: float
    mu1: float
    sigma1: float

    def __post_init__(self):
        if not (self.sigma0 > 0 and self.sigma1 > 0):
            raise TheoryError("sigmas must be positive")


@dataclass(frozen=True)
class ThresholdResult:
    """Threshold with per-world error rates.

    The larger-mean world is decided on the ``> T`` side. ``alpha`` is the
    probability that a world-0 sample lands on world 1's side and ``beta``
    the converse, so ``alpha = P[X0 > T]`` and ``beta = P[X1 < T]`` when
    world 1 has the larger mean.
    """

    T: float
    alpha: float
    beta: float
    mode: Literal["general", "equal_sigma"]

    @property
    def J(self) -> float:
        return self.alpha + self.beta


def density_crossings(mu0, sigma0, mu1, sigma1) -> tuple[float, float]:
    """Both points where the two normal densities are equal (``sigma0 != sigma1``)."""
    s0, s1 = sigma0**2, sigma1**2
    disc = (mu1 - mu0) ** 2 + 2 * (s1 - s0) * math.log(sigma1 / sigma0)
    root = sigma0 * sigma1 * math.sqrt(max(disc, 0.0))
    base = mu0 * s1 - mu1 * s0
    return (base + root) / (s1 - s0), (base - root) / (s1 - s0)


def _errors(T, lo_mu, lo_sigma, hi_mu, hi_sigma) -> tuple[float, float]:
    return norm_cdf(-(T - lo_mu) / lo_sigma), norm_cdf((T - hi_mu) / hi_sigma)


def optimal_threshold(pair: GaussianPair) -> ThresholdResult:
    """Threshold minimising ``alpha + beta`` for a ``> T`` decision favouring the larger mean.

    A stationary point of ``alpha + beta`` is where the densities cross;
    with unequal sigmas there are two crossings and the one with smaller
    total error wins.
    """
    flipped = pair.mu0 > pair.mu1
    lo_mu, lo_s, hi_mu, hi_s = (
        (pair.mu1, pair.sigma1, pair.mu0, pair.sigma0) if flipped else (pair.mu0, pair.sigma0, pair.mu1, pair.sigma1)
    )
    if abs(lo_s - hi_s) <= 1e-9 * max(lo_s, hi_s):
        if lo_mu == hi_mu:
            raise TheoryError("indistinguishable worlds")
        T, mode = (lo_mu + hi_mu) / 2, "equal_sigma"
    else:
        candidates = density_crossings(lo_mu, lo_s, hi_mu, hi_s)
        T = min(candidates, key=lambda c: sum(_errors(c, lo_mu, lo_s, hi_mu, hi_s)))
        mode = "general"
    e_lo, e_hi = _errors(T, lo_mu, lo_s, hi_mu, hi_s)
    alpha, beta = (e_hi, e_lo) if flipped else (e_lo, e_hi)
    return ThresholdResult(T, alpha, beta, mode)


def chernoff_queries(err: float, epsilon: float) -> float:
    """Queries for a majority vote with per-query error ``err`` to fail w.p. < ``epsilon``."""
    return 2 * (2 * err + 1) * math.log(1 / epsilon) / (1 - 2 * err) ** 2


def chernoff_queries_delta_form(err: float, epsilon: float) -> float:
    """Same bound written as ``(2 + d) log(1/eps) / (d^2 err)`` with ``d = 1/(2 err) - 1``."""
    d = 1 / (2 * err) - 1
    return (2 + d) * math.log(1 / epsilon) / (d * d * err)


def required_queries(alpha: float, beta: float, epsilon: float) -> int:
    for name, e in (("alpha", alpha), ("beta", beta)):
        if not 0 <= e:
            raise TheoryError(f"{name} must be non-negative")
        if e >= 0.5:
            raise TheoryError("test not better than coin flip")
    if not 0 < epsilon < 1:
        raise TheoryError("epsilon must lie in (0, 1)")
    bounds = []
    for e in (alpha, beta):
        q = chernoff_queries(e, epsilon)
        if e > 0:
            alt = chernoff_queries_delta_form(e, epsilon)
            assert abs(q - alt) <= 1e-9 * q, (q, alt)
        bounds.append(q)
    # 1e-9 slack keeps exact integers (up to rounding noise) from bumping up
    return max(1, math.ceil(max(bounds) - 1e-9))


def select_poison_rate_by_variance(
    t0: float,
    t1: float,
    pi_v: float,
    mu: float,
    sigma: float,
    var_threshold: float = 0.15,
    p_max: float = 0.25,
    step: float = 0.001,
) -> float:
    """Smallest grid rate whose predicted poisoned-logit variance is below ``var_threshold``
    in every world with ``t > 0``."""
    if var_threshold <= 0:
        raise TheoryError("var_threshold must be positive")
    worlds = [t for t in (t0, t1) if t > 0]
    if not worlds:
        raise TheoryError("at least one world needs a positive property fraction")
    last = None
    for i in range(1, int(round(p_max / step)) + 1):
        p = round(i * step, 12)
        last = [poisoned_moments(TheoryParams(p, t, pi_v, mu, sigma)).sigma_tilde_sq for t in worlds]
        if max(last) <= var_threshold:
            return p
    raise TheoryError(f"variance threshold {var_threshold} unattainable by p_max={p_max}; variances there: {last}")


class LabelOnlyRate(NamedTuple):
    p_lo: float
    p_hi: float
    p_star: float


def zero_mean_rate(t: float, pi_v: float, mu: float, sigma: float, xtol: float = 1e-12) -> float:
    """The unique ``p`` with ``mu_tilde(p) = 0`` (0 if already non-negative at ``p = 0``)."""

    def g(p):
        return poisoned_moments(TheoryParams(p, t, pi_v, mu, sigma)).mu_tilde

    if g(0.0) >= 0:
        return 0.0
    hi = 1 - 1e-12
    if g(hi) <= 0:
        raise TheoryError(f"mean poisoned logit never reaches 0 for t={t}")
    return bisect(g, 0.0, hi, xtol=xtol, maxiter=500)


def label_only_rate(t0: float, t1: float, pi_v: float, mu: float, sigma: float) -> LabelOnlyRate:
    """Rates that push the smaller world's mean logit past 0 while the larger stays below.

    ``p_star`` is the geometric mean of the two zero-crossing rates.
    """
    if not 0 < t0 < t1:
        raise TheoryError("need 0 < t0 < t1")
    p_lo = zero_mean_rate(t0, pi_v, mu, sigma)
    if p_lo == 0.0:
        warnings.warn("mean clean logit is already >= 0; p_lo reported as 0", stacklevel=2)
    p_hi = zero_mean_rate(t1, pi_v, mu, sigma)
    if p_lo >= p_hi:
        raise TheoryError(f"empty feasible interval: p_lo={p_lo}, p_hi={p_hi}")
    return LabelOnlyRate(p_lo, p_hi, math.sqrt(p_lo * p_hi))


def theory_curves(ts, pi_v: float, mu: float, sigma: float, rates) -> list[dict]:
    """Rows ``{world, t, p, mu_tilde, sigma_tilde_sq}`` for each world fraction and rate."""
    rows = []
    for world, t in enumerate(ts):
        if t <= 0:
            continue
        for p in rates:
            m = poisoned_moments(TheoryParams(float(p), float(t), pi_v, mu, sigma))
            rows.append({"world": world, "t": float(t), "p": float(p), "mu_tilde": m.mu_tilde, "sigma_tilde_sq": m.sigma_tilde_sq})
    return rows
