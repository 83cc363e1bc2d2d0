"""Closed-form moments for two denominator statistics of an i.i.d. Gaussian
stream X_t ~ N(mu, sigma^2), plus seeded Monte-Carlo estimators that check
them.

S_t = beta2 * S_{t-1} + (1 - beta2) * X_t^2        (squared-value average)
    E[S_t]   = (mu^2 + sigma^2) (1 - beta2^t)
    Var(S_t) = (2 sigma^4 + 4 mu^2 sigma^2) (1-beta2)/(1+beta2) (1 - beta2^{2t})

M_t = beta1 * M_{t-1} + (1 - beta1) * X_t
V_t = beta * M_{t-1}^2 + (1 - beta) * X_t^2        (momentum/value mix)
    E[V_inf]   = mu^2 + sigma^2 (1 - 2 beta beta1 / (1 + beta1))
    Var(V_inf) = 2 sigma^4 [beta^2 ((1-beta1)/(1+beta1))^2 + (1-beta)^2]
               + 4 mu^2 sigma^2 [beta^2 (1-beta1)/(1+beta1) + (1-beta)^2]

The V forms assume X_t independent of M_{t-1}; the simulator enforces that
literally by pairing the evolved M with a fresh draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize


@dataclass(frozen=True)
class GaussianSpec:
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class MomentStats:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")


@dataclass(frozen=True)
class McMoments:
    """Monte-Carlo estimate with batch-means standard errors."""

    mean: float
    variance: float
    se_mean: float
    se_variance: float
    samples: int
    t_burn: int

    @property
    def stats(self) -> MomentStats:
        return MomentStats(self.mean, max(self.variance, 0.0))


def _check_beta(name: str, value: float) -> None:
    if not 0.0 <= value < 1.0:
        raise ValueError(f"{name} must be in [0, 1), got {value}")


def s_moments(spec: GaussianSpec, beta2: float, t: int | None = None) -> MomentStats:
    """Mean/variance of S_t; ``t=None`` gives the stationary limit."""
    _check_beta("beta2", beta2)
    mu2 = spec.mu**2
    sig2 = spec.sigma**2
    base_var = 2.0 * sig2**2 + 4.0 * mu2 * sig2
    if t is None:
        damp_mean = 1.0
        damp_var = 1.0
    else:
        if t < 1:
            raise ValueError(f"t must be >= 1 or None, got {t}")
        damp_mean = 1.0 - beta2**t
        damp_var = 1.0 - beta2 ** (2 * t)
    mean = (mu2 + sig2) * damp_mean
    var = base_var * (1.0 - beta2) / (1.0 + beta2) * damp_var
    return MomentStats(mean, var)


def v_moments_inf(spec: GaussianSpec, beta: float, beta1: float) -> MomentStats:
    """Stationary mean/variance of the momentum/value mix V."""
    _check_beta("beta", beta)
    _check_beta("beta1", beta1)
    mu2 = spec.mu**2
    sig2 = spec.sigma**2
    r = (1.0 - beta1) / (1.0 + beta1)
    mean = mu2 + sig2 * (1.0 - 2.0 * beta * beta1 / (1.0 + beta1))
    var = 2.0 * sig2**2 * (beta**2 * r**2 + (1.0 - beta) ** 2) + 4.0 * mu2 * sig2 * (
        beta**2 * r + (1.0 - beta) ** 2
    )
    return MomentStats(mean, var)


def denominator_gap(
    spec: GaussianSpec, beta: float, beta1: float, beta2: float
) -> tuple[float, float]:
    """Stationary-mean gap between the two statistics.

    abs_gap = |E[S_inf] - E[V_inf]| = sigma^2 * 2*beta*beta1/(1+beta1);
    rel_gap divides by E[S_inf] (defined as 0 when mu = sigma = 0) and
    vanishes as mu/sigma grows. beta2 only enters through the S side, whose
    stationary mean does not depend on it; it is accepted for interface
    symmetry and validated.
    """
    _check_beta("beta", beta)
    _check_beta("beta1", beta1)
    _check_beta("beta2", beta2)
    abs_gap = spec.sigma**2 * 2.0 * beta * beta1 / (1.0 + beta1)
    s_mean = spec.mu**2 + spec.sigma**2
    rel_gap = 0.0 if s_mean == 0.0 else abs_gap / s_mean
    return abs_gap, rel_gap


def burn_in_steps(*betas: float, tol: float = 1e-6) -> int:
    """Steps until the slowest geometric transient decays below ``tol``."""
    top = max(betas)
    _check_beta("beta", top)
    if top == 0.0:
        return 1
    return max(1, math.ceil(math.log(tol) / math.log(top)))


def _step_rng(seed: int, step: int) -> np.random.Generator:
    # counter-based bit generator; one independent stream per time step so
    # chain i is always column i no matter how the grid is parallelized
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(step,))))


def _batch_stats(values: np.ndarray, batches: int) -> McMoments:
    n = values.size
    if n % batches != 0:
        raise ValueError(f"samples {n} not divisible into {batches} batches")
    per = values.reshape(batches, -1)
    batch_means = per.mean(axis=1)
    batch_vars = per.var(axis=1, ddof=1)
    mean = float(batch_means.mean())
    variance = float(batch_vars.mean())
    se_mean = float(batch_means.std(ddof=1) / math.sqrt(batches))
    se_var = float(batch_vars.std(ddof=1) / math.sqrt(batches))
    return McMoments(mean, variance, se_mean, se_var, n, 0)


def mc_moments(
    process: str,
    spec: GaussianSpec,
    *,
    beta2: float | None = None,
    beta: float | None = None,
    beta1: float | None = None,
    t_burn: int | None = None,
    samples: int = 10**6,
    seed: int = 0,
    batches: int = 100,
) -> McMoments:
    """Empirical moments of S_{t_burn} or V_{t_burn} over independent chains.

    Process "S" needs beta2; process "V" needs beta and beta1, and pairs the
    evolved momentum with a fresh draw (never the chain's own last value).
    Standard errors come from ``batches`` equal batches of chains. sigma = 0
    short-circuits to the exact stationary values (the chain is then
    deterministic, so there is nothing to estimate).
    """
    if samples < 10**4:
        raise ValueError(f"samples must be >= 1e4, got {samples}")
    if process == "S":
        if beta2 is None:
            raise ValueError("process 'S' needs beta2")
        _check_beta("beta2", beta2)
        betas = (beta2,)
    elif process == "V":
        if beta is None or beta1 is None:
            raise ValueError("process 'V' needs beta and beta1")
        _check_beta("beta", beta)
        _check_beta("beta1", beta1)
        betas = (beta, beta1)
    else:
        raise ValueError(f"process must be 'S' or 'V', got {process!r}")
    if t_burn is None:
        t_burn = burn_in_steps(*betas)

    if spec.sigma == 0.0:
        # deterministic chain: report the exact stationary values outright
        if process == "S":
            exact = s_moments(spec, beta2, None)
        else:
            exact = v_moments_inf(spec, beta, beta1)
        return McMoments(exact.mean, exact.variance, 0.0, 0.0, samples, t_burn)

    if process == "S":
        acc = np.zeros(samples)
        for step in range(t_burn):
            x = _step_rng(seed, step).normal(spec.mu, spec.sigma, samples)
            acc = beta2 * acc + (1.0 - beta2) * (x * x)
        values = acc
    else:
        m = np.zeros(samples)
        for step in range(t_burn):
            x = _step_rng(seed, step).normal(spec.mu, spec.sigma, samples)
            m = beta1 * m + (1.0 - beta1) * x
        fresh = _step_rng(seed, t_burn).normal(spec.mu, spec.sigma, samples)
        values = beta * (m * m) + (1.0 - beta) * (fresh * fresh)

    result = _batch_stats(values, batches)
    return McMoments(
        result.mean, result.variance, result.se_mean, result.se_variance, samples, t_burn
    )


def analytic_moments(point: dict) -> MomentStats:
    """Closed-form stationary moments for one grid point dict."""
    spec = GaussianSpec(point["mu"], point["sigma"])
    if point["process"] == "S":
        return s_moments(spec, point["beta2"], None)
    return v_moments_inf(spec, point["beta"], point["beta1"])


def mc_point(point: dict, samples: int, seed: int) -> McMoments:
    spec = GaussianSpec(point["mu"], point["sigma"])
    if point["process"] == "S":
        return mc_moments("S", spec, beta2=point["beta2"], samples=samples, seed=seed)
    return mc_moments(
        "V", spec, beta=point["beta"], beta1=point["beta1"], samples=samples, seed=seed
    )


def default_grid() -> list[dict]:
    """24 stationary-moment checks: 12 S points and 12 V points."""
    grid = []
    for mu in (0.0, 1.0, 10.0):
        for sigma in (0.5, 1.0):
            for beta2 in (0.9, 0.95):
                grid.append({"process": "S", "mu": mu, "sigma": sigma, "beta2": beta2})
    for mu in (0.0, 1.0, 10.0):
        for sigma in (0.5, 1.0):
            for beta, beta1 in ((0.95, 0.9), (0.9, 0.8)):
                grid.append(
                    {"process": "V", "mu": mu, "sigma": sigma, "beta": beta, "beta1": beta1}
                )
    return grid


def best_variance_match_beta(spec: GaussianSpec, beta1: float, beta2: float) -> float:
    """The mix weight beta that brings Var(V_inf) closest to Var(S_inf).

    Reported, never asserted: the argmin depends on mu/sigma.
    """
    target = s_moments(spec, beta2, None).variance

    def objective(b: float) -> float:
        return abs(v_moments_inf(spec, b, beta1).variance - target)

    res = optimize.minimize_scalar(objective, bounds=(0.0, 1.0 - 1e-9), method="bounded")
    return float(res.x)
