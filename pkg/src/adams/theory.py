"""Relaxed-smoothness machinery: certified test objectives whose local
gradient-Lipschitz constant grows with the gradient norm, a sub-gaussian
noise source, the safe-step bound, checkable inequality predicates, the
composite constants used by the convergence analysis, and a noisy-step
experiment runner for rate studies."""

from __future__ import annotations

import math
import statistics
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import optim
from .records import TrajectoryRecord
from .tensor import Tensor, clip_by_global_norm


@dataclass(frozen=True)
class SmoothnessParams:
    """Certificate (L0, L1): within distance 1/L1, gradients change by at
    most (L0 + L1 * |grad at the start|) per unit distance."""

    L0: float
    L1: float

    def __post_init__(self):
        if self.L0 <= 0 or self.L1 <= 0:
            raise ValueError(f"L0 and L1 must be positive, got ({self.L0}, {self.L1})")


@dataclass(frozen=True)
class NoiseSpec:
    """Sub-gaussian gradient noise scale R:
    P(|noise| >= s) <= 2 exp(-s^2 / (2 R^2))."""

    R: float

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError(f"R must be positive, got {self.R}")


@dataclass(frozen=True)
class Objective:
    """Differentiable test function with a known minimum and a smoothness
    certificate that the probe suites can falsify."""

    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    f_star: float
    smoothness: SmoothnessParams
    name: str
    default_start: np.ndarray = field(repr=False, default=None)


def cosh_objective(d: int, a: float = 1.0, b: float = 1.0) -> Objective:
    """f(w) = a * sum_i cosh(b * w_i), minimum a*d at the origin.

    The diagonal Hessian entry a b^2 cosh(b w_i) satisfies
    cosh <= 1 + |sinh|, so curvature tracks the gradient exactly as the
    relaxed-smoothness regime demands. Certificate: (2ab^2, 2b). The naive
    pair (ab^2, b) fails the two-point inequality -- between w1 = 0 and
    w2 = e1 the mean slope is sinh(1) = 1.175 > ab^2 -- while doubling
    absorbs the worst-case exp(1/2) growth of cosh along an admissible
    segment (length <= 1/(2b)), since exp(1/2) < 2.
    """
    if a <= 0 or b <= 0:
        raise ValueError(f"a and b must be positive, got ({a}, {b})")

    def value(w: np.ndarray) -> float:
        _check_domain(w, b)
        return a * float(np.sum(np.cosh(b * w)))

    def gradient(w: np.ndarray) -> np.ndarray:
        _check_domain(w, b)
        return a * b * np.sinh(b * w)

    return Objective(
        dim=d,
        value=value,
        gradient=gradient,
        f_star=a * d,
        smoothness=SmoothnessParams(2.0 * a * b * b, 2.0 * b),
        name=f"cosh(d={d},a={a},b={b})",
        default_start=np.full(d, 2.0),
    )


def _check_domain(w: np.ndarray, b: float) -> None:
    peak = float(np.max(np.abs(w))) if w.size else 0.0
    if b * peak > 700.0:
        raise OverflowError(f"|b*w| = {b * peak:.1f} exceeds 700; cosh would overflow")


def quadratic_objective(d: int, curvature: float = 1.0, l1: float = 1.0) -> Objective:
    """f(w) = (c/2) |w|^2. Classically smooth, so any positive L1 together
    with L0 = c certifies it."""
    if curvature <= 0:
        raise ValueError(f"curvature must be positive, got {curvature}")

    def value(w: np.ndarray) -> float:
        return 0.5 * curvature * float(np.dot(w, w))

    def gradient(w: np.ndarray) -> np.ndarray:
        return curvature * w

    return Objective(
        dim=d,
        value=value,
        gradient=gradient,
        f_star=0.0,
        smoothness=SmoothnessParams(curvature, l1),
        name=f"quadratic(d={d},c={curvature})",
        default_start=np.full(d, 3.0),
    )


def miscertified(obj: Objective, factor: float = 3.0) -> Objective:
    """Negative control: shrink both certificate constants so the probe
    suite must catch the lie."""
    bad = SmoothnessParams(obj.smoothness.L0 / factor, obj.smoothness.L1 / factor)
    return Objective(
        dim=obj.dim,
        value=obj.value,
        gradient=obj.gradient,
        f_star=obj.f_star,
        smoothness=bad,
        name=obj.name + "/miscertified",
        default_start=obj.default_start,
    )


def finite_diff_gradient(f: Callable[[np.ndarray], float], w: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences, one coordinate at a time."""
    out = np.empty_like(w, dtype=np.float64)
    for i in range(w.size):
        wp = w.copy()
        wm = w.copy()
        wp[i] += h
        wm[i] -= h
        out[i] = (f(wp) - f(wm)) / (2.0 * h)
    return out


def descent_max_lr(L0: float, L1: float, grad_norm: float) -> float:
    """Largest safe step 2 / (L0 + L1 * |grad|): a plain gradient step below
    it cannot increase a certified objective."""
    if L0 <= 0 or L1 < 0 or grad_norm < 0:
        raise ValueError("need L0 > 0, L1 >= 0, grad_norm >= 0")
    return 2.0 / (L0 + L1 * grad_norm)


def reverse_pl_holds(f_gap: float, grad_norm: float, L0: float, L1: float) -> bool:
    """|grad|^2 <= 3 (3 L0 + 4 L1 |grad|) (f - f*), which caps how large a
    gradient can be at a given suboptimality."""
    if f_gap < 0:
        raise ValueError(f"f_gap must be >= 0, got {f_gap}")
    return grad_norm**2 <= 3.0 * (3.0 * L0 + 4.0 * L1 * grad_norm) * f_gap * (1.0 + 1e-12) + 1e-300


@dataclass(frozen=True)
class ProbeResult:
    ratio: float
    bound: float
    holds: bool
    applicable: bool


def smoothness_probe(obj: Objective, w1: np.ndarray, w2: np.ndarray) -> ProbeResult:
    """Check the two-point certificate inequality between w1 and w2.

    Only pairs within distance 1/L1 are admissible; farther pairs return
    applicable=False. Coincident points fall back to a symmetric-difference
    slope along a fixed diagonal direction.
    """
    L0, L1 = obj.smoothness.L0, obj.smoothness.L1
    dist = float(np.linalg.norm(w1 - w2))
    if dist > 1.0 / L1:
        return ProbeResult(math.nan, math.nan, False, False)
    bound = L0 + L1 * float(np.linalg.norm(obj.gradient(w1)))
    if dist == 0.0:
        h = 1e-6
        u = np.ones(obj.dim) / math.sqrt(obj.dim)
        ratio = float(np.linalg.norm(obj.gradient(w1 + h * u) - obj.gradient(w1 - h * u))) / (2 * h)
    else:
        ratio = float(np.linalg.norm(obj.gradient(w1) - obj.gradient(w2))) / dist
    return ProbeResult(ratio, bound, ratio <= bound + 1e-9, True)


# ---------------------------------------------------------------------------
# Composite constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TheoryInputs:
    L0: float
    L1: float
    L: float
    R: float
    T: int
    delta: float
    eta: float
    beta1: float
    beta2: float
    f_gap: float
    d: int
    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if min(self.L0, self.L1, self.L, self.R, self.eta, self.epsilon) <= 0:
            raise ValueError("L0, L1, L, R, eta, epsilon must all be positive")
        if self.f_gap < 0:
            raise ValueError(f"f_gap must be >= 0, got {self.f_gap}")


@dataclass(frozen=True)
class TheoryConstants:
    """The four composite constants, with each max's arms kept for
    dominance checks.

    sigma = max{ sqrt(2 R^2 log(T/delta)),
                 L * eta/(1-beta1) * max{beta1/sqrt(beta2), (1-beta1)/sqrt(1-beta2)},
                 3 L0 / (4 L1) }
    G     = max{ 3 L0 / (4 L1), 72 L1 f_gap,
                 sqrt(72 L1 sigma^2 eta ((1-beta1) T + 1)),
                 60 sqrt(L1 R^2 sigma^2 eta sqrt(2 T log(1/delta))) }
    F     = G^2 / (3 (3 L0 + 4 L1 G))
    C     = sqrt(4 L^2 (G + sigma + eps) / eps^4)
    """

    sigma: float
    G: float
    F: float
    C: float
    sigma_arms: tuple[float, float, float]
    g_arms: tuple[float, float, float, float]
    inputs: TheoryInputs


def theory_constants(inp: TheoryInputs) -> TheoryConstants:
    sigma_arms = (
        math.sqrt(2.0 * inp.R**2 * math.log(inp.T / inp.delta)),
        inp.L * (inp.eta / (1.0 - inp.beta1)) * optim.momentum_ratio_max(inp.beta1, inp.beta2),
        3.0 * inp.L0 / (4.0 * inp.L1),
    )
    sigma = max(sigma_arms)
    g_arms = (
        3.0 * inp.L0 / (4.0 * inp.L1),
        72.0 * inp.L1 * inp.f_gap,
        math.sqrt(72.0 * inp.L1 * sigma**2 * inp.eta * ((1.0 - inp.beta1) * inp.T + 1.0)),
        60.0
        * math.sqrt(
            inp.L1 * inp.R**2 * sigma**2 * inp.eta * math.sqrt(2.0 * inp.T * math.log(1.0 / inp.delta))
        ),
    )
    G = max(g_arms)
    F = G**2 / (3.0 * (3.0 * inp.L0 + 4.0 * inp.L1 * G))
    C = math.sqrt(4.0 * inp.L**2 * (G + sigma + inp.epsilon) / inp.epsilon**4)
    return TheoryConstants(sigma, G, F, C, sigma_arms, g_arms, inp)


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------


def subgaussian_noise(dim: int, R: float, rng: np.random.Generator | int) -> Tensor:
    """Zero-mean isotropic Gaussian with per-coordinate std R/sqrt(dim), so
    the norm obeys P(|noise| >= s) <= 2 exp(-s^2 / (2 R^2))."""
    if R < 0:
        raise ValueError(f"R must be >= 0, got {R}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if R == 0.0:
        return Tensor.zeros((dim,))
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return Tensor._adopt(rng.normal(0.0, R / math.sqrt(dim), dim), (dim,))


# ---------------------------------------------------------------------------
# Convergence experiments
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceResult:
    min_grad_norm: float
    diverged: bool
    T: int
    lr_mode: str
    final_w: np.ndarray
    record: TrajectoryRecord | None


def convergence_experiment(
    obj: Objective,
    optimizer_kind: str,
    T: int,
    noise: NoiseSpec | None,
    seed: int,
    *,
    c_eta: float = 1.0,
    c_m: float = 1.0,
    c_v: float = 1.0,
    lr_mode: str = "constant",
    hp: optim.HyperParams | None = None,
    schedule: optim.Schedule | None = None,
    w0: np.ndarray | None = None,
    record: bool = True,
    condition_L: float | None = None,
) -> ConvergenceResult:
    """Run T noisy steps and track the smallest true gradient norm.

    ``lr_mode="constant"`` uses the horizon scalings eta = c_eta/sqrt(T),
    1 - beta1 = c_m/sqrt(T), 1 - beta2 = c_v/T with no decay or clipping;
    ``lr_mode="cosine"`` uses the supplied hyperparameters and warmup+cosine
    schedule. A run whose value exceeds 10x its start is flagged as diverged
    and truncated, never raised.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if lr_mode not in ("constant", "cosine"):
        raise ValueError(f"lr_mode must be 'constant' or 'cosine', got {lr_mode!r}")
    if lr_mode == "constant":
        eta = c_eta / math.sqrt(T)
        beta1 = max(0.0, 1.0 - c_m / math.sqrt(T))
        beta2 = max(0.0, 1.0 - c_v / T)
        hp = optim.HyperParams(
            beta1=beta1,
            beta2=beta2,
            weight_decay=0.0,
            epsilon=1e-8,
            peak_lr=eta,
            clip_threshold=None,
        )
        schedule = None
    else:
        if hp is None or schedule is None:
            raise ValueError("cosine mode needs hp and schedule")

    if condition_L is not None and lr_mode == "constant":
        cst = theory_constants(
            TheoryInputs(
                L0=obj.smoothness.L0,
                L1=obj.smoothness.L1,
                L=condition_L,
                R=noise.R if noise else 1e-12,
                T=T,
                delta=0.01,
                eta=hp.peak_lr,
                beta1=hp.beta1,
                beta2=hp.beta2,
                f_gap=1.0,
                d=obj.dim,
                epsilon=hp.epsilon,
            )
        )
        if (1.0 - hp.beta1) / hp.peak_lr < cst.C:
            warnings.warn(
                f"(1-beta1)/eta = {(1.0 - hp.beta1) / hp.peak_lr:.3g} is below the "
                f"analysis constant C = {cst.C:.3g}; proceeding anyway",
                RuntimeWarning,
                stacklevel=2,
            )

    rng = np.random.default_rng(seed)
    w_arr = np.array(obj.default_start if w0 is None else w0, dtype=np.float64)
    w = Tensor(w_arr)
    state = optim.init_state(optimizer_kind, w.shape)
    step_fn = optim.STEP_FUNCS[optimizer_kind]

    f0 = obj.value(w_arr)
    rec = (
        TrajectoryRecord(["step", "lr", "loss", "grad_norm", "update_norm", "bound", "clipped"])
        if record
        else None
    )
    min_grad = math.inf
    diverged = False
    for t in range(1, T + 1):
        w_arr = w.as_array()
        try:
            loss = obj.value(w_arr)
        except OverflowError:
            loss = math.inf
        if not math.isfinite(loss) or loss > 10.0 * max(abs(f0), 1e-12) + 10.0:
            diverged = True
            if rec is not None:
                rec.flags["diverged"] = True
                rec.flags["truncated_at"] = t
            break
        grad_true = obj.gradient(w_arr)
        gnorm = float(np.linalg.norm(grad_true))
        min_grad = min(min_grad, gnorm)
        if noise is not None and noise.R > 0:
            g = Tensor._adopt(grad_true + subgaussian_noise(obj.dim, noise.R, rng).data, w.shape)
        else:
            g = Tensor(grad_true)
        clipped = 1.0
        if lr_mode == "cosine" and hp.clip_threshold is not None:
            (g,), clipped = clip_by_global_norm([g], hp.clip_threshold)
        lr = hp.peak_lr if lr_mode == "constant" else optim.lr_at(t, schedule, hp.peak_lr)
        w_new, state = step_fn(w, g, state, hp, lr)
        if rec is not None:
            delta = w_new.data - w.data
            rec.add_row(
                step=t,
                lr=lr,
                loss=loss,
                grad_norm=gnorm,
                update_norm=float(np.linalg.norm(delta)),
                bound=optim.update_norm_bound_tight(hp, lr, obj.dim),
                clipped=clipped,
            )
        w = w_new
    return ConvergenceResult(min_grad, diverged, T, lr_mode, w.as_array().copy(), rec)


def jittered_start(obj: Objective, seed: int, low: float = 1.0, high: float = 3.0) -> np.ndarray:
    """Per-seed start point. A shared deterministic start makes every
    coordinate cross the minimum in lockstep, which fakes a deep gradient
    dip; jitter decoheres them."""
    return np.random.default_rng(1000 + seed).uniform(low, high, obj.dim)


def run_scaling(
    obj_factory: Callable[[], Objective],
    optimizer_kind: str,
    horizons: list[int],
    seeds: list[int],
    noise: NoiseSpec,
    threads: int = 1,
    start_fn: Callable[[Objective, int], np.ndarray] = jittered_start,
    **kwargs,
) -> list[tuple[int, float]]:
    """Median of min-grad-norm per horizon over seeds; deterministic for any
    thread count because tasks are independent and gathered in order."""

    def one(T: int, seed: int) -> float:
        obj = obj_factory()
        w0 = start_fn(obj, seed) if start_fn is not None else None
        return convergence_experiment(
            obj, optimizer_kind, T, noise, seed, w0=w0, record=False, **kwargs
        ).min_grad_norm

    jobs = [(T, seed) for T in horizons for seed in seeds]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(lambda job: one(*job), jobs))
    else:
        values = [one(*job) for job in jobs]
    out = []
    for i, T in enumerate(horizons):
        chunk = values[i * len(seeds) : (i + 1) * len(seeds)]
        out.append((T, statistics.median(chunk)))
    return out
