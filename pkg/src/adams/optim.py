"""Momentum-family optimizers as pure state transitions.

Five algorithms share one calling convention ``step(w, g, state, hp, lr) ->
(w', state')``:

* ``adams_step``  — one momentum buffer; the denominator is rebuilt every
  step from the *previous* momentum and the current gradient:
      nu   = beta2 * m_prev^2 + (1 - beta2) * g^2
      m    = beta1 * m_prev + (1 - beta1) * g
      w'   = (1 - lr * wd) * w - lr * m / (sqrt(nu) + eps)
* ``adamw_step``  — classic two-buffer variant, identical numerator:
      v    = beta2 * v_prev + (1 - beta2) * g^2
* ``lion_step``   — sign update, decay folded into the parenthesis:
      u    = beta1 * m_prev + (1 - beta1) * g
      w'   = w - lr * (sign(u) + wd * w)
      m    = beta2 * m_prev + (1 - beta2) * g
* ``sgdm_step``   — plain momentum with decoupled decay.
* ``adam_mini_step`` — per-coordinate momentum, one shared second-moment
  scalar per parameter block, bias correction on both moments.

None of adams/adamw/lion/sgdm applies bias correction by default; a keyword
turns it on for the two adaptive variants so the effect can be compared.

The module also owns the warmup+cosine learning-rate curve, the analytic
caps on a single step's length, optimizer state memory accounting, and a
little-endian binary checkpoint container with bit-exact round trips.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .tensor import NonFiniteError, ShapeError, Tensor

KINDS = ("adams", "adamw", "lion", "sgdm", "adam_mini")


@dataclass(frozen=True)
class HyperParams:
    """Shared optimizer knobs.

    Defaults follow the common large-model recipe: (beta1, beta2) =
    (0.9, 0.95), decoupled weight decay 0.1, epsilon 1e-8 added outside the
    square root, global-norm gradient clipping at 1.0.
    """

    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.1
    epsilon: float = 1e-8
    peak_lr: float = 6e-4
    clip_threshold: float | None = 1.0

    def __post_init__(self):
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must be in [0, 1), got {self.beta1}")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError(f"beta2 must be in [0, 1), got {self.beta2}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.peak_lr <= 0.0:
            raise ValueError(f"peak_lr must be > 0, got {self.peak_lr}")
        if self.clip_threshold is not None and self.clip_threshold <= 0.0:
            raise ValueError(f"clip_threshold must be > 0 or None, got {self.clip_threshold}")


@dataclass(frozen=True)
class Schedule:
    """Linear warmup to the peak rate, then cosine decay to a floor.

    The curve is continuous, peaks at ``warmup_steps`` and ends at
    ``final_lr_fraction`` times the peak.
    """

    warmup_steps: int
    total_steps: int
    final_lr_fraction: float = 0.1

    def __post_init__(self):
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.total_steps <= self.warmup_steps:
            raise ValueError("total_steps must exceed warmup_steps")
        if not 0.0 < self.final_lr_fraction <= 1.0:
            raise ValueError("final_lr_fraction must be in (0, 1]")


def lr_at(t: int, sched: Schedule, peak: float) -> float:
    """Learning rate at step t: ramp 0 -> peak over warmup, then
    peak * (frac + (1 - frac) * (1 + cos(pi * progress)) / 2)."""
    if t < 0 or t > sched.total_steps:
        raise ValueError(f"step {t} outside [0, {sched.total_steps}]")
    if t <= sched.warmup_steps:
        if sched.warmup_steps == 0:
            return peak
        return peak * (t / sched.warmup_steps)
    progress = (t - sched.warmup_steps) / (sched.total_steps - sched.warmup_steps)
    frac = sched.final_lr_fraction
    return peak * (frac + (1.0 - frac) * 0.5 * (1.0 + math.cos(math.pi * progress)))


# ---------------------------------------------------------------------------
# Optimizer states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamSState:
    """Momentum m and step counter. This is the whole persistent state: the
    squared-momentum/gradient mix feeding the denominator is transient."""

    m: Tensor
    t: int = 0

    @classmethod
    def zeros(cls, shape) -> "AdamSState":
        return cls(Tensor.zeros(shape), 0)


@dataclass(frozen=True)
class AdamWState:
    m: Tensor
    v: Tensor  # elementwise >= 0
    t: int = 0

    @classmethod
    def zeros(cls, shape) -> "AdamWState":
        return cls(Tensor.zeros(shape), Tensor.zeros(shape), 0)


@dataclass(frozen=True)
class LionState:
    m: Tensor
    t: int = 0

    @classmethod
    def zeros(cls, shape) -> "LionState":
        return cls(Tensor.zeros(shape), 0)


@dataclass(frozen=True)
class SgdmState:
    m: Tensor
    t: int = 0

    @classmethod
    def zeros(cls, shape) -> "SgdmState":
        return cls(Tensor.zeros(shape), 0)


def _validate_blocks(blocks: tuple[tuple[int, int], ...], n: int) -> None:
    if not blocks:
        raise ValueError("adam_mini needs at least one block")
    cursor = 0
    for a, b in blocks:
        if a != cursor:
            raise ValueError(f"blocks must form a contiguous disjoint cover, gap at {cursor}")
        if b <= a:
            raise ValueError(f"empty block ({a}, {b})")
        cursor = b
    if cursor != n:
        raise ValueError(f"blocks cover {cursor} of {n} elements")


@dataclass(frozen=True)
class AdamMiniState:
    """Per-coordinate momentum plus one second-moment scalar per block.

    ``blocks`` are half-open index ranges over the flat parameter buffer and
    must tile it exactly; they come from configuration (the library knows
    nothing about model structure) and default to a single block.
    """

    m: Tensor
    v: tuple[float, ...]
    blocks: tuple[tuple[int, int], ...]
    t: int = 0

    def __post_init__(self):
        _validate_blocks(self.blocks, self.m.size)
        if len(self.v) != len(self.blocks):
            raise ValueError(f"{len(self.v)} scalars for {len(self.blocks)} blocks")
        if any(x < 0 for x in self.v):
            raise ValueError("second-moment scalars must be >= 0")

    @classmethod
    def zeros(cls, shape, blocks=None) -> "AdamMiniState":
        m = Tensor.zeros(shape)
        if blocks is None:
            blocks = ((0, m.size),)
        blocks = tuple((int(a), int(b)) for a, b in blocks)
        return cls(m, (0.0,) * len(blocks), blocks, 0)


# ---------------------------------------------------------------------------
# Step functions
# ---------------------------------------------------------------------------


def _check_step_inputs(w: Tensor, g: Tensor, m: Tensor) -> None:
    if g.shape != w.shape or m.shape != w.shape:
        raise ShapeError(f"parameter {w.shape}, gradient {g.shape}, state {m.shape}")
    if not g.is_finite():
        bad = int(np.argmax(~np.isfinite(g.data)))
        raise NonFiniteError(f"gradient has non-finite element at {bad}; step rejected")


def _adaptive_update(
    wd: np.ndarray,
    m_new: np.ndarray,
    nu: np.ndarray,
    h: HyperParams,
    lr: float,
    bias_correction: bool,
    t_new: int,
) -> np.ndarray:
    # shared by adams/adamw so their first step from zero state is bitwise equal
    if bias_correction:
        num = m_new / (1.0 - h.beta1**t_new)
        denom = np.sqrt(nu / (1.0 - h.beta2**t_new)) + h.epsilon
    else:
        num = m_new
        denom = np.sqrt(nu) + h.epsilon
    return (1.0 - lr * h.weight_decay) * wd - lr * (num / denom)


def adams_step(
    w: Tensor,
    g: Tensor,
    s: AdamSState,
    h: HyperParams,
    lr: float,
    *,
    bias_correction: bool = False,
) -> tuple[Tensor, AdamSState]:
    """Single-buffer adaptive step.

    Order matters: the denominator mix ``nu`` is built from the momentum
    *before* it absorbs the current gradient.
    """
    _check_step_inputs(w, g, s.m)
    md, gd, wd = s.m.data, g.data, w.data
    nu = h.beta2 * (md * md) + (1.0 - h.beta2) * (gd * gd)
    m_new = h.beta1 * md + (1.0 - h.beta1) * gd
    t_new = s.t + 1
    w_new = _adaptive_update(wd, m_new, nu, h, lr, bias_correction, t_new)
    return Tensor._adopt(w_new, w.shape), AdamSState(Tensor._adopt(m_new, w.shape), t_new)


def adamw_step(
    w: Tensor,
    g: Tensor,
    s: AdamWState,
    h: HyperParams,
    lr: float,
    *,
    bias_correction: bool = False,
) -> tuple[Tensor, AdamWState]:
    """Two-buffer adaptive step with a persistent squared-gradient average."""
    _check_step_inputs(w, g, s.m)
    if s.v.shape != w.shape:
        raise ShapeError(f"second-moment shape {s.v.shape} vs parameter {w.shape}")
    md, gd, wd = s.m.data, g.data, w.data
    v_new = h.beta2 * s.v.data + (1.0 - h.beta2) * (gd * gd)
    m_new = h.beta1 * md + (1.0 - h.beta1) * gd
    t_new = s.t + 1
    w_new = _adaptive_update(wd, m_new, v_new, h, lr, bias_correction, t_new)
    return (
        Tensor._adopt(w_new, w.shape),
        AdamWState(Tensor._adopt(m_new, w.shape), Tensor._adopt(v_new, w.shape), t_new),
    )


def lion_step(
    w: Tensor, g: Tensor, s: LionState, h: HyperParams, lr: float
) -> tuple[Tensor, LionState]:
    """Sign update: interpolate with beta1, step by the sign, then track
    momentum with beta2. Weight decay rides inside the update parenthesis,
    not as a (1 - lr*wd) shrink."""
    _check_step_inputs(w, g, s.m)
    md, gd, wd = s.m.data, g.data, w.data
    u = h.beta1 * md + (1.0 - h.beta1) * gd
    w_new = wd - lr * (np.sign(u) + h.weight_decay * wd)
    m_new = h.beta2 * md + (1.0 - h.beta2) * gd
    return Tensor._adopt(w_new, w.shape), LionState(Tensor._adopt(m_new, w.shape), s.t + 1)


def sgdm_step(
    w: Tensor, g: Tensor, s: SgdmState, h: HyperParams, lr: float
) -> tuple[Tensor, SgdmState]:
    """Momentum step with decoupled decay: w' = (1 - lr*wd) w - lr * m'."""
    _check_step_inputs(w, g, s.m)
    m_new = h.beta1 * s.m.data + (1.0 - h.beta1) * g.data
    w_new = (1.0 - lr * h.weight_decay) * w.data - lr * m_new
    return Tensor._adopt(w_new, w.shape), SgdmState(Tensor._adopt(m_new, w.shape), s.t + 1)


def adam_mini_step(
    w: Tensor, g: Tensor, s: AdamMiniState, h: HyperParams, lr: float
) -> tuple[Tensor, AdamMiniState]:
    """Blockwise-shared second moment with bias correction on both moments.

    Per block: v = (1 - beta2) * mean(g^2 over block) + beta2 * v. Decay is
    applied to the parameter first, then the corrected adaptive step.
    """
    _check_step_inputs(w, g, s.m)
    gd = g.data
    t_new = s.t + 1
    wd = (1.0 - lr * h.weight_decay) * w.data
    m_new = (1.0 - h.beta1) * gd + h.beta1 * s.m.data
    m_hat = m_new / (1.0 - h.beta1**t_new)
    update = np.empty_like(wd)
    v_new = []
    for (a, b), v_old in zip(s.blocks, s.v):
        gseg = gd[a:b]
        v = (1.0 - h.beta2) * float(np.mean(gseg * gseg)) + h.beta2 * v_old
        v_hat = v / (1.0 - h.beta2**t_new)
        update[a:b] = m_hat[a:b] / (math.sqrt(v_hat) + h.epsilon)
        v_new.append(v)
    w_new = wd - lr * update
    return (
        Tensor._adopt(w_new, w.shape),
        AdamMiniState(Tensor._adopt(m_new, w.shape), tuple(v_new), s.blocks, t_new),
    )


STEP_FUNCS = {
    "adams": adams_step,
    "adamw": adamw_step,
    "lion": lion_step,
    "sgdm": sgdm_step,
    "adam_mini": adam_mini_step,
}

_STATE_TYPES = {
    "adams": AdamSState,
    "adamw": AdamWState,
    "lion": LionState,
    "sgdm": SgdmState,
    "adam_mini": AdamMiniState,
}


def init_state(kind: str, shape, blocks=None):
    if kind not in KINDS:
        raise ValueError(f"unknown optimizer kind {kind!r}")
    if kind == "adam_mini":
        return AdamMiniState.zeros(shape, blocks)
    return _STATE_TYPES[kind].zeros(shape)


# ---------------------------------------------------------------------------
# Step-length caps
# ---------------------------------------------------------------------------


def momentum_ratio_max(beta1: float, beta2: float) -> float:
    """max{beta1/sqrt(beta2), (1-beta1)/sqrt(1-beta2)} with the 0/0 arm
    read as 0."""
    arm1 = 0.0 if beta1 == 0.0 else (beta1 / math.sqrt(beta2) if beta2 > 0.0 else math.inf)
    arm2 = (1.0 - beta1) / math.sqrt(1.0 - beta2)
    return max(arm1, arm2)


def momentum_ratio_rss(beta1: float, beta2: float) -> float:
    """sqrt(beta1^2/beta2 + (1-beta1)^2/(1-beta2)), the exact supremum of
    |beta1*m + (1-beta1)*g| / sqrt(beta2*m^2 + (1-beta2)*g^2) over (m, g).

    Cauchy-Schwarz against the weights (sqrt(beta2), sqrt(1-beta2)) gives the
    upper bound; (m, g) proportional to (beta1/beta2, (1-beta1)/(1-beta2))
    attains it.
    """
    if beta1 == 0.0:
        return (1.0 - beta1) / math.sqrt(1.0 - beta2)
    if beta2 == 0.0:
        return math.inf
    return math.sqrt(beta1**2 / beta2 + (1.0 - beta1) ** 2 / (1.0 - beta2))


def update_norm_bound(h: HyperParams, lr: float, d: int) -> float:
    """Optimistic cap lr * sqrt(d) * max{beta1/sqrt(beta2),
    (1-beta1)/sqrt(1-beta2)} on the length of one decay-free adams step.

    The max-form constant is exceeded whenever momentum and gradient align
    (m = g makes the per-coordinate ratio 1, above the constant for typical
    betas); ``update_norm_bound_tight`` is the cap that always holds.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    return lr * math.sqrt(d) * momentum_ratio_max(h.beta1, h.beta2)


def update_norm_bound_tight(h: HyperParams, lr: float, d: int) -> float:
    """Provable cap lr * sqrt(d) * sqrt(beta1^2/beta2 + (1-beta1)^2/(1-beta2))
    on the length of one decay-free adams step; holds for every state."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    return lr * math.sqrt(d) * momentum_ratio_rss(h.beta1, h.beta2)


# ---------------------------------------------------------------------------
# State memory accounting
# ---------------------------------------------------------------------------


def memory_footprint(
    optimizer_kind: str,
    param_counts: Sequence[int],
    blocks_per_tensor: Sequence[int] | None = None,
) -> tuple[int, Fraction]:
    """Count persistent state scalars and the exact ratio against the
    two-buffer baseline (which stores 2 scalars per parameter)."""
    if not param_counts:
        raise ValueError("param_counts must be nonempty")
    total = int(sum(param_counts))
    if optimizer_kind == "adamw":
        scalars = 2 * total
    elif optimizer_kind in ("adams", "lion", "sgdm"):
        scalars = total
    elif optimizer_kind == "adam_mini":
        if blocks_per_tensor is None:
            blocks_per_tensor = [1] * len(param_counts)
        if len(blocks_per_tensor) != len(param_counts):
            raise ValueError("blocks_per_tensor must match param_counts")
        scalars = total + int(sum(blocks_per_tensor))
    else:
        raise ValueError(f"unknown optimizer kind {optimizer_kind!r}")
    return scalars, Fraction(scalars, 2 * total)


# ---------------------------------------------------------------------------
# Binary checkpoint container
# ---------------------------------------------------------------------------

_MAGIC = b"AOPT"
_VERSION = 1
_KIND_CODES = {"tensors": 0, "adams": 1, "adamw": 2, "lion": 3, "sgdm": 4, "adam_mini": 5}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


class CheckpointError(ValueError):
    """Malformed or mismatched checkpoint file."""


def save_checkpoint(path, kind: str, step: int, tensors: Sequence[Tensor]) -> None:
    """Write header {magic, version u32, kind u8, step u64, tensor count u32,
    shape list} followed by raw little-endian f64 buffers. Atomic."""
    if kind not in _KIND_CODES:
        raise CheckpointError(f"unknown checkpoint kind {kind!r}")
    parts = [struct.pack("<4sIBQI", _MAGIC, _VERSION, _KIND_CODES[kind], step, len(tensors))]
    for t in tensors:
        parts.append(struct.pack("<I", len(t.shape)))
        parts.append(struct.pack(f"<{len(t.shape)}Q", *t.shape))
    for t in tensors:
        parts.append(t.data.astype("<f8", copy=False).tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[str, int, list[Tensor]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    head = struct.calcsize("<4sIBQI")
    if len(blob) < head:
        raise CheckpointError("truncated header")
    magic, version, code, step, count = struct.unpack_from("<4sIBQI", blob, 0)
    if magic != _MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise CheckpointError(f"unsupported version {version}")
    if code not in _CODE_KINDS:
        raise CheckpointError(f"unknown kind code {code}")
    offset = head
    shapes: list[tuple[int, ...]] = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}Q", blob, offset)
        offset += 8 * ndim
        shapes.append(tuple(int(s) for s in shape))
    tensors = []
    for shape in shapes:
        n = math.prod(shape) if shape else 1
        raw = np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
        offset += 8 * n
        tensors.append(Tensor._adopt(raw.astype(np.float64), shape))
    if offset != len(blob):
        raise CheckpointError(f"{len(blob) - offset} trailing bytes")
    return _CODE_KINDS[code], int(step), tensors


def state_tensors(state) -> list[Tensor]:
    if isinstance(state, AdamSState) or isinstance(state, LionState) or isinstance(state, SgdmState):
        return [state.m]
    if isinstance(state, AdamWState):
        return [state.m, state.v]
    if isinstance(state, AdamMiniState):
        return [state.m, Tensor(list(state.v))]
    raise TypeError(f"not an optimizer state: {type(state)!r}")


def save_state(path, kind: str, state) -> None:
    save_checkpoint(path, kind, state.t, state_tensors(state))


def restore_state(kind: str, step: int, tensors: Sequence[Tensor], blocks=None):
    if kind == "adams":
        return AdamSState(tensors[0], step)
    if kind == "adamw":
        return AdamWState(tensors[0], tensors[1], step)
    if kind == "lion":
        return LionState(tensors[0], step)
    if kind == "sgdm":
        return SgdmState(tensors[0], step)
    if kind == "adam_mini":
        if blocks is None:
            blocks = ((0, tensors[0].size),)
        blocks = tuple((int(a), int(b)) for a, b in blocks)
        v = tuple(float(x) for x in tensors[1].data)
        return AdamMiniState(tensors[0], v, blocks, step)
    raise ValueError(f"unknown optimizer kind {kind!r}")


def load_state(path, blocks=None):
    kind, step, tensors = load_checkpoint(path)
    if kind == "tensors":
        raise CheckpointError("checkpoint holds raw tensors, not optimizer state")
    return kind, restore_state(kind, step, tensors, blocks=blocks)
