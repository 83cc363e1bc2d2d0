"""Training loop for the tiny model: gradient clipping, warmup+cosine
schedule, per-tensor optimizer states, optional shadow optimizer whose
hypothetical update is scored against the applied one at every step."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import models, optim
from .records import TrajectoryRecord
from .tensor import NonFiniteError, Tensor, clip_by_global_norm, cosine_similarity_flagged, global_norm


@dataclass(frozen=True)
class ShadowSpec:
    """Second optimizer evaluated along the driver's trajectory: same
    parameters, same clipped gradients, its own state and learning rate."""

    kind: str
    hp: optim.HyperParams


@dataclass
class TrainResult:
    model: models.TinyLM
    states: dict
    record: TrajectoryRecord
    summary: dict = field(default_factory=dict)


def _candidate_updates(params, grads, states, kind, hp, lr):
    new_params = {}
    new_states = {}
    deltas = {}
    step_fn = optim.STEP_FUNCS[kind]
    for name, w in params.items():
        w_new, s_new = step_fn(w, grads[name], states[name], hp, lr)
        new_params[name] = w_new
        new_states[name] = s_new
        deltas[name] = Tensor._adopt(w_new.data - w.data, w.shape)
    return new_params, new_states, deltas


def train_lm(
    model: models.TinyLM,
    tokens: np.ndarray,
    optimizer_kind: str,
    hp: optim.HyperParams,
    schedule: optim.Schedule,
    steps: int,
    batch_size: int,
    seed: int,
    *,
    shadow: ShadowSpec | None = None,
    val_tokens: np.ndarray | None = None,
    val_batches: int = 4,
    val_batch_size: int = 256,
) -> TrainResult:
    """Run ``steps`` updates; returns the trained model, final states, the
    per-step record and a summary. Divergence (non-finite or 10x-initial
    loss) truncates the run and sets the record flag instead of raising.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if optimizer_kind not in optim.KINDS:
        raise ValueError(f"unknown optimizer kind {optimizer_kind!r}")

    cfg = model.cfg
    rng = np.random.default_rng(seed)
    states = {name: optim.init_state(optimizer_kind, t.shape) for name, t in model.parameters()}
    shadow_states = (
        {name: optim.init_state(shadow.kind, t.shape) for name, t in model.parameters()}
        if shadow
        else None
    )

    columns = ["step", "lr", "loss", "grad_norm", "update_norm", "clip_scale"]
    if shadow:
        columns += ["cos_global"] + [f"cos_{name}" for name in models.PARAM_ORDER]
    record = TrajectoryRecord(columns)

    initial_loss = None
    losses: list[float] = []
    for t in range(1, steps + 1):
        batch = models.sample_batch(tokens, batch_size, cfg.context, rng)
        loss, cache = models.forward_loss(model, batch)
        if initial_loss is None:
            initial_loss = loss
        if not math.isfinite(loss) or loss > 10.0 * initial_loss:
            record.flags["diverged"] = True
            record.flags["truncated_at"] = t
            break
        losses.append(loss)
        grads = models.backward(model, cache)

        grad_list = [grads[name] for name in models.PARAM_ORDER]
        clip_scale = 1.0
        if hp.clip_threshold is not None:
            grad_list, clip_scale = clip_by_global_norm(grad_list, hp.clip_threshold)
        grads = dict(zip(models.PARAM_ORDER, grad_list))
        gnorm = global_norm(grad_list)

        lr = optim.lr_at(t, schedule, hp.peak_lr)
        try:
            new_params, states, deltas = _candidate_updates(
                model.params, grads, states, optimizer_kind, hp, lr
            )
        except NonFiniteError:
            record.flags["diverged"] = True
            record.flags["truncated_at"] = t
            break

        row = {
            "step": t,
            "lr": lr,
            "loss": loss,
            "grad_norm": gnorm,
            "update_norm": global_norm(list(deltas.values())),
            "clip_scale": clip_scale,
        }
        if shadow:
            shadow_lr = optim.lr_at(t, schedule, shadow.hp.peak_lr)
            _, shadow_states, shadow_deltas = _candidate_updates(
                model.params, grads, shadow_states, shadow.kind, shadow.hp, shadow_lr
            )
            flat_a = Tensor(np.concatenate([deltas[n].data for n in models.PARAM_ORDER]))
            flat_b = Tensor(np.concatenate([shadow_deltas[n].data for n in models.PARAM_ORDER]))
            row["cos_global"], _ = cosine_similarity_flagged(flat_a, flat_b)
            for name in models.PARAM_ORDER:
                row[f"cos_{name}"], _ = cosine_similarity_flagged(deltas[name], shadow_deltas[name])
        record.add_row(**row)
        model = model.with_params(new_params)

    if initial_loss is None:  # steps == 0: still report the untouched loss
        probe = models.sample_batch(tokens, batch_size, cfg.context, rng)
        initial_loss, _ = models.forward_loss(model, probe)

    summary = {
        "optimizer": optimizer_kind,
        "seed": seed,
        "steps_run": len(record),
        "diverged": record.flags["diverged"],
        "initial_loss": initial_loss,
        "final_train_loss": float(np.mean(losses[-20:])) if losses else initial_loss,
    }
    if val_tokens is not None:
        summary["final_val_loss"] = evaluate(model, val_tokens, val_batch_size, val_batches, seed)
    return TrainResult(model, states, record, summary)


def evaluate(
    model: models.TinyLM,
    tokens: np.ndarray,
    batch_size: int,
    n_batches: int,
    seed: int,
) -> float:
    batches = models.eval_batches(tokens, batch_size, model.cfg.context, n_batches, seed)
    return float(np.mean([models.forward_loss(model, b)[0] for b in batches]))
