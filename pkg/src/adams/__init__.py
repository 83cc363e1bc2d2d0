"""Second-moment-free adaptive optimizers plus a verification harness:
analytic moment formulas with Monte-Carlo cross-checks, relaxed-smoothness
machinery, a tiny hand-backpropagated language model, and cross-optimizer
diagnostics."""

from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    clip_by_global_norm,
    cosine_similarity,
    elementwise,
    global_norm,
)
from .optim import (
    AdamMiniState,
    AdamSState,
    AdamWState,
    HyperParams,
    LionState,
    Schedule,
    SgdmState,
    adam_mini_step,
    adams_step,
    adamw_step,
    init_state,
    lion_step,
    lr_at,
    memory_footprint,
    sgdm_step,
    update_norm_bound,
    update_norm_bound_tight,
)

__all__ = [
    "Tensor",
    "ShapeError",
    "NonFiniteError",
    "elementwise",
    "global_norm",
    "clip_by_global_norm",
    "cosine_similarity",
    "HyperParams",
    "Schedule",
    "AdamSState",
    "AdamWState",
    "LionState",
    "SgdmState",
    "AdamMiniState",
    "adams_step",
    "adamw_step",
    "lion_step",
    "sgdm_step",
    "adam_mini_step",
    "init_state",
    "lr_at",
    "memory_footprint",
    "update_norm_bound",
    "update_norm_bound_tight",
]

__version__ = "0.1.0"
