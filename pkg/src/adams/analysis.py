"""Cross-optimizer diagnostics: shadow comparison of update directions
along one training trajectory, the update-magnitude response surface of the
momentum-mixed denominator, and power-law fitting for rate studies."""

from __future__ import annotations

import math

import numpy as np

from . import models, optim, train
from .records import TrajectoryRecord

__all__ = [
    "TrajectoryRecord",
    "shadow_compare",
    "update_magnitude_surface",
    "surface_rows",
    "rate_fit",
    "mean_cosine",
]


def shadow_compare(
    train_with: str,
    shadow: str,
    model: models.TinyLM,
    tokens: np.ndarray,
    steps: int,
    hp: optim.HyperParams,
    schedule: optim.Schedule,
    batch_size: int,
    seed: int,
    shadow_hp: optim.HyperParams | None = None,
) -> TrajectoryRecord:
    """Drive the trajectory with one optimizer; at every visited point give
    the shadow optimizer the same parameters and the same clipped gradient,
    log the cosine between the two candidate updates (per parameter group
    and globally), and apply only the driver's update. The shadow's state
    evolves from the shared gradient stream."""
    spec = train.ShadowSpec(shadow, shadow_hp or hp)
    result = train.train_lm(
        model,
        tokens,
        train_with,
        hp,
        schedule,
        steps,
        batch_size,
        seed,
        shadow=spec,
    )
    return result.record


def mean_cosine(record: TrajectoryRecord, skip: int = 0, column: str = "cos_global") -> float:
    values = record.column(column)[skip:]
    if not values:
        raise ValueError("no rows left after skip")
    return float(np.mean(values))


def update_magnitude(m_prev: float, g: float, beta1: float, beta2: float, eps: float) -> float:
    """Per-unit-lr step size |beta1*m + (1-beta1)*g| /
    (sqrt(beta2*m^2 + (1-beta2)*g^2) + eps)."""
    num = abs(beta1 * m_prev + (1.0 - beta1) * g)
    den = math.sqrt(beta2 * m_prev * m_prev + (1.0 - beta2) * g * g) + eps
    return num / den


def surface_rows(
    beta1: float,
    beta2_list: list[float],
    eps: float,
    xs: np.ndarray | None = None,
    grid_points: int = 27,
) -> list[tuple]:
    """Long-format magnitude surface rows.

    Two labeled conventions, because "one axis for gradient/momentum" is
    ambiguous: "diagonal" sets m_prev = g = x (the response is then
    |x|/(|x|+eps), independent of beta2), and "grid" sweeps (m_prev, g)
    independently over the same range.
    """
    if xs is None:
        xs = np.linspace(-13.0, 13.0, 105)
    rows = []
    for beta2 in beta2_list:
        for x in xs:
            rows.append(
                ("diagonal", beta1, beta2, float(x), float(x),
                 update_magnitude(float(x), float(x), beta1, beta2, eps))
            )
    axis = np.linspace(-13.0, 13.0, grid_points)
    for beta2 in beta2_list:
        for m_prev in axis:
            for g in axis:
                rows.append(
                    ("grid", beta1, beta2, float(m_prev), float(g),
                     update_magnitude(float(m_prev), float(g), beta1, beta2, eps))
                )
    return rows


SURFACE_COLUMNS = ("convention", "beta1", "beta2", "m_prev", "g", "magnitude")


def update_magnitude_surface(
    beta1: float = 0.9,
    beta2_list: list[float] | None = None,
    eps: float = 1e-8,
    xs: np.ndarray | None = None,
) -> tuple[tuple, list[tuple]]:
    """(columns, rows) for the magnitude surface; beta2 defaults to the
    usual ladder {0.9, 0.95, 0.99, 0.999}."""
    if beta2_list is None:
        beta2_list = [0.9, 0.95, 0.99, 0.999]
    return SURFACE_COLUMNS, surface_rows(beta1, beta2_list, eps, xs)


def rate_fit(points: list[tuple[float, float]]) -> float:
    """Least-squares slope of log(value) against log(T).

    Needs at least three distinct horizons and positive values; the
    intercept absorbs any uniform scaling of the values.
    """
    if len({T for T, _ in points}) < 3:
        raise ValueError("need >= 3 distinct horizons")
    if any(v <= 0 for _, v in points):
        raise ValueError("values must be positive")
    xs = np.log([float(T) for T, _ in points])
    ys = np.log([float(v) for _, v in points])
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)
