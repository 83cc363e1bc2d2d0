import math

import numpy as np
import pytest

from adams import analysis, models, optim
from adams.analysis import (
    mean_cosine,
    rate_fit,
    shadow_compare,
    surface_rows,
    update_magnitude,
    update_magnitude_surface,
)
from adams.records import TrajectoryRecord


@pytest.fixture(scope="module")
def tokens():
    return models.make_corpus(seed=3).tokens(30000, 0)


HP = optim.HyperParams(peak_lr=3e-3)
SCHED = optim.Schedule(warmup_steps=10, total_steps=100)


# ---------------------------------------------------------------------------
# Shadow comparison
# ---------------------------------------------------------------------------


def test_self_comparison_is_exactly_one(tokens):
    model = models.TinyLM.init(1)
    rec = shadow_compare("adams", "adams", model, tokens, 40, HP, SCHED, 64, seed=1)
    assert all(v == 1.0 for v in rec.column("cos_global"))
    for name in models.PARAM_ORDER:
        assert all(v == 1.0 for v in rec.column(f"cos_{name}"))


def test_first_step_cosine_exactly_one_for_two_buffer_pair(tokens):
    model = models.TinyLM.init(2)
    rec = shadow_compare("adamw", "adams", model, tokens, 5, HP, SCHED, 64, seed=2)
    assert rec.column("cos_global")[0] == 1.0
    for name in models.PARAM_ORDER:
        assert rec.column(f"cos_{name}")[0] == 1.0
    # later steps diverge but stay aligned
    assert all(0.0 < v <= 1.0 for v in rec.column("cos_global")[1:])


def test_shadow_above_frozen_pilot_baseline(tokens, baselines):
    pin = baselines["shadow_cosine"]
    model = models.TinyLM.init(pin["pilot_seed"] + 1)
    rec = shadow_compare(
        "adamw", "adams", model, tokens, 150, HP, SCHED, 128, seed=pin["pilot_seed"] + 1
    )
    assert mean_cosine(rec, skip=50) > pin["threshold"]


def test_mean_cosine_needs_rows():
    rec = TrajectoryRecord(["step", "cos_global"])
    with pytest.raises(ValueError):
        mean_cosine(rec)


# ---------------------------------------------------------------------------
# Update-magnitude surface
# ---------------------------------------------------------------------------


def test_diagonal_convention_collapses_to_simple_ratio():
    eps = 1e-8
    xs = np.linspace(-13.0, 13.0, 41)
    for beta2 in (0.9, 0.95, 0.99, 0.999):
        for x in xs:
            got = update_magnitude(x, x, 0.9, beta2, eps)
            assert abs(got - abs(x) / (abs(x) + eps)) < 1e-12


def test_diagonal_is_even_and_zero_at_origin():
    rows = surface_rows(0.9, [0.95], 1e-8, xs=np.linspace(-13, 13, 27), grid_points=3)
    diag = {(r[3]): r[5] for r in rows if r[0] == "diagonal"}
    assert diag[0.0] == 0.0
    for x, mag in diag.items():
        assert abs(mag - diag[-x]) < 1e-15


def test_momentum_free_axis_saturates_at_ratio_arm():
    # m_prev = 0: magnitude -> (1-beta1)/sqrt(1-beta2) as |g| grows
    got = update_magnitude(0.0, 1e9, 0.9, 0.95, 1e-8)
    assert abs(got - 0.1 / math.sqrt(0.05)) < 1e-9
    small = update_magnitude(0.0, 2.0, 0.9, 0.95, 1e-8)
    assert abs(small - 0.1 * 2.0 / (math.sqrt(0.05) * 2.0 + 1e-8)) < 1e-12


def test_large_beta2_inflates_momentum_free_updates():
    # the closer beta2 is to 1, the harder a pure-gradient step slams into
    # the epsilon floor
    mags = [update_magnitude(0.0, 1.0, 0.9, b2, 1e-8) for b2 in (0.9, 0.95, 0.99, 0.999)]
    assert all(a < b for a, b in zip(mags, mags[1:]))


def test_surface_bounded_by_provable_cap_everywhere():
    columns, rows = update_magnitude_surface()
    assert columns == analysis.SURFACE_COLUMNS
    for convention, beta1, beta2, m_prev, g, magnitude in rows:
        cap = optim.momentum_ratio_rss(beta1, beta2)
        assert magnitude <= cap + 1e-12


def test_surface_exceeds_optimistic_cap_on_diagonal():
    # documents why the max-form constant cannot cap real steps
    cap = optim.momentum_ratio_max(0.9, 0.95)
    assert update_magnitude(5.0, 5.0, 0.9, 0.95, 1e-8) > cap


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------


def test_rate_fit_recovers_exact_power_law():
    points = [(T, T**-0.25) for T in (1000, 4000, 16000, 64000)]
    assert abs(rate_fit(points) + 0.25) < 1e-12


def test_rate_fit_constant_inputs():
    assert abs(rate_fit([(10, 2.0), (100, 2.0), (1000, 2.0)])) < 1e-12


def test_rate_fit_scale_invariant():
    points = [(T, T**-0.3) for T in (100, 1000, 10000)]
    scaled = [(T, 123.0 * v) for T, v in points]
    assert abs(rate_fit(points) - rate_fit(scaled)) < 1e-12


def test_rate_fit_validation():
    with pytest.raises(ValueError):
        rate_fit([(10, 1.0), (10, 2.0), (10, 3.0)])
    with pytest.raises(ValueError):
        rate_fit([(10, 1.0), (100, -1.0), (1000, 1.0)])


# ---------------------------------------------------------------------------
# Trajectory records
# ---------------------------------------------------------------------------


def test_record_round_trip(tmp_path):
    rec = TrajectoryRecord(["step", "loss", "cos_global"])
    rec.add_row(step=1, loss=2.5, cos_global=1.0)
    rec.add_row(step=2, loss=2.25, cos_global=0.75)
    path = tmp_path / "rec.csv"
    rec.write_csv(path)
    back = TrajectoryRecord.from_csv(path)
    assert back.columns == rec.columns
    assert back.rows == rec.rows


def test_record_validation():
    rec = TrajectoryRecord(["step", "loss"])
    rec.add_row(step=1, loss=1.0)
    with pytest.raises(ValueError):
        rec.add_row(step=1, loss=0.5)  # non-increasing step
    with pytest.raises(ValueError):
        rec.add_row(step=2)  # missing column
    cos_rec = TrajectoryRecord(["step", "cos_global"])
    with pytest.raises(ValueError):
        cos_rec.add_row(step=1, cos_global=1.5)
    with pytest.raises(ValueError):
        TrajectoryRecord(["loss"])
