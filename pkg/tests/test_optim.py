import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adams import optim
from adams.optim import (
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
    lion_step,
    lr_at,
    memory_footprint,
    sgdm_step,
    update_norm_bound,
    update_norm_bound_tight,
)
from adams.tensor import NonFiniteError, Tensor


def hp(**kw) -> HyperParams:
    base = dict(beta1=0.9, beta2=0.95, weight_decay=0.0, epsilon=1e-8, peak_lr=0.1)
    base.update(kw)
    return HyperParams(**base)


# ---------------------------------------------------------------------------
# Scalar hand-computation oracles
# ---------------------------------------------------------------------------


def test_adams_zero_gradient_zero_momentum_fixed_point():
    w, s = adams_step(Tensor([1.0]), Tensor([0.0]), AdamSState.zeros((1,)), hp(), 0.1)
    assert w.data[0] == 1.0 and s.m.data[0] == 0.0 and s.t == 1


def test_adams_scalar_oracle_no_decay():
    w, s = adams_step(Tensor([1.0]), Tensor([1.0]), AdamSState.zeros((1,)), hp(), 0.1)
    nu = 0.95 * 0.0**2 + 0.05 * 1.0**2
    m = 0.9 * 0.0 + 0.1 * 1.0
    expected = 1.0 - 0.1 * m / (math.sqrt(nu) + 1e-8)
    assert abs(w.data[0] - expected) < 1e-12
    assert abs(s.m.data[0] - 0.1) < 1e-12


def test_adams_scalar_oracle_with_decay():
    w, _ = adams_step(
        Tensor([1.0]), Tensor([1.0]), AdamSState.zeros((1,)), hp(weight_decay=0.1), 0.1
    )
    expected = 0.99 - 0.1 * 0.1 / (math.sqrt(0.05) + 1e-8)
    assert abs(w.data[0] - expected) < 1e-12


def test_adams_denominator_uses_previous_momentum():
    # regression pin: with m_prev = 1, g = 0, the mix must see m_prev, not
    # the freshly updated momentum
    state = AdamSState(Tensor([1.0]), 3)
    w, s = adams_step(Tensor([0.0]), Tensor([0.0]), state, hp(), 0.1)
    nu_right = 0.95 * 1.0**2 + 0.05 * 0.0**2
    m_new = 0.9 * 1.0
    right = 0.0 - 0.1 * m_new / (math.sqrt(nu_right) + 1e-8)
    nu_wrong = 0.95 * m_new**2 + 0.05 * 0.0**2
    wrong = 0.0 - 0.1 * m_new / (math.sqrt(nu_wrong) + 1e-8)
    assert abs(w.data[0] - right) < 1e-12
    assert abs(w.data[0] - wrong) > 1e-3
    assert s.t == 4


def test_adamw_first_step_equals_adams_bitwise():
    rng = np.random.default_rng(3)
    for _ in range(100):
        shape = (int(rng.integers(1, 9)),)
        w = Tensor(rng.normal(size=shape))
        g = Tensor(rng.normal(size=shape) * 10.0 ** float(rng.integers(-3, 4)))
        h = HyperParams(
            beta1=float(rng.uniform(0, 0.999)),
            beta2=float(rng.uniform(0, 0.999)),
            weight_decay=float(rng.uniform(0, 0.2)),
            epsilon=10.0 ** float(rng.uniform(-10, -6)),
            peak_lr=10.0 ** float(rng.uniform(-4, -1)),
        )
        lr = h.peak_lr
        wa, sa = adams_step(w, g, AdamSState.zeros(shape), h, lr)
        ww, sw = adamw_step(w, g, AdamWState.zeros(shape), h, lr)
        assert np.array_equal(wa.data, ww.data)
        assert np.array_equal(sa.m.data, sw.m.data)


def test_adamw_two_step_oracle():
    h = hp()
    w, s = adamw_step(Tensor([1.0]), Tensor([1.0]), AdamWState.zeros((1,)), h, 0.1)
    w, s = adamw_step(w, Tensor([1.0]), s, h, 0.1)
    assert abs(s.v.data[0] - (0.95 * 0.05 + 0.05)) < 1e-12
    assert abs(s.m.data[0] - 0.19) < 1e-12


def test_adamw_zero_gradient_pure_decay():
    h = hp(weight_decay=0.1)
    w = Tensor([1.0])
    s = AdamWState.zeros((1,))
    expected = 1.0
    for _ in range(3):
        w, s = adamw_step(w, Tensor([0.0]), s, h, 0.1)
        expected *= 1.0 - 0.1 * 0.1
        assert w.data[0] == expected


def test_lion_scalar_oracle():
    h = HyperParams(beta1=0.95, beta2=0.98, weight_decay=1.0, peak_lr=0.01)
    w, s = lion_step(Tensor([1.0]), Tensor([1.0]), LionState.zeros((1,)), h, 0.01)
    # u = 0.05 -> sign 1; w' = 1 - 0.01 * (1 + 1*1) = 0.98; m' = 0.02
    assert abs(w.data[0] - 0.98) < 1e-12
    assert abs(s.m.data[0] - 0.02) < 1e-12


def test_lion_sign_zero_fixed_point():
    h = HyperParams(beta1=0.95, beta2=0.98, weight_decay=0.0, peak_lr=0.01)
    w, _ = lion_step(Tensor([2.0]), Tensor([0.0]), LionState.zeros((1,)), h, 0.01)
    assert w.data[0] == 2.0


def test_lion_update_magnitude_saturates_at_lr():
    h = HyperParams(beta1=0.95, beta2=0.98, weight_decay=0.0, peak_lr=0.01)
    w0 = Tensor([1.0, -1.0])
    w, _ = lion_step(w0, Tensor([1e12, -1e12]), LionState.zeros((2,)), h, 0.01)
    assert np.allclose(np.abs(w.data - w0.data), 0.01, rtol=0, atol=1e-15)


def test_lion_per_coordinate_bound_with_decay():
    rng = np.random.default_rng(4)
    h = HyperParams(beta1=0.95, beta2=0.98, weight_decay=0.3, peak_lr=0.01)
    for _ in range(200):
        w = Tensor(rng.normal(size=4) * 3)
        g = Tensor(rng.normal(size=4) * 100)
        s = LionState(Tensor(rng.normal(size=4)), 1)
        w2, _ = lion_step(w, g, s, h, 0.01)
        cap = 0.01 * (1.0 + 0.3 * np.abs(w.data))
        assert np.all(np.abs(w2.data - w.data) <= cap + 1e-15)


def test_sgdm_oracles():
    w, _ = sgdm_step(Tensor([1.0]), Tensor([1.0]), SgdmState.zeros((1,)), hp(beta1=0.0), 0.1)
    assert abs(w.data[0] - 0.9) < 1e-12  # plain SGD

    w, s = sgdm_step(Tensor([1.0]), Tensor([1.0]), SgdmState.zeros((1,)), hp(), 0.1)
    assert abs(w.data[0] - 0.99) < 1e-12
    assert abs(s.m.data[0] - 0.1) < 1e-12

    # zero gradient: momentum decays geometrically
    s = SgdmState(Tensor([1.0]), 0)
    w = Tensor([0.0])
    for t in range(1, 5):
        w, s = sgdm_step(w, Tensor([0.0]), s, hp(), 0.1)
        assert abs(s.m.data[0] - 0.9**t) < 1e-15


# ---------------------------------------------------------------------------
# adam_mini
# ---------------------------------------------------------------------------


def bias_corrected_adam_oracle(w, g_seq, beta1, beta2, lr, eps, wd):
    """Scalar reference: classic two-moment update with bias correction."""
    m = v = 0.0
    for t, g in enumerate(g_seq, start=1):
        w = (1.0 - lr * wd) * w
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        w = w - lr * m_hat / (math.sqrt(v_hat) + eps)
    return w


def test_adam_mini_singleton_blocks_equal_bias_corrected_adam():
    rng = np.random.default_rng(5)
    h = hp(weight_decay=0.05)
    g_seq = rng.normal(size=6)
    w = Tensor([0.7])
    state = AdamMiniState.zeros((1,))
    for g in g_seq:
        w, state = adam_mini_step(w, Tensor([g]), state, h, 0.01)
    expected = bias_corrected_adam_oracle(0.7, g_seq, 0.9, 0.95, 0.01, 1e-8, 0.05)
    assert abs(w.data[0] - expected) < 1e-12


def test_adam_mini_block_mean_of_squares():
    state = AdamMiniState.zeros((2,))
    _, s2 = adam_mini_step(Tensor([0.0, 0.0]), Tensor([3.0, 4.0]), state, hp(), 0.01)
    assert abs(s2.v[0] - 0.05 * ((9.0 + 16.0) / 2.0)) < 1e-12


def test_adam_mini_degenerate_hyperparameters_normalize_by_block_rms():
    h = HyperParams(beta1=0.0, beta2=0.0, weight_decay=0.0, epsilon=1e-15, peak_lr=0.01)
    g = np.array([3.0, 4.0])
    w, _ = adam_mini_step(Tensor([0.0, 0.0]), Tensor(g), AdamMiniState.zeros((2,)), h, 0.01)
    rms = math.sqrt((9.0 + 16.0) / 2.0)
    assert np.allclose(w.data, -0.01 * g / rms, rtol=1e-10, atol=0)


def test_adam_mini_multi_block_and_validation():
    state = AdamMiniState.zeros((4,), blocks=[(0, 2), (2, 4)])
    w, s = adam_mini_step(Tensor([1.0] * 4), Tensor([1.0, 1.0, 2.0, 2.0]), state, hp(), 0.01)
    assert abs(s.v[0] - 0.05 * 1.0) < 1e-15
    assert abs(s.v[1] - 0.05 * 4.0) < 1e-15

    with pytest.raises(ValueError):
        AdamMiniState.zeros((4,), blocks=[(0, 2), (2, 2), (2, 4)])  # empty block
    with pytest.raises(ValueError):
        AdamMiniState.zeros((4,), blocks=[(0, 2)])  # not a cover
    with pytest.raises(ValueError):
        AdamMiniState.zeros((4,), blocks=[(0, 2), (3, 4)])  # gap


def test_bias_correction_flag_changes_adaptive_steps():
    w = Tensor([1.0])
    g = Tensor([1.0])
    plain, _ = adams_step(w, g, AdamSState.zeros((1,)), hp(), 0.1)
    corrected, _ = adams_step(w, g, AdamSState.zeros((1,)), hp(), 0.1, bias_correction=True)
    assert plain.data[0] != corrected.data[0]
    # first corrected step: m_hat = g, v_hat = g^2 -> unit-magnitude step
    assert abs(corrected.data[0] - (1.0 - 0.1 * 1.0 / (1.0 + 1e-8))) < 1e-12


def test_non_finite_gradient_rejected():
    for step, state in (
        (adams_step, AdamSState.zeros((2,))),
        (adamw_step, AdamWState.zeros((2,))),
        (lion_step, LionState.zeros((2,))),
        (sgdm_step, SgdmState.zeros((2,))),
        (adam_mini_step, AdamMiniState.zeros((2,))),
    ):
        with pytest.raises(NonFiniteError):
            step(Tensor([1.0, 1.0]), Tensor([1.0, math.nan]), state, hp(), 0.1)


# ---------------------------------------------------------------------------
# Shared invariants
# ---------------------------------------------------------------------------


def test_decoupled_decay_is_exact_for_zero_gradient_zero_state():
    h = hp(weight_decay=0.1)
    lr = 0.25
    shrink = 1.0 - lr * 0.1
    w = Tensor([2.0, -3.0])
    g = Tensor([0.0, 0.0])
    for step, state in (
        (adams_step, AdamSState.zeros((2,))),
        (adamw_step, AdamWState.zeros((2,))),
        (sgdm_step, SgdmState.zeros((2,))),
    ):
        w2, _ = step(w, g, state, h, lr)
        assert np.array_equal(w2.data, shrink * w.data)


def _random_states(n, rng):
    for _ in range(n):
        d = int(rng.choice([1, 2, 4, 16, 64]))
        scale = 10.0 ** rng.uniform(-3, 3)
        yield (
            Tensor(rng.normal(size=d) * scale),
            Tensor(rng.normal(size=d) * scale),
            Tensor(rng.normal(size=d) * scale),
        )


BETA_GRID = [(0.9, 0.95), (0.9, 0.9), (0.95, 0.98), (0.8, 0.9), (0.5, 0.5), (0.0, 0.95)]


def test_bounded_update_tight_holds_on_random_states():
    rng = np.random.default_rng(11)
    lr = 6e-4
    for beta1, beta2 in BETA_GRID:
        h = hp(beta1=beta1, beta2=beta2)
        for w, m, g in _random_states(300, rng):
            state = AdamSState(m, 1)
            w2, _ = adams_step(w, g, state, h, lr)
            delta = float(np.linalg.norm(w2.data - w.data))
            assert delta <= update_norm_bound_tight(h, lr, w.size) + 1e-12


def test_max_form_bound_is_falsified_by_aligned_momentum():
    # m = g makes the per-coordinate ratio 1/(1 + eps), above
    # max{b1/sqrt(b2), (1-b1)/sqrt(1-b2)} = 0.9234 for (0.9, 0.95); the
    # provable cap is the root-sum-of-squares form
    h = hp()
    lr = 6e-4
    w = Tensor([0.0])
    state = AdamSState(Tensor([1.0]), 1)
    w2, _ = adams_step(w, Tensor([1.0]), state, h, lr)
    delta = float(np.linalg.norm(w2.data - w.data))
    assert delta > update_norm_bound(h, lr, 1) + 1e-12
    assert delta <= update_norm_bound_tight(h, lr, 1) + 1e-12


def test_scaled_gradient_saturation():
    # multiplying g by c > 0 keeps the adaptive step per coordinate inside
    # the root-sum-of-squares cap, independent of c
    h = hp()
    lr = 0.1
    m = Tensor([0.3, -2.0, 0.0])
    w = Tensor([1.0, 1.0, 1.0])
    cap = lr * optim.momentum_ratio_rss(h.beta1, h.beta2)
    for c in (1e-6, 1.0, 1e6, 1e12):
        g = Tensor(np.array([1.0, -0.5, 2.0]) * c)
        w2, _ = adams_step(w, g, AdamSState(m, 1), h, lr)
        assert np.all(np.abs(w2.data - w.data) <= cap + 1e-15)


@given(
    st.floats(0.0, 0.995),
    st.floats(0.0, 0.995),
    st.integers(1, 16),
    st.integers(0, 2**32 - 1),
)
@settings(max_examples=150, deadline=None)
def test_bounded_update_tight_property(beta1, beta2, d, seed):
    rng = np.random.default_rng(seed)
    h = hp(beta1=beta1, beta2=beta2)
    lr = 1e-2
    w = Tensor(rng.normal(size=d))
    m = Tensor(rng.normal(size=d))
    g = Tensor(rng.normal(size=d))
    w2, _ = adams_step(w, g, AdamSState(m, 1), h, lr)
    bound = update_norm_bound_tight(h, lr, d)
    assert float(np.linalg.norm(w2.data - w.data)) <= bound + 1e-12


def test_update_norm_bound_hand_value():
    h = hp()
    got = update_norm_bound(h, 6e-4, 4)
    expected = 6e-4 * 2.0 * max(0.9 / math.sqrt(0.95), 0.1 / math.sqrt(0.05))
    assert abs(got - expected) < 1e-15
    assert abs(got - 0.00110806) < 5e-9


def test_update_norm_bound_momentum_free_and_limits():
    h0 = hp(beta1=0.0)
    assert update_norm_bound(h0, 1.0, 1) == 1.0 / math.sqrt(1.0 - 0.95)
    # beta2 -> 1: first arm tends to beta1, second arm blows up
    h = hp(beta2=0.999999)
    assert update_norm_bound(h, 1.0, 1) == (1.0 - 0.9) / math.sqrt(1.0 - 0.999999)
    # the provable cap always dominates the optimistic one
    for beta1, beta2 in BETA_GRID:
        h = hp(beta1=beta1, beta2=beta2)
        assert update_norm_bound_tight(h, 1.0, 4) >= update_norm_bound(h, 1.0, 4)
    with pytest.raises(ValueError):
        update_norm_bound(hp(), 1.0, 0)


# ---------------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------------


def test_lr_curve_endpoints_and_midpoint():
    sched = Schedule(warmup_steps=100, total_steps=1100, final_lr_fraction=0.1)
    peak = 6e-4
    assert lr_at(0, sched, peak) == 0.0
    assert lr_at(100, sched, peak) == peak
    assert abs(lr_at(1100, sched, peak) - 0.1 * peak) < 1e-18
    midpoint = lr_at(100 + 500, sched, peak)
    assert abs(midpoint - 0.55 * peak) < 1e-18


def test_lr_curve_monotone_after_warmup_and_continuous():
    sched = Schedule(warmup_steps=50, total_steps=500, final_lr_fraction=0.1)
    peak = 1.0
    values = [lr_at(t, sched, peak) for t in range(50, 501)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert abs(lr_at(50, sched, peak) - peak) < 1e-15  # junction continuity


def test_lr_out_of_range_and_validation():
    sched = Schedule(warmup_steps=10, total_steps=100)
    with pytest.raises(ValueError):
        lr_at(-1, sched, 1.0)
    with pytest.raises(ValueError):
        lr_at(101, sched, 1.0)
    with pytest.raises(ValueError):
        Schedule(warmup_steps=100, total_steps=100)
    with pytest.raises(ValueError):
        Schedule(warmup_steps=-1, total_steps=100)
    with pytest.raises(ValueError):
        Schedule(warmup_steps=0, total_steps=10, final_lr_fraction=0.0)


def test_zero_warmup_starts_at_peak():
    sched = Schedule(warmup_steps=0, total_steps=10)
    assert lr_at(0, sched, 2.0) == 2.0


def test_hyperparams_validation():
    for bad in (
        dict(beta1=1.0),
        dict(beta2=-0.1),
        dict(weight_decay=-1),
        dict(epsilon=0.0),
        dict(peak_lr=0.0),
        dict(clip_threshold=0.0),
    ):
        with pytest.raises(ValueError):
            hp(**bad)


# ---------------------------------------------------------------------------
# Memory accounting
# ---------------------------------------------------------------------------


def test_memory_footprint_halving():
    d = int(1.5e9)
    scal_w, ratio_w = memory_footprint("adamw", [d])
    scal_s, ratio_s = memory_footprint("adams", [d])
    assert scal_w == 3_000_000_000 and scal_s == 1_500_000_000
    assert ratio_w == 1 and ratio_s == optim.Fraction(1, 2)


def test_memory_footprint_variants():
    _, ratio = memory_footprint("sgdm", [100, 200])
    assert ratio == optim.Fraction(1, 2)
    _, ratio = memory_footprint("lion", [64])
    assert ratio == optim.Fraction(1, 2)
    scal, _ = memory_footprint("adam_mini", [100])
    assert scal == 101
    scal, ratio = memory_footprint("adam_mini", [100, 50], blocks_per_tensor=[2, 1])
    assert scal == 153 and ratio == optim.Fraction(153, 300)
    with pytest.raises(ValueError):
        memory_footprint("sgd", [10])
    with pytest.raises(ValueError):
        memory_footprint("adams", [])


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(8)
    tensors = [
        Tensor(rng.normal(size=(3, 4)) * 10.0 ** float(rng.integers(-200, 200))),
        Tensor(rng.normal(size=7)),
        Tensor([[1.5]]),
    ]
    path = tmp_path / "raw.ckpt"
    optim.save_checkpoint(path, "tensors", 42, tensors)
    kind, step, loaded = optim.load_checkpoint(path)
    assert kind == "tensors" and step == 42
    for a, b in zip(tensors, loaded):
        assert a.shape == b.shape
        assert a.data.tobytes() == b.data.tobytes()


def test_state_round_trip_all_kinds(tmp_path):
    rng = np.random.default_rng(9)
    shape = (5,)
    blocks = [(0, 2), (2, 5)]
    for kind in optim.KINDS:
        state = optim.init_state(kind, shape, blocks=blocks if kind == "adam_mini" else None)
        w = Tensor(rng.normal(size=shape))
        for _ in range(3):
            g = Tensor(rng.normal(size=shape))
            w, state = optim.STEP_FUNCS[kind](w, g, state, hp(), 0.01)
        path = tmp_path / f"{kind}.ckpt"
        optim.save_state(path, kind, state)
        kind2, restored = optim.load_state(
            path, blocks=blocks if kind == "adam_mini" else None
        )
        assert kind2 == kind
        assert restored.t == state.t
        assert np.array_equal(restored.m.data, state.m.data)
        if kind == "adamw":
            assert np.array_equal(restored.v.data, state.v.data)
        if kind == "adam_mini":
            assert restored.v == state.v and restored.blocks == state.blocks


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 30)
    with pytest.raises(optim.CheckpointError):
        optim.load_checkpoint(path)
