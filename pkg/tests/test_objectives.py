import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bridgelab import bridge
from bridgelab.objectives import (REGISTRY, ParamMode, Predictor, convert_pretrained_to_bridge,
                                  ddpm_alpha_bar, fm_times, fresh_predictor, loss_mse,
                                  make_pretrain_pair, reference_predictor, registry_row,
                                  target_dsb_original, target_fr, target_s_dsb, target_tr)
from bridgelab.schedules import make_schedule
from bridgelab.smallnet import DriftNet

from conftest import OracleNet, constant_net, identity_net, random_net


SCHED = make_schedule(8, normalize=True)


def test_registry_rows():
    assert registry_row("s-dsb")["y_k"] == "neighbouring state"
    for name in ("sgm-ve", "i2sb", "bridge-tts"):
        with pytest.raises(NotImplementedError, match="out of scope"):
            registry_row(name)
    assert {m.value for m in ParamMode} <= set(REGISTRY)


def test_alpha_bar_table():
    ab = ddpm_alpha_bar(SCHED)
    assert ab[0] == 1.0
    assert ab[-1] == pytest.approx(1e-4, rel=1e-12)
    assert np.all(np.diff(ab) < 0)


def test_fm_times_are_convex_weights():
    t = fm_times(SCHED)
    assert t[0] == 0.0 and t[-1] == 1.0
    np.testing.assert_allclose(fm_times(SCHED, aligned=False), np.arange(9) / 8)


def test_original_target_with_identity_drift_is_previous_state(rng):
    F = fresh_predictor(identity_net(8), "dsb", "forward", 8)
    F.c[:] = 0.0  # F(k, x) = x
    xk, xk1 = rng.standard_normal((2, 5, 2))
    np.testing.assert_allclose(target_dsb_original(F, 3, xk, xk1), xk, atol=1e-15)


def test_original_target_with_linear_drift(rng):
    A = np.array([[0.3, -1.0], [2.0, 0.5]])
    g = 0.25
    F = Predictor(OracleNet(lambda k, x: g * x @ A.T), ParamMode.DSB, "forward",
                  np.ones(9), np.ones(9), np.arange(9))
    xk, xk1 = rng.standard_normal((2, 6, 2))
    y = target_dsb_original(F, 2, xk, xk1)
    np.testing.assert_allclose(y - xk, g * (xk - xk1) @ A.T, atol=1e-14)


def test_constant_drift_makes_targets_agree_and_counts_evaluations(rng):
    c = np.array([0.7, -1.3])
    for direction, k in (("backward", 3), ("forward", 3)):
        frozen_dir = "forward" if direction == "backward" else "backward"
        pred = fresh_predictor(constant_net(0.05 * c, 8), "dsb", frozen_dir, 8)
        xk, xk1 = rng.standard_normal((2, 10_000, 2))
        pred.nfe = 0
        y = target_dsb_original(pred, k, xk, xk1, direction)
        assert pred.nfe == 2 * 10_000
        np.testing.assert_allclose(y, target_s_dsb(xk, xk1, direction), atol=1e-12)


def test_simplified_target_pairs():
    xk, xk1 = np.zeros((1, 2)), np.ones((1, 2))
    np.testing.assert_array_equal(target_s_dsb(xk, xk1, "backward"), xk)
    np.testing.assert_array_equal(target_s_dsb(xk, xk1, "forward"), xk1)


def test_terminal_target_is_constant_along_path(rng):
    path = rng.standard_normal((9, 2))
    ys = [target_tr(path[:1]) for _ in range(8)]
    for y in ys:
        np.testing.assert_array_equal(y, path[:1])


def test_flow_target_unit_example():
    s = make_schedule(4, normalize=True)
    y = target_fr(s, np.array([4]), np.ones((1, 1)), np.zeros((1, 1)), "backward")
    assert y[0, 0] == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        target_fr(s, np.array([0]), np.ones((1, 1)), np.zeros((1, 1)), "backward")
    with pytest.raises(ValueError):
        target_fr(s, np.array([4]), np.ones((1, 1)), np.zeros((1, 1)), "forward")


def test_flow_target_on_straight_path_is_the_fm_velocity(rng):
    x0, xN = rng.standard_normal((2, 1, 2))
    gb = SCHED.gamma_bar
    for k in range(1, 8):
        xk = (1 - gb[k]) * x0 + gb[k] * xN
        np.testing.assert_allclose(target_fr(SCHED, np.array([k]), xk, x0, "backward"), x0 - xN,
                                   atol=1e-12)
        np.testing.assert_allclose(target_fr(SCHED, np.array([k]), xk, xN, "forward"), xN - x0,
                                   atol=1e-12)


def test_loss_convention_sums_coordinates():
    loss, g = loss_mse(np.array([[1.0, 0.0]]), np.zeros((1, 2)))
    assert loss == 1.0
    np.testing.assert_array_equal(g, [[2.0, 0.0]])
    assert loss_mse(np.ones((3, 2)), np.ones((3, 2)))[0] == 0.0


def test_pretrain_pairs(rng):
    x0, eps = rng.standard_normal((2, 4, 2))
    p = make_pretrain_pair("ddpm", x0, eps, np.zeros(4, dtype=int), SCHED)
    np.testing.assert_array_equal(p.x, x0)
    np.testing.assert_array_equal(p.y, eps)
    q = make_pretrain_pair("fm", x0, eps, np.full(4, 8), SCHED)
    np.testing.assert_array_equal(q.x, eps)
    np.testing.assert_array_equal(q.y, eps - x0)
    with pytest.raises(ValueError):
        make_pretrain_pair("ddpm", x0, eps, np.zeros(4, dtype=int), SCHED, prior_is_gaussian=False)
    with pytest.raises(ValueError):
        make_pretrain_pair("s-dsb", x0, eps, np.zeros(4, dtype=int), SCHED)


def test_ddpm_marginal_variance(rng):
    ab = ddpm_alpha_bar(SCHED)
    n = 200_000
    for k in (2, 5):
        p = make_pretrain_pair("ddpm", rng.standard_normal((n, 2)) * 1.0,
                               rng.standard_normal((n, 2)), np.full(n, k), SCHED)
        assert p.x.var() == pytest.approx(ab[k] * 1.0 + 1 - ab[k], rel=0.02)
        p = make_pretrain_pair("ddpm", 2.0 * rng.standard_normal((n, 2)),
                               rng.standard_normal((n, 2)), np.full(n, k), SCHED)
        assert p.x.var() == pytest.approx(4.0 * ab[k] + 1 - ab[k], rel=0.02)


# -- adapters -----------------------------------------------------------------


def _ddpm_oracle(x0, ab):
    """Exact noise predictor for point-mass data at ``x0``."""
    return OracleNet(lambda k, x: (x - np.sqrt(ab[k])[:, None] * x0) / np.sqrt(1 - ab[k])[:, None])


def test_ddpm_to_terminal_recovers_point_mass(rng):
    ab = ddpm_alpha_bar(SCHED)
    x0 = np.array([[1.5, -0.5]])
    pred = convert_pretrained_to_bridge(_ddpm_oracle(x0, ab), "ddpm", "tr-dsb", "backward", SCHED)
    x = rng.standard_normal((20, 2))
    for k in range(1, 9):
        np.testing.assert_allclose(pred(k, x), np.broadcast_to(x0, x.shape), atol=1e-9)


def test_ddpm_to_next_state_reproduces_marginal_construction(rng):
    ab = ddpm_alpha_bar(SCHED)
    x0 = rng.standard_normal((30, 2))
    eps = rng.standard_normal((30, 2))
    oracle = OracleNet(lambda k, x: eps)
    for direction, shift in (("forward", 1), ("backward", -1)):
        pred = convert_pretrained_to_bridge(oracle, "ddpm", "s-dsb", direction, SCHED)
        ks = range(0, 8) if direction == "forward" else range(1, 9)
        for k in ks:
            xk = np.sqrt(ab[k]) * x0 + np.sqrt(1 - ab[k]) * eps
            want = np.sqrt(ab[k + shift]) * x0 + np.sqrt(1 - ab[k + shift]) * eps
            np.testing.assert_allclose(pred(k, xk), want, atol=1e-9)


def _fm_oracle(x0, xN):
    return OracleNet(lambda k, x: np.broadcast_to(xN - x0, x.shape))


@pytest.mark.parametrize("to_mode", ["s-dsb", "tr-dsb", "fr-dsb"])
@pytest.mark.parametrize("sched", [SCHED, make_schedule(8)], ids=["normalized", "raw"])
def test_fm_adapters_on_straight_paths(to_mode, sched, rng):
    x0, xN = rng.standard_normal((2, 7, 2))
    t = fm_times(sched)
    for direction in ("backward", "forward"):
        pred = convert_pretrained_to_bridge(_fm_oracle(x0, xN), "fm", to_mode, direction, sched)
        ks = range(1, 9) if direction == "backward" else range(0, 8)
        for k in ks:
            xk = (1 - t[k]) * x0 + t[k] * xN
            if to_mode == "s-dsb":
                j = k - 1 if direction == "backward" else k + 1
                want = (1 - t[j]) * x0 + t[j] * xN
            elif to_mode == "tr-dsb":
                want = x0 if direction == "backward" else xN
            else:
                end = x0 if direction == "backward" else xN
                want = target_fr(sched, np.full(7, k), xk, end, direction)
            np.testing.assert_allclose(pred(k, xk), want, atol=1e-12)


def test_role_swapped_fm_matches_forward_fm(rng):
    x0, xN = rng.standard_normal((2, 5, 2))
    t = fm_times(SCHED)
    swapped = OracleNet(lambda k, x: np.broadcast_to(x0 - xN, x.shape))  # trained prior -> data
    for direction in ("backward", "forward"):
        a = convert_pretrained_to_bridge(_fm_oracle(x0, xN), "fm", "s-dsb", direction, SCHED)
        b = convert_pretrained_to_bridge(swapped, "fm", "s-dsb", direction, SCHED,
                                         reversed_roles=True)
        np.testing.assert_array_equal(b.index, np.arange(9)[::-1])
        for k in range(1, 8):
            xk = (1 - t[k]) * x0 + t[k] * xN
            np.testing.assert_allclose(a(k, xk), b(k, xk), atol=1e-12)


def test_incompatible_conversions():
    net = DriftNet(n_steps=8)
    with pytest.raises(ValueError):
        convert_pretrained_to_bridge(net, "s-dsb", "tr-dsb", "backward", SCHED)
    with pytest.raises(ValueError):
        convert_pretrained_to_bridge(net, "ddpm", "fm", "backward", SCHED)
    with pytest.raises(ValueError):
        convert_pretrained_to_bridge(net, "ddpm", "s-dsb", "backward", SCHED, reversed_roles=True)


def test_predictor_heads_round_trip():
    p = convert_pretrained_to_bridge(DriftNet(n_steps=8), "fm", "fr-dsb", "forward", SCHED)
    q = Predictor.from_head_dict(p.net, p.head_dict())
    for f in ("a", "c", "index"):
        np.testing.assert_array_equal(getattr(p, f), getattr(q, f))
    assert q.mode is ParamMode.FR_DSB and q.source == "fm->fr-dsb"


def test_fresh_heads():
    s = fresh_predictor(DriftNet(n_steps=4), "s-dsb", "backward", 4)
    x = np.ones((3, 2))
    np.testing.assert_array_equal(s(2, x), x)  # zero last layer: stay put
    f = fresh_predictor(DriftNet(n_steps=4), "fr-dsb", "backward", 4)
    np.testing.assert_array_equal(f(2, x), 0.0)
    np.testing.assert_array_equal(reference_predictor(4)(1, x), x)
    with pytest.raises(ValueError):
        fresh_predictor(DriftNet(n_steps=4), "ddpm", "backward", 4)
    with pytest.raises(ValueError):
        fresh_predictor(DriftNet(n_steps=4), "s-dsb", "sideways", 4)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), mode=st.sampled_from(["s-dsb", "tr-dsb", "fr-dsb"]))
def test_head_gradient_matches_finite_differences(seed, mode):
    rng = np.random.default_rng(seed)
    pred = convert_pretrained_to_bridge(random_net(seed, n_steps=8), "ddpm", mode, "backward", SCHED)
    k = rng.integers(1, 9, size=6)
    x, y = rng.standard_normal((2, 6, 2))
    out, cache = pred.forward_train(k, x)
    _, g = loss_mse(out, y)
    grads = pred.backward(k, x, g, cache=cache)
    name = "W1"
    idx = tuple(rng.integers(0, s) for s in pred.net.params[name].shape)
    p = pred.net.params[name]
    old, h = p[idx], 1e-6
    p[idx] = old + h
    up = loss_mse(pred(k, x), y)[0]
    p[idx] = old - h
    down = loss_mse(pred(k, x), y)[0]
    p[idx] = old
    assert grads[name][idx] == pytest.approx((up - down) / (2 * h), rel=1e-4, abs=1e-8)
