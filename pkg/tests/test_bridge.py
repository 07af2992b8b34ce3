import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bridgelab import bridge
from bridgelab.datasets2d import Dist2D
from bridgelab.objectives import ParamMode, Predictor, fresh_predictor, reference_predictor
from bridgelab.schedules import make_schedule, posterior_variances
from bridgelab.smallnet import NumericalError

from conftest import OracleNet, constant_net, random_net
from oracles import chain_posterior_backward, chain_posterior_forward


def head(net, mode, direction, N, a=1.0, c=1.0):
    return Predictor(net, ParamMode(mode), direction, np.full(N + 1, a), np.full(N + 1, c),
                     np.arange(N + 1))


def zero_drift(N, direction):
    return head(None, "s-dsb", direction, N, c=0.0)


@pytest.mark.parametrize("N", [2, 4, 8])
@pytest.mark.parametrize("normalize", [True, False])
def test_posterior_means_match_gaussian_conditioning(N, normalize, rng):
    s = make_schedule(N, 0.3, 0.3, shape="constant", normalize=normalize)
    for k in range(N):
        x0, xk1, xk, xN = rng.standard_normal(4)
        m, _ = chain_posterior_backward(s.gamma, k, x0, xk1)
        mt, _ = chain_posterior_forward(s.gamma, k, xk, xN)
        assert bridge.posterior_mean_backward(s, k, xk1, x0) == pytest.approx(m, abs=1e-10)
        assert bridge.posterior_mean_forward(s, k, xk, xN) == pytest.approx(mt, abs=1e-10)


def test_posterior_mean_worked_example():
    s = make_schedule(4, 1.0, 1.0, shape="constant", normalize=True)
    assert bridge.posterior_mean_backward(s, 1, 1.0, 0.0) == pytest.approx(0.5)
    assert bridge.posterior_mean_backward(s, 0, 7.0, 2.0) == 2.0
    assert bridge.posterior_mean_backward(s, 2, 3.0, 3.0) == 3.0


def test_next_state_identity_without_noise():
    s = make_schedule(4)
    x = np.array([[1.0, -2.0]])
    np.testing.assert_array_equal(bridge.forward_step(zero_drift(4, "forward"), s, 0, x,
                                                      noise=np.zeros_like(x)), x)
    np.testing.assert_array_equal(bridge.backward_step(zero_drift(4, "backward"), s, 3, x,
                                                       noise=np.zeros_like(x)), x)


def test_terminal_mode_lands_on_prediction_at_the_boundary(rng):
    s = make_schedule(4, normalize=True)
    target = np.array([3.0, 4.0])
    F = head(constant_net(target, 4), "tr-dsb", "forward", 4, a=0.0)
    B = head(constant_net(-target, 4), "tr-dsb", "backward", 4, a=0.0)
    x = rng.standard_normal((5, 2))
    np.testing.assert_array_equal(bridge.forward_step(F, s, 3, x, rng=rng), np.tile(target, (5, 1)))
    np.testing.assert_array_equal(bridge.backward_step(B, s, 1, x, rng=rng), np.tile(-target, (5, 1)))


def test_flow_mode_constant_field():
    s = make_schedule(4, 1.0, 1.0, shape="constant", normalize=True)  # every step 0.25
    c = np.array([2.0, -4.0])
    F = head(constant_net(c, 4), "fr-dsb", "forward", 4, a=0.0)
    x = np.array([[1.0, 1.0]])
    out = bridge.forward_step(F, s, 1, x, noise=np.zeros_like(x))
    np.testing.assert_allclose(out, x + 0.25 * c)
    nxt = head(constant_net(0.25 * c, 4), "s-dsb", "forward", 4)
    np.testing.assert_allclose(bridge.forward_step(nxt, s, 1, x, noise=np.zeros_like(x)), out)


def test_step_preconditions(rng):
    s = make_schedule(4)
    x = np.zeros((1, 2))
    with pytest.raises(ValueError):
        bridge.forward_step(zero_drift(4, "forward"), s, 4, x, rng=rng)
    with pytest.raises(ValueError):
        bridge.backward_step(zero_drift(4, "backward"), s, 0, x, rng=rng)
    with pytest.raises(ValueError):
        bridge.forward_step(zero_drift(4, "backward"), s, 0, x, rng=rng)
    with pytest.raises(ValueError):
        bridge.forward_step(zero_drift(4, "forward"), s, 0, x)
    with pytest.raises(ValueError):
        bridge.forward_step(zero_drift(4, "forward"), s, 0, x, rng=rng, variance="huge")
    pre = head(None, "ddpm", "forward", 4)
    with pytest.raises(ValueError):
        bridge.forward_step(pre, s, 0, x, rng=rng)


@pytest.mark.parametrize("direction", ["forward", "backward"])
def test_flow_and_next_state_samplers_agree(direction):
    s = make_schedule(8, normalize=True)
    net = random_net(3, n_steps=8)
    nxt = head(net, "s-dsb", direction, 8)
    # f(k, x) = (F(k, x) - x) / gamma of the step the index drives
    step = s.gamma if direction == "forward" else np.concatenate([[1.0], s.gamma])
    flow = Predictor(net, ParamMode.FR_DSB, direction, np.zeros(9), 1.0 / np.resize(step, 9),
                     np.arange(9))
    start = np.random.default_rng(0).standard_normal((300, 2))
    a = bridge.cache_trajectories(nxt, s, direction, start, 300, np.random.default_rng(5))
    b = bridge.cache_trajectories(flow, s, direction, start, 300, np.random.default_rng(5),
                                  variance="kernel")
    np.testing.assert_allclose(a.states, b.states, atol=1e-12, rtol=0)


def test_terminal_backward_chain_ends_exactly_at_prediction(rng):
    s = make_schedule(6, normalize=True)
    c = np.array([0.5, -1.5])
    B = head(constant_net(c, 6), "tr-dsb", "backward", 6, a=0.0)
    out = bridge.sample_generation(B, s, 50, Dist2D("gaussian"), rng)
    np.testing.assert_array_equal(out, np.tile(c, (50, 1)))


def test_trajectory_shapes_and_endpoints(rng):
    s = make_schedule(5)
    data = rng.standard_normal((10, 2))
    t = bridge.cache_trajectories(reference_predictor(5), s, "forward", data, 10, rng)
    assert t.states.shape == (10, 6, 2) and len(t) == 10 and t.N == 5
    np.testing.assert_array_equal(t.states[:, 0], data)
    assert t.fingerprint == "reference"
    b = bridge.cache_trajectories(zero_drift(5, "backward"), s, "backward", data, 10, rng)
    np.testing.assert_array_equal(b.states[:, -1], data)


def test_single_step_chain(rng):
    s = make_schedule(1)
    x0 = rng.standard_normal((4, 2))
    seed_rng = np.random.default_rng(9)
    t = bridge.cache_trajectories(reference_predictor(1), s, "forward", x0, 4, seed_rng)
    brng = np.random.default_rng(t.block_seeds[0])
    noise = brng.standard_normal((4, 1, 2))[:, 0]
    np.testing.assert_array_equal(t.states[:, 1],
                                  bridge.forward_step(reference_predictor(1), s, 0, x0, noise=noise))


def test_brownian_endpoint_variance():
    s = make_schedule(8, 0.05, 0.05, shape="constant")
    t = bridge.cache_trajectories(reference_predictor(8), s, "forward", np.zeros((100_000, 2)),
                                  100_000, np.random.default_rng(0))
    assert np.var(t.states[:, -1] - t.states[:, 0]) == pytest.approx(2 * s.T, rel=0.02)


def test_worker_count_does_not_change_paths():
    s = make_schedule(6)
    B = head(random_net(1, n_steps=6), "s-dsb", "backward", 6)
    a = bridge.cache_trajectories(B, s, "backward", Dist2D("gaussian"), 1000,
                                  np.random.default_rng(2), workers=1)
    b = bridge.cache_trajectories(B, s, "backward", Dist2D("gaussian"), 1000,
                                  np.random.default_rng(2), workers=4)
    np.testing.assert_array_equal(a.states, b.states)
    assert a.block_seeds == b.block_seeds


def test_non_finite_state_reports_step(rng):
    s = make_schedule(6)

    def blow_up(k, x):
        return np.where((k == 3)[:, None], np.nan, 0.0) * np.ones_like(x)

    F = head(OracleNet(blow_up), "s-dsb", "forward", 6)
    with pytest.raises(NumericalError, match="k=3"):
        bridge.cache_trajectories(F, s, "forward", Dist2D("gaussian"), 10, rng)


def test_original_targets_cost_one_extra_evaluation(rng):
    s = make_schedule(6)
    F = head(random_net(2, n_steps=6), "dsb", "forward", 6)
    t = bridge.cache_trajectories(F, s, "forward", Dist2D("gaussian"), 100, rng, dsb_targets=True)
    assert F.nfe == 2 * 100 * 6
    F.nfe = 0
    bridge.cache_trajectories(F, s, "forward", Dist2D("gaussian"), 100, rng)
    assert F.nfe == 100 * 6
    from bridgelab.objectives import target_dsb_original
    for k in range(6):
        want = target_dsb_original(F, k, t.states[:, k], t.states[:, k + 1], "backward")
        np.testing.assert_allclose(t.dsb_targets[:, k], want, atol=1e-12)


def test_empty_generation(rng):
    s = make_schedule(4)
    out = bridge.sample_generation(zero_drift(4, "backward"), s, 0, Dist2D("gaussian"), rng)
    assert out.shape == (0, 2)


def test_trajectory_csv(tmp_path, rng):
    s = make_schedule(16)
    t = bridge.cache_trajectories(reference_predictor(16), s, "forward", Dist2D("gaussian"), 3, rng)
    path = tmp_path / "t.csv"
    bridge.write_trajectories_csv(path, t.states)
    lines = path.read_text().splitlines()
    assert lines[0] == "path_id,k,x,y"
    assert len(lines) == 1 + 3 * 17


def test_smaller_steps_move_less():
    data = Dist2D("checkerboard", standardize=True)
    moves = []
    for lo, hi in ((1e-4, 1e-3), (1e-3, 1e-2)):
        s = make_schedule(16, lo, hi)
        t = bridge.cache_trajectories(reference_predictor(16), s, "forward", data, 2000,
                                      np.random.default_rng(0))
        moves.append(bridge.path_displacement(t.states))
    assert moves[0] < moves[1]


@settings(max_examples=20, deadline=None)
@given(N=st.integers(1, 10), k_frac=st.floats(0, 0.999), normalize=st.booleans())
def test_posterior_variances_are_bounded_by_the_step_variance(N, k_frac, normalize):
    s = make_schedule(N, 1e-3, 1e-2, normalize=normalize)
    k = int(k_frac * N)
    sig, sig_t = posterior_variances(s, k)
    assert 0.0 <= sig <= 2 * s.gamma[k] + 1e-15
    assert 0.0 <= sig_t <= 2 * s.gamma[k] + 1e-15
