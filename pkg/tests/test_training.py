import numpy as np
import pytest

from phaseamp.data import Dataset, ObservableLayout, Trajectory
from phaseamp.latent import LatentParams
from phaseamp.nets import init_params
from phaseamp.objective import ObjectiveConfig
from phaseamp.optim import Adam
from phaseamp.training import TrainConfig, TrainingAbortedError, \
    estimate_frequencies, evaluate_rmse, lambda_grid, preprocess, train


def sine_dataset(freq_hz=0.2, rate_hz=20.0, duration_s=20.0, channels=1,
                 amplitude=1.0):
    t = np.arange(0.0, duration_s, 1.0 / rate_hz)
    cols = [amplitude * np.sin(2 * np.pi * freq_hz * t + 0.3 * c)
            for c in range(channels)]
    return Dataset([Trajectory(np.stack(cols, axis=1), 1.0 / rate_hz)])


class TestLambdaGrid:
    def test_log_spacing(self):
        assert np.allclose(lambda_grid(1.0, 100.0, 3), [1.0, 10.0, 100.0])

    def test_single_point(self):
        assert np.array_equal(lambda_grid(2.0, 2.0, 1), [2.0])

    def test_endpoints_exact_and_ratio_constant(self):
        g = lambda_grid(0.039, 6.283, 32)
        assert g[0] == 0.039 and g[-1] == 6.283
        ratios = g[1:] / g[:-1]
        assert np.allclose(ratios, ratios[0], rtol=1e-12)

    @pytest.mark.parametrize("args", [(0.0, 1.0, 4), (2.0, 1.0, 4), (1.0, 2.0, 0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            lambda_grid(*args)


class TestEstimateFrequencies:
    def test_sine_within_five_percent(self):
        freqs, report = estimate_frequencies(sine_dataset(), 1)
        want = 2 * np.pi * 0.2
        assert abs(freqs[0] - want) / want < 0.05
        assert report.lambda_min <= report.lambda_max

    def test_constant_signal_errors(self):
        ds = Dataset([Trajectory(np.full((200, 2), 3.1), 0.05)])
        with pytest.raises(ValueError):
            estimate_frequencies(ds, 1)

    def test_two_tone_recovery(self):
        t = np.arange(0.0, 24.0, 0.02)
        data = np.stack([np.sin(2 * np.pi * 0.17 * t)
                         + np.sin(2 * np.pi * 0.51 * t),
                         np.cos(2 * np.pi * 0.17 * t)
                         + np.cos(2 * np.pi * 0.51 * t)], axis=1)
        freqs, _ = estimate_frequencies(Dataset([Trajectory(data, 0.02)]), 2)
        want = sorted([2 * np.pi * 0.17, 2 * np.pi * 0.51])
        got = sorted(freqs)
        for g, w in zip(got, want):
            assert abs(g - w) / w < 0.10

    def test_amplitude_invariance(self):
        ds1 = sine_dataset(amplitude=1.0, channels=2)
        ds2 = sine_dataset(amplitude=37.5, channels=2)
        f1, _ = estimate_frequencies(ds1, 1)
        f2, _ = estimate_frequencies(ds2, 1)
        assert f1 == f2

    def test_frequencies_below_nyquist(self):
        freqs, _ = estimate_frequencies(sine_dataset(rate_hz=8.0), 1)
        assert all(f <= np.pi / 0.125 for f in freqs)


class TestPreprocess:
    def test_dc_unchanged(self):
        traj = Trajectory(np.full((720, 1), 2.5), 1.0 / 360.0)
        out = preprocess(traj, target_rate=50.0, cutoff_hz=5.0)
        assert np.allclose(out.data, 2.5, atol=1e-9)

    def test_passband_attenuation_below_one_percent(self):
        t = np.arange(0.0, 20.0, 1.0 / 360.0)
        traj = Trajectory(np.sin(2 * np.pi * 0.2 * t)[:, None], 1.0 / 360.0)
        out = preprocess(traj, target_rate=50.0, cutoff_hz=5.0)
        # compare against the analytic signal at the decimated instants
        want = np.sin(2 * np.pi * 0.2 * out.times)
        mid = slice(50, -50)
        atten = np.abs(out.data[mid, 0] - want[mid]).max()
        assert atten < 0.01

    def test_rate_conversion_step_count(self):
        t = np.arange(0.0, 24.0, 1.0 / 360.0)
        traj = Trajectory(np.sin(2 * np.pi * 0.5 * t)[:, None], 1.0 / 360.0)
        out = preprocess(traj, target_rate=50.0, cutoff_hz=5.0)
        assert abs(len(out) - 1208) / 1208 < 0.03
        assert out.dt == pytest.approx(7.0 / 360.0)

    def test_velocity_channels_recomputed(self):
        t = np.arange(0.0, 10.0, 1.0 / 360.0)
        pos = np.sin(2 * np.pi * 0.3 * t)[:, None]
        vel = np.full_like(pos, 99.0)        # bogus velocities on purpose
        traj = Trajectory(np.concatenate([pos, vel], axis=1), 1.0 / 360.0)
        out = preprocess(traj, 60.0, 5.0, layout=ObservableLayout(1, 1))
        want = 2 * np.pi * 0.3 * np.cos(2 * np.pi * 0.3 * out.times)
        assert np.abs(out.data[20:-20, 1] - want[20:-20]).max() < 0.02

    def test_cutoff_must_be_below_target_nyquist(self):
        traj = Trajectory(np.zeros((100, 1)), 0.01)
        with pytest.raises(ValueError):
            preprocess(traj, target_rate=10.0, cutoff_hz=5.0)


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        params = {"w": np.array([1.0, -2.0])}
        opt = Adam(params, lr=0.1)
        opt.step({"w": np.zeros(2)})
        assert np.array_equal(params["w"], [1.0, -2.0])

    def test_descends_quadratic(self):
        params = {"w": np.array([5.0])}
        opt = Adam(params, lr=0.1)
        for _ in range(500):
            opt.step({"w": 2 * params["w"]})
        assert abs(params["w"][0]) < 1e-3

    def test_state_roundtrip(self):
        params = {"w": np.array([1.0])}
        opt = Adam(params, lr=0.1)
        opt.step({"w": np.array([0.5])})
        state = opt.state_dict()
        opt2 = Adam({"w": np.array([1.0])}, lr=0.1)
        opt2.load_state_dict(state)
        assert opt2.t == 1
        assert np.array_equal(opt2.m["w"], opt.m["w"])


class TestWindowIndex:
    def test_full_and_truncated_windows(self):
        ds = Dataset([Trajectory(np.zeros((10, 1)), 0.1),
                      Trajectory(np.zeros((3, 1)), 0.1)])
        idx = ds.window_index(4)
        full = [e for e in idx if e[0] == 0]
        trunc = [e for e in idx if e[0] == 1]
        assert len(full) == 6 and all(e[2] == 5 for e in full)
        assert trunc == [(1, 0, 3)]

    def test_windows_stay_inside_trajectories(self):
        ds = Dataset([Trajectory(np.zeros((7, 1)), 0.1)])
        for ti, off, length in ds.window_index(3):
            assert off + length <= 7


def tiny_dataset(seed=0, steps=120):
    rng = np.random.default_rng(seed)
    t = np.arange(steps) * 0.05
    base = np.stack([np.cos(2 * t), np.sin(2 * t)], axis=1)
    return Dataset([Trajectory(base + 0.01 * rng.normal(size=base.shape), 0.05)])


def tiny_config(iterations=5, seed=0):
    return TrainConfig(batch_size=4, iterations=iterations, seed=seed,
                       hidden=(8, 8),
                       objective=ObjectiveConfig(gamma=0.9, kappa=0.5,
                                                 dt=0.05, horizon=10))


class TestTrain:
    def test_zero_iterations_returns_initial_params(self):
        ds = tiny_dataset()
        latent = LatentParams([2.0], [1.0], 0.05)
        cfg = tiny_config(iterations=0, seed=3)
        result = train(ds, latent, cfg)
        ref = init_params(3, 2, 1, 1, (8, 8))
        for k, arr in result.model.parameter_arrays().items():
            assert np.array_equal(arr, ref.parameter_arrays()[k])

    def test_seed_determinism_bitwise(self):
        ds = tiny_dataset()
        latent = LatentParams([2.0], [1.0], 0.05)
        a = train(ds, latent, tiny_config(seed=5))
        b = train(ds, latent, tiny_config(seed=5))
        for k, arr in a.model.parameter_arrays().items():
            assert np.array_equal(arr, b.model.parameter_arrays()[k]), k
        assert a.history[-1] == b.history[-1]

    def test_nan_aborts_with_last_good(self):
        ds = tiny_dataset()
        latent = LatentParams([2.0], [1.0], 0.05)
        model = init_params(0, 2, 1, 1, (8, 8))
        model.encoder.w1[0, 0] = np.nan
        with pytest.raises(TrainingAbortedError) as err:
            train(ds, latent, tiny_config(iterations=3), model=model)
        assert err.value.history == []
        assert err.value.model is model

    def test_objective_dt_must_match_dataset(self):
        ds = tiny_dataset()
        latent = LatentParams([2.0], [1.0], 0.05)
        cfg = TrainConfig(batch_size=4, iterations=1, hidden=(8, 8),
                          objective=ObjectiveConfig(dt=0.02, horizon=10))
        with pytest.raises(ValueError):
            train(ds, latent, cfg)


class TestEvaluateRmse:
    def test_constant_decoder_exact(self):
        model = init_params(0, 2, 1, 1, (8, 8))
        dec = model.decoder
        for name in ("w1", "w2", "w3", "b1", "b2"):
            getattr(dec, name)[:] = 0.0
        dec.b3[:] = [0.4, -0.6]
        latent = LatentParams([2.0], [1.0], 0.05)
        traj = Trajectory(np.tile([0.4, -0.6], (50, 1)), 0.05)
        assert evaluate_rmse(model, latent, [traj]) == 0.0

    def test_constant_offset_gives_scaled_norm(self):
        model = init_params(0, 2, 1, 1, (8, 8))
        dec = model.decoder
        for name in ("w1", "w2", "w3", "b1", "b2"):
            getattr(dec, name)[:] = 0.0
        dec.b3[:] = [0.0, 0.0]
        latent = LatentParams([2.0], [1.0], 0.05)
        delta = 0.3
        traj = Trajectory(np.full((40, 2), delta), 0.05)
        got = evaluate_rmse(model, latent, [traj])
        assert got == pytest.approx(delta * np.sqrt(2), rel=1e-12)

    def test_deterministic(self):
        model = init_params(1, 2, 1, 1, (8, 8))
        latent = LatentParams([2.0], [1.0], 0.05)
        traj = Trajectory(np.random.default_rng(0).normal(size=(30, 2)), 0.05)
        assert evaluate_rmse(model, latent, [traj]) \
            == evaluate_rmse(model, latent, [traj])
