import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phaseamp.latent import LatentParams, LatentState, align_phase, \
    analytic_rollout, coupled_location, lambda_discount, unwrap_phase, \
    wrap_angle

TWO_PI = 2.0 * np.pi


def make_params(omega=(2.0,), lam=(2.0,), dt=0.0157):
    return LatentParams(np.asarray(omega), np.asarray(lam), dt)


class TestLatentParams:
    def test_lambda_sorted_canonically(self):
        p = LatentParams([1.0], [3.0, 1.0, 2.0], 0.01)
        assert np.array_equal(p.lam, [1.0, 2.0, 3.0])

    @pytest.mark.parametrize("kwargs", [
        dict(omega=[-1.0], lam=[1.0], dt=0.01),
        dict(omega=[1.0], lam=[0.0], dt=0.01),
        dict(omega=[1.0], lam=[1.0], dt=0.0),
        dict(omega=[], lam=[1.0], dt=0.01),
    ])
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            LatentParams(np.asarray(kwargs["omega"]), np.asarray(kwargs["lam"]),
                         kwargs["dt"])


class TestAnalyticRollout:
    def test_identity_at_k_zero(self):
        p = make_params()
        z0 = LatentState(np.array([0.7]), np.array([-0.4]))
        z = analytic_rollout(z0, 0, p)
        assert np.array_equal(z.phi, z0.phi)
        assert np.array_equal(z.r, z0.r)

    def test_table_values(self):
        # omega = lam = 2 rad/s, dt = 15.7 ms, 100 steps
        p = make_params()
        z = analytic_rollout(LatentState(np.array([0.0]), np.array([1.0])), 100, p)
        assert z.phi[0] == pytest.approx(3.14, abs=1e-12)
        assert z.r[0] == pytest.approx(np.exp(-3.14), rel=1e-12)
        assert z.r[0] == pytest.approx(0.0433, abs=5e-5)

    def test_zero_amplitude_is_fixed_point(self):
        p = make_params()
        z = analytic_rollout(LatentState(np.array([1.0]), np.array([0.0])), 57, p)
        assert z.r[0] == 0.0

    def test_negative_k_rejected(self):
        with pytest.raises(ValueError):
            analytic_rollout(LatentState(np.array([0.0]), np.array([1.0])),
                             -1, make_params())

    @given(st.integers(0, 300), st.integers(0, 300))
    @settings(max_examples=40, deadline=None)
    def test_semigroup(self, j, k):
        p = make_params(omega=(2.0, 0.5), lam=(1.3,), dt=0.02)
        z0 = LatentState(np.array([0.3, -1.1]), np.array([0.8]))
        via = analytic_rollout(analytic_rollout(z0, j, p), k, p)
        direct = analytic_rollout(z0, j + k, p)
        assert np.allclose(via.phi, direct.phi, rtol=1e-12, atol=1e-12)
        assert np.allclose(via.r, direct.r, rtol=1e-12, atol=1e-15)

    def test_phase_linearity_and_monotone_decay(self):
        p = make_params()
        z0 = LatentState(np.array([0.4]), np.array([0.9]))
        ks = np.arange(50)
        path = analytic_rollout(z0, ks, p)
        assert np.allclose(path.phi[:, 0] - z0.phi[0],
                           p.omega[0] * ks * p.dt, rtol=1e-12, atol=1e-12)
        mags = np.abs(path.r[:, 0])
        assert np.all(mags[1:] < mags[:-1])


class TestUnwrapPhase:
    def test_no_jump_unchanged(self):
        out = unwrap_phase([0.1, 0.2, 0.3])
        assert np.array_equal(out, [0.1, 0.2, 0.3])

    def test_wraparound_example(self):
        out = unwrap_phase([3.0, -3.0])
        assert out[0] == 3.0
        assert out[1] == pytest.approx(-3.0 + TWO_PI, abs=1e-12)
        assert out[1] - out[0] == pytest.approx(0.2832, abs=1e-4)

    def test_single_element(self):
        assert np.array_equal(unwrap_phase([1.234]), [1.234])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            unwrap_phase([])

    @given(st.lists(st.floats(-np.pi, np.pi, exclude_min=True,
                              allow_nan=False), min_size=1, max_size=60))
    @settings(max_examples=60, deadline=None)
    def test_postconditions(self, seq):
        out = unwrap_phase(seq)
        assert out[0] == seq[0]
        turns = (out - np.asarray(seq)) / TWO_PI
        assert np.allclose(turns, np.round(turns), atol=1e-9)
        diffs = np.diff(out)
        assert np.all(diffs > -np.pi) and np.all(diffs <= np.pi + 1e-12)

    def test_multichannel(self):
        seq = np.stack([[3.0, -3.0], [0.1, 0.2]], axis=1)
        out = unwrap_phase(seq)
        assert out[1, 0] == pytest.approx(-3.0 + TWO_PI, abs=1e-12)
        assert out[1, 1] == 0.2


class TestLambdaDiscount:
    def test_phase_weight_is_one(self):
        p = make_params(omega=(1.0, 2.0), lam=(3.0,))
        for k in (0, 1, 10, 500):
            c = lambda_discount(k, 0.99, p)
            assert np.allclose(c[:2], 1.0)

    def test_hand_values(self):
        # lam * dt = 0.1 so d = 0.90484
        p = make_params(omega=(1.0,), lam=(0.1 / 0.0157,), dt=0.0157)
        c0 = lambda_discount(0, 0.99, p)
        c1 = lambda_discount(1, 0.99, p)
        assert c0[1] == pytest.approx(10.42, abs=0.01)
        assert c1[1] == pytest.approx(9.43, abs=0.01)

    def test_pure_phase_all_ones(self):
        p = LatentParams(np.array([1.0, 3.0]), np.zeros(0), 0.05)
        for k in (0, 7, 200):
            assert np.array_equal(lambda_discount(k, 0.5, p),
                                  np.ones(2))

    def test_gamma_bounds(self):
        with pytest.raises(ValueError):
            lambda_discount(0, 1.0, make_params())

    def test_normalized_series(self):
        # (1-gamma) * sum_k gamma^k c_k = 1 per component
        p = make_params(omega=(2.0,), lam=(4.0,), dt=0.05)
        gamma = 0.97
        ks = np.arange(2000)
        c = lambda_discount(ks, gamma, p)
        series = (1.0 - gamma) * np.sum(gamma ** ks[:, None] * c, axis=0)
        assert np.allclose(series, 1.0, atol=1e-8)


class TestCoupledLocation:
    def setup_method(self):
        self.p = make_params(omega=(1.0,), lam=(2.0,), dt=0.1)
        self.z0 = LatentState(np.array([0.2]), np.array([0.5]))

    def test_kappa_zero_is_rollout(self):
        enc = lambda x: LatentState(np.array([9.9]), np.array([9.9]))
        z = coupled_location(self.z0, 3, None, enc, 0.0, self.p)
        ref = analytic_rollout(self.z0, 3, self.p)
        assert np.array_equal(z.phi, ref.phi)
        assert np.array_equal(z.r, ref.r)

    def test_kappa_one_returns_aligned_encoding(self):
        ref = analytic_rollout(self.z0, 40, self.p)
        target_phi = ref.phi[0] + 0.3
        enc = lambda x: LatentState(wrap_angle(np.array([target_phi])),
                                    np.array([-0.1]))
        z = coupled_location(self.z0, 40, None, enc, 1.0, self.p)
        assert z.phi[0] == pytest.approx(target_phi, abs=1e-12)
        assert z.r[0] == pytest.approx(-0.1, abs=1e-15)

    def test_hand_blend(self):
        # f = (1.0, 0.4), aligned h = (1.2, 0.0), kappa = 0.5 -> (1.1, 0.2)
        p = make_params(omega=(1.0,), lam=(2.0,), dt=1.0)
        z0 = LatentState(np.array([0.0]), np.array([0.4 * np.e ** 2]))
        enc = lambda x: LatentState(np.array([1.2]), np.array([0.0]))
        z = coupled_location(z0, 1, None, enc, 0.5, p)
        assert z.phi[0] == pytest.approx(1.1, rel=1e-12)
        assert z.r[0] == pytest.approx(0.2, rel=1e-12)

    def test_kappa_range_checked(self):
        enc = lambda x: LatentState(np.array([0.0]), np.array([0.0]))
        with pytest.raises(ValueError):
            coupled_location(self.z0, 1, None, enc, 1.5, self.p)


class TestAlignPhase:
    @given(st.floats(-50.0, 50.0), st.floats(-50.0, 50.0))
    @settings(max_examples=60, deadline=None)
    def test_within_pi_of_reference(self, phi, ref):
        shifted = align_phase(phi, ref)
        assert abs(shifted - ref) <= np.pi + 1e-9
        assert (shifted - phi) / TWO_PI == pytest.approx(
            round((shifted - phi) / TWO_PI), abs=1e-9)

    def test_wrap_angle_range(self):
        vals = wrap_angle(np.linspace(-20, 20, 401))
        assert np.all(vals > -np.pi) and np.all(vals <= np.pi)
