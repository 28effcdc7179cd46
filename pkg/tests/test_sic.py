import itertools

import numpy as np
import pytest

from deepmud.channel import NoiseConfig, PowerProfile, draw_channels, draw_noise, superimpose
from deepmud.framing import BPSK_CONSTELLATION, FrameConfig, build_frame, modulate_bpsk
from deepmud.sic import (
    ChannelEstimate,
    estimate_channels_ls,
    ml_point,
    perfect_estimate,
    sic_detect,
    sic_detect_batch,
)


class TestMlPoint:
    def test_nearest_positive(self):
        idx, point = ml_point(0.9 + 0j, 1 + 0j, 1.0, BPSK_CONSTELLATION)
        assert idx == 0 and point == 1 + 0j

    def test_nearest_negative(self):
        idx, point = ml_point(-0.1 + 0j, 1 + 0j, 1.0, BPSK_CONSTELLATION)
        assert idx == 1 and point == -1 + 0j

    def test_tie_breaks_to_lowest_index(self):
        idx, point = ml_point(0.0 + 0j, 1 + 0j, 1.0, BPSK_CONSTELLATION)
        assert idx == 0 and point == 1 + 0j

    def test_empty_constellation(self):
        with pytest.raises(ValueError):
            ml_point(0.0, 1.0, 1.0, np.array([]))

    def test_power_scales_gain(self):
        # with P = 4 the hypotheses sit at +-2h; residual 1.5 is closer to +2
        idx, _ = ml_point(1.5 + 0j, 1 + 0j, 4.0, BPSK_CONSTELLATION)
        assert idx == 0


class TestLsEstimation:
    def test_noiseless_exact(self):
        config = FrameConfig(l=2, n_d=3)
        profile = PowerProfile.ladder(0.0, 2)
        h = np.array([0.5 + 0.5j, -0.3 + 1j])
        frames = [build_frame(i + 1, 1 + 0j, np.ones(3, complex), config)
                  for i in range(2)]
        received = superimpose(frames, h, profile, np.zeros(config.n, complex))
        est = estimate_channels_ls(received, config, profile)
        assert est.source == "pilot_ls"
        assert np.allclose(est.coefficients, h)

    def test_arithmetic_example(self):
        # pilot slot 3 + 4j, P = 4, pilot 1 -> estimate (3 + 4j) / 2
        config = FrameConfig(l=1, n_d=1)
        profile = PowerProfile(transmit_snr_db=10 * np.log10(4.0),
                               device_channel_power=(1.0,))
        received = np.array([3 + 4j, 0j])
        est = estimate_channels_ls(received, config, profile)
        assert np.allclose(est.coefficients, [1.5 + 2j])

    def test_error_variance_oracle(self):
        # LS error h_hat - h = n / sqrt(P); E|err|^2 = n0 / P
        config = FrameConfig(l=1, n_d=1)
        n0 = 0.8
        p_db = 7.0
        profile = PowerProfile.ladder(p_db, 1)
        rng = np.random.default_rng(2024)
        trials = 100_000
        h = draw_channels(rng, profile, 1, size=trials)
        noise = draw_noise(rng, NoiseConfig(n0), config.n, size=trials)
        frame = build_frame(1, 1 + 0j, np.zeros(1, complex), config)
        received = (np.sqrt(profile.transmit_power) * h[:, 0:1] * frame[None, :]
                    + noise)
        est = estimate_channels_ls(received, config, profile)
        err_var = (np.abs(est.coefficients[:, 0] - h[:, 0]) ** 2).mean()
        assert err_var == pytest.approx(n0 / profile.transmit_power, rel=0.05)

    def test_zero_pilot_rejected(self):
        config = FrameConfig(l=1, n_d=1)
        with pytest.raises(ZeroDivisionError):
            estimate_channels_ls(np.zeros(2, complex), config,
                                 PowerProfile.ladder(0.0, 1), pilot=0)

    def test_non_finite_estimate_rejected(self):
        with pytest.raises(ValueError):
            ChannelEstimate(np.array([np.nan + 0j]), "perfect")


def _run_sic_frame(bits, h, profile, config):
    """Transmit the given per-device bits noiselessly and run perfect-CSI SIC."""
    k = len(h)
    frames = [build_frame(i + 1, 1 + 0j, modulate_bpsk(bits[i]), config)
              for i in range(k)]
    received = superimpose(frames, h, profile, np.zeros(config.n, complex))
    result = sic_detect(received[config.l:], perfect_estimate(h), profile, config, k)
    return result


class TestSicDetect:
    def test_single_user_exhaustive(self):
        # noiseless, perfect CSI: every one of the 2^10 data vectors is exact
        config = FrameConfig(l=1, n_d=10)
        profile = PowerProfile.ladder(5.0, 1)
        h = np.array([0.7 - 0.4j])
        for value in range(1024):
            bits = [[(value >> j) & 1 for j in range(10)]]
            result = _run_sic_frame(bits, h, profile, config)
            assert np.array_equal(result.symbols[0], modulate_bpsk(bits[0]))

    def test_two_user_exhaustive(self):
        # h = (2, 1), N_d = 2: all 16 bit combinations recovered exactly
        config = FrameConfig(l=2, n_d=2)
        profile = PowerProfile.ladder(0.0, 2)
        h = np.array([2.0 + 0j, 1.0 + 0j])
        for b in itertools.product((0, 1), repeat=4):
            bits = [b[:2], b[2:]]
            result = _run_sic_frame(bits, h, profile, config)
            for dev in range(2):
                assert np.array_equal(result.symbols[dev], modulate_bpsk(bits[dev])), b

    def test_ambiguous_superposition_tie_break(self):
        # equal channels: (+1, -1) and (-1, +1) superpose identically; the
        # detector resolves both to the documented first-point outcome
        config = FrameConfig(l=2, n_d=1)
        profile = PowerProfile.ladder(0.0, 2)
        h = np.array([1.0 + 0j, 1.0 + 0j])
        res_a = _run_sic_frame([[1], [0]], h, profile, config)  # (-1, +1)
        res_b = _run_sic_frame([[0], [1]], h, profile, config)  # (+1, -1)
        assert np.array_equal(res_a.symbols, res_b.symbols)
        assert res_a.symbols[0][0] == 1 + 0j  # first constellation point

    def test_detection_order_follows_ladder(self):
        config = FrameConfig(l=3, n_d=2)
        profile = PowerProfile.ladder(0.0, 3)
        h = np.array([0.1 + 0j, 5.0 + 0j, 1.0 + 0j])  # instantaneous order differs
        result = sic_detect(np.zeros(2, complex), perfect_estimate(h),
                            profile, config, 3)
        assert np.array_equal(result.detection_order, [0, 1, 2])
        assert sorted(result.detection_order.tolist()) == [0, 1, 2]

    def test_symbols_are_constellation_points(self):
        config = FrameConfig(l=2, n_d=6)
        profile = PowerProfile.ladder(10.0, 2)
        rng = np.random.default_rng(3)
        h = draw_channels(rng, profile, 2)
        noise = draw_noise(rng, NoiseConfig(1.0), config.n)
        frames = [build_frame(i + 1, 1 + 0j,
                              modulate_bpsk(rng.integers(0, 2, 6)), config)
                  for i in range(2)]
        received = superimpose(frames, h, profile, noise)
        result = sic_detect(received[config.l:], perfect_estimate(h),
                            profile, config, 2)
        assert np.all(np.isin(result.symbols, BPSK_CONSTELLATION))

    def test_zero_active_devices(self):
        config = FrameConfig(l=2, n_d=4)
        result = sic_detect(np.zeros(4, complex),
                            perfect_estimate(np.zeros(0, complex)),
                            PowerProfile.ladder(0.0, 2), config, 0)
        assert result.symbols.shape == (0, 4)
        assert result.detection_order.shape == (0,)

    def test_non_finite_estimates_rejected(self):
        config = FrameConfig(l=1, n_d=2)
        bad = ChannelEstimate(np.array([1 + 0j]), "perfect")
        object.__setattr__(bad, "coefficients", np.array([np.inf + 0j]))
        with pytest.raises(FloatingPointError):
            sic_detect(np.zeros(2, complex), bad, PowerProfile.ladder(0.0, 1),
                       config, 1)

    def test_too_many_devices(self):
        config = FrameConfig(l=2, n_d=2)
        with pytest.raises(ValueError):
            sic_detect(np.zeros(2, complex),
                       perfect_estimate(np.ones(3, complex)),
                       PowerProfile.ladder(0.0, 3), config, 3)

    def test_batch_matches_scalar(self):
        config = FrameConfig(l=2, n_d=4)
        profile = PowerProfile.ladder(12.0, 2)
        rng = np.random.default_rng(8)
        h = draw_channels(rng, profile, 2, size=16)
        data = (rng.standard_normal((16, 4)) + 1j * rng.standard_normal((16, 4)))
        batch = sic_detect_batch(data, h, profile, config)
        for b in range(16):
            single = sic_detect(data[b], perfect_estimate(h[b]), profile, config, 2)
            assert np.array_equal(batch[b], single.symbols)
