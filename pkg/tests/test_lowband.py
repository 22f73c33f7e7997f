import math

import numpy as np
import pytest

from bandex.errors import PreconditionError
from bandex.filters import fir_filter, make_bandshape_filters
from bandex.frontend import analyze, low_targets, prepare_input, simulate_telephone
from bandex.lowband import (
    EPS,
    LowbandFrame,
    advance_phase,
    denormalize_amplitudes,
    extract_residual_harmonics,
    harmonic_design,
    harmonic_ls_fit,
    lowband_error,
    normalize_amplitudes,
    periodic_hann,
    predict_low_amplitudes,
    synthesize_lowband,
)
from bandex.pipeline import PipelineConfig, synthesize_lowpart
from bandex.predictors import ModelBundle, zero_predictor
from bandex.synth import synth_vowel

from conftest import band_power, tone_amplitude

W100 = 2 * math.pi * 100 / 16000


class Oracle:
    def __init__(self, rows):
        self.rows = np.asarray(rows, dtype=float)

    def predict(self, features):
        return self.rows


class TestFit:
    def test_exact_recovery(self):
        n = np.arange(256)
        x = 0.3 + 1.5 * np.cos(W100 * n) + 0.5 * np.sin(2 * W100 * n)
        fit = harmonic_ls_fit(x, W100)
        np.testing.assert_allclose([fit.g0, fit.g1, fit.h1, fit.g2, fit.h2], [0.3, 1.5, 0, 0, 0.5], atol=1e-8)
        assert fit.A1 == pytest.approx(1.5, abs=1e-8) and fit.A2 == pytest.approx(0.5, abs=1e-8)

    def test_zero_frame(self):
        fit = harmonic_ls_fit(np.zeros(256), W100)
        assert fit.amplitudes.tolist() == [0, 0] and not np.any(fit.reliable)

    def test_dense_solver_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            n = int(rng.integers(64, 400))
            w0 = 2 * math.pi * rng.uniform(60, 390) / 16000
            x = rng.standard_normal(n)
            win = 0.5 * (1 - np.cos(2 * np.pi * np.arange(n) / n))
            t = np.arange(n)
            D = np.stack([win, win * np.cos(w0 * t), win * np.sin(w0 * t), win * np.cos(2 * w0 * t),
                          win * np.sin(2 * w0 * t)], axis=1)
            c = np.linalg.lstsq(D, x * win, rcond=None)[0]
            fit = harmonic_ls_fit(x, w0)
            np.testing.assert_allclose([fit.g0, fit.g1, fit.h1, fit.g2, fit.h2], c, atol=1e-10)

    def test_non_integer_periods(self):
        # 256 samples at 110 Hz hold 1.76 periods: still exact
        w = 2 * math.pi * 110 / 16000
        n = np.arange(256)
        fit = harmonic_ls_fit(0.8 * np.cos(w * n + 0.4), w)
        assert fit.A1 == pytest.approx(0.8, abs=1e-9) and fit.phases[0] == pytest.approx(0.4, abs=1e-9)

    def test_design_is_windowed(self):
        D = harmonic_design(128, W100)
        np.testing.assert_allclose(D[:, 0], periodic_hann(128))

    @pytest.mark.parametrize("omega", [0.0, 2 * math.pi * 40 / 16000, 2 * math.pi * 450 / 16000])
    def test_range(self, omega):
        with pytest.raises(PreconditionError):
            harmonic_ls_fit(np.ones(256), omega)

    def test_short_frame(self):
        with pytest.raises(PreconditionError):
            harmonic_ls_fit(np.ones(32), W100)


class TestNormalize:
    def test_unit(self):
        np.testing.assert_allclose(normalize_amplitudes([1.0, 1.0], np.ones(64)), 0, atol=1e-9)

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            A = rng.uniform(1e-6, 10, 2)
            r = rng.standard_normal(128)
            back = denormalize_amplitudes(normalize_amplitudes(A, r), r)
            np.testing.assert_allclose(back, A, rtol=1e-12, atol=1e-12 * A.max())

    def test_scale_invariance(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(256) + np.cos(W100 * np.arange(256))
        r = rng.standard_normal(256)
        a = normalize_amplitudes(harmonic_ls_fit(x, W100).amplitudes, r)
        b = normalize_amplitudes(harmonic_ls_fit(7.5 * x, W100).amplitudes, 7.5 * r)
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_silent_is_finite(self):
        a = normalize_amplitudes([0.0, 0.0], np.zeros(64))
        assert np.all(np.isfinite(a)) and a[0] == pytest.approx(math.log(EPS) - math.log(EPS))

    def test_error_metric(self):
        assert lowband_error([1.0, -1.0], [0.0, 0.0]) == pytest.approx(1.0)
        assert lowband_error([3.0, 0.0], [0.0, 4.0]) == pytest.approx(math.sqrt(12.5))

    def test_zero_predictor(self):
        np.testing.assert_array_equal(predict_low_amplitudes(np.ones(17), zero_predictor(2)), [0, 0])

    def test_predictor_shape(self):
        with pytest.raises(PreconditionError):
            predict_low_amplitudes(np.ones(17), zero_predictor(8))


class TestResidualHarmonics:
    def test_phase_recovery(self):
        n = np.arange(256)
        fit = extract_residual_harmonics(0.01 * np.cos(W100 * n + 0.7), W100)
        assert abs(fit.phases[0] - 0.7) <= 0.05 and fit.reliable[0]

    def test_phase_recovered_under_telephone_band(self):
        # the weak harmonic survives next to much stronger in-band content
        n = np.arange(256)
        x = 0.01 * np.cos(W100 * n + 0.7) + np.cos(2 * np.pi * 1000 * n / 16000) + np.cos(2 * np.pi * 2100 * n / 16000)
        assert abs(extract_residual_harmonics(x, W100).phases[0] - 0.7) <= 0.05

    def test_silence_flag(self):
        assert not np.any(extract_residual_harmonics(np.zeros(256), W100).reliable)

    def test_gain_invariance(self):
        x = np.random.default_rng(3).standard_normal(256)
        a = extract_residual_harmonics(x, W100).phases
        b = extract_residual_harmonics(1e-3 * x, W100).phases
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_advance_phase(self):
        assert advance_phase(0.0, 1, W100, W100, 160) == pytest.approx(0.0, abs=1e-9)   # one full period
        assert advance_phase(0.0, 1, W100, W100, 40) == pytest.approx(math.pi / 2, abs=1e-9)
        # a linear glide advances by the mean frequency
        w2 = 2 * math.pi * 140 / 16000
        assert advance_phase(0.0, 1, W100, w2, 10) == pytest.approx(0.5 * (W100 + w2) * 10, abs=1e-12)


def steady(n_frames, A, omega=W100, phases=True):
    frames = []
    for j in range(n_frames):
        ph = np.array([omega * 128 * j, 2 * omega * 128 * j]) if phases else None
        frames.append(LowbandFrame(omega, np.array(A, dtype=float), ph))
    return frames


class TestSynthesis:
    def test_cola_ripple(self):
        y = synthesize_lowband(steady(40, [1.0, 0.0]), lowpass=False)
        mid = y[512:-512]
        t = np.arange(512, y.size - 512)
        env = np.abs(mid / np.cos(W100 * t))
        env = env[np.abs(np.cos(W100 * t)) > 0.5]
        assert 20 * np.log10(env.max() / env.min()) < 0.2

    def test_two_tone_amplitudes(self):
        # 80 and 160 Hz lie inside the flat part of the 200 Hz low-pass
        y = synthesize_lowband(steady(60, [0.4, 0.2], omega=2 * math.pi * 80 / 16000))
        seg = y[1024:-1024]
        assert 20 * np.log10(tone_amplitude(seg, 80) / 0.4) == pytest.approx(0, abs=0.2)
        assert 20 * np.log10(tone_amplitude(seg, 160) / 0.2) == pytest.approx(0, abs=0.2)

    def test_oscillator_continuity_matches_explicit_phases(self):
        a = synthesize_lowband(steady(30, [1.0, 0.5]), lowpass=False)
        frames = steady(30, [1.0, 0.5])
        for fr in frames[1:]:
            fr.phases = np.array([np.nan, np.nan])
        b = synthesize_lowband(frames, lowpass=False)
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_zero_amplitudes(self):
        assert not np.any(synthesize_lowband(steady(10, [0.0, 0.0])))

    def test_out_of_band_rejection(self):
        y = synthesize_lowband(steady(120, [1.0, 0.6], omega=2 * math.pi * 90 / 16000))
        assert band_power(y, 300, 8000) <= band_power(y, 50, 200) * 1e-4

    def test_hop_geometry(self):
        with pytest.raises(PreconditionError):
            synthesize_lowband(steady(4, [1, 1]), hop=100, frame_len=256)

    def test_length_and_start(self):
        y = synthesize_lowband(steady(5, [1, 0]), length=300, start=-64, lowpass=False)
        assert y.size == 300 and y[0] != 0


def test_oracle_amplitudes_within_1db():
    # known f0 = 120 Hz; true normalized amplitudes stand in for the predictor
    cfg = PipelineConfig()
    s16 = synth_vowel(120.0, "a", 2.0)
    track = analyze(prepare_input(simulate_telephone(s16), cfg.inverse_filter()))
    tgt, amps = low_targets(s16, track)
    y = synthesize_lowpart(track, ModelBundle(zero_predictor(8), Oracle(tgt)), cfg)
    lp = make_bandshape_filters()["lowpass_200"]
    ref = fir_filter(s16, lp, delay_compensate=True)
    mid = slice(8000, 28000)
    f0 = 2 * math.pi / np.median([p.fractional_period or p.period for p in track.pitch]) * 16000 / (2 * math.pi)
    for k in (1, 2):
        a_out = tone_amplitude(y[mid], k * f0)
        a_ref = tone_amplitude(ref[mid], k * f0)
        assert abs(20 * np.log10(a_out / a_ref)) <= 1.0, (k, a_out, a_ref)
