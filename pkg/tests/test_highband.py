import numpy as np
import pytest
from scipy.signal import welch

from bandex.errors import PreconditionError
from bandex.filters import fir_filter, make_bandshape_filters
from bandex.frontend import analyze, high_targets, prepare_input, simulate_telephone, wideband_envelopes
from bandex.highband import (
    SMOOTHING_TAPS,
    ExcitationFrame,
    assemble_wideband_envelope,
    band_energy,
    extend_excitation,
    extend_excitation_stream,
    postprocess_highband,
    predict_high_envelope,
    smooth_envelope_track,
    spectral_fold,
)
from bandex.pipeline import PipelineConfig, synthesize_highband
from bandex.predictors import ModelBundle, zero_predictor
from bandex.spectrum import HIGH_KEEP, HIGH_SLICE, SpectralEnvelope, aggregate_distortion, dct, spectral_distortion
from bandex.synth import VOWELS, synth_vowel

from conftest import tone, tone_amplitude


class Oracle:
    """Stands in for a predictor and returns precomputed targets."""

    def __init__(self, rows):
        self.rows = np.asarray(rows, dtype=float)

    def predict(self, features):
        return self.rows


@pytest.fixture(scope="module")
def lp3500():
    return make_bandshape_filters()["lowpass_3500"]


class TestFold:
    def test_zero_insertion(self):
        np.testing.assert_array_equal(spectral_fold([1, 2, 3]), [2, 0, 4, 0, 6, 0])

    def test_zero(self):
        assert not np.any(spectral_fold(np.zeros(10)))

    def test_mirror_line(self):
        y = spectral_fold(tone(1000, 8000, rate=8000))
        a1, a7 = tone_amplitude(y, 1000, 16000), tone_amplitude(y, 7000, 16000)
        assert a1 == pytest.approx(0.5, rel=1e-6) and a7 == pytest.approx(a1, rel=1e-6)


class TestExtendExcitation:
    def test_zero(self):
        out = extend_excitation(np.zeros(256))
        assert not np.any(out.samples) and out.band_energy == 0

    def test_band_energy_preserved(self, lp3500):
        rng = np.random.default_rng(0)
        for _ in range(5):
            r = fir_filter(rng.standard_normal(4096), lp3500, delay_compensate=True)
            out = extend_excitation(ExcitationFrame(r), lowpass=lp3500)
            assert band_energy(out.samples, lp3500) / band_energy(r, lp3500) == pytest.approx(1, abs=0.01)

    def test_flat_on_white_noise(self, lp3500):
        r = fir_filter(np.random.default_rng(1).standard_normal(16000), lp3500, delay_compensate=True)
        u = extend_excitation(r, lowpass=lp3500).samples
        f, p = welch(u, 16000, nperseg=512)
        band = p[(f >= 3500) & (f <= 7000)]
        assert np.exp(np.mean(np.log(band))) / np.mean(band) >= 0.5

    def test_harmonics_above_3500(self, lp3500):
        f0 = 125.0
        x = np.zeros(16384)
        x[::128] = 1.0
        r = fir_filter(x, lp3500, delay_compensate=True)
        u = extend_excitation(r, lowpass=lp3500).samples
        spec = np.abs(np.fft.rfft(u * np.hanning(u.size)))
        freqs = np.fft.rfftfreq(u.size, 1 / 16000)
        band = (freqs >= 3500) & (freqs <= 7000)
        s, fr = spec[band], freqs[band]
        peaks = [i for i in range(1, s.size - 1) if s[i] > s[i - 1] and s[i] >= s[i + 1] and s[i] > 0.3 * s.max()]
        spacing = np.diff(fr[peaks])
        assert len(peaks) >= 20
        assert abs(np.median(spacing) - f0) <= 0.02 * f0

    def test_stream_zero_and_finite(self):
        assert not np.any(extend_excitation_stream(np.zeros(1000)))
        out = extend_excitation_stream(np.random.default_rng(2).standard_normal(3000))
        assert np.all(np.isfinite(out))

    def test_stream_is_causal(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(2048)
        y = x.copy()
        y[1500:] = rng.standard_normal(548)
        a, b = extend_excitation_stream(x), extend_excitation_stream(y)
        # blocks ending at or before sample 1408 never see the change
        np.testing.assert_array_equal(a[:1408], b[:1408])


class TestPrediction:
    def test_zero_predictor_is_flat(self):
        c = predict_high_envelope(np.ones(17), zero_predictor(HIGH_KEEP))
        env = assemble_wideband_envelope(SpectralEnvelope(np.zeros(32)), c)
        np.testing.assert_allclose(env.log_power, 0, atol=1e-12)

    def test_deterministic(self):
        p = Oracle(np.arange(8.0))
        np.testing.assert_array_equal(predict_high_envelope(np.ones(17), p).coefficients,
                                      predict_high_envelope(np.ones(17), p).coefficients)

    def test_wrong_shape(self):
        with pytest.raises(PreconditionError):
            predict_high_envelope(np.ones(17), zero_predictor(3))


class TestSmoothing:
    def test_constant(self):
        t = np.tile(np.arange(8.0), (6, 1))
        np.testing.assert_allclose(smooth_envelope_track(t), t)

    def test_impulse(self):
        t = np.zeros((7, 8))
        t[3, 2] = 1
        np.testing.assert_allclose(smooth_envelope_track(t)[2:5, 2], SMOOTHING_TAPS)
        assert smooth_envelope_track(t).sum() == pytest.approx(1)

    def test_alternating(self):
        t = np.array([[(-1.0) ** j] for j in range(10)])
        np.testing.assert_allclose(smooth_envelope_track(t)[1:-1], 0, atol=1e-15)

    def test_single_frame(self):
        np.testing.assert_allclose(smooth_envelope_track(np.ones((1, 8))), np.ones((1, 8)))

    def test_empty(self):
        with pytest.raises(PreconditionError):
            smooth_envelope_track(np.zeros((0, 8)))


class TestAssemble:
    def test_flat(self):
        env = assemble_wideband_envelope(SpectralEnvelope(np.zeros(32)), np.zeros(8))
        np.testing.assert_allclose(env.log_power, 0, atol=1e-12)

    def test_seam_continuity(self):
        # both sides agree on a smooth ramp: no jump at the seam
        full = np.linspace(2.0, -3.0, 64)
        c = dct(full[HIGH_SLICE], HIGH_KEEP)
        env = assemble_wideband_envelope(SpectralEnvelope(full[:32]), c).log_power
        assert np.max(np.abs(np.diff(env))) <= 1.0
        np.testing.assert_allclose(env[:24], full[:24])

    def test_true_cepstrum_reproduces_envelope(self, speech):
        sds = []
        for s16 in speech:
            wide = wideband_envelopes(s16)
            track = analyze(prepare_input(simulate_telephone(s16), PipelineConfig().inverse_filter()))
            tgt, off = high_targets(wide, track.tel_env)
            for j in np.flatnonzero(track.frame_rms > 1e-3):
                env = assemble_wideband_envelope(SpectralEnvelope(track.tel_env[j]), tgt[j])
                true = SpectralEnvelope(wide[j] - off[j])
                sds.append(spectral_distortion(true, env, (3500, 8000)))
        assert aggregate_distortion(sds) <= 0.9


class TestPostprocess:
    def _gain_db(self, hz, att=6.0):
        x = tone(hz, 16000)
        return 20 * np.log10(tone_amplitude(postprocess_highband(x, att)[1000:-1000], hz) / 0.5)

    def test_notch(self):
        assert self._gain_db(4000) <= -30

    def test_passband_attenuation(self):
        assert self._gain_db(6000) == pytest.approx(-6, abs=1)

    def test_highpass(self):
        assert self._gain_db(1000) <= -40

    def test_configurable(self):
        assert self._gain_db(6000, 0.0) == pytest.approx(0, abs=1)


def band_db(x, band, starts, n=256):
    f = np.fft.rfftfreq(n, 1 / 16000)
    m = (f >= band[0]) & (f <= band[1])
    w = np.hanning(n)
    return np.array([10 * np.log10(np.sum(np.abs(np.fft.rfft(x[s:s + n] * w))[m] ** 2)) for s in starts])


def test_true_envelope_band_energy_per_frame():
    # true wideband envelopes drive the synthesis, so output and original
    # differ only through the excitation; both pass the same post-filter
    cfg = PipelineConfig(highband_attenuation_db=0.0)
    worst = {}
    for vowel in VOWELS:
        s16 = synth_vowel(120.0, vowel, 1.0)
        track = analyze(prepare_input(simulate_telephone(s16), cfg.inverse_filter()))
        tgt, _ = high_targets(wideband_envelopes(s16), track.tel_env)
        y = synthesize_highband(track, ModelBundle(Oracle(tgt), zero_predictor(2)), cfg)
        ref = postprocess_highband(s16, 0.0)
        # steady part: the synthesizer glides formants over the first third
        starts = [j * 128 - 64 for j in range(48, track.n_frames - 4)]
        d = band_db(y, (4500, 7000), starts) - band_db(ref, (4500, 7000), starts)
        worst[vowel] = float(np.max(np.abs(d)))
    assert max(worst.values()) <= 3.0, worst
