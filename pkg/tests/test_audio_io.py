import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandex.audio_io import SignalBuffer, downsample_2x, read_wav, upsample_2x, write_wav
from bandex.errors import FormatError, PreconditionError, UnsupportedFormatError

from conftest import band_power, db, tone, tone_amplitude


def _raw_wav(path, pcm, rate=8000, channels=1, width=2):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(np.asarray(pcm, dtype="<i2").tobytes())


class TestSignalBuffer:
    def test_rejects_unsupported_rate(self):
        with pytest.raises(PreconditionError):
            SignalBuffer(np.zeros(4), 44100)

    def test_rejects_non_finite(self):
        with pytest.raises(PreconditionError):
            SignalBuffer(np.array([0.0, np.nan]), 8000)


class TestReadWav:
    def test_scaling(self, tmp_path):
        p = tmp_path / "a.wav"
        _raw_wav(p, [0, 16384, -32768])
        sig = read_wav(p)
        assert sig.sample_rate == 8000
        np.testing.assert_array_equal(sig.samples, [0.0, 0.5, -1.0])

    def test_empty_data_chunk(self, tmp_path):
        p = tmp_path / "e.wav"
        _raw_wav(p, [])
        assert len(read_wav(p)) == 0

    def test_stereo_is_unsupported(self, tmp_path):
        p = tmp_path / "s.wav"
        _raw_wav(p, [0, 0, 1, 1], channels=2)
        with pytest.raises(UnsupportedFormatError):
            read_wav(p)

    def test_8bit_is_unsupported(self, tmp_path):
        p = tmp_path / "b.wav"
        with wave.open(str(p), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(1)
            wf.setframerate(8000)
            wf.writeframes(bytes([128, 129]))
        with pytest.raises(UnsupportedFormatError):
            read_wav(p)

    def test_garbage_header(self, tmp_path):
        p = tmp_path / "g.wav"
        p.write_bytes(b"not a wave file at all")
        with pytest.raises(FormatError):
            read_wav(p)


class TestWriteWav:
    def _stored(self, path):
        with wave.open(str(path), "rb") as wf:
            return np.frombuffer(wf.readframes(wf.getnframes()), dtype="<i2")

    def test_half_scale(self, tmp_path):
        p = tmp_path / "h.wav"
        write_wav(p, SignalBuffer(np.array([0.5]), 8000))
        assert self._stored(p)[0] == 16384

    def test_clamp(self, tmp_path):
        p = tmp_path / "c.wav"
        write_wav(p, SignalBuffer(np.array([2.0, -3.0]), 8000))
        np.testing.assert_array_equal(self._stored(p), [32767, -32768])

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(-32768, 32767), max_size=200), st.sampled_from([8000, 16000]))
    def test_round_trip_bit_exact(self, tmp_path_factory, values, rate):
        p = tmp_path_factory.mktemp("rt") / "x.wav"
        sig = SignalBuffer(np.array(values, dtype=float) / 32768.0, rate)
        write_wav(p, sig)
        back = read_wav(p)
        assert back.sample_rate == rate
        np.testing.assert_array_equal(back.samples, sig.samples)


class TestUpsample:
    def test_wrong_rate(self):
        with pytest.raises(PreconditionError):
            upsample_2x(SignalBuffer(np.zeros(8), 16000))

    def test_zero_in_zero_out(self):
        y = upsample_2x(SignalBuffer(np.zeros(100), 8000))
        assert y.sample_rate == 16000 and len(y) == 200
        assert not np.any(y.samples)

    def test_1khz_tone_amplitude(self):
        x = tone(1000, 4000, rate=8000)
        y = upsample_2x(SignalBuffer(x, 8000)).samples
        a = tone_amplitude(y[400:-400], 1000)
        assert abs(20 * np.log10(a / 0.5)) < 0.1

    def test_image_rejection_on_white_noise(self):
        x = np.random.default_rng(0).standard_normal(40000) * 0.1
        y = upsample_2x(SignalBuffer(x, 8000)).samples
        assert db(band_power(y, 4000, 8001)) <= db(band_power(y, 0, 3500)) - 40

    def test_in_band_energy_preserved(self):
        from scipy.signal import firwin, lfilter
        rng = np.random.default_rng(1)
        h = firwin(255, 3000, fs=8000)
        for _ in range(3):
            x = lfilter(h, 1, rng.standard_normal(20000)) * 0.1
            y = upsample_2x(SignalBuffer(x, 8000)).samples
            ratio = band_power(y, 0, 3400) / band_power(x, 0, 3400, rate=8000, nperseg=256)
            # same density on twice the rate: Welch power sums differ by the bin width ratio
            assert abs(db(ratio * 256 / 512 * 2)) < 0.2

    def test_time_alignment(self):
        x = np.zeros(400)
        x[200] = 1.0
        y = upsample_2x(SignalBuffer(x, 8000)).samples
        assert int(np.argmax(y)) == 400


class TestDownsample:
    def test_round_trip_of_band_limited_signal(self):
        x = tone(700, 8000, rate=8000, amp=0.3)
        y = downsample_2x(upsample_2x(SignalBuffer(x, 8000))).samples
        np.testing.assert_allclose(y[300:-300], x[300:-300], atol=2e-3)
