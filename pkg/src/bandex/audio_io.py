"""PCM WAV input/output and 2x sample-rate conversion.

Only mono 16-bit PCM is handled; that is all the speech material needs.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from functools import cache
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import FormatError, PreconditionError, UnsupportedFormatError

SUPPORTED_RATES = (8000, 16000)

# anti-imaging low-pass for upsampling (16 kHz domain)
UPSAMPLE_TAPS = 127
UPSAMPLE_CUTOFF_HZ = 3500.0


@dataclass(frozen=True)
class SignalBuffer:
    """Mono audio with its sample rate. Samples are float64 in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate not in SUPPORTED_RATES:
            raise PreconditionError(f"unsupported sample rate {self.sample_rate}")
        if not np.all(np.isfinite(x)):
            raise PreconditionError("signal contains non-finite samples")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path) -> SignalBuffer:
    """Read a mono 16-bit PCM WAV file, scaling samples by 1/32768."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            frames = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise UnsupportedFormatError(f"{path}: {msg}") from exc
        raise FormatError(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise FormatError(f"{path}: truncated header") from exc
    if n_channels != 1:
        raise UnsupportedFormatError(f"{path}: {n_channels} channels, only mono is supported")
    if width != 2:
        raise UnsupportedFormatError(f"{path}: {8 * width}-bit samples, only 16-bit PCM is supported")
    if rate not in SUPPORTED_RATES:
        raise UnsupportedFormatError(f"{path}: sample rate {rate} Hz not in {SUPPORTED_RATES}")
    pcm = np.frombuffer(frames, dtype="<i2")
    return SignalBuffer(pcm.astype(np.float64) / 32768.0, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    """Clamp to [-1, 1 - 2**-15], scale by 32768 and round to nearest."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0 - 2.0**-15)
    return np.rint(x * 32768.0).astype("<i2")


def write_wav(path, sig: SignalBuffer) -> None:
    """Write *sig* as a mono 16-bit PCM WAV file."""
    pcm = to_pcm16(sig.samples)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sig.sample_rate)
        wf.writeframes(pcm.tobytes())


@cache
def _resampling_lowpass() -> np.ndarray:
    h = sps.firwin(UPSAMPLE_TAPS, UPSAMPLE_CUTOFF_HZ, window="hamming", fs=16000)
    h.setflags(write=False)
    return h


def resampling_lowpass() -> np.ndarray:
    """Taps of the 127-tap linear-phase low-pass used for 8k <-> 16k conversion."""
    return _resampling_lowpass().copy()


def _filter_aligned(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    delay = (h.size - 1) // 2
    y = sps.convolve(x, h, mode="full")
    return y[delay:delay + x.size]


def upsample_2x(sig: SignalBuffer) -> SignalBuffer:
    """8 kHz -> 16 kHz by zero insertion (gain 2) and a 3500 Hz low-pass.

    The filter delay is removed so input and output stay time-aligned.
    """
    if sig.sample_rate != 8000:
        raise PreconditionError(f"upsample_2x expects 8000 Hz input, got {sig.sample_rate}")
    x = sig.samples
    z = np.zeros(2 * x.size)
    z[0::2] = 2.0 * x
    if x.size == 0:
        return SignalBuffer(z, 16000)
    return SignalBuffer(_filter_aligned(z, _resampling_lowpass()), 16000)


def downsample_2x(sig: SignalBuffer) -> SignalBuffer:
    """16 kHz -> 8 kHz: same 3500 Hz low-pass, then keep even samples."""
    if sig.sample_rate != 16000:
        raise PreconditionError(f"downsample_2x expects 16000 Hz input, got {sig.sample_rate}")
    if len(sig) == 0:
        return SignalBuffer(np.zeros(0), 8000)
    y = _filter_aligned(sig.samples, _resampling_lowpass())
    return SignalBuffer(y[0::2], 8000)
