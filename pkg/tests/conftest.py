"""Shared helpers: tone/band-power oracles and a cached synthetic corpus."""

import math

import numpy as np
import pytest

from bandex.synth import synth_utterance


def tone(freq, n, rate=16000, amp=0.5, phase=0.0):
    return amp * np.cos(2 * np.pi * freq * np.arange(n) / rate + phase)


def tone_amplitude(x, freq, rate=16000):
    """Amplitude of a sinusoid at ``freq`` by projection on an integer number of cycles."""
    x = np.asarray(x, dtype=float)
    period = rate / math.gcd(int(freq), rate)
    n = int(x.size // period * period)
    t = np.arange(n)
    c = np.cos(2 * np.pi * freq * t / rate)
    s = np.sin(2 * np.pi * freq * t / rate)
    return 2 * math.hypot(x[:n] @ c, x[:n] @ s) / n


def band_power(x, lo, hi, rate=16000, nperseg=512):
    from scipy.signal import welch
    f, p = welch(np.asarray(x, dtype=float), rate, nperseg=nperseg)
    m = (f >= lo) & (f < hi)
    return float(p[m].sum())


def db(x):
    return 10 * math.log10(x)


@pytest.fixture(scope="session")
def speech():
    """Three seeded 2 s utterances at 16 kHz."""
    return [synth_utterance(seed, 2.0) for seed in (11, 12, 13)]
