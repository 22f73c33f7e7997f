"""Seeded formant-synthesizer speech for tests and demos.

Voiced segments are a glottal pulse train shaped by a cascade of
second-order resonators (five vowel formants plus fixed higher formants);
fricatives are noise through broad high resonances.  Formants and f0 glide
between segments, and every random choice comes from one generator so a
seed reproduces the corpus bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .audio_io import SignalBuffer, write_wav

RATE = 16000
BLOCK = 64

# F1..F5 in Hz
VOWELS = {
    "a": (730, 1090, 2440, 3400, 4500),
    "i": (270, 2290, 3010, 3700, 4700),
    "u": (300, 870, 2240, 3300, 4300),
    "e": (530, 1840, 2480, 3500, 4600),
    "o": (570, 840, 2410, 3350, 4400),
    "ae": (660, 1720, 2410, 3450, 4550),
    "er": (490, 1350, 1690, 3300, 4450),
}
VOWEL_BW = (70, 100, 140, 220, 300)
# fixed formants above F5 stand in for the poles a five-formant cascade
# leaves out (higher-pole correction of the high-frequency level)
HIGH_FORMANTS = ((5500.0, 600.0), (6500.0, 800.0))
# centre frequencies / bandwidths of the fricative noise shaping
FRICATIVES = {
    "s": ((5200, 1200), (7000, 1500)),
    "sh": ((2900, 700), (4300, 1500)),
    "f": ((3500, 3500), (6500, 3000)),
}


@dataclass
class Segment:
    kind: str            # "vowel", "fricative" or "silence"
    label: str
    duration: float      # seconds
    f0: tuple = (0.0, 0.0)
    level: float = 1.0


def _resonator(freq, bw):
    """Unity-DC-gain two-pole resonator coefficients (b, a)."""
    r = math.exp(-math.pi * bw / RATE)
    a = np.array([1.0, -2 * r * math.cos(2 * math.pi * freq / RATE), r * r])
    return np.array([a.sum()]), a


def _pulse_train(f0_track, rng, jitter=0.01):
    """Glottal excitation: one impulse per period, period from an f0 track."""
    out = np.zeros(f0_track.size)
    phase = rng.uniform(0, 1)
    steps = f0_track / RATE * (1 + jitter * rng.standard_normal(f0_track.size))
    for n, step in enumerate(steps):
        if step <= 0:
            continue
        phase += step
        if phase >= 1.0:
            phase -= 1.0
            out[n] = 1.0
    # glottal pulse shape: double real pole, then lip radiation
    out = sps.lfilter([1.0], [1.0, -1.9, 0.9025], out)
    return sps.lfilter([1.0, -1.0], [1.0], out)


def _cascade(x, freq_tracks, bw_tracks):
    """Time-varying resonator cascade, coefficients updated every BLOCK samples."""
    y = x.copy()
    for ft, bt in zip(freq_tracks, bw_tracks):
        zi = np.zeros(2)
        out = np.empty_like(y)
        for s in range(0, y.size, BLOCK):
            b, a = _resonator(ft[s], bt[s])
            out[s:s + BLOCK], zi = sps.lfilter(b, a, y[s:s + BLOCK], zi=zi)
        y = out
    return y


def random_segments(rng, duration: float) -> list[Segment]:
    segs, t = [], 0.0
    base_f0 = rng.uniform(90, 220)
    while t < duration:
        u = rng.random()
        if u < 0.62:
            f0a = float(np.clip(base_f0 * rng.uniform(0.85, 1.15), 80, 260))
            f0b = float(np.clip(f0a * rng.uniform(0.85, 1.15), 80, 260))
            seg = Segment("vowel", str(rng.choice(list(VOWELS))), rng.uniform(0.08, 0.25), (f0a, f0b),
                          rng.uniform(0.5, 1.0))
        elif u < 0.9:
            seg = Segment("fricative", str(rng.choice(list(FRICATIVES))), rng.uniform(0.05, 0.14),
                          level=rng.uniform(0.05, 0.25))
        else:
            seg = Segment("silence", "", rng.uniform(0.04, 0.12))
        segs.append(seg)
        t += seg.duration
    return segs


def render(segments, rng, formant_scale: float = 1.0) -> np.ndarray:
    """Render segments to 16 kHz samples, peak-normalized to 0.5."""
    lengths = [max(BLOCK, int(s.duration * RATE) // BLOCK * BLOCK) for s in segments]
    n = sum(lengths)
    f0 = np.zeros(n)
    voice_gain = np.zeros(n)
    noise_gain = np.zeros(n)
    freqs = np.zeros((5, n))
    fric = np.zeros((2, 2, n))   # (resonator, freq/bw, time)
    pos = 0
    last_f = np.array(VOWELS["a"], dtype=float) * formant_scale
    for seg, L in zip(segments, lengths):
        sl = slice(pos, pos + L)
        ramp = np.linspace(0, 1, L)
        if seg.kind == "vowel":
            target = np.array(VOWELS[seg.label], dtype=float) * formant_scale
            target *= 1 + 0.03 * rng.standard_normal(5)
            glide = np.minimum(1.0, ramp * 3)   # reach the target in the first third
            freqs[:, sl] = last_f[:, None] + (target - last_f)[:, None] * glide
            last_f = target
            f0[sl] = seg.f0[0] + (seg.f0[1] - seg.f0[0]) * ramp
            voice_gain[sl] = seg.level
        else:
            freqs[:, sl] = last_f[:, None]
        if seg.kind == "fricative":
            for i, (fc, bw) in enumerate(FRICATIVES[seg.label]):
                fric[i, 0, sl] = fc * rng.uniform(0.95, 1.05)
                fric[i, 1, sl] = bw
            noise_gain[sl] = seg.level
        else:
            fric[:, 0, sl] = np.array([5000.0, 6500.0])[:, None]
            fric[:, 1, sl] = 2000.0
        pos += L
    # smooth gains to avoid clicks at segment edges
    k = np.hanning(2 * BLOCK + 1)
    k /= k.sum()
    voice_gain = np.convolve(voice_gain, k, mode="same")
    noise_gain = np.convolve(noise_gain, k, mode="same")

    src = _pulse_train(f0, rng) * voice_gain
    src += 0.002 * rng.standard_normal(n) * voice_gain        # aspiration
    bws = np.array(VOWEL_BW, dtype=float)[:, None] * np.ones(n)
    voiced = _cascade(src, list(freqs) + [np.full(n, f) for f, _ in HIGH_FORMANTS],
                      list(bws) + [np.full(n, b) for _, b in HIGH_FORMANTS])
    noise = rng.standard_normal(n) * noise_gain
    fricative = _cascade(noise, [fric[0, 0], fric[1, 0]], [fric[0, 1], fric[1, 1]])
    x = voiced / (np.std(voiced[voice_gain > 0.1]) + 1e-12 if np.any(voice_gain > 0.1) else 1.0)
    x = x + 0.6 * fricative / (np.std(fricative[noise_gain > 0.02]) + 1e-12 if np.any(noise_gain > 0.02) else 1.0)
    x += 1e-5 * rng.standard_normal(n)
    peak = np.max(np.abs(x))
    return 0.5 * x / peak if peak > 0 else x


def synth_utterance(seed: int, duration: float = 2.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    scale = rng.uniform(0.9, 1.15)
    return render(random_segments(rng, duration), rng, scale)


def synth_vowel(f0: float = 120.0, vowel: str = "a", duration: float = 1.0, seed: int = 0) -> np.ndarray:
    """A single steady vowel at 16 kHz (peak 0.5)."""
    rng = np.random.default_rng(seed)
    return render([Segment("vowel", vowel, duration, (f0, f0), 1.0)], rng)


def make_corpus(directory, n_files: int, seed: int = 0, duration: float = 2.0) -> list[Path]:
    """Write ``n_files`` 16 kHz utterances; file i uses seed ``seed * 100003 + i``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_files):
        p = d / f"utt{i:04d}.wav"
        write_wav(p, SignalBuffer(synth_utterance(seed * 100003 + i, duration), RATE))
        paths.append(p)
    return paths
