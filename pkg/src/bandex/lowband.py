"""Low-band (50-200 Hz) reconstruction with a two-harmonic sinusoidal model.

A frame is approximated, under a periodic Hann window
``w(n) = (1 - cos(2 pi n / N)) / 2``, by

    g0 + g1 cos(w0 n) + h1 sin(w0 n) + g2 cos(2 w0 n) + h2 sin(2 w0 n)

with coefficients found by least squares.  Harmonic k is then
``A_k cos(k w0 n + phi_k)`` with ``A_k = hypot(g_k, h_k)`` and
``phi_k = atan2(-h_k, g_k)``; phases refer to the first sample of the frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, PreconditionError
from .filters import fir_filter, make_bandshape_filters

EPS = 1e-10
PHASE_RELIABLE = 1e-7
OMEGA_RANGE = (2 * math.pi * 50 / 16000, 2 * math.pi * 400 / 16000)
MIN_FRAME = 64
MAX_COND = 1e12


def periodic_hann(n: int) -> np.ndarray:
    return 0.5 * (1.0 - np.cos(2 * np.pi * np.arange(n) / n))


def clip_omega(omega0: float) -> float:
    """Pull a fundamental just inside the open model range."""
    lo, hi = OMEGA_RANGE
    return float(np.clip(omega0, lo * (1 + 1e-9), hi * (1 - 1e-9)))


@dataclass(frozen=True)
class HarmonicFit:
    g0: float
    g1: float
    h1: float
    g2: float
    h2: float
    omega0: float

    @property
    def A1(self) -> float:
        return math.hypot(self.g1, self.h1)

    @property
    def A2(self) -> float:
        return math.hypot(self.g2, self.h2)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([self.A1, self.A2])

    @property
    def phases(self) -> np.ndarray:
        return np.array([math.atan2(-self.h1, self.g1), math.atan2(-self.h2, self.g2)])

    @property
    def reliable(self) -> np.ndarray:
        """Per harmonic: is the fitted amplitude large enough to trust its phase?"""
        return self.amplitudes >= PHASE_RELIABLE


def harmonic_design(n: int, omega0: float) -> np.ndarray:
    """The five windowed basis columns."""
    t = np.arange(n)
    cols = np.stack([np.ones(n), np.cos(omega0 * t), np.sin(omega0 * t),
                     np.cos(2 * omega0 * t), np.sin(2 * omega0 * t)], axis=1)
    return cols * periodic_hann(n)[:, None]


def harmonic_ls_fit(frame, omega0: float) -> HarmonicFit:
    """Least-squares two-harmonic fit of an unwindowed frame."""
    x = np.asarray(frame, dtype=float)
    if x.size < MIN_FRAME:
        raise PreconditionError(f"frame must have at least {MIN_FRAME} samples")
    lo, hi = OMEGA_RANGE
    if not lo < omega0 < hi:
        raise PreconditionError(f"omega0 {omega0:.5g} outside ({lo:.5g}, {hi:.5g})")
    D = harmonic_design(x.size, omega0)
    G = D.T @ D
    cond = np.linalg.cond(G)
    if not cond < MAX_COND:
        raise NumericalError(f"harmonic fit normal equations ill-conditioned (cond ~ {cond:.3g})")
    c = np.linalg.solve(G, D.T @ (x * periodic_hann(x.size)))
    return HarmonicFit(*(float(v) for v in c), float(omega0))


def excitation_rms(excitation) -> float:
    r = np.asarray(excitation, dtype=float)
    return float(np.sqrt(np.mean(r * r))) if r.size else 0.0


def normalize_amplitudes(A, excitation=None, *, rms: float | None = None) -> np.ndarray:
    """ln(A_k + eps) - ln(||r|| + eps), ||r|` the RMS of the excitation frame."""
    rms = excitation_rms(excitation) if rms is None else rms
    return np.log(np.asarray(A, dtype=float) + EPS) - math.log(rms + EPS)


def denormalize_amplitudes(a_tilde, excitation=None, *, rms: float | None = None) -> np.ndarray:
    rms = excitation_rms(excitation) if rms is None else rms
    return np.maximum(np.exp(np.asarray(a_tilde, dtype=float) + math.log(rms + EPS)) - EPS, 0.0)


def predict_low_amplitudes(features, predictor) -> np.ndarray:
    """Masked inference of the two normalized log-amplitudes."""
    a = np.asarray(predictor.predict(features), dtype=float)
    if a.shape != (2,):
        raise PreconditionError(f"low-band predictor returned shape {a.shape}")
    return a


def lowband_error(pred, true) -> float:
    """sqrt((e1^2 + e2^2) / 2) over the two log-amplitudes."""
    d = np.asarray(pred, dtype=float) - np.asarray(true, dtype=float)
    return float(np.sqrt(np.mean(d * d)))


def extract_residual_harmonics(tel_frame, omega0: float) -> HarmonicFit:
    """Fit the weak low harmonics still present in a telephone-band frame.

    Only the phases are used downstream; check ``reliable`` before trusting
    them.
    """
    return harmonic_ls_fit(tel_frame, omega0)


def advance_phase(phi, k: int, omega_from: float, omega_to: float, distance: float) -> float:
    """Phase of harmonic k after ``distance`` samples of a linear f0 glide."""
    return float(np.angle(np.exp(1j * (phi + k * 0.5 * (omega_from + omega_to) * distance))))


@dataclass
class LowbandFrame:
    omega0: float
    amplitudes: np.ndarray
    phases: np.ndarray | None = None   # NaN entries fall back to phase continuity


def synthesize_lowband(frames, hop: int = 128, frame_len: int = 256, length: int | None = None,
                       start: int = 0, lowpass: bool = True) -> np.ndarray:
    """Hann-windowed two-harmonic frames, overlap-added at ``hop``.

    Frame j starts at ``start + j * hop`` (samples before 0 are dropped).  A
    harmonic without a usable phase continues the previous frame's
    oscillator.  The sum is low-passed at 200 Hz unless ``lowpass`` is off.
    """
    if frame_len != 2 * hop:
        raise PreconditionError("overlap-add needs hop = frame_len / 2")
    frames = list(frames)
    if length is None:
        length = max(0, start + (len(frames) - 1) * hop + frame_len) if frames else 0
    out = np.zeros(length)
    win = periodic_hann(frame_len)
    t = np.arange(frame_len)
    prev_phi = np.zeros(2)
    prev_omega = None
    for j, fr in enumerate(frames):
        phi = np.full(2, np.nan) if fr.phases is None else np.array(fr.phases, dtype=float)
        for k in range(2):
            if not np.isfinite(phi[k]):
                phi[k] = 0.0 if prev_omega is None else advance_phase(prev_phi[k], k + 1, prev_omega, fr.omega0, hop)
        A = np.asarray(fr.amplitudes, dtype=float)
        seg = win * (A[0] * np.cos(fr.omega0 * t + phi[0]) + A[1] * np.cos(2 * fr.omega0 * t + phi[1]))
        s = start + j * hop
        a, b = max(s, 0), min(s + frame_len, length)
        if a < b:
            out[a:b] += seg[a - s:b - s]
        prev_phi, prev_omega = phi, fr.omega0
    if lowpass and out.size:
        out = fir_filter(out, make_bandshape_filters()["lowpass_200"], delay_compensate=True)
    return out
