"""Short-term linear prediction.

Conventions: the predictor is ``x(n) ~ sum_i a_i x(n-i)``, so the analysis
filter is ``A(z) = 1 - sum_i a_i z^-i``. ``LpcModel.coefficients`` holds
``a_1..a_N`` and ``LpcModel.polynomial`` the taps of ``A(z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .audio_io import SignalBuffer
from .errors import InstabilityError, PreconditionError

SILENT_FLOOR = 1e-10
SYNTHESIS_LIMIT = 1e6


@dataclass
class AnalysisConfig:
    """Frame geometry and conditioning constants (16 kHz unless noted).

    ``lag_beta`` is given for 16 kHz; analyses at 8 kHz use
    ``lag_beta_at(8000)`` so the smoothing width in Hz is the same.
    """

    frame_len: int = 256
    hop: int = 128
    lpc_order_wide: int = 16
    lpc_order_tel: int = 10
    preemph_alpha: float = 0.7
    noise_floor_alpha: float = 1.0001
    lag_beta: float = 2 * math.pi * 62.5 / 16000
    fft_size: int = 128
    pitch_min: int = 40
    pitch_max: int = 320
    whitening_order: int = 8
    antidoubling_threshold: float = 0.85

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.fft_size <= 0 or self.fft_size & (self.fft_size - 1):
            raise PreconditionError("fft_size must be a power of two")
        if self.frame_len < self.fft_size or self.frame_len % 2:
            raise PreconditionError("frame_len must be even and >= fft_size")
        if not 0 < self.hop <= self.frame_len:
            raise PreconditionError("hop must be in (0, frame_len]")
        if not 0 < self.preemph_alpha < 1:
            raise PreconditionError("preemph_alpha must be in (0, 1)")
        if not self.noise_floor_alpha > 1:
            raise PreconditionError("noise_floor_alpha must be > 1")
        if self.lag_beta < 0:
            raise PreconditionError("lag_beta must be >= 0")
        # pitch_max may exceed frame_len (320 > 256 by default); the search
        # reads its history from before the frame
        if not 0 < self.pitch_min < self.pitch_max < 2 * self.frame_len:
            raise PreconditionError("need 0 < pitch_min < pitch_max < 2 * frame_len")
        for name in ("lpc_order_wide", "lpc_order_tel", "whitening_order"):
            if not 0 <= getattr(self, name) < self.frame_len // 2:
                raise PreconditionError(f"{name} out of range")

    def lag_beta_at(self, sample_rate: int) -> float:
        return self.lag_beta * 16000 / sample_rate


@dataclass
class LpcModel:
    coefficients: np.ndarray
    error: float = 0.0
    reflection: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.coefficients)):
            raise PreconditionError("LPC coefficients must be finite")

    @property
    def order(self) -> int:
        return self.coefficients.size

    @property
    def polynomial(self) -> np.ndarray:
        """Taps of A(z): [1, -a_1, ..., -a_N]."""
        return np.concatenate([[1.0], -self.coefficients])

    @classmethod
    def zero(cls, order: int) -> LpcModel:
        return cls(np.zeros(order), 0.0, np.zeros(order))


def hanning_window(L: int) -> np.ndarray:
    """w(n) = 0.5 - 0.5 cos(2 pi n / (L-1)), n = 0..L-1."""
    if L < 2:
        raise PreconditionError("window length must be >= 2")
    n = np.arange(L)
    return 0.5 - 0.5 * np.cos(2 * np.pi * n / (L - 1))


def pre_emphasis(sig, alpha: float):
    """y(n) = x(n) - alpha x(n-1) with x(-1) = 0. Accepts arrays or SignalBuffers."""
    if isinstance(sig, SignalBuffer):
        return SignalBuffer(pre_emphasis(sig.samples, alpha), sig.sample_rate)
    x = np.asarray(sig, dtype=np.float64)
    y = x.copy()
    y[1:] -= alpha * x[:-1]
    return y


def de_emphasis(sig, alpha: float):
    """Inverse of :func:`pre_emphasis`: y(n) = x(n) + alpha y(n-1)."""
    if isinstance(sig, SignalBuffer):
        return SignalBuffer(de_emphasis(sig.samples, alpha), sig.sample_rate)
    x = np.asarray(sig, dtype=np.float64)
    return sps.lfilter([1.0], [1.0, -alpha], x)


def autocorrelation(frame, max_lag: int) -> np.ndarray:
    """Raw autocorrelation R(0..max_lag) of an (already windowed) frame."""
    x = np.asarray(frame, dtype=np.float64)
    if max_lag >= x.size:
        raise PreconditionError("max_lag must be smaller than the frame length")
    full = np.correlate(x, x, mode="full")
    return full[x.size - 1:x.size + max_lag].copy()


def noise_floor_snr_db(alpha: float) -> float:
    """SNR of the white-noise floor implied by scaling R(0) by alpha."""
    return 10.0 * math.log10(1.0 / (alpha - 1.0))


def condition(r, cfg: AnalysisConfig | None = None, *, noise_floor_alpha=None, lag_beta=None) -> np.ndarray:
    """Noise floor on R(0) and Gaussian lag window on R(m >= 1).

    Keyword overrides take precedence over ``cfg``.
    """
    cfg = cfg or AnalysisConfig()
    alpha = cfg.noise_floor_alpha if noise_floor_alpha is None else noise_floor_alpha
    beta = cfg.lag_beta if lag_beta is None else lag_beta
    r = np.array(r, dtype=np.float64)
    out = r.copy()
    out[0] = alpha * r[0] if r[0] > 0 else SILENT_FLOOR
    m = np.arange(1, r.size)
    out[1:] = r[1:] * np.exp(-(beta * m) ** 2)
    return out


def levinson_durbin(r, order: int) -> LpcModel:
    """Solve the order-N normal equations by the Levinson-Durbin recursion.

    Raises ``InstabilityError`` if a reflection coefficient reaches 1 in
    magnitude (the caller should keep its previous model).
    """
    r = np.asarray(r, dtype=np.float64)
    if r.size < order + 1:
        raise PreconditionError("need R(0..order)")
    if not r[0] > 0:
        raise PreconditionError("R(0) must be positive")
    a = np.zeros(order)
    k = np.zeros(order)
    err = r[0]
    for i in range(order):
        acc = r[i + 1] - np.dot(a[:i], r[i:0:-1])
        ki = acc / err
        if not abs(ki) < 1.0:
            raise InstabilityError(f"reflection coefficient {ki:.6g} at step {i + 1}")
        k[i] = ki
        if i:
            a[:i] = a[:i] - ki * a[i - 1::-1]
        a[i] = ki
        err *= 1.0 - ki * ki
    return LpcModel(a, float(err), k)


def lpc_from_frame(frame, order: int, cfg: AnalysisConfig | None = None, *, lag_beta=None) -> LpcModel:
    """Hanning window, autocorrelation, conditioning and Levinson solve."""
    x = np.asarray(frame, dtype=np.float64)
    r = autocorrelation(x * hanning_window(x.size), order)
    return levinson_durbin(condition(r, cfg, lag_beta=lag_beta), order)


class FrameAnalyzer:
    """Per-frame LPC with the fallback policy for unstable solves.

    Silent or unstable frames reuse the previous model; before any usable
    frame that is the zero model.
    """

    def __init__(self, order: int, cfg: AnalysisConfig | None = None, lag_beta=None):
        self.order = order
        self.cfg = cfg or AnalysisConfig()
        self.lag_beta = lag_beta
        self.previous = LpcModel.zero(order)
        self.fallbacks = 0

    def __call__(self, frame) -> LpcModel:
        if not np.any(np.asarray(frame)):
            return self.previous
        try:
            model = lpc_from_frame(frame, self.order, self.cfg, lag_beta=self.lag_beta)
        except InstabilityError:
            self.fallbacks += 1
            model = self.previous
        self.previous = model
        return model


def _check_state(state, order):
    if state is None:
        return np.zeros(order)
    state = np.asarray(state, dtype=np.float64).reshape(-1)
    if state.size != order:
        raise PreconditionError(f"filter state has {state.size} samples, model order is {order}")
    return state


def analysis_filter(x, lpc: LpcModel, state=None) -> tuple[np.ndarray, np.ndarray]:
    """r(n) = x(n) - sum a_i x(n-i).

    ``state`` holds the last ``order`` input samples (oldest first); the
    updated state is returned alongside the residual.
    """
    x = np.asarray(x, dtype=np.float64)
    n = lpc.order
    hist = _check_state(state, n)
    if n == 0:
        return x.copy(), hist
    ext = np.concatenate([hist, x])
    r = sps.lfilter(lpc.polynomial, [1.0], ext)[n:]
    return r, ext[-n:].copy()


def synthesis_filter(r, lpc: LpcModel, state=None) -> tuple[np.ndarray, np.ndarray]:
    """x(n) = sum a_i x(n-i) + r(n); ``state`` holds the last ``order`` outputs."""
    r = np.asarray(r, dtype=np.float64)
    n = lpc.order
    hist = _check_state(state, n)
    if n == 0:
        return r.copy(), hist
    zi = sps.lfiltic([1.0], lpc.polynomial, hist[::-1])
    y, _ = sps.lfilter([1.0], lpc.polynomial, r, zi=zi)
    if y.size and (not np.all(np.isfinite(y)) or np.max(np.abs(y)) > SYNTHESIS_LIMIT):
        raise InstabilityError("synthesis filter output exceeded 1e6")
    return y, np.concatenate([hist, y])[-n:].copy()
