"""Log-power envelopes on the 125 Hz grid, their DCT (cepstral) form, and
spectral distortion.

Envelopes store the natural log of the synthesis-filter power spectrum
``S_s(k) = 1 / |A(e^{j pi k / n})|^2``.  Distortion is reported in dB of
magnitude, i.e. ``20 log10 |A / A~|``, which for natural-log power is
``(10 / ln 10) * (a_k - b_k)`` per grid point.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import InstabilityError, PreconditionError
from .lpc import LpcModel, levinson_durbin

log = logging.getLogger(__name__)

GRID_SPACING_HZ = 125.0
WIDE_POINTS = 64
TEL_POINTS = 32
# sub-grids used for features / targets
TEL_SLICE = slice(2, 29)     # 250..3500 Hz of the 32-point grid
HIGH_SLICE = slice(24, 64)   # 3000..7875 Hz of the 64-point grid
TEL_KEEP = 10
HIGH_KEEP = 8
HIGH_BAND_HZ = (3500.0, 8000.0)
TEL_BAND_HZ = (250.0, 3500.0)

DB_PER_LOG_POWER = 10.0 / math.log(10.0)
POWER_FLOOR = 1e-30
REFINE_PASSES = 4


class _Counter:
    clamps = 0


clamp_counter = _Counter()


@dataclass
class SpectralEnvelope:
    log_power: np.ndarray

    def __post_init__(self):
        lp = np.asarray(self.log_power, dtype=np.float64).reshape(-1)
        if lp.size not in (TEL_POINTS, WIDE_POINTS):
            raise PreconditionError(f"envelope must have 32 or 64 points, got {lp.size}")
        if not np.all(np.isfinite(lp)):
            raise PreconditionError("envelope values must be finite")
        self.log_power = lp

    @property
    def n_points(self) -> int:
        return self.log_power.size

    @property
    def frequencies(self) -> np.ndarray:
        return GRID_SPACING_HZ * np.arange(self.n_points)


@dataclass
class CepstralVector:
    coefficients: np.ndarray
    band: str = "high"

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)


def lpc_to_envelope(lpc: LpcModel, n_points: int = WIDE_POINTS) -> SpectralEnvelope:
    """log(1 / |A|^2) on k = 0..n_points-1 of a 2*n_points DFT."""
    if lpc.order >= 2 * n_points:
        raise PreconditionError("LPC order too high for the DFT size")
    spec = np.fft.rfft(lpc.polynomial, 2 * n_points)[:n_points]
    sa = spec.real ** 2 + spec.imag ** 2
    low = sa < POWER_FLOOR
    if np.any(low):
        clamp_counter.clamps += int(low.sum())
        log.warning("clamped %d zero analysis-spectrum points", int(low.sum()))
        sa = np.maximum(sa, POWER_FLOOR)
    return SpectralEnvelope(-np.log(sa))


def _autocorrelation_model(log_power: np.ndarray, order: int) -> LpcModel:
    # the Nyquist bin is absent from the grid; extrapolate it assuming an
    # even (zero-slope) log spectrum at Nyquist
    nyquist = (4.0 * log_power[-1] - log_power[-2]) / 3.0
    full = np.exp(np.concatenate([log_power, [nyquist], log_power[:0:-1]]))
    return levinson_durbin(np.fft.ifft(full).real[:order + 1], order)


def envelope_to_lpc(env: SpectralEnvelope, order: int, refine: int = REFINE_PASSES) -> LpcModel:
    """Autocorrelation by inverse DFT of the even power spectrum, then Levinson.

    Sampling the power spectrum on only ``2 * n_points`` bins time-aliases the
    autocorrelation, which blurs sharp resonances.  Each refinement pass adds
    the remaining log-domain mismatch (target minus the model's envelope) to
    the spectrum being inverted and solves again; the model with the smallest
    mismatch is returned.  On envelopes that come from an all-pole model of
    the same order this converges to that model.
    """
    target = env.log_power
    work = target.copy()
    best = _autocorrelation_model(work, order)
    miss = target - lpc_to_envelope(best, target.size).log_power
    best_err = float(miss @ miss)
    for _ in range(refine):
        work = work + miss
        try:
            model = _autocorrelation_model(work, order)
        except InstabilityError:
            break
        miss = target - lpc_to_envelope(model, target.size).log_power
        err = float(miss @ miss)
        if err < best_err:
            best, best_err = model, err
    return best


def dct(x, keep: int | None = None) -> np.ndarray:
    """Orthonormal DCT-II truncated to the first ``keep`` coefficients."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    keep = n if keep is None else keep
    if not 0 < keep <= n:
        raise PreconditionError("keep must be in 1..len(x)")
    return _dct_matrix(n)[:keep] @ x


def idct(c, n_points: int) -> np.ndarray:
    """Zero-pad ``c`` to ``n_points`` and apply the orthonormal inverse."""
    c = np.asarray(getattr(c, "coefficients", c), dtype=np.float64)
    if c.size > n_points:
        raise PreconditionError("more coefficients than output points")
    return _dct_matrix(n_points)[:c.size].T @ c


_DCT_CACHE: dict[int, np.ndarray] = {}


def _dct_matrix(n: int) -> np.ndarray:
    m = _DCT_CACHE.get(n)
    if m is None:
        i = np.arange(n)
        k = np.arange(n)[:, None]
        m = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
        m[0] = np.sqrt(1.0 / n)
        m.setflags(write=False)
        _DCT_CACHE[n] = m
    return m


def band_points(n_points: int, band) -> np.ndarray:
    """Indices of grid points whose frequency lies in [f1, f2]."""
    f1, f2 = band
    f = GRID_SPACING_HZ * np.arange(n_points)
    return np.flatnonzero((f >= f1) & (f <= f2))


def spectral_distortion(a, b, band) -> float:
    """RMS over in-band grid points of the dB log-ratio between two envelopes."""
    a = np.asarray(getattr(a, "log_power", a), dtype=np.float64)
    b = np.asarray(getattr(b, "log_power", b), dtype=np.float64)
    if a.shape != b.shape:
        raise PreconditionError("envelopes are on different grids")
    idx = band_points(a.size, band)
    if idx.size == 0:
        raise PreconditionError(f"no grid point inside band {band}")
    d = DB_PER_LOG_POWER * (a[idx] - b[idx])
    return float(np.sqrt(np.mean(d * d)))


def aggregate_distortion(per_frame) -> float:
    """Quadrature mean sqrt(mean(D_k^2))."""
    d = np.asarray(per_frame, dtype=np.float64)
    if d.size == 0:
        raise PreconditionError("no frames to aggregate")
    return float(np.sqrt(np.mean(d * d)))


def tel_cepstrum(env: SpectralEnvelope, keep: int = TEL_KEEP) -> np.ndarray:
    """DCT of the 250-3500 Hz part of a 32-point telephone envelope."""
    return dct(env.log_power[TEL_SLICE], keep)


def high_cepstrum(env: SpectralEnvelope, keep: int = HIGH_KEEP, offset: float = 0.0) -> np.ndarray:
    """DCT of the 3000-7875 Hz part of a 64-point envelope, shifted by ``-offset``."""
    return dct(env.log_power[HIGH_SLICE] - offset, keep)


def high_segment_distortion(true_segment, predicted_cepstrum) -> float:
    """SD over 3500-8000 Hz between a 40-point high segment and a predicted cepstrum."""
    full_true = np.zeros(WIDE_POINTS)
    full_pred = np.zeros(WIDE_POINTS)
    full_true[HIGH_SLICE] = true_segment
    full_pred[HIGH_SLICE] = idct(predicted_cepstrum, HIGH_SLICE.stop - HIGH_SLICE.start)
    return spectral_distortion(full_true, full_pred, HIGH_BAND_HZ)
