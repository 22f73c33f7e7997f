"""High-band (3500-7000 Hz) reconstruction: excitation extension, envelope
prediction and smoothing, wideband envelope assembly, post-processing."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import InstabilityError, PreconditionError
from .filters import FirFilter, fir_filter, make_bandshape_filters
from .lpc import AnalysisConfig, LpcModel, analysis_filter, autocorrelation, condition, levinson_durbin
from .spectrum import HIGH_KEEP, HIGH_SLICE, WIDE_POINTS, CepstralVector, SpectralEnvelope, idct

log = logging.getLogger(__name__)

SEAM = (24, 28)          # grid points 3000..3375 Hz shared by both halves
DEFAULT_ATTENUATION_DB = 6.0
SMOOTHING_TAPS = (0.25, 0.5, 0.25)
DC_POLE = 0.995


@dataclass
class ExcitationFrame:
    samples: np.ndarray
    band_energy: float | None = None   # 0-3500 Hz energy of the source residual

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.samples)):
            raise PreconditionError("excitation samples must be finite")


def spectral_fold(r_tel) -> np.ndarray:
    """Zero insertion with gain 2: the 8 kHz spectrum is mirrored above 4 kHz."""
    r = np.asarray(r_tel, dtype=float)
    out = np.zeros(2 * r.size)
    out[0::2] = 2.0 * r
    return out


def band_energy(x, lowpass: FirFilter | None = None) -> float:
    """Energy of ``x`` after the 3500 Hz low-pass (delay compensated)."""
    lp = lowpass or make_bandshape_filters()["lowpass_3500"]
    y = fir_filter(np.asarray(x, dtype=float), lp, delay_compensate=True)
    return float(y @ y)


def whitening_lpc(y, order: int, cfg: AnalysisConfig | None = None) -> LpcModel:
    """Conditioned LPC of a Hann-windowed segment; zero model if silent."""
    cfg = cfg or AnalysisConfig()
    y = np.asarray(y, dtype=float)
    if y.size <= order or not np.any(y):
        return LpcModel.zero(order)
    r = autocorrelation(y * np.hanning(y.size), order)
    return levinson_durbin(condition(r, cfg), order)


def extend_excitation(frame, cfg: AnalysisConfig | None = None,
                      lowpass: FirFilter | None = None) -> ExcitationFrame:
    """Rectify, whiten and renormalize one excitation frame.

    ``frame`` is the 16 kHz residual, band-limited to 3500 Hz (an
    ExcitationFrame or an array).  The rectified signal has its mean removed
    (the DC line carries no excitation information), is whitened by an
    order-``whitening_order`` LPC fitted on itself, and is scaled so that its
    energy through the 3500 Hz low-pass matches the input's.
    """
    cfg = cfg or AnalysisConfig()
    r = frame.samples if isinstance(frame, ExcitationFrame) else np.asarray(frame, dtype=float)
    e_in = band_energy(r, lowpass)
    if not e_in > 0:
        return ExcitationFrame(np.zeros(r.size), 0.0)
    y = np.abs(r)
    y -= y.mean()
    try:
        a = whitening_lpc(y, cfg.whitening_order, cfg)
    except InstabilityError:
        a = LpcModel.zero(cfg.whitening_order)
    u, _ = analysis_filter(y, a)
    e_out = band_energy(u, lowpass)
    g = np.sqrt(e_in / e_out) if e_out > 0 else 0.0
    return ExcitationFrame(g * u, e_in)


def extend_excitation_stream(r, cfg: AnalysisConfig | None = None, window: int | None = None,
                             lowpass: FirFilter | None = None) -> np.ndarray:
    """Block-causal excitation extension over a whole residual signal.

    Block j (``hop`` samples) is whitened with an LPC fitted on the
    ``window`` rectified samples ending at the block's last sample, and its
    gain is measured on that same window, so no future samples are read.
    Gains are interpolated linearly across each block.  A one-pole DC blocker
    replaces the per-frame mean removal.
    """
    cfg = cfg or AnalysisConfig()
    window = window or cfg.frame_len
    hop = cfg.hop
    lp = lowpass or make_bandshape_filters()["lowpass_3500"]
    r = np.asarray(r, dtype=float)
    y = sps.lfilter([1.0, -1.0], [1.0, -DC_POLE], np.abs(r))
    u = np.zeros_like(y)
    out = np.zeros_like(y)
    taper = np.hanning(window)
    state = None
    prev_model = LpcModel.zero(cfg.whitening_order)
    prev_gain = 0.0
    for s in range(0, y.size, hop):
        e = min(s + hop, y.size)
        w0 = max(0, e - window)
        try:
            model = whitening_lpc(y[w0:e], cfg.whitening_order, cfg)
        except InstabilityError:
            model = prev_model
        u[s:e], state = analysis_filter(y[s:e], model, state)
        prev_model = model
        seg_taper = taper[window - (e - w0):]
        e_in = band_energy(r[w0:e] * seg_taper, lp)
        e_out = band_energy(u[w0:e] * seg_taper, lp)
        gain = np.sqrt(e_in / e_out) if e_out > 0 and e_in > 0 else 0.0
        ramp = (np.arange(1, e - s + 1)) / (e - s)
        out[s:e] = u[s:e] * (prev_gain + (gain - prev_gain) * ramp)
        prev_gain = gain
    return out


def predict_high_envelope(features, predictor) -> CepstralVector:
    """Masked inference of the 8 high-band DCT coefficients."""
    c = np.asarray(predictor.predict(features), dtype=float)
    if c.shape != (HIGH_KEEP,):
        raise PreconditionError(f"high-band predictor returned shape {c.shape}")
    return CepstralVector(c, "high")


def smooth_envelope_track(track) -> np.ndarray:
    """Centered [1/4, 1/2, 1/4] filter along time, boundary frames replicated."""
    t = np.asarray([getattr(c, "coefficients", c) for c in track], dtype=float)
    if t.ndim != 2 or t.shape[0] < 1:
        raise PreconditionError("need a (frames, coefficients) track with at least one frame")
    padded = np.vstack([t[:1], t, t[-1:]])
    a, b, c = SMOOTHING_TAPS
    return a * padded[:-2] + b * padded[1:-1] + c * padded[2:]


def assemble_wideband_envelope(tel_env: SpectralEnvelope, high_cep) -> SpectralEnvelope:
    """Telephone envelope up to 3375 Hz, predicted high segment from 3000 Hz.

    On the four shared points the two are cross-faded linearly (weights
    0.2, 0.4, 0.6, 0.8 for the high side).
    """
    tel = tel_env.log_power
    if tel.size < SEAM[1]:
        raise PreconditionError("telephone envelope too short")
    high = idct(high_cep, HIGH_SLICE.stop - HIGH_SLICE.start)
    out = np.empty(WIDE_POINTS)
    lo, hi = SEAM
    out[:lo] = tel[:lo]
    out[hi:] = high[hi - lo:]
    w = np.arange(1, hi - lo + 1) / (hi - lo + 1)
    out[lo:hi] = (1 - w) * tel[lo:hi] + w * high[:hi - lo]
    return SpectralEnvelope(out)


def postprocess_highband(x, attenuation_db: float = DEFAULT_ATTENUATION_DB, filters=None) -> np.ndarray:
    """High-pass at 3500 Hz, notch 3500-4500 Hz, then a fixed attenuation."""
    f = filters or make_bandshape_filters()
    y = fir_filter(np.asarray(x, dtype=float), f["highpass_3500"], delay_compensate=True)
    y = fir_filter(y, f["notch_3500_4500"], delay_compensate=True)
    return y * 10.0 ** (-attenuation_db / 20.0)
