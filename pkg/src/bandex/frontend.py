"""Per-frame analysis shared by extension, training and evaluation.

Geometry at 16 kHz: block j covers ``[j*hop, (j+1)*hop)`` and its analysis
frame ``[j*hop - (frame_len-hop)/2, ...)`` is centred on it, so a frame
reads ``(frame_len - hop) / 2`` samples past its block.  The telephone-band
analysis runs on the even samples of the pre-emphasized upsampled signal
(8 kHz, frames of ``frame_len/2``), which puts its envelope on the same
125 Hz grid and under the same pre-emphasis as the wideband one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .audio_io import SignalBuffer, downsample_2x, upsample_2x
from .features import N_FEATURES, extract_features
from .filters import FirFilter, amplitude_response, fir_filter, irs_filter, make_bandshape_filters
from .lowband import clip_omega, harmonic_ls_fit, normalize_amplitudes
from .lpc import AnalysisConfig, FrameAnalyzer, analysis_filter, pre_emphasis
from .pitch import pitch_search, refine_anti_doubling
from .spectrum import HIGH_KEEP, HIGH_SLICE, TEL_POINTS, WIDE_POINTS, dct, lpc_to_envelope, tel_cepstrum

SILENCE_GATE = 1e-4
LEVEL_BAND = slice(2, 28)     # 250..3375 Hz, used to align wideband and telephone levels
LOWPASS_GAIN_FLOOR = 0.1      # below this the fitted harmonic is left uncorrected


@dataclass
class FrameTrack:
    """Everything the synthesis and training stages need, one row per frame."""
    cfg: AnalysisConfig
    x16: np.ndarray              # upsampled (optionally IRS-inverted) telephone signal
    p16: np.ndarray              # its pre-emphasized version
    features: np.ndarray         # (n, 17)
    tel_env: np.ndarray          # (n, 32) natural-log power
    tel_lpc: list = field(default_factory=list)
    pitch: list = field(default_factory=list)
    exc_rms: np.ndarray = None   # RMS of the telephone LPC residual per frame
    frame_rms: np.ndarray = None  # RMS of the 16 kHz frame (silence gate)

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    @property
    def omega0(self) -> np.ndarray:
        return np.array([clip_omega(2 * math.pi / (p.fractional_period or p.period)) for p in self.pitch])

    def silent(self, gate: float = SILENCE_GATE) -> np.ndarray:
        return self.frame_rms < gate


def frame_offset(cfg: AnalysisConfig) -> int:
    return (cfg.frame_len - cfg.hop) // 2


def n_blocks(n_samples: int, cfg: AnalysisConfig) -> int:
    return -(-n_samples // cfg.hop)


def left_pad(cfg: AnalysisConfig) -> int:
    pad = cfg.pitch_max + frame_offset(cfg)
    return pad + pad % 2


def padded(x, cfg: AnalysisConfig) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.concatenate([np.zeros(left_pad(cfg)), x, np.zeros(cfg.frame_len + cfg.hop)])


def frame_slices(n_samples: int, cfg: AnalysisConfig):
    """Start indices of every frame in the padded signal."""
    base = left_pad(cfg) - frame_offset(cfg)
    return [base + j * cfg.hop for j in range(n_blocks(n_samples, cfg))]


def simulate_telephone(s16: np.ndarray, irs: FirFilter | None = None) -> np.ndarray:
    """Wideband 16 kHz speech -> 8 kHz telephone band (decimation, IRS send filter)."""
    x8 = downsample_2x(SignalBuffer(s16, 16000)).samples
    return fir_filter(x8, irs or irs_filter(), delay_compensate=True)


def prepare_input(x8, inverse_irs: FirFilter | None = None) -> np.ndarray:
    """Optional IRS inversion at 8 kHz, then 2x upsampling."""
    x8 = np.asarray(x8, dtype=float)
    if inverse_irs is not None and x8.size:
        x8 = fir_filter(x8, inverse_irs, delay_compensate=True)
    return upsample_2x(SignalBuffer(x8, 8000)).samples


def analyze(x16, cfg: AnalysisConfig | None = None) -> FrameTrack:
    """Telephone-band LPC, envelope, pitch and features for every frame."""
    cfg = cfg or AnalysisConfig()
    x16 = np.asarray(x16, dtype=float)
    p16 = pre_emphasis(x16, cfg.preemph_alpha)
    xp = padded(x16, cfg)
    pp = padded(p16, cfg)
    t8 = pp[0::2]
    half = cfg.frame_len // 2
    order = cfg.lpc_order_tel
    lpc8 = FrameAnalyzer(order, cfg, lag_beta=cfg.lag_beta_at(8000))
    starts = frame_slices(x16.size, cfg)
    n = len(starts)
    feats = np.zeros((n, N_FEATURES))
    envs = np.zeros((n, TEL_POINTS))
    exc = np.zeros(n)
    frms = np.zeros(n)
    models, pitches = [], []
    prev_c = prev_e = None
    for j, s in enumerate(starts):
        frame = xp[s:s + cfg.frame_len]
        frms[j] = math.sqrt(float(frame @ frame) / frame.size)
        s8 = s // 2
        tf = t8[s8:s8 + half]
        model = lpc8(tf)
        res, _ = analysis_filter(tf, model, t8[s8 - order:s8] if order else None)
        energy = float(res @ res) / res.size
        env = lpc_to_envelope(model, TEL_POINTS)
        c = tel_cepstrum(env)
        est = pitch_search(xp[s - cfg.pitch_max:s], frame, cfg.pitch_min, cfg.pitch_max)
        est = refine_anti_doubling(est, xp[s - cfg.pitch_max:s], frame, cfg.pitch_min, cfg.pitch_max,
                                   cfg.antidoubling_threshold)
        fv = extract_features(c, est, energy, prev_c, prev_e)
        feats[j] = fv.as_array()
        envs[j] = env.log_power
        exc[j] = math.sqrt(energy)
        models.append(model)
        pitches.append(est)
        prev_c, prev_e = c, energy
    return FrameTrack(cfg, x16, p16, feats, envs, models, pitches, exc, frms)


def wideband_envelopes(s16, cfg: AnalysisConfig | None = None) -> np.ndarray:
    """(n, 64) log-power envelopes of the pre-emphasized original wideband speech."""
    cfg = cfg or AnalysisConfig()
    p = padded(pre_emphasis(np.asarray(s16, dtype=float), cfg.preemph_alpha), cfg)
    an = FrameAnalyzer(cfg.lpc_order_wide, cfg)
    return np.array([lpc_to_envelope(an(p[s:s + cfg.frame_len]), WIDE_POINTS).log_power
                     for s in frame_slices(len(s16), cfg)]).reshape(-1, WIDE_POINTS)


def high_targets(wide_env: np.ndarray, tel_env: np.ndarray):
    """8 DCT coefficients of the 3000-7875 Hz segment, on the telephone level.

    The wideband and telephone envelopes differ by a per-frame level (the
    telephone channel's gain and the two LPC normalizations); the mean
    difference over 250-3375 Hz is removed so the predicted segment can be
    joined directly onto the telephone envelope.  Returns (targets, offsets).
    """
    offsets = np.mean(wide_env[:, LEVEL_BAND] - tel_env[:, LEVEL_BAND], axis=1)
    seg = wide_env[:, HIGH_SLICE] - offsets[:, None]
    return np.array([dct(row, HIGH_KEEP) for row in seg]).reshape(-1, HIGH_KEEP), offsets


def low_targets(s16, track: FrameTrack, lowpass: FirFilter | None = None):
    """Normalized log-amplitudes of the first two harmonics of the original.

    Harmonics are fitted on the 200 Hz low-passed original at the f0 found
    on the telephone signal, then divided by the low-pass gain at each
    harmonic: synthesis applies the same low-pass once more, so uncorrected
    targets would be attenuated twice near the cutoff.  Returns
    (targets (n, 2), amplitudes (n, 2)).
    """
    cfg = track.cfg
    lp = lowpass or make_bandshape_filters()["lowpass_200"]
    sp = padded(fir_filter(np.asarray(s16, dtype=float), lp, delay_compensate=True), cfg)
    omegas = track.omega0
    amps = np.zeros((track.n_frames, 2))
    for j, s in enumerate(frame_slices(len(s16), cfg)):
        amps[j] = harmonic_ls_fit(sp[s:s + cfg.frame_len], omegas[j]).amplitudes
    gain = np.abs(amplitude_response(lp, np.outer(omegas, [1.0, 2.0]).ravel())).reshape(-1, 2)
    amps = np.where(gain >= LOWPASS_GAIN_FLOOR, amps / np.maximum(gain, LOWPASS_GAIN_FLOOR), amps)
    tgt = np.array([normalize_amplitudes(a, rms=r) for a, r in zip(amps, track.exc_rms)]).reshape(-1, 2)
    return tgt, amps
