"""The 17-dimensional per-frame voice-parameter vector and its masks.

Layout (fixed order)::

    0..9   telephone-band cepstrum c0..c9
    10     pitch gain
    11     pitch period (samples at 16 kHz)
    12     first difference of log excitation energy
    13..16 first difference of c0..c3
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, PreconditionError

N_FEATURES = 17
N_HIGH_TARGETS = 8
N_LOW_TARGETS = 2
ENERGY_EPS = 1e-10
GAIN_RANGE = (0.0, 1.2)

CEPSTRUM = slice(0, 10)
PITCH_GAIN = 10
PITCH_PERIOD = 11
D_LOG_ENERGY = 12
D_CEPSTRUM = slice(13, 17)

MASKS = ("regression", "mlp", "codebook")
CODEBOOK_GAIN_SCALE = 4.0


@dataclass(frozen=True)
class FeatureVector:
    cepstrum_tel: np.ndarray
    pitch_gain: float
    pitch_period: float
    d_log_energy: float
    d_cepstrum: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([
            np.asarray(self.cepstrum_tel, dtype=float),
            [self.pitch_gain, self.pitch_period, self.d_log_energy],
            np.asarray(self.d_cepstrum, dtype=float),
        ])

    @classmethod
    def from_array(cls, v) -> FeatureVector:
        v = np.asarray(v, dtype=float)
        if v.shape != (N_FEATURES,):
            raise PreconditionError(f"expected {N_FEATURES} features, got shape {v.shape}")
        return cls(v[CEPSTRUM].copy(), float(v[PITCH_GAIN]), float(v[PITCH_PERIOD]),
                   float(v[D_LOG_ENERGY]), v[D_CEPSTRUM].copy())


def extract_features(cepstrum_tel, pitch, excitation_energy: float,
                     prev_cepstrum=None, prev_energy: float | None = None) -> FeatureVector:
    """Build one frame's feature vector.

    ``pitch`` is a PitchEstimate; its gain is clamped to [0, 1.2].  Without
    a previous frame the differential features are 0.
    """
    c = np.asarray(cepstrum_tel, dtype=float)
    if c.size != 10:
        raise PreconditionError("telephone cepstrum must have 10 coefficients")
    if prev_cepstrum is None or prev_energy is None:
        d_e = 0.0
        d_c = np.zeros(4)
    else:
        d_e = math.log(excitation_energy + ENERGY_EPS) - math.log(prev_energy + ENERGY_EPS)
        d_c = c[:4] - np.asarray(prev_cepstrum, dtype=float)[:4]
    gain = float(np.clip(pitch.gain, *GAIN_RANGE))
    return FeatureVector(c.copy(), gain, float(pitch.period), d_e, d_c)


def mask_dimension(mask: str) -> int:
    return {"regression": 18, "mlp": 16, "codebook": 12}[_check_mask(mask)]


def _check_mask(mask):
    if mask not in MASKS:
        raise PreconditionError(f"unknown feature mask {mask!r}")
    return mask


def apply_mask(v, mask: str) -> np.ndarray:
    """Project features (a FeatureVector, a 17-vector or an (n, 17) array).

    regression: all 17 plus a trailing constant 1; mlp: drops the pitch
    period; codebook: drops period and cepstral differences, gain times 4.
    """
    _check_mask(mask)
    x = v.as_array() if isinstance(v, FeatureVector) else np.asarray(v, dtype=float)
    if x.shape[-1] != N_FEATURES:
        raise PreconditionError(f"expected {N_FEATURES} features, got {x.shape[-1]}")
    if mask == "regression":
        return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)
    if mask == "mlp":
        keep = [i for i in range(N_FEATURES) if i != PITCH_PERIOD]
        return x[..., keep]
    out = x[..., list(range(10)) + [PITCH_GAIN, D_LOG_ENERGY]].copy()
    out[..., 10] *= CODEBOOK_GAIN_SCALE
    return out


@dataclass
class Standardizer:
    """Per-dimension centering and scaling (``center_only`` keeps unit scale)."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x, center_only: bool = False, floor: float = 1e-8) -> Standardizer:
        x = np.asarray(x, dtype=float)
        mean = x.mean(axis=0)
        std = np.ones(x.shape[1]) if center_only else np.maximum(x.std(axis=0), floor)
        return cls(mean, std)

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def inverse(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d) -> Standardizer:
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


def write_feature_dump(path, features, high_targets, low_targets) -> None:
    """One frame per line: 17 features, 8 high-band targets, 2 low-band targets."""
    f = np.asarray(features, dtype=float).reshape(-1, N_FEATURES)
    h = np.asarray(high_targets, dtype=float).reshape(-1, N_HIGH_TARGETS)
    lo = np.asarray(low_targets, dtype=float).reshape(-1, N_LOW_TARGETS)
    if not f.shape[0] == h.shape[0] == lo.shape[0]:
        raise PreconditionError("feature and target row counts differ")
    np.savetxt(path, np.hstack([f, h, lo]), fmt="%.17g")


def read_feature_dump(path):
    """Inverse of :func:`write_feature_dump`; returns (features, high, low)."""
    try:
        data = np.loadtxt(Path(path), ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    width = N_FEATURES + N_HIGH_TARGETS + N_LOW_TARGETS
    if data.size == 0:
        data = data.reshape(0, width)
    if data.shape[1] != width:
        raise FormatError(f"{path}: expected {width} columns, got {data.shape[1]}")
    return data[:, :N_FEATURES], data[:, N_FEATURES:N_FEATURES + N_HIGH_TARGETS], data[:, -N_LOW_TARGETS:]
