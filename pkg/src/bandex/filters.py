"""FIR filtering, the modified-IRS channel model and its least-squares inverse.

All frequency responses here are magnitudes sampled on a uniform grid over
[0, pi]; ``FrequencyResponse.frequencies(rate)`` maps the grid to Hz.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .audio_io import SignalBuffer
from .errors import ConfigurationError, NumericalError, PreconditionError

IRS_TABLE_NAME = "irs_modified_send.txt"
TELEPHONE_RATE = 8000
WIDEBAND_RATE = 16000

# band-shaping designs at 16 kHz: (taps, cutoff(s) in Hz, pass_zero)
HIGHPASS_3500 = (127, 3750.0, False)
NOTCH_3500_4500 = (127, (3290.0, 4710.0), True)
LOWPASS_200 = (511, 230.0, True)
LOWPASS_3500 = (127, 3500.0, True)


@dataclass(frozen=True)
class FirFilter:
    coefficients: np.ndarray
    linear_phase: bool = False

    def __post_init__(self):
        h = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        if h.size < 1:
            raise PreconditionError("a FIR filter needs at least one tap")
        if not np.all(np.isfinite(h)):
            raise PreconditionError("FIR taps must be finite")
        if self.linear_phase and not np.allclose(h, h[::-1], rtol=0.0, atol=1e-12):
            raise PreconditionError("linear-phase filter taps are not symmetric")
        object.__setattr__(self, "coefficients", h)

    @property
    def group_delay(self) -> int:
        return (self.coefficients.size - 1) // 2

    def __len__(self):
        return self.coefficients.size

    def magnitude(self, omegas) -> np.ndarray:
        """|H(e^{jw})| at the given normalized angular frequencies."""
        _, h = sps.freqz(self.coefficients, worN=np.asarray(omegas, dtype=float))
        return np.abs(h)


@dataclass(frozen=True)
class FrequencyResponse:
    magnitudes: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.magnitudes, dtype=np.float64).reshape(-1)
        if m.size < 2 or np.any(m < 0) or not np.all(np.isfinite(m)):
            raise PreconditionError("magnitudes must be finite, non-negative, at least 2 points")
        object.__setattr__(self, "magnitudes", m)

    @property
    def grid_size(self) -> int:
        return self.magnitudes.size

    @property
    def omegas(self) -> np.ndarray:
        return np.linspace(0.0, np.pi, self.grid_size)

    def frequencies(self, sample_rate: float) -> np.ndarray:
        return self.omegas * sample_rate / (2 * np.pi)


def fir_filter(x, fir: FirFilter, delay_compensate: bool = False) -> np.ndarray:
    """Convolve an array with *fir*; output has the input's length."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    y = sps.convolve(x, fir.coefficients, mode="full")
    start = fir.group_delay if delay_compensate else 0
    out = y[start:start + x.size]
    if out.size < x.size:
        out = np.concatenate([out, np.zeros(x.size - out.size)])
    return out


def apply_fir(sig: SignalBuffer, fir: FirFilter, delay_compensate: bool = False) -> SignalBuffer:
    """Direct-form convolution of a signal buffer.

    With ``delay_compensate`` the output is advanced by the group delay and
    zero-padded back to the input length.
    """
    return SignalBuffer(fir_filter(sig.samples, fir, delay_compensate), sig.sample_rate)


def load_irs_table(path=None) -> tuple[np.ndarray, np.ndarray]:
    """Parse a ``frequency_hz magnitude_linear`` table. ``#`` starts a comment."""
    try:
        if path is None:
            text = resources.files("bandex.data").joinpath(IRS_TABLE_NAME).read_text()
            origin = IRS_TABLE_NAME
        else:
            text = Path(path).read_text()
            origin = str(path)
    except (OSError, FileNotFoundError) as exc:
        raise ConfigurationError(f"cannot read IRS table {path}: {exc}") from exc
    freqs, mags = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigurationError(f"{origin}:{lineno}: expected 'frequency magnitude'")
        try:
            f, m = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ConfigurationError(f"{origin}:{lineno}: {exc}") from exc
        freqs.append(f)
        mags.append(m)
    freqs, mags = np.array(freqs), np.array(mags)
    if freqs.size < 2:
        raise ConfigurationError(f"{origin}: fewer than two table points")
    if np.any(np.diff(freqs) <= 0):
        raise ConfigurationError(f"{origin}: frequencies must be strictly ascending")
    if np.any(mags < 0) or not np.all(np.isfinite(mags)):
        raise ConfigurationError(f"{origin}: magnitudes must be finite and non-negative")
    return freqs, mags


@lru_cache(maxsize=8)
def _irs_table_cached(path):
    return load_irs_table(path)


def irs_modified_response(grid_size: int, table_path=None) -> FrequencyResponse:
    """|G(w)| of the modified-IRS send filter on ``grid_size`` points over [0, pi] at 8 kHz."""
    if grid_size < 64:
        raise PreconditionError("grid_size must be >= 64")
    freqs, mags = _irs_table_cached(None if table_path is None else str(table_path))
    f = np.linspace(0.0, TELEPHONE_RATE / 2, grid_size)
    return FrequencyResponse(np.interp(f, freqs, mags))


def irs_filter(numtaps: int = 151, table_path=None) -> FirFilter:
    """Linear-phase FIR realizing the IRS table at 8 kHz (used to simulate the channel)."""
    freqs, mags = _irs_table_cached(None if table_path is None else str(table_path))
    f = np.concatenate([[0.0], freqs[(freqs > 0) & (freqs < 4000)], [4000.0]])
    g = np.interp(f, freqs, mags)
    h = sps.firwin2(numtaps, f, g, fs=TELEPHONE_RATE)
    return FirFilter(0.5 * (h + h[::-1]), linear_phase=True)


DEFAULT_BAND = (2 * np.pi * 200 / TELEPHONE_RATE, 2 * np.pi * 3500 / TELEPHONE_RATE)


def design_inverse_irs(g: FrequencyResponse, half_order: int = 30, band=DEFAULT_BAND) -> FirFilter:
    """Least-squares linear-phase inverse of a magnitude response.

    Fits ``a0 + 2 sum_k a_k cos(k w)`` to ``1/|G(w)|`` over the grid points
    inside ``band`` (inclusive) and returns the symmetric
    ``2*half_order + 1`` tap filter.
    """
    if half_order < 0:
        raise PreconditionError("half_order must be >= 0")
    w1, w2 = band
    w = g.omegas
    inside = (w >= w1) & (w <= w2)
    if not np.any(inside):
        raise PreconditionError("no grid point inside the fitting band")
    gm = g.magnitudes[inside]
    if np.any(gm <= 0):
        raise PreconditionError("|G| must be strictly positive inside the band")
    k = np.arange(half_order + 1)
    basis = np.cos(np.outer(w[inside], k))
    basis[:, 1:] *= 2.0
    normal = basis.T @ basis
    cond = np.linalg.cond(normal)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError(f"inverse-IRS normal equations are singular (cond ~ {cond:.3g})")
    a = np.linalg.solve(normal, basis.T @ (1.0 / gm))
    taps = np.concatenate([a[:0:-1], a])
    return FirFilter(taps, linear_phase=True)


def amplitude_response(fir: FirFilter, omegas) -> np.ndarray:
    """Real amplitude a0 + 2 sum a_k cos(k w) of a symmetric odd-length filter."""
    h = fir.coefficients
    n = fir.group_delay
    a = h[n:]
    k = np.arange(a.size)
    basis = np.cos(np.outer(np.asarray(omegas, dtype=float), k))
    basis[:, 1:] *= 2.0
    return basis @ a


def _design(spec) -> FirFilter:
    taps, cutoff, pass_zero = spec
    h = sps.firwin(taps, cutoff, window="hamming", pass_zero=pass_zero, fs=WIDEBAND_RATE)
    return FirFilter(0.5 * (h + h[::-1]), linear_phase=True)


@lru_cache(maxsize=1)
def _bandshape():
    return {
        "highpass_3500": _design(HIGHPASS_3500),
        "notch_3500_4500": _design(NOTCH_3500_4500),
        "lowpass_200": _design(LOWPASS_200),
        "lowpass_3500": _design(LOWPASS_3500),
    }


def make_bandshape_filters(config=None) -> dict[str, FirFilter]:
    """Fixed linear-phase band-shaping filters at 16 kHz.

    ``config`` is accepted for interface symmetry; the designs do not
    depend on it.
    """
    return dict(_bandshape())
