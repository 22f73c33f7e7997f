"""Open-loop long-term (pitch) prediction.

For a lag T the predictor gain is ``beta = sum x(i)x(i-T) / sum x(i-T)^2``
and the error reduction is ``(sum x(i)x(i-T))^2 / sum x(i-T)^2``.  We report
that reduction divided by the frame energy (``normalized_score``, in
[0, 1]) so thresholds do not depend on signal level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import PreconditionError

TIE_TOLERANCE = 1e-12
DIVISORS = (2, 3)


@dataclass(frozen=True)
class PitchEstimate:
    period: int
    gain: float
    normalized_score: float
    fractional_period: float | None = None

    @property
    def omega(self) -> float:
        """Fundamental in rad/sample."""
        return 2 * math.pi / self.period


def _lag_statistics(history, frame, t_min: int, t_max: int):
    history = np.asarray(history, dtype=np.float64)
    frame = np.asarray(frame, dtype=np.float64)
    if t_min < 1 or t_max < t_min:
        raise PreconditionError("need 1 <= t_min <= t_max")
    if history.size < t_max:
        raise PreconditionError(f"history has {history.size} samples, need {t_max}")
    buf = np.concatenate([history[history.size - t_max:], frame])
    lags = np.arange(t_min, t_max + 1)
    windows = sliding_window_view(buf, frame.size)[t_max - lags]
    num = windows @ frame
    den = np.einsum("ij,ij->i", windows, windows)
    energy = float(frame @ frame)
    return lags, num, den, energy


def _normalized(num, den, energy):
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(den > 0, num * num / den, 0.0)
    return s / energy if energy > 0 else np.zeros_like(s)


def lag_scores(history, frame, t_min: int, t_max: int):
    """Normalized score for every integer lag in [t_min, t_max]."""
    lags, num, den, energy = _lag_statistics(history, frame, t_min, t_max)
    return lags, _normalized(num, den, energy)


def _estimate_at(i, lags, num, den, scores) -> PitchEstimate:
    gain = float(num[i] / den[i]) if den[i] > 0 else 0.0
    frac = float(lags[i])
    if 0 < i < lags.size - 1:
        s_m, s_0, s_p = scores[i - 1], scores[i], scores[i + 1]
        curv = s_m - 2 * s_0 + s_p
        if curv < 0:
            frac += float(np.clip(0.5 * (s_m - s_p) / curv, -0.5, 0.5))
    return PitchEstimate(int(lags[i]), gain, float(scores[i]), frac)


def pitch_search(history, frame, t_min: int = 40, t_max: int = 320) -> PitchEstimate:
    """Exhaustive integer-lag search maximizing the normalized score.

    Near-ties (within a relative 1e-12) go to the shortest lag.  A silent
    frame yields ``T = t_min`` and ``beta = 0``.
    """
    lags, num, den, energy = _lag_statistics(history, frame, t_min, t_max)
    scores = _normalized(num, den, energy)
    best = scores.max()
    if not best > 0:
        return PitchEstimate(t_min, 0.0, 0.0, float(t_min))
    i = int(np.flatnonzero(scores >= best * (1 - TIE_TOLERANCE))[0])
    return _estimate_at(i, lags, num, den, scores)


def refine_anti_doubling(est: PitchEstimate, history, frame, t_min: int = 40, t_max: int = 320,
                         threshold: float = 0.85) -> PitchEstimate:
    """Move to a sub-multiple lag when it scores nearly as well.

    For d in (2, 3), lags within +-2 of T/d qualify if their score reaches
    ``threshold * score(T)``; the best qualifying lag (shortest on ties)
    replaces T, and the check repeats from there.
    """
    lags, num, den, energy = _lag_statistics(history, frame, t_min, t_max)
    scores = _normalized(num, den, energy)
    period = est.period
    if not t_min <= period <= t_max:
        raise PreconditionError("estimate outside the search range")
    for _ in range(8):
        s_t = scores[period - t_min]
        if not s_t > 0:
            break
        candidates = set()
        for d in DIVISORS:
            lo = max(t_min, math.ceil(period / d - 2))
            hi = min(t_max, math.floor(period / d + 2))
            candidates.update(t for t in range(lo, hi + 1) if scores[t - t_min] >= threshold * s_t)
        if not candidates:
            break
        period = max(sorted(candidates), key=lambda t: scores[t - t_min])
    if period == est.period:
        return est
    return _estimate_at(period - t_min, lags, num, den, scores)
