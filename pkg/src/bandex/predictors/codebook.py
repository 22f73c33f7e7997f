"""LBG vector quantization, associative codebooks and residual VQ."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import PreconditionError, TrainingError

log = logging.getLogger(__name__)

SPLIT_EPS = 1e-3
LLOYD_TOL = 1e-5
LLOYD_MAX_ITER = 50
_CHUNK = 512


def squared_distances(X, C) -> np.ndarray:
    """(n, M) matrix of squared Euclidean distances, by explicit differences."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    out = np.empty((X.shape[0], C.shape[0]))
    step = max(1, _CHUNK * 64 // max(1, C.shape[0]))
    for s in range(0, X.shape[0], step):
        diff = X[s:s + step, None, :] - C[None, :, :]
        out[s:s + step] = np.einsum("nmd,nmd->nm", diff, diff)
    return out


def nearest(X, C) -> np.ndarray:
    """Index of the nearest centroid for each row (lowest index on ties)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    idx = np.empty(X.shape[0], dtype=np.int64)
    step = max(1, _CHUNK * 64 // max(1, C.shape[0]))
    for s in range(0, X.shape[0], step):
        idx[s:s + step] = np.argmin(squared_distances(X[s:s + step], C), axis=1)
    return idx


@dataclass
class LbgResult:
    centroids: np.ndarray
    distortion_history: list = field(default_factory=list)


def _lloyd(X, C, history):
    """Lloyd iterations; ``history`` holds the distortion before the first pass."""
    for _ in range(LLOYD_MAX_ITER):
        before = history[-1]
        idx = nearest(X, C)
        counts = np.bincount(idx, minlength=C.shape[0])
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            d = np.sum((X - C[idx]) ** 2, axis=1)
            for e in empty:
                # farthest member of the currently most populous cell
                big = int(np.argmax(counts))
                members = np.flatnonzero(idx == big)
                far = members[np.argmax(d[members])]
                C[e] = X[far]
                idx[far] = e
                d[far] = 0.0
                counts[big] -= 1
                counts[e] += 1
        sums = np.zeros_like(C)
        np.add.at(sums, idx, X)
        C = sums / counts[:, None]
        after = float(np.mean(np.sum((X - C[idx]) ** 2, axis=1)))
        if after > before * (1 + 1e-9) + 1e-300:
            raise TrainingError(f"LBG distortion increased: {before} -> {after}")
        history.append(after)
        if before - after <= LLOYD_TOL * before:
            break
    return C


def lbg_train(X, target_size: int, seed: int = 0, return_history: bool = False):
    """Binary-splitting LBG.

    Starting from the global mean, each round splits centroids by
    +-0.001 x per-dimension std and runs Lloyd iterations until the relative
    distortion change drops below 1e-5 (at most 50 iterations).  Empty cells
    are re-seeded with the farthest point of the most populous cell.  When
    ``target_size`` is not a power of two the last round splits only the
    highest-distortion cells.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if target_size < 1:
        raise PreconditionError("target_size must be >= 1")
    if n < target_size:
        raise TrainingError(f"{n} training vectors cannot support {target_size} centroids")
    if n < 10 * target_size:
        log.info("LBG: only %d vectors for %d centroids", n, target_size)
    rng = np.random.default_rng(seed)
    perturb = SPLIT_EPS * X.std(axis=0)
    C = X.mean(axis=0, keepdims=True)
    history = [float(np.mean(np.sum((X - C) ** 2, axis=1)))]
    while C.shape[0] < target_size:
        n_split = min(C.shape[0], target_size - C.shape[0])
        if n_split < C.shape[0]:
            idx = nearest(X, C)
            cell_d = np.bincount(idx, weights=np.sum((X - C[idx]) ** 2, axis=1), minlength=C.shape[0])
            chosen = np.argsort(-cell_d, kind="stable")[:n_split]
        else:
            chosen = np.arange(C.shape[0])
        # tiny random sign flips break symmetry for duplicated data
        signs = np.where(rng.random(perturb.shape) < 0.5, -1.0, 1.0)
        new = C[chosen] + perturb * signs
        C = C.copy()
        C[chosen] = C[chosen] - perturb * signs
        C = np.vstack([C, new])
        history.append(float(np.mean(np.min(squared_distances(X, C), axis=1))))
        C = _lloyd(X, C, history)
    result = LbgResult(C, history)
    return result if return_history else result.centroids


@dataclass
class AssociativeCodebook:
    input_centroids: np.ndarray
    output_codewords: np.ndarray

    def __post_init__(self):
        self.input_centroids = np.atleast_2d(np.asarray(self.input_centroids, dtype=float))
        self.output_codewords = np.atleast_2d(np.asarray(self.output_codewords, dtype=float))
        if self.input_centroids.shape[0] != self.output_codewords.shape[0]:
            raise PreconditionError("centroid and codeword counts differ")

    @property
    def size(self) -> int:
        return self.input_centroids.shape[0]


def codebook_associate(centroids, X, Y) -> AssociativeCodebook:
    """Attach to each Voronoi cell the mean target of its training members.

    Empty cells get the global target mean.
    """
    C = np.atleast_2d(np.asarray(centroids, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0] or X.shape[1] != C.shape[1]:
        raise PreconditionError("inconsistent codebook training dimensions")
    idx = nearest(X, C)
    counts = np.bincount(idx, minlength=C.shape[0])
    sums = np.zeros((C.shape[0], Y.shape[1]))
    np.add.at(sums, idx, Y)
    out = np.tile(Y.mean(axis=0), (C.shape[0], 1))
    filled = counts > 0
    out[filled] = sums[filled] / counts[filled, None]
    return AssociativeCodebook(C, out)


def codebook_predict(cb: AssociativeCodebook, x) -> np.ndarray:
    """Codeword of the nearest input centroid; accepts a vector or a batch."""
    x = np.asarray(x, dtype=float)
    idx = nearest(x, cb.input_centroids)
    y = cb.output_codewords[idx]
    return y[0] if x.ndim == 1 else y


def residual_vq_train(residuals, bits: int, seed: int = 0) -> np.ndarray:
    """LBG codebook of 2**bits codewords on envelope prediction residuals."""
    if not 4 <= bits <= 12:
        raise PreconditionError("residual VQ bits must be in [4, 12]")
    return lbg_train(residuals, 2 ** bits, seed=seed)


def residual_vq_encode(codebook, residual) -> np.ndarray | int:
    idx = nearest(residual, codebook)
    return int(idx[0]) if np.asarray(residual).ndim == 1 else idx


def residual_vq_decode(codebook, index) -> np.ndarray:
    return np.asarray(codebook)[index]
