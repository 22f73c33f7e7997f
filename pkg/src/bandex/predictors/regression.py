"""Linear regression y = W x by regularized normal equations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError, PreconditionError

RIDGE = 1e-8


@dataclass
class RegressionModel:
    W: np.ndarray          # (out_dim, in_dim), in_dim includes the constant term
    residual: float = 0.0  # RMS training residual per output element

    def __post_init__(self):
        self.W = np.ascontiguousarray(np.atleast_2d(np.asarray(self.W, dtype=float)))
        if not np.all(np.isfinite(self.W)):
            raise PreconditionError("regression weights must be finite")

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]


def regression_fit(X, Y, ridge: float = RIDGE) -> RegressionModel:
    """Least-squares W minimizing ||Y - X W^T||^2.

    A ridge of ``ridge * trace(X^T X) / in_dim`` keeps the normal equations
    solvable when columns are nearly collinear.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    m, d = X.shape
    if Y.shape[0] != m:
        raise PreconditionError("X and Y row counts differ")
    if m <= d:
        raise PreconditionError(f"need more rows ({m}) than columns ({d})")
    gram = X.T @ X
    scale = np.trace(gram) / d
    gram[np.diag_indices(d)] += ridge * (scale if scale > 0 else 1.0)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e15:
        raise NumericalError(f"regression normal equations are singular (cond ~ {cond:.3g})")
    W = np.linalg.solve(gram, X.T @ Y).T
    resid = Y - X @ W.T
    return RegressionModel(W, float(np.sqrt(np.mean(resid ** 2))))


def regression_predict(model: RegressionModel, x) -> np.ndarray:
    """W x for one masked vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    return x @ model.W.T
