"""A trained mapping from 17 raw features to a target vector.

Wraps one engine together with its feature mask and the input/target
scaling learned at training time, so inference needs nothing else.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import PreconditionError, TrainingError
from ..features import FeatureVector, Standardizer, apply_mask
from .codebook import AssociativeCodebook, codebook_associate, codebook_predict, lbg_train
from .mlp import MlpModel, TrainSchedule, mlp_forward, mlp_train
from .regression import RegressionModel, regression_fit, regression_predict

log = logging.getLogger(__name__)

KINDS = ("regression", "codebook", "mlp", "zero")
DEFAULT_MASK = {"regression": "regression", "codebook": "codebook", "mlp": "mlp", "zero": "regression"}


@dataclass
class Predictor:
    kind: str
    model: object
    out_dim: int
    mask: str = ""
    input_scaler: Standardizer | None = None
    target_mean: np.ndarray | None = None
    target_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PreconditionError(f"unknown predictor kind {self.kind!r}")
        self.mask = self.mask or DEFAULT_MASK[self.kind]

    def predict(self, features) -> np.ndarray:
        """Targets for a FeatureVector, a 17-vector or an (n, 17) array."""
        f = features.as_array() if isinstance(features, FeatureVector) else np.asarray(features, dtype=float)
        single = f.ndim == 1
        f = np.atleast_2d(f)
        if self.kind == "zero":
            y = np.zeros((f.shape[0], self.out_dim))
        else:
            x = apply_mask(f, self.mask)
            if self.input_scaler is not None:
                x = self.input_scaler.transform(x)
            if self.kind == "regression":
                y = regression_predict(self.model, x)
            elif self.kind == "codebook":
                y = codebook_predict(self.model, x)
            else:
                y = mlp_forward(self.model, x)
            y = y * self.target_scale
            if self.target_mean is not None:
                y = y + self.target_mean
        return y[0] if single else y

    def to_dict(self) -> dict:
        if self.kind == "regression":
            m = {"W": self.model.W.tolist(), "residual": self.model.residual}
        elif self.kind == "codebook":
            m = {"input_centroids": self.model.input_centroids.tolist(),
                 "output_codewords": self.model.output_codewords.tolist()}
        elif self.kind == "mlp":
            m = self.model.to_dict()
        else:
            m = {}
        return {
            "kind": self.kind, "mask": self.mask, "out_dim": self.out_dim,
            "input_scaler": None if self.input_scaler is None else self.input_scaler.to_dict(),
            "target_mean": None if self.target_mean is None else np.asarray(self.target_mean).tolist(),
            "target_scale": self.target_scale,
            "model": m,
        }

    @classmethod
    def from_dict(cls, d) -> Predictor:
        kind = d["kind"]
        m = d["model"]
        if kind == "regression":
            model = RegressionModel(np.asarray(m["W"], dtype=float), float(m["residual"]))
        elif kind == "codebook":
            model = AssociativeCodebook(m["input_centroids"], m["output_codewords"])
        elif kind == "mlp":
            model = MlpModel.from_dict(m)
        elif kind == "zero":
            model = None
        else:
            raise PreconditionError(f"unknown predictor kind {kind!r}")
        scaler = d.get("input_scaler")
        tm = d.get("target_mean")
        return cls(kind, model, int(d["out_dim"]), d["mask"],
                   None if scaler is None else Standardizer.from_dict(scaler),
                   None if tm is None else np.asarray(tm, dtype=float),
                   float(d.get("target_scale", 1.0)))


def zero_predictor(out_dim: int) -> Predictor:
    return Predictor("zero", None, out_dim)


def prediction_error(pred: Predictor, F, Y) -> float:
    """Mean per-frame squared error of ``pred`` on raw features F."""
    d = pred.predict(F) - np.asarray(Y, dtype=float)
    return float(np.mean(np.sum(d * d, axis=-1)))


def fit_regression(F, Y) -> Predictor:
    Y = np.asarray(Y, dtype=float)
    model = regression_fit(apply_mask(F, "regression"), Y)
    return Predictor("regression", model, model.out_dim)


def fit_codebook(F, Y, size: int, seed: int = 0) -> Predictor:
    """LBG on mean-centred codebook-masked inputs, then target association.

    Inputs are only centred: scaling each dimension to unit variance would
    undo the deliberate 4x weight on the pitch gain.
    """
    if size < 1 or size & (size - 1) or size > 2048:
        raise PreconditionError("codebook size must be a power of two <= 2048")
    X = apply_mask(F, "codebook")
    scaler = Standardizer.fit(X, center_only=True)
    Xs = scaler.transform(X)
    centroids = lbg_train(Xs, size, seed=seed)
    cb = codebook_associate(centroids, Xs, Y)
    return Predictor("codebook", cb, cb.output_codewords.shape[1], input_scaler=scaler)


def fit_mlp(F, Y, hidden=(30, 30), schedule: TrainSchedule | None = None, validation=None) -> Predictor:
    """MLP on standardized inputs; targets centred and divided by one shared scale."""
    X = apply_mask(F, "mlp")
    Y = np.asarray(Y, dtype=float)
    scaler = Standardizer.fit(X)
    t_mean = Y.mean(axis=0)
    t_scale = float(np.sqrt(np.mean((Y - t_mean) ** 2))) or 1.0
    val = None
    if validation is not None:
        Fv, Yv = validation
        val = (scaler.transform(apply_mask(Fv, "mlp")), (np.asarray(Yv, dtype=float) - t_mean) / t_scale)
    model = mlp_train(scaler.transform(X), (Y - t_mean) / t_scale, hidden, schedule, validation=val)
    return Predictor("mlp", model, Y.shape[1], input_scaler=scaler, target_mean=t_mean, target_scale=t_scale)


@dataclass
class MlpSelection:
    predictor: Predictor
    mlp_error: float | None
    regression_error: float
    attempts: int
    rejected: bool


def fit_mlp_checked(F, Y, hidden=(30, 30), schedule: TrainSchedule | None = None,
                    retries: int = 2, reference: Predictor | None = None) -> MlpSelection:
    """Train an MLP and reject it unless its training error beats regression.

    Failed attempts are retried with new seeds; after ``retries`` retries the
    regression predictor is returned instead.
    """
    sched = schedule or TrainSchedule()
    reg = reference or fit_regression(F, Y)
    reg_err = prediction_error(reg, F, Y)
    best_err = None
    for attempt in range(retries + 1):
        s = TrainSchedule(**{**sched.__dict__, "seed": sched.seed + 1000 * attempt})
        try:
            pred = fit_mlp(F, Y, hidden, s)
        except TrainingError as exc:
            log.warning("MLP attempt %d failed: %s", attempt + 1, exc)
            continue
        err = prediction_error(pred, F, Y)
        best_err = err if best_err is None else min(best_err, err)
        if err <= reg_err:
            return MlpSelection(pred, err, reg_err, attempt + 1, False)
        log.warning("MLP attempt %d rejected: train error %.5g > regression %.5g", attempt + 1, err, reg_err)
    return MlpSelection(reg, best_err, reg_err, retries + 1, True)
