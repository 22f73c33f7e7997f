"""Multilayer perceptron (tanh hidden layers, linear output) trained by
mini-batch gradient descent with delta-bar-delta step sizes.

The objective for one example is ``E = sum (y_hat - y)^2`` with no 1/2, so
gradients carry the factor 2.  All parameters live in one flat vector; the
per-layer weight and bias arrays are views into it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import PreconditionError, TrainingError

log = logging.getLogger(__name__)


class MlpModel:
    def __init__(self, sizes, params=None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise PreconditionError(f"invalid layer sizes {sizes}")
        self.sizes = sizes
        n = sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))
        self.params = np.zeros(n) if params is None else np.array(params, dtype=float)
        if self.params.shape != (n,):
            raise PreconditionError(f"expected {n} parameters, got {self.params.shape}")
        if not np.all(np.isfinite(self.params)):
            raise PreconditionError("MLP weights must be finite")
        self.history: list = []
        self._bind()

    def _bind(self):
        self.weights, self.biases = _views(self.params, self.sizes)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def copy(self) -> MlpModel:
        m = MlpModel(self.sizes, self.params)
        m.history = list(self.history)
        return m

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes),
                "weights": [w.tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases]}

    @classmethod
    def from_dict(cls, d) -> MlpModel:
        sizes = d["sizes"]
        m = cls(sizes)
        for l, (w, b) in enumerate(zip(d["weights"], d["biases"])):
            w = np.asarray(w, dtype=float)
            b = np.asarray(b, dtype=float)
            if w.shape != m.weights[l].shape or b.shape != m.biases[l].shape:
                raise PreconditionError(f"layer {l} has inconsistent shapes")
            m.weights[l][...] = w
            m.biases[l][...] = b
        if not np.all(np.isfinite(m.params)):
            raise PreconditionError("MLP weights must be finite")
        return m


def _views(flat, sizes):
    weights, biases, k = [], [], 0
    for i, o in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[k:k + o * i].reshape(o, i))
        k += o * i
        biases.append(flat[k:k + o])
        k += o
    return weights, biases


def init_mlp(sizes, seed: int = 0) -> MlpModel:
    """Uniform +-1/sqrt(fan_in) initialization."""
    rng = np.random.default_rng(seed)
    m = MlpModel(sizes)
    for w, b in zip(m.weights, m.biases):
        lim = 1.0 / math.sqrt(w.shape[1])
        w[...] = rng.uniform(-lim, lim, w.shape)
        b[...] = rng.uniform(-lim, lim, b.shape)
    return m


def _forward_all(model: MlpModel, X):
    acts = [X]
    h = X
    last = model.n_layers - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        h = z if l == last else np.tanh(z)
        acts.append(h)
    return acts


def mlp_forward(model: MlpModel, x) -> np.ndarray:
    """Output for one input vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.sizes[0]:
        raise PreconditionError(f"input has {x.shape[-1]} values, model expects {model.sizes[0]}")
    return _forward_all(model, np.atleast_2d(x))[-1].reshape(x.shape[:-1] + (model.sizes[-1],))


def _flat_gradient(model: MlpModel, X, Y) -> np.ndarray:
    """Gradient of sum over rows of sum (y_hat - y)^2, flattened like ``params``."""
    acts = _forward_all(model, X)
    grad = np.empty_like(model.params)
    gw, gb = _views(grad, model.sizes)
    delta = 2.0 * (acts[-1] - Y)
    for l in range(model.n_layers - 1, -1, -1):
        gw[l][...] = delta.T @ acts[l]
        gb[l][...] = delta.sum(axis=0)
        if l:
            delta = (delta @ model.weights[l]) * (1.0 - acts[l] ** 2)
    return grad


def mlp_gradient(model: MlpModel, x, y_target):
    """Backpropagated gradients for one example (or summed over a batch).

    Returns (weight_grads, bias_grads) as per-layer lists.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_2d(np.asarray(y_target, dtype=float))
    grad = _flat_gradient(model, X, Y)
    gw, gb = _views(grad, model.sizes)
    return gw, gb


def mlp_error(model: MlpModel, X, Y) -> float:
    """Mean over examples of the per-example squared error."""
    d = mlp_forward(model, X) - np.asarray(Y, dtype=float)
    return float(np.mean(np.sum(d * d, axis=-1)))


@dataclass
class TrainSchedule:
    batch_size: int = 32
    eta_init: float = 1e-3
    eta_min: float = 1e-6
    eta_max: float = 0.1
    kappa: float = 1e-4
    decrease: float = 0.5
    decay: float = 0.7
    max_epochs: int = 500
    patience: int = 20
    divergence_factor: float = 10.0
    validation_fraction: float = 0.2
    seed: int = 0

    def validate(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise PreconditionError("batch_size, max_epochs and patience must be positive")
        if not 0 < self.eta_min <= self.eta_init <= self.eta_max:
            raise PreconditionError("need 0 < eta_min <= eta_init <= eta_max")
        if not 0 <= self.decay < 1 or not 0 < self.decrease < 1:
            raise PreconditionError("decay must be in [0, 1) and decrease in (0, 1)")
        if not 0 <= self.validation_fraction < 1:
            raise PreconditionError("validation_fraction must be in [0, 1)")


@dataclass
class TrainState:
    eta: np.ndarray
    bar: np.ndarray
    epoch: int = 0
    best_error: float = math.inf
    best_params: np.ndarray | None = None
    history: list = field(default_factory=list)


def delta_bar_delta_step(params, grad, state: TrainState, schedule: TrainSchedule) -> None:
    """One in-place update of ``params`` and the per-weight step sizes."""
    s = grad * state.bar
    state.eta[s > 0] += schedule.kappa
    state.eta[s < 0] *= schedule.decrease
    np.clip(state.eta, schedule.eta_min, schedule.eta_max, out=state.eta)
    params -= state.eta * grad
    state.bar *= schedule.decay
    state.bar += (1.0 - schedule.decay) * grad


def mlp_train(X, Y, layout, schedule: TrainSchedule | None = None, validation=None,
              init: MlpModel | None = None) -> MlpModel:
    """Train an MLP with hidden sizes ``layout`` (e.g. ``(30, 30)``).

    ``validation`` is an optional (X_val, Y_val) pair; otherwise the last
    ``validation_fraction`` of a seeded permutation is held out.  Training stops
    once validation error has not improved for ``patience`` epochs and the
    best-validation parameters are returned.
    """
    sched = schedule or TrainSchedule()
    sched.validate()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0] or X.shape[0] == 0:
        raise PreconditionError("X and Y must have the same positive number of rows")
    rng = np.random.default_rng(sched.seed)
    if validation is not None:
        Xv, Yv = (np.atleast_2d(np.asarray(a, dtype=float)) for a in validation)
        Xt, Yt = X, Y
    elif sched.validation_fraction > 0 and X.shape[0] >= 5:
        perm = rng.permutation(X.shape[0])
        n_val = max(1, int(round(sched.validation_fraction * X.shape[0])))
        Xt, Yt = X[perm[n_val:]], Y[perm[n_val:]]
        Xv, Yv = X[perm[:n_val]], Y[perm[:n_val]]
    else:
        Xt, Yt, Xv, Yv = X, Y, X, Y

    sizes = (X.shape[1], *tuple(layout), Y.shape[1])
    model = init.copy() if init is not None else init_mlp(sizes, seed=sched.seed)
    if model.sizes != sizes:
        raise PreconditionError(f"initial model layout {model.sizes} != {sizes}")
    state = TrainState(np.full(model.params.size, sched.eta_init), np.zeros(model.params.size))
    initial = mlp_error(model, Xt, Yt)
    state.best_error = mlp_error(model, Xv, Yv)
    state.best_params = model.params.copy()
    since_best = 0
    n = Xt.shape[0]
    for epoch in range(1, sched.max_epochs + 1):
        state.epoch = epoch
        order = rng.permutation(n)
        for s in range(0, n, sched.batch_size):
            b = order[s:s + sched.batch_size]
            grad = _flat_gradient(model, Xt[b], Yt[b]) / b.size
            delta_bar_delta_step(model.params, grad, state, sched)
        train_err = mlp_error(model, Xt, Yt)
        val_err = mlp_error(model, Xv, Yv)
        state.history.append((epoch, train_err, val_err))
        if not np.isfinite(train_err) or train_err > sched.divergence_factor * max(initial, 1e-300):
            raise TrainingError(
                f"MLP diverged at epoch {epoch}: train error {train_err:.4g} vs initial {initial:.4g}, "
                f"median step size {np.median(state.eta):.3g}")
        if val_err < state.best_error:
            state.best_error = val_err
            state.best_params = model.params.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= sched.patience:
                break
    log.debug("MLP %s: %d epochs, best validation error %.5g", sizes, state.epoch, state.best_error)
    model.params[...] = state.best_params
    model.history = state.history
    return model
