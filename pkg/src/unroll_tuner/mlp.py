"""From-scratch MLP classifier over unrolling-factor classes.

Architecture: input -> 500 -> 400 -> 250 -> 100 -> 7, each hidden layer as
dense -> batchnorm -> ReLU -> (inverted) dropout, softmax output, uniform
fan-based weight init, cross-entropy loss trained with ADAM in batches of
100, early stopping on validation loss with patience 10 keeping the best
epoch's snapshot.  numpy supplies the matrix arithmetic; all learning logic
lives here.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    CorruptFile,
    DimensionMismatch,
    EmptySplit,
    FormatVersionMismatch,
    LabelNotInClassSet,
    ModelNotTrained,
)
from .featurize import FeatureVector, Scaler, ScalerMode
from .rng import SplitMix64
from .schedule import UNROLL_FACTORS

MODEL_FORMAT_VERSION = 1
DEFAULT_HIDDEN = (500, 400, 250, 100)
DEFAULT_DROPOUT = (0.12, 0.10, 0.04, 0.07)
N_CLASSES = len(UNROLL_FACTORS)
LOG_CLAMP = 1e-12


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    max_epochs: int = 500
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.eps, self.max_epochs) <= 0:
            raise ValueError("training hyperparameters must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class Layer:
    w: np.ndarray
    b: np.ndarray
    gamma: np.ndarray | None = None          # batchnorm params; None on the output layer
    beta: np.ndarray | None = None
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None


@dataclass
class MlpModel:
    layer_dims: list[int]
    layers: list[Layer]
    dropout_rates: tuple[float, ...]
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    scaler: Scaler | None = None
    classes: tuple[int, ...] = UNROLL_FACTORS
    trained: bool = False

    @property
    def input_width(self) -> int:
        return self.layer_dims[0]

    @property
    def n_hidden(self) -> int:
        return len(self.layer_dims) - 2


def init_model(input_width: int, seed: int,
               hidden: tuple[int, ...] = DEFAULT_HIDDEN,
               dropout: tuple[float, ...] = DEFAULT_DROPOUT,
               n_classes: int = N_CLASSES) -> MlpModel:
    """Uniform weight init in [-limit, limit], limit = sqrt(6/(fan_in+fan_out))."""
    if input_width < 1:
        raise ValueError("input_width must be >= 1")
    if len(dropout) != len(hidden):
        raise ValueError("one dropout rate per hidden layer")
    if any(not 0.0 <= r < 1.0 for r in dropout):
        raise ValueError("dropout rates must lie in [0, 1)")
    dims = [input_width, *hidden, n_classes]
    rng = SplitMix64.stream(seed, 0x11A9)
    layers: list[Layer] = []
    for k in range(len(dims) - 1):
        fan_in, fan_out = dims[k], dims[k + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = np.array([rng.uniform(-limit, limit) for _ in range(fan_in * fan_out)],
                     dtype=np.float64).reshape(fan_in, fan_out)
        layer = Layer(w=w, b=np.zeros(fan_out))
        if k < len(dims) - 2:
            layer.gamma = np.ones(fan_out)
            layer.beta = np.zeros(fan_out)
            layer.running_mean = np.zeros(fan_out)
            layer.running_var = np.ones(fan_out)
        layers.append(layer)
    return MlpModel(layer_dims=dims, layers=layers, dropout_rates=tuple(dropout))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


def forward(m: MlpModel, batch: np.ndarray, train: bool = False,
            dropout_rng: np.random.Generator | None = None):
    """Propagate a (rows x input_width) batch; returns (probs, cache).

    Train mode uses batch statistics for batchnorm (updating the running
    stats) and applies inverted dropout; infer mode uses running statistics
    and no dropout, so repeated calls are identical.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != m.input_width:
        raise DimensionMismatch(f"batch width {x.shape[1]} != input width {m.input_width}")
    cache = {"inputs": [], "z": [], "xhat": [], "std": [], "relu": [], "mask": []}
    a = x
    for k, layer in enumerate(m.layers[:-1]):
        cache["inputs"].append(a)
        z = a @ layer.w + layer.b
        if train:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            layer.running_mean = m.bn_momentum * layer.running_mean + (1 - m.bn_momentum) * mu
            layer.running_var = m.bn_momentum * layer.running_var + (1 - m.bn_momentum) * var
        else:
            mu, var = layer.running_mean, layer.running_var
        std = np.sqrt(var + m.bn_eps)
        xhat = (z - mu) / std
        h = layer.gamma * xhat + layer.beta
        relu_in = h
        a = np.maximum(h, 0.0)
        rate = m.dropout_rates[k]
        if train and rate > 0.0:
            if dropout_rng is None:
                raise ValueError("train-mode forward with dropout needs a generator")
            mask = (dropout_rng.random(a.shape) >= rate) / (1.0 - rate)
            a = a * mask
        else:
            mask = None
        cache["z"].append(z)
        cache["xhat"].append(xhat)
        cache["std"].append(std)
        cache["relu"].append(relu_in)
        cache["mask"].append(mask)
    cache["inputs"].append(a)
    logits = a @ m.layers[-1].w + m.layers[-1].b
    return softmax(logits), cache


def loss_and_gradients(m: MlpModel, batch: np.ndarray, one_hot: np.ndarray,
                       dropout_rng: np.random.Generator | None = None):
    """Mean cross-entropy and backprop gradients for every W, b, gamma, beta."""
    y = np.asarray(one_hot, dtype=np.float64)
    probs, cache = forward(m, batch, train=True, dropout_rng=dropout_rng)
    if y.shape != probs.shape:
        raise DimensionMismatch(f"labels {y.shape} vs probs {probs.shape}")
    n = probs.shape[0]
    loss = float(-(y * np.log(np.maximum(probs, LOG_CLAMP))).sum() / n)

    grads = [dict() for _ in m.layers]
    delta = (probs - y) / n                           # d loss / d logits
    grads[-1]["w"] = cache["inputs"][-1].T @ delta
    grads[-1]["b"] = delta.sum(axis=0)
    da = delta @ m.layers[-1].w.T
    for k in range(m.n_hidden - 1, -1, -1):
        layer = m.layers[k]
        if cache["mask"][k] is not None:
            da = da * cache["mask"][k]
        dh = da * (cache["relu"][k] > 0.0)
        xhat, std = cache["xhat"][k], cache["std"][k]
        grads[k]["gamma"] = (dh * xhat).sum(axis=0)
        grads[k]["beta"] = dh.sum(axis=0)
        rows = dh.shape[0]
        dxhat = dh * layer.gamma
        dz = (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0)) / std
        grads[k]["w"] = cache["inputs"][k].T @ dz
        grads[k]["b"] = dz.sum(axis=0)
        da = dz @ layer.w.T
    return loss, grads


@dataclass
class AdamState:
    m: list[dict[str, np.ndarray]]
    v: list[dict[str, np.ndarray]]

    @classmethod
    def for_model(cls, model: MlpModel) -> "AdamState":
        zeros = [
            {name: np.zeros_like(getattr(layer, name))
             for name in ("w", "b", "gamma", "beta") if getattr(layer, name) is not None}
            for layer in model.layers
        ]
        return cls(m=copy.deepcopy(zeros), v=copy.deepcopy(zeros))


def adam_update(param: np.ndarray, grad: np.ndarray, m1: np.ndarray, v1: np.ndarray,
                t: int, cfg: TrainConfig) -> None:
    """One in-place ADAM step with bias correction (t counts from 1)."""
    m1 *= cfg.beta1
    m1 += (1 - cfg.beta1) * grad
    v1 *= cfg.beta2
    v1 += (1 - cfg.beta2) * grad * grad
    m_hat = m1 / (1 - cfg.beta1 ** t)
    v_hat = v1 / (1 - cfg.beta2 ** t)
    param -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)


def adam_step(model: MlpModel, grads, state: AdamState, t: int, cfg: TrainConfig) -> MlpModel:
    if t < 1:
        raise ValueError("ADAM step counter starts at 1")
    for k, layer in enumerate(model.layers):
        for name in grads[k]:
            adam_update(getattr(layer, name), grads[k][name],
                        state.m[k][name], state.v[k][name], t, cfg)
    return model


def one_hot(labels, classes: tuple[int, ...] = UNROLL_FACTORS) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    out = np.zeros((len(labels), len(classes)))
    for row, label in enumerate(labels):
        if label not in index:
            raise LabelNotInClassSet(f"label {label} not in {classes}")
        out[row, index[label]] = 1.0
    return out


def _evaluate(m: MlpModel, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    probs, _ = forward(m, x, train=False)
    loss = float(-(y * np.log(np.maximum(probs, LOG_CLAMP))).sum() / x.shape[0])
    acc = float((probs.argmax(axis=1) == y.argmax(axis=1)).mean())
    return loss, acc


def _snapshot(m: MlpModel) -> list[Layer]:
    return copy.deepcopy(m.layers)


def train(m: MlpModel, split, cfg: TrainConfig | None = None):
    """Fit on split.train with early stopping on split.valid.

    Returns (model, history); the model carries the parameters of the epoch
    with the lowest validation loss, not the last one.  The scaler must
    already be attached and fitted on the training rows only.
    """
    cfg = cfg or TrainConfig()
    if not split.train or not split.valid:
        raise EmptySplit("train and valid splits must be non-empty")
    if m.scaler is None:
        raise ModelNotTrained("attach a fitted scaler before training")

    x_train = m.scaler.transform_matrix([r.features.to_list() for r in split.train])
    y_train = one_hot([r.label for r in split.train], m.classes)
    x_valid = m.scaler.transform_matrix([r.features.to_list() for r in split.valid])
    y_valid = one_hot([r.label for r in split.valid], m.classes)
    if x_train.shape[1] != m.input_width:
        raise DimensionMismatch(
            f"scaler emits {x_train.shape[1]} columns, model expects {m.input_width}")

    shuffle_rng = SplitMix64.stream(cfg.seed, 0x7A13)
    dropout_rng = np.random.Generator(np.random.PCG64(cfg.seed ^ 0xD20B0))
    state = AdamState.for_model(m)
    history: list[dict] = []
    best_loss = float("inf")
    best_layers = _snapshot(m)
    stall = 0
    t = 0
    n = x_train.shape[0]
    for epoch in range(cfg.max_epochs):
        order = list(range(n))
        shuffle_rng.shuffle(order)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if len(idx) < 2:
                continue      # batchnorm needs at least two rows
            t += 1
            _, grads = loss_and_gradients(m, x_train[idx], y_train[idx], dropout_rng)
            adam_step(m, grads, state, t, cfg)
        train_loss, train_acc = _evaluate(m, x_train, y_train)
        valid_loss, valid_acc = _evaluate(m, x_valid, y_valid)
        history.append({"epoch": epoch, "train_loss": train_loss, "train_acc": train_acc,
                        "valid_loss": valid_loss, "valid_acc": valid_acc})
        if valid_loss < best_loss:
            best_loss = valid_loss
            best_layers = _snapshot(m)
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
    m.layers = best_layers
    m.trained = True
    return m, history


def predict_probs(m: MlpModel, rows) -> np.ndarray:
    if not m.trained:
        raise ModelNotTrained("model has not been trained")
    if m.scaler is None:
        raise ModelNotTrained("model has no attached scaler")
    x = m.scaler.transform_matrix(rows)
    probs, _ = forward(m, x, train=False)
    return probs


def predict_class(m: MlpModel, fv: FeatureVector) -> int:
    """Best unrolling factor for one feature vector (argmax, lowest-index ties)."""
    probs = predict_probs(m, [fv.to_list()])
    return m.classes[int(probs[0].argmax())]


# --- persistence ---------------------------------------------------------------

def _scaler_to_obj(s: Scaler | None):
    if s is None:
        return None
    return {
        "mode": s.mode.value,
        "stat_a": list(s.stat_a),
        "stat_b": list(s.stat_b),
        "dropped_columns": list(s.dropped_columns),
        "rescaled_columns": list(s.rescaled_columns),
    }


def _scaler_from_obj(obj) -> Scaler | None:
    if obj is None:
        return None
    return Scaler(
        mode=ScalerMode(obj["mode"]),
        stat_a=tuple(obj["stat_a"]),
        stat_b=tuple(obj["stat_b"]),
        dropped_columns=tuple(obj["dropped_columns"]),
        rescaled_columns=tuple(obj["rescaled_columns"]),
    )


def save_model(m: MlpModel, path: str) -> None:
    """Versioned structured-text (JSON) dump; floats round-trip exactly."""
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "mlp",
        "classes": list(m.classes),
        "layer_dims": list(m.layer_dims),
        "dropout_rates": list(m.dropout_rates),
        "bn_momentum": m.bn_momentum,
        "bn_eps": m.bn_eps,
        "trained": m.trained,
        "scaler": _scaler_to_obj(m.scaler),
        "layers": [
            {name: getattr(layer, name).tolist()
             for name in ("w", "b", "gamma", "beta", "running_mean", "running_var")
             if getattr(layer, name) is not None}
            for layer in m.layers
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model(path: str) -> MlpModel:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: not a model file ({exc})") from exc
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"{path}: format {payload.get('format_version')!r}, "
            f"expected {MODEL_FORMAT_VERSION}")
    try:
        dims = [int(d) for d in payload["layer_dims"]]
        layers = []
        for k, obj in enumerate(payload["layers"]):
            layer = Layer(
                w=np.array(obj["w"], dtype=np.float64),
                b=np.array(obj["b"], dtype=np.float64),
            )
            if "gamma" in obj:
                layer.gamma = np.array(obj["gamma"], dtype=np.float64)
                layer.beta = np.array(obj["beta"], dtype=np.float64)
                layer.running_mean = np.array(obj["running_mean"], dtype=np.float64)
                layer.running_var = np.array(obj["running_var"], dtype=np.float64)
            if layer.w.shape != (dims[k], dims[k + 1]):
                raise ValueError(f"layer {k} weight shape {layer.w.shape}")
            layers.append(layer)
        if len(layers) != len(dims) - 1:
            raise ValueError("layer count does not match layer_dims")
        model = MlpModel(
            layer_dims=dims,
            layers=layers,
            dropout_rates=tuple(payload["dropout_rates"]),
            bn_momentum=payload["bn_momentum"],
            bn_eps=payload["bn_eps"],
            scaler=_scaler_from_obj(payload.get("scaler")),
            classes=tuple(payload["classes"]),
            trained=bool(payload.get("trained")),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    return model
