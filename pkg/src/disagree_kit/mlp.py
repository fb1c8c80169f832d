"""Small perceptrons on frozen embedding features.

MLP1 is a single linear layer; MLP2 adds a hidden layer with a rectifier
and dropout. Training uses decoupled weight decay with adaptive moments
and a linear warmup, and is bit-reproducible given the config seed and
data order. Inference never applies dropout.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .core_model import UsagePair
from .errors import DimensionMismatch, DivergenceError, MissingStore
from .geometry import TransformStats, apply_transform

DEPTHS = ("mlp1", "mlp2")
TASKS = ("classify4", "regress")
FEATURE_MODES = ("concat", "concat_abs_diff")
LAYER_POOLS = ("single", "last4_mean")

_BETA1, _BETA2, _EPS, _WEIGHT_DECAY = 0.9, 0.999, 1e-8, 0.01


@dataclass(frozen=True)
class MlpConfig:
    depth: str = "mlp2"
    hidden_dim: int = 256
    input_features: str = "concat"
    dropout: float = 0.1
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 1e-2
    warmup_ratio: float = 0.1
    weighted_loss: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.depth not in DEPTHS:
            raise ValueError(f"unknown depth {self.depth!r}")
        if self.input_features not in FEATURE_MODES:
            raise ValueError(f"unknown feature mode {self.input_features!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.epochs <= 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs/batch_size/learning_rate must be positive")


# Training presets matching the reported experiment settings.
PRESETS = {
    "task1-mlp": MlpConfig(depth="mlp2", epochs=50, batch_size=128),
    "task2-mlp1": MlpConfig(depth="mlp1", epochs=200, batch_size=16),
    "task2-mlp2": MlpConfig(depth="mlp2", epochs=50, batch_size=32),
}


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    task: str
    config: MlpConfig
    input_dim: int
    loss_trace: tuple[float, ...] = ()

    @property
    def output_dim(self) -> int:
        return 4 if self.task == "classify4" else 1


def init_params(input_dim: int, config: MlpConfig, task: str, rng: np.random.Generator):
    """Uniform +-1/sqrt(fan_in) init for every weight and bias."""
    out_dim = 4 if task == "classify4" else 1
    shapes = (
        [(input_dim, config.hidden_dim), (config.hidden_dim, out_dim)]
        if config.depth == "mlp2"
        else [(input_dim, out_dim)]
    )
    weights, biases = [], []
    for fan_in, fan_out in shapes:
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return weights, biases


def _forward(weights, biases, x: np.ndarray, dropout_mask: Optional[np.ndarray] = None):
    """Returns (output, hidden pre-activation, dropped hidden activation)."""
    if len(weights) == 1:
        return x @ weights[0] + biases[0], None, None
    z1 = x @ weights[0] + biases[0]
    h = np.maximum(z1, 0.0)
    if dropout_mask is not None:
        h = h * dropout_mask
    return h @ weights[1] + biases[1], z1, h


def loss_and_grads(
    weights,
    biases,
    x: np.ndarray,
    targets: np.ndarray,
    task: str,
    class_weights: Optional[np.ndarray] = None,
    dropout_mask: Optional[np.ndarray] = None,
):
    """Mean loss over the batch and gradients for every parameter.

    Classification: softmax cross-entropy over 4 logits, targets in 1..4,
    optionally weighted per class. Regression: mean squared error on a
    scalar head.
    """
    n = x.shape[0]
    out, z1, h = _forward(weights, biases, x, dropout_mask)
    if task == "classify4":
        idx = targets.astype(int) - 1
        shifted = out - out.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(shifted).sum(axis=1))
        per_example = logsumexp - shifted[np.arange(n), idx]
        w = class_weights[idx] if class_weights is not None else np.ones(n)
        loss = float((w * per_example).mean())
        probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
        d_out = probs.copy()
        d_out[np.arange(n), idx] -= 1.0
        d_out *= (w / n)[:, None]
    else:
        out = out[:, 0]
        resid = out - targets
        loss = float((resid * resid).mean())
        d_out = (2.0 * resid / n)[:, None]

    if len(weights) == 1:
        return loss, [x.T @ d_out], [d_out.sum(axis=0)]
    d_h = d_out @ weights[1].T
    if dropout_mask is not None:
        d_h = d_h * dropout_mask
    d_z1 = d_h * (z1 > 0.0)
    grads_w = [x.T @ d_z1, h.T @ d_out]
    grads_b = [d_z1.sum(axis=0), d_out.sum(axis=0)]
    return loss, grads_w, grads_b


def class_weight_vector(targets: np.ndarray) -> np.ndarray:
    """Inverse-frequency weights normalized to mean 1 on a balanced set."""
    counts = np.array([(targets == lab).sum() for lab in (1, 2, 3, 4)], dtype=float)
    n = len(targets)
    return np.where(counts > 0, n / (4.0 * np.maximum(counts, 1)), 0.0)


def train(features: np.ndarray, targets: np.ndarray, config: MlpConfig, task: str = "classify4") -> MlpModel:
    """Train on the full feature matrix; returns the model with a loss trace."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    x = np.asarray(features, dtype=float)
    t = np.asarray(targets)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"bad feature matrix shape {x.shape}")
    if len(t) != x.shape[0]:
        raise ValueError("features and targets disagree in length")
    if task == "classify4" and not np.isin(t, (1, 2, 3, 4)).all():
        raise ValueError("classification targets must be labels 1..4")
    t = t.astype(int) if task == "classify4" else t.astype(float)

    rng = np.random.default_rng(config.seed)
    weights, biases = init_params(x.shape[1], config, task, rng)
    class_weights = class_weight_vector(t) if (task == "classify4" and config.weighted_loss) else None

    n = x.shape[0]
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    warmup_steps = max(1, round(config.warmup_ratio * total_steps))

    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]

    step = 0
    trace = []
    hidden = config.hidden_dim if config.depth == "mlp2" else 0
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        epoch_losses = []
        for b0 in range(0, n, config.batch_size):
            batch = perm[b0 : b0 + config.batch_size]
            xb, tb = x[batch], t[batch]
            mask = None
            if hidden and config.dropout > 0.0:
                keep = rng.random((len(batch), hidden)) >= config.dropout
                mask = keep / (1.0 - config.dropout)
            loss, grads_w, grads_b = loss_and_grads(weights, biases, xb, tb, task, class_weights, mask)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            epoch_losses.append(loss)
            step += 1
            lr = config.learning_rate * min(1.0, step / warmup_steps)
            for params, grads, ms, vs in ((weights, grads_w, m_w, v_w), (biases, grads_b, m_b, v_b)):
                for i in range(len(params)):
                    ms[i] = _BETA1 * ms[i] + (1 - _BETA1) * grads[i]
                    vs[i] = _BETA2 * vs[i] + (1 - _BETA2) * grads[i] * grads[i]
                    m_hat = ms[i] / (1 - _BETA1**step)
                    v_hat = vs[i] / (1 - _BETA2**step)
                    params[i] -= lr * (m_hat / (np.sqrt(v_hat) + _EPS) + _WEIGHT_DECAY * params[i])
        trace.append(float(np.mean(epoch_losses)))
    return MlpModel(
        weights=weights, biases=biases, task=task, config=config, input_dim=x.shape[1], loss_trace=tuple(trace)
    )


def predict(model: MlpModel, features: np.ndarray):
    """Labels (argmax, ties to the smallest) or scalar scores; no dropout."""
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.input_dim:
        raise DimensionMismatch(f"features have dim {x.shape[1]}, model expects {model.input_dim}")
    out, _, _ = _forward(model.weights, model.biases, x)
    if model.task == "classify4":
        result = np.argmax(out, axis=1) + 1
    else:
        result = out[:, 0]
    return result[0] if single else result


def build_features(
    stores,
    transform: Optional[TransformStats],
    pair: UsagePair,
    feature_mode: str = "concat",
    layer_pool: str = "single",
) -> np.ndarray:
    """Assemble the input vector for one usage pair.

    `stores` is a single store for layer_pool "single" or the four top-layer
    stores for "last4_mean" (averaged before the transform is applied).
    """
    if feature_mode not in FEATURE_MODES:
        raise ValueError(f"unknown feature mode {feature_mode!r}")
    if layer_pool not in LAYER_POOLS:
        raise ValueError(f"unknown layer pool {layer_pool!r}")
    store_list = [stores] if not isinstance(stores, (list, tuple)) else list(stores)
    if layer_pool == "single" and len(store_list) != 1:
        raise MissingStore(f"single-layer features need exactly 1 store, got {len(store_list)}")
    if layer_pool == "last4_mean" and len(store_list) != 4:
        raise MissingStore(f"last4_mean needs exactly 4 layer stores, got {len(store_list)}")

    sides = []
    for side in (1, 2):
        vecs = [s.get_vector((pair.instance_id, side)) for s in store_list]
        pooled = np.mean(vecs, axis=0)
        if transform is not None:
            pooled = apply_transform(transform, pooled)
        sides.append(pooled)
    v1, v2 = sides
    if feature_mode == "concat":
        return np.concatenate([v1, v2])
    return np.concatenate([v1, v2, np.abs(v1 - v2)])


def build_feature_matrix(stores, transform, pairs: Sequence[UsagePair], feature_mode="concat", layer_pool="single"):
    ids = [p.instance_id for p in pairs]
    rows = [build_features(stores, transform, p, feature_mode, layer_pool) for p in pairs]
    return ids, np.stack(rows, axis=0)


def save_model(model: MlpModel, directory: str) -> None:
    """JSON manifest plus a little-endian float64 blob of all parameters."""
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "task": model.task,
        "input_dim": model.input_dim,
        "config": asdict(model.config),
        "shapes": [list(w.shape) for w in model.weights],
        "loss_trace": list(model.loss_trace),
    }
    with open(os.path.join(directory, "model.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    blob = np.concatenate(
        [w.ravel() for pairup in zip(model.weights, model.biases) for w in pairup]
    ).astype("<f8")
    blob.tofile(os.path.join(directory, "weights.bin"))


def load_model(directory: str) -> MlpModel:
    with open(os.path.join(directory, "model.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    config = MlpConfig(**manifest["config"])
    shapes = [tuple(s) for s in manifest["shapes"]]
    blob = np.fromfile(os.path.join(directory, "weights.bin"), dtype="<f8")
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in shapes:
        weights.append(blob[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        offset += fan_in * fan_out
        biases.append(blob[offset : offset + fan_out].copy())
        offset += fan_out
    if offset != len(blob):
        raise ValueError(f"weight blob has {len(blob)} values, expected {offset}")
    return MlpModel(
        weights=weights,
        biases=biases,
        task=manifest["task"],
        config=config,
        input_dim=int(manifest["input_dim"]),
        loss_trace=tuple(manifest.get("loss_trace", ())),
    )
