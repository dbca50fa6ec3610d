"""Binary classifiers over one-hot encoded categorical records.

Three kinds share one interface: logistic regression and a ReLU MLP trained
by mini-batch gradient descent on binary cross-entropy, and the exact Bayes
classifier of a ``SynthSpec``. Logits are always recomputed from the clamped
confidence, ``log(y / (1 - y))``, so every kind is compared on equal terms.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Literal, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .data import DataError, Record, Schema, SynthSpec, TabularDataset

FORMAT_TAG = "snaplab-model/1"
CLAMP = 1e-12


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: Literal["logistic", "mlp", "bayes_exact"] = "logistic"
    hidden_layers: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(w) for w in self.hidden_layers))
        if self.kind not in ("logistic", "mlp", "bayes_exact"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if any(w <= 0 for w in self.hidden_layers):
            raise ValueError("hidden widths must be positive")
        if self.kind != "mlp" and self.hidden_layers:
            raise ValueError(f"{self.kind} takes no hidden layers")
        if self.kind == "mlp" and not self.hidden_layers:
            raise ValueError("mlp needs at least one hidden layer")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 256
    learning_rate: float = 1e-3
    optimizer: Literal["sgd", "adam"] = "adam"
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    l2: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class Metrics(NamedTuple):
    accuracy: float
    precision: float
    recall: float
    f1: float
    precision_undefined: bool = False


def one_hot(schema: Schema, codes: np.ndarray) -> np.ndarray:
    sizes = np.array(schema.sizes, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    out = np.zeros((codes.shape[0], int(sizes.sum())))
    if codes.shape[0]:
        out[np.arange(codes.shape[0])[:, None], codes + offsets] = 1.0
    return out


def init_params(sizes: Sequence[int], rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """Glorot-uniform weights, zero biases."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        params.append((rng.uniform(-a, a, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return params


def forward(params, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Pre-activation of the output unit and the per-layer inputs."""
    acts = [X]
    h = X
    for W, b in params[:-1]:
        h = np.maximum(h @ W + b, 0.0)
        acts.append(h)
    W, b = params[-1]
    return (h @ W + b)[:, 0], acts


def loss_and_grads(params, X: np.ndarray, y: np.ndarray, l2: float = 0.0):
    """Mean binary cross-entropy (plus ``l2/2 * sum W**2``) and its gradients."""
    z, acts = forward(params, X)
    # log(1 + e^z) - y z, computed stably
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    loss += 0.5 * l2 * sum(float((W**2).sum()) for W, _ in params)
    delta = ((expit(z) - y) / X.shape[0])[:, None]
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        W, b = params[i]
        grads[i] = (acts[i].T @ delta + l2 * W, delta.sum(axis=0))
        if i:
            delta = (delta @ W.T) * (acts[i] > 0)
    return loss, grads


class TrainedModel:
    """A fitted classifier bound to a schema. Immutable after construction."""

    def __init__(self, spec: ModelSpec, schema: Schema, params=None, table: SynthSpec | None = None):
        self.spec = spec
        self.schema = schema
        self.params = [(np.array(W, dtype=float), np.array(b, dtype=float)) for W, b in (params or [])]
        for W, b in self.params:
            W.setflags(write=False)
            b.setflags(write=False)
        self._table = table
        if table is not None:
            self._lookup = {tuple(r): i for i, r in enumerate(table.cell_codes.tolist())}

    def _check(self, data: TabularDataset):
        if data.schema != self.schema:
            raise DataError("schema mismatch")

    def prob1(self, data: TabularDataset) -> np.ndarray:
        """Unclamped ``P[Y=1 | x]`` for every row."""
        self._check(data)
        if self._table is not None:
            cells = np.array([self._lookup.get(tuple(r), -1) for r in data.codes.tolist()], dtype=np.int64)
            if (cells < 0).any():
                raise DataError("off-support query")
            return self._table.p_y1[cells]
        z, _ = forward(self.params, one_hot(self.schema, data.codes))
        return expit(z)

    def confidences(self, data: TabularDataset) -> np.ndarray:
        """``(n, 2)`` array of clamped ``(y0, y1)``."""
        y1 = np.clip(self.prob1(data), CLAMP, 1 - CLAMP)
        return np.column_stack([1.0 - y1, y1])

    def logits(self, data: TabularDataset, c: int = 1) -> np.ndarray:
        y1 = np.clip(self.prob1(data), CLAMP, 1 - CLAMP)
        z1 = np.log(y1) - np.log1p(-y1)
        return z1 if c == 1 else -z1

    def predict(self, data: TabularDataset) -> np.ndarray:
        return (self.prob1(data) > 0.5).astype(np.int64)

    def to_json(self) -> dict:
        if self._table is not None:
            return {"format": FORMAT_TAG, "spec": asdict(self.spec), "synth_spec": self._table.to_json()}
        return {
            "format": FORMAT_TAG,
            "spec": asdict(self.spec),
            "schema": self.schema.to_json(),
            "dtype": "float64",
            "layers": [{"shape": list(W.shape), "W": W.ravel().tolist(), "b": b.tolist()} for W, b in self.params],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainedModel":
        if obj.get("format") != FORMAT_TAG:
            raise ValueError(f"unsupported model format {obj.get('format')!r}")
        spec = ModelSpec(obj["spec"]["kind"], tuple(obj["spec"]["hidden_layers"]))
        if "synth_spec" in obj:
            return bayes_from_spec(SynthSpec.from_json(obj["synth_spec"]))
        params = [
            (np.array(layer["W"], dtype=float).reshape(layer["shape"]), np.array(layer["b"], dtype=float))
            for layer in obj["layers"]
        ]
        return cls(spec, Schema.from_json(obj["schema"]), params)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def train(spec: ModelSpec, data: TabularDataset, cfg: TrainConfig = TrainConfig()) -> TrainedModel:
    if spec.kind == "bayes_exact":
        raise ValueError("bayes_exact models come from bayes_from_spec, not training")
    if len(data) == 0:
        raise DataError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    X = one_hot(data.schema, data.codes)
    y = data.labels.astype(float)
    params = init_params([X.shape[1], *spec.hidden_layers, 1], rng)
    params = [[W, b] for W, b in params]
    m = [[np.zeros_like(W), np.zeros_like(b)] for W, b in params]
    s = [[np.zeros_like(W), np.zeros_like(b)] for W, b in params]
    b1, b2 = cfg.betas
    step = 0
    loss = np.nan
    for _ in range(cfg.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(params, X[batch], y[batch], cfg.l2)
            if not np.isfinite(loss):
                raise TrainingDivergedError("training diverged; try a smaller learning rate")
            step += 1
            for i, g_layer in enumerate(grads):
                for j, g in enumerate(g_layer):
                    if cfg.optimizer == "sgd":
                        params[i][j] = params[i][j] - cfg.learning_rate * g
                        continue
                    m[i][j] = b1 * m[i][j] + (1 - b1) * g
                    s[i][j] = b2 * s[i][j] + (1 - b2) * g * g
                    mhat = m[i][j] / (1 - b1**step)
                    shat = s[i][j] / (1 - b2**step)
                    params[i][j] = params[i][j] - cfg.learning_rate * mhat / (np.sqrt(shat) + cfg.eps)
    final, _ = loss_and_grads(params, X, y, cfg.l2)
    if not all(np.isfinite(p).all() for layer in params for p in layer) or not np.isfinite(final):
        raise TrainingDivergedError("training diverged; try a smaller learning rate")
    return TrainedModel(spec, data.schema, [tuple(p) for p in params])


def bayes_from_spec(spec: SynthSpec) -> TrainedModel:
    """Classifier whose confidence is the exact ``P[Y | X=x]`` of ``spec``."""
    return TrainedModel(ModelSpec("bayes_exact"), spec.schema, table=spec)


def _single(model: TrainedModel, record) -> TabularDataset:
    values, label = record if isinstance(record, Record) else (record, 0)
    return TabularDataset(model.schema, model.schema.encode(values)[None, :], np.array([label]))


def predict_confidence(model: TrainedModel, record) -> tuple[float, float]:
    """``(y0, y1)`` for one record (a ``Record`` or a bare value sequence)."""
    y0, y1 = model.confidences(_single(model, record))[0]
    return float(y0), float(y1)


def logit(model: TrainedModel, record, c: int = 1) -> float:
    return float(model.logits(_single(model, record), c)[0])


def evaluate(model: TrainedModel, data: TabularDataset) -> Metrics:
    """Accuracy and class-1 precision/recall/F1.

    With no positive predictions precision is reported as 0 and flagged.
    """
    pred = model.predict(data)
    y = data.labels
    tp = int(((pred == 1) & (y == 1)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())
    acc = float((pred == y).mean()) if len(y) else 0.0
    undefined = tp + fp == 0
    precision = 0.0 if undefined else tp / (tp + fp)
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(acc, precision, recall, f1, undefined)
