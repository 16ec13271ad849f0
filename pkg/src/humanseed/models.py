"""Linear SVM and feed-forward network trained by plain mini-batch SGD, either
from random weights or from a crowd-derived seed vector.

All arithmetic is float64. Each training run draws its initial weights and its
per-epoch shuffles from two independent streams spawned from
``TrainConfig.rng_seed``, so a random and a seeded run with the same seed see
the data in the same order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataset import Dataset, FeatureSchema, ScalerParams
from .errors import ModelError, TrainingDivergedError
from .weight_seed import SeedWeights, seed_from_file, seed_to_dict

HIDDEN_SIZES = (12, 10, 8)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.01
    batch_size: int = 32
    rng_seed: int = 0
    init_mode: str = "random"
    seed_weights: SeedWeights | None = None
    l2: float = 1e-3
    jitter: float = 0.05
    seeded_strategy: str = "replicate"
    hidden_sizes: tuple[int, ...] = HIDDEN_SIZES

    def __post_init__(self):
        # epochs == 0 is allowed: it returns the initial weights untouched
        if self.epochs < 0:
            raise ModelError(f"epochs must be >= 0, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ModelError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ModelError(f"batch size must be >= 1, got {self.batch_size}")
        if self.init_mode not in ("random", "seeded"):
            raise ModelError(f"init_mode must be 'random' or 'seeded', got {self.init_mode!r}")
        if self.init_mode == "seeded" and self.seed_weights is None:
            raise ModelError("seeded initialisation needs seed weights")
        if not 0 <= self.jitter < 1:
            raise ModelError(f"jitter must lie in [0, 1), got {self.jitter}")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))

    def streams(self) -> tuple[np.random.Generator, np.random.Generator]:
        init_ss, shuffle_ss = np.random.SeedSequence(self.rng_seed).spawn(2)
        return np.random.default_rng(init_ss), np.random.default_rng(shuffle_ss)

    def to_dict(self) -> dict:
        d = {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "rng_seed": self.rng_seed,
            "init_mode": self.init_mode,
            "l2": self.l2,
            "jitter": self.jitter,
            "seeded_strategy": self.seeded_strategy,
            "hidden_sizes": list(self.hidden_sizes),
            "seed_weights": None if self.seed_weights is None else seed_to_dict(self.seed_weights),
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        sw = d.pop("seed_weights", None)
        if sw is not None:
            sw = SeedWeights(
                np.asarray(sw["values"], dtype=np.float64),
                sw.get("provenance", "unknown"),
                None if sw.get("features") is None else tuple(sw["features"]),
                bool(sw.get("degenerate", False)),
            )
        d["hidden_sizes"] = tuple(d.get("hidden_sizes", HIDDEN_SIZES))
        return cls(seed_weights=sw, **d)


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "Metrics":
        t = np.asarray(y_true).astype(bool)
        p = np.asarray(y_pred).astype(bool)
        return cls(
            int(np.sum(t & p)), int(np.sum(~t & p)), int(np.sum(t & ~p)), int(np.sum(~t & ~p))
        )


def _check_seed_arity(cfg: TrainConfig, n_features: int) -> np.ndarray | None:
    if cfg.init_mode != "seeded":
        return None
    s = cfg.seed_weights.values
    if s.size != n_features:
        raise ModelError(f"seed has {s.size} weights, data has {n_features} features")
    return s


def _check_arity(x: np.ndarray, n: int) -> None:
    if x.shape[-1] != n:
        raise ModelError(f"input has {x.shape[-1]} features, model expects {n}")


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


# -- linear SVM ------------------------------------------------------------

@dataclass(eq=False)
class LinearSVM:
    weights: np.ndarray
    bias: float = 0.0
    config: TrainConfig = field(default_factory=TrainConfig)

    @property
    def n_features(self) -> int:
        return self.weights.size

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        _check_arity(X, self.n_features)
        return X @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0).astype(np.int8)


def _signed(y) -> np.ndarray:
    return np.where(np.asarray(y) == 1, 1.0, -1.0)


def svm_objective(w, b, X, y, l2) -> float:
    """L2-regularised mean hinge loss; ``y`` holds 0/1 labels."""
    margins = _signed(y) * (X @ w + b)
    return 0.5 * l2 * float(w @ w) + float(np.maximum(0.0, 1.0 - margins).mean())


def svm_subgradient(w, b, X, y, l2) -> tuple[np.ndarray, float]:
    ys = _signed(y)
    active = ys * (X @ w + b) < 1.0
    n = X.shape[0]
    gw = l2 * w - (ys[active, None] * X[active]).sum(axis=0) / n
    gb = -ys[active].sum() / n
    return gw, float(gb)


def svm_init(cfg: TrainConfig, n_features: int) -> LinearSVM:
    seed = _check_seed_arity(cfg, n_features)
    if seed is not None:
        w = seed.copy()
    else:
        init_rng, _ = cfg.streams()
        bound = 1.0 / np.sqrt(n_features)
        w = init_rng.uniform(-bound, bound, size=n_features)
    return LinearSVM(w, 0.0, cfg)


def svm_train(data: Dataset, cfg: TrainConfig) -> LinearSVM:
    data.require_both_classes()
    model = svm_init(cfg, data.schema.n_features)
    _, shuffle_rng = cfg.streams()
    w, b = model.weights.copy(), 0.0
    X, y = data.X, data.y
    for epoch in range(cfg.epochs):
        for idx in _batches(len(data), cfg.batch_size, shuffle_rng):
            gw, gb = svm_subgradient(w, b, X[idx], y[idx], cfg.l2)
            w -= cfg.learning_rate * gw
            b -= cfg.learning_rate * gb
            if not (np.all(np.isfinite(w)) and np.isfinite(b)):
                raise TrainingDivergedError(f"SVM weights became non-finite in epoch {epoch}")
    return LinearSVM(w, b, cfg)


def svm_predict(m: LinearSVM, x) -> int | np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = m.predict(x)
    return int(out) if x.ndim == 1 else out


def svm_feature_importance(m: LinearSVM) -> np.ndarray:
    return m.weights.copy()


# -- feed-forward network --------------------------------------------------

def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


_ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(np.float64)),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
    "sigmoid": (sigmoid, lambda z: sigmoid(z) * (1.0 - sigmoid(z))),
}


@dataclass(eq=False)
class MLP:
    """Fully connected net. ``weights[l]`` has shape (fan_in, fan_out).

    ``hidden_activation`` / ``output_activation`` default to relu / sigmoid;
    setting both to "identity" turns the net into an affine map, which the
    attribution tests rely on.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "sigmoid"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ModelError("need one bias vector per weight matrix")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ModelError(f"layer {l}: weight {W.shape} and bias {b.shape} do not fit")
            if l and W.shape[0] != self.weights[l - 1].shape[1]:
                raise ModelError(f"layer {l} takes {W.shape[0]} inputs, previous emits {self.weights[l - 1].shape[1]}")
        if self.weights[-1].shape[1] != 1:
            raise ModelError("output layer must have a single unit")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(W.shape[1] for W in self.weights))

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_hidden_layers(self) -> int:
        return len(self.weights) - 1

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "MLP":
        return MLP([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                   self.hidden_activation, self.output_activation)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())

    def forward_cache(self, X) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Pre-activations ``zs`` and activations ``acts`` (acts[0] is X)."""
        act, _ = _ACTIVATIONS[self.hidden_activation]
        out_act, _ = _ACTIVATIONS[self.output_activation]
        acts, zs = [X], []
        a = X
        last = len(self.weights) - 1
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            zs.append(z)
            a = out_act(z) if l == last else act(z)
            acts.append(a)
        return zs, acts

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        _check_arity(X, self.n_features)
        return self.forward_cache(X)[1][-1][:, 0]

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int8)


def _replicate_seed(seed: np.ndarray, fan_out: int, rng: np.random.Generator, jitter: float) -> np.ndarray:
    eps = rng.uniform(-jitter, jitter, size=(seed.size, fan_out)) if jitter > 0 else np.zeros((seed.size, fan_out))
    return seed[:, None] * (1.0 + eps)


# name -> f(seed, fan_out, rng, jitter) returning the (F, fan_out) first-layer matrix
SEEDED_INIT_STRATEGIES: dict[str, Callable] = {"replicate": _replicate_seed}


def mlp_init(cfg: TrainConfig, schema: FeatureSchema | int) -> MLP:
    n_in = schema if isinstance(schema, int) else schema.n_features
    seed = _check_seed_arity(cfg, n_in)
    init_rng, _ = cfg.streams()
    sizes = (n_in, *cfg.hidden_sizes, 1)
    weights, biases = [], []
    for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        W = init_rng.uniform(-bound, bound, size=(fan_in, fan_out))
        if l == 0 and seed is not None:
            try:
                strategy = SEEDED_INIT_STRATEGIES[cfg.seeded_strategy]
            except KeyError:
                raise ModelError(f"unknown seeded strategy {cfg.seeded_strategy!r}") from None
            W = strategy(seed, fan_out, init_rng, cfg.jitter)
        weights.append(W)
        biases.append(np.zeros(fan_out))
    return MLP(weights, biases)


def mlp_forward(m: MLP, x) -> float | np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ModelError("input contains non-finite values")
    p = m.predict_proba(x)
    return float(p[0]) if x.ndim == 1 else p


def mlp_logit(m: MLP, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return m.forward_cache(X)[0][-1][:, 0]


def bce_loss(m: MLP, X, y) -> float:
    """Mean binary cross-entropy computed from logits for stability."""
    z = mlp_logit(m, X)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def backprop_gradients(m: MLP, X, y) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact gradients of the mean BCE w.r.t. every weight matrix and bias.

    ``y`` may hold soft targets in [0, 1]. The output unit must be sigmoid.
    """
    if m.output_activation != "sigmoid":
        raise ModelError("cross-entropy gradients need a sigmoid output")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = X.shape[0]
    if n == 0:
        raise ModelError("empty batch")
    _, dact = _ACTIVATIONS[m.hidden_activation]
    zs, acts = m.forward_cache(X)
    delta = (acts[-1][:, 0] - y)[:, None] / n
    gW = [None] * len(m.weights)
    gb = [None] * len(m.weights)
    for l in range(len(m.weights) - 1, -1, -1):
        gW[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ m.weights[l].T) * dact(zs[l - 1])
    return gW, gb


def mlp_train(data: Dataset, cfg: TrainConfig, history: list | None = None) -> MLP:
    """Mini-batch SGD on mean BCE. Appends per-epoch training loss to
    ``history`` when given."""
    data.require_both_classes()
    m = mlp_init(cfg, data.schema)
    _, shuffle_rng = cfg.streams()
    X, y = data.X, data.y.astype(np.float64)
    for epoch in range(cfg.epochs):
        for idx in _batches(len(data), cfg.batch_size, shuffle_rng):
            gW, gb = backprop_gradients(m, X[idx], y[idx])
            for l in range(len(m.weights)):
                m.weights[l] -= cfg.learning_rate * gW[l]
                m.biases[l] -= cfg.learning_rate * gb[l]
        if not m.all_finite():
            raise TrainingDivergedError(
                f"parameters became non-finite in epoch {epoch} (lr={cfg.learning_rate})"
            )
        if history is not None:
            history.append(bce_loss(m, X, y))
    return m


def train(data: Dataset, cfg: TrainConfig, model: str = "mlp"):
    if model == "mlp":
        return mlp_train(data, cfg)
    if model == "svm":
        return svm_train(data, cfg)
    raise ModelError(f"unknown model kind {model!r}")


def evaluate(model, test: Dataset) -> Metrics:
    if len(test) == 0:
        raise ModelError("cannot evaluate on an empty set")
    return Metrics.from_predictions(test.y, model.predict(test.X))


# -- checkpoints -----------------------------------------------------------

def model_to_dict(model, cfg: TrainConfig | None = None, scaler: ScalerParams | None = None,
                  feature_names: Sequence[str] | None = None) -> dict:
    if isinstance(model, MLP):
        doc = {
            "kind": "mlp",
            "layer_sizes": list(model.layer_sizes),
            "hidden_activation": model.hidden_activation,
            "output_activation": model.output_activation,
            "weights": [W.tolist() for W in model.weights],
            "biases": [b.tolist() for b in model.biases],
        }
    elif isinstance(model, LinearSVM):
        cfg = cfg or model.config
        doc = {"kind": "svm", "weights": model.weights.tolist(), "bias": float(model.bias)}
    else:
        raise ModelError(f"cannot serialise {type(model).__name__}")
    doc["features"] = None if feature_names is None else list(feature_names)
    doc["config"] = None if cfg is None else cfg.to_dict()
    doc["scaler"] = None if scaler is None else scaler.to_dict()
    return doc


def model_from_dict(doc: dict):
    kind = doc.get("kind")
    if kind == "mlp":
        model = MLP(
            [np.asarray(W, dtype=np.float64).reshape(a, b)
             for W, a, b in zip(doc["weights"], doc["layer_sizes"][:-1], doc["layer_sizes"][1:])],
            [np.asarray(b, dtype=np.float64) for b in doc["biases"]],
            doc.get("hidden_activation", "relu"),
            doc.get("output_activation", "sigmoid"),
        )
    elif kind == "svm":
        cfg = TrainConfig.from_dict(doc["config"]) if doc.get("config") else TrainConfig()
        model = LinearSVM(np.asarray(doc["weights"], dtype=np.float64), float(doc["bias"]), cfg)
    else:
        raise ModelError(f"unknown checkpoint kind {kind!r}")
    return model


@dataclass
class Checkpoint:
    model: object
    config: TrainConfig | None
    scaler: ScalerParams | None
    feature_names: tuple[str, ...] | None


def save_checkpoint(path, model, cfg=None, scaler=None, feature_names=None) -> None:
    doc = model_to_dict(model, cfg, scaler, feature_names)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: malformed checkpoint ({exc})") from None
    return Checkpoint(
        model_from_dict(doc),
        TrainConfig.from_dict(doc["config"]) if doc.get("config") else None,
        ScalerParams.from_dict(doc["scaler"]) if doc.get("scaler") else None,
        None if doc.get("features") is None else tuple(doc["features"]),
    )


def seeded_config(cfg: TrainConfig, seed_path, feature_names=None) -> TrainConfig:
    return replace(cfg, init_mode="seeded", seed_weights=seed_from_file(seed_path, feature_names))
