"""Minimal feed-forward network engine built on numpy.

Covers everything the verification pipeline needs from a network: batched
forward evaluation with an optionally bounded output (``c * tanh``, which
confines every output component to ``[-c, c]`` by construction), supervised
training with analytic backpropagation and Adam updates, and a JSON weight
format whose floats round-trip exactly.

Dynamics models map ``[state; action]`` to a per-step state delta; the same
machinery fits policy networks mapping state to action.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

__all__ = [
    "ModelMeta",
    "MlpModel",
    "TransitionDataset",
    "TrainingConfig",
    "DynamicsTrainResult",
    "forward",
    "forward_batch",
    "loss_and_gradient",
    "fit_mlp",
    "train_dynamics_model",
    "prediction_error",
    "split_dataset",
    "save_model",
    "load_model",
    "save_dataset",
    "load_dataset",
]

_HIDDEN_ACTS = ("tanh", "sigmoid", "relu")
_OUTPUT_ACTS = ("tanh", "linear")


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "relu":
        return np.maximum(z, 0.0)
    raise ValueError(f"unknown activation {name!r}")


def _activate_deriv(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    # Derivative w.r.t. the preactivation z, given a = activate(z).
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "relu":
        return (z > 0.0).astype(float)
    raise ValueError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class ModelMeta:
    """Semantic layout of a model's input/output vectors."""

    n_state: int
    n_action: int
    dt_env: float
    role: str = "dynamics"
    action_lo: tuple | None = None
    action_hi: tuple | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["action_lo"] = None if self.action_lo is None else list(self.action_lo)
        d["action_hi"] = None if self.action_hi is None else list(self.action_hi)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelMeta":
        return ModelMeta(
            n_state=int(d["n_state"]),
            n_action=int(d["n_action"]),
            dt_env=float(d["dt_env"]),
            role=str(d.get("role", "dynamics")),
            action_lo=None if d.get("action_lo") is None else tuple(d["action_lo"]),
            action_hi=None if d.get("action_hi") is None else tuple(d["action_hi"]),
        )


@dataclass(frozen=True)
class MlpModel:
    """Layered feed-forward network with a bounded or linear output head.

    ``weights[i]`` has shape ``(layer_sizes[i], layer_sizes[i+1])``; the
    forward pass is ``h @ W + b``.  With a ``tanh`` output head the result
    is ``output_scale * tanh(z)``, so each output component lies in
    ``[-output_scale_i, output_scale_i]`` for any input.
    """

    layer_sizes: tuple
    weights: tuple
    biases: tuple
    hidden_activation: str
    output_activation: str
    output_scale: np.ndarray
    meta: ModelMeta

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"invalid layer sizes {sizes}")
        if self.hidden_activation not in _HIDDEN_ACTS:
            raise ValueError(f"hidden activation must be one of {_HIDDEN_ACTS}")
        if self.output_activation not in _OUTPUT_ACTS:
            raise ValueError(f"output activation must be one of {_OUTPUT_ACTS}")
        weights = tuple(np.asarray(w, dtype=float) for w in self.weights)
        biases = tuple(np.asarray(b, dtype=float) for b in self.biases)
        if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
            raise ValueError("number of weight/bias arrays does not match layer sizes")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (sizes[i], sizes[i + 1]):
                raise ValueError(
                    f"weight {i} has shape {w.shape}, expected {(sizes[i], sizes[i + 1])}"
                )
            if b.shape != (sizes[i + 1],):
                raise ValueError(f"bias {i} has shape {b.shape}, expected ({sizes[i + 1]},)")
        scale = np.asarray(self.output_scale, dtype=float)
        if scale.shape == ():
            scale = np.full(sizes[-1], float(scale))
        if scale.shape != (sizes[-1],):
            raise ValueError(f"output_scale must have {sizes[-1]} entries")
        if not np.all(np.isfinite(scale)) or np.any(scale <= 0):
            raise ValueError("output_scale must be finite and positive")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "output_scale", scale)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]


def forward_batch(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    """Evaluate the network on a batch of rows; no input validation."""
    h = inputs
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        if i < last:
            h = _activate(model.hidden_activation, z)
        elif model.output_activation == "tanh":
            h = model.output_scale * np.tanh(z)
        else:
            h = z
    return h


def forward(model: MlpModel, input_vector) -> np.ndarray:
    """Evaluate the network on a single input vector.

    Rejects wrongly sized or non-finite inputs.
    """
    x = np.asarray(input_vector, dtype=float)
    if x.shape != (model.n_inputs,):
        raise ValueError(f"expected input of shape ({model.n_inputs},), got {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite values")
    return forward_batch(model, x[None, :])[0]


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionDataset:
    """Observed transition tuples ``(state, action, state delta)``."""

    states: np.ndarray
    actions: np.ndarray
    deltas: np.ndarray
    split: str | None = None

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        a = np.asarray(self.actions, dtype=float)
        d = np.asarray(self.deltas, dtype=float)
        if s.ndim != 2 or a.ndim != 2 or d.ndim != 2:
            raise ValueError("states, actions and deltas must be 2-D arrays")
        if not (len(s) == len(a) == len(d)):
            raise ValueError("states, actions and deltas must have equal length")
        if len(s) == 0:
            raise ValueError("dataset must be nonempty")
        if s.shape[1] != d.shape[1]:
            raise ValueError("state and delta dimensions differ")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)
        object.__setattr__(self, "deltas", d)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def n_state(self) -> int:
        return self.states.shape[1]

    @property
    def n_action(self) -> int:
        return self.actions.shape[1]

    @staticmethod
    def from_tuples(tuples, split: str | None = None) -> "TransitionDataset":
        states, actions, deltas = zip(*tuples)
        return TransitionDataset(
            np.asarray(states, dtype=float),
            np.asarray(actions, dtype=float),
            np.asarray(deltas, dtype=float),
            split=split,
        )

    def inputs(self) -> np.ndarray:
        return np.hstack([self.states, self.actions])


def split_dataset(
    data: TransitionDataset, val_fraction: float = 0.2, seed: int = 0
) -> tuple[TransitionDataset, TransitionDataset]:
    """Uniform random train/validation split, seeded."""
    rng = np.random.default_rng(seed)
    n = len(data)
    n_val = max(1, int(round(val_fraction * n)))
    if n_val >= n:
        raise ValueError("dataset too small to split")
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    train = TransitionDataset(
        data.states[train_idx], data.actions[train_idx], data.deltas[train_idx], split="train"
    )
    val = TransitionDataset(
        data.states[val_idx], data.actions[val_idx], data.deltas[val_idx], split="validation"
    )
    return train, val


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainingConfig:
    hidden_sizes: tuple = (32, 32)
    hidden_activation: str = "tanh"
    output_activation: str = "tanh"
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 500
    seed: int = 0
    scale_margin: float = 1.5
    val_fraction: float = 0.2
    lr_schedule: str = "constant"  # or "cosine", annealing to 1% of the base rate

    def __post_init__(self):
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError("lr_schedule must be 'constant' or 'cosine'")


def _init_params(sizes, rng):
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward_cached(weights, biases, hidden_act, output_act, scale, X):
    acts = [X]
    pre = []
    last = len(weights) - 1
    h = X
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = _activate(hidden_act, z)
        elif output_act == "tanh":
            h = scale * np.tanh(z)
        else:
            h = z
        acts.append(h)
    return acts, pre


def _loss_and_grads(weights, biases, hidden_act, output_act, scale, X, Y):
    """Mean over rows of the squared error norm, plus parameter gradients."""
    n = len(X)
    acts, pre = _forward_cached(weights, biases, hidden_act, output_act, scale, X)
    pred = acts[-1]
    err = pred - Y
    loss = float(np.mean(np.sum(err * err, axis=1)))

    grad = 2.0 * err / n
    if output_act == "tanh":
        t = np.tanh(pre[-1])
        delta = grad * scale * (1.0 - t * t)
    else:
        delta = grad

    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * _activate_deriv(hidden_act, pre[i - 1], acts[i])
    return loss, grads_w, grads_b


def loss_and_gradient(model: MlpModel, X: np.ndarray, Y: np.ndarray):
    """Training loss and analytic parameter gradients for the given batch."""
    return _loss_and_grads(
        list(model.weights),
        list(model.biases),
        model.hidden_activation,
        model.output_activation,
        model.output_scale,
        np.asarray(X, dtype=float),
        np.asarray(Y, dtype=float),
    )


def fit_mlp(
    X: np.ndarray,
    Y: np.ndarray,
    config: TrainingConfig,
    output_scale,
    meta: ModelMeta,
) -> tuple[MlpModel, list[float]]:
    """Fit an MLP to ``(X, Y)`` with mini-batch Adam.

    Returns the trained model and the full-dataset loss recorded after each
    epoch.  Aborts with ``RuntimeError`` if the loss turns non-finite.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    sizes = (X.shape[1], *config.hidden_sizes, Y.shape[1])
    rng = np.random.default_rng(config.seed)
    weights, biases = _init_params(sizes, rng)
    scale = np.asarray(output_scale, dtype=float)
    if scale.shape == ():
        scale = np.full(Y.shape[1], float(scale))

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]

    losses: list[float] = []
    step = 0
    n = len(X)
    batch = min(config.batch_size, n)
    for epoch in range(config.epochs):
        if config.lr_schedule == "cosine":
            frac = epoch / max(1, config.epochs - 1)
            lr = config.learning_rate * (0.01 + 0.99 * 0.5 * (1 + np.cos(np.pi * frac)))
        else:
            lr = config.learning_rate
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            loss, gw, gb = _loss_and_grads(
                weights, biases, config.hidden_activation, config.output_activation,
                scale, X[idx], Y[idx],
            )
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch}, step {step}"
                )
            batch_losses.append(loss)
            step += 1
            corr1 = 1.0 - beta1 ** step
            corr2 = 1.0 - beta2 ** step
            for i in range(len(weights)):
                m_w[i] = beta1 * m_w[i] + (1 - beta1) * gw[i]
                v_w[i] = beta2 * v_w[i] + (1 - beta2) * gw[i] ** 2
                m_b[i] = beta1 * m_b[i] + (1 - beta1) * gb[i]
                v_b[i] = beta2 * v_b[i] + (1 - beta2) * gb[i] ** 2
                weights[i] -= lr * (m_w[i] / corr1) / (np.sqrt(v_w[i] / corr2) + eps)
                biases[i] -= lr * (m_b[i] / corr1) / (np.sqrt(v_b[i] / corr2) + eps)
        losses.append(float(np.mean(batch_losses)))

    model = MlpModel(
        layer_sizes=sizes,
        weights=tuple(weights),
        biases=tuple(biases),
        hidden_activation=config.hidden_activation,
        output_activation=config.output_activation,
        output_scale=scale,
        meta=meta,
    )
    return model, losses


@dataclass(frozen=True)
class DynamicsTrainResult:
    model: MlpModel
    train: TransitionDataset
    validation: TransitionDataset
    epoch_losses: list
    validation_error: float
    baseline_error: float


def prediction_error(model: MlpModel, data: TransitionDataset) -> float:
    """Mean squared-norm prediction error of the model on a dataset."""
    pred = forward_batch(model, data.inputs())
    return float(np.mean(np.sum((pred - data.deltas) ** 2, axis=1)))


def train_dynamics_model(
    data: TransitionDataset, config: TrainingConfig, dt_env: float = 1.0
) -> DynamicsTrainResult:
    """Fit a state-delta prediction model on a seeded 80/20 split.

    The output head is ``tanh`` scaled per dimension to
    ``scale_margin * max |delta|`` seen in the training split, which bounds
    predictions without clipping the data.
    """
    train, val = split_dataset(data, config.val_fraction, config.seed)
    scale = np.maximum(
        config.scale_margin * np.max(np.abs(train.deltas), axis=0), 1e-6
    )
    if config.output_activation == "linear":
        scale = np.ones(train.n_state)
    meta = ModelMeta(n_state=train.n_state, n_action=train.n_action, dt_env=dt_env)
    model, losses = fit_mlp(train.inputs(), train.deltas, config, scale, meta)
    val_err = prediction_error(model, val)
    baseline = float(np.mean(np.sum(val.deltas ** 2, axis=1)))
    return DynamicsTrainResult(
        model=model,
        train=train,
        validation=val,
        epoch_losses=losses,
        validation_error=val_err,
        baseline_error=baseline,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_model(model: MlpModel, path) -> None:
    """Write the model as JSON; floats use shortest exact decimal form."""
    doc = {
        "layer_sizes": list(model.layer_sizes),
        "hidden_activation": model.hidden_activation,
        "output_activation": model.output_activation,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "output_scale": model.output_scale.tolist(),
        "meta": model.meta.to_dict(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> MlpModel:
    """Load a model written by :func:`save_model`; ``load(save(m))`` is exact.

    Raises ``ValueError`` for malformed files or weight shapes that do not
    chain with the declared layer sizes.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
        return MlpModel(
            layer_sizes=tuple(doc["layer_sizes"]),
            weights=tuple(np.asarray(w, dtype=float) for w in doc["weights"]),
            biases=tuple(np.asarray(b, dtype=float) for b in doc["biases"]),
            hidden_activation=doc["hidden_activation"],
            output_activation=doc["output_activation"],
            output_scale=np.asarray(doc["output_scale"], dtype=float),
            meta=ModelMeta.from_dict(doc["meta"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValueError(f"malformed model file {path}: {exc}") from exc


def save_dataset(data: TransitionDataset, path) -> None:
    n, m = data.n_state, data.n_action
    header = (
        [f"s{i}" for i in range(n)]
        + [f"a{i}" for i in range(m)]
        + [f"ds{i}" for i in range(n)]
    )
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for s, a, d in zip(data.states, data.actions, data.deltas):
            row = [repr(float(v)) for v in (*s, *a, *d)]
            fh.write(",".join(row) + "\n")


def load_dataset(path, n_state: int, n_action: int) -> TransitionDataset:
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if raw.shape[1] != 2 * n_state + n_action:
        raise ValueError(
            f"dataset file has {raw.shape[1]} columns, expected {2 * n_state + n_action}"
        )
    return TransitionDataset(
        raw[:, :n_state],
        raw[:, n_state : n_state + n_action],
        raw[:, n_state + n_action :],
    )
