"""Two-head classifier: shared one-hidden-layer extractor plus one softmax
head per supervision level.

Training is plain numpy: cross-entropy loss, analytic gradients, Adam
updates (beta1=0.9, beta2=0.999, eps=1e-8). All randomness flows through an
explicit ``np.random.Generator`` so identical (seed, data, config) gives
bitwise-identical parameters.

Checkpoint container (little-endian, used for debugging/replay):
    magic   b"THMC"
    u32     format version (currently 1)
    u32     tensor count
  then per tensor:
    u16     name length, followed by utf-8 name
    u16     dtype length, followed by ascii dtype string (e.g. "<f8")
    u8      ndim, followed by ndim * u64 dimension sizes
    raw tensor bytes in C order
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .datamodel import FULL, WEAK
from .errors import ConfigError, EvaluationError, ShapeError, TrainingError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_MAGIC = b"THMC"
CHECKPOINT_VERSION = 1

PARAM_NAMES = ("w_hidden", "b_hidden", "w_full", "b_full", "w_weak", "b_weak")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs_per_stage: int = 40
    batch_size: int = 32
    hidden_dim: int = 64
    init_seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs_per_stage <= 0 or self.batch_size <= 0 or self.hidden_dim <= 0:
            raise ConfigError("epochs, batch size and hidden dim must be positive")


@dataclass
class TwoHeadModel:
    """Parameter container; treated as immutable once training returns."""

    w_hidden: np.ndarray  # (d, h)
    b_hidden: np.ndarray  # (h,)
    w_full: np.ndarray    # (h, C)
    b_full: np.ndarray    # (C,)
    w_weak: np.ndarray    # (h, S)
    b_weak: np.ndarray    # (S,)

    @property
    def input_dim(self) -> int:
        return self.w_hidden.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w_hidden.shape[1]

    @property
    def num_classes(self) -> int:
        return self.w_full.shape[1]

    @property
    def num_superclasses(self) -> int:
        return self.w_weak.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def head(self, level: str) -> tuple[np.ndarray, np.ndarray]:
        if level == FULL:
            return self.w_full, self.b_full
        if level == WEAK:
            return self.w_weak, self.b_weak
        raise ConfigError(f"unknown supervision level {level!r}")


def initialize_model(
    dim: int, num_classes: int, num_superclasses: int,
    cfg: TrainConfig, rng: np.random.Generator,
) -> TwoHeadModel:
    """Fresh parameters: He-scaled hidden layer, 1/sqrt(h) heads, zero biases."""
    h = cfg.hidden_dim
    return TwoHeadModel(
        w_hidden=rng.normal(0.0, np.sqrt(2.0 / dim), size=(dim, h)),
        b_hidden=np.zeros(h),
        w_full=rng.normal(0.0, np.sqrt(1.0 / h), size=(h, num_classes)),
        b_full=np.zeros(num_classes),
        w_weak=rng.normal(0.0, np.sqrt(1.0 / h), size=(h, num_superclasses)),
        b_weak=np.zeros(num_superclasses),
    )


def _check_input(model: TwoHeadModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim not in (1, 2) or x.shape[-1] != model.input_dim:
        raise ShapeError(
            f"expected feature dimension {model.input_dim}, got shape {x.shape}"
        )
    return x


def _hidden(model: TwoHeadModel, x: np.ndarray) -> np.ndarray:
    return np.maximum(x @ model.w_hidden + model.b_hidden, 0.0)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _predict(model: TwoHeadModel, x: np.ndarray, level: str) -> np.ndarray:
    x = _check_input(model, x)
    w, b = model.head(level)
    return _softmax(_hidden(model, x) @ w + b)


def predict_full(model: TwoHeadModel, x: np.ndarray) -> np.ndarray:
    """Exact-class probabilities; accepts one vector or a (n, d) batch."""
    return _predict(model, x, FULL)


def predict_weak(model: TwoHeadModel, x: np.ndarray) -> np.ndarray:
    """Superclass probabilities; accepts one vector or a (n, d) batch."""
    return _predict(model, x, WEAK)


def embed(model: TwoHeadModel, x: np.ndarray) -> np.ndarray:
    """Unit-norm hidden representation of ``x``.

    A zero hidden vector (all ReLUs off) is mapped to the first standard
    basis vector so the output is always exactly unit length.
    """
    x = _check_input(model, x)
    single = x.ndim == 1
    a = _hidden(model, np.atleast_2d(x))
    norms = np.linalg.norm(a, axis=1)
    out = np.zeros_like(a)
    nonzero = norms > 0.0
    out[nonzero] = a[nonzero] / norms[nonzero, None]
    out[~nonzero, 0] = 1.0
    return out[0] if single else out


def loss_and_grads(
    model: TwoHeadModel, x: np.ndarray, y: np.ndarray, level: str
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy of the ``level`` head and its analytic gradients.

    Gradients cover the extractor and the selected head only; the other
    head's entries are omitted from the returned dict.
    """
    x = _check_input(model, np.atleast_2d(x))
    y = np.asarray(y, dtype=int)
    n = x.shape[0]
    w, b = model.head(level)

    z1 = x @ model.w_hidden + model.b_hidden
    a1 = np.maximum(z1, 0.0)
    logits = a1 @ w + b
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(n), y].mean())

    # d loss / d logits = (softmax - onehot) / n
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dw_head = a1.T @ dlogits
    db_head = dlogits.sum(axis=0)
    da1 = dlogits @ w.T
    dz1 = da1 * (z1 > 0.0)
    grads = {
        "w_hidden": x.T @ dz1,
        "b_hidden": dz1.sum(axis=0),
    }
    if level == FULL:
        grads["w_full"], grads["b_full"] = dw_head, db_head
    else:
        grads["w_weak"], grads["b_weak"] = dw_head, db_head
    return loss, grads


class _Adam:
    """Per-tensor Adam state, fresh for each training stage."""

    def __init__(self, names, lr: float):
        self.lr = lr
        self.t = 0
        self.m = {k: None for k in names}
        self.v = {k: None for k in names}

    def step(self, model: TwoHeadModel, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1 ** self.t
        bc2 = 1.0 - ADAM_BETA2 ** self.t
        for name, g in grads.items():
            if self.m[name] is None:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = ADAM_BETA1 * self.m[name] + (1.0 - ADAM_BETA1) * g
            self.v[name] = ADAM_BETA2 * self.v[name] + (1.0 - ADAM_BETA2) * g * g
            update = (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + ADAM_EPS)
            getattr(model, name)[...] -= self.lr * update


def train_stage(
    model: TwoHeadModel,
    x: np.ndarray,
    y: np.ndarray,
    level: str,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> list[float]:
    """Run one training stage in place; returns mean per-epoch loss."""
    n = x.shape[0]
    optimizer = _Adam(
        ("w_hidden", "b_hidden") + (("w_full", "b_full") if level == FULL else ("w_weak", "b_weak")),
        cfg.learning_rate,
    )
    epoch_losses = []
    for _ in range(cfg.epochs_per_stage):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(model, x[batch], y[batch], level)
            optimizer.step(model, grads)
            batch_losses.append(loss)
        epoch_losses.append(float(np.mean(batch_losses)))
    return epoch_losses


def train_two_stage(
    cfg: TrainConfig,
    full_data: tuple[np.ndarray, np.ndarray],
    weak_data: tuple[np.ndarray, np.ndarray],
    num_classes: int,
    num_superclasses: int,
    rng: np.random.Generator | None = None,
    loss_history: dict[str, list[float]] | None = None,
) -> TwoHeadModel:
    """Train a fresh model: superclass stage first, exact-class stage second.

    Stage 1 fits the extractor and the weak head on ``weak_data``
    (skipped entirely when empty, consuming no randomness); stage 2 fits
    the extractor and the full head on ``full_data``. When ``rng`` is
    omitted a generator seeded with ``cfg.init_seed`` is used.
    """
    full_x, full_y = full_data
    weak_x, weak_y = weak_data
    if full_x.shape[0] == 0:
        raise TrainingError("full supervision set is empty; the exact-class head is undefined")
    if rng is None:
        rng = np.random.default_rng(cfg.init_seed)
    model = initialize_model(full_x.shape[1], num_classes, num_superclasses, cfg, rng)
    if weak_x.shape[0] > 0:
        weak_losses = train_stage(model, weak_x, weak_y, WEAK, cfg, rng)
        if loss_history is not None:
            loss_history[WEAK] = weak_losses
    full_losses = train_stage(model, full_x, full_y, FULL, cfg, rng)
    if loss_history is not None:
        loss_history[FULL] = full_losses
    return model


def evaluate_accuracy(
    model: TwoHeadModel, data: tuple[np.ndarray, np.ndarray], level: str
) -> float:
    """Argmax accuracy of the chosen head; ties resolve to the lowest index."""
    x, y = data
    if x.shape[0] == 0:
        raise EvaluationError("cannot evaluate accuracy on an empty dataset")
    probs = _predict(model, x, level)
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(y, dtype=int)))


def save_checkpoint(model: TwoHeadModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(PARAM_NAMES)))
        for name in PARAM_NAMES:
            tensor = np.ascontiguousarray(getattr(model, name))
            name_b = name.encode()
            dtype_b = tensor.dtype.str.encode()
            fh.write(struct.pack("<H", len(name_b)) + name_b)
            fh.write(struct.pack("<H", len(dtype_b)) + dtype_b)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
            fh.write(tensor.tobytes())


def load_checkpoint(path) -> TwoHeadModel:
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ConfigError(f"{path}: not a model checkpoint")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {version}")
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode()
            (dtype_len,) = struct.unpack("<H", fh.read(2))
            dtype = np.dtype(fh.read(dtype_len).decode())
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            data = fh.read(dtype.itemsize * int(np.prod(shape, dtype=np.int64)))
            tensors[name] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
    missing = set(PARAM_NAMES) - set(tensors)
    if missing:
        raise ConfigError(f"{path}: checkpoint missing tensors {sorted(missing)}")
    return TwoHeadModel(**{name: tensors[name] for name in PARAM_NAMES})
