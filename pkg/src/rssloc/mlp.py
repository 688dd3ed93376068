"""Fully connected regression network in plain numpy.

ELU hidden layers, linear 2-D output (x, y), half-squared-error loss with an
L2 penalty on every weight and bias, Adam, Xavier-uniform initialisation and
mini-batch training with patience-based early stopping.

Layer ``l`` computes ``a_l = act(a_{l-1} @ W_l + b_l)`` with ``W_l`` shaped
(fan_in, fan_out); rows of the input matrix are samples.
"""
from __future__ import annotations

import base64
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, NormStats, apply_norm, compute_norm_stats

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MlpArch:
    input_dim: int
    hidden_layers: int = 3
    hidden_units: int = 128
    output_dim: int = 2
    elu_alpha: float = 1.0

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1 or self.hidden_units < 1:
            raise ValueError("layer widths must be >= 1")
        if self.hidden_layers < 0:
            raise ValueError("hidden_layers must be >= 0")

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [self.hidden_units] * self.hidden_layers + [self.output_dim]


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 40
    max_epochs: int = 2000
    patience: int = 100
    lam: float = 0.01
    learning_rate: float = 1e-4
    validation_fraction: float = 0.2
    seed: int = 0
    restore_best: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")
        if self.lam < 0 or not self.learning_rate > 0:
            raise ValueError("lam must be >= 0 and learning_rate > 0")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(eq=False)
class MlpModel:
    arch: MlpArch
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    norm: NormStats

    def __post_init__(self):
        sizes = self.arch.sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("layer count does not match architecture")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l}: bad parameter shapes {w.shape}, {b.shape}")
        if len(self.norm.mean) != self.arch.input_dim:
            raise ValueError("normalisation stats do not match input_dim")

    @property
    def params(self) -> list[np.ndarray]:
        """Parameters in layer order: W_1, b_1, W_2, b_2, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_params(cls, arch: MlpArch, params, norm: NormStats) -> "MlpModel":
        return cls(arch, list(params[0::2]), list(params[1::2]), norm)

    def copy(self) -> "MlpModel":
        return MlpModel.from_params(self.arch, [p.copy() for p in self.params], self.norm)

    def __eq__(self, other):
        if not isinstance(other, MlpModel):
            return NotImplemented
        return (
            self.arch == other.arch
            and self.norm == other.norm
            and all(np.array_equal(a, b) for a, b in zip(self.params, other.params))
        )

    def predict(self, rss) -> np.ndarray:
        """Positions (x, y) for raw dBm input; applies the stored normalisation."""
        return forward(self, apply_norm(rss, self.norm))


def elu(x, alpha: float = 1.0):
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))
    return float(out) if out.ndim == 0 else out


def elu_grad(x, alpha: float = 1.0):
    # x == 0 takes the negative branch: alpha * e^0 = alpha
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, 1.0, alpha * np.exp(np.minimum(x, 0.0)))


def init_xavier(arch: MlpArch, rng: np.random.Generator, norm: NormStats | None = None) -> MlpModel:
    sizes = arch.sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(arch, weights, biases, norm or NormStats.identity(arch.input_dim))


def _forward_trace(model: MlpModel, x: np.ndarray):
    alpha = model.arch.elu_alpha
    acts, pre = [x], []
    a = x
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        a = z if l == last else elu(z, alpha)
        acts.append(a)
    return pre, acts


def forward(model: MlpModel, x) -> np.ndarray:
    """Network output for normalised input ``x`` (one vector or a batch of rows)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.shape[1] != model.arch.input_dim:
        raise ValueError(f"input has {xb.shape[1]} features, model expects {model.arch.input_dim}")
    out = _forward_trace(model, xb)[1][-1]
    return out[0] if single else out


def mse(pred, target) -> float:
    """Mean over samples of half the squared coordinate error."""
    diff = np.asarray(pred) - np.asarray(target)
    return 0.5 * float(np.sum(diff * diff)) / diff.shape[0]


def l2_sum(model: MlpModel) -> float:
    return sum(float(np.sum(p * p)) for p in model.params)


def loss(model: MlpModel, x, u, lam: float = 0.0) -> float:
    """Batch objective: mse + lam / (2m) * (sum of squared weights and biases)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    m = x.shape[0]
    value = mse(forward(model, x), u)
    if lam:
        value += lam / (2 * m) * l2_sum(model)
    return value


def backward(model: MlpModel, x, u, lam: float = 0.0) -> list[np.ndarray]:
    """Gradients of :func:`loss`, ordered like ``model.params``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    m = x.shape[0]
    alpha = model.arch.elu_alpha
    pre, acts = _forward_trace(model, x)
    delta = (acts[-1] - u) / m
    n_layers = len(model.weights)
    grads: list[np.ndarray] = [None] * (2 * n_layers)
    for l in range(n_layers - 1, -1, -1):
        w = model.weights[l]
        gw = acts[l].T @ delta
        gb = delta.sum(axis=0)
        if lam:
            gw = gw + (lam / m) * w
            gb = gb + (lam / m) * model.biases[l]
        grads[2 * l], grads[2 * l + 1] = gw, gb
        if l > 0:
            delta = (delta @ w.T) * elu_grad(pre[l - 1], alpha)
    return grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)

    def copy(self) -> "AdamState":
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v],
                         self.step, self.beta1, self.beta2, self.eps)


def _adam_update(params, grads, state: AdamState, lr: float) -> None:
    # in place on params and state
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def adam_step(state: AdamState, model: MlpModel, grads, lr: float) -> tuple[MlpModel, AdamState]:
    """One bias-corrected Adam update; returns new model and state, inputs untouched."""
    new_model = model.copy()
    new_state = state.copy()
    _adam_update(new_model.params, grads, new_state, lr)
    return new_model, new_state


@dataclass
class TrainLog:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    initial_train_loss: float = math.nan
    initial_val_loss: float = math.nan

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def to_dict(self) -> dict:
        return asdict(self)


def train(
    train_data: Dataset,
    config: TrainConfig = TrainConfig(),
    arch: MlpArch | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[MlpModel, TrainLog]:
    """Fit a position regressor to ``train_data``.

    A seeded shuffle holds out ``validation_fraction`` of the samples. Input
    normalisation statistics come from the remaining fitting portion. The log
    records, after every epoch, the half-squared-error (no L2 term) on both
    portions; training stops once the validation value has not improved for
    ``patience`` epochs, and the best-validation weights are returned unless
    ``config.restore_best`` is false.
    """
    n = len(train_data)
    if n < config.batch_size or n < 2:
        raise ValueError(f"need at least batch_size={config.batch_size} samples, got {n}")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    arch = arch or MlpArch(input_dim=train_data.scenario.n_su)
    if arch.input_dim != train_data.scenario.n_su:
        raise ValueError("arch.input_dim must equal the number of sensing units")

    perm = rng.permutation(n)
    n_val = max(1, int(round(config.validation_fraction * n)))
    n_fit = n - n_val
    if n_fit < 1:
        raise ValueError("validation split leaves no fitting samples")
    fit_idx, val_idx = perm[:n_fit], perm[n_fit:]

    targets = train_data.positions[:, : arch.output_dim]
    norm = compute_norm_stats(train_data.rss[fit_idx])
    x_fit = apply_norm(train_data.rss[fit_idx], norm)
    u_fit = targets[fit_idx]
    x_val = apply_norm(train_data.rss[val_idx], norm)
    u_val = targets[val_idx]

    model = init_xavier(arch, rng, norm)
    params = model.params
    state = AdamState.zeros_like(params)
    history = TrainLog(
        initial_train_loss=mse(forward(model, x_fit), u_fit),
        initial_val_loss=mse(forward(model, x_val), u_val),
    )
    best_val = math.inf
    best_params = [p.copy() for p in params]
    wait = 0
    bs = config.batch_size
    for epoch in range(config.max_epochs):
        order = rng.permutation(n_fit)
        for start in range(0, n_fit, bs):
            idx = order[start:start + bs]
            grads = backward(model, x_fit[idx], u_fit[idx], config.lam)
            _adam_update(params, grads, state, config.learning_rate)
        tr = mse(forward(model, x_fit), u_fit)
        va = mse(forward(model, x_val), u_val)
        history.train_loss.append(tr)
        history.val_loss.append(va)
        if va < best_val:
            best_val = va
            best_params = [p.copy() for p in params]
            history.best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                log.info("early stop at epoch %d (best %d)", epoch, history.best_epoch)
                break
        if epoch % 100 == 0:
            log.debug("epoch %d train %.4f val %.4f", epoch, tr, va)
    if config.restore_best:
        model = MlpModel.from_params(arch, best_params, norm)
    return model, history


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").astype(float).reshape(d["shape"])


def model_to_dict(model: MlpModel) -> dict:
    return {
        "format": "rssloc-mlp/1",
        "arch": asdict(model.arch),
        "norm": {"mean": _encode(model.norm.mean), "std": _encode(model.norm.std)},
        "layers": [{"W": _encode(w), "b": _encode(b)} for w, b in zip(model.weights, model.biases)],
    }


def model_from_dict(d: dict) -> MlpModel:
    try:
        arch = MlpArch(**d["arch"])
        norm = NormStats(_decode(d["norm"]["mean"]), _decode(d["norm"]["std"]))
        weights = [_decode(layer["W"]) for layer in d["layers"]]
        biases = [_decode(layer["b"]) for layer in d["layers"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed model file: {exc}") from exc
    return MlpModel(arch, weights, biases, norm)


def save_model(model: MlpModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> MlpModel:
    return model_from_dict(json.loads(Path(path).read_text()))
