"""MLP regression head trained with AdamW, identical for every embedder.

The architecture is fixed at two ReLU hidden layers; only the input width
varies with the feature representation. Training normalizes targets with
train-split statistics, sweeps a learning-rate x weight-decay grid, applies
validation-based early stopping, and restores the best weights seen. All of it
runs in float64 and is deterministic given the config seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .embedders import EmbeddingMatrix
from .metrics import MetricBundle, bundle

HIDDEN_WIDTH = 256
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
FULL_BATCH_MAX = 1024

_PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


class TrainingDivergedError(RuntimeError):
    """A gradient went non-finite during optimization."""


class TrainingFailedError(RuntimeError):
    """Every sweep cell diverged; carries the sweep table for inspection."""

    def __init__(self, message: str, sweep: list[dict]):
        super().__init__(message)
        self.sweep = sweep


def _as_array(features) -> np.ndarray:
    if isinstance(features, EmbeddingMatrix):
        return features.values
    return np.asarray(features, dtype=np.float64)


@dataclass
class MlpModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_NAMES}

    def copy_weights(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name).copy() for name in _PARAM_NAMES}

    def load_weights(self, weights: dict[str, np.ndarray]) -> None:
        for name in _PARAM_NAMES:
            setattr(self, name, weights[name].copy())


def init_model(input_dim: int, seed: int, hidden: int = HIDDEN_WIDTH) -> MlpModel:
    """He-style uniform init, seeded; biases start at zero."""
    rng = np.random.default_rng(seed)

    def he(fan_in: int, fan_out: int) -> np.ndarray:
        limit = np.sqrt(6.0 / fan_in)
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    return MlpModel(
        w1=he(input_dim, hidden),
        b1=np.zeros(hidden),
        w2=he(hidden, hidden),
        b2=np.zeros(hidden),
        w3=he(hidden, 1),
        b3=np.zeros(1),
    )


def forward(model: MlpModel, features) -> np.ndarray:
    x = _as_array(features)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(f"features must be (n, {model.input_dim}), got {x.shape}")
    h1 = np.maximum(x @ model.w1 + model.b1, 0.0)
    h2 = np.maximum(h1 @ model.w2 + model.b2, 0.0)
    return (h2 @ model.w3).ravel() + model.b3[0]


def loss_and_grad(model: MlpModel, features, targets) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error and its gradient by reverse accumulation.

    ReLU uses subgradient 0 at the kink.
    """
    x = _as_array(features)
    y = np.asarray(targets, dtype=np.float64)
    if x.shape[0] != y.size:
        raise ValueError(f"row count mismatch: {x.shape[0]} features vs {y.size} targets")
    z1 = x @ model.w1 + model.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ model.w2 + model.b2
    h2 = np.maximum(z2, 0.0)
    yhat = (h2 @ model.w3).ravel() + model.b3[0]

    n = y.size
    resid = yhat - y
    loss = float(resid @ resid) / n

    d_yhat = (2.0 / n) * resid  # (n,)
    d_h2 = np.outer(d_yhat, model.w3.ravel())
    d_z2 = d_h2 * (z2 > 0)
    d_h1 = d_z2 @ model.w2.T
    d_z1 = d_h1 * (z1 > 0)
    grads = {
        "w3": h2.T @ d_yhat[:, None],
        "b3": np.array([d_yhat.sum()]),
        "w2": h1.T @ d_z2,
        "b2": d_z2.sum(axis=0),
        "w1": x.T @ d_z1,
        "b1": d_z1.sum(axis=0),
    }
    return loss, grads


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, model: MlpModel) -> "AdamState":
        zeros = {k: np.zeros_like(p) for k, p in model.params().items()}
        return cls(m=zeros, v={k: z.copy() for k, z in zeros.items()}, step=0)


def adamw_step(
    model: MlpModel,
    grads: dict[str, np.ndarray],
    lr: float,
    weight_decay: float,
    state: AdamState,
) -> None:
    """One AdamW update in place: decoupled decay plus bias-corrected moments."""
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("non-finite gradient")
    state.step += 1
    t = state.step
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    for name, param in model.params().items():
        g = grads[name]
        state.m[name] = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        state.v[name] = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        param -= lr * weight_decay * param
        param -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


@dataclass(frozen=True)
class YNormalizer:
    """Affine target transform fit on the training split only."""

    mu: float
    sigma: float

    def normalize(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.mu) / self.sigma

    def denormalize(self, y_norm) -> np.ndarray:
        return np.asarray(y_norm, dtype=np.float64) * self.sigma + self.mu


def fit_normalizer(train_y) -> YNormalizer:
    y = np.asarray(train_y, dtype=np.float64)
    if y.size < 2:
        raise ValueError("need at least 2 target values")
    sigma = float(y.std())
    if sigma < 1e-12:
        sigma = 1.0  # constant targets: shift only
    return YNormalizer(mu=float(y.mean()), sigma=sigma)


@dataclass(frozen=True)
class TrainConfig:
    learning_rates: tuple[float, ...] = (1e-4, 5e-4, 1e-3, 5e-3, 1e-2)
    weight_decays: tuple[float, ...] = (0.0, 1e-1, 1.0)
    max_epochs: int = 300
    patience: int = 20
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rates or not self.weight_decays:
            raise ValueError("hyperparameter grids must be non-empty")
        if min(self.max_epochs, self.patience, self.batch_size) < 1:
            raise ValueError("max_epochs, patience and batch_size must be >= 1")

    @classmethod
    def from_overrides(cls, overrides: dict | None) -> "TrainConfig":
        overrides = dict(overrides or {})
        for key in ("learning_rates", "weight_decays"):
            if key in overrides:
                overrides[key] = tuple(overrides[key])
        return cls(**overrides)


@dataclass
class RegressionReport:
    sweep: list[dict]
    chosen_lr: float
    chosen_wd: float
    epochs_run: int
    metrics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def _seed_for_cell(seed: int, lr_idx: int, wd_idx: int) -> int:
    return (seed * 1_000_003 + lr_idx * 101 + wd_idx) % (2**31 - 1)


def _train_one_cell(
    x: np.ndarray,
    y_norm: np.ndarray,
    xv: np.ndarray,
    yv_norm: np.ndarray,
    lr: float,
    wd: float,
    cfg: TrainConfig,
    shuffle_seed: int,
) -> tuple[float, dict[str, np.ndarray] | None, int]:
    model = init_model(x.shape[1], seed=cfg.seed)
    state = AdamState.init(model)
    rng = np.random.default_rng(shuffle_seed)
    full_batch = x.shape[0] <= FULL_BATCH_MAX

    best_val = np.inf
    best_weights: dict[str, np.ndarray] | None = None
    best_epoch = 0
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        try:
            if full_batch:
                _, grads = loss_and_grad(model, x, y_norm)
                adamw_step(model, grads, lr, wd, state)
            else:
                order = rng.permutation(x.shape[0])
                for start in range(0, x.shape[0], cfg.batch_size):
                    idx = order[start : start + cfg.batch_size]
                    _, grads = loss_and_grad(model, x[idx], y_norm[idx])
                    adamw_step(model, grads, lr, wd, state)
        except TrainingDivergedError:
            return np.inf, None, epoch

        val_pred = forward(model, xv)
        val_mse = float(np.mean((val_pred - yv_norm) ** 2))
        if not np.isfinite(val_mse):
            return np.inf, None, epoch
        if val_mse < best_val:
            best_val = val_mse
            best_weights = model.copy_weights()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best_val, best_weights, best_epoch


def train(
    train_data: tuple,
    val_data: tuple,
    cfg: TrainConfig | None = None,
) -> tuple[MlpModel, YNormalizer, RegressionReport]:
    """Sweep the hyperparameter grid, early-stop each cell on validation MSE,
    and return the best cell's weights at its best epoch.

    ``train_data`` and ``val_data`` are (features, y) pairs; targets are
    normalized internally with train-split statistics. Deterministic given
    ``cfg.seed``: every cell starts from the same seeded init.
    """
    cfg = cfg or TrainConfig()
    x, y = _as_array(train_data[0]), np.asarray(train_data[1], dtype=np.float64)
    xv, yv = _as_array(val_data[0]), np.asarray(val_data[1], dtype=np.float64)
    if x.shape[0] == 0 or xv.shape[0] == 0:
        raise ValueError("train and validation sets must be non-empty")

    normalizer = fit_normalizer(y)
    y_norm = normalizer.normalize(y)
    yv_norm = normalizer.normalize(yv)

    sweep: list[dict] = []
    best = None  # (val_mse, weights, epochs, lr, wd)
    for i, lr in enumerate(cfg.learning_rates):
        for j, wd in enumerate(cfg.weight_decays):
            val_mse, weights, epochs = _train_one_cell(
                x, y_norm, xv, yv_norm, lr, wd, cfg, _seed_for_cell(cfg.seed, i, j)
            )
            sweep.append(
                {"lr": lr, "weight_decay": wd, "val_mse": float(val_mse), "epochs": epochs}
            )
            if weights is not None and (best is None or val_mse < best[0]):
                best = (val_mse, weights, epochs, lr, wd)

    if best is None:
        raise TrainingFailedError("every sweep cell diverged", sweep)

    model = init_model(x.shape[1], seed=cfg.seed)
    model.load_weights(best[1])
    report = RegressionReport(
        sweep=sweep, chosen_lr=best[3], chosen_wd=best[4], epochs_run=best[2]
    )
    return model, normalizer, report


def evaluate(model: MlpModel, normalizer: YNormalizer, features, y) -> MetricBundle:
    """Score denormalized predictions against raw targets."""
    preds = normalizer.denormalize(forward(model, features))
    return bundle(np.asarray(y, dtype=np.float64), preds)


def train_and_evaluate(
    train_data: tuple,
    val_data: tuple,
    test_data: tuple,
    cfg: TrainConfig | None = None,
) -> tuple[MlpModel, YNormalizer, RegressionReport]:
    model, normalizer, report = train(train_data, val_data, cfg)
    report.metrics = evaluate(model, normalizer, test_data[0], test_data[1]).as_dict()
    return model, normalizer, report


MODEL_FORMAT_VERSION = 1


def save_model(path, model: MlpModel, normalizer: YNormalizer, provenance: str) -> None:
    """Persist weights plus normalizer and the embedder provenance they assume."""
    meta = {
        "version": MODEL_FORMAT_VERSION,
        "input_dim": model.input_dim,
        "mu": normalizer.mu,
        "sigma": normalizer.sigma,
        "provenance": provenance,
    }
    np.savez(path, meta=json.dumps(meta), **model.params())


def load_model(path) -> tuple[MlpModel, YNormalizer, str]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model file version: {meta.get('version')}")
        model = MlpModel(**{name: data[name] for name in _PARAM_NAMES})
    normalizer = YNormalizer(mu=meta["mu"], sigma=meta["sigma"])
    return model, normalizer, meta["provenance"]
