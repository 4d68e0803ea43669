"""Adam optimization, the epoch/batch loop with early stopping, and
grid-search hyperparameter selection with expanding-window cross-validation.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError, EmptyBatchError, GridError, NumericError
from .lstm import (
    HyperParams,
    ModelParams,
    backward,
    clone_params,
    forward,
    init_params,
    mse_loss,
    param_items,
)
from .numeric import derive_rng
from .timeseries import WindowedDataset, make_windows

DIVERGENCE_FACTOR = 1e6

COMPLETED = "COMPLETED"
EARLY_STOPPED = "EARLY_STOPPED"


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the parameter set."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    learning_rate: float = 1e-3


def init_adam(params: ModelParams, learning_rate: float) -> AdamState:
    return AdamState(
        m={name: np.zeros_like(arr) for name, arr in param_items(params)},
        v={name: np.zeros_like(arr) for name, arr in param_items(params)},
        learning_rate=learning_rate,
    )


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One in-place Adam update. Aborts (no mutation) on non-finite gradients."""
    items = param_items(params)
    for name, _ in items:
        if not np.all(np.isfinite(grads[name])):
            raise NumericError(f"non-finite gradient for {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.t
    bias2 = 1.0 - b2 ** state.t
    for name, arr in items:
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = state.m[name] / bias1
        v_hat = state.v[name] / bias2
        arr -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class EarlyStop:
    """Stop when validation MSE fails to improve by min_delta for
    `patience` consecutive epochs; the chronological tail of the training
    windows is held out as the validation set."""

    patience: int = 3
    min_delta: float = 1e-5
    val_fraction: float = 0.1


@dataclass
class EpochStats:
    train_mse: float
    val_mse: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    stop_reason: str = COMPLETED

    @property
    def best_epoch(self) -> int:
        return int(np.argmin([e.val_mse for e in self.epochs]))

    @property
    def best_val_mse(self) -> float:
        return min(e.val_mse for e in self.epochs)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_mse,val_mse\n")
            for idx, e in enumerate(self.epochs, start=1):
                fh.write(f"{idx},{e.train_mse!r},{e.val_mse!r}\n")


def predict_batched(params: ModelParams, inputs: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """Inference over many windows without retaining caches; returns a
    flat (count,) prediction array for the single-output head."""
    out = np.empty(len(inputs))
    for start in range(0, len(inputs), chunk):
        pred, _ = forward(params, inputs[start:start + chunk], training=False)
        out[start:start + chunk] = pred[:, 0]
    return out


def train(
    params: ModelParams,
    windows: WindowedDataset,
    hyper: HyperParams | None = None,
    rng: np.random.Generator | None = None,
    early_stop: EarlyStop | None = None,
    callback=None,
) -> tuple[ModelParams, TrainHistory]:
    """Seeded shuffle / minibatch / Adam loop over the supervised windows.

    Returns the parameters from the best-validation epoch (not the last
    one) together with the per-epoch history.
    """
    hyper = (hyper or params.hyper).validate()
    early_stop = early_stop or EarlyStop()
    if early_stop.patience < 1:
        raise ConfigError(f"patience must be >= 1, got {early_stop.patience}")
    if not 0.0 < early_stop.val_fraction < 1.0:
        raise ConfigError(f"val_fraction must be in (0,1), got {early_stop.val_fraction}")
    if rng is None:
        raise ConfigError("train requires a seeded rng")
    n = len(windows)
    if n == 0:
        raise EmptyBatchError("no training windows")

    if n == 1:
        train_x, train_y = windows.inputs, windows.targets
        val_x, val_y = windows.inputs, windows.targets
    else:
        val_count = max(1, int(math.floor(early_stop.val_fraction * n)))
        cut = n - val_count
        train_x, train_y = windows.inputs[:cut], windows.targets[:cut]
        val_x, val_y = windows.inputs[cut:], windows.targets[cut:]

    state = init_adam(params, hyper.learning_rate)
    history = TrainHistory()
    best_val = math.inf
    best_params = clone_params(params)
    stale_epochs = 0
    initial_loss: float | None = None

    for _epoch in range(hyper.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_x))
        sq_sum = 0.0
        count = 0
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            pred, cache = forward(params, train_x[idx], training=True, rng=rng)
            loss, grad = mse_loss(pred, train_y[idx])
            if initial_loss is None:
                initial_loss = loss
            grads = backward(params, cache, grad)
            adam_step(params, grads, state)
            sq_sum += loss * pred.size
            count += pred.size
        train_mse = sq_sum / count
        val_pred = predict_batched(params, val_x)
        val_mse, _ = mse_loss(val_pred[:, None], val_y)
        history.epochs.append(EpochStats(train_mse=train_mse, val_mse=val_mse,
                                         seconds=time.perf_counter() - t0))
        if callback is not None:
            callback(_epoch, history.epochs[-1])

        if not math.isfinite(train_mse) or (
            initial_loss is not None and train_mse > DIVERGENCE_FACTOR * max(initial_loss, 1e-30)
        ):
            raise DivergenceError(f"training diverged: epoch MSE {train_mse}")

        if val_mse < best_val - early_stop.min_delta:
            stale_epochs = 0
        else:
            stale_epochs += 1
        if val_mse < best_val:
            best_val = val_mse
            best_params = clone_params(params)
        if stale_epochs >= early_stop.patience:
            history.stop_reason = EARLY_STOPPED
            break
    else:
        history.stop_reason = COMPLETED

    return best_params, history


@dataclass
class Grid:
    """Candidate values per hyperparameter; None means keep the base value."""

    units: list[int] | None = None
    timesteps: list[int] | None = None
    learning_rate: list[float] | None = None
    dropout: list[float] | None = None
    batch_size: list[int] | None = None

    def combinations(self, base: HyperParams) -> list[HyperParams]:
        axes = [
            self.units or [base.units],
            self.timesteps or [base.timesteps],
            self.learning_rate or [base.learning_rate],
            self.dropout or [base.dropout],
            self.batch_size or [base.batch_size],
        ]
        if any(len(a) == 0 for a in axes):
            raise ConfigError("grid axes must be non-empty")
        combos = []
        for units, timesteps, lr, dropout, batch in itertools.product(*axes):
            combos.append(replace(base, units=units, timesteps=timesteps,
                                  learning_rate=lr, dropout=dropout, batch_size=batch))
        return combos


DEFAULT_GRID = Grid(units=[50, 100, 200], learning_rate=[1e-3, 1e-2], timesteps=[24])


@dataclass
class ComboScore:
    index: int
    hyper: HyperParams
    feasible: bool
    fold_maes: list[float] = field(default_factory=list)
    score: float = math.inf
    note: str = ""


@dataclass
class GridSearchResult:
    best: HyperParams
    table: list[ComboScore]
    train_runs: int
    folds: int


def _fold_bounds(n: int, folds: int) -> list[tuple[int, int]]:
    """Expanding-window folds: fold k trains on the first k/(folds+1)
    fraction and validates on the next fold-sized segment."""
    return [
        (int(math.floor(n * k / (folds + 1))), int(math.floor(n * (k + 1) / (folds + 1))))
        for k in range(1, folds + 1)
    ]


def _fold_windows(
    values: np.ndarray, train_end: int, val_end: int, hyper: HyperParams
) -> tuple[WindowedDataset, WindowedDataset] | None:
    """Split the windows over values[:val_end] into those whose target
    falls before train_end (train) and the rest (validation)."""
    t, h = hyper.timesteps, hyper.horizon
    n_train_windows = train_end - t - h + 1
    if n_train_windows < 1 or val_end - train_end < 1:
        return None
    all_windows = make_windows(values[:val_end], t, h)
    train_w = WindowedDataset(inputs=all_windows.inputs[:n_train_windows],
                              targets=all_windows.targets[:n_train_windows],
                              timesteps=t, horizon=h)
    val_w = WindowedDataset(inputs=all_windows.inputs[n_train_windows:],
                            targets=all_windows.targets[n_train_windows:],
                            timesteps=t, horizon=h)
    if len(val_w) < 1:
        return None
    return train_w, val_w


def grid_search(
    grid: Grid,
    values: np.ndarray,
    base: HyperParams | None = None,
    folds: int = 3,
    seed: int = 0,
    early_stop: EarlyStop | None = None,
) -> GridSearchResult:
    """Score every combination by mean validation MAE over expanding-window
    folds and return the minimizer (ties: fewer units, then smaller
    timesteps, then grid order). Infeasible combinations are recorded and
    skipped; if none are feasible the search fails."""
    values = np.asarray(values, dtype=np.float64)
    if folds < 1:
        raise ConfigError(f"folds must be >= 1, got {folds}")
    base = base or HyperParams()
    combos = grid.combinations(base)
    n = len(values)
    bounds = _fold_bounds(n, folds)

    table: list[ComboScore] = []
    train_runs = 0
    for idx, hyper in enumerate(combos):
        splits = [_fold_windows(values, te, ve, hyper) for te, ve in bounds]
        if any(s is None for s in splits):
            table.append(ComboScore(index=idx, hyper=hyper, feasible=False,
                                    note="series too short for this combination"))
            continue
        rng = derive_rng(seed, idx)
        fold_maes: list[float] = []
        for train_w, val_w in splits:  # type: ignore[misc]
            params = init_params(hyper, rng)
            trained, _ = train(params, train_w, hyper, rng, early_stop)
            train_runs += 1
            pred = predict_batched(trained, val_w.inputs)
            fold_maes.append(float(np.mean(np.abs(pred - val_w.targets))))
        table.append(ComboScore(index=idx, hyper=hyper, feasible=True,
                                fold_maes=fold_maes, score=float(np.mean(fold_maes))))

    feasible = [c for c in table if c.feasible]
    if not feasible:
        raise GridError("no feasible hyperparameter combination for this series")
    best = min(feasible, key=lambda c: (c.score, c.hyper.units, c.hyper.timesteps, c.index))
    return GridSearchResult(best=best.hyper, table=table, train_runs=train_runs, folds=folds)
