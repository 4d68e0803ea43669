"""Two-layer LSTM forecaster with a dense head.

Forward per cell:

    i = sig(W_xi x + W_hi h_prev + b_i)      f = sig(W_xf x + W_hf h_prev + b_f)
    g = tanh(W_xc x + W_hc h_prev + b_c)     o = sig(W_xo x + W_ho h_prev + b_o)
    c = f * c_prev + i * g                   h = o * tanh(c)

The stack is layer1 (full hidden sequence) -> dropout -> layer2 (final
hidden state) -> dropout -> dense. Gradients are exact
backpropagation-through-time, flowing through both the h and c
recurrences and through the dropout masks; they are verified against
central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, EmptyBatchError, ShapeError, StateError
from .numeric import glorot_init, sigmoid, sigmoid_deriv, tanh, tanh_deriv

GATES = ("i", "f", "c", "o")


@dataclass
class HyperParams:
    """Training-time knobs; defaults are the stock configuration."""

    units: int = 200
    dense_units: int = 1
    epochs: int = 10
    batch_size: int = 1000
    timesteps: int = 24
    features: int = 1
    dropout: float = 0.1
    learning_rate: float = 1e-3
    horizon: int = 1

    def validate(self) -> "HyperParams":
        for name in ("units", "dense_units", "epochs", "batch_size", "timesteps",
                     "features", "horizon"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0,1), got {self.dropout}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        return self


@dataclass
class LstmLayerWeights:
    """Per-gate weight matrices (units x input_dim input paths, units x units
    recurrent paths) and bias vectors."""

    W_xi: np.ndarray
    W_hi: np.ndarray
    W_xf: np.ndarray
    W_hf: np.ndarray
    W_xc: np.ndarray
    W_hc: np.ndarray
    W_xo: np.ndarray
    W_ho: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    @property
    def units(self) -> int:
        return self.W_xi.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_xi.shape[1]


@dataclass
class ModelParams:
    """All trainable state: two LSTM layers plus the dense readout."""

    layer1: LstmLayerWeights
    layer2: LstmLayerWeights
    dense_W: np.ndarray  # (dense_units, units)
    dense_b: np.ndarray  # (dense_units,)
    hyper: HyperParams


def init_layer(rng: np.random.Generator, units: int, input_dim: int) -> LstmLayerWeights:
    """Glorot-uniform weights; forget-gate bias starts at 1, others at 0."""
    kw = {}
    for g in GATES:
        kw[f"W_x{g}"] = glorot_init(rng, units, input_dim)
        kw[f"W_h{g}"] = glorot_init(rng, units, units)
    for g in GATES:
        kw[f"b_{g}"] = np.full(units, 1.0 if g == "f" else 0.0)
    return LstmLayerWeights(**kw)


def init_params(hyper: HyperParams, rng: np.random.Generator) -> ModelParams:
    hyper.validate()
    layer1 = init_layer(rng, hyper.units, hyper.features)
    layer2 = init_layer(rng, hyper.units, hyper.units)
    dense_W = glorot_init(rng, hyper.dense_units, hyper.units)
    dense_b = np.zeros(hyper.dense_units)
    return ModelParams(layer1=layer1, layer2=layer2, dense_W=dense_W, dense_b=dense_b,
                       hyper=hyper)


def param_items(params: ModelParams) -> list[tuple[str, np.ndarray]]:
    """Stable (name, array) listing used by the optimizer, the gradient
    checker, and the artifact writer."""
    items: list[tuple[str, np.ndarray]] = []
    for lname, layer in (("layer1", params.layer1), ("layer2", params.layer2)):
        for g in GATES:
            items.append((f"{lname}.W_x{g}", getattr(layer, f"W_x{g}")))
            items.append((f"{lname}.W_h{g}", getattr(layer, f"W_h{g}")))
        for g in GATES:
            items.append((f"{lname}.b_{g}", getattr(layer, f"b_{g}")))
    items.append(("dense.W", params.dense_W))
    items.append(("dense.b", params.dense_b))
    return items


def set_param(params: ModelParams, name: str, value: np.ndarray) -> None:
    if name == "dense.W":
        params.dense_W = value
    elif name == "dense.b":
        params.dense_b = value
    else:
        lname, field_name = name.split(".")
        setattr(getattr(params, lname), field_name, value)


def clone_params(params: ModelParams) -> ModelParams:
    out = ModelParams(
        layer1=replace(params.layer1), layer2=replace(params.layer2),
        dense_W=params.dense_W.copy(), dense_b=params.dense_b.copy(),
        hyper=replace(params.hyper),
    )
    for lname in ("layer1", "layer2"):
        layer = getattr(out, lname)
        for g in GATES:
            for prefix in ("W_x", "W_h", "b_"):
                fname = f"{prefix}{g}"
                setattr(layer, fname, getattr(layer, fname).copy())
    return out


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in param_items(params)}


def cell_forward(
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    weights: LstmLayerWeights,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """One LSTM step over a batch. Shapes: x_t (batch, input_dim),
    h_prev/c_prev (batch, units)."""
    x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    h_prev = np.atleast_2d(np.asarray(h_prev, dtype=np.float64))
    c_prev = np.atleast_2d(np.asarray(c_prev, dtype=np.float64))
    if x_t.shape[1] != weights.input_dim:
        raise ShapeError(f"input dim {x_t.shape[1]} != weights input_dim {weights.input_dim}")
    if h_prev.shape != (x_t.shape[0], weights.units) or c_prev.shape != h_prev.shape:
        raise ShapeError(
            f"state shapes {h_prev.shape}/{c_prev.shape} inconsistent with "
            f"batch {x_t.shape[0]} and units {weights.units}"
        )
    i = sigmoid(x_t @ weights.W_xi.T + h_prev @ weights.W_hi.T + weights.b_i)
    f = sigmoid(x_t @ weights.W_xf.T + h_prev @ weights.W_hf.T + weights.b_f)
    g = tanh(x_t @ weights.W_xc.T + h_prev @ weights.W_hc.T + weights.b_c)
    o = sigmoid(x_t @ weights.W_xo.T + h_prev @ weights.W_ho.T + weights.b_o)
    c = f * c_prev + i * g
    tanh_c = tanh(c)
    h = o * tanh_c
    cache = {"x": x_t, "h_prev": h_prev, "c_prev": c_prev,
             "i": i, "f": f, "g": g, "o": o, "c": c, "tanh_c": tanh_c}
    return h, c, cache


def layer_forward(
    sequence: np.ndarray,
    weights: LstmLayerWeights,
    return_sequences: bool,
    initial: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, list[dict]]:
    """Run the cell over a (batch, timesteps, input_dim) sequence.

    Returns all hidden states (batch, timesteps, units) when
    `return_sequences`, else the final state (batch, units), plus the
    per-step caches needed for the backward pass.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 3:
        raise ShapeError(f"sequence must be 3-D (batch, timesteps, input_dim), got {seq.shape}")
    batch, timesteps, _ = seq.shape
    if timesteps < 1:
        raise ShapeError("sequence must have at least one timestep")
    if initial is None:
        h = np.zeros((batch, weights.units))
        c = np.zeros((batch, weights.units))
    else:
        h, c = initial
    caches: list[dict] = []
    hs = np.empty((batch, timesteps, weights.units))
    for t in range(timesteps):
        h, c, cache = cell_forward(seq[:, t, :], h, c, weights)
        hs[:, t, :] = h
        caches.append(cache)
    return (hs if return_sequences else h), caches


def cell_backward(
    d_h: np.ndarray,
    d_c_carry: np.ndarray,
    cache: dict,
    weights: LstmLayerWeights,
    grads: dict[str, np.ndarray],
    prefix: str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backprop one step. d_h is the total gradient on h_t, d_c_carry the
    gradient flowing into c_t from step t+1. Accumulates weight gradients
    into `grads` and returns (d_x, d_h_prev, d_c_prev)."""
    i, f, g, o = cache["i"], cache["f"], cache["g"], cache["o"]
    tanh_c = cache["tanh_c"]
    d_o = d_h * tanh_c
    d_c = d_c_carry + d_h * o * tanh_deriv(tanh_c)
    d_f = d_c * cache["c_prev"]
    d_i = d_c * g
    d_g = d_c * i
    d_c_prev = d_c * f

    pre = {
        "i": d_i * sigmoid_deriv(i),
        "f": d_f * sigmoid_deriv(f),
        "c": d_g * tanh_deriv(g),
        "o": d_o * sigmoid_deriv(o),
    }
    x, h_prev = cache["x"], cache["h_prev"]
    d_x = np.zeros_like(x)
    d_h_prev = np.zeros_like(h_prev)
    for gate in GATES:
        da = pre[gate]
        grads[f"{prefix}.W_x{gate}"] += da.T @ x
        grads[f"{prefix}.W_h{gate}"] += da.T @ h_prev
        grads[f"{prefix}.b_{gate}"] += da.sum(axis=0)
        d_x += da @ getattr(weights, f"W_x{gate}")
        d_h_prev += da @ getattr(weights, f"W_h{gate}")
    return d_x, d_h_prev, d_c_prev


def layer_backward(
    weights: LstmLayerWeights,
    caches: list[dict],
    d_out: np.ndarray,
    grads: dict[str, np.ndarray],
    prefix: str,
) -> np.ndarray:
    """BPTT over a whole layer. d_out has shape (batch, timesteps, units):
    the gradient arriving at every hidden output (zero where unused).
    Returns the gradient on the layer's input sequence."""
    timesteps = len(caches)
    batch = caches[0]["x"].shape[0]
    if d_out.shape != (batch, timesteps, weights.units):
        raise ShapeError(f"d_out shape {d_out.shape} != {(batch, timesteps, weights.units)}")
    d_inputs = np.empty((batch, timesteps, weights.input_dim))
    d_h_next = np.zeros((batch, weights.units))
    d_c_next = np.zeros((batch, weights.units))
    for t in range(timesteps - 1, -1, -1):
        d_h = d_out[:, t, :] + d_h_next
        d_x, d_h_next, d_c_next = cell_backward(d_h, d_c_next, caches[t], weights,
                                                grads, prefix)
        d_inputs[:, t, :] = d_x
    return d_inputs


def dropout(
    h: np.ndarray,
    rate: float,
    rng: np.random.Generator | None,
    training: bool,
    mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout: in training each element is zeroed with
    probability `rate` and survivors are scaled by 1/(1-rate); inference
    is the identity. A precomputed mask can be replayed for gradient
    checking."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0,1), got {rate}")
    h = np.asarray(h, dtype=np.float64)
    if not training or rate == 0.0:
        return h, np.ones_like(h)
    if mask is None:
        if rng is None:
            raise ConfigError("training-mode dropout with rate > 0 needs an rng")
        keep = rng.random(h.shape) >= rate
        mask = keep.astype(np.float64) / (1.0 - rate)
    elif mask.shape != h.shape:
        raise ShapeError(f"dropout mask shape {mask.shape} != input shape {h.shape}")
    return h * mask, mask


@dataclass
class ForwardCache:
    """Everything backward() needs, bound to the params that produced it."""

    params: ModelParams
    inputs: np.ndarray
    caches1: list[dict]
    mask1: np.ndarray
    caches2: list[dict]
    mask2: np.ndarray
    head_in: np.ndarray  # layer2 final state after dropout
    pred: np.ndarray
    training: bool

    @property
    def masks(self) -> tuple[np.ndarray, np.ndarray]:
        return self.mask1, self.mask2


def forward(
    params: ModelParams,
    batch: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
    masks: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Full stack over a batch of windows.

    `batch` is (count, timesteps) for univariate input or
    (count, timesteps, features). Returns predictions (count, dense_units)
    and the cache for backward().
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ShapeError(f"batch must be 2-D or 3-D, got shape {x.shape}")
    hyper = params.hyper
    if x.shape[1] != hyper.timesteps:
        raise ShapeError(f"window length {x.shape[1]} != timesteps {hyper.timesteps}")
    if x.shape[2] != hyper.features:
        raise ShapeError(f"feature count {x.shape[2]} != features {hyper.features}")

    seq1, caches1 = layer_forward(x, params.layer1, return_sequences=True)
    m1 = masks[0] if masks is not None else None
    drop1, mask1 = dropout(seq1, hyper.dropout, rng, training, mask=m1)
    h2, caches2 = layer_forward(drop1, params.layer2, return_sequences=False)
    m2 = masks[1] if masks is not None else None
    drop2, mask2 = dropout(h2, hyper.dropout, rng, training, mask=m2)
    pred = drop2 @ params.dense_W.T + params.dense_b
    cache = ForwardCache(params=params, inputs=x, caches1=caches1, mask1=mask1,
                         caches2=caches2, mask2=mask2, head_in=drop2, pred=pred,
                         training=training)
    return pred, cache


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient w.r.t. pred."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if t.ndim == 1 and p.ndim == 2 and p.shape[1] == 1:
        t = t[:, None]
    if p.shape != t.shape:
        raise ShapeError(f"pred shape {p.shape} != target shape {t.shape}")
    n = p.size
    if n == 0:
        raise EmptyBatchError("mse_loss on empty batch")
    diff = p - t
    loss = float((diff * diff).sum() / n)
    grad = (2.0 / n) * diff
    return loss, grad


def backward(
    params: ModelParams,
    cache: ForwardCache,
    loss_grad: np.ndarray,
) -> dict[str, np.ndarray]:
    """Exact BPTT gradients for every parameter, given the gradient of the
    loss w.r.t. the predictions from the matching forward() call."""
    if cache.params is not params:
        raise StateError("cache was produced by a different parameter set")
    d_pred = np.asarray(loss_grad, dtype=np.float64)
    if d_pred.shape != cache.pred.shape:
        raise StateError(f"loss_grad shape {d_pred.shape} != prediction shape {cache.pred.shape}")

    grads = zero_grads(params)
    grads["dense.W"] += d_pred.T @ cache.head_in
    grads["dense.b"] += d_pred.sum(axis=0)
    d_h2 = (d_pred @ params.dense_W) * cache.mask2

    batch, timesteps = cache.inputs.shape[0], cache.inputs.shape[1]
    d_out2 = np.zeros((batch, timesteps, params.layer2.units))
    d_out2[:, -1, :] = d_h2
    d_seq1 = layer_backward(params.layer2, cache.caches2, d_out2, grads, "layer2")
    d_seq1 = d_seq1 * cache.mask1
    layer_backward(params.layer1, cache.caches1, d_seq1, grads, "layer1")
    return grads


def rollout(params: ModelParams, scaler, history_mw: np.ndarray, horizon: int) -> np.ndarray:
    """Autoregressive multi-step forecast in MW.

    Scales the history, repeatedly predicts one step and appends it to the
    window, then inverts the scaling on the collected predictions.
    """
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    hist = np.asarray(history_mw, dtype=np.float64)
    timesteps = params.hyper.timesteps
    if hist.ndim != 1 or len(hist) < timesteps:
        raise ShapeError(f"history needs at least {timesteps} values, got {hist.shape}")
    window = scaler.apply(hist)[-timesteps:].copy()
    preds_scaled = np.empty(horizon)
    for step in range(horizon):
        pred, _ = forward(params, window[None, :], training=False)
        preds_scaled[step] = pred[0, 0]
        window = np.concatenate([window[1:], pred[0, :1]])
    return scaler.invert(preds_scaled)
