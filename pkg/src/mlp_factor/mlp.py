"""Dense feed-forward networks written directly against numpy.

Parameters live in one flat float64 vector so that the optimizer state and
the gradient share a single layout; per-layer weight matrices and bias
vectors are reshaped views into it.  Hidden layers compute
``relu(batchnorm(a @ W + b))``; the output layer is affine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ArchitectureError, NumericError, ShapeError
from .params_io import load_arrays, save_arrays

BN_EPS = 1e-5
PARAMS_FORMAT = "mlp_factor.mlp/1"

# Hidden widths by depth, as tabulated for 182 inputs / 1 output.
MAIN_WIDTHS = {
    1: (15,),
    2: (36, 6),
    3: (56, 15, 4),
    4: (73, 25, 9, 3),
    5: (87, 36, 15, 6, 3),
}
GKX_WIDTHS = {
    1: (32,),
    2: (32, 16),
    3: (32, 16, 8),
    4: (32, 16, 8, 4),
    5: (32, 16, 8, 4, 2),
}
_ROUNDING = {
    "floor": math.floor,
    "ceil": math.ceil,
    "round_half_up": lambda x: math.floor(x + 0.5),
}


# -- architecture ------------------------------------------------------------

@dataclass(frozen=True)
class PyramidSpec:
    input_dim: int
    output_dim: int = 1
    depth: int = 1
    mode: str = "formula"  # formula | fixed_main | fixed_gkx
    rounding: str = "floor"

    def __post_init__(self):
        if self.mode not in ("formula", "fixed_main", "fixed_gkx"):
            raise ArchitectureError(f"unknown pyramid mode {self.mode!r}")
        if self.rounding not in _ROUNDING:
            raise ArchitectureError(f"unknown rounding {self.rounding!r}")
        if not 1 <= self.depth <= 5:
            raise ArchitectureError(f"depth must be in 1..5, got {self.depth}")


def pyramid_widths(spec: PyramidSpec) -> list[int]:
    """Hidden-layer widths for a pyramid network.

    ``formula`` mode shrinks geometrically from the input to the output
    width: ``U_k = round(O * (I/O) ** ((L+1-k)/(L+1)))``. The fixed modes
    return the tabulated architectures unchanged.
    """
    I, O, L = spec.input_dim, spec.output_dim, spec.depth
    if not (O >= 1 and I > O):
        raise ArchitectureError(f"need input_dim > output_dim >= 1, got I={I}, O={O}")
    if spec.mode == "fixed_main":
        return list(MAIN_WIDTHS[L])
    if spec.mode == "fixed_gkx":
        return list(GKX_WIDTHS[L])
    rnd = _ROUNDING[spec.rounding]
    widths = [int(rnd(O * (I / O) ** ((L + 1 - k) / (L + 1)))) for k in range(1, L + 1)]
    if widths[0] >= I:
        raise ArchitectureError(f"formula widths {widths} do not shrink below the input width {I}")
    if any(w <= O for w in widths):
        raise ArchitectureError(f"formula widths {widths} reach the output width {O}")
    if any(a <= b for a, b in zip(widths, widths[1:])):
        raise ArchitectureError(f"formula widths {widths} are not strictly decreasing")
    return widths


def check_pyramid(widths: Sequence[int]) -> None:
    """Reject anything but ``I > U_1 > ... > U_L >= O``."""
    widths = list(widths)
    if len(widths) < 3:
        raise ArchitectureError("need input, at least one hidden layer, and output")
    if any(w < 1 for w in widths):
        raise ArchitectureError(f"non-positive width in {widths}")
    hidden = widths[:-1]
    if any(a <= b for a, b in zip(hidden, hidden[1:])) or widths[-2] < widths[-1]:
        raise ArchitectureError(f"widths {widths} do not form a pyramid")


# -- network -----------------------------------------------------------------

class MLPNetwork:
    """Parameters, layer views and batch-norm running statistics."""

    def __init__(self, widths: Sequence[int], batchnorm: bool = True,
                 momentum: float = 0.9, params: Optional[np.ndarray] = None):
        check_pyramid(widths)
        self.widths = tuple(int(w) for w in widths)
        self.batchnorm = bool(batchnorm)
        self.momentum = float(momentum)
        shapes = list(zip(self.widths[:-1], self.widths[1:]))
        self._shapes = shapes
        size = sum(i * o + o for i, o in shapes)
        if params is None:
            self.params = np.zeros(size)
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (size,):
                raise ShapeError(f"expected {size} parameters, got {params.shape}")
            self.params = params.copy()
        self._bind(self.params)
        n_hidden = len(shapes) - 1
        self.running_mean = [np.zeros(self.widths[k + 1]) for k in range(n_hidden)]
        self.running_var = [np.ones(self.widths[k + 1]) for k in range(n_hidden)]

    def _bind(self, flat):
        self.weights, self.biases, self._weight_mask = [], [], np.zeros(flat.size, bool)
        pos = 0
        for i, o in self._shapes:
            self.weights.append(flat[pos:pos + i * o].reshape(i, o))
            self._weight_mask[pos:pos + i * o] = True
            pos += i * o
            self.biases.append(flat[pos:pos + o])
            pos += o

    @property
    def n_hidden(self) -> int:
        return len(self.widths) - 2

    @property
    def weight_mask(self) -> np.ndarray:
        """Boolean mask over the flat vector selecting weight (not bias) entries."""
        return self._weight_mask

    def set_params(self, flat: np.ndarray) -> None:
        self.params[:] = flat

    def get_state(self):
        return (self.params.copy(), [m.copy() for m in self.running_mean],
                [v.copy() for v in self.running_var])

    def set_state(self, state) -> None:
        params, rm, rv = state
        self.params[:] = params
        self.running_mean = [m.copy() for m in rm]
        self.running_var = [v.copy() for v in rv]

    def predict(self, X: np.ndarray) -> np.ndarray:
        out, _ = forward(self, X, training=False)
        return out[:, 0] if out.shape[1] == 1 else out


def init_network(widths: Sequence[int], seed, batchnorm: bool = True,
                 momentum: float = 0.9) -> MLPNetwork:
    """Glorot-uniform weights, zero biases."""
    net = MLPNetwork(widths, batchnorm, momentum)
    rng = np.random.default_rng(seed)
    for w in net.weights:
        fan_in, fan_out = w.shape
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return net


# -- forward / backward ------------------------------------------------------

@dataclass
class ForwardCache:
    inputs: list  # activation entering each layer
    normed: list  # post-batchnorm pre-activation per hidden layer
    inv_std: list
    training: bool
    output: np.ndarray = None


def forward(net: MLPNetwork, batch: np.ndarray, training: bool = False,
            update_stats: bool = True):
    """Run the network; returns ``(output, cache)``.

    In training mode batch statistics normalize each hidden pre-activation
    and (when ``update_stats``) fold into the running estimates.
    """
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.widths[0]:
        raise ShapeError(f"batch shape {X.shape} does not match input width {net.widths[0]}")
    if training and net.batchnorm and X.shape[0] < 2:
        raise ShapeError("batch norm needs at least two rows in training mode")
    cache = ForwardCache([], [], [], training)
    a = X
    mom = net.momentum
    for k in range(net.n_hidden):
        z = a @ net.weights[k] + net.biases[k]
        if net.batchnorm:
            if training:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                if update_stats:
                    net.running_mean[k] = mom * net.running_mean[k] + (1 - mom) * mu
                    net.running_var[k] = mom * net.running_var[k] + (1 - mom) * var
            else:
                mu, var = net.running_mean[k], net.running_var[k]
            inv = 1.0 / np.sqrt(var + BN_EPS)
            z = (z - mu) * inv
        else:
            inv = None
        cache.inputs.append(a)
        cache.normed.append(z)
        cache.inv_std.append(inv)
        a = np.maximum(z, 0.0)
    cache.inputs.append(a)
    out = a @ net.weights[-1] + net.biases[-1]
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite network output")
    cache.output = out
    return out, cache


def l1_mse_loss(pred, target, weights, lam: float) -> float:
    """Mean squared error plus ``lam`` times the L1 norm of the weights."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.shape[0] < 1:
        raise ShapeError(f"prediction shape {pred.shape} vs target shape {target.shape}")
    resid = target - pred
    mse = float(np.sum(resid * resid) / pred.shape[0])
    if lam:
        mse += lam * float(sum(np.abs(np.asarray(w)).sum() for w in weights))
    return mse


def _as_targets(targets, rows, width):
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape != (rows, width):
        raise ShapeError(f"targets shape {y.shape}, expected {(rows, width)}")
    return y


def backprop(net: MLPNetwork, cache: ForwardCache, targets, lam: float = 0.0):
    """Gradient of :func:`l1_mse_loss` w.r.t. the flat parameter vector.

    Returns ``(loss, grad)``; ``grad`` has the layout of ``net.params``.
    """
    out = cache.output
    T = out.shape[0]
    y = _as_targets(targets, T, out.shape[1])
    loss = l1_mse_loss(out, y, net.weights, lam)
    grad = np.empty_like(net.params)
    gw = [None] * len(net.weights)
    gb = [None] * len(net.biases)

    delta = 2.0 * (out - y) / T
    gw[-1] = cache.inputs[-1].T @ delta
    gb[-1] = delta.sum(axis=0)
    da = delta @ net.weights[-1].T
    for k in range(net.n_hidden - 1, -1, -1):
        zn = cache.normed[k]
        dzn = da * (zn > 0)
        if net.batchnorm:
            inv = cache.inv_std[k]
            if cache.training:
                n = zn.shape[0]
                dz = (inv / n) * (n * dzn - dzn.sum(axis=0) - zn * (dzn * zn).sum(axis=0))
            else:
                dz = dzn * inv
        else:
            dz = dzn
        gw[k] = cache.inputs[k].T @ dz
        gb[k] = dz.sum(axis=0)
        if k:
            da = dz @ net.weights[k].T

    pos = 0
    for w, b in zip(gw, gb):
        grad[pos:pos + w.size] = w.ravel()
        pos += w.size
        grad[pos:pos + b.size] = b
        pos += b.size
    if lam:
        grad[net.weight_mask] += lam * np.sign(net.params[net.weight_mask])
    if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NumericError("non-finite loss or gradient")
    return loss, grad


def loss_and_grad(net: MLPNetwork, X, y, lam: float = 0.0, training: bool = True,
                  update_stats: bool = True):
    _, cache = forward(net, X, training=training, update_stats=update_stats)
    return backprop(net, cache, y, lam)


# -- optimizer ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l1: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    batchnorm_momentum: float = 0.9

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.l1 < 0:
            raise ValueError("l1 strength must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=seed)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              config: TrainConfig = TrainConfig()):
    """One Adam update; returns ``(new_params, new_state)`` without mutating inputs."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if not (params.shape == grads.shape == state.m.shape == state.v.shape):
        raise ShapeError("parameter, gradient and moment vectors differ in shape")
    b1, b2 = config.beta1, config.beta2
    step = state.step + 1
    m = b1 * state.m + (1 - b1) * grads
    v = b2 * state.v + (1 - b2) * (grads * grads)
    m_hat = m / (1 - b1 ** step)
    v_hat = v / (1 - b2 ** step)
    new = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return new, AdamState(m, v, step)


# -- training loop -----------------------------------------------------------

class EarlyStopping:
    """Track the best validation score; signal a stop after ``patience`` misses."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.best_state = None
        self.misses = 0

    def update(self, epoch: int, score: float, state_fn: Callable[[], object]) -> bool:
        if score < self.best:
            self.best = score
            self.best_epoch = epoch
            self.best_state = state_fn()
            self.misses = 0
        else:
            self.misses += 1
        return self.misses >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mse: float


@dataclass
class TrainResult:
    best_epoch: int
    best_val_mse: float
    log: list = field(default_factory=list)
    stopped_early: bool = False
    numeric_failure: bool = False
    state: tuple = None


def _batches(n: int, size: int, order: np.ndarray):
    bounds = list(range(0, n, size)) + [n]
    # a trailing single row cannot be batch-normalized; fold it into its predecessor
    if len(bounds) > 2 and bounds[-1] - bounds[-2] == 1:
        del bounds[-2]
    for a, b in zip(bounds, bounds[1:]):
        yield order[a:b]


def train(net: MLPNetwork, train_X, train_y, val_X, val_y,
          config: TrainConfig = TrainConfig(),
          score_fn: Optional[Callable[[MLPNetwork, int], float]] = None) -> TrainResult:
    """Minibatch Adam with validation-based early stopping.

    After every epoch the validation MSE (no penalty) is computed; the
    parameter snapshot with the lowest value is kept and restored into
    ``net`` on return.  ``score_fn(net, epoch)`` replaces the validation MSE
    when given.  A non-finite loss or gradient aborts training, restores
    the best snapshot so far and sets ``numeric_failure``.
    """
    X = np.asarray(train_X, dtype=np.float64)
    y = np.asarray(train_y, dtype=np.float64).reshape(len(X), -1)
    Xv = np.asarray(val_X, dtype=np.float64)
    yv = np.asarray(val_y, dtype=np.float64).reshape(len(Xv), -1)
    if X.shape[1] != net.widths[0] or (len(Xv) and Xv.shape[1] != net.widths[0]):
        raise ShapeError("feature width does not match the network input")
    if net.batchnorm and len(X) < 2:
        raise ShapeError("need at least two training rows")

    def validation_mse(network, epoch):
        return float(np.mean((network.predict(Xv).reshape(yv.shape) - yv) ** 2))

    score = score_fn or validation_mse
    rng = np.random.default_rng(config.seed)
    stopper = EarlyStopping(config.patience)
    adam = AdamState.zeros(net.params.size)
    result = TrainResult(best_epoch=0, best_val_mse=math.inf)
    initial = net.get_state()
    n = len(X)

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total, seen = 0.0, 0
        try:
            for idx in _batches(n, config.batch_size, order):
                loss, grad = loss_and_grad(net, X[idx], y[idx], config.l1)
                new, adam = adam_step(net.params, grad, adam, config)
                if not np.all(np.isfinite(new)):
                    raise NumericError("non-finite parameters after update")
                net.params[:] = new
                total += loss * len(idx)
                seen += len(idx)
            val = score(net, epoch)
            if not math.isfinite(val):
                raise NumericError("non-finite validation error")
        except NumericError:
            result.numeric_failure = True
            break
        result.log.append(EpochRecord(epoch, total / seen, val))
        if stopper.update(epoch, val, net.get_state):
            result.stopped_early = True
            break

    best = stopper.best_state if stopper.best_state is not None else initial
    net.set_state(best)
    result.state = best
    result.best_epoch = stopper.best_epoch
    result.best_val_mse = stopper.best
    return result


# -- persistence -------------------------------------------------------------

def save_network(net: MLPNetwork, path, config_hash: str = "", **meta) -> None:
    header = {"format": PARAMS_FORMAT, "widths": list(net.widths),
              "batchnorm": net.batchnorm, "momentum": net.momentum,
              "config_hash": config_hash, **meta}
    arrays = {"params": net.params}
    for k in range(net.n_hidden):
        arrays[f"running_mean_{k}"] = net.running_mean[k]
        arrays[f"running_var_{k}"] = net.running_var[k]
    save_arrays(path, header, arrays)


def load_network(path) -> MLPNetwork:
    meta, arrays = load_arrays(path)
    if meta.get("format") != PARAMS_FORMAT:
        raise ValueError(f"{path}: unsupported parameter format {meta.get('format')!r}")
    net = MLPNetwork(meta["widths"], meta["batchnorm"], meta["momentum"], arrays["params"])
    net.running_mean = [arrays[f"running_mean_{k}"] for k in range(net.n_hidden)]
    net.running_var = [arrays[f"running_var_{k}"] for k in range(net.n_hidden)]
    return net
