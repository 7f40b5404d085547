"""Composite two-fidelity network and its training loop.

Stage 1 maps the parameter vector to a low-fidelity response estimate.
Stage 2 consumes the parameter vector concatenated with that estimate
through two parallel passages, one purely linear and one nonlinear, and
merges them with a fixed scalar weight:

    y2 = alpha * v_linear + (1 - alpha) * v_nonlinear.

The merge has no trainable parameters.  Rows without a measured
high-fidelity response are filled with their low-fidelity response and
given a tiny high-fidelity loss weight, so every training row is dense
while the pseudo targets barely influence stage 2.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import TrainingError

LOSS_SEPARABLE = "separable"
LOSS_SQUARED_NORM_SUM = "squared_norm_sum"
_LOSS_FORMS = (LOSS_SEPARABLE, LOSS_SQUARED_NORM_SUM)


@dataclass
class CompositeNetConfig:
    """Architecture of the composite network."""

    n_inputs: int = 12
    n_outputs: int = 10
    stage1_hidden: tuple = (512, 512, 512)
    linear_hidden: tuple = (256, 256)
    nonlinear_hidden: tuple = (256, 256, 256)
    alpha: float = 0.6
    standardize: bool = False

    def validate(self):
        if self.n_inputs < 1 or self.n_outputs < 1:
            raise ValueError("n_inputs and n_outputs must be positive")
        for name in ("stage1_hidden", "linear_hidden", "nonlinear_hidden"):
            sizes = getattr(self, name)
            if not sizes or any(int(s) != s or s < 1 for s in sizes):
                raise ValueError(f"{name} must be nonempty positive integers")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass
class Standardizer:
    """Per-column affine scaling fitted on the training rows."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    @classmethod
    def fit(cls, x, y):
        guard = lambda s: np.where(s > 0.0, s, 1.0)
        return cls(
            x_mean=x.mean(axis=0),
            x_std=guard(x.std(axis=0)),
            y_mean=y.mean(axis=0),
            y_std=guard(y.std(axis=0)),
        )

    def scale_x(self, x):
        return (x - self.x_mean) / self.x_std

    def scale_y(self, y):
        return (y - self.y_mean) / self.y_std

    def unscale_y(self, y):
        return y * self.y_std + self.y_mean


class CompositeNet:
    """Parameter container for the two-stage composite network."""

    def __init__(self, config, stage1, linear, nonlinear, scaler=None):
        config.validate()
        self.config = config
        self.stage1 = stage1
        self.linear = linear
        self.nonlinear = nonlinear
        self.alpha = config.alpha
        self.scaler = scaler

    def parameters(self):
        """All trainable arrays (stage 1, linear, nonlinear order)."""
        return (
            nn.stack_parameters(self.stage1)
            + nn.stack_parameters(self.linear)
            + nn.stack_parameters(self.nonlinear)
        )

    def parameter_count(self):
        return sum(p.size for p in self.parameters())


def build_composite(config, seed):
    """Glorot-initialize a composite network.

    Stacks are initialized in a documented order (stage 1, then linear,
    then nonlinear passage) from one seeded generator, so the parameter
    state is a pure function of (config, seed).
    """
    config.validate()
    rng = np.random.default_rng(seed)
    m, d = config.n_inputs, config.n_outputs
    stage1 = nn.make_stack(
        [m, *config.stage1_hidden, d], nn.ACT_RELU, nn.ACT_LINEAR, rng
    )
    linear = nn.make_stack(
        [m + d, *config.linear_hidden, d], nn.ACT_LINEAR, nn.ACT_LINEAR, rng
    )
    nonlinear = nn.make_stack(
        [m + d, *config.nonlinear_hidden, d], nn.ACT_RELU, nn.ACT_LINEAR, rng
    )
    return CompositeNet(config, stage1, linear, nonlinear)


def composite_forward(net, x):
    """Scaled-space forward pass.

    Returns
    -------
    (y1, y2) : ndarray pairs of shape (rows, n_outputs)
    """
    y1 = nn.forward(net.stage1, x)
    c = np.hstack([np.asarray(x, dtype=float), y1])
    v_lin = nn.forward(net.linear, c)
    v_non = nn.forward(net.nonlinear, c)
    return y1, net.alpha * v_lin + (1.0 - net.alpha) * v_non


@dataclass
class FusedTrainingSet:
    """Dense training rows with per-row high-fidelity loss weights."""

    x: np.ndarray
    y_low: np.ndarray
    y_high: np.ndarray
    is_real: np.ndarray
    beta_low: np.ndarray
    beta_high: np.ndarray

    @property
    def n_rows(self):
        return self.x.shape[0]


@dataclass
class TrainingPlan:
    """Hyperparameters of one composite training run."""

    alpha: float = 0.6
    gamma: float = 0.8
    beta_low: float = 0.5
    beta_high_real: float = 2.0
    beta_high_pseudo: float = 1e-5
    epochs: int = 40
    batch_size: int = 5
    learning_rate: float = 0.001
    loss_form: str = LOSS_SEPARABLE
    seed: int = 0

    def validate(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        for name in ("beta_low", "beta_high_real", "beta_high_pseudo", "learning_rate"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.loss_form not in _LOSS_FORMS:
            raise ValueError(f"loss_form must be one of {_LOSS_FORMS}")


def fill_pseudo_high_fidelity(x, y_low, y_high_real, real_rows, plan):
    """Assemble the dense training set.

    Parameters
    ----------
    x : ndarray, shape (R, m)
        Inputs of every low-fidelity training row.
    y_low : ndarray, shape (R, d)
    y_high_real : ndarray, shape (len(real_rows), d)
        High-fidelity responses for the rows listed in ``real_rows``.
    real_rows : array_like of int
        Positions (into the R rows) that carry a real high-fidelity
        response; the rest receive their low-fidelity response as a
        pseudo target with weight ``plan.beta_high_pseudo``.
    plan : TrainingPlan

    Returns
    -------
    FusedTrainingSet
    """
    plan.validate()
    x = np.asarray(x, dtype=float)
    y_low = np.asarray(y_low, dtype=float)
    real_rows = np.asarray(real_rows, dtype=np.int64)
    r = x.shape[0]
    if y_low.shape[0] != r:
        raise ValueError("x and y_low row counts differ")
    if len(np.unique(real_rows)) != len(real_rows):
        raise ValueError("real_rows contains duplicates")
    if real_rows.size and (real_rows.min() < 0 or real_rows.max() >= r):
        raise ValueError("real_rows out of range")
    if np.asarray(y_high_real).shape != (len(real_rows), y_low.shape[1]):
        raise ValueError("y_high_real shape does not match real_rows")

    y_high = y_low.copy()
    is_real = np.zeros(r, dtype=bool)
    y_high[real_rows] = y_high_real
    is_real[real_rows] = True
    beta_high = np.where(is_real, plan.beta_high_real, plan.beta_high_pseudo)
    return FusedTrainingSet(
        x=x,
        y_low=y_low,
        y_high=y_high,
        is_real=is_real,
        beta_low=np.full(r, plan.beta_low),
        beta_high=beta_high,
    )


def training_loss(net, fused, rows, plan, with_grads=True):
    """Weighted two-fidelity loss (and its exact gradients) on a batch.

    ``separable`` averages gamma*beta_low*||e1||^2 +
    (1-gamma)*beta_high*||e2||^2 over the batch; ``squared_norm_sum``
    averages the square of gamma*beta_low*||e1|| +
    (1-gamma)*beta_high*||e2||, whose gradient uses unit-norm error
    directions (taken as zero for a zero error).

    Returns
    -------
    loss : float
    grads : list of (dW, db) or None
        Aligned with ``net.parameters()`` order.
    """
    rows = np.asarray(rows, dtype=np.int64)
    x = fused.x[rows]
    y1_t = fused.y_low[rows]
    y2_t = fused.y_high[rows]
    if net.scaler is not None:
        x = net.scaler.scale_x(x)
        y1_t = net.scaler.scale_y(y1_t)
        y2_t = net.scaler.scale_y(y2_t)
    bl = fused.beta_low[rows][:, None]
    bh = fused.beta_high[rows][:, None]
    b = len(rows)
    gamma = plan.gamma

    acts1, pres1 = nn.forward_all(net.stage1, x)
    y1 = acts1[-1]
    c = np.hstack([x, y1])
    acts_l, pres_l = nn.forward_all(net.linear, c)
    acts_n, pres_n = nn.forward_all(net.nonlinear, c)
    y2 = net.alpha * acts_l[-1] + (1.0 - net.alpha) * acts_n[-1]

    e1 = y1 - y1_t
    e2 = y2 - y2_t
    sq1 = np.sum(e1 * e1, axis=1, keepdims=True)
    sq2 = np.sum(e2 * e2, axis=1, keepdims=True)

    if plan.loss_form == LOSS_SEPARABLE:
        loss = float(np.mean(gamma * bl * sq1 + (1.0 - gamma) * bh * sq2))
        if not with_grads:
            return loss, None
        d_y1 = (2.0 * gamma / b) * bl * e1
        d_y2 = (2.0 * (1.0 - gamma) / b) * bh * e2
    else:
        n1 = np.sqrt(sq1)
        n2 = np.sqrt(sq2)
        eta = gamma * bl * n1 + (1.0 - gamma) * bh * n2
        loss = float(np.mean(eta * eta))
        if not with_grads:
            return loss, None
        u1 = np.divide(e1, n1, out=np.zeros_like(e1), where=n1 > 0.0)
        u2 = np.divide(e2, n2, out=np.zeros_like(e2), where=n2 > 0.0)
        d_y1 = (2.0 / b) * eta * gamma * bl * u1
        d_y2 = (2.0 / b) * eta * (1.0 - gamma) * bh * u2

    grads_l, dc_l = nn.backward(net.linear, acts_l, pres_l, net.alpha * d_y2)
    grads_n, dc_n = nn.backward(net.nonlinear, acts_n, pres_n, (1.0 - net.alpha) * d_y2)
    dc = dc_l + dc_n
    d_y1_total = d_y1 + dc[:, x.shape[1]:]
    grads_1, _ = nn.backward(net.stage1, acts1, pres1, d_y1_total)

    flat = []
    for gw, gb in grads_1 + grads_l + grads_n:
        flat.append(gw)
        flat.append(gb)
    return loss, flat


def train_composite(net, fused, plan):
    """Train in place with Adam over seeded epoch shuffles.

    The plan's merge weight is written to the net before the first step
    so one plan fully determines the run.  Returns the per-epoch mean
    batch loss.

    Raises
    ------
    TrainingError
        Non-finite loss or gradient.
    """
    plan.validate()
    net.alpha = plan.alpha
    if net.config.standardize:
        net.scaler = Standardizer.fit(fused.x, fused.y_low)
    rng = np.random.default_rng(plan.seed)
    params = net.parameters()
    state = nn.adam_init(params, lr=plan.learning_rate)
    history = np.empty(plan.epochs)
    for epoch in range(plan.epochs):
        order = rng.permutation(fused.n_rows)
        losses = []
        for start in range(0, fused.n_rows, plan.batch_size):
            rows = order[start : start + plan.batch_size]
            loss, grads = training_loss(net, fused, rows, plan)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {start}")
            nn.adam_step(state, params, grads)
            losses.append(loss)
        history[epoch] = np.mean(losses)
    return history


def predict_both(net, x):
    """Low- and high-fidelity predictions in original units."""
    x = np.asarray(x, dtype=float)
    xs = net.scaler.scale_x(x) if net.scaler is not None else x
    y1, y2 = composite_forward(net, xs)
    if net.scaler is not None:
        y1 = net.scaler.unscale_y(y1)
        y2 = net.scaler.unscale_y(y2)
    return y1, y2


def predict_high_fidelity(net, x):
    """High-fidelity response estimate, shape (rows, n_outputs)."""
    return predict_both(net, x)[1]


def save_composite(net, path):
    """Persist configuration, merge weight, scaler and all parameters."""
    extra = {
        "config": {
            "n_inputs": net.config.n_inputs,
            "n_outputs": net.config.n_outputs,
            "stage1_hidden": list(net.config.stage1_hidden),
            "linear_hidden": list(net.config.linear_hidden),
            "nonlinear_hidden": list(net.config.nonlinear_hidden),
            "alpha": net.config.alpha,
            "standardize": net.config.standardize,
        },
        "alpha": net.alpha,
        "scaler": None
        if net.scaler is None
        else {
            "x_mean": [repr(float(v)) for v in net.scaler.x_mean],
            "x_std": [repr(float(v)) for v in net.scaler.x_std],
            "y_mean": [repr(float(v)) for v in net.scaler.y_mean],
            "y_std": [repr(float(v)) for v in net.scaler.y_std],
        },
    }
    nn.save_layers(
        path,
        {"stage1": net.stage1, "linear": net.linear, "nonlinear": net.nonlinear},
        extra=extra,
    )


def load_composite(path):
    """Load a network saved by ``save_composite`` (bitwise round trip)."""
    stacks, extra = nn.load_layers(path)
    cfg_d = extra["config"]
    config = CompositeNetConfig(
        n_inputs=int(cfg_d["n_inputs"]),
        n_outputs=int(cfg_d["n_outputs"]),
        stage1_hidden=tuple(cfg_d["stage1_hidden"]),
        linear_hidden=tuple(cfg_d["linear_hidden"]),
        nonlinear_hidden=tuple(cfg_d["nonlinear_hidden"]),
        alpha=float(cfg_d["alpha"]),
        standardize=bool(cfg_d["standardize"]),
    )
    scaler = None
    if extra["scaler"] is not None:
        s = extra["scaler"]
        scaler = Standardizer(
            x_mean=np.array([float(v) for v in s["x_mean"]]),
            x_std=np.array([float(v) for v in s["x_std"]]),
            y_mean=np.array([float(v) for v in s["y_mean"]]),
            y_std=np.array([float(v) for v in s["y_std"]]),
        )
    net = CompositeNet(config, stacks["stage1"], stacks["linear"], stacks["nonlinear"], scaler)
    net.alpha = float(extra["alpha"])
    return net
