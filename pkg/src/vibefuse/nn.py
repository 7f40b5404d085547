"""Minimal dense-network core: float64 forward/backward passes and Adam.

Everything is plain numpy with explicit caches, so gradients are exact
reverse-mode derivatives of the forward arithmetic and training is
bitwise reproducible for a given seed.
"""

import json
from dataclasses import dataclass

import numpy as np

ACT_RELU = "relu"
ACT_LINEAR = "linear"
_ACTIVATIONS = (ACT_RELU, ACT_LINEAR)


@dataclass
class DenseLayer:
    """Fully connected layer, weight shape (n_out, n_in)."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("weight must be (n_out, n_in) with matching bias")

    @property
    def n_in(self):
        return self.weight.shape[1]

    @property
    def n_out(self):
        return self.weight.shape[0]


def glorot_init(shape, rng):
    """Uniform Glorot weights for ``shape`` = (n_out, n_in)."""
    n_out, n_in = shape
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=shape)


def make_layer(n_in, n_out, activation, rng):
    """Glorot-initialized layer with zero bias."""
    return DenseLayer(glorot_init((n_out, n_in), rng), np.zeros(n_out), activation)


def make_stack(sizes, hidden_activation, out_activation, rng):
    """Layers mapping sizes[0] -> ... -> sizes[-1].

    Hidden layers share ``hidden_activation``; the last layer uses
    ``out_activation``.
    """
    layers = []
    for i in range(len(sizes) - 1):
        act = out_activation if i == len(sizes) - 2 else hidden_activation
        layers.append(make_layer(sizes[i], sizes[i + 1], act, rng))
    return layers


def _activate(pre, activation):
    if activation == ACT_RELU:
        return np.maximum(pre, 0.0)
    return pre


def forward(layers, x):
    """Network output for a batch ``x`` of shape (rows, n_in)."""
    a = np.asarray(x, dtype=float)
    for layer in layers:
        a = _activate(a @ layer.weight.T + layer.bias, layer.activation)
    return a


def forward_all(layers, x):
    """Forward pass keeping intermediates for a later backward pass.

    Returns
    -------
    acts : list of ndarray
        Activations, ``acts[0]`` is the input, ``acts[-1]`` the output.
    pres : list of ndarray
        Pre-activation values per layer.
    """
    acts = [np.asarray(x, dtype=float)]
    pres = []
    for layer in layers:
        pre = acts[-1] @ layer.weight.T + layer.bias
        pres.append(pre)
        acts.append(_activate(pre, layer.activation))
    return acts, pres


def backward(layers, acts, pres, grad_out):
    """Reverse-mode pass through a stack.

    The ReLU derivative at exactly zero is taken as zero.

    Returns
    -------
    grads : list of (dW, db)
        Aligned with ``layers``.
    grad_in : ndarray
        Gradient with respect to the stack input.
    """
    grads = [None] * len(layers)
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        if layer.activation == ACT_RELU:
            g = g * (pres[i] > 0.0)
        grads[i] = (g.T @ acts[i], g.sum(axis=0))
        g = g @ layer.weight
    return grads, g


def stack_parameters(layers):
    """Flat parameter list (weight, bias alternating) sharing storage."""
    params = []
    for layer in layers:
        params.append(layer.weight)
        params.append(layer.bias)
    return params


def parameter_count(layers):
    return sum(l.weight.size + l.bias.size for l in layers)


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter array."""

    lr: float
    beta1: float
    beta2: float
    eps: float
    step: int
    m: list
    v: list


def adam_init(params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    return AdamState(
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        step=0,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
    )


def adam_step(state, params, grads):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("parameter/gradient lists do not match the state")
    state.step += 1
    b1c = 1.0 - state.beta1 ** state.step
    b2c = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)


def save_layers(path, stacks, extra=None):
    """Serialize named layer stacks into one ``.npz`` payload.

    ``stacks`` maps a name to a layer list.  A JSON manifest with layer
    shapes and activation tags travels inside the archive; arrays are
    stored in binary, so a load returns bitwise-identical parameters.
    """
    manifest = {"stacks": {}, "extra": extra or {}}
    arrays = {}
    for name, layers in stacks.items():
        entries = []
        for i, layer in enumerate(layers):
            wk = f"{name}_w{i}"
            bk = f"{name}_b{i}"
            arrays[wk] = layer.weight
            arrays[bk] = layer.bias
            entries.append(
                {"weight": wk, "bias": bk, "shape": list(layer.weight.shape),
                 "activation": layer.activation}
            )
        manifest["stacks"][name] = entries
    arrays["manifest"] = np.frombuffer(
        json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_layers(path):
    """Load stacks saved by ``save_layers``.

    Returns
    -------
    stacks : dict of name -> list of DenseLayer
    extra : dict
    """
    with np.load(path) as data:
        manifest = json.loads(bytes(data["manifest"]).decode())
        stacks = {}
        for name, entries in manifest["stacks"].items():
            layers = []
            for e in entries:
                w = data[e["weight"]]
                if list(w.shape) != e["shape"]:
                    raise ValueError(f"shape mismatch for {e['weight']} in {path}")
                layers.append(DenseLayer(w, data[e["bias"]], e["activation"]))
            stacks[name] = layers
    return stacks, manifest["extra"]
