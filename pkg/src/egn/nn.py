"""Minimal feed-forward network engine with exact per-sample Jacobians.

The network maps a feature vector of size ``m`` to an output vector of
size ``c`` through dense layers. All weights live in a single flat
64-bit parameter vector (per layer: weight matrix row-major, then bias),
which is what the low-rank Gauss-Newton solvers operate on. Besides the
batched forward pass, the module produces the stacked per-sample output
Jacobian, a ``(b*c) x d`` matrix whose row block ``[i*c, (i+1)*c)`` is
the Jacobian of sample ``i``'s output with respect to the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a dense network.

    widths: layer sizes from input to output, e.g. ``(8, 32, 1)``.
    activations: one of ``"relu"``/``"identity"`` per layer; defaults to
        relu on hidden layers and identity on the output layer.
    """

    widths: tuple[int, ...]
    activations: tuple[str, ...] | None = None

    def __post_init__(self):
        widths = tuple(int(v) for v in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(v < 1 for v in widths):
            raise ValueError(f"all widths must be >= 1, got {widths}")
        if self.activations is None:
            acts = ("relu",) * (len(widths) - 2) + ("identity",)
        else:
            acts = tuple(self.activations)
        if len(acts) != len(widths) - 1:
            raise ValueError("need one activation per layer")
        for a in acts:
            if a not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        object.__setattr__(self, "activations", acts)

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    @property
    def n_outputs(self) -> int:
        return self.widths[-1]

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in zip(self.widths[:-1], self.widths[1:]))


@dataclass(frozen=True)
class Batch:
    """A mini-batch: (b, m) features with (b, c) targets (one-hot for CE)."""

    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        t = np.asarray(self.targets, dtype=np.float64)
        if t.ndim == 1:
            t = t[:, None]
        if f.ndim != 2 or t.ndim != 2 or f.shape[0] != t.shape[0] or f.shape[0] < 1:
            raise ValueError(f"bad batch shapes: {f.shape} features, {t.shape} targets")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "targets", t)

    @property
    def size(self) -> int:
        return self.features.shape[0]


def _layer_views(spec: MlpSpec, w: np.ndarray):
    """Split the flat parameter vector into per-layer (W, bias) views."""
    if w.ndim != 1 or w.shape[0] != spec.n_params:
        raise ValueError(f"expected {spec.n_params} parameters, got {w.shape}")
    layers = []
    pos = 0
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        W = w[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in)
        pos += fan_in * fan_out
        bias = w[pos : pos + fan_out]
        pos += fan_out
        layers.append((W, bias))
    return layers


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_prime(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        # subgradient at exactly 0 is taken as 0
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def init_params(spec: MlpSpec, seed: int) -> np.ndarray:
    """Seeded parameter init: weights uniform in +-1/sqrt(fan_in), biases 0."""
    rng = np.random.default_rng(seed)
    w = np.empty(spec.n_params, dtype=np.float64)
    pos = 0
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        scale = 1.0 / np.sqrt(fan_in)
        n = fan_in * fan_out
        w[pos : pos + n] = rng.uniform(-scale, scale, size=n)
        pos += n
        w[pos : pos + fan_out] = 0.0
        pos += fan_out
    return w


def _check_input(spec: MlpSpec, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.n_inputs:
        raise ValueError(
            f"input must be (b, {spec.n_inputs}), got {X.shape}"
        )
    return X


def forward(spec: MlpSpec, w: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Batched forward pass; returns a (b, c) output matrix."""
    X = _check_input(spec, X)
    a = X
    for (W, bias), name in zip(_layer_views(spec, w), spec.activations):
        a = _act(name, a @ W.T + bias)
    return a


def _forward_cached(spec: MlpSpec, w: np.ndarray, X: np.ndarray):
    """Forward pass that keeps layer inputs and pre-activations for backprop."""
    X = _check_input(spec, X)
    inputs = []  # activation entering each layer
    preacts = []  # z = a W^T + bias of each layer
    a = X
    for (W, bias), name in zip(_layer_views(spec, w), spec.activations):
        inputs.append(a)
        z = a @ W.T + bias
        preacts.append(z)
        a = _act(name, z)
    return a, inputs, preacts


def _jacobian_for_output(spec, layers, inputs, preacts, k: int) -> np.ndarray:
    """Per-sample gradient of output coordinate k; returns (b, d)."""
    b = inputs[0].shape[0]
    last = len(layers) - 1
    delta = np.zeros((b, spec.widths[-1]))
    delta[:, k] = _act_prime(spec.activations[last], preacts[last])[:, k]

    blocks = [None] * (2 * len(layers))
    for l in range(last, -1, -1):
        W, _ = layers[l]
        a_in = inputs[l]
        # per-sample weight gradient is the outer product delta_i (x) a_i
        gW = np.einsum("bo,bi->boi", delta, a_in).reshape(b, -1)
        blocks[2 * l] = gW
        blocks[2 * l + 1] = delta
        if l > 0:
            delta = (delta @ W) * _act_prime(spec.activations[l - 1], preacts[l - 1])
    return np.concatenate(blocks, axis=1)


def stacked_jacobian(spec: MlpSpec, w: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Exact stacked Jacobian, shape (b*c, d), sample-major row blocks.

    Computed by reverse accumulation with one backward sweep per output
    coordinate; each sweep is vectorized over the batch. Row ``i*c + k``
    holds the gradient of output ``k`` of sample ``i``.
    """
    out, J = forward_and_jacobian(spec, w, X)
    return J


def forward_and_jacobian(spec: MlpSpec, w: np.ndarray, X: np.ndarray):
    """Forward outputs and stacked Jacobian from a single forward pass."""
    out, inputs, preacts = _forward_cached(spec, w, X)
    layers = _layer_views(spec, w)
    b = X.shape[0]
    c = spec.n_outputs
    if c == 1:
        return out, _jacobian_for_output(spec, layers, inputs, preacts, 0)
    J = np.empty((b * c, spec.n_params), dtype=np.float64)
    for k in range(c):
        J[k::c] = _jacobian_for_output(spec, layers, inputs, preacts, k)
    return out, J


def backprop_mean_gradient(spec: MlpSpec, w: np.ndarray, X: np.ndarray, out_grad: np.ndarray):
    """Gradient of sum_i <out_grad[i], phi(x_i; w)> in one backward pass.

    This is the cheap batch-summed gradient first-order methods use; with
    out_grad = dL/d(outputs) it returns dL/dw without per-sample rows.
    Returns (outputs, gradient).
    """
    out, inputs, preacts = _forward_cached(spec, w, X)
    layers = _layer_views(spec, w)
    last = len(layers) - 1
    delta = out_grad * _act_prime(spec.activations[last], preacts[last])
    blocks = [None] * (2 * len(layers))
    for l in range(last, -1, -1):
        W, _ = layers[l]
        blocks[2 * l] = (delta.T @ inputs[l]).ravel()
        blocks[2 * l + 1] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ W) * _act_prime(spec.activations[l - 1], preacts[l - 1])
    return out, np.concatenate(blocks)
