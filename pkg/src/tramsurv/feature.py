"""Fully connected feature extractor with an explicit forward/backward pass.

Parameters live in a single flat vector with a deterministic layout (per
layer: weight matrix row-major, then bias), which keeps SGD updates and
serialization trivial.  The forward pass records the per-layer inputs needed
by the backward pass; no external autodiff framework is involved, so results
are bitwise reproducible.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, TapeMismatch

_ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class ExtractorSpec:
    """Architecture of the feature extractor.

    Empty ``hidden_dims`` denotes a single linear map.  The final layer is
    always linear; the activation applies to hidden layers only.
    """

    input_dim: int
    hidden_dims: tuple = ()
    output_dim: int = 1
    activation: str = "tanh"
    init_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.output_dim < 1:
            raise DimensionMismatch("extractor dimensions must be positive")
        if any(h < 1 for h in self.hidden_dims):
            raise DimensionMismatch("hidden layer widths must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]


def param_count(spec: ExtractorSpec) -> int:
    return sum(fan_in * fan_out + fan_out for fan_in, fan_out in spec.layer_dims)


def split_params(spec: ExtractorSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """View the flat parameter vector as per-layer (weights, bias) pairs."""
    params = np.asarray(params, dtype=float)
    if params.shape != (param_count(spec),):
        raise DimensionMismatch(
            f"expected {param_count(spec)} extractor parameters, got {params.shape}"
        )
    layers = []
    pos = 0
    for fan_in, fan_out in spec.layer_dims:
        w = params[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = params[pos : pos + fan_out]
        pos += fan_out
        layers.append((w, b))
    return layers


def flatten_params(layers) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in layers])


def init_params(spec: ExtractorSpec, seed: int) -> np.ndarray:
    """Deterministic initialization: uniform weights scaled by 1/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in spec.layer_dims:
        bound = spec.init_scale / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append((w, np.zeros(fan_out)))
    return flatten_params(layers)


def identity_params(spec: ExtractorSpec) -> np.ndarray:
    """Parameters of the identity map; requires a square single linear layer."""
    if spec.hidden_dims or spec.input_dim != spec.output_dim:
        raise DimensionMismatch("identity extractor needs a square single linear layer")
    return flatten_params([(np.eye(spec.input_dim), np.zeros(spec.output_dim))])


@dataclass
class Tape:
    """Forward-pass record consumed by :func:`backward`."""

    spec: ExtractorSpec
    inputs: list = field(default_factory=list)  # input to each layer, post-activation
    single: bool = False


def forward(spec: ExtractorSpec, params: np.ndarray, x) -> tuple[np.ndarray, Tape]:
    """Evaluate the extractor; accepts a single vector or a batch matrix.

    Returns the features and a tape for the backward pass.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.ndim != 2 or a.shape[1] != spec.input_dim:
        raise DimensionMismatch(
            f"expected covariates of dimension {spec.input_dim}, got shape {x.shape}"
        )
    layers = split_params(spec, params)
    tape = Tape(spec=spec, single=single)
    for i, (w, b) in enumerate(layers):
        tape.inputs.append(a)
        z = a @ w + b
        if i < len(layers) - 1:
            a = np.tanh(z) if spec.activation == "tanh" else np.maximum(z, 0.0)
        else:
            a = z
    return (a[0] if single else a), tape


def backward(
    spec: ExtractorSpec, params: np.ndarray, tape: Tape, upstream
) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-mode pass: gradients w.r.t. parameters and the input.

    ``upstream`` is d(loss)/d(features) with the same leading shape as the
    forward input.  The result is linear in ``upstream``.
    """
    if tape.spec != spec:
        raise TapeMismatch("tape was recorded under a different extractor spec")
    layers = split_params(spec, params)
    if len(tape.inputs) != len(layers):
        raise TapeMismatch("tape does not match the extractor depth")
    upstream = np.asarray(upstream, dtype=float)
    delta = upstream[None, :] if tape.single else upstream
    if delta.shape != (tape.inputs[0].shape[0], spec.output_dim):
        raise DimensionMismatch(
            f"upstream shape {upstream.shape} does not match the recorded forward pass"
        )
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a_in = tape.inputs[i]
        grads[i] = (a_in.T @ delta, delta.sum(axis=0))
        delta = delta @ w.T
        if i > 0:
            # derivative of the hidden activation, reconstructed from its output
            h = tape.inputs[i]
            delta = delta * (1.0 - h * h) if spec.activation == "tanh" else delta * (h > 0.0)
    grad_x = delta[0] if tape.single else delta
    return flatten_params(grads), grad_x
