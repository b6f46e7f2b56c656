"""Coordinate MLP used as the parameter encoder, plus Adam and the Lipschitz certificate.

Hidden layers compute ``act(W h + b)``; for the sine activation that is
``sin(omega * (W h + b))`` with one shared frequency ``omega``. The last layer
is affine.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import DimensionError, DomainError
from .tensor import l1_norm_tensor, l1_operator_norm


class Activation(enum.Enum):
    SINE = "sine"
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    GELU = "gelu"


# max |act'(x)| for the non-sine activations
_LIPSCHITZ = {
    Activation.RELU: 1.0,
    Activation.TANH: 1.0,
    Activation.SIGMOID: 0.25,
    Activation.GELU: 1.129,
}

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _act(kind, omega, z):
    if kind is Activation.SINE:
        return np.sin(omega * z)
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.TANH:
        return np.tanh(z)
    if kind is Activation.SIGMOID:
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return 0.5 * z * (1.0 + erf(z / _SQRT2))


def _act_grad(kind, omega, z):
    if kind is Activation.SINE:
        return omega * np.cos(omega * z)
    if kind is Activation.RELU:
        return (z > 0).astype(np.float64)
    if kind is Activation.TANH:
        return 1.0 - np.tanh(z) ** 2
    if kind is Activation.SIGMOID:
        s = 0.5 * (1.0 + np.tanh(0.5 * z))
        return s * (1.0 - s)
    return 0.5 * (1.0 + erf(z / _SQRT2)) + z * _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def _rowwise(x, w):
    # one small product per row; keeps results independent of batch size
    return np.matmul(x[:, None, :], w.T)[:, 0, :]


@dataclass
class Mlp:
    """Layered network ``R^k -> R^d``.

    ``weights[l]`` has shape ``(fan_out, fan_in)``; ``biases[l]`` has length
    ``fan_out``.
    """

    weights: list
    biases: list
    omega: float = 1.0
    activation: Activation = Activation.SINE

    def __post_init__(self):
        self.activation = Activation(self.activation)
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("need one bias per weight matrix and at least one layer")
        if not self.omega > 0:
            raise DomainError(f"omega must be positive, got {self.omega}")
        self.weights = [np.array(w, dtype=np.float64, ndmin=2) for w in self.weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape[0] != w.shape[0]:
                raise DimensionError(f"layer {i}: bias length {b.shape[0]} != fan_out {w.shape[0]}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise DimensionError(f"layer {i}: fan_in {w.shape[1]} != previous fan_out {self.weights[i - 1].shape[0]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DomainError(f"layer {i} has non-finite parameters")

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def output_dim(self):
        return self.weights[-1].shape[0]

    @property
    def depth(self):
        """Number of weight matrices."""
        return len(self.weights)

    @property
    def lipschitz_activation(self):
        if self.activation is Activation.SINE:
            return float(self.omega)
        return _LIPSCHITZ[self.activation]

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self):
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   self.omega, self.activation)

    def layer_shapes(self):
        return [w.shape for w in self.weights]


def init_mlp(input_dim, output_dim, hidden_layers=3, width=100, omega=0.15,
             activation=Activation.SINE, rng=None, first_scale=None):
    """Randomly initialize an MLP with ``hidden_layers`` activated layers.

    Sine nets use frequency-scaled uniform init on the inner hidden layers,
    ``U(-sqrt(6/fan_in)/omega, +sqrt(6/fan_in)/omega)``; the first and last
    layers use ``U(-sqrt(1/fan_in), +sqrt(1/fan_in))``. Other activations use
    the ``sqrt(1/fan_in)`` range everywhere except inner layers, which get the
    ``sqrt(6/fan_in)`` range. Biases start at zero.

    ``first_scale`` (if given) widens the first layer: its weights and biases
    are drawn from ``U(-s, s)`` with ``s = first_scale / omega`` for sine
    nets and ``s = first_scale`` otherwise, so first-layer pre-activations
    vary by up to ``first_scale`` per unit of ``p``. With the plain
    ``sqrt(1/fan_in)`` range and a small ``omega`` the first sine layer is
    nearly linear and the initial features are close to rank-deficient.
    """
    activation = Activation(activation)
    if output_dim < 1 or input_dim < 1:
        raise DimensionError("input and output dimensions must be >= 1")
    rng = np.random.default_rng(rng)
    sizes = [input_dim] + [width] * hidden_layers + [output_dim]
    n_layers = len(sizes) - 1
    weights, biases = [], []
    for i in range(n_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        if 0 < i < n_layers - 1:
            bound = math.sqrt(6.0 / fan_in)
            if activation is Activation.SINE:
                bound /= omega
        else:
            bound = math.sqrt(1.0 / fan_in)
        if i == 0 and first_scale is not None and n_layers > 1:
            wide = first_scale / omega if activation is Activation.SINE else first_scale
            weights.append(rng.uniform(-wide, wide, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-wide, wide, size=fan_out))
            continue
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases, omega, activation)


def _check_points(p, k):
    x = np.asarray(p, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != k:
        raise DimensionError(f"expected points of dimension {k}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite parameter value")
    return x


def mlp_forward(net, p):
    """Evaluate the network at a single point ``p`` (length ``k``)."""
    x = _check_points(p, net.input_dim).reshape(1, -1)
    return mlp_forward_batch(net, x)[0]


def mlp_forward_batch(net, ps):
    """Evaluate at a stack of points (shape ``(B, k)``).

    Row ``i`` of the result is bit-identical to ``mlp_forward(net, ps[i])``.
    """
    h = _check_points(ps, net.input_dim).reshape(-1, net.input_dim)
    last = net.depth - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = _rowwise(h, w) + b
        h = z if i == last else _act(net.activation, net.omega, z)
    return h


def forward_cached(net, ps):
    """Batched forward for training; returns ``(output, cache)``.

    Uses ordinary matrix products (fast, batch-size dependent rounding).
    """
    h = np.asarray(ps, dtype=np.float64).reshape(-1, net.input_dim)
    inputs, pre = [h], []
    last = net.depth - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = z if i == last else _act(net.activation, net.omega, z)
        inputs.append(h)
    return h, (inputs, pre)


def backward_cached(net, cache, upstream):
    """Reverse pass for :func:`forward_cached`.

    ``upstream`` is ``dL/d(output)`` with shape ``(B, d)``. Returns
    ``(grads, d_inputs)`` where ``grads`` is ordered like ``net.params()`` and
    summed over the batch.
    """
    inputs, pre = cache
    delta = np.asarray(upstream, dtype=np.float64).reshape(pre[-1].shape)
    grads = [None] * (2 * net.depth)
    for i in range(net.depth - 1, -1, -1):
        if i != net.depth - 1:
            delta = delta * _act_grad(net.activation, net.omega, pre[i])
        grads[2 * i] = delta.T @ inputs[i]
        grads[2 * i + 1] = delta.sum(axis=0)
        delta = delta @ net.weights[i]
    return grads, delta


@dataclass
class MlpGrads:
    weights: list
    biases: list
    input: np.ndarray


def mlp_backward(net, p, upstream):
    """Gradient of ``<upstream, mlp_forward(net, p)>`` w.r.t. every parameter and ``p``."""
    x = _check_points(p, net.input_dim).reshape(1, -1)
    up = np.asarray(upstream, dtype=np.float64).reshape(1, -1)
    if up.shape[1] != net.output_dim:
        raise DimensionError(f"upstream length {up.shape[1]} != output_dim {net.output_dim}")
    _, cache = forward_cached(net, x)
    grads, dx = backward_cached(net, cache, up)
    return MlpGrads(grads[0::2], grads[1::2], dx[0])


# -- optimizer -----------------------------------------------------------------


@dataclass
class Adam:
    """Bias-corrected Adam over a fixed, ordered list of parameter arrays."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params, grads):
        """Update ``params`` in place and return them."""
        if len(params) != len(grads):
            raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(self.m) != len(params):
            raise DimensionError("parameter list changed length since the first step")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = np.asarray(g, dtype=np.float64)
            if g.shape != p.shape or m.shape != p.shape:
                raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
        return params


# -- Lipschitz certificate --------------------------------------------------------


@dataclass(frozen=True)
class LipschitzCertificate:
    """``bound = kappa * (l_sigma * eta) ** depth``.

    ``eta`` is the largest induced l1 norm over the activated layers; the
    affine read-out layer enters as ``||W_out||_1 / l_sigma`` because it has
    no activation. The bound holds for the l1 distance between parameters.
    """

    kappa: float
    eta: float
    l_sigma: float
    depth: int
    bound: float

    def holds(self, latent, net, p1, p2, rtol=1e-12):
        from .tensor import mode3_apply

        g1 = mode3_apply(latent, mlp_forward(net, p1))
        g2 = mode3_apply(latent, mlp_forward(net, p2))
        lhs = float(np.linalg.norm(g1 - g2))
        dist = float(np.sum(np.abs(np.atleast_1d(p1) - np.atleast_1d(p2))))
        return lhs <= self.bound * dist * (1.0 + rtol) + 1e-300


def lipschitz_certificate(net, latent):
    kappa = l1_norm_tensor(latent)
    l_sigma = net.lipschitz_activation
    norms = [l1_operator_norm(w) for w in net.weights]
    eta = max(norms[:-1] + [norms[-1] / l_sigma])
    depth = net.depth
    return LipschitzCertificate(kappa, eta, l_sigma, depth, kappa * (l_sigma * eta) ** depth)
