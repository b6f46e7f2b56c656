"""The learned mapping: per-component latent tensor plus coordinate MLP.

Each component is ``G_i(p) = post_i(C_i x3 Phi_i(p))`` where ``post_i``
enforces the structure of the component:

* QR ``R`` and Cholesky ``L`` carry hard triangular masks in the latent tensor
  (masked entries are exact zeros and never updated);
* the Cholesky diagonal goes through softplus so it stays positive;
* SVD singular values go through ``abs``. :func:`predict` additionally sorts
  them in descending order, permuting ``U``/``V`` columns to match.
"""

import enum
import io
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DimensionError, DomainError, FormatError, UnsupportedVersionError
from .mlp import Activation, Mlp, backward_cached, forward_cached, init_mlp, mlp_forward_batch
from .tensor import as_tensor3, tensor_from_bytes, tensor_to_bytes

FORMAT_VERSION = 1
MAX_PARAM_DIM = 4


class Op(enum.Enum):
    INVERSE = "inverse"
    SVD = "svd"
    QR = "qr"
    CHOLESKY = "cholesky"
    EXPM = "expm"
    LINSOLVE = "linsolve"


_OP_TAGS = {op: i for i, op in enumerate(Op)}
_ACT_TAGS = {act: i for i, act in enumerate(Activation)}


@dataclass(frozen=True)
class OperationKind:
    """An operation plus its truncation rank (SVD/QR only; ``None`` = full)."""

    op: Op
    rank: int = None

    def __post_init__(self):
        object.__setattr__(self, "op", Op(self.op))
        if self.rank is not None and self.rank < 1:
            raise DimensionError(f"rank must be >= 1, got {self.rank}")

    @classmethod
    def parse(cls, value, rank=None):
        if isinstance(value, OperationKind):
            return value
        return cls(Op(str(value).lower()), rank)

    def effective_rank(self, n1, n2):
        r = min(n1, n2) if self.rank is None else self.rank
        if r > min(n1, n2):
            raise DimensionError(f"rank {r} exceeds min({n1}, {n2})")
        return r

    def component_shapes(self, n1, n2):
        """``[(name, (rows, cols)), ...]`` for an ``n1 x n2`` input matrix."""
        op = self.op
        if op in (Op.INVERSE, Op.CHOLESKY, Op.EXPM, Op.LINSOLVE) and n1 != n2:
            raise DimensionError(f"{op.value} needs a square matrix, got {n1}x{n2}")
        if op is Op.INVERSE:
            return [("inverse", (n1, n1))]
        if op is Op.SVD:
            r = self.effective_rank(n1, n2)
            return [("U", (n1, r)), ("S", (r, 1)), ("V", (n2, r))]
        if op is Op.QR:
            r = self.effective_rank(n1, n2)
            return [("Q", (n1, r)), ("R", (r, n2))]
        if op is Op.CHOLESKY:
            return [("L", (n1, n1))]
        if op is Op.EXPM:
            return [("expm", (n1, n1))]
        return [("x", (n1, 1))]


@dataclass(frozen=True)
class ParamDomain:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise DimensionError("lower and upper bounds must have equal, nonzero length")
        if not all(a < b for a, b in zip(lo, hi)):
            raise DomainError(f"need lower < upper elementwise, got {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, k=1):
        return cls((0.0,) * k, (1.0,) * k)

    @property
    def dim(self):
        return len(self.lower)

    def contains(self, p):
        p = np.atleast_1d(np.asarray(p, dtype=np.float64))
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))

    def sample(self, rng, count):
        return rng.uniform(self.lower, self.upper, size=(count, self.dim))


@dataclass(frozen=True)
class NetConfig:
    hidden_layers: int = 3
    width: int = 100
    omega: float = 0.15
    activation: Activation = Activation.SINE
    first_scale: float = 20.0


def structure_mask(kind, name, shape):
    """Boolean mask of learnable entries, or ``None`` if unconstrained."""
    rows, cols = shape
    if kind.op is Op.QR and name == "R":
        return np.triu(np.ones((rows, cols), dtype=bool))
    if kind.op is Op.CHOLESKY:
        return np.tril(np.ones((rows, cols), dtype=bool))
    return None


@dataclass
class Component:
    name: str
    latent: np.ndarray
    net: Mlp
    mask: np.ndarray = None

    def __post_init__(self):
        self.latent = np.ascontiguousarray(as_tensor3(self.latent, self.name))
        if self.net.output_dim != self.latent.shape[2]:
            raise DimensionError(
                f"component {self.name}: net output {self.net.output_dim} != latent depth {self.latent.shape[2]}")
        if self.mask is not None:
            self.latent[~self.mask] = 0.0

    @property
    def shape(self):
        return self.latent.shape[:2]

    @property
    def d(self):
        return self.latent.shape[2]

    def flat_latent(self):
        """``(n1*n2, d)`` view of the latent tensor (C order)."""
        n1, n2, d = self.latent.shape
        return self.latent.reshape(n1 * n2, d)


class Prediction(list):
    """List of component matrices; ``out_of_domain`` flags extrapolation."""

    out_of_domain = False


@dataclass
class NeuMatCModel:
    kind: OperationKind
    input_shape: tuple
    components: list
    domain: ParamDomain = field(default_factory=ParamDomain.unit)

    def __post_init__(self):
        self.input_shape = tuple(int(x) for x in self.input_shape)
        expected = self.kind.component_shapes(*self.input_shape)
        if [(c.name, tuple(c.shape)) for c in self.components] != [(n, tuple(s)) for n, s in expected]:
            raise DimensionError(f"components do not match {self.kind.op.value} shapes {expected}")
        for c in self.components:
            if c.net.input_dim != self.param_dim:
                raise DimensionError(f"component {c.name}: net input {c.net.input_dim} != param dim {self.param_dim}")

    @property
    def param_dim(self):
        return self.domain.dim

    def params(self):
        """All trainable arrays in a fixed order (latent, then net params, per component)."""
        out = []
        for c in self.components:
            out.append(c.latent)
            out += c.net.params()
        return out

    def copy(self):
        comps = [Component(c.name, c.latent.copy(), c.net.copy(),
                           None if c.mask is None else c.mask.copy()) for c in self.components]
        return NeuMatCModel(self.kind, self.input_shape, comps, self.domain)


# -- structural post-processing ------------------------------------------------------


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus_inv(y):
    y = np.asarray(y, dtype=np.float64)
    # log(expm1(y)) without overflow for large y
    return np.where(y > 30.0, y + np.log1p(-np.exp(-np.minimum(y, 700.0))), np.log(np.expm1(np.maximum(y, 1e-300))))


def _postprocess(kind, name, raw, mask=None):
    """Map raw contractions (shape ``(B, n1, n2)``) to structured outputs."""
    if mask is not None:
        raw = np.where(mask, raw, 0.0)
    if kind.op is Op.SVD and name == "S":
        return np.abs(raw)
    if kind.op is Op.CHOLESKY:
        out = raw.copy()
        idx = np.arange(raw.shape[1])
        out[:, idx, idx] = _softplus(raw[:, idx, idx])
        return out
    return raw


def _postprocess_grad(kind, name, raw, upstream, mask=None):
    if mask is not None:
        upstream = np.where(mask, upstream, 0.0)
    if kind.op is Op.SVD and name == "S":
        return upstream * np.sign(raw)
    if kind.op is Op.CHOLESKY:
        out = upstream.copy()
        idx = np.arange(raw.shape[1])
        out[:, idx, idx] = upstream[:, idx, idx] * _sigmoid(raw[:, idx, idx])
        return out
    return upstream


def raw_target(kind, name, value):
    """Invert the post-processing for a structured target matrix."""
    value = np.asarray(value, dtype=np.float64)
    if kind.op is Op.CHOLESKY:
        out = value.copy()
        idx = np.arange(value.shape[0])
        out[idx, idx] = _softplus_inv(value[idx, idx])
        return out
    return value


# -- inference -------------------------------------------------------------------------


def _as_points(model, ps):
    x = np.asarray(ps, dtype=np.float64)
    if x.ndim <= 1 and model.param_dim == 1:
        x = x.reshape(-1, 1)
    x = x.reshape(-1, model.param_dim)
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite parameter value")
    return x


def _sort_svd(kind, comps):
    u, s, v = comps
    order = np.argsort(-s[:, 0], kind="stable")
    return [u[:, order], s[order], v[:, order]]


def predict_batch(model, ps):
    """Evaluate every component at each point in ``ps``.

    One stacked MLP forward and one stacked latent product per component.
    Element ``i`` is bit-identical to ``predict(model, ps[i])``.
    """
    x = _as_points(model, ps)
    if x.shape[0] == 0:
        return []
    per_comp = []
    for c in model.components:
        phi = mlp_forward_batch(c.net, x)
        flat = np.matmul(phi[:, None, :], c.flat_latent().T)[:, 0, :]
        raw = flat.reshape(x.shape[0], *c.shape)
        per_comp.append(_postprocess(model.kind, c.name, raw, c.mask))
    out = []
    for j in range(x.shape[0]):
        comps = [g[j] for g in per_comp]
        if model.kind.op is Op.SVD:
            comps = _sort_svd(model.kind, comps)
        pred = Prediction(comps)
        pred.out_of_domain = not model.domain.contains(x[j])
        out.append(pred)
    return out


def predict(model, p):
    """Return the list of component matrices ``G_i(p)``.

    Points outside the training domain are evaluated but flagged through
    ``result.out_of_domain`` and a ``RuntimeWarning``.
    """
    x = _as_points(model, p)
    if x.shape[0] != 1:
        raise DimensionError(f"predict takes one point of dimension {model.param_dim}")
    pred = predict_batch(model, x)[0]
    if pred.out_of_domain:
        warnings.warn(f"parameter {x[0].tolist()} is outside the training domain", RuntimeWarning, stacklevel=2)
    return pred


# -- training-path forward / backward -------------------------------------------------


def forward_components(model, ps):
    """Batched forward for training: returns ``(outputs, cache)``.

    ``outputs[i]`` has shape ``(B, n1_i, n2_i)`` and is post-processed but not
    sorted.
    """
    x = _as_points(model, ps)
    outputs, cache = [], []
    for c in model.components:
        phi, net_cache = forward_cached(c.net, x)
        raw = (phi @ c.flat_latent().T).reshape(x.shape[0], *c.shape)
        outputs.append(_postprocess(model.kind, c.name, raw, c.mask))
        cache.append((phi, net_cache, raw))
    return outputs, cache


def backward_components(model, cache, upstream):
    """Gradients for ``model.params()`` given ``dL/d outputs``.

    ``upstream`` entries may be ``None`` for components that do not enter the
    loss.
    """
    grads = []
    for c, (phi, net_cache, raw), up in zip(model.components, cache, upstream):
        if up is None:
            grads.append(np.zeros_like(c.latent))
            grads += [np.zeros_like(p) for p in c.net.params()]
            continue
        d_raw = _postprocess_grad(model.kind, c.name, raw, up, c.mask).reshape(raw.shape[0], -1)
        d_latent = (d_raw.T @ phi).reshape(c.latent.shape)
        if c.mask is not None:
            d_latent[~c.mask] = 0.0
        d_phi = d_raw @ c.flat_latent()
        net_grads, _ = backward_cached(c.net, net_cache, d_phi)
        grads.append(d_latent)
        grads += net_grads
    return grads


# -- construction ------------------------------------------------------------------------


def init_model(kind, input_shape, d, net_config=None, domain=None, dataset=None, seed=None):
    """Create a model with random nets and random or least-squares latents.

    With ``dataset`` (anything with ``params`` and ``targets``), the nets are
    frozen at their initial values and each latent tensor is set to the
    least-squares solution of ``min_C sum_j ||C x3 Phi(p_j) - G(p_j)||_F^2``.
    ``d`` may be an int or one int per component.
    """
    kind = OperationKind.parse(kind)
    n1, n2 = (int(x) for x in input_shape)
    shapes = kind.component_shapes(n1, n2)
    ds = [d] * len(shapes) if np.isscalar(d) else list(d)
    if len(ds) != len(shapes):
        raise DimensionError(f"{kind.op.value} has {len(shapes)} components, got {len(ds)} latent dims")
    if any(int(x) < 1 for x in ds):
        raise DimensionError(f"latent dimension must be >= 1, got {ds}")
    cfg = net_config or NetConfig()
    domain = domain or ParamDomain.unit()
    if domain.dim > MAX_PARAM_DIM:
        raise DimensionError(f"parameter dimension {domain.dim} exceeds {MAX_PARAM_DIM}")
    rng = np.random.default_rng(seed)
    comps = []
    for (name, (rows, cols)), di in zip(shapes, ds):
        di = int(di)
        net = init_mlp(domain.dim, di, cfg.hidden_layers, cfg.width, cfg.omega, cfg.activation, rng,
                       cfg.first_scale)
        latent = rng.standard_normal((rows, cols, di)) / np.sqrt(di)
        mask = structure_mask(kind, name, (rows, cols))
        comps.append(Component(name, latent, net, mask))
    model = NeuMatCModel(kind, (n1, n2), comps, domain)
    if dataset is not None:
        fit_latents(model, dataset.params, dataset.targets)
    return model


def fit_latents(model, params, targets, rcond=None):
    """Least-squares latent fit with the nets held fixed (in place).

    Returns the per-component residual norms of the fit. When there are fewer
    points than latent dimensions the minimum-norm solution is used.
    """
    if targets is None:
        raise ArgumentError("least-squares fit needs targets")
    x = _as_points(model, params)
    residuals = []
    for i, c in enumerate(model.components):
        phi = mlp_forward_batch(c.net, x)
        rhs = np.stack([raw_target(model.kind, c.name, t[i]).reshape(-1) for t in targets])
        sol, *_ = np.linalg.lstsq(phi, rhs, rcond=rcond)
        c.latent[...] = sol.T.reshape(c.latent.shape)
        if c.mask is not None:
            c.latent[~c.mask] = 0.0
        residuals.append(float(np.linalg.norm(phi @ c.flat_latent().T - rhs)))
    return residuals


# -- serialization -----------------------------------------------------------------------

_U8 = struct.Struct("<B")
_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")


def model_to_bytes(model):
    out = io.BytesIO()
    w = out.write
    w(b"NMC1")
    w(_U8.pack(FORMAT_VERSION))
    w(_U8.pack(_OP_TAGS[model.kind.op]))
    w(_U64.pack(model.kind.rank or 0))
    w(_U64.pack(model.param_dim))
    for x in model.domain.lower + model.domain.upper:
        w(_F64.pack(x))
    w(_U64.pack(model.input_shape[0]))
    w(_U64.pack(model.input_shape[1]))
    w(_U64.pack(len(model.components)))
    for c in model.components:
        n1, n2, d = c.latent.shape
        w(struct.pack("<3Q", n1, n2, d))
        w(tensor_to_bytes(c.latent))
        w(_U64.pack(c.net.depth))
        for wt, b in zip(c.net.weights, c.net.biases):
            w(struct.pack("<2Q", *wt.shape))
            w(tensor_to_bytes(wt))
            w(tensor_to_bytes(b))
        w(_F64.pack(c.net.omega))
        w(_U8.pack(_ACT_TAGS[c.net.activation]))
    return out.getvalue()


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def unpack(self, st, what):
        if self.pos + st.size > len(self.buf):
            raise FormatError(f"truncated file while reading {what}", offset=self.pos)
        vals = st.unpack_from(self.buf, self.pos)
        self.pos += st.size
        return vals if len(vals) > 1 else vals[0]

    def blob(self, shape, what):
        start = self.pos
        arr, self.pos = tensor_from_bytes(self.buf, self.pos)
        padded = tuple(shape) + (1,) * (3 - len(shape))
        if arr.shape != padded:
            raise FormatError(f"{what} blob has shape {arr.shape}, expected {padded}", offset=start)
        return arr.reshape(shape)


def model_from_bytes(buf):
    r = _Reader(buf)
    if buf[:4] != b"NMC1":
        raise FormatError("bad model magic", offset=0)
    r.pos = 4
    version = r.unpack(_U8, "version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported model format version {version} (expected {FORMAT_VERSION})", offset=4)
    tag_pos = r.pos
    tag = r.unpack(_U8, "kind tag")
    ops = list(Op)
    if tag >= len(ops):
        raise FormatError(f"unknown operation tag {tag}", offset=tag_pos)
    rank = r.unpack(_U64, "rank")
    k = r.unpack(_U64, "parameter dimension")
    if not 1 <= k <= MAX_PARAM_DIM:
        raise FormatError(f"invalid parameter dimension {k}", offset=r.pos - 8)
    bounds = [r.unpack(_F64, "domain bounds") for _ in range(2 * k)]
    n1 = r.unpack(_U64, "input rows")
    n2 = r.unpack(_U64, "input cols")
    m = r.unpack(_U64, "component count")
    kind = OperationKind(ops[tag], rank or None)
    try:
        shapes = kind.component_shapes(n1, n2)
    except DimensionError as exc:
        raise FormatError(str(exc), offset=r.pos) from None
    if m != len(shapes):
        raise FormatError(f"component count {m} does not match {kind.op.value}", offset=r.pos - 8)
    comps = []
    acts = list(Activation)
    for name, (rows, cols) in shapes:
        start = r.pos
        c_n1, c_n2, d = r.unpack(struct.Struct("<3Q"), "component header")
        if (c_n1, c_n2) != (rows, cols) or d < 1:
            raise FormatError(f"component {name} has shape ({c_n1}, {c_n2}, {d})", offset=start)
        latent = r.blob((rows, cols, d), "latent")
        depth = r.unpack(_U64, "layer count")
        weights, biases = [], []
        for _ in range(depth):
            start = r.pos
            fan_out, fan_in = r.unpack(struct.Struct("<2Q"), "layer shape")
            weights.append(r.blob((fan_out, fan_in), "weight"))
            biases.append(r.blob((fan_out,), "bias"))
        omega = r.unpack(_F64, "omega")
        act_pos = r.pos
        act = r.unpack(_U8, "activation tag")
        if act >= len(acts):
            raise FormatError(f"unknown activation tag {act}", offset=act_pos)
        try:
            net = Mlp(weights, biases, omega, acts[act])
            comps.append(Component(name, latent, net, structure_mask(kind, name, (rows, cols))))
        except (DimensionError, DomainError) as exc:
            raise FormatError(f"invalid component {name}: {exc}", offset=start) from None
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes", offset=r.pos)
    domain = ParamDomain(tuple(bounds[:k]), tuple(bounds[k:]))
    return NeuMatCModel(kind, (n1, n2), comps, domain)


def save_model(model, path):
    data = model_to_bytes(model)
    with open(path, "wb") as fh:
        fh.write(data)


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
