"""Parametric matrix families, target computation and the sequence file format."""

import struct
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import baselines
from .errors import ArgumentError, DimensionError, FormatError, SolverFailure
from .model import Op, OperationKind, ParamDomain, _OP_TAGS
from .residuals import structure_residual
from .tensor import tensor_from_bytes, tensor_to_bytes


@dataclass
class ParametricDataset:
    """Matrices ``A(p_j)`` at parameter points, optionally with targets.

    ``inputs`` is a dense ``(N, n1, n2)`` array or a list of sparse matrices.
    ``split`` labels each point ``"train"`` or ``"test"``. ``source`` (when
    present) evaluates ``A(p)`` at arbitrary points, which collocation needs.
    """

    kind: OperationKind
    params: np.ndarray
    inputs: object
    targets: list = None
    rhs: np.ndarray = None
    domain: ParamDomain = field(default_factory=ParamDomain.unit)
    metadata: dict = field(default_factory=dict)
    split: np.ndarray = None
    source: object = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = OperationKind.parse(self.kind)
        params = np.asarray(self.params, dtype=np.float64)
        self.params = params.reshape(len(params), params.shape[1] if params.ndim > 1 else -1 if len(params) else 1)
        n = len(self.params)
        if len(self.inputs) != n:
            raise DimensionError(f"{n} parameter points but {len(self.inputs)} input matrices")
        if self.targets is not None and len(self.targets) != n:
            raise DimensionError(f"{n} parameter points but {len(self.targets)} targets")
        if self.split is None:
            self.split = np.array(["train"] * n)
        self.split = np.asarray(self.split)
        if self.kind.op is Op.LINSOLVE and self.rhs is None:
            raise ArgumentError("linear-solve datasets need a right-hand side")

    def __len__(self):
        return len(self.params)

    @property
    def sparse(self):
        return isinstance(self.inputs, list) and len(self.inputs) > 0 and sp.issparse(self.inputs[0])

    @property
    def input_shape(self):
        return tuple(self.inputs[0].shape)

    def subset(self, index):
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        inputs = [self.inputs[i] for i in index] if isinstance(self.inputs, list) else self.inputs[index]
        targets = None if self.targets is None else [self.targets[i] for i in index]
        extras = {k: v[index] for k, v in self.extras.items()}
        return replace(self, params=self.params[index], inputs=inputs, targets=targets,
                       split=self.split[index], extras=extras)

    def train(self):
        return self.subset(self.split == "train")

    def test(self):
        return self.subset(self.split == "test")

    def matrices_at(self, points):
        """``A`` at each point: dense stack or list of sparse matrices."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.params.shape[1])
        if self.source is None:
            lookup = {tuple(p): i for i, p in enumerate(self.params)}
            try:
                idx = [lookup[tuple(p)] for p in points]
            except KeyError as exc:
                raise ArgumentError(f"no matrix stored at parameter {exc.args[0]}; dataset has no generator") from None
            return [self.inputs[i] for i in idx] if isinstance(self.inputs, list) else self.inputs[idx]
        mats = [self.source(p) for p in points]
        return mats if sp.issparse(mats[0]) else np.stack(mats) if mats else np.zeros((0,) + self.input_shape)

    def sample_candidates(self, rng, count):
        """Uniform draws from the domain, or from stored points without a generator."""
        if self.source is not None:
            return self.domain.sample(rng, count)
        idx = rng.choice(len(self.params), size=min(count, len(self.params)), replace=False)
        return self.params[np.sort(idx)]


def _grid(n_train, n_test):
    train = np.linspace(0.0, 1.0, n_train)
    test = (np.arange(n_test) + 0.5) / n_test
    params = np.concatenate([train, test]).reshape(-1, 1)
    split = np.array(["train"] * n_train + ["test"] * n_test)
    return params, split


# -- sinusoidal family -----------------------------------------------------------------


@dataclass(frozen=True)
class SinusoidalGenConfig:
    """``H(p) = A(p) B(p)^T + eps I`` with sinusoidal ``n x r`` factors.

    ``eps=None`` picks ``eps_rel * max_p ||A(p) B(p)^T||_2`` over the
    generated points, which keeps ``H`` away from singularity.
    """

    n: int = 64
    r: int = 8
    eps: float = None
    eps_rel: float = 0.5
    seed: int = 0
    n_train: int = 40
    n_test: int = 100
    kind: str = "inverse"
    rank: int = None

    def __post_init__(self):
        if self.r < 1 or self.n < self.r:
            raise ArgumentError(f"need n >= r >= 1, got n={self.n}, r={self.r}")
        if self.eps is not None and not self.eps > 0:
            raise ArgumentError(f"eps must be positive, got {self.eps}")


def gen_sinusoidal(cfg):
    rng = np.random.default_rng(cfg.seed)
    n, r = cfg.n, cfg.r
    decay = np.arange(1, r + 1) ** -0.5
    a0 = rng.standard_normal((n, r)) * decay
    b0 = rng.standard_normal((n, r)) * decay
    fa = rng.uniform(0.5, 1.5, (n, r))
    fb = rng.uniform(0.5, 1.5, (n, r))
    pa = rng.uniform(0.0, 2 * np.pi, (n, r))
    pb = rng.uniform(0.0, 2 * np.pi, (n, r))

    def low_rank(p):
        p = float(np.asarray(p).reshape(-1)[0])
        return (a0 * np.sin(2 * np.pi * fa * p + pa)) @ (b0 * np.cos(2 * np.pi * fb * p + pb)).T

    params, split = _grid(cfg.n_train, cfg.n_test)
    products = np.stack([low_rank(p) for p in params])
    eps = cfg.eps
    if eps is None:
        eps = cfg.eps_rel * max(np.linalg.norm(m, 2) for m in products)
    eye = np.eye(n)

    def source(p):
        return low_rank(p) + eps * eye

    inputs = products + eps * eye
    meta = {"generator": "sinusoidal", "n": n, "r": r, "eps": float(eps), "seed": cfg.seed,
            "n_train": cfg.n_train, "n_test": cfg.n_test}
    return ParametricDataset(OperationKind.parse(cfg.kind, cfg.rank), params, inputs, domain=ParamDomain.unit(),
                             metadata=meta, split=split, source=source, extras={"low_rank": products})


# -- controlled parametric rank ------------------------------------------------------


@dataclass(frozen=True)
class ControlledRankGenConfig:
    """``H(p) = U(p) S(p) V(p)^T`` with each factor ``C x3 phi(p)``.

    ``phi`` holds ``d`` Gaussian radial basis functions with equispaced centres
    on [0, 1] and width ``rbf_width * spacing``. Slices of ``C_U``/``C_V`` are
    ``E + perturbation * G / sqrt(n)`` (``E`` = leading identity columns), so
    for ``r = n`` the family stays well conditioned. Singular-value
    coefficients are ``(k+1)^-sv_decay * U(0.5, 1.5)``.
    """

    n: int = 64
    r: int = None
    d: int = 5
    rbf_width: float = 1.5
    perturbation: float = 0.25
    sv_decay: float = 0.5
    seed: int = 0
    n_train: int = 20
    n_test: int = 100
    kind: str = "inverse"
    rank: int = None

    def __post_init__(self):
        r = self.n if self.r is None else self.r
        if self.d < 1:
            raise ArgumentError(f"parametric rank d must be >= 1, got {self.d}")
        if not 1 <= r <= self.n:
            raise ArgumentError(f"need 1 <= r <= n, got r={r}, n={self.n}")


def rbf_features(p, d, width_factor=1.5):
    """``d`` Gaussian bumps at equispaced centres on [0, 1]; ``d == 1`` gives a constant."""
    p = np.asarray(p, dtype=np.float64).reshape(-1, 1)
    if d == 1:
        return np.ones((p.shape[0], 1))
    centres = np.linspace(0.0, 1.0, d)
    width = width_factor * (centres[1] - centres[0])
    return np.exp(-0.5 * ((p - centres) / width) ** 2)


def gen_controlled_rank(cfg):
    rng = np.random.default_rng(cfg.seed)
    n, d = cfg.n, cfg.d
    r = n if cfg.r is None else cfg.r
    base = np.eye(n, r)[:, :, None]
    c_u = base + cfg.perturbation * rng.standard_normal((n, r, d)) / np.sqrt(n)
    c_v = base + cfg.perturbation * rng.standard_normal((n, r, d)) / np.sqrt(n)
    c_s = ((np.arange(r) + 1.0) ** -cfg.sv_decay)[:, None] * rng.uniform(0.5, 1.5, (r, d))

    def factors(p):
        phi = rbf_features(p, d, cfg.rbf_width)[0]
        return c_u @ phi, c_s @ phi, c_v @ phi

    def source(p):
        u, s, v = factors(p)
        return (u * s) @ v.T

    params, split = _grid(cfg.n_train, cfg.n_test)
    us, ss, vs = zip(*(factors(p) for p in params))
    inputs = np.stack([(u * s) @ v.T for u, s, v in zip(us, ss, vs)])
    meta = {"generator": "controlled_rank", "n": n, "r": r, "d": d, "seed": cfg.seed,
            "rbf_width": cfg.rbf_width, "perturbation": cfg.perturbation, "sv_decay": cfg.sv_decay,
            "n_train": cfg.n_train, "n_test": cfg.n_test}
    extras = {"U": np.stack(us), "S": np.stack(ss), "V": np.stack(vs)}
    return ParametricDataset(OperationKind.parse(cfg.kind, cfg.rank), params, inputs, metadata=meta,
                             split=split, source=source, extras=extras)


# -- 2-D Fourier family ----------------------------------------------------------------


@dataclass(frozen=True)
class Fourier2dGenConfig:
    """``A(p) = B(p) B(p)^T + eps I`` with ``B_ij(p1, p2) = sum_k alpha_ijk phi_k(p1, p2)``."""

    n: int = 32
    n_basis: int = 9
    eps: float = 1.0
    grid: int = 50
    train_fraction: float = 0.05
    n_test: int = 100
    seed: int = 0
    kind: str = "inverse"

    def __post_init__(self):
        if self.n_basis < 1 or self.grid < 2 or not self.eps > 0:
            raise ArgumentError("need n_basis >= 1, grid >= 2 and eps > 0")


def fourier_basis_2d(p, count):
    """First ``count`` tensor-product Fourier functions on [0, 1]^2, constant first."""
    p = np.asarray(p, dtype=np.float64).reshape(-1, 2)
    one_d = []
    freq = 0
    while len(one_d) < count + 1:
        if freq == 0:
            one_d.append(lambda x: np.ones_like(x))
        else:
            one_d.append(lambda x, f=freq: np.cos(2 * np.pi * f * x))
            one_d.append(lambda x, f=freq: np.sin(2 * np.pi * f * x))
        freq += 1
    cols = []
    total = 0
    # enumerate pairs (i, j) by increasing i + j
    while len(cols) < count:
        for i in range(total + 1):
            j = total - i
            if i < len(one_d) and j < len(one_d) and len(cols) < count:
                cols.append(one_d[i](p[:, 0]) * one_d[j](p[:, 1]))
        total += 1
    return np.stack(cols, axis=1)


def gen_2d_fourier(cfg):
    rng = np.random.default_rng(cfg.seed)
    n, k = cfg.n, cfg.n_basis
    alpha = rng.standard_normal((n, n, k)) / np.sqrt(n * k)
    eye = np.eye(n)

    def source(p):
        b = alpha @ fourier_basis_2d(p, k)[0]
        return b @ b.T + cfg.eps * eye

    axis = np.linspace(0.0, 1.0, cfg.grid)
    grid = np.array([(a, b) for a in axis for b in axis])
    n_train = max(1, int(round(cfg.train_fraction * len(grid))))
    order = rng.permutation(len(grid))
    train_idx = np.sort(order[:n_train])
    test_idx = np.sort(order[n_train:n_train + cfg.n_test])
    params = np.concatenate([grid[train_idx], grid[test_idx]])
    split = np.array(["train"] * len(train_idx) + ["test"] * len(test_idx))
    inputs = np.stack([source(p) for p in params])
    meta = {"generator": "fourier2d", "n": n, "n_basis": k, "eps": cfg.eps, "grid": cfg.grid,
            "train_fraction": cfg.train_fraction, "seed": cfg.seed}
    return ParametricDataset(OperationKind.parse(cfg.kind), params, inputs, domain=ParamDomain.unit(2),
                             metadata=meta, split=split, source=source)


# -- advection-diffusion-reaction ---------------------------------------------------------


@dataclass
class AdrAssembly:
    """``A(p) = A0 + cos(2 pi p) A1 + sin(2 pi p) A2`` on a ``g x g`` interior grid."""

    g: int
    velocity: float
    a0: sp.csr_matrix
    a1: sp.csr_matrix
    a2: sp.csr_matrix
    b: np.ndarray

    @property
    def size(self):
        return self.g * self.g

    def matrix(self, p):
        angle = 2.0 * np.pi * (float(np.asarray(p).reshape(-1)[0]) % 1.0)
        m = self.a0 + np.cos(angle) * self.a1 + np.sin(angle) * self.a2
        return baselines.as_csr(m)


def _difference_1d(g, h):
    """Central first difference and second difference with zero Dirichlet ends."""
    ones = np.ones(g)
    d1 = sp.diags([-ones[1:], ones[1:]], [-1, 1]) / (2.0 * h)
    d2 = sp.diags([ones[1:], -2.0 * ones, ones[1:]], [-1, 0, 1]) / (h * h)
    return d1, d2


def assemble_adr(g=32, n_points=200, n_train=40, velocity=50.0):
    """Finite-difference ``-lap(u) + v(p).grad(u) + u = 1`` on the unit square.

    Unknown ``(i, j)`` (x index ``i``, y index ``j``) sits at row ``i + g*j``.
    Returns ``(assembly, dataset)``; the dataset has ``n_train`` supervised
    points on a uniform grid and ``n_points`` test points at cell midpoints.
    """
    if g < 3:
        raise ArgumentError(f"grid size must be >= 3, got {g}")
    h = 1.0 / (g + 1)
    d1, d2 = _difference_1d(g, h)
    eye = sp.identity(g)
    lap = sp.kron(eye, d2) + sp.kron(d2, eye)
    a0 = baselines.as_csr(-lap + sp.identity(g * g))
    a1 = baselines.as_csr(velocity * sp.kron(eye, d1))
    a2 = baselines.as_csr(velocity * sp.kron(d1, eye))
    b = np.ones(g * g)
    asm = AdrAssembly(g, velocity, a0, a1, a2, b)
    params, split = _grid(n_train, n_points)
    inputs = [asm.matrix(p) for p in params]
    meta = {"generator": "adr", "g": g, "velocity": velocity, "n_points": n_points, "n_train": n_train}
    ds = ParametricDataset(OperationKind(Op.LINSOLVE), params, inputs, rhs=b, metadata=meta,
                           split=split, source=asm.matrix)
    return asm, ds


def normalize_scale(dataset):
    """Divide every ``A(p)`` (and the generator) by the largest spectral norm over the points.

    Relative errors and orthogonality residuals are unchanged by the scaling;
    it puts reconstruction and orthogonality blocks of the structure loss on
    comparable scales. Targets, if present, are dropped; recompute them.
    """
    if dataset.kind.op is Op.LINSOLVE:
        raise ArgumentError("scaling A alone changes a linear system's solution")
    scale = max(np.linalg.norm(a.toarray() if sp.issparse(a) else a, 2) for a in dataset.inputs)
    factor = 1.0 / scale
    inputs = [a * factor for a in dataset.inputs] if isinstance(dataset.inputs, list) else dataset.inputs * factor
    src = dataset.source
    source = None if src is None else (lambda p: factor * src(p))
    meta = dict(dataset.metadata, scale=float(factor))
    extras = dict(dataset.extras)
    return replace(dataset, inputs=inputs, targets=None, source=source, metadata=meta, extras=extras)


# -- SVD alignment -------------------------------------------------------------------------


def align_svd_sequence(factors, permute=False):
    """Make an ordered sequence of thin SVD factors continuous in the parameter.

    Each frame's columns are matched to the previous frame: optionally
    permuted by greedy matching on ``|U_prev^T U_cur|`` (this handles
    singular-value crossings), then sign-flipped (``U`` and ``V`` together) so
    that ``diag(U_prev^T U_cur) >= 0``. ``U diag(S) V^T`` is unchanged.
    """
    out = []
    prev = None
    for u, s, v in factors:
        u = np.array(u, dtype=np.float64)
        s = np.array(s, dtype=np.float64).reshape(-1)
        v = np.array(v, dtype=np.float64)
        if prev is not None:
            overlap = prev.T @ u
            if permute:
                order = _greedy_match(np.abs(overlap))
                u, s, v = u[:, order], s[order], v[:, order]
                overlap = overlap[:, order]
            signs = np.where(np.diag(overlap) < 0, -1.0, 1.0)
            u = u * signs
            v = v * signs
        out.append((u, s, v))
        prev = u
    return out


def _greedy_match(score):
    """``order[i]`` = current column assigned to previous column ``i``."""
    r = score.shape[0]
    order = -np.ones(r, dtype=int)
    used_prev, used_cur = set(), set()
    flat = np.argsort(-score, axis=None, kind="stable")
    for f in flat:
        i, j = divmod(int(f), r)
        if i in used_prev or j in used_cur:
            continue
        order[i] = j
        used_prev.add(i)
        used_cur.add(j)
        if len(used_prev) == r:
            break
    return order


# -- targets ------------------------------------------------------------------------------


def solve_point(kind, a, rhs=None, tol=1e-12):
    """Target components at one point using the in-repo solvers."""
    op = kind.op
    if op is Op.INVERSE:
        return [baselines.lu_invert(a)]
    if op is Op.SVD:
        u, s, v = baselines.dense_svd(a)
        r = kind.effective_rank(*a.shape)
        return [u[:, :r], s[:r].reshape(-1, 1), v[:, :r]]
    if op is Op.QR:
        q, rr = baselines.qr_decompose(a)
        r = kind.effective_rank(*a.shape)
        return [q[:, :r], rr[:r]]
    if op is Op.CHOLESKY:
        return [baselines.cholesky(a)]
    if op is Op.EXPM:
        return [baselines.expm(a)]
    if sp.issparse(a):
        x, _ = baselines.sparse_solve(a, rhs, "bicgstab", tol=tol)
    else:
        x = baselines.lu_solve(a, rhs)
    return [x.reshape(-1, 1)]


def compute_targets(dataset, align=True, permute=False):
    """Return a copy of ``dataset`` with solver targets at every point.

    SVD targets are aligned along the (ordered) parameter sequence; the
    alignment runs separately over the train and test subsets so each one is
    continuous.
    """
    targets, failures = [], []
    for p, a in zip(dataset.params, dataset.inputs):
        try:
            targets.append(solve_point(dataset.kind, a, dataset.rhs))
        except ArithmeticError as exc:
            failures.append((p.tolist(), exc))
            targets.append(None)
    if failures:
        raise SolverFailure(failures)
    if dataset.kind.op is Op.SVD and align:
        for label in np.unique(dataset.split):
            idx = np.flatnonzero(dataset.split == label)
            idx = idx[np.lexsort(dataset.params[idx].T[::-1])]
            aligned = align_svd_sequence([(t[0], t[1], t[2]) for t in (targets[i] for i in idx)], permute)
            for i, (u, s, v) in zip(idx, aligned):
                targets[i] = [u, s.reshape(-1, 1), v]
    return replace(dataset, targets=targets)


def max_target_residual(dataset):
    """Largest structure-residual norm of the stored targets (the self-check gate).

    For truncated SVD/QR only the orthogonality blocks are checked.
    """
    worst = 0.0
    n1, n2 = dataset.input_shape
    truncated = dataset.kind.op in (Op.SVD, Op.QR) and dataset.kind.effective_rank(n1, n2) < min(n1, n2)
    for a, t in zip(dataset.inputs, dataset.targets):
        res = structure_residual(dataset.kind, a, t, dataset.rhs)
        for name, block in res.blocks.items():
            if truncated and name == "reconstruction":
                continue
            scale = 1.0
            if name == "system":
                scale = np.linalg.norm(dataset.rhs)
            elif name == "reconstruction":
                scale = max(np.linalg.norm(a.toarray() if sp.issparse(a) else a), 1e-300)
            worst = max(worst, float(np.linalg.norm(block)) / scale)
    return worst


# -- sequence files ------------------------------------------------------------------------

SEQ_MAGIC = b"NMS1"
_SEQ_HEADER = struct.Struct("<4sBQQ")
_SHAPE2 = struct.Struct("<2Q")


def sequence_to_bytes(dataset):
    """``NMS1``, kind tag, count, k, then per record ``p`` + shape + matrix blob."""
    out = [_SEQ_HEADER.pack(SEQ_MAGIC, _OP_TAGS[dataset.kind.op], len(dataset), dataset.params.shape[1])]
    for p, a in zip(dataset.params, dataset.inputs):
        a = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=np.float64)
        out.append(np.asarray(p, dtype="<f8").tobytes())
        out.append(_SHAPE2.pack(*a.shape))
        out.append(tensor_to_bytes(a))
    return b"".join(out)


def sequence_from_bytes(buf, rank=None):
    if len(buf) < _SEQ_HEADER.size:
        raise FormatError("truncated sequence header", record=None, offset=0)
    magic, tag, count, k = _SEQ_HEADER.unpack_from(buf, 0)
    if magic != SEQ_MAGIC:
        raise FormatError("bad sequence magic", offset=0)
    ops = list(Op)
    if tag >= len(ops) or not 1 <= k <= 4:
        raise FormatError(f"invalid kind tag {tag} or parameter dimension {k}", offset=4)
    pos = _SEQ_HEADER.size
    params, mats = [], []
    shape = None
    for rec in range(count):
        need = 8 * k + _SHAPE2.size
        if len(buf) < pos + need:
            raise FormatError("truncated record header", record=rec)
        params.append(np.frombuffer(buf, dtype="<f8", count=k, offset=pos).astype(np.float64))
        pos += 8 * k
        rows, cols = _SHAPE2.unpack_from(buf, pos)
        pos += _SHAPE2.size
        try:
            blob, pos = tensor_from_bytes(buf, pos)
        except FormatError as exc:
            raise FormatError(f"bad matrix blob: {exc}", record=rec) from None
        if blob.shape != (rows, cols, 1):
            raise FormatError(f"matrix blob shape {blob.shape[:2]} != declared ({rows}, {cols})", record=rec)
        if shape is None:
            shape = (rows, cols)
        elif (rows, cols) != shape:
            raise FormatError(f"matrix shape ({rows}, {cols}) differs from first record {shape}", record=rec)
        mats.append(blob[:, :, 0])
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after {count} records", record=count)
    params = np.array(params).reshape(count, k)
    inputs = np.stack(mats) if mats else np.zeros((0, 0, 0))
    lower = params.min(axis=0) if count else np.zeros(k)
    upper = params.max(axis=0) if count else np.ones(k)
    upper = np.where(upper > lower, upper, lower + 1.0)
    kind = OperationKind(ops[tag], rank)
    rhs = np.ones(shape[0]) if kind.op is Op.LINSOLVE and shape else None
    return ParametricDataset(kind, params, inputs, rhs=rhs, domain=ParamDomain(tuple(lower), tuple(upper)),
                             metadata={"generator": "file"})


def save_sequence(dataset, path):
    with open(path, "wb") as fh:
        fh.write(sequence_to_bytes(dataset))


def load_sequence(path, rank=None):
    with open(path, "rb") as fh:
        return sequence_from_bytes(fh.read(), rank)


# -- target files ---------------------------------------------------------------------

TARGET_MAGIC = b"NMT1"


def targets_to_bytes(targets):
    """``NMT1``, count, components per record, then one blob per component."""
    m = len(targets[0]) if targets else 0
    out = [TARGET_MAGIC, struct.pack("<2Q", len(targets), m)]
    for comps in targets:
        out += [tensor_to_bytes(c) for c in comps]
    return b"".join(out)


def targets_from_bytes(buf):
    if buf[:4] != TARGET_MAGIC:
        raise FormatError("bad target-file magic", offset=0)
    if len(buf) < 20:
        raise FormatError("truncated target-file header", offset=4)
    count, m = struct.unpack_from("<2Q", buf, 4)
    pos = 20
    targets = []
    for rec in range(count):
        comps = []
        for _ in range(m):
            try:
                blob, pos = tensor_from_bytes(buf, pos)
            except FormatError as exc:
                raise FormatError(f"bad target blob: {exc}", record=rec) from None
            comps.append(blob[:, :, 0])
        targets.append(comps)
    return targets
