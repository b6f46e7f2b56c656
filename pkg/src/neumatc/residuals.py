"""Algebraic structure residuals, the data term and the total training loss.

Residual blocks per operation:

========== ==================================================
inverse    ``A G - I``
svd        ``A - U diag(S) V^T``, ``U^T U - I``, ``V^T V - I``
qr         ``A - Q R``, ``Q^T Q - I``
cholesky   ``A - L L^T``
expm       ``A G - G A`` (commutation; necessary, not sufficient)
linsolve   ``A x - b``
========== ==================================================

All blocks are weighted equally.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, DimensionError
from .model import Op, OperationKind, backward_components, forward_components


@dataclass
class ResidualSet:
    blocks: dict
    squared_fro_total: float = field(init=False)

    def __post_init__(self):
        self.squared_fro_total = float(sum(np.sum(np.square(b)) for b in self.blocks.values()))


@dataclass(frozen=True)
class LossBreakdown:
    data_fidelity: float
    structure: float
    lam: float

    @property
    def total(self):
        return self.data_fidelity + self.lam * self.structure


def structure_residual(kind, a, g_hat, b=None):
    """Residual blocks of one prediction ``g_hat`` (list of components) against ``A``."""
    kind = OperationKind.parse(kind)
    op = kind.op
    comps = [np.asarray(g, dtype=np.float64) for g in g_hat]
    if op is Op.LINSOLVE:
        if b is None:
            raise ArgumentError("linsolve residual needs the right-hand side b")
        x = comps[0].reshape(-1)
        r = a @ x - np.asarray(b, dtype=np.float64).reshape(-1)
        return ResidualSet({"system": np.asarray(r).reshape(-1, 1)})
    a = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=np.float64)
    if op is Op.INVERSE:
        g = comps[0]
        _check(a.shape[1] == g.shape[0], a, g)
        return ResidualSet({"inverse": a @ g - np.eye(a.shape[0])})
    if op is Op.SVD:
        u, s, v = comps[0], comps[1].reshape(-1), comps[2]
        _check(u.shape[0] == a.shape[0] and v.shape[0] == a.shape[1], a, u)
        r = s.shape[0]
        return ResidualSet({
            "reconstruction": a - (u * s) @ v.T,
            "orthoU": u.T @ u - np.eye(r),
            "orthoV": v.T @ v - np.eye(r),
        })
    if op is Op.QR:
        q, rr = comps
        _check(q.shape[0] == a.shape[0] and rr.shape[1] == a.shape[1], a, q)
        return ResidualSet({"reconstruction": a - q @ rr, "orthoQ": q.T @ q - np.eye(q.shape[1])})
    if op is Op.CHOLESKY:
        low = comps[0]
        _check(low.shape == a.shape, a, low)
        return ResidualSet({"reconstruction": a - low @ low.T})
    g = comps[0]
    _check(g.shape == a.shape, a, g)
    return ResidualSet({"commutation": a @ g - g @ a})


def _check(ok, a, g):
    if not ok:
        raise DimensionError(f"prediction shape {g.shape} inconsistent with input {a.shape}")


def data_fidelity(g_hat, g_target):
    """Sum over components of ``||G_hat_i - G_i||_F^2``."""
    if len(g_hat) != len(g_target):
        raise DimensionError(f"{len(g_hat)} predicted components vs {len(g_target)} targets")
    total = 0.0
    for gh, gt in zip(g_hat, g_target):
        gh = np.asarray(gh, dtype=np.float64)
        gt = np.asarray(gt, dtype=np.float64)
        if gh.size != gt.size:
            raise DimensionError(f"component shapes differ: {gh.shape} vs {gt.shape}")
        total += float(np.sum(np.square(gh.reshape(gt.shape) - gt)))
    return total


# -- batched terms used by training --------------------------------------------------


@dataclass
class Supervised:
    """Supervised points: ``params`` (N x k) and per-point target component lists."""

    params: np.ndarray
    targets: list

    def __len__(self):
        return 0 if self.params is None else len(self.params)


@dataclass
class Collocation:
    """Collocation points with the input matrices evaluated there.

    ``matrices`` is a dense ``(M, n1, n2)`` stack or a list of sparse matrices;
    ``rhs`` is needed for linear solves (one shared vector or ``(M, n)``).
    """

    points: np.ndarray
    matrices: object
    rhs: np.ndarray = None

    def __len__(self):
        return 0 if self.points is None else len(self.points)


def _stacked_targets(targets, index, shape):
    return np.stack([np.asarray(t[index], dtype=np.float64).reshape(shape) for t in targets])


def data_terms(outputs, targets):
    """Data-fidelity value and ``dL/d outputs`` for batched outputs."""
    value, grads = 0.0, []
    for i, out in enumerate(outputs):
        diff = out - _stacked_targets(targets, i, out.shape[1:])
        value += float(np.sum(diff * diff))
        grads.append(2.0 * diff)
    return value, grads


def _rhs_rows(rhs, count, n):
    b = np.asarray(rhs, dtype=np.float64)
    if b.size == n:
        return np.broadcast_to(b.reshape(1, n), (count, n))
    return b.reshape(count, n)


def structure_terms(kind, matrices, outputs, rhs=None):
    """Per-point squared residual norms and ``dL/d outputs`` (unweighted).

    ``outputs`` are batched components as produced by
    :func:`neumatc.model.forward_components`.
    """
    op = kind.op
    if op is Op.LINSOLVE:
        if rhs is None:
            raise ArgumentError("linsolve residual needs the right-hand side b")
        x = outputs[0][:, :, 0]
        count, n = x.shape
        b = _rhs_rows(rhs, count, n)
        if isinstance(matrices, list) and sp.issparse(matrices[0]):
            res = np.stack([matrices[j] @ x[j] for j in range(count)]) - b
            grad = np.stack([matrices[j].T @ res[j] for j in range(count)])
        else:
            a = np.asarray(matrices)
            res = np.einsum("bij,bj->bi", a, x) - b
            grad = np.einsum("bij,bi->bj", a, res)
        return np.sum(res * res, axis=1), [2.0 * grad[:, :, None]]
    a = np.asarray(matrices, dtype=np.float64)
    at = np.swapaxes(a, 1, 2)
    if op is Op.INVERSE:
        g = outputs[0]
        r = a @ g
        idx = np.arange(r.shape[1])
        r[:, idx, idx] -= 1.0
        return _sq(r), [2.0 * at @ r]
    if op is Op.SVD:
        u, s, v = outputs[0], outputs[1][:, :, 0], outputs[2]
        us = u * s[:, None, :]
        r1 = a - us @ np.swapaxes(v, 1, 2)
        r2 = np.swapaxes(u, 1, 2) @ u
        r3 = np.swapaxes(v, 1, 2) @ v
        idx = np.arange(s.shape[1])
        r2[:, idx, idx] -= 1.0
        r3[:, idx, idx] -= 1.0
        r1v = r1 @ v
        du = -2.0 * r1v * s[:, None, :] + 4.0 * u @ r2
        dv = -2.0 * np.swapaxes(r1, 1, 2) @ us + 4.0 * v @ r3
        ds = -2.0 * np.einsum("bik,bik->bk", u, r1v)
        return _sq(r1) + _sq(r2) + _sq(r3), [du, ds[:, :, None], dv]
    if op is Op.QR:
        q, rr = outputs
        r1 = a - q @ rr
        r2 = np.swapaxes(q, 1, 2) @ q
        idx = np.arange(r2.shape[1])
        r2[:, idx, idx] -= 1.0
        dq = -2.0 * r1 @ np.swapaxes(rr, 1, 2) + 4.0 * q @ r2
        dr = -2.0 * np.swapaxes(q, 1, 2) @ r1
        return _sq(r1) + _sq(r2), [dq, dr]
    if op is Op.CHOLESKY:
        low = outputs[0]
        r1 = a - low @ np.swapaxes(low, 1, 2)
        return _sq(r1), [-2.0 * (r1 + np.swapaxes(r1, 1, 2)) @ low]
    g = outputs[0]
    r = a @ g - g @ a
    return _sq(r), [2.0 * (at @ r - r @ at)]


def _sq(x):
    return np.sum(x * x, axis=(1, 2))


def loss_and_grad(model, data, col, lam, need_grad=True):
    """Total loss ``data + lam * structure`` and its gradient w.r.t. ``model.params()``."""
    grads = None
    fid = 0.0
    struct = 0.0
    if data is not None and len(data):
        out, cache = forward_components(model, data.params)
        fid, d_out = data_terms(out, data.targets)
        if need_grad:
            grads = backward_components(model, cache, d_out)
    if col is not None and len(col) and lam != 0.0:
        out, cache = forward_components(model, col.points)
        per_point, d_out = structure_terms(model.kind, col.matrices, out, col.rhs)
        struct = float(np.sum(per_point))
        if need_grad:
            g2 = backward_components(model, cache, [lam * d for d in d_out])
            grads = g2 if grads is None else [x + y for x, y in zip(grads, g2)]
    if need_grad and grads is None:
        grads = [np.zeros_like(p) for p in model.params()]
    return LossBreakdown(fid, struct, lam), grads


def total_loss(model, data, col, lam):
    """Loss breakdown: data fidelity over ``data``, structure over ``col``."""
    if col is not None and len(col) and lam == 0.0:
        # structure value is still reported for lam == 0
        out, _ = forward_components(model, col.points)
        per_point, _ = structure_terms(model.kind, col.matrices, out, col.rhs)
        fid = loss_and_grad(model, data, None, lam, need_grad=False)[0].data_fidelity
        return LossBreakdown(fid, float(np.sum(per_point)), lam)
    return loss_and_grad(model, data, col, lam, need_grad=False)[0]


def total_loss_grad(model, data, col, lam):
    """Gradients of :func:`total_loss` ordered like ``model.params()``."""
    return loss_and_grad(model, data, col, lam)[1]
