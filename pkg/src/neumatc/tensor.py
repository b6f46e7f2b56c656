"""Dense matrix / third-order tensor helpers and the mode-3 algebra.

Matrices are 2-D float64 ndarrays and third-order tensors are 3-D float64
ndarrays of shape ``(n1, n2, n3)`` stored C-contiguous, so each mode-3 fiber
``t[i1, i2, :]`` is contiguous.

The mode-3 unfolding places ``t[i1, i2, i3]`` at row ``i3`` and column
``j = i1 + i2 * n1`` (0-based), i.e. the (i1, i2) pairs are enumerated with
``i1`` running fastest.
"""

import struct

import numpy as np

from .errors import DimensionError, DomainError, FormatError

BLOB_MAGIC = b"NMC1"
_SHAPE = struct.Struct("<3Q")


def as_matrix(m, name="matrix"):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} has non-finite entries")
    return a


def as_tensor3(t, name="tensor"):
    a = np.asarray(t, dtype=np.float64)
    if a.ndim != 3:
        raise DimensionError(f"{name} must be 3-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} has non-finite entries")
    return np.ascontiguousarray(a)


def mode3_unfold(t):
    """Return the ``n3 x (n1*n2)`` mode-3 unfolding of ``t``."""
    t = as_tensor3(t)
    n1, n2, n3 = t.shape
    # (i3, i2, i1) row-major == column index i1 + i2*n1
    return np.ascontiguousarray(t.transpose(2, 1, 0).reshape(n3, n2 * n1))


def mode3_fold(m, n1, n2):
    """Inverse of :func:`mode3_unfold`."""
    m = as_matrix(m)
    n3, cols = m.shape
    if cols != n1 * n2:
        raise DimensionError(f"cannot fold {m.shape} into ({n1}, {n2}, {n3}): need {n1 * n2} columns")
    return np.ascontiguousarray(m.reshape(n3, n2, n1).transpose(2, 1, 0))


def mode3_apply(c, v):
    """Contract the third axis of ``c`` against the vector ``v``.

    Computed as ``Fold3(v @ C_(3))``: one vector-matrix product over the
    unfolded layout, O(n1*n2*d).
    """
    c = as_tensor3(c)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    n1, n2, n3 = c.shape
    if v.shape[0] != n3:
        raise DimensionError(f"vector length {v.shape[0]} does not match tensor depth {n3}")
    row = v @ mode3_unfold(c)
    return row.reshape(n2, n1).T.copy()


def fro_norm(m):
    return float(np.sqrt(np.sum(np.square(np.asarray(m, dtype=np.float64)))))


def l1_norm_tensor(t):
    """Entrywise l1 norm, sum of |t_ijk|."""
    return float(np.sum(np.abs(np.asarray(t, dtype=np.float64))))


def l1_operator_norm(m):
    """Induced l1 operator norm: maximum absolute column sum."""
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(m), axis=0)))


# -- binary blobs ------------------------------------------------------------


def tensor_to_bytes(t):
    """Serialize a tensor (or a matrix/vector padded to 3 axes) to a blob."""
    a = np.asarray(t, dtype=np.float64)
    shape = tuple(a.shape) + (1,) * (3 - a.ndim)
    if len(shape) != 3:
        raise DimensionError(f"blobs hold at most 3 axes, got {a.shape}")
    return BLOB_MAGIC + _SHAPE.pack(*shape) + np.ascontiguousarray(a, dtype="<f8").tobytes()


def tensor_from_bytes(buf, offset=0):
    """Parse a blob at ``offset``; return ``(tensor, next_offset)``."""
    if buf[offset:offset + 4] != BLOB_MAGIC:
        raise FormatError("bad tensor blob magic", offset=offset)
    start = offset + 4
    if len(buf) < start + _SHAPE.size:
        raise FormatError("truncated tensor blob header", offset=start)
    shape = _SHAPE.unpack_from(buf, start)
    start += _SHAPE.size
    count = shape[0] * shape[1] * shape[2]
    end = start + 8 * count
    if len(buf) < end:
        raise FormatError(f"truncated tensor blob data: need {8 * count} bytes", offset=start)
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=start).astype(np.float64)
    return data.reshape(shape), end
