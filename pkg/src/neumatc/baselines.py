"""Direct and randomized solvers used to produce targets and as comparators.

All routines are written on top of plain numpy array operations; none of
them calls into ``numpy.linalg`` for the factorization itself.
"""

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, ConvergenceError, DimensionError, NotPositiveDefiniteError, SingularMatrixError

_EPS = np.finfo(np.float64).eps


def _square(a, what):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{what} needs a square matrix, got shape {a.shape}")
    return a


# -- LU --------------------------------------------------------------------------------


def lu_factor(a):
    """Partial-pivoting LU, packed: returns ``(lu, perm)`` with ``A[perm] = L U``."""
    a = _square(a, "lu_factor")
    n = a.shape[0]
    lu = a.copy()
    perm = np.arange(n)
    scale = np.max(np.abs(a)) if a.size else 0.0
    tol = n * _EPS * scale
    for k in range(n):
        piv = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[piv, k]) <= tol:
            raise SingularMatrixError(f"zero pivot at index {k}", pivot=k)
        if piv != k:
            lu[[k, piv]] = lu[[piv, k]]
            perm[[k, piv]] = perm[[piv, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm


def lu_substitute(lu, perm, b):
    """Solve with a packed factorization; ``b`` may be a vector or a matrix."""
    b = np.asarray(b, dtype=np.float64)
    vec = b.ndim == 1
    y = b[perm].reshape(b.shape[0], -1).copy()
    n = lu.shape[0]
    for i in range(1, n):
        y[i] -= lu[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] -= lu[i, i + 1:] @ y[i + 1:]
        y[i] /= lu[i, i]
    return y[:, 0] if vec else y


def lu_solve(a, b):
    a = _square(a, "lu_solve")
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"rhs has {b.shape[0]} rows, matrix has {a.shape[0]}")
    return lu_substitute(*lu_factor(a), b)


def lu_invert(a):
    a = _square(a, "lu_invert")
    return lu_substitute(*lu_factor(a), np.eye(a.shape[0]))


# -- Householder QR -------------------------------------------------------------------


def qr_decompose(a):
    """Reduced Householder QR ``A = Q R`` with ``Q: n1 x r``, ``R: r x n2``, ``r = min(n1, n2)``.

    Signs are fixed so that ``diag(R) >= 0``.
    """
    a = np.array(a, dtype=np.float64, ndmin=2)
    m, n = a.shape
    r = min(m, n)
    R = a.copy()
    vs = []
    for k in range(r):
        x = R[k:, k]
        alpha = np.linalg.norm(x)
        v = x.copy()
        if alpha == 0.0:
            vs.append(None)
            continue
        v[0] += np.copysign(alpha, x[0]) if x[0] != 0 else alpha
        v /= np.linalg.norm(v)
        R[k:, k:] -= 2.0 * np.outer(v, v @ R[k:, k:])
        vs.append(v)
    Q = np.eye(m, r)
    for k in range(r - 1, -1, -1):
        v = vs[k]
        if v is not None:
            Q[k:, :] -= 2.0 * np.outer(v, v @ Q[k:, :])
    R = np.triu(R[:r, :])
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs, R * signs[:, None]


# -- Cholesky -------------------------------------------------------------------------


def cholesky(a):
    """Lower-triangular ``L`` with positive diagonal and ``A = L L^T``."""
    a = _square(a, "cholesky")
    if not np.allclose(a, a.T, rtol=1e-12, atol=1e-14 * max(1.0, np.max(np.abs(a)))):
        raise NotPositiveDefiniteError("matrix is not symmetric", minor=None)
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        s = a[j, j] - L[j, :j] @ L[j, :j]
        if not s > 0:
            raise NotPositiveDefiniteError(f"leading minor {j + 1} is not positive definite", minor=j + 1)
        L[j, j] = np.sqrt(s)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


# -- matrix exponential ------------------------------------------------------------------

_PADE13 = (64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
           129060195264000.0, 10559470521600.0, 670442572800.0, 33522128640.0, 1323241920.0,
           40840800.0, 960960.0, 16380.0, 182.0, 1.0)
_THETA13 = 5.371920351148152


def expm(a):
    """Scaling-and-squaring with a degree-13 Padé approximant."""
    a = _square(a, "expm")
    n = a.shape[0]
    norm1 = np.max(np.sum(np.abs(a), axis=0)) if n else 0.0
    s = max(0, int(np.ceil(np.log2(norm1 / _THETA13)))) if norm1 > _THETA13 else 0
    x = a / (2.0 ** s)
    b = _PADE13
    ident = np.eye(n)
    x2 = x @ x
    x4 = x2 @ x2
    x6 = x4 @ x2
    u = x @ (x6 @ (b[13] * x6 + b[11] * x4 + b[9] * x2) + b[7] * x6 + b[5] * x4 + b[3] * x2 + b[1] * ident)
    v = x6 @ (b[12] * x6 + b[10] * x4 + b[8] * x2) + b[6] * x6 + b[4] * x4 + b[2] * x2 + b[0] * ident
    r = lu_solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


# -- one-sided Jacobi SVD ----------------------------------------------------------------


def _round_robin(n):
    """Tournament schedule: ``n - 1`` rounds of disjoint index pairs (``n`` even)."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        rounds.append((np.array(players[:half]), np.array(players[half:][::-1])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _complete_basis(u, filled):
    """Replace columns not in ``filled`` with an orthonormal completion."""
    m, r = u.shape
    basis = [u[:, j] for j in range(r) if filled[j]]
    cols = u.copy()
    e = 0
    for j in range(r):
        if filled[j]:
            continue
        while True:
            v = np.zeros(m)
            v[e % m] = 1.0
            e += 1
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                break
        v /= nv
        basis.append(v)
        cols[:, j] = v
    return cols


def dense_svd(a, tol=None, max_sweeps=60):
    """Thin SVD ``A = U diag(S) V^T`` by one-sided (Hestenes) Jacobi.

    Disjoint column pairs are rotated together in a round-robin order.
    Returns ``U: n1 x r``, ``S`` (length ``r``, descending), ``V: n2 x r``
    with ``r = min(n1, n2)``.
    """
    a = np.array(a, dtype=np.float64, ndmin=2)
    m, n = a.shape
    if m < n:
        v, s, u = dense_svd(a.T, tol, max_sweeps)
        return u, s, v
    tol = tol if tol is not None else 10.0 * m * _EPS
    work = a.copy()
    vmat = np.eye(n)
    npad = n + (n % 2)
    if npad != n:
        work = np.hstack([work, np.zeros((m, 1))])
        vmat = np.pad(vmat, ((0, 1), (0, 1)))
    rounds = _round_robin(npad)
    for _ in range(max_sweeps):
        rotated = False
        for left, right in rounds:
            ui, uj = work[:, left], work[:, right]
            alpha = np.einsum("ij,ij->j", ui, ui)
            beta = np.einsum("ij,ij->j", uj, uj)
            gamma = np.einsum("ij,ij->j", ui, uj)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not np.any(active):
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t = np.where(zeta == 0.0, 1.0, t)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)
            work[:, left], work[:, right] = c * ui - s * uj, s * ui + c * uj
            vi, vj = vmat[:, left], vmat[:, right]
            vmat[:, left], vmat[:, right] = c * vi - s * vj, s * vi + c * vj
        if not rotated:
            break
    else:
        raise ConvergenceError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")
    work, vmat = work[:, :n], vmat[:n, :n]
    sig = np.linalg.norm(work, axis=0)
    order = np.argsort(-sig, kind="stable")
    sig, work, vmat = sig[order], work[:, order], vmat[:, order]
    filled = sig > (sig[0] if n else 0.0) * m * _EPS
    u = np.zeros((m, n))
    u[:, filled] = work[:, filled] / sig[filled]
    if not np.all(filled):
        u = _complete_basis(u, filled)
        sig = np.where(filled, sig, 0.0)
    return u, sig, vmat


# -- randomized SVD ----------------------------------------------------------------------


def _sketch_svd(a, omega, rank, power_iters):
    y = a @ omega
    for _ in range(power_iters):
        q, _ = qr_decompose(y)
        y = a @ (a.T @ q)
    q, _ = qr_decompose(y)
    ub, s, v = dense_svd(q.T @ a)
    return (q @ ub)[:, :rank], s[:rank], v[:, :rank]


def _check_rank(shape, rank, oversample):
    if rank < 1 or rank + oversample > min(shape):
        raise ArgumentError(f"rank + oversample = {rank + oversample} must be in [1, {min(shape)}]")


def rsvd(a, rank, oversample=10, power_iters=1, seed=0):
    """Randomized range-finder SVD; returns ``U: n1 x rank``, ``S``, ``V: n2 x rank``."""
    a = np.array(a, dtype=np.float64, ndmin=2)
    _check_rank(a.shape, rank, oversample)
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((a.shape[1], rank + oversample))
    return _sketch_svd(a, omega, rank, power_iters)


def crsvd(inputs, rank, oversample=10, power_iters=1, seed=0):
    """Randomized SVD of a matrix family using one shared Gaussian sketch."""
    mats = [np.array(a, dtype=np.float64, ndmin=2) for a in inputs]
    if not mats:
        return []
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise DimensionError("crsvd needs matrices of one shape")
    _check_rank(shape, rank, oversample)
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((shape[1], rank + oversample))
    return [_sketch_svd(a, omega, rank, power_iters) for a in mats]


# -- sparse iterative solvers -----------------------------------------------------------


def as_csr(a):
    """Sorted, finite CSR matrix (scipy storage)."""
    m = sp.csr_matrix(a, dtype=np.float64)
    m.sort_indices()
    if not np.all(np.isfinite(m.data)):
        raise ArgumentError("sparse matrix has non-finite values")
    return m


def sparse_solve(a, b, method="bicgstab", tol=1e-10, max_iter=None, x0=None):
    """Krylov solve of ``A x = b``; ``cg`` assumes SPD, ``bicgstab`` does not.

    Returns ``(x, iterations)``. Raises :class:`ConvergenceError` carrying the
    final relative residual when ``tol`` is not reached.
    """
    a = as_csr(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"sparse_solve needs a square matrix, got {a.shape}")
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    n = a.shape[0]
    max_iter = max_iter or 10 * n
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if bnorm == 0.0:
        return np.zeros(n), 0
    r = b - a @ x
    if np.linalg.norm(r) <= tol * bnorm:
        return x, 0
    if method == "cg":
        p = r.copy()
        rr = r @ r
        for it in range(1, max_iter + 1):
            ap = a @ p
            pap = p @ ap
            if pap <= 0:
                raise ConvergenceError("CG breakdown: matrix not positive definite", np.sqrt(rr) / bnorm)
            alpha = rr / pap
            x += alpha * p
            r -= alpha * ap
            rr_new = r @ r
            if np.sqrt(rr_new) <= tol * bnorm:
                return x, it
            p = r + (rr_new / rr) * p
            rr = rr_new
        raise ConvergenceError(f"CG did not converge in {max_iter} iterations", np.sqrt(rr) / bnorm)
    if method != "bicgstab":
        raise ArgumentError(f"unknown method {method!r}; use 'cg' or 'bicgstab'")
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    for it in range(1, max_iter + 1):
        rho_new = r_hat @ r
        if rho_new == 0.0:
            raise ConvergenceError("BiCGSTAB breakdown (rho = 0)", np.linalg.norm(r) / bnorm)
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        v = a @ p
        alpha = rho / (r_hat @ v)
        s = r - alpha * v
        if np.linalg.norm(s) <= tol * bnorm:
            x += alpha * p
            return x, it
        t = a @ s
        tt = t @ t
        if tt == 0.0:
            raise ConvergenceError("BiCGSTAB breakdown (t = 0)", np.linalg.norm(s) / bnorm)
        omega = (t @ s) / tt
        x += alpha * p + omega * s
        r = s - omega * t
        # recompute the true residual before declaring convergence
        if np.linalg.norm(r) <= tol * bnorm:
            true_r = np.linalg.norm(b - a @ x)
            if true_r <= tol * bnorm:
                return x, it
            r = b - a @ x
        if omega == 0.0:
            raise ConvergenceError("BiCGSTAB breakdown (omega = 0)", np.linalg.norm(r) / bnorm)
    raise ConvergenceError(f"BiCGSTAB did not converge in {max_iter} iterations", np.linalg.norm(r) / bnorm)
