"""Accuracy metrics, the analytic FLOP model and the timing harness.

FLOPs count a multiply-add as two operations.
"""

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import baselines
from .errors import DomainError, FormatError
from .model import Op, OperationKind, predict_batch

CSV_COLUMNS = ["scenario_id", "method", "n", "d", "mean_relerr", "p50_time_ms", "flops"]


def _dense(a):
    return a.toarray() if sp.issparse(a) else np.asarray(a, dtype=np.float64)


def _ratio(num, den):
    if den == 0.0:
        raise DomainError("relative error undefined: reference has zero norm")
    return num / den


def relerr(kind, a, g_hat, b=None, reference=None):
    """Relative error of one prediction.

    * inverse: ``||A G - I||_F^2 / ||I||_F^2``
    * svd/qr/cholesky: ``||reconstruction - A||_F^2 / ||A||_F^2``
    * expm: ``||G - expm(A)||_F^2 / ||expm(A)||_F^2`` (``reference`` or computed)
    * linsolve: ``||A x - b||_2 / ||b||_2``
    """
    kind = OperationKind.parse(kind)
    op = kind.op
    comps = [np.asarray(g, dtype=np.float64) for g in g_hat]
    if op is Op.LINSOLVE:
        bb = np.asarray(b, dtype=np.float64).reshape(-1)
        r = a @ comps[0].reshape(-1) - bb
        return _ratio(float(np.linalg.norm(r)), float(np.linalg.norm(bb)))
    a = _dense(a)
    if op is Op.INVERSE:
        r = a @ comps[0] - np.eye(a.shape[0])
        return _ratio(float(np.sum(r * r)), float(a.shape[0]))
    if op is Op.EXPM:
        ref = baselines.expm(a) if reference is None else np.asarray(reference, dtype=np.float64)
        return _ratio(float(np.sum((comps[0] - ref) ** 2)), float(np.sum(ref * ref)))
    if op is Op.SVD:
        u, s, v = comps
        recon = (u * s.reshape(-1)) @ v.T
    elif op is Op.QR:
        recon = comps[0] @ comps[1]
    else:
        recon = comps[0] @ comps[0].T
    return _ratio(float(np.sum((recon - a) ** 2)), float(np.sum(a * a)))


# -- FLOP model ---------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """One benchmark setting.

    ``hidden_layers`` counts activated layers, so the MLP has
    ``hidden_layers + 1`` weight matrices (``0`` = direct linear read-out).
    """

    kind: OperationKind
    n: int
    d: int = 20
    width: int = 100
    hidden_layers: int = 3
    param_dim: int = 1
    rank: int = None
    scenario_id: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "kind", OperationKind.parse(self.kind, self.rank))


def mlp_flops(param_dim, d, width, hidden_layers):
    sizes = [param_dim] + [width] * hidden_layers + [d]
    return sum(2 * a * b for a, b in zip(sizes[:-1], sizes[1:]))


def neumatc_flops(scenario):
    """MLP forward plus latent product, summed over components."""
    total = 0
    for _, (rows, cols) in scenario.kind.component_shapes(scenario.n, scenario.n):
        total += mlp_flops(scenario.param_dim, scenario.d, scenario.width, scenario.hidden_layers)
        total += 2 * rows * cols * scenario.d
    return total


def baseline_flops(scenario):
    """Standard closed-form counts per baseline at matrix size ``n``."""
    n = scenario.n
    r = scenario.kind.effective_rank(n, n)
    return {
        "lu_factor": 2 * n**3 // 3,
        "lu_inverse": 8 * n**3 // 3,
        "lu_solve": 2 * n**3 // 3 + 2 * n**2,
        "qr_householder": 4 * n**3 // 3,
        "cholesky": n**3 // 3,
        "expm_pade13": 6 * 2 * n**3 + 8 * n**3 // 3,
        "svd_jacobi_sweep": 6 * n**3,
        "rsvd": 4 * n * n * (r + 10) + 2 * n * (r + 10) ** 2,
    }


def flop_model(scenario):
    """``{"neumatc": count, <baseline>: count, ...}`` per point."""
    out = {"neumatc": neumatc_flops(scenario)}
    out.update(baseline_flops(scenario))
    return out


# -- timing harness ------------------------------------------------------------------


def time_call(fn, repeats=5, warmup=2):
    """Median wall time in ms over ``repeats`` calls after ``warmup`` discarded calls."""
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(times))


@dataclass
class MethodResult:
    method: str
    per_point_relerr: list
    p50_time_ms: float
    flops: int
    train_time_ms: float = 0.0

    @property
    def mean_relerr(self):
        return float(np.mean(self.per_point_relerr)) if self.per_point_relerr else float("nan")


@dataclass
class MetricReport:
    scenario: Scenario
    results: list = field(default_factory=list)

    def rows(self):
        s = self.scenario
        return [[s.scenario_id, r.method, s.n, s.d, r.mean_relerr, r.p50_time_ms, r.flops] for r in self.results]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow([row[0], row[1], row[2], row[3], repr(float(row[4])), repr(float(row[5])), row[6]])
        return buf.getvalue()


def parse_report_csv(text):
    """Rows of a report CSV as dicts with typed values."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("empty report") from None
    if header != CSV_COLUMNS:
        raise FormatError(f"unexpected header {header}")
    rows = []
    for i, rec in enumerate(reader):
        if len(rec) != len(CSV_COLUMNS):
            raise FormatError(f"expected {len(CSV_COLUMNS)} fields, got {len(rec)}", record=i)
        try:
            rows.append({"scenario_id": rec[0], "method": rec[1], "n": int(rec[2]), "d": int(rec[3]),
                         "mean_relerr": float(rec[4]), "p50_time_ms": float(rec[5]), "flops": int(rec[6])})
        except ValueError as exc:
            raise FormatError(str(exc), record=i) from None
    return rows


def _baseline_solver(kind, name):
    """``fn(a, b) -> components`` for a named baseline, or ``None`` if not applicable."""
    op = kind.op
    table = {
        (Op.INVERSE, "lu"): lambda a, b: [baselines.lu_invert(a)],
        (Op.LINSOLVE, "lu"): lambda a, b: [baselines.lu_solve(_dense(a), b).reshape(-1, 1)],
        (Op.LINSOLVE, "bicgstab"): lambda a, b: [baselines.sparse_solve(a, b, "bicgstab", tol=1e-8)[0].reshape(-1, 1)],
        (Op.QR, "householder"): lambda a, b: list(baselines.qr_decompose(a)),
        (Op.CHOLESKY, "cholesky"): lambda a, b: [baselines.cholesky(a)],
        (Op.EXPM, "pade13"): lambda a, b: [baselines.expm(a)],
    }
    if op is Op.SVD:

        def svd(a, b):
            u, s, v = baselines.dense_svd(a)
            k = kind.effective_rank(*a.shape)
            return [u[:, :k], s[:k], v[:, :k]]

        def rsvd(a, b):
            k = kind.effective_rank(*a.shape)
            return list(baselines.rsvd(a, k, oversample=min(10, min(a.shape) - k)))

        table[(op, "jacobi_svd")] = svd
        table[(op, "rsvd")] = rsvd
    return table.get((op, name))


_BASELINE_FLOP_KEY = {"lu": "lu_inverse", "householder": "qr_householder", "cholesky": "cholesky",
                      "pade13": "expm_pade13", "jacobi_svd": "svd_jacobi_sweep", "rsvd": "rsvd",
                      "bicgstab": "lu_solve"}


def run_benchmark(scenario, dataset, models=None, baseline_names=(), repeats=5, warmup=2, train_times=None):
    """Evaluate models and baselines on every point of ``dataset``.

    Model timing covers one batched prediction over all points divided by the
    point count; baseline timing runs the solver point by point. Times are
    medians over ``repeats`` after ``warmup`` runs.
    """
    models = models or {}
    train_times = train_times or {}
    report = MetricReport(scenario)
    count = len(dataset)
    flops = flop_model(scenario)
    for name, model in models.items():
        preds = predict_batch(model, dataset.params)
        errs = [relerr(dataset.kind, a, g, dataset.rhs) for a, g in zip(dataset.inputs, preds)]
        t = time_call(lambda: predict_batch(model, dataset.params), repeats, warmup) / max(count, 1)
        report.results.append(MethodResult(name, errs, t, flops["neumatc"], train_times.get(name, 0.0)))
    for name in baseline_names:
        solver = _baseline_solver(dataset.kind, name)
        if solver is None:
            raise ValueError(f"baseline {name!r} does not apply to {dataset.kind.op.value}")
        outs = [solver(a, dataset.rhs) for a in dataset.inputs]
        errs = [relerr(dataset.kind, a, g, dataset.rhs) for a, g in zip(dataset.inputs, outs)]

        def run_all():
            for a in dataset.inputs:
                solver(a, dataset.rhs)

        t = time_call(run_all, repeats, warmup) / max(count, 1)
        op_flops = flops.get(_BASELINE_FLOP_KEY.get(name, ""), 0)
        if dataset.kind.op is Op.LINSOLVE and name == "lu":
            op_flops = flops["lu_solve"]
        report.results.append(MethodResult(name, errs, t, op_flops))
    return report


def default_baselines(kind):
    return {
        Op.INVERSE: ("lu",),
        Op.SVD: ("jacobi_svd", "rsvd"),
        Op.QR: ("householder",),
        Op.CHOLESKY: ("cholesky",),
        Op.EXPM: ("pade13",),
        Op.LINSOLVE: ("bicgstab",),
    }[OperationKind.parse(kind).op]
