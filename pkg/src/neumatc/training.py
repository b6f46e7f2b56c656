"""Full-batch Adam training with failure-informed adaptive collocation sampling.

Every ``update_interval`` epochs (epoch 0 included) a fresh uniform candidate
set is scored with ``g(p) = ||R(p)||_F^2 - eps_r``. Training stops once the
fraction of candidates with ``g > 0`` drops below ``eps_p``; otherwise the
worst failing candidates join the collocation set.
"""

import csv
import enum
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ConfigurationError, TrainingDiverged
from .mlp import Adam
from .model import Op, forward_components
from .residuals import Collocation, LossBreakdown, Supervised, loss_and_grad, structure_terms

DUPLICATE_TOL = 1e-9


class SamplingMode(enum.Enum):
    ADAPTIVE = "adaptive"
    RANDOM = "random"
    NONE = "none"


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1.0
    k_max: int = 2000
    eps_r: float = None
    eps_p: float = 0.05
    update_interval: int = 500
    n_add: int = 10
    candidate_count: int = 512
    n_col_init: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    sampling_mode: SamplingMode = SamplingMode.ADAPTIVE

    def __post_init__(self):
        object.__setattr__(self, "sampling_mode", SamplingMode(self.sampling_mode))
        if self.eps_r is not None and not self.eps_r > 0:
            raise ConfigurationError(f"eps_r must be positive, got {self.eps_r}")
        if not 0 < self.eps_p < 1:
            raise ConfigurationError(f"eps_p must lie in (0, 1), got {self.eps_p}")
        if self.update_interval < 1 or self.n_add < 1 or self.candidate_count < 1:
            raise ConfigurationError("update_interval, n_add and candidate_count must be >= 1")
        if self.k_max < 0 or self.n_col_init < 0 or self.lam < 0:
            raise ConfigurationError("k_max, n_col_init and lam must be nonnegative")


def default_eps_r(kind, input_shape, scale=None):
    """``1e-3 * ||I||_F^2`` for inversion; ``1e-3 * scale`` otherwise.

    ``scale`` is the typical squared norm the residual is measured against
    (``||A||_F^2`` or ``||b||^2``); it defaults to ``n``.
    """
    n = input_shape[0]
    if kind.op is Op.INVERSE or scale is None:
        return 1e-3 * n
    return 1e-3 * float(scale)


@dataclass
class CollocationSet:
    """Collocation points with a provenance tag per point."""

    points: np.ndarray
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        self.points = pts.reshape(len(self.provenance), pts.shape[-1] if pts.ndim > 1 else -1)

    def __len__(self):
        return len(self.provenance)

    def add(self, points, tag):
        """Append points not within ``DUPLICATE_TOL`` of an existing one; returns the count added."""
        added = 0
        for p in np.asarray(points, dtype=np.float64).reshape(-1, self.points.shape[1]):
            if len(self) and np.min(np.max(np.abs(self.points - p), axis=1)) <= DUPLICATE_TOL:
                continue
            self.points = np.vstack([self.points, p])
            self.provenance.append(tag)
            added += 1
        return added


@dataclass
class TrainReport:
    history: list = field(default_factory=list)
    failure_probability: list = field(default_factory=list)
    collocation: CollocationSet = None
    wall_time: float = 0.0
    stopped_early: bool = False

    @property
    def epochs_run(self):
        return len(self.history)

    def to_csv(self):
        """``epoch,data_fidelity,structure,total,p_f``; ``p_f`` empty when not computed."""
        pf = dict(self.failure_probability)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "data_fidelity", "structure", "total", "p_f"])
        for k, h in enumerate(self.history):
            w.writerow([k, repr(h.data_fidelity), repr(h.structure), repr(h.total),
                        repr(pf[k]) if k in pf else ""])
        return buf.getvalue()


def _failure_scores(model, points, matrices, rhs, eps_r):
    out, _ = forward_components(model, points)
    per_point, _ = structure_terms(model.kind, matrices, out, rhs)
    return per_point - eps_r


def failure_score(model, p, source, eps_r):
    """``g(p) = ||R(p)||_F^2 - eps_r`` with ``A(p)`` taken from ``source``.

    ``source`` is a dataset (anything with ``matrices_at`` and ``rhs``).
    """
    p = np.asarray(p, dtype=np.float64).reshape(1, -1)
    return float(_failure_scores(model, p, source.matrices_at(p), source.rhs, eps_r)[0])


def failure_scores(model, candidates, source, eps_r):
    candidates = np.asarray(candidates, dtype=np.float64).reshape(-1, model.param_dim)
    if len(candidates) == 0:
        raise ArgumentError("candidate set is empty")
    return _failure_scores(model, candidates, source.matrices_at(candidates), source.rhs, eps_r)


def estimate_failure_probability(model, candidates, source, eps_r):
    """Fraction of candidates with ``g(p) > 0``."""
    return float(np.mean(failure_scores(model, candidates, source, eps_r) > 0))


def rank_failures(scores, candidates, n_add):
    """Indices of up to ``n_add`` failing candidates, worst first.

    Ties go to the smaller parameter (lexicographic), then the smaller index.
    """
    scores = np.asarray(scores, dtype=np.float64)
    cand = np.asarray(candidates, dtype=np.float64).reshape(len(scores), -1)
    fail = np.flatnonzero(scores > 0)
    keys = [fail] + [cand[fail, j] for j in range(cand.shape[1] - 1, -1, -1)] + [-scores[fail]]
    order = fail[np.lexsort(keys)]
    return order[:n_add]


def select_collocation_points(model, candidates, n_add, source, eps_r):
    candidates = np.asarray(candidates, dtype=np.float64).reshape(-1, model.param_dim)
    scores = failure_scores(model, candidates, source, eps_r)
    return candidates[rank_failures(scores, candidates, n_add)]


def _collocation_batch(dataset, points):
    mats = dataset.matrices_at(points) if len(points) else None
    return Collocation(points, mats, dataset.rhs)


def _diagnostic_norms(model):
    return [float(np.linalg.norm(p)) if np.all(np.isfinite(p)) else float("nan") for p in model.params()]


def train(model, dataset, config, callback=None):
    """Run the training loop on a copy of ``model``; returns ``(model, report)``.

    ``dataset`` supplies supervised points (its ``train`` split with targets)
    and ``A(p)`` at collocation and candidate points. ``callback(epoch,
    model, loss)`` runs after every optimizer step.
    """
    start = time.perf_counter()
    model = model.copy()
    kind = model.kind
    if dataset.kind.op is not kind.op or tuple(dataset.input_shape) != tuple(model.input_shape):
        raise ConfigurationError(f"dataset ({dataset.kind.op.value}, {dataset.input_shape}) does not match "
                                 f"model ({kind.op.value}, {model.input_shape})")
    eps_r = config.eps_r if config.eps_r is not None else default_eps_r(kind, model.input_shape)
    rng = np.random.default_rng(config.seed)
    train_part = dataset.train()
    sup = Supervised(train_part.params, train_part.targets) if train_part.targets is not None else None
    if sup is None or not len(sup):
        sup = None
    col = CollocationSet(np.zeros((0, model.param_dim)), [])
    if config.n_col_init:
        col.add(dataset.sample_candidates(rng, config.n_col_init), "initial")
    col_batch = _collocation_batch(dataset, col.points)
    report = TrainReport(collocation=col)
    params = model.params()
    opt = Adam(config.lr, config.beta1, config.beta2, config.adam_eps)
    refinement = 0
    for k in range(config.k_max):
        loss, grads = loss_and_grad(model, sup, col_batch, config.lam)
        if not np.isfinite(loss.total) or not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingDiverged(k, _diagnostic_norms(model))
        report.history.append(loss)
        opt.step(params, grads)
        if callback is not None:
            callback(k, model, loss)
        if config.sampling_mode is SamplingMode.NONE or k % config.update_interval:
            continue
        candidates = dataset.sample_candidates(rng, config.candidate_count)
        scores = failure_scores(model, candidates, dataset, eps_r)
        p_f = float(np.mean(scores > 0))
        report.failure_probability.append((k, p_f))
        if p_f < config.eps_p:
            report.stopped_early = True
            break
        refinement += 1
        if config.sampling_mode is SamplingMode.ADAPTIVE:
            chosen = candidates[rank_failures(scores, candidates, config.n_add)]
            added = col.add(chosen, f"adaptive-round-{refinement}")
        else:
            added = col.add(dataset.sample_candidates(rng, config.n_add), f"random-round-{refinement}")
        if added:
            col_batch = _collocation_batch(dataset, col.points)
    report.wall_time = time.perf_counter() - start
    return model, report


def final_loss(model, dataset, config, collocation=None):
    """Loss breakdown of ``model`` on the supervised split and given collocation points."""
    train_part = dataset.train()
    sup = Supervised(train_part.params, train_part.targets)
    col = None
    if collocation is not None and len(collocation):
        col = _collocation_batch(dataset, collocation.points)
    return loss_and_grad(model, sup, col, config.lam, need_grad=False)[0]


__all__ = [
    "SamplingMode", "TrainConfig", "CollocationSet", "TrainReport", "LossBreakdown",
    "default_eps_r", "failure_score", "failure_scores", "estimate_failure_probability",
    "rank_failures", "select_collocation_points", "train", "final_loss",
]
