"""Executable property checks: exact recovery, the Lipschitz certificate and ablation directions."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import datagen
from .bench import relerr
from .mlp import Activation, Mlp, init_mlp, lipschitz_certificate, mlp_forward_batch
from .model import Component, NetConfig, NeuMatCModel, OperationKind, ParamDomain, fit_latents, init_model, predict_batch
from .training import SamplingMode, TrainConfig, train


@dataclass(frozen=True)
class PropertyCase:
    name: str
    seeds: tuple
    tolerance: float
    modules: tuple = ()


# -- exact recovery ---------------------------------------------------------------------------


@dataclass
class Theorem1Result:
    d: int
    n_points: int
    max_fit_error: float
    max_holdout_error: float
    underdetermined: bool
    tolerance: float

    @property
    def passed(self):
        return not self.underdetermined and self.max_holdout_error < self.tolerance


def sine_basis_net(freqs, phases=None, omega=1.0):
    """One hidden sine layer whose outputs are ``sin(omega * (f_l p + phase_l))``."""
    freqs = np.asarray(freqs, dtype=np.float64)
    d = len(freqs)
    phases = np.zeros(d) if phases is None else np.asarray(phases, dtype=np.float64)
    return Mlp([freqs.reshape(d, 1), np.eye(d)], [phases, np.zeros(d)], omega, Activation.SINE)


def run_theorem1_oracle(d=3, n_points=10, n=6, seed=0, tolerance=1e-8, holdout=25):
    """Fit the latent tensor of a family ``G(p) = sum_l phi_l(p) S_l`` with known basis.

    The frozen net outputs exactly the basis ``phi``; the latent tensor is
    found by least squares from ``n_points`` samples and checked on
    ``holdout`` unseen points. Fewer samples than basis functions is flagged
    as underdetermined and never counts as a pass. The family is stored in
    an unconstrained ``n x n`` component (the ``expm`` kind has no
    post-processing).
    """
    shape = (n, n)
    rng = np.random.default_rng(seed)
    net = sine_basis_net(np.arange(1, d + 1) * np.pi / 2, rng.uniform(0, np.pi, d))
    slices = rng.standard_normal(shape + (d,))

    def family(ps):
        phi = mlp_forward_batch(net, np.reshape(ps, (-1, 1)))
        return [[np.einsum("ijl,l->ij", slices, f)] for f in phi]

    comp = Component("expm", np.zeros(shape + (d,)), net.copy(), None)
    model = NeuMatCModel(OperationKind.parse("expm"), shape, [comp], ParamDomain.unit())
    train_p = np.linspace(0.0, 1.0, n_points)
    fit_latents(model, train_p, family(train_p))
    test_p = rng.uniform(0.0, 1.0, holdout)

    def max_err(ps):
        preds = predict_batch(model, ps)
        return max(float(np.max(np.abs(pr[0] - t[0]))) for pr, t in zip(preds, family(ps)))

    return Theorem1Result(d, n_points, max_err(train_p), max_err(test_p), n_points < d, tolerance)


# -- Lipschitz certificate ------------------------------------------------------------------


@dataclass
class CertificateResult:
    models: int
    pairs_per_model: int
    violations: int
    worst_ratio: float

    @property
    def passed(self):
        return self.violations == 0


def _check_certificate(latent, net, rng, pairs, domain):
    cert = lipschitz_certificate(net, latent)
    p1 = domain.sample(rng, pairs)
    p2 = domain.sample(rng, pairs)
    g1 = np.einsum("ijl,bl->bij", latent, mlp_forward_batch(net, p1))
    g2 = np.einsum("ijl,bl->bij", latent, mlp_forward_batch(net, p2))
    lhs = np.sqrt(np.sum((g1 - g2) ** 2, axis=(1, 2)))
    dist = np.sum(np.abs(p1 - p2), axis=1)
    rhs = cert.bound * dist
    violations = int(np.sum(lhs > rhs * (1 + 1e-12)))
    ratio = float(np.max(lhs / np.where(rhs > 0, rhs, np.inf)))
    return violations, ratio


def trained_certificate_models(count=3, seed=0, epochs=200):
    """Small trained inversion models (inputs for the certificate check)."""
    out = []
    for i in range(count):
        ds = datagen.compute_targets(datagen.gen_sinusoidal(
            datagen.SinusoidalGenConfig(n=6, r=2, seed=seed + i, n_train=10, n_test=5)))
        m = init_model(ds.kind, ds.input_shape, 4, NetConfig(hidden_layers=2, width=16), dataset=ds.train(),
                       seed=seed + i)
        m, _ = train(m, ds, TrainConfig(k_max=epochs, n_col_init=10, update_interval=100, seed=seed + i))
        out.append(m)
    return out


def run_theorem2_certificate(n_random=20, trained=None, pairs=1000, seed=0):
    """Empirical difference quotients against the certificate bound.

    Random models cover every activation and depths 2 to 4; ``trained`` is a
    list of trained models (default: :func:`trained_certificate_models`).
    """
    rng = np.random.default_rng(seed)
    acts = list(Activation)
    violations, worst, models = 0, 0.0, 0
    for i in range(n_random):
        act = acts[i % len(acts)]
        k = 1 + i % 2
        net = init_mlp(k, 5, hidden_layers=1 + i % 3, width=12, omega=float(rng.uniform(0.5, 3.0)),
                       activation=act, rng=rng, first_scale=float(rng.uniform(1.0, 20.0)))
        for b in net.biases:
            b[...] = rng.standard_normal(b.shape)
        latent = rng.standard_normal((4, 3, 5))
        v, r = _check_certificate(latent, net, rng, pairs, ParamDomain.unit(k))
        violations += v
        worst = max(worst, r)
        models += 1
    if trained is None:
        trained = trained_certificate_models(seed=seed)
    for m in trained:
        for c in m.components:
            v, r = _check_certificate(c.latent, c.net, rng, pairs, m.domain)
            violations += v
            worst = max(worst, r)
        models += 1
    return CertificateResult(models, pairs, violations, worst)


# -- ablation directions ----------------------------------------------------------------------


@dataclass
class AblationSetup:
    """Desk-scale SVD problem shared by the ablation arms."""

    n: int = 32
    r: int = 4
    eps: float = 0.1
    rank: int = 4
    n_train: int = 10
    n_test: int = 50
    d: int = 20
    epochs: int = 1500
    lam: float = 1.0
    lr: float = 1.5e-4
    update_interval: int = 150
    n_add: int = 10
    n_col_init: int = 50
    eps_r: float = 1e-3
    data_seed: int = 3

    def dataset(self):
        cfg = datagen.SinusoidalGenConfig(n=self.n, r=self.r, eps=self.eps, seed=self.data_seed,
                                          n_train=self.n_train, n_test=self.n_test, kind="svd", rank=self.rank)
        return datagen.compute_targets(datagen.normalize_scale(datagen.gen_sinusoidal(cfg)))


def ablation_run(setup, ds, seed, sampling=SamplingMode.ADAPTIVE, activation=Activation.SINE, net=None):
    """Train one arm and return its mean test RelErr."""
    net = net or NetConfig(activation=activation)
    model = init_model(ds.kind, ds.input_shape, setup.d, net, dataset=ds.train(), seed=seed)
    cfg = TrainConfig(lam=setup.lam, k_max=setup.epochs, eps_r=setup.eps_r, update_interval=setup.update_interval,
                      n_add=setup.n_add, n_col_init=setup.n_col_init, lr=setup.lr, seed=seed,
                      sampling_mode=sampling)
    model, _ = train(model, ds, cfg)
    test = ds.test()
    preds = predict_batch(model, test.params)
    return float(np.mean([relerr(ds.kind, a, g) for a, g in zip(test.inputs, preds)]))


@dataclass
class AblationReport:
    sampling: dict = field(default_factory=dict)
    activation: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def means(self, table):
        return {k: float(np.mean(v)) for k, v in table.items()}

    @property
    def adaptive_beats_random(self):
        m = self.means(self.sampling)
        return m["adaptive"] <= m["random"]

    @property
    def sine_best(self):
        m = self.means(self.activation)
        return all(m["sine"] <= v for k, v in m.items() if k != "sine")

    def sweep_below(self, bound):
        return all(v < bound for v in self.sweep.values())

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["study", "arm", "seed_index", "relerr"])
        for study, table in (("sampling", self.sampling), ("activation", self.activation)):
            for arm, vals in table.items():
                for i, v in enumerate(vals):
                    w.writerow([study, arm, i, repr(v)])
        for arm, v in self.sweep.items():
            w.writerow(["sweep", arm, 0, repr(v)])
        return buf.getvalue()


def run_ablation_directions(setup=None, sampling_seeds=range(5), activation_seeds=range(3),
                            sweep=None, studies=("sampling", "activation", "sweep")):
    """Matched-budget arms differing only in the studied variable.

    ``sweep`` maps a label to a :class:`NetConfig` (default: hidden layers
    and omega across the usual grids, one at a time around the defaults).
    """
    setup = setup or AblationSetup()
    ds = setup.dataset()
    report = AblationReport()
    if "sampling" in studies:
        for mode in (SamplingMode.ADAPTIVE, SamplingMode.RANDOM):
            report.sampling[mode.value] = [ablation_run(setup, ds, s, mode) for s in sampling_seeds]
    if "activation" in studies:
        for act in Activation:
            report.activation[act.value] = [ablation_run(setup, ds, s, activation=act) for s in activation_seeds]
    if "sweep" in studies:
        if sweep is None:
            sweep = {f"layers={h}": NetConfig(hidden_layers=h) for h in (2, 3, 4)}
            sweep.update({f"omega={w}": NetConfig(omega=w) for w in (0.05, 0.10, 0.20, 0.25)})
        for label, net in sweep.items():
            report.sweep[label] = ablation_run(setup, ds, 0, net=net)
    return report
