"""Command-line interface: generate | train | eval | bench | inspect.

Every command accepts ``--config FILE``: an INI file whose section named
after the command supplies defaults; explicit flags override it. The fully
resolved settings are written to ``run_config.ini`` in the output directory.

Exit codes: 0 success, 1 usage, 2 data/format/configuration, 3 numerical failure.
"""

import argparse
import configparser
import csv
import os
import sys

import numpy as np

from . import bench, datagen
from .errors import (ArgumentError, ConfigurationError, ConvergenceError, DimensionError, FormatError,
                     NeuMatCError, NotPositiveDefiniteError, SingularMatrixError, SolverFailure,
                     TrainingDiverged)
from .mlp import Activation, lipschitz_certificate
from .model import NetConfig, Op, init_model, load_model, predict_batch, save_model
from .training import SamplingMode, TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

GENERATORS = ("sinusoidal", "controlled_rank", "fourier2d", "adr", "file")
MANIFEST = "manifest.ini"
RUN_CONFIG = "run_config.ini"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- config resolution ------------------------------------------------------------------

def _opt(p, name, typ=str, default=None, **kw):
    """Flag whose default lives in the config section (``None`` = not given)."""
    dest = name.lstrip("-").replace("-", "_")
    p.specs[dest] = (typ, default)
    p.add_argument(name, dest=dest, type=typ, default=None, **kw)


def _command(sub, name, func, **kw):
    p = sub.add_parser(name, **kw)
    p.specs = {}
    p.add_argument("--config")
    p.set_defaults(func=func, specs=p.specs)
    return p


def _resolve(args, command):
    """Merge flags over the ``[command]`` section of ``--config`` over defaults."""
    section = {}
    if args.config:
        cp = configparser.ConfigParser()
        if not cp.read(args.config):
            raise FormatError(f"cannot read config file {args.config}")
        if cp.has_section(command):
            section = dict(cp.items(command))
    resolved = {}
    for dest, (typ, default) in args.specs.items():
        value = getattr(args, dest)
        if value is None and dest in section:
            try:
                value = typ(section[dest])
            except ValueError as exc:
                raise UsageError(f"bad value for {dest} in config file: {exc}") from None
        if value is None:
            value = default
        resolved[dest] = value
    return resolved


def _write_ini(path, section, values):
    cp = configparser.ConfigParser()
    cp[section] = {k: "" if v is None else str(v) for k, v in values.items()}
    with open(path, "w") as fh:
        cp.write(fh)


def _read_ini(path, section):
    cp = configparser.ConfigParser()
    if not cp.read(path) or not cp.has_section(section):
        raise FormatError(f"{path} has no [{section}] section")
    return dict(cp.items(section))


def _maybe(typ, text):
    return None if text in ("", "None") else typ(text)


# -- dataset directories -----------------------------------------------------------------


def _build_dataset(cfg):
    gen = cfg["gen"]
    kind, rank, seed = cfg["kind"], cfg.get("rank"), cfg["seed"]
    if gen == "sinusoidal":
        _require(cfg, "n", "r")
        return datagen.gen_sinusoidal(datagen.SinusoidalGenConfig(
            n=cfg["n"], r=cfg["r"], eps=cfg.get("eps"), seed=seed, n_train=cfg["n_train"] or 40,
            n_test=cfg["n_test"] or 100, kind=kind or "inverse", rank=rank))
    if gen == "controlled_rank":
        _require(cfg, "n")
        return datagen.gen_controlled_rank(datagen.ControlledRankGenConfig(
            n=cfg["n"], r=cfg.get("r"), d=cfg.get("d") or 5, seed=seed, n_train=cfg["n_train"] or 20,
            n_test=cfg["n_test"] or 100, kind=kind or "inverse", rank=rank))
    if gen == "fourier2d":
        _require(cfg, "n")
        return datagen.gen_2d_fourier(datagen.Fourier2dGenConfig(
            n=cfg["n"], eps=cfg.get("eps") or 1.0, grid=cfg.get("grid") or 50, seed=seed, n_test=cfg["n_test"] or 100,
            kind=kind or "inverse"))
    if gen == "adr":
        _require(cfg, "grid")
        _, ds = datagen.assemble_adr(cfg["grid"], cfg["n_test"] or 200, cfg["n_train"] or 40)
        return ds
    _require(cfg, "input")
    ds = datagen.load_sequence(cfg["input"], rank)
    if kind and datagen.Op(kind) is not ds.kind.op:
        raise ConfigurationError(f"file holds {ds.kind.op.value} data, not {kind}")
    n = len(ds)
    n_train = cfg["n_train"] if cfg["n_train"] is not None else n
    ds.split = np.array(["train"] * min(n_train, n) + ["test"] * max(n - n_train, 0))
    return ds


def _require(cfg, *names):
    missing = [n for n in names if cfg.get(n) is None]
    if missing:
        raise UsageError(f"generator {cfg['gen']!r} requires --{' --'.join(m.replace('_', '-') for m in missing)}")


def _save_dataset(ds, out):
    os.makedirs(out, exist_ok=True)
    dense_ok = not ds.sparse
    for label in ("train", "test"):
        part = ds.subset(ds.split == label)
        if dense_ok:
            datagen.save_sequence(part, os.path.join(out, f"{label}.nms"))
        with open(os.path.join(out, f"{label}_targets.nmt"), "wb") as fh:
            fh.write(datagen.targets_to_bytes(part.targets))
    with open(os.path.join(out, "params.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "split"] + [f"p{j}" for j in range(ds.params.shape[1])])
        for i, (p, s) in enumerate(zip(ds.params, ds.split)):
            w.writerow([i, s] + [repr(float(x)) for x in p])


def load_dataset_dir(path):
    """Rebuild a generated dataset from its manifest and attach stored targets."""
    raw = _read_ini(os.path.join(path, MANIFEST), "generate")
    cfg = {
        "gen": raw["gen"], "kind": _maybe(str, raw.get("kind", "")), "rank": _maybe(int, raw.get("rank", "")),
        "seed": int(raw.get("seed", 0)), "n": _maybe(int, raw.get("n", "")), "r": _maybe(int, raw.get("r", "")),
        "d": _maybe(int, raw.get("d", "")), "eps": _maybe(float, raw.get("eps", "")),
        "grid": _maybe(int, raw.get("grid", "")), "n_train": _maybe(int, raw.get("n_train", "")),
        "n_test": _maybe(int, raw.get("n_test", "")), "input": _maybe(str, raw.get("input", "")),
    }
    ds = _build_dataset(cfg)
    targets = [None] * len(ds)
    for label in ("train", "test"):
        with open(os.path.join(path, f"{label}_targets.nmt"), "rb") as fh:
            part = datagen.targets_from_bytes(fh.read())
        idx = np.flatnonzero(ds.split == label)
        if len(part) != len(idx):
            raise FormatError(f"{label} targets hold {len(part)} records, dataset has {len(idx)} points")
        for i, t in zip(idx, part):
            targets[i] = t
    ds.targets = targets
    return ds


# -- commands ----------------------------------------------------------------------------


def cmd_generate(args):
    cfg = _resolve(args, "generate")
    if cfg["gen"] is None:
        raise UsageError(f"--gen is required; valid generators: {', '.join(GENERATORS)}")
    if cfg["gen"] not in GENERATORS:
        raise UsageError(f"unknown generator {cfg['gen']!r}; valid generators: {', '.join(GENERATORS)}")
    if cfg["out"] is None:
        raise UsageError("--out is required")
    ds = datagen.compute_targets(_build_dataset(cfg))
    _save_dataset(ds, cfg["out"])
    manifest = dict(cfg)
    manifest.update({f"meta_{k}": v for k, v in ds.metadata.items()})
    _write_ini(os.path.join(cfg["out"], MANIFEST), "generate", manifest)
    _write_ini(os.path.join(cfg["out"], RUN_CONFIG), "generate", cfg)
    counts = {s: int(np.sum(ds.split == s)) for s in ("train", "test")}
    print(f"generated {counts['train']} train + {counts['test']} test {ds.kind.op.value} points in {cfg['out']}")
    return EXIT_OK


def cmd_train(args):
    cfg = _resolve(args, "train")
    for key in ("data", "out"):
        if cfg[key] is None:
            raise UsageError(f"--{key} is required")
    ds = load_dataset_dir(cfg["data"])
    if cfg["kind"] is not None and Op(cfg["kind"]) is not ds.kind.op:
        raise ConfigurationError(f"dataset holds {ds.kind.op.value} data but --kind {cfg['kind']} was requested")
    net = NetConfig(cfg["layers"], cfg["width"], cfg["omega"], Activation(cfg["activation"]), cfg["first_scale"])
    tcfg = TrainConfig(lam=cfg["lam"], k_max=cfg["epochs"], eps_r=cfg["eps_r"], eps_p=cfg["eps_p"],
                       update_interval=cfg["interval"], n_add=cfg["n_add"], candidate_count=cfg["candidates"],
                       n_col_init=cfg["n_col_init"], lr=cfg["lr"], seed=cfg["seed"],
                       sampling_mode=SamplingMode(cfg["sampling"]))
    train_part = ds.train()
    model = init_model(ds.kind, ds.input_shape, cfg["d"], net, ds.domain,
                       dataset=train_part if cfg["warm_start"] else None, seed=cfg["seed"])
    os.makedirs(cfg["out"], exist_ok=True)
    _write_ini(os.path.join(cfg["out"], RUN_CONFIG), "train", cfg)
    model, report = train(model, ds, tcfg)
    save_model(model, os.path.join(cfg["out"], "model.nmc"))
    with open(os.path.join(cfg["out"], "train_report.csv"), "w") as fh:
        fh.write(report.to_csv())
    last = report.history[-1].total if report.history else float("nan")
    print(f"trained {report.epochs_run} epochs in {report.wall_time:.1f}s; final loss {last:.6g}; "
          f"{len(report.collocation)} collocation points")
    return EXIT_OK


def _eval_split(ds, split):
    return ds if split == "all" else ds.subset(ds.split == split)


def cmd_eval(args):
    cfg = _resolve(args, "eval")
    for key in ("data", "out"):
        if cfg[key] is None:
            raise UsageError(f"--{key} is required")
    if (cfg["model"] is None) == (not cfg["targets"]):
        raise UsageError("give exactly one of --model or --targets")
    ds = _eval_split(load_dataset_dir(cfg["data"]), cfg["split"])
    if cfg["model"] is not None:
        model = load_model(cfg["model"])
        if model.kind.op is not ds.kind.op or tuple(model.input_shape) != tuple(ds.input_shape):
            raise ConfigurationError(f"model ({model.kind.op.value}, {model.input_shape}) does not match "
                                     f"dataset ({ds.kind.op.value}, {ds.input_shape})")
        preds = predict_batch(model, ds.params)
    else:
        preds = ds.targets
    errs = [bench.relerr(ds.kind, a, g, ds.rhs) for a, g in zip(ds.inputs, preds)]
    os.makedirs(cfg["out"], exist_ok=True)
    _write_ini(os.path.join(cfg["out"], RUN_CONFIG), "eval", cfg)
    with open(os.path.join(cfg["out"], "eval.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + [f"p{j}" for j in range(ds.params.shape[1])] + ["relerr"])
        for i, (p, e) in enumerate(zip(ds.params, errs)):
            w.writerow([i] + [repr(float(x)) for x in p] + [repr(float(e))])
    if cfg["trace"]:
        _dump_trace(cfg, ds, preds)
    if cfg["sv_dump"]:
        _dump_singular_values(cfg, ds)
    print(f"mean relerr {np.mean(errs):.6g} over {len(errs)} points")
    return EXIT_OK


def _dump_trace(cfg, ds, preds):
    """Entry ``(i, j)`` of component 0 at every point (continuity plots)."""
    try:
        i, j = (int(x) for x in cfg["trace"].split(","))
    except ValueError:
        raise UsageError("--trace takes 'row,col'") from None
    with open(os.path.join(cfg["out"], "trace.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"p{k}" for k in range(ds.params.shape[1])] + ["predicted", "target"])
        for p, g, t in zip(ds.params, preds, ds.targets):
            w.writerow([repr(float(x)) for x in p] + [repr(float(g[0][i, j])), repr(float(t[0][i, j]))])


def stacked_singular_values(ds, source="targets"):
    """Singular values of the matrix whose rows are the vectorized per-point results.

    ``source`` is ``targets``, ``inputs`` or ``factors`` (generator factors
    such as the controlled-rank ``U, S, V``, when the generator records them).
    """
    if source == "factors":
        if not ds.extras:
            raise UsageError("this dataset records no generator factors")
        return np.linalg.svd(np.hstack([np.asarray(v).reshape(len(ds), -1) for v in ds.extras.values()]),
                             compute_uv=False)
    rows = []
    for a, t in zip(ds.inputs, ds.targets):
        if source == "inputs":
            rows.append(np.asarray(a.toarray() if hasattr(a, "toarray") else a).reshape(-1))
        else:
            rows.append(np.concatenate([np.asarray(c).reshape(-1) for c in t]))
    return np.linalg.svd(np.stack(rows), compute_uv=False)


def _dump_singular_values(cfg, ds):
    sv = stacked_singular_values(ds, cfg["sv_source"])
    with open(os.path.join(cfg["out"], "singular_values.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "singular_value", "relative"])
        for k, s in enumerate(sv):
            w.writerow([k, repr(float(s)), repr(float(s / sv[0])) if sv[0] > 0 else "0.0"])


def cmd_bench(args):
    cfg = _resolve(args, "bench")
    for key in ("data", "out"):
        if cfg[key] is None:
            raise UsageError(f"--{key} is required")
    ds = _eval_split(load_dataset_dir(cfg["data"]), cfg["split"])
    models = {}
    d, layers, width = cfg["d"], cfg["layers"], cfg["width"]
    for path in (cfg["model"] or "").split(","):
        if not path:
            continue
        m = load_model(path)
        if m.kind.op is not ds.kind.op or tuple(m.input_shape) != tuple(ds.input_shape):
            raise ConfigurationError(f"model {path} does not match the dataset kind/shape")
        models[os.path.splitext(os.path.basename(path))[0] if len(models) else "neumatc"] = m
        net = m.components[0].net
        d, layers, width = net.output_dim, net.depth - 1, net.weights[0].shape[0]
    names = cfg["baselines"].split(",") if cfg["baselines"] else list(bench.default_baselines(ds.kind))
    scenario = bench.Scenario(ds.kind, ds.input_shape[0], d, width, layers, ds.params.shape[1],
                              scenario_id=cfg["scenario"])
    report = bench.run_benchmark(scenario, ds, models, names, cfg["repeats"], cfg["warmup"])
    os.makedirs(cfg["out"], exist_ok=True)
    _write_ini(os.path.join(cfg["out"], RUN_CONFIG), "bench", cfg)
    with open(os.path.join(cfg["out"], "bench.csv"), "w") as fh:
        fh.write(report.to_csv())
    for r in report.results:
        print(f"{r.method:12s} relerr {r.mean_relerr:.3e}  p50 {r.p50_time_ms:.3f} ms/pt  flops {r.flops}")
    return EXIT_OK


def cmd_inspect(args):
    cfg = _resolve(args, "inspect")
    if cfg["model"] is None:
        raise UsageError("--model is required")
    m = load_model(cfg["model"])
    print(f"kind: {m.kind.op.value}" + (f" (rank {m.kind.rank})" if m.kind.rank else ""))
    print(f"input shape: {m.input_shape[0]}x{m.input_shape[1]}")
    print(f"parameter dim: {m.param_dim}; domain: {list(m.domain.lower)} .. {list(m.domain.upper)}")
    for c in m.components:
        net = c.net
        cert = lipschitz_certificate(net, c.latent)
        print(f"component {c.name}: shape {c.shape[0]}x{c.shape[1]}, d={net.output_dim}, "
              f"layers={net.layer_shapes()}, omega={net.omega}, activation={net.activation.value}, "
              f"lipschitz bound={cert.bound:.6g}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="neumatc", description="Learned parametric matrix operations.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    g = _command(sub, "generate", cmd_generate, help="generate a dataset with solver targets")
    _opt(g, "--gen", str, help=f"one of {', '.join(GENERATORS)}")
    _opt(g, "--out")
    _opt(g, "--kind", str)
    _opt(g, "--rank", int)
    _opt(g, "--n", int)
    _opt(g, "--r", int)
    _opt(g, "--d", int)
    _opt(g, "--eps", float)
    _opt(g, "--grid", int)
    _opt(g, "--n-train", int)
    _opt(g, "--n-test", int)
    _opt(g, "--input", str, help="sequence file for --gen file")
    _opt(g, "--seed", int, 0)

    t = _command(sub, "train", cmd_train, help="train a model on a generated dataset")
    _opt(t, "--data")
    _opt(t, "--out")
    _opt(t, "--kind", str)
    _opt(t, "--d", int, 20)
    _opt(t, "--layers", int, 3)
    _opt(t, "--width", int, 100)
    _opt(t, "--omega", float, 0.15)
    _opt(t, "--first-scale", float, 20.0)
    _opt(t, "--activation", str, "sine", choices=[a.value for a in Activation])
    _opt(t, "--lam", float, 1.0)
    _opt(t, "--epochs", int, 2000)
    _opt(t, "--eps-r", float)
    _opt(t, "--eps-p", float, 0.05)
    _opt(t, "--interval", int, 500)
    _opt(t, "--n-add", int, 10)
    _opt(t, "--candidates", int, 512)
    _opt(t, "--n-col-init", int, 40)
    _opt(t, "--lr", float, 1e-3)
    _opt(t, "--seed", int, 0)
    _opt(t, "--sampling", str, "adaptive", choices=[s.value for s in SamplingMode])
    _opt(t, "--warm-start", int, 1, help="1 = least-squares latent initialization from targets")

    e = _command(sub, "eval", cmd_eval, help="per-point relative errors of a model or of stored targets")
    _opt(e, "--data")
    _opt(e, "--model")
    _opt(e, "--targets", int, 0, help="1 = evaluate stored solver targets")
    _opt(e, "--out")
    _opt(e, "--split", str, "test", choices=["train", "test", "all"])
    _opt(e, "--trace", str, help="'row,col' entry of component 0 to dump per point")
    _opt(e, "--sv-dump", int, 0, help="1 = dump singular values of the stacked results")
    _opt(e, "--sv-source", str, "targets", choices=["targets", "inputs", "factors"])

    b = _command(sub, "bench", cmd_bench, help="time models and baselines")
    _opt(b, "--data")
    _opt(b, "--model", str, help="comma-separated model files")
    _opt(b, "--out")
    _opt(b, "--baselines", str)
    _opt(b, "--split", str, "test", choices=["train", "test", "all"])
    _opt(b, "--repeats", int, 5)
    _opt(b, "--warmup", int, 2)
    _opt(b, "--d", int, 20)
    _opt(b, "--layers", int, 3)
    _opt(b, "--width", int, 100)
    _opt(b, "--scenario", str, "bench")

    i = _command(sub, "inspect", cmd_inspect, help="print model metadata")
    _opt(i, "--model")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: generate | train | eval | bench | inspect")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, SolverFailure, ConvergenceError, SingularMatrixError,
            NotPositiveDefiniteError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, ConfigurationError, DimensionError, ArgumentError, NeuMatCError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
