"""Command-line interface.

Subcommands: split, train, predict, eval, gridsearch, bench.

Exit codes: 0 success, 2 usage, 3 parse/input, 4 config, 5 divergence,
6 resource, 7 shape mismatch.  Failures print one line to stderr::

    tsgs3vm: error code=<n> kind=<ExceptionName> msg=<message>
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, replace

import numpy as np

from . import __version__, baseline, bench, diagnostics, model as model_io
from .data import (
    ScalerParams,
    SemiDataset,
    densify,
    label_mapping,
    load_semi,
    make_semi_split,
    map_labels,
    parse_libsvm,
    scale_apply,
    scale_dataset,
    scale_fit,
    write_libsvm,
    write_split_manifest,
)
from .errors import ConfigError, InputError, TSGError
from .loss import UnlabeledLoss
from .model import labels_from_scores, predict_scores
from .trainer import Constant, TheoremRate, TrainConfig, train
from .tuning import grid_search, write_grid_csv

EXIT_USAGE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"tsgs3vm: error code={EXIT_USAGE} kind=UsageError msg={message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _int_list(text):
    if text is None:
        return []
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------- options

def _add_data_opts(p):
    p.add_argument("--data", help="single LIBSVM file to split into labeled/unlabeled")
    p.add_argument("--labeled", help="LIBSVM file of labeled instances")
    p.add_argument("--unlabeled", help="LIBSVM file of unlabeled instances (label column = hidden truth, if any)")
    p.add_argument("--n-labeled", type=int, default=200, help="labeled count when splitting --data")
    p.add_argument("--split-seed", type=int, default=0)


def _add_train_opts(p):
    p.add_argument("--loss", default="shg", help="shg | sshg | ramp:<s> | da")
    p.add_argument("--literal-derivatives", action="store_true",
                   help="use sign-free SHG/SSHG derivatives (comparison runs only)")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--Cstar", type=float, default=None, help="default C * n_l / n_u")
    p.add_argument("--sigma", type=float, default=1.0, help="RBF parameter in exp(-sigma ||x - x'||^2)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--eta", type=float, default=None, help="constant step 1/eta (default eta=10)")
    group.add_argument("--theta", type=float, default=None, help="step theta / T^(3/4)")
    p.add_argument("--T", type=int, default=None, help="iterations (default: one pass over unlabeled data)")
    p.add_argument("--batch-labeled", type=int, default=256)
    p.add_argument("--batch-unlabeled", type=int, default=256)
    p.add_argument("--m", type=int, default=None, help="features per iteration (default ceil(sqrt(n)))")
    p.add_argument("--seed", type=int, default=0, help="feature seed")
    p.add_argument("--data-seed", type=int, default=1, help="instance sampling seed")
    p.add_argument("--scale", choices=["minmax", "none"], default="minmax")


def _config(args) -> TrainConfig:
    schedule = TheoremRate(args.theta) if args.theta is not None else Constant(10.0 if args.eta is None else args.eta)
    return TrainConfig(
        C=args.C,
        C_star=args.Cstar,
        sigma=args.sigma,
        schedule=schedule,
        T=args.T,
        batch_labeled=args.batch_labeled,
        batch_unlabeled=args.batch_unlabeled,
        loss=UnlabeledLoss.parse(args.loss, args.literal_derivatives),
        m=args.m,
        base_seed=args.seed,
        data_seed=args.data_seed,
    )


def _load_dataset(args):
    """Dataset plus provenance for the manifest."""
    if args.data and (args.labeled or args.unlabeled):
        raise ConfigError("give either --data or --labeled/--unlabeled, not both")
    if args.data:
        X, raw = parse_libsvm(args.data)
        ds = make_semi_split(X, raw, args.n_labeled, args.split_seed)
        prov = {"data": {"path": args.data, "sha256": _digest(args.data)},
                "split": {"seed": args.split_seed, "n_labeled": args.n_labeled,
                          "labeled_indices": ds.labeled_index.tolist()}}
        return ds, prov
    if not (args.labeled and args.unlabeled):
        raise ConfigError("need --data, or both --labeled and --unlabeled")
    ds = load_semi(args.labeled, args.unlabeled)
    prov = {"labeled": {"path": args.labeled, "sha256": _digest(args.labeled)},
            "unlabeled": {"path": args.unlabeled, "sha256": _digest(args.unlabeled)}}
    return ds, prov


def _manifest_path(model_path):
    return str(model_path) + ".json"


def _config_dict(cfg: TrainConfig) -> dict:
    out = asdict(cfg)
    out["schedule"] = {"kind": type(cfg.schedule).__name__, **asdict(cfg.schedule)}
    out["loss"] = {"name": str(cfg.loss), "literal": cfg.loss.literal}
    return out


# ---------------------------------------------------------------- commands

def cmd_split(args):
    X, raw = parse_libsvm(args.data)
    ds = make_semi_split(X, raw, args.n_labeled, args.split_seed)
    os.makedirs(args.out, exist_ok=True)
    write_libsvm(os.path.join(args.out, "labeled.libsvm"), ds.X_l, ds.y_l.astype(int))
    write_libsvm(os.path.join(args.out, "unlabeled.libsvm"), ds.X_u, ds.hidden_labels.astype(int))
    write_split_manifest(
        os.path.join(args.out, "split.json"), ds, args.split_seed,
        source={"path": args.data, "sha256": _digest(args.data)},
        label_map={str(k): v for k, v in label_mapping(raw).items()},
        version=__version__,
    )
    print(f"labeled={ds.n_l} unlabeled={ds.n_u} d={ds.d}")
    return 0


def cmd_train(args):
    t0 = time.perf_counter()
    ds, prov = _load_dataset(args)
    scaler = None
    if args.scale == "minmax":
        scaler = scale_fit(np.vstack([ds.X_l, ds.X_u]))
        ds = scale_dataset(ds, scaler)
    cfg = _config(args).resolve(ds)
    t1 = time.perf_counter()
    diag = None
    if args.method == "frs":
        fitted = baseline.train_frs3vm(cfg, ds, passes=args.passes, m_total=args.m)
        baseline.save(fitted, args.model)
    elif args.diagnose:
        rng = np.random.default_rng(args.probe_seed)
        pool = np.vstack([ds.X_l, ds.X_u])
        probes = pool[rng.choice(pool.shape[0], size=min(args.probes, pool.shape[0]), replace=False)]
        diag = diagnostics.run_diagnostics(cfg, ds, probes, lipschitz=args.lipschitz)
        model_io.save(diag.model, args.model)
    else:
        model_io.save(train(cfg, ds), args.model)
    t2 = time.perf_counter()

    manifest = {
        "version": __version__,
        "command": "train",
        "method": args.method,
        "config": _config_dict(cfg),
        "passes": args.passes if args.method == "frs" else None,
        "n_labeled": ds.n_l,
        "n_unlabeled": ds.n_u,
        "d": ds.d,
        "inputs": prov,
        "scaler": None if scaler is None else scaler.to_dict(),
        "model": {"path": args.model, "sha256": _digest(args.model)},
        "timings": {"load_seconds": t1 - t0, "train_seconds": t2 - t1},
    }
    if diag is not None:
        out = args.out or os.path.dirname(os.path.abspath(args.model))
        os.makedirs(out, exist_ok=True)
        csv_path = os.path.join(out, "diagnostics.csv")
        json_path = os.path.join(out, "diagnostics.json")
        diagnostics.write_series_csv(csv_path, diag)
        diagnostics.write_summary_json(json_path, diag)
        manifest["diagnostics"] = {"series": csv_path, "summary": json_path, "checks": diag.checks}
    with open(_manifest_path(args.model), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"model={args.model} T={cfg.T} m={cfg.m} C={cfg.C:g} Cstar={cfg.C_star:g} seconds={t2 - t1:.3f}")
    return 0


def _load_any_model(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == baseline.MAGIC:
        return baseline.load(path)
    return model_io.load(path)


def _scores(args):
    fitted = _load_any_model(args.model)
    X, raw = parse_libsvm(args.data)
    X = densify(X, fitted.d)
    manifest = _manifest_path(args.model)
    if os.path.exists(manifest):
        with open(manifest, encoding="utf-8") as fh:
            scaler = json.load(fh).get("scaler")
        if scaler:
            X = scale_apply(ScalerParams.from_dict(scaler), X)
    if isinstance(fitted, baseline.LinearRFModel):
        scores = baseline.predict_linear(fitted, X)
    else:
        scores = predict_scores(fitted, X)
    return np.atleast_1d(scores), raw


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_predict(args):
    scores, _ = _scores(args)
    labels = labels_from_scores(scores)
    if args.format == "json":
        text = json.dumps([{"label": int(l), "score": float(s)} for l, s in zip(labels, scores)]) + "\n"
    else:
        text = "".join(f"{l:d} {s!r}\n" for l, s in zip(labels, scores.tolist()))
    _emit(text, args.out)
    return 0


def cmd_eval(args):
    scores, raw = _scores(args)
    if raw.size == 0:
        raise InputError("no instances to evaluate")
    truth = map_labels(raw)
    errors = int(np.sum(labels_from_scores(scores) != truth))
    rate = errors / truth.size
    if args.format == "json":
        text = json.dumps({"n": int(truth.size), "errors": errors, "error_rate": round(rate, 4)}) + "\n"
    else:
        text = f"n,errors,error_rate\n{truth.size},{errors},{rate:.4f}\n"
    _emit(text, args.out)
    return 0


def cmd_gridsearch(args):
    ds, _ = _load_dataset(args)
    if args.scale == "minmax":
        ds = scale_dataset(ds, scale_fit(np.vstack([ds.X_l, ds.X_u])))
    base = _config(args)
    log_eta0 = math.log10(base.schedule.eta) if isinstance(base.schedule, Constant) else 1.0
    best, rows = grid_search(base, ds, k=args.folds, seed=args.cv_seed, log_eta0=log_eta0, jobs=args.jobs)
    if args.out:
        write_grid_csv(args.out, rows)
    else:
        write_grid_csv(sys.stdout, rows)
    result = {"log10_C": best.log10_C, "log10_sigma": best.log10_sigma, "log10_eta": best.log10_eta,
              "cv_error": best.cv_error}
    if args.format == "json":
        print(json.dumps(result), file=sys.stderr if not args.out else sys.stdout)
    else:
        print("best " + " ".join(f"{k}={v:g}" for k, v in result.items()), file=sys.stderr if not args.out else sys.stdout)
    return 0


def cmd_bench(args):
    T_list, n_list = _int_list(args.T_list), _int_list(args.n_list)
    if not T_list and not n_list:
        raise _UsageError("bench needs --T-list and/or --n-list")
    rows = bench.run_bench(T_list, n_list, m=args.m or 32, batch=args.batch, n=args.n, n_pred=args.n_pred,
                           sigma=args.sigma, seed=args.seed, repeats=args.repeats)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            bench.write_bench_csv(fh, rows)
    else:
        bench.write_bench_csv(sys.stdout, rows)
    return 0


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tsgs3vm", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("split", help="split a labeled LIBSVM file into labeled/unlabeled files")
    s.add_argument("--data", required=True)
    s.add_argument("--n-labeled", type=int, default=200)
    s.add_argument("--split-seed", "--seed", dest="split_seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_split)

    t = sub.add_parser("train", help="train a model")
    _add_data_opts(t)
    _add_train_opts(t)
    t.add_argument("--model", required=True, help="output model file")
    t.add_argument("--method", choices=["tsg", "frs"], default="tsg")
    t.add_argument("--passes", type=int, default=10, help="FRS passes over the unlabeled pool")
    t.add_argument("--diagnose", action="store_true", help="run the exact-kernel twin alongside training")
    t.add_argument("--probes", type=int, default=100)
    t.add_argument("--probe-seed", type=int, default=12345)
    t.add_argument("--lipschitz", type=float, default=None, help="gradient Lipschitz estimate for the full bound")
    t.add_argument("--out", help="directory for diagnostics outputs (default: model directory)")
    t.set_defaults(func=cmd_train)

    for name, func, helptext in (("predict", cmd_predict, "write 'label score' per input line"),
                                 ("eval", cmd_eval, "error rate against the file's labels")):
        q = sub.add_parser(name, help=helptext)
        q.add_argument("--model", required=True)
        q.add_argument("--data", required=True)
        q.add_argument("--out")
        q.add_argument("--format", choices=["csv", "json"], default="csv")
        q.set_defaults(func=func)

    g = sub.add_parser("gridsearch", help="7x7 (C, sigma) grid then eta search with unlabeled-pool CV")
    _add_data_opts(g)
    _add_train_opts(g)
    g.add_argument("--folds", type=int, default=5)
    g.add_argument("--cv-seed", type=int, default=0)
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--out", help="grid CSV path (default stdout)")
    g.add_argument("--format", choices=["csv", "json"], default="csv")
    g.set_defaults(func=cmd_gridsearch)

    b = sub.add_parser("bench", help="training/prediction wall time versus T and n")
    b.add_argument("--T-list", help="comma-separated iteration counts at fixed m")
    b.add_argument("--n-list", help="comma-separated training sizes at one pass")
    b.add_argument("--m", type=int, default=None)
    b.add_argument("--batch", type=int, default=6)
    b.add_argument("--n", type=int, default=2000)
    b.add_argument("--n-pred", type=int, default=500)
    b.add_argument("--sigma", type=float, default=0.1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--out")
    b.add_argument("--format", choices=["csv"], default="csv")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.error(str(exc))
    except TSGError as exc:
        failure = exc
    except OSError as exc:
        failure = InputError(f"{exc.strerror}: {exc.filename}")
    msg = " ".join(str(failure).split())
    print(f"tsgs3vm: error code={failure.exit_code} kind={type(failure).__name__} msg={msg}", file=sys.stderr)
    return failure.exit_code


if __name__ == "__main__":
    sys.exit(main())
