"""Command-line interface: generate, analyze, train, evaluate, sweep, recipe.

Exit codes: 0 success, 1 data or processing failure, 2 usage or
configuration error. Every command writes ``run.json`` under ``--out``
with the fully resolved arguments; ``--config run.json`` replays it.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, formats, pipeline, svm
from .indices import analyze
from .siggen import RANGE_PRESETS, ClassLabel, GeneratorConfig, SnrPolicy, make_dataset
from .waveform import DegenerateSignalError, ParameterError

log = logging.getLogger("pqgdr")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class DataFailure(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _write_run(out: Path, args, extra: dict | None = None) -> None:
    resolved = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    run = {"tool": "pqgdr", "version": __version__, "command": args.command, "args": resolved}
    if extra:
        run.update(extra)
    (out / "run.json").write_text(json.dumps(run, indent=1, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"{type(v).__name__} is not JSON serialisable")


def _need_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _load_dataset(path):
    root = _need_file(path, "dataset directory")
    if not (root / formats.MANIFEST).exists():
        raise UsageError(f"no {formats.MANIFEST} in dataset directory {root}")
    try:
        return formats.load_dataset(root)
    except (formats.FormatError, ParameterError, KeyError) as exc:
        raise DataFailure(f"cannot read dataset {root}: {exc}") from None


def _load_model(path) -> svm.SvmModel:
    p = _need_file(path, "model file")
    try:
        return svm.SvmModel.load(p)
    except svm.ModelLoadError as exc:
        raise DataFailure(f"cannot load model {p}: {exc}") from None


def _snr_list(text: str) -> list[float]:
    """``30,34,40`` or ``start:stop:step`` (stop inclusive)."""
    try:
        if ":" in text:
            a, b, s = (float(x) for x in text.split(":"))
            if s <= 0:
                raise ValueError
            n = int(np.floor((b - a) / s + 1e-9)) + 1
            return [round(a + k * s, 10) for k in range(n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR list {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _params(args) -> tuple[svm.SvmParams | None, bool]:
    grid = args.C is None or (args.kernel == "rbf" and args.gamma is None)
    params = svm.SvmParams(
        C=args.C if args.C is not None else 10.0,
        kernel=args.kernel,
        gamma=args.gamma if args.gamma is not None else 1.0,
        tol=args.tol,
        max_passes=args.max_passes,
    )
    return params, grid


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    cfg = GeneratorConfig.preset(
        args.ranges,
        per_class_count=args.per_class,
        master_seed=args.seed,
        snr=SnrPolicy(args.clean_fraction, tuple(args.snr_range)),
        classes=tuple(args.classes) if args.classes else tuple(int(c) for c in ClassLabel),
    )
    out = _out_dir(args)
    ds = make_dataset(cfg)
    formats.save_dataset(ds, out, args.format)
    _write_run(out, args, {"digest": cfg.digest()})
    for lab, n in sorted(ds.counts().items()):
        print(f"{ClassLabel(lab).code}: {n}")
    print(f"{len(ds)} waveforms written to {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    out = _out_dir(args)
    rows, failures = [], 0
    for path in args.inputs:
        try:
            w = formats.read_waveform(path)
            a = analyze(w)
        except FileNotFoundError:
            print(f"{path}: no such file", file=sys.stderr)
            failures += 1
            continue
        except (formats.FormatError, DegenerateSignalError, ParameterError, ValueError) as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            failures += 1
            continue
        rec = {"file": str(path), **a.record()}
        rows.append(rec)
        print(f"{path}: f={rec['f_est']:.4f} Hz  k1={rec['k1']:.2f} V  k2={rec['k2']:.3f} %  "
              f"t0={rec['t0'] * 1e3:.2f} ms  T0={rec['T0'] * 1e3:.2f} ms")
        if args.dump_itd:
            name = Path(path).stem + "_itd.csv"
            t = np.arange(len(a.itd)) / a.itd.sample_rate
            np.savetxt(out / name, np.column_stack([t, a.itd.itd]), delimiter=",",
                       header="t_s,itd_pct", comments="", fmt="%.10g")
    if rows:
        with open(out / "features.csv", "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
            wr.writeheader()
            wr.writerows(rows)
        (out / "features.json").write_text(json.dumps(rows, indent=1) + "\n")
    _write_run(out, args, {"analyzed": len(rows), "failed": failures})
    if not rows:
        return EXIT_DATA
    return EXIT_OK


def cmd_train(args) -> int:
    ds = _load_dataset(args.data)
    out = _out_dir(args)
    params, grid = _params(args)
    t = time.perf_counter()
    res = pipeline.train(ds, params, grid=grid, seed=args.seed, workers=args.threads)
    path = out / "model.json"
    res.model.save(path)
    p = res.model.params
    print(f"trained {len(res.model.machines)} machines on {res.model.meta['train_items']} items "
          f"(kernel={p.kernel}, C={p.C:g}, gamma={p.gamma:g}) in {time.perf_counter() - t:.1f} s")
    for e in res.errors:
        print(f"item {e.index} ({ClassLabel(e.label).code}): {e.message}", file=sys.stderr)
    _write_run(out, args, {"model": str(path), "params": p.to_dict(), "feature_errors": len(res.errors)})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = _load_model(args.model)
    ds = _load_dataset(args.data)
    out = _out_dir(args)
    try:
        ev = pipeline.evaluate(model, ds, args.threads)
    except pipeline.ConfigurationError as exc:
        raise UsageError(str(exc)) from None
    cm = ev.matrix
    (out / "confusion.csv").write_text(cm.to_csv())
    (out / "confusion.json").write_text(cm.to_json() + "\n")
    print(cm.format())
    print(f"overall accuracy: {cm.overall:.2f} %")
    for e in ev.errors:
        print(f"item {e.index} ({ClassLabel(e.label).code}): {e.message}", file=sys.stderr)
    _write_run(out, args, {"overall_accuracy": cm.overall, "feature_errors": len(ev.errors)})
    return EXIT_OK if cm.total else EXIT_DATA


def cmd_sweep(args) -> int:
    model = _load_model(args.model)
    ds = _load_dataset(args.data)
    out = _out_dir(args)
    try:
        res = pipeline.noise_sweep(model, ds, args.snrs, seed=args.seed, workers=args.threads)
    except pipeline.ConfigurationError as exc:
        raise UsageError(str(exc)) from None
    (out / "sweep.csv").write_text(res.to_csv())
    for r in res.rows:
        print(f"{r.snr_db:6g} dB  {r.overall:6.2f} %")
    _write_run(out, args, {"levels": [{"snr_db": r.snr_db, "seed": r.seed, "overall": r.overall}
                                      for r in res.rows]})
    return EXIT_OK


def cmd_recipe(args) -> int:
    out = _out_dir(args)
    params, grid = _params(args)
    t = time.perf_counter()
    res = pipeline.recipe(
        per_class=args.per_class, train_seed=args.seed, test_seed=args.seed + 1,
        train_snr=SnrPolicy(args.clean_fraction, tuple(args.snr_range)),
        test_snr=SnrPolicy(args.clean_fraction, tuple(args.snr_range)),
        preset=args.ranges, params=params, grid=grid, workers=args.threads,
    )
    cm = res.evaluation.matrix
    res.train.model.save(out / "model.json")
    (out / "confusion.csv").write_text(cm.to_csv())
    (out / "confusion.json").write_text(cm.to_json() + "\n")
    print(cm.format())
    print(f"overall accuracy: {cm.overall:.2f} %  ({time.perf_counter() - t:.1f} s)")
    _write_run(out, args, {"overall_accuracy": cm.overall, "params": res.train.model.params.to_dict(),
                           "train_digest": res.train_config.digest(),
                           "test_digest": res.test_config.digest()})
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _svm_flags(p):
    p.add_argument("--kernel", choices=["rbf", "linear"], default="rbf")
    p.add_argument("--C", type=float, default=None, help="box constraint; omit to grid-search")
    p.add_argument("--gamma", type=float, default=None, help="RBF width; omit to grid-search")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-passes", type=int, default=50)


def _gen_flags(p):
    p.add_argument("--per-class", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ranges", choices=sorted(RANGE_PRESETS), default="zoned")
    p.add_argument("--clean-fraction", type=float, default=None)
    p.add_argument("--snr-range", type=float, nargs=2, default=[34.0, 50.0], metavar=("LO", "HI"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pqgdr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pqgdr {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--config", help="JSON file (e.g. a run.json) supplying argument defaults")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: $PQGDR_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesise a labelled dataset")
    _gen_flags(p)
    p.add_argument("--classes", type=int, nargs="+", choices=range(10))
    p.add_argument("--format", choices=["csv", "bin"], default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate, clean_fraction=1.0)

    p = sub.add_parser("analyze", help="features and indices of waveform files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--dump-itd", action="store_true", help="write the ITD(n) series per file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="train the one-vs-one SVM on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0, help="validation split seed")
    _svm_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="confusion matrix of a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="accuracy versus SNR on re-noised copies of a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--snrs", type=_snr_list, default=_snr_list("30:50:2"),
                   help="comma list or start:stop:step in dB (default 30:50:2)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("recipe", help="generate train and test sets, train, evaluate")
    _gen_flags(p)
    _svm_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recipe, clean_fraction=0.5, seed=1)
    return parser


def _parse(argv) -> argparse.Namespace:
    """Parse ``argv``; with ``--config`` the file's values become defaults
    (and satisfy required flags), explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("-v", "--verbose", action="store_true")
    pre.add_argument("--threads")
    ns, rest = pre.parse_known_args(argv)
    parser = build_parser()
    if not ns.config:
        return parser.parse_args(argv)
    try:
        blob = json.loads(Path(ns.config).read_text())
    except FileNotFoundError:
        parser.error(f"config file not found: {ns.config}")
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        parser.error(f"config file {ns.config} is not JSON: {exc}")
    values = dict(blob.get("args", blob))
    command = values.pop("command", None) or blob.get("command")
    subs = parser._subparsers._group_actions[0].choices
    if command not in subs:
        parser.error(f"config {ns.config} names no valid command")
    if not any(tok in subs for tok in rest):
        rest = [command, *rest]
    sub = subs[command]
    for action in sub._actions:
        if action.dest in values:
            action.required = False
            if action.nargs == "+":
                action.nargs = "*"
    sub.set_defaults(**{k: v for k, v in values.items() if k != "config"})
    head = ["--config", ns.config] + (["-v"] if ns.verbose else [])
    if ns.threads is not None:
        head += ["--threads", ns.threads]
    return parser.parse_args([*head, *rest])


def main(argv=None) -> int:
    args = _parse(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParameterError, pipeline.ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFailure, svm.DataError, svm.TrainingError, formats.FormatError, DegenerateSignalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
