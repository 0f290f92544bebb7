"""Command line: ``presto fit``, ``presto predict`` and ``presto bench``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 internal
error.  ``PRESTO_OUTPUT_DIR`` overrides the output directory.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import eval as ev
from .density import nll as density_nll
from .gbdt import GbdtConfig
from .intervals import IntervalMethodConfig
from .io import atomic_write, content_hash, csv_text, dump_json, file_hash
from .model import PrestoConfig, PrestoModel, default_gbdt, presto_fit, presto_predict

logger = logging.getLogger("presto")

SCHEMA_VERSION = 1
ENV_OUTPUT_DIR = "PRESTO_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
# derived per classifier, so not settable from a config file
_DERIVED_GBDT = ("num_classes", "seed")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass(frozen=True)
class DataConfig:
    train: str
    target: str
    valid: Optional[str] = None
    valid_frac: Optional[float] = None
    retrain: bool = True

    def __post_init__(self):
        if self.valid is not None and self.valid_frac is not None:
            raise ValueError("give either valid or valid_frac, not both")
        if self.valid_frac is not None and not 0 < self.valid_frac < 1:
            raise ValueError("valid_frac must lie in (0, 1)")


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig
    model: PrestoConfig = field(default_factory=PrestoConfig)
    output_dir: str = "."
    model_file: str = "model.json"
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        model = self.model.to_dict()
        for key in _DERIVED_GBDT:
            model["gbdt"].pop(key)
        return {
            "schema_version": self.schema_version,
            "data": dataclasses.asdict(self.data),
            "model": model,
            "output_dir": self.output_dir,
            "model_file": self.model_file,
        }


def _line_of(text: str, key: str) -> Optional[int]:
    needle = json.dumps(key)
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def _where(path: str, text: str) -> str:
    line = _line_of(text, path.rsplit(".", 1)[-1]) if text else None
    return f"{path} (line {line})" if line else path


def _section(cls, d, path: str, text: str, required=()):
    if not isinstance(d, dict):
        raise ConfigError(f"{_where(path, text)}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in d:
        if key not in names:
            raise ConfigError(f"{_where(f'{path}.{key}', text)}: unknown key")
    for key in required:
        if key not in d:
            raise ConfigError(f"{path}: missing required key {key!r}")
    return d


def _build(cls, kwargs, path, text):
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{_where(path, text)}: {e}") from None


def parse_config(doc: dict, text: str = "") -> RunConfig:
    """Validate a config document; every problem names its field."""
    top = _section(RunConfig, doc, "config", text, required=("schema_version", "data"))
    if top["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"{_where('schema_version', text)}: expected {SCHEMA_VERSION}, "
                          f"got {top['schema_version']!r}")
    data = _build(DataConfig, _section(DataConfig, top["data"], "data", text, ("train", "target")),
                  "data", text)
    model_d = dict(_section(PrestoConfig, top.get("model", {}), "model", text))
    interval = _build(IntervalMethodConfig,
                      _section(IntervalMethodConfig, model_d.pop("interval", {}), "model.interval", text),
                      "model.interval", text)
    gbdt_d = _section(GbdtConfig, model_d.pop("gbdt", {}), "model.gbdt", text)
    for key in _DERIVED_GBDT:
        if key in gbdt_d:
            raise ConfigError(f"{_where(f'model.gbdt.{key}', text)}: set per classifier, not configurable")
    gbdt = _build(GbdtConfig, {**dataclasses.asdict(default_gbdt()), **gbdt_d}, "model.gbdt", text)
    model = _build(PrestoConfig, {**model_d, "interval": interval, "gbdt": gbdt}, "model", text)
    rest = {k: top[k] for k in ("output_dir", "model_file") if k in top}
    for k, v in rest.items():
        if not isinstance(v, str):
            raise ConfigError(f"{_where(k, text)}: expected a string")
    return RunConfig(data=data, model=model, **rest)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    cfg = parse_config(doc, text)
    return resolve_paths(cfg, os.path.dirname(os.path.abspath(path)))


def resolve_paths(cfg: RunConfig, base: str) -> RunConfig:
    """Make data paths and the output directory absolute, relative to ``base``."""
    def absolute(p):
        return None if p is None else os.path.normpath(os.path.join(base, p))

    data = replace(cfg.data, train=absolute(cfg.data.train), valid=absolute(cfg.data.valid))
    return replace(cfg, data=data, output_dir=absolute(cfg.output_dir))


def output_dir(default: str) -> str:
    return os.environ.get(ENV_OUTPUT_DIR) or default




def read_table(path: str, target: Optional[str], require_target: bool = True):
    """(feature names, X, y) from a CSV; y is None when the target column is absent."""
    try:
        header, data = ev.read_numeric_csv(path)
    except FileNotFoundError:
        raise DataError(f"cannot read {path}: no such file") from None
    except (OSError, UnicodeDecodeError, ValueError) as e:
        raise DataError(str(e)) from None
    if target is None or target not in header:
        if require_target:
            raise DataError(f"{path}: target column {target!r} not found (columns: {', '.join(header)})")
        return header, data, None
    col = header.index(target)
    y = data[:, col]
    if np.any(np.isnan(y)):
        raise DataError(f"{path}: target column {target!r} has empty cells")
    return [h for h in header if h != target], np.delete(data, col, axis=1), y


def _select(path, names, X, expected: List[str]) -> np.ndarray:
    missing = [n for n in expected if n not in names]
    extra = [n for n in names if n not in expected]
    if missing or extra:
        raise DataError(f"{path}: columns do not match the model's features "
                        f"(missing: {missing or 'none'}; unexpected: {extra or 'none'})")
    return X[:, [names.index(n) for n in expected]]


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        atomic_write(path, text)


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    out = output_dir(cfg.output_dir)
    names, X, y = read_table(cfg.data.train, cfg.data.target)
    inputs = {"train": {"path": cfg.data.train, "hash": file_hash(cfg.data.train)}}
    Xv = yv = None
    if cfg.data.valid is not None:
        vnames, Xv, yv = read_table(cfg.data.valid, cfg.data.target)
        Xv = _select(cfg.data.valid, vnames, Xv, names)
        inputs["valid"] = {"path": cfg.data.valid, "hash": file_hash(cfg.data.valid)}
    elif cfg.data.valid_frac is not None:
        perm = np.random.default_rng(cfg.model.seed).permutation(len(y))
        n_valid = int(round(cfg.data.valid_frac * len(y)))
        va, tr = perm[:n_valid], perm[n_valid:]
        X, y, Xv, yv = X[tr], y[tr], X[va], y[va]
    try:
        model = presto_fit(X, y, Xv, yv, cfg.model)
    except ValueError as e:
        raise DataError(str(e)) from None
    tuned = model.n_rounds
    if Xv is not None and cfg.data.retrain:
        # refit on train+valid with each forest's tuned round count
        model = presto_fit(np.vstack([X, Xv]), np.concatenate([y, yv]), config=cfg.model, n_rounds=tuned)
    doc = model.to_dict()
    doc["feature_names"] = names
    doc["target"] = cfg.data.target
    model_text = dump_json(doc)
    model_path = os.path.join(out, cfg.model_file)
    atomic_write(model_path, model_text)
    resolved = replace(cfg, output_dir=os.path.abspath(out))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "config": resolved.to_dict(),
        "seeds": {"seed": cfg.model.seed, "classifier_streams": "numpy default_rng([seed, i])"},
        "tuned": {"n_rounds": tuned, "retrained": bool(Xv is not None and cfg.data.retrain)},
        "inputs": inputs,
        "inputs_hash": content_hash(*(v["hash"].encode() for v in inputs.values())),
        "outputs": {"model": {"path": model_path, "hash": content_hash(model_text.encode())}},
    }
    atomic_write(_manifest_path(model_path), dump_json(manifest))
    logger.info("wrote %s (%d classifiers, rounds %s)", model_path, model.m, tuned)
    return EXIT_OK


def _manifest_path(model_path: str) -> str:
    stem, _ = os.path.splitext(model_path)
    return stem + ".manifest.json"


def load_model(path: str):
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot load model {path}: {e}") from None
    try:
        return PrestoModel.from_dict(doc), doc.get("feature_names"), doc.get("target")
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{path}: not a valid model file ({e})") from None


def cmd_predict(args) -> int:
    model, features, target = load_model(args.model)
    target = args.target or target
    names, X, y = read_table(args.input, target, require_target=args.nll)
    if features is None:
        if X.shape[1] != model.forests[0].n_features:
            raise DataError(f"{args.input}: {X.shape[1]} features, model expects {model.forests[0].n_features}")
    else:
        X = _select(args.input, names, X, features)
    densities = presto_predict(model, X)
    if args.density:
        text = "".join(json.dumps(d.to_dict()) + "\n" for d in densities)
    elif args.mean:
        text = csv_text([{"mean": repr(float(d.mean()))} for d in densities])
    elif args.interval is not None:
        if not 0 < args.interval < 1:
            raise ConfigError(f"--interval must lie in (0, 1), got {args.interval}")
        a = 1.0 - args.interval
        rows = [d.quantile([a / 2, 1 - a / 2]) for d in densities]
        text = csv_text([{"lo": repr(float(lo)), "hi": repr(float(hi))} for lo, hi in rows])
    else:
        vals = [density_nll(d, v) for d, v in zip(densities, y)]
        rows = [{"row": str(i), "nll": repr(float(v))} for i, v in enumerate(vals)]
        rows.append({"row": "mean", "nll": repr(float(np.mean(vals)))})
        text = csv_text(rows)
    _write(args.output, text)
    return EXIT_OK


def cmd_bench(args) -> int:
    ds = ev.resolve_dataset(args.dataset)
    if args.data:
        ds = replace(ds, path=args.data)
    if args.learning_rate:
        ds = replace(ds, learning_rate=args.learning_rate)
    try:
        data = ds.load()
    except (OSError, ValueError) as e:
        raise DataError(f"cannot load dataset {ds.name!r}: {e}") from None
    out = os.path.join(output_dir(args.output_dir), ds.name)
    n_trials = args.trials or ds.n_trials
    kw = dict(freeze_partitions=args.freeze_partitions, keep_densities=args.keep_densities, m=args.m)
    files = {}
    summary = {}
    if args.learning_curve:
        spec = ev.TrialSpec(ds.name, seed=args.seed, variant=args.variant, max_depth=args.max_depth, m=args.m)
        curve = ev.learning_curve(spec, args.learning_curve, ds, data)
        files["learning_curve"] = os.path.join(out, f"learning_curve_{args.variant}.csv")
        ev.write_curve_csv(files["learning_curve"], curve)
        summary["learning_curve"] = curve
    else:
        variants = ("structured", "standard") if args.compare_variants else (args.variant,)
        rows, runs = [], {}
        for v in variants:
            runs[v] = ev.run_trials(ds, n_trials, v, args.seed, data, max_depth=args.max_depth, **kw)
            files[f"trials_{v}"] = os.path.join(out, f"trials_{v}.jsonl")
            ev.write_jsonl(files[f"trials_{v}"], runs[v])
            rows.append(ev.summary_rows(ds.name, v, ev.aggregate(runs[v])))
            summary[v] = {"max_depth": runs[v][0].max_depth,
                          "fit_seconds": [round(r.fit_seconds, 3) for r in runs[v]]}
        files["summary"] = os.path.join(out, "summary.csv")
        ev.write_summary_csv(files["summary"], rows)
        if args.compare_variants:
            cmp = ev.VariantComparison(ds.name, runs["structured"], runs["standard"]).summary()
            files["comparison"] = os.path.join(out, "comparison.csv")
            atomic_write(files["comparison"], csv_text([{k: _cell(v) for k, v in cmp.items()}]))
            summary["comparison"] = cmp
        for row in rows:
            print(",".join(f"{k}={v}" for k, v in row.items()))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": "bench",
        "dataset": dataclasses.asdict(ds),
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "data_hash": file_hash(ds.path),
        "results": summary,
        "outputs": {k: {"path": p, "hash": file_hash(p)} for k, p in files.items()},
    }
    atomic_write(os.path.join(out, "manifest.json"), dump_json(manifest))
    return EXIT_OK


def _cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="presto", description="Probabilistic regression with averaged coarse classifiers.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a model from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="densities, means, intervals or NLL for a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="output file (default: stdout)")
    p.add_argument("--target", help="target column name (default: the one used in training)")
    what = p.add_mutually_exclusive_group(required=True)
    what.add_argument("--density", action="store_true", help="JSON lines of {edges, heights}")
    what.add_argument("--mean", action="store_true", help="density means")
    what.add_argument("--interval", type=float, metavar="LEVEL", help="central interval at LEVEL")
    what.add_argument("--nll", action="store_true", help="per-row and mean negative log-likelihood")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="run the benchmark protocol on a dataset")
    p.add_argument("--dataset", required=True, help=f"one of {', '.join(ev.DATASETS)}")
    p.add_argument("--data", help="CSV path overriding the dataset's default")
    p.add_argument("--trials", type=int)
    p.add_argument("--variant", choices=tuple(ev.VARIANTS), default="structured")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, help="number of classifiers (default: dataset setting)")
    p.add_argument("--max-depth", type=int, help="skip depth tuning")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--freeze-partitions", action="store_true",
                   help="retrain on the partitions drawn for validation instead of redrawing")
    p.add_argument("--keep-densities", action="store_true")
    p.add_argument("--learning-curve", type=int, metavar="N", help="NLL for 1..N forests")
    p.add_argument("--compare-variants", action="store_true", help="structured vs standard, paired")
    p.add_argument("--output-dir", default="results")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        # bad values that got past validation
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        logger.exception("internal error")
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
