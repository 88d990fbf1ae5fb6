"""Command-line front end: ``broadcf train | evaluate | predict | sweep``.

Settings resolve in this order, first hit wins: command-line flag,
``BROADCF_<KEY>`` environment variable, ``--config`` file (flat ``key = value``
lines), built-in default.

Exit codes: 0 success, 1 configuration error, 2 I/O or data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import itertools
import logging
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from .encoding import build_training_set
from .errors import BroadCFError, ConfigError, DataError
from .evaluation import DECODE_MODES, TIMING_FIELDS, EvalReport, evaluate
from .neighbors import COLD, build_index
from .ratings import load_ratings, split
from .recommender import BroadCF

log = logging.getLogger("broadcf")

ENV_PREFIX = "BROADCF_"


@dataclass(frozen=True)
class RunConfig:
    dataset_format: str = "generic_csv"
    rating_max: int = 5
    k: int = 5
    l: int = 5
    n: int = 25
    d_z: int = 10
    m: int = 25
    d_h: int = 15
    lam: float = 1e-8
    seed: int = 0
    train_ratio: float = 0.75
    validation_ratio: float = 0.25
    split_seed: int = 0
    decode_mode: str = "index_weighted"
    clamp: bool = False
    holdout: bool = True
    threads: int = 0
    format: str = "json"
    timing: bool = True

    def validate(self) -> RunConfig:
        for name in ("k", "l", "n", "d_z", "m", "d_h", "rating_max"):
            if getattr(self, name) < 1:
                raise ConfigError(f"--{name.replace('_', '-')} must be >= 1, got {getattr(self, name)}")
        if self.lam < 0:
            raise ConfigError(f"--lambda must be >= 0, got {self.lam}")
        if not 0 < self.train_ratio < 1:
            raise ConfigError("--train-ratio must be in (0, 1)")
        if not 0 <= self.validation_ratio < 1:
            raise ConfigError("--validation-ratio must be in [0, 1)")
        if self.threads < 0:
            raise ConfigError("--threads must be >= 0")
        choices = {
            "decode_mode": DECODE_MODES,
            "dataset_format": ("generic_csv", "movielens"),
            "format": ("json", "csv"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"--{name.replace('_', '-')} must be one of {', '.join(allowed)}")
        return self

    def recommender(self) -> BroadCF:
        return BroadCF(
            k=self.k,
            l=self.l,
            n=self.n,
            d_z=self.d_z,
            m=self.m,
            d_h=self.d_h,
            lam=self.lam,
            seed=self.seed,
            decode_mode=self.decode_mode,
            clamp=self.clamp,
            holdout=self.holdout,
            threads=self.threads or None,
        )


# Config-file / env spellings that differ from the field name.
_ALIASES = {"lambda": "lam", "timings": "timing"}
_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, raw):
    kind = type(getattr(RunConfig(), name))
    if not isinstance(raw, str):
        return raw
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("1", "true", "yes", "on")
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None


def _canonical(key: str) -> str:
    key = key.strip().lower().replace("-", "_")
    key = _ALIASES.get(key, key)
    if key not in _FIELDS:
        raise ConfigError(f"unknown setting {key!r}")
    return key


def read_config_file(path) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        name = _canonical(key)
        out[name] = _coerce(name, value)
    return out


def resolve_config(flags: dict, config_file=None, environ=None, base: dict | None = None) -> RunConfig:
    """Merge settings; ``base`` replaces the built-in defaults (e.g. a saved model's run)."""
    environ = os.environ if environ is None else environ
    values = dict(base or {})
    if config_file:
        values.update(read_config_file(config_file))
    for key, raw in environ.items():
        if key.startswith(ENV_PREFIX) and key[len(ENV_PREFIX):].lower() in {*_FIELDS, *_ALIASES}:
            name = _canonical(key[len(ENV_PREFIX):])
            values[name] = _coerce(name, raw)
    values.update({k: v for k, v in flags.items() if v is not None and k in _FIELDS})
    return RunConfig(**values).validate()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--k", type=int, help="nearest users per vector (default 5)")
    g.add_argument("--l", type=int, help="nearest items per vector (default 5)")
    g.add_argument("--n", type=int, help="mapped feature groups (default 25)")
    g.add_argument("--d-z", dest="d_z", type=int, help="mapped group width (default 10)")
    g.add_argument("--m", type=int, help="enhancement groups (default 25)")
    g.add_argument("--d-h", dest="d_h", type=int, help="enhancement group width (default 15)")
    g.add_argument("--lambda", dest="lam", type=float, help="ridge penalty (default 1e-8)")
    g.add_argument("--seed", type=int, help="random layer seed (default 0)")
    g.add_argument("--holdout", dest="holdout", action="store_true", default=None,
                   help="keep each training pair's own rating out of its fills (default)")
    g.add_argument("--no-holdout", dest="holdout", action="store_false",
                   help="fill training vectors exactly as test vectors are filled")


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("dataset", help="ratings CSV")
    g.add_argument("--dataset-format", choices=("generic_csv", "movielens"), help="default generic_csv")
    g.add_argument("--rating-max", type=int, help="top of the integer rating scale (default 5)")
    g.add_argument("--train-ratio", type=float, help="per-user share kept out of the test set (default 0.75)")
    g.add_argument("--validation-ratio", type=float,
                   help="share of the remaining ratings held for validation (default 0.25)")
    g.add_argument("--split-seed", type=int, help="seed of the per-user split (default 0)")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("json", "csv"), help="report format (default json)")
    p.add_argument("--no-timing", dest="timing", action="store_false", default=None,
                   help="omit wall-clock fields so reports are byte-reproducible")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--threads", type=int, help="worker cap (default: all cores)")
    p.add_argument("--decode-mode", choices=DECODE_MODES)
    p.add_argument("--clamp", action="store_true", default=None, help="clip predictions to [1, rating max]")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="broadcf", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit a model and report validation metrics")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_output_flags(p)
    _add_common(p)
    p.add_argument("--output", required=True, help="model file to write")
    p.add_argument("--dump-training-set", metavar="CSV", help="also write the (X, Y) training matrices")

    p = sub.add_parser("evaluate", help="score a saved model on a held-out split")
    p.add_argument("model")
    _add_data_flags(p)
    _add_output_flags(p)
    _add_common(p)
    p.add_argument("--on", choices=("test", "validation"), default="test")
    p.add_argument("--output", help="append the report to this file instead of stdout")

    p = sub.add_parser("predict", help="predict one rating from raw ids")
    p.add_argument("model")
    p.add_argument("--user", required=True)
    p.add_argument("--item", required=True)
    p.add_argument("--strict", action="store_true", help="fail on ids absent from the model")
    _add_common(p)

    p = sub.add_parser("sweep", help="vary hyper-parameters and write one CSV row per setting")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_common(p)
    p.add_argument("--grid", action="append", required=True, metavar="KEY=V1,V2,...",
                   help="values for one hyper-parameter; repeatable")
    p.add_argument("--product", action="store_true",
                   help="cartesian product of all grids instead of one key at a time")
    p.add_argument("--on", choices=("test", "validation"), default="test")
    p.add_argument("--no-timing", dest="timing", action="store_false", default=None,
                   help="omit wall-clock columns")
    p.add_argument("--output", help="CSV file (default stdout)")
    return parser


def _flags(args: argparse.Namespace) -> dict:
    return {k: v for k, v in vars(args).items() if k in _FIELDS}


def _load_split(args, cfg: RunConfig):
    matrix = load_ratings(args.dataset, cfg.dataset_format, cfg.rating_max)
    return split(matrix, cfg.train_ratio, cfg.validation_ratio, cfg.split_seed)


def _held_out(data, on: str):
    rows = data.validation if on == "validation" else data.test
    if not rows:
        raise ConfigError(f"the {on} set is empty; adjust --train-ratio / --validation-ratio")
    return rows


def _emit(text: str, output=None, append=False) -> None:
    if output is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(output, "a" if append else "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise DataError(f"cannot write {output}: {exc.strerror or exc}") from exc


def _render(report: EvalReport, cfg: RunConfig, header: bool = True) -> str:
    if cfg.format == "csv":
        return report.to_csv(header=header, timing=cfg.timing)
    return report.to_json(timing=cfg.timing) + "\n"


def _split_echo(cfg: RunConfig, on: str) -> dict:
    return {
        "train_ratio": cfg.train_ratio,
        "validation_ratio": cfg.validation_ratio,
        "split_seed": cfg.split_seed,
        "eval_set": on,
    }


_SPLIT_KEYS = ("dataset_format", "rating_max", "train_ratio", "validation_ratio", "split_seed")


def cmd_train(args) -> int:
    cfg = resolve_config(_flags(args), args.config)
    data = _load_split(args, cfg)
    on = "validation" if data.validation else "test"
    rec = cfg.recommender().fit(data.train)
    if args.dump_training_set:
        try:
            build_training_set(data.train, rec.index_, holdout=rec.holdout).to_csv(args.dump_training_set)
        except OSError as exc:
            raise DataError(f"cannot write {args.dump_training_set}: {exc.strerror or exc}") from exc
    report = evaluate(rec, _held_out(data, on))
    report.config.update(_split_echo(cfg, on))
    try:
        rec.save(args.output, run={k: getattr(cfg, k) for k in _SPLIT_KEYS})
    except OSError as exc:
        raise DataError(f"cannot write model {args.output}: {exc.strerror or exc}") from exc
    log.info("model written to %s", args.output)
    _emit(_render(report, cfg))
    return 0


def cmd_evaluate(args) -> int:
    rec = BroadCF.load(args.model)
    base = {k: v for k, v in rec.run_meta.items() if k in _SPLIT_KEYS}
    cfg = resolve_config(_flags(args), args.config, base=base)
    rec.threads = cfg.threads or None
    if args.clamp:
        rec.clamp = True
    data = _load_split(args, cfg)
    if data.train.fingerprint() != rec.train_.fingerprint():
        raise DataError(
            "dataset split does not reproduce the model's training data; "
            "pass the dataset, ratios and --split-seed used at train time"
        )
    report = evaluate(rec, _held_out(data, args.on), args.decode_mode)
    report.config.update(_split_echo(cfg, args.on))
    append = args.output is not None and Path(args.output).exists()
    _emit(_render(report, cfg, header=not append), args.output, append=True)
    return 0


def cmd_predict(args) -> int:
    cfg = resolve_config(_flags(args), args.config)
    rec = BroadCF.load(args.model, threads=cfg.threads or None)
    if args.clamp:
        rec.clamp = True
    u, i = rec.lookup_ids(args.user, args.item)
    unknown = [what for what, idx in (("user", u), ("item", i)) if idx == COLD]
    if unknown and (args.strict or rec.train_.nnz == 0):
        raise ConfigError(f"unknown {' and '.join(unknown)} id; no cold-start fallback allowed")
    for what in unknown:
        log.warning("%s id not in model; using cold-start fallback", what)
    value = rec.predict_one(u, i, args.decode_mode)
    _emit(f"{value!r}\n")
    return 0


_SWEEPABLE = ("k", "l", "n", "d_z", "m", "d_h", "lam", "seed")


def parse_grid(specs: list[str]) -> dict[str, list]:
    grid: dict[str, list] = {}
    for spec in specs:
        if "=" not in spec:
            raise ConfigError(f"--grid expects KEY=V1,V2,..., got {spec!r}")
        key, values = spec.split("=", 1)
        name = _canonical(key)
        if name not in _SWEEPABLE:
            raise ConfigError(f"--grid: {key!r} is not a sweepable hyper-parameter")
        vals = [_coerce(name, v) for v in values.split(",") if v.strip()]
        if not vals:
            raise ConfigError(f"--grid {key}: no values")
        grid.setdefault(name, []).extend(vals)
    return grid


def grid_points(base: RunConfig, grid: dict[str, list], product: bool) -> list[RunConfig]:
    if product:
        keys = list(grid)
        return [replace(base, **dict(zip(keys, combo))).validate() for combo in itertools.product(*grid.values())]
    return [replace(base, **{key: v}).validate() for key, values in grid.items() for v in values]


SWEEP_COLUMNS = [
    "k", "l", "n", "d_z", "m", "d_h", "lambda", "seed", "rmse", "mae",
    "preprocess_seconds", "solve_seconds", "train_seconds", "test_seconds", "trainable_params", "n_test",
]


def cmd_sweep(args) -> int:
    cfg = resolve_config(_flags(args), args.config)
    points = grid_points(cfg, parse_grid(args.grid), args.product)
    data = _load_split(args, cfg)
    held_out = _held_out(data, args.on)
    indexes = {}
    rows = []
    for point in points:
        key = (point.k, point.l)
        if key not in indexes:
            indexes[key] = build_index(data.train, point.k, point.l, threads=point.threads or None)
        rec = point.recommender().fit(data.train, index=indexes[key])
        r = evaluate(rec, held_out)
        log.info("k=%d l=%d n=%d d_z=%d m=%d d_h=%d rmse=%.4f mae=%.4f",
                 point.k, point.l, point.n, point.d_z, point.m, point.d_h, r.rmse, r.mae)
        rows.append([point.k, point.l, point.n, point.d_z, point.m, point.d_h, point.lam, point.seed,
                     r.rmse, r.mae, r.preprocess_seconds, r.solve_seconds, r.train_seconds, r.test_seconds,
                     r.trainable_params, r.n_test])
    keep = [j for j, c in enumerate(SWEEP_COLUMNS) if cfg.timing or c not in TIMING_FIELDS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([SWEEP_COLUMNS[j] for j in keep])
    w.writerows([[row[j] for j in keep] for row in rows])
    _emit(buf.getvalue(), args.output)
    return 0


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "predict": cmd_predict, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    threads = args.threads if args.threads and args.threads > 0 else None
    limits = threadpool_limits(limits=threads) if threads else contextlib.nullcontext()
    try:
        with limits:
            return COMMANDS[args.command](args)
    except BroadCFError as exc:
        print(f"broadcf {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
