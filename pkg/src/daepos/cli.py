"""Command-line entry point: ``daepos {train,eval,sweep,hetero,validate,synth}``.

Exit codes: 0 success, 1 configuration error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import ensemble, experiments
from .dataset import DataError, synth_generate, write_directory

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def parse_synth(text: str) -> dict:
    """``"n_spaces=8,noise=0.05"`` -> dict. An empty string means all defaults."""
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"bad --synth item {item!r}; expected key=value")
        out[key.strip()] = float(value)
    return out


def read_config_file(path) -> dict:
    """Plain ``key = value`` lines; ``#`` starts a comment. Keys use flag names."""
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{n}: expected key = value")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; command-line flags override it")
    p.add_argument("--data-dir", help="directory of PhoneN_Space.csv files")
    p.add_argument("--synth", nargs="?", const="", default=None,
                   help="use generated data, e.g. 'n_spaces=8,per_space=400,separation=1,noise=0.03'")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p-loss-train", type=float, default=0.5)
    p.add_argument("--p-loss-test", default=None,
                   help="float, or start:stop:step for the sweep (default 0:0.95:0.05)")
    p.add_argument("--methods", default="dae,knn,svm")
    p.add_argument("--grid-file", help="JSON object with optional 'knn' and 'svm' cell lists")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=1200)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--split-ratio", type=float, default=0.8)
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="daepos", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (
        ("train", "train the DAE ensemble and save it"),
        ("eval", "main comparison at one test p_loss"),
        ("sweep", "accuracy versus test p_loss"),
        ("hetero", "train on one phone, test on each"),
    ):
        _common(sub.add_parser(name, help=help_))
    v = sub.add_parser("validate", help="rank correlation between measurement series")
    v.add_argument("files", nargs="+")
    v.add_argument("--names", help="comma-separated series names")
    v.add_argument("--out-dir", default="out")
    s = sub.add_parser("synth", help="write a synthetic dataset as PhoneN_Space.csv files")
    s.add_argument("--synth", default="")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", default="synth_data")
    return parser


def _subparser(parser, command) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def parse_args(parser, argv=None) -> argparse.Namespace:
    """Parse ``argv``; values from ``--config`` become defaults that flags override."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    values = read_config_file(path)
    sub = _subparser(parser, args.command)
    actions = {a.dest: a for a in sub._actions}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise ConfigError(f"unknown config key(s): {unknown}")
    defaults = {}
    for key, value in values.items():
        convert = actions[key].type or str
        try:
            defaults[key] = convert(value)
        except ValueError:
            raise ConfigError(f"config key {key!r}: bad value {value!r}") from None
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _float_or_sweep(text: str):
    if ":" in str(text):
        parts = [float(v) for v in str(text).split(":")]
        if len(parts) != 3:
            raise ConfigError("sweep spec must be start:stop:step")
        return parts
    return float(text)


def make_config(args, sweep: bool = False) -> experiments.ExperimentConfig:
    grids = {}
    if args.grid_file:
        try:
            grids = json.loads(Path(args.grid_file).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read grid file: {exc}") from None
    if args.synth is None and args.data_dir is None:
        raise ConfigError("give --data-dir or --synth")
    synth = parse_synth(args.synth) if args.synth is not None and args.data_dir is None else None
    p_test = _float_or_sweep(args.p_loss_test) if args.p_loss_test is not None else None
    kw = {}
    if p_test is None:
        pass
    elif isinstance(p_test, list):
        if not sweep:
            raise ConfigError("--p-loss-test takes a single value for this command")
        kw.update(sweep_start=p_test[0], sweep_stop=p_test[1], sweep_step=p_test[2])
    elif not sweep:
        kw["p_loss_test"] = p_test
    else:
        kw.update(sweep_start=p_test, sweep_stop=p_test, sweep_step=1.0)
    return experiments.ExperimentConfig(
        data_dir=args.data_dir,
        synth=synth,
        out_dir=args.out_dir,
        seed=args.seed,
        methods=tuple(m.strip() for m in args.methods.split(",") if m.strip()),
        p_loss_train=args.p_loss_train,
        split_ratio=args.split_ratio,
        folds=args.folds,
        knn_grid=grids.get("knn"),
        svm_grid=grids.get("svm"),
        batch_size=args.batch_size,
        dropout_rate=args.dropout,
        max_epochs=args.epochs,
        early_stop_patience=args.patience,
        val_fraction=args.val_fraction,
        n_jobs=args.jobs,
        **kw,
    )


def run(args) -> int:
    if args.command == "synth":
        params = {**experiments.SYNTH_DEFAULTS, **parse_synth(args.synth)}
        data = synth_generate(
            int(params["n_spaces"]), int(params["per_space"]), params["separation"],
            params["noise"], args.seed, phone_shift=params["phone_shift"],
        )
        paths = write_directory(data, args.out_dir)
        print(f"wrote {len(paths)} synthetic files to {args.out_dir}")
        return EXIT_OK

    if args.command == "validate":
        names = args.names.split(",") if args.names else None
        res = experiments.run_validation(args.files, names, args.out_dir)
        print(res.to_csv(), end="")
        return EXIT_OK

    config = make_config(args, sweep=args.command == "sweep")
    label = " (synthetic data)" if config.synthetic else ""
    if args.command == "train":
        split, files = experiments.load_split(config)
        trained = experiments.train_methods(split, replace(config, methods=("dae",)))
        path = ensemble.save(trained.model, Path(config.out_dir) / "model")
        print(f"saved ensemble of {trained.model.n_spaces} DAEs to {path}{label}")
    elif args.command == "eval":
        res = experiments.run_main_eval(config)
        for m in config.methods:
            r = res.reports[m]
            print(f"{m:4s} accuracy={r.accuracy:.4f} macro_f1={r.macro_f1:.4f}{label}")
    elif args.command == "sweep":
        res = experiments.run_ploss_sweep(config)
        print(res.to_csv(), end="")
    elif args.command == "hetero":
        res = experiments.run_device_heterogeneity(config)
        print(res.to_csv(), end="")
        for m in config.methods:
            print(f"{m} average cross-device drop: {res.drop(m):.3f}{label}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parse_args(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return run(args)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, DataError):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
