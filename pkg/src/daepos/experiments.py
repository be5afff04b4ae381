"""Experiment drivers: main comparison, p_loss sweep, device heterogeneity, validation.

Every driver takes an :class:`ExperimentConfig`, returns in-memory results
and, when ``out_dir`` is set, writes CSV tables plus a JSON manifest that
embeds the fully resolved configuration. Outputs contain no timestamps, so
a fixed seed reproduces them byte for byte.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import baselines, ensemble, nn
from .dataset import (
    DataError,
    DatasetSplit,
    by_phone,
    combine_and_split,
    feature_matrix,
    load_directory,
    manifest,
    parse_csv,
    synth_generate,
)
from .metrics import ConfusionMatrix, confusion, kendall, report, spearman

log = logging.getLogger(__name__)

METHODS = ("dae", "knn", "svm")
SYNTH_DEFAULTS = {"n_spaces": 8, "per_space": 400, "separation": 1.0, "noise": 0.03, "phone_shift": 0.0}


@dataclass
class ExperimentConfig:
    data_dir: Optional[str] = None
    synth: Optional[dict] = None
    out_dir: Optional[str] = None
    seed: int = 0
    methods: tuple = METHODS
    p_loss_train: float = 0.5
    p_loss_test: float = 0.5
    sweep_start: float = 0.0
    sweep_stop: float = 0.95
    sweep_step: float = 0.05
    split_ratio: float = 0.8
    folds: int = 5
    knn_grid: Optional[list] = None
    svm_grid: Optional[list] = None
    batch_size: int = 100
    dropout_rate: float = 0.1
    max_epochs: int = 1200
    learning_rate: float = 1.0
    early_stop_patience: int = 50
    val_fraction: float = 0.1
    n_jobs: int = 1

    def __post_init__(self):
        self.methods = tuple(self.methods)
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {METHODS}, got {self.methods}")
        for name in ("p_loss_train", "p_loss_test", "sweep_start", "sweep_stop"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.sweep_step <= 0 or self.sweep_stop < self.sweep_start:
            raise ValueError("sweep needs step > 0 and stop >= start")
        if self.data_dir is None and self.synth is None:
            raise ValueError("either data_dir or synth parameters are required")
        if self.synth is not None:
            unknown = set(self.synth) - set(SYNTH_DEFAULTS)
            if unknown:
                raise ValueError(f"unknown synth parameter(s): {sorted(unknown)}")
            self.synth = {**SYNTH_DEFAULTS, **self.synth}
        self.train_config()  # validates the training settings

    @property
    def synthetic(self) -> bool:
        return self.data_dir is None

    def train_config(self) -> nn.TrainConfig:
        return nn.TrainConfig(
            batch_size=self.batch_size,
            dropout_rate=self.dropout_rate,
            max_epochs=self.max_epochs,
            learning_rate=self.learning_rate,
            early_stop_patience=self.early_stop_patience,
            val_fraction=self.val_fraction,
            rng_seed=self.seed,
        )

    def sweep_values(self) -> list[float]:
        n = int(round((self.sweep_stop - self.sweep_start) / self.sweep_step)) + 1
        return [round(self.sweep_start + i * self.sweep_step, 10) for i in range(n)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["knn_grid"] = self.knn_grid if self.knn_grid is not None else baselines.DEFAULT_KNN_GRID
        d["svm_grid"] = self.svm_grid if self.svm_grid is not None else baselines.DEFAULT_SVM_GRID
        return d


def contamination_seed(run_seed: int, purpose: int, index: int) -> int:
    return int(np.random.SeedSequence([run_seed, purpose, index]).generate_state(1)[0])


_MAIN, _SWEEP, _HETERO = 1, 2, 3


# ---------------------------------------------------------------------------
# data and model preparation


def load_split(config: ExperimentConfig) -> tuple[DatasetSplit, list]:
    """Split the real dataset or a generated one. Returns ``(split, source_files)``."""
    if config.data_dir is not None:
        if not Path(config.data_dir).is_dir():
            raise DataError(f"dataset directory {config.data_dir} does not exist")
        per_phone = load_directory(config.data_dir)
        files = sorted(p.name for p in Path(config.data_dir).glob("Phone*_*.csv"))
    else:
        s = config.synth
        per_space = synth_generate(
            n_spaces=int(s["n_spaces"]),
            per_space=int(s["per_space"]),
            separation=float(s["separation"]),
            noise=float(s["noise"]),
            seed=config.seed,
            phone_shift=float(s["phone_shift"]),
        )
        per_phone = by_phone(per_space)
        files = []
    flagged = sum(1 for fps in per_phone.values() for fp in fps if fp.flags)
    if flagged:
        log.warning("%d fingerprint(s) violate identity/range rules", flagged)
    split = combine_and_split(per_phone, config.split_ratio, config.seed)
    return split, files


@dataclass
class TrainedMethods:
    predictors: dict  # method -> callable(X_normalised) -> labels
    chosen: dict  # method -> chosen hyperparameters
    grids: dict  # method -> GridSearchReport
    model: Optional[ensemble.EnsembleModel] = None


def train_methods(split: DatasetSplit, config: ExperimentConfig) -> TrainedMethods:
    """Fit every requested method on the identical (normalised) training partition."""
    Xtr, _ = split.normalized()
    ytr = split.y_train
    n = len(split.spaces)
    out = TrainedMethods({}, {}, {})
    for method in config.methods:
        if method == "dae":
            per_space = {s: Xtr[ytr == s.index] for s in split.spaces}
            model = ensemble.train_ensemble(
                per_space,
                config.train_config(),
                config.p_loss_train,
                normalizer=split.normalizer,
                n_jobs=config.n_jobs,
            )
            out.model = model
            out.predictors["dae"] = lambda X, m=model: ensemble.predict_batch(m, X)[0]
            out.chosen["dae"] = {
                "architecture": list(ensemble.DEFAULT_WIDTHS),
                "p_loss_train": config.p_loss_train,
            }
        else:
            grid = config.knn_grid if method == "knn" else config.svm_grid
            rep, model = baselines.grid_search_cv(method, grid, config.folds, Xtr, ytr, config.seed, n)
            out.predictors[method] = lambda X, m=model: baselines.predict_batch(m, X)
            out.chosen[method] = rep.best_params
            out.grids[method] = rep
    return out


def contaminate(X: np.ndarray, p_loss: float, seed: int) -> np.ndarray:
    return ensemble.corrupt(X, p_loss, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# output helpers


def _csv(rows: Sequence[Sequence], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _write(out_dir, name: str, text: str) -> None:
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _manifest(config, split, files, experiment, extra) -> str:
    doc = json.loads(manifest(split, files, config.synthetic))
    doc.update({"experiment": experiment, "config": config.to_dict()})
    doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def confusion_csv(cm: ConfusionMatrix, names: Sequence[str]) -> str:
    return _csv([[n, *map(int, row)] for n, row in zip(names, cm.counts)], ["true\\predicted", *names])


# ---------------------------------------------------------------------------
# experiments


@dataclass
class EvalResult:
    reports: dict  # method -> MetricsReport
    confusions: dict  # method -> ConfusionMatrix
    chosen: dict
    spaces: list


def run_main_eval(config: ExperimentConfig, trained: Optional[TrainedMethods] = None) -> EvalResult:
    """Train all methods, test on one copy of the test set contaminated at ``p_loss_test``."""
    split, files = load_split(config)
    trained = trained or train_methods(split, config)
    _, Xte = split.normalized()
    Xc = contaminate(Xte, config.p_loss_test, contamination_seed(config.seed, _MAIN, 0))
    names = [s.name for s in split.spaces]

    reports, cms = {}, {}
    for method in config.methods:
        pred = trained.predictors[method](Xc)
        cms[method] = confusion(split.y_test, pred, len(names))
        reports[method] = report(cms[method])
    result = EvalResult(reports, cms, trained.chosen, names)

    if config.out_dir:
        rows = []
        for method in config.methods:
            r = reports[method].to_dict(names)
            rows.append([method, "accuracy", "", "", r["accuracy"], ""])
            for c in r["per_class"]:
                rows.append([method, c["class"], c["precision"], c["recall"], c["f1"], c["support"]])
            m = r["macro"]
            rows.append([method, "macro", m["precision"], m["recall"], m["f1"], int(reports[method].support.sum())])
            _write(config.out_dir, f"confusion_{method}.csv", confusion_csv(cms[method], names))
        _write(config.out_dir, "eval_metrics.csv",
               _csv(rows, ["method", "class", "precision", "recall", "f1_or_accuracy", "support"]))
        for method, rep in trained.grids.items():
            _write(config.out_dir, f"grid_{method}.csv", rep.to_csv())
        extra = {
            "chosen": trained.chosen,
            "accuracy": {m: reports[m].accuracy for m in config.methods},
        }
        _write(config.out_dir, "eval_manifest.json", _manifest(config, split, files, "eval", extra))
    return result


@dataclass
class SweepResult:
    rows: list  # (p_loss, method, accuracy)

    def accuracy(self, method: str) -> tuple[np.ndarray, np.ndarray]:
        pts = [(p, a) for p, m, a in self.rows if m == method]
        return np.array([p for p, _ in pts]), np.array([a for _, a in pts])

    def to_csv(self) -> str:
        return _csv(self.rows, ["p_loss", "method", "accuracy"])


def run_ploss_sweep(config: ExperimentConfig, trained: Optional[TrainedMethods] = None) -> SweepResult:
    """Train once; score each method on one contaminated test copy per p_loss value."""
    split, files = load_split(config)
    trained = trained or train_methods(split, config)
    _, Xte = split.normalized()
    rows = []
    for i, p in enumerate(config.sweep_values()):
        Xc = Xte if p == 0.0 else contaminate(Xte, p, contamination_seed(config.seed, _SWEEP, i))
        for method in config.methods:
            acc = float(np.mean(trained.predictors[method](Xc) == split.y_test))
            rows.append((p, method, acc))
    result = SweepResult(rows)
    if config.out_dir:
        _write(config.out_dir, "sweep.csv", result.to_csv())
        _write(config.out_dir, "sweep_manifest.json",
               _manifest(config, split, files, "sweep", {"chosen": trained.chosen}))
    return result


@dataclass
class HeteroResult:
    phones: list
    accuracy: dict  # method -> {(train_phone, test_phone): accuracy}
    chosen: dict  # method -> {train_phone: params}

    def drop(self, method: str) -> float:
        """Average relative accuracy drop when testing on a phone other than the training one."""
        drops = []
        for tr in self.phones:
            same = self.accuracy[method][(tr, tr)]
            others = [self.accuracy[method][(tr, te)] for te in self.phones if te != tr]
            drops.append((same - float(np.mean(others))) / same if same > 0 else 0.0)
        return float(np.mean(drops))

    def to_csv(self) -> str:
        rows = [
            (m, tr, te, acc)
            for m in self.accuracy
            for (tr, te), acc in sorted(self.accuracy[m].items())
        ]
        return _csv(rows, ["method", "train_phone", "test_phone", "accuracy"])


def run_device_heterogeneity(config: ExperimentConfig) -> HeteroResult:
    """Train on one phone's training rows, test on each phone's test rows."""
    split, files = load_split(config)
    phones = sorted(set(split.phone_train) | set(split.phone_test))
    if len(phones) < 2:
        raise DataError("device heterogeneity needs data from at least two phones")
    acc: dict = {m: {} for m in config.methods}
    chosen: dict = {m: {} for m in config.methods}
    for i, tr in enumerate(phones):
        sub = split.restrict_train(tr)
        trained = train_methods(sub, config)
        _, Xte = sub.normalized()
        Xc = contaminate(Xte, config.p_loss_test, contamination_seed(config.seed, _HETERO, i))
        preds = {m: trained.predictors[m](Xc) for m in config.methods}
        for m in config.methods:
            chosen[m][tr] = trained.chosen[m]
            for te in phones:
                rows = sub.phone_test == te
                acc[m][(tr, te)] = float(np.mean(preds[m][rows] == sub.y_test[rows]))
    result = HeteroResult(phones, acc, chosen)
    if config.out_dir:
        _write(config.out_dir, "hetero.csv", result.to_csv())
        _write(config.out_dir, "hetero_drop.csv",
               _csv([(m, result.drop(m)) for m in config.methods], ["method", "relative_drop"]))
        _write(config.out_dir, "hetero_manifest.json",
               _manifest(config, split, files, "hetero", {"chosen": chosen}))
    return result


@dataclass
class ValidationResult:
    names: list
    pairs: list  # (name_a, name_b)
    spearman: list
    kendall: list

    def to_csv(self) -> str:
        header = ["statistic", *[f"{{{a},{b}}}" for a, b in self.pairs]]
        return _csv([["spearman", *self.spearman], ["kendall", *self.kendall]], header)


def run_validation(
    paths: Sequence,
    names: Optional[Sequence[str]] = None,
    out_dir: Optional[str] = None,
) -> ValidationResult:
    """Pairwise rank correlation of synchronised readings of the six signal fields.

    Each file's rows are flattened row by row over the six fields, so every
    series must have the same number of rows.
    """
    if len(paths) < 2:
        raise ValueError("validation needs at least two measurement series")
    names = list(names) if names is not None else [Path(p).stem for p in paths]
    series = [feature_matrix(parse_csv(p, label="", phone="")) for p in paths]
    lengths = {s.shape[0] for s in series}
    if len(lengths) != 1:
        raise DataError(f"series are not synchronised: row counts {sorted(lengths)}")
    pairs, rho, tau = [], [], []
    for i, j in itertools.combinations(range(len(series)), 2):
        a, b = series[i].ravel(), series[j].ravel()
        pairs.append((names[i], names[j]))
        rho.append(spearman(a, b))
        tau.append(kendall(a, b))
    result = ValidationResult(names, pairs, rho, tau)
    if out_dir:
        _write(out_dir, "validation.csv", result.to_csv())
    return result
