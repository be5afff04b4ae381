"""Fingerprint CSV ingestion, stratified splitting and min-max scaling.

The on-disk layout is one CSV per (phone, space) pair named
``Phone<N>_<Space>.csv`` with the columns in :data:`COLUMNS`.
"""
from __future__ import annotations

import csv
import io
import json
import os
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

COLUMNS = (
    "Date_Time",
    "PLMN_ID",
    "eNodeB_ID",
    "Cell_ID",
    "ECI",
    "RSRP",
    "RSRQ",
    "SINR",
    "UMTS_neighbors",
    "LTE_neighbors",
    "RSRP_strongest",
)
FEATURES = COLUMNS[5:]
N_FEATURES = len(FEATURES)

SPACE_NAMES = (
    "Living_room",
    "Sunroom",
    "Bedroom",
    "Hallway",
    "Dining_room",
    "Kitchen",
    "Bathroom",
    "Walk-in_closet",
)

# Plausible raw ranges used by the synthetic generator.
FEATURE_RANGES = (
    (-140.0, -44.0),  # RSRP, dBm
    (-20.0, -3.0),  # RSRQ, dB
    (-10.0, 30.0),  # SINR, dB
    (0.0, 10.0),  # UMTS neighbours
    (0.0, 10.0),  # LTE neighbours
    (-140.0, -44.0),  # strongest neighbour RSRP, dBm
)

_FILENAME = re.compile(r"^(?:P|p)hone[_ ]?(\d+)_(.+)\.csv$")


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True, order=True)
class SpaceLabel:
    index: int
    name: str


@dataclass(frozen=True)
class Fingerprint:
    date_time: str
    plmn_id: str
    enodeb_id: int
    cell_id: int
    eci: int
    rsrp: float
    rsrq: float
    sinr: float
    umts_neighbors: int
    lte_neighbors: int
    rsrp_strongest: float
    label: str = ""
    phone: str = ""
    flags: tuple = ()

    @property
    def valid(self) -> bool:
        return not self.flags


def check_fingerprint(fp: Fingerprint) -> tuple:
    """Names of the identity/range rules that ``fp`` violates."""
    flags = []
    if not 0 <= fp.cell_id <= 255:
        flags.append("cell_id_range")
    if fp.eci != 256 * fp.enodeb_id + fp.cell_id:
        flags.append("eci_identity")
    if fp.umts_neighbors < 0 or fp.lte_neighbors < 0:
        flags.append("negative_neighbors")
    return tuple(flags)


def parse_filename(path) -> tuple[str, str]:
    """``Phone2_Bedroom.csv`` -> ``("phone2", "Bedroom")``."""
    m = _FILENAME.match(os.path.basename(str(path)))
    if not m:
        raise DataError(f"file name {path!s} does not follow PhoneN_Space.csv")
    return f"phone{m.group(1)}", m.group(2)


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def parse_csv(source, label: Optional[str] = None, phone: Optional[str] = None) -> list[Fingerprint]:
    """Read fingerprints from a path or an open text/byte stream.

    Header columns are matched by name, in any order. Label and phone come
    from the file name unless given explicitly. Rows that break the ECI
    identity or the Cell_ID range are kept and carry ``flags``.
    """
    if isinstance(source, (str, os.PathLike)):
        if label is None or phone is None:
            ph, lab = parse_filename(source)
            label = lab if label is None else label
            phone = ph if phone is None else phone
        with open(source, newline="", encoding="utf-8-sig") as fh:
            return _parse_rows(fh, label, phone, str(source))
    if hasattr(source, "mode") and "b" in getattr(source, "mode", ""):
        source = io.TextIOWrapper(source, encoding="utf-8-sig", newline="")
    elif isinstance(source, (bytes, bytearray)):
        source = io.StringIO(source.decode("utf-8-sig"))
    elif isinstance(source, io.BufferedIOBase):
        source = io.TextIOWrapper(source, encoding="utf-8-sig", newline="")
    return _parse_rows(source, label or "", phone or "", "<stream>")


def _parse_rows(fh, label: str, phone: str, where: str) -> list[Fingerprint]:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError(f"{where}: missing header row") from None
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise DataError(f"{where}: missing required column(s) {missing}")
    pos = {c: header.index(c) for c in COLUMNS}

    out = []
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        line = reader.line_num
        try:
            get = lambda c: row[pos[c]].strip()
            fp = Fingerprint(
                date_time=get("Date_Time"),
                plmn_id=get("PLMN_ID"),
                enodeb_id=_int(get("eNodeB_ID")),
                cell_id=_int(get("Cell_ID")),
                eci=_int(get("ECI")),
                rsrp=float(get("RSRP")),
                rsrq=float(get("RSRQ")),
                sinr=float(get("SINR")),
                umts_neighbors=_int(get("UMTS_neighbors")),
                lte_neighbors=_int(get("LTE_neighbors")),
                rsrp_strongest=float(get("RSRP_strongest")),
                label=label,
                phone=phone,
            )
        except (ValueError, IndexError) as exc:
            raise DataError(f"{where}, line {line}: {exc}") from None
        out.append(replace(fp, flags=check_fingerprint(fp)))
    return out


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def write_csv(fingerprints: Iterable[Fingerprint], dest) -> None:
    """Write fingerprints with the canonical header; ``dest`` is a path or text stream."""
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for fp in fingerprints:
            w.writerow([
                fp.date_time, fp.plmn_id, fp.enodeb_id, fp.cell_id, fp.eci,
                _fmt(fp.rsrp), _fmt(fp.rsrq), _fmt(fp.sinr),
                fp.umts_neighbors, fp.lte_neighbors, _fmt(fp.rsrp_strongest),
            ])

    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            emit(fh)
    else:
        emit(dest)


def load_directory(data_dir) -> dict[str, list[Fingerprint]]:
    """Parse every ``PhoneN_Space.csv`` under ``data_dir``; returns phone -> fingerprints."""
    files = sorted(p for p in Path(data_dir).glob("*.csv") if _FILENAME.match(p.name))
    if not files:
        raise DataError(f"no PhoneN_Space.csv files found in {data_dir}")
    per_phone: dict[str, list[Fingerprint]] = {}
    for path in files:
        phone, _ = parse_filename(path)
        per_phone.setdefault(phone, []).extend(parse_csv(path))
    return per_phone


def extract_features(fp: Fingerprint) -> np.ndarray:
    """Raw feature vector ordered RSRP, RSRQ, SINR, UMTS, LTE, strongest RSRP."""
    return np.array(
        [fp.rsrp, fp.rsrq, fp.sinr, fp.umts_neighbors, fp.lte_neighbors, fp.rsrp_strongest],
        dtype=np.float64,
    )


def feature_matrix(fps: Sequence[Fingerprint]) -> np.ndarray:
    if not fps:
        return np.zeros((0, N_FEATURES))
    return np.stack([extract_features(fp) for fp in fps])


# ---------------------------------------------------------------------------
# normalisation


@dataclass(frozen=True)
class NormalizationParams:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        if np.any(self.min > self.max):
            raise ValueError("normaliser needs min <= max for every feature")

    def __eq__(self, other):
        return (
            isinstance(other, NormalizationParams)
            and np.array_equal(self.min, other.min)
            and np.array_equal(self.max, other.max)
        )

    __hash__ = None

    def __call__(self, raw) -> np.ndarray:
        return apply_normalizer(self, raw)

    def to_dict(self) -> dict:
        return {
            "min": [float(v).hex() for v in self.min],
            "max": [float(v).hex() for v in self.max],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "NormalizationParams":
        return cls(
            np.array([float.fromhex(v) for v in d["min"]]),
            np.array([float.fromhex(v) for v in d["max"]]),
        )


def fit_normalizer(train) -> NormalizationParams:
    X = np.atleast_2d(np.asarray(train, dtype=np.float64))
    if X.size == 0:
        raise ValueError("cannot fit a normaliser on no data")
    return NormalizationParams(X.min(axis=0), X.max(axis=0))


def apply_normalizer(params: NormalizationParams, raw) -> np.ndarray:
    """Min-max scale to [0, 1]; constant features map to 0, out-of-range values clamp."""
    v = np.asarray(raw, dtype=np.float64)
    span = params.max - params.min
    safe = np.where(span > 0, span, 1.0)
    with np.errstate(over="ignore"):  # huge ratios clamp to 1 anyway
        x = np.where(span > 0, (v - params.min) / safe, 0.0)
    return np.clip(x, 0.0, 1.0)


# ---------------------------------------------------------------------------
# splitting


@dataclass
class DatasetSplit:
    """Stratified train/test partition; features are raw (unnormalised)."""

    spaces: list
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    phone_train: np.ndarray
    phone_test: np.ndarray
    normalizer: NormalizationParams
    split_seed: int
    ratio: float = 0.8

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        return apply_normalizer(self.normalizer, self.X_train), apply_normalizer(self.normalizer, self.X_test)

    def counts(self) -> dict:
        return {
            s.name: {
                "train": int(np.sum(self.y_train == s.index)),
                "test": int(np.sum(self.y_test == s.index)),
            }
            for s in self.spaces
        }

    def restrict_train(self, phone: str) -> "DatasetSplit":
        """Keep only ``phone``'s training rows and refit the normaliser on them."""
        keep = self.phone_train == phone
        if not np.any(keep):
            raise DataError(f"no training samples from {phone}")
        return replace(
            self,
            X_train=self.X_train[keep],
            y_train=self.y_train[keep],
            phone_train=self.phone_train[keep],
            normalizer=fit_normalizer(self.X_train[keep]),
        )


def space_labels(names: Iterable[str]) -> list[SpaceLabel]:
    return [SpaceLabel(i, n) for i, n in enumerate(names)]


def combine_and_split(
    per_phone: Mapping[str, Sequence[Fingerprint]],
    ratio: float = 0.8,
    seed: int = 0,
    spaces: Optional[Sequence[str]] = None,
) -> DatasetSplit:
    """Merge phones per space, shuffle, and split each space ``ratio : 1 - ratio``.

    Spaces are ordered by ``spaces`` if given, else by first appearance. The
    normaliser is fitted on the training partition only.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    by_space: dict[str, list[Fingerprint]] = {}
    for phone in sorted(per_phone):
        for fp in per_phone[phone]:
            fp = fp if fp.phone else replace(fp, phone=phone)
            by_space.setdefault(fp.label, []).append(fp)
    names = list(spaces) if spaces is not None else list(by_space)
    labels = space_labels(names)

    rng = np.random.default_rng(seed)
    parts = {"train": ([], [], []), "test": ([], [], [])}
    for lab in labels:
        fps = by_space.get(lab.name, [])
        if len(fps) < 2:
            raise DataError(f"space {lab.name!r} has {len(fps)} sample(s); at least 2 are needed to split")
        order = rng.permutation(len(fps))
        n_train = min(max(int(round(ratio * len(fps))), 1), len(fps) - 1)
        for key, idx in (("train", order[:n_train]), ("test", order[n_train:])):
            X, y, ph = parts[key]
            X.append(feature_matrix([fps[i] for i in idx]))
            y.append(np.full(len(idx), lab.index))
            ph.extend(fps[i].phone for i in idx)

    X_train = np.concatenate(parts["train"][0])
    return DatasetSplit(
        spaces=labels,
        X_train=X_train,
        y_train=np.concatenate(parts["train"][1]),
        X_test=np.concatenate(parts["test"][0]),
        y_test=np.concatenate(parts["test"][1]),
        phone_train=np.array(parts["train"][2]),
        phone_test=np.array(parts["test"][2]),
        normalizer=fit_normalizer(X_train),
        split_seed=seed,
        ratio=ratio,
    )


def manifest(split: DatasetSplit, files: Sequence = (), synthetic: bool = False, extra: Optional[dict] = None) -> str:
    """Replayable JSON description of a split."""
    doc = {
        "synthetic": synthetic,
        "files": [str(f) for f in files],
        "split_seed": split.split_seed,
        "ratio": split.ratio,
        "spaces": [s.name for s in split.spaces],
        "counts": split.counts(),
        "normalizer": split.normalizer.to_dict(),
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# synthetic data


def synth_generate(
    n_spaces: int = 8,
    per_space: int = 400,
    separation: float = 1.0,
    noise: float = 0.03,
    seed: int = 0,
    phones: Sequence[str] = ("phone1", "phone2"),
    phone_shift: float = 0.0,
) -> dict[SpaceLabel, list[Fingerprint]]:
    """Gaussian clusters, one per space, mapped onto realistic raw ranges.

    Cluster centres live in the unit cube: ``0.5 + separation * (u - 0.5)``
    with ``u`` uniform, so ``separation=0`` puts every centre at 0.5. Noise
    is a standard deviation in the same unit scale. Samples alternate
    between ``phones``; ``phone_shift`` (unit scale) offsets every phone
    after the first to mimic device heterogeneity.
    """
    if n_spaces < 2 or per_space < 2:
        raise ValueError("need n_spaces >= 2 and per_space >= 2")
    if separation < 0 or noise < 0:
        raise ValueError("separation and noise must be non-negative")
    rng = np.random.default_rng(seed)
    lo = np.array([r[0] for r in FEATURE_RANGES])
    hi = np.array([r[1] for r in FEATURE_RANGES])
    names = [SPACE_NAMES[i] if i < len(SPACE_NAMES) else f"Space{i:02d}" for i in range(n_spaces)]
    centres = 0.5 + separation * (rng.random((n_spaces, N_FEATURES)) - 0.5)
    enodeb, cell = 383045, 8

    out: dict[SpaceLabel, list[Fingerprint]] = {}
    for i, name in enumerate(names):
        unit = centres[i] + noise * rng.standard_normal((per_space, N_FEATURES))
        phone_idx = np.arange(per_space) % len(phones)
        unit = unit + phone_shift * (phone_idx > 0)[:, None]
        raw = lo + np.clip(unit, 0.0, 1.0) * (hi - lo)
        fps = []
        for j in range(per_space):
            r = raw[j]
            fps.append(Fingerprint(
                date_time=f"20200101{(j // 3600) % 24:02d}{(j // 60) % 60:02d}{j % 60:02d}",
                plmn_id="310260",
                enodeb_id=enodeb,
                cell_id=cell,
                eci=256 * enodeb + cell,
                rsrp=round(float(r[0]), 1),
                rsrq=round(float(r[1]), 1),
                sinr=round(float(r[2]), 1),
                umts_neighbors=int(round(r[3])),
                lte_neighbors=int(round(r[4])),
                rsrp_strongest=round(float(r[5]), 1),
                label=name,
                phone=phones[phone_idx[j]],
            ))
        out[SpaceLabel(i, name)] = fps
    return out


def by_phone(per_space: Mapping[SpaceLabel, Sequence[Fingerprint]]) -> dict[str, list[Fingerprint]]:
    """Regroup a space-keyed mapping (as from :func:`synth_generate`) by phone."""
    out: dict[str, list[Fingerprint]] = {}
    for label in sorted(per_space):
        for fp in per_space[label]:
            out.setdefault(fp.phone, []).append(fp)
    return out


def write_directory(per_space: Mapping[SpaceLabel, Sequence[Fingerprint]], out_dir) -> list[Path]:
    """Write ``PhoneN_Space.csv`` files; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for label in sorted(per_space):
        groups: dict[str, list[Fingerprint]] = {}
        for fp in per_space[label]:
            groups.setdefault(fp.phone, []).append(fp)
        for phone in sorted(groups):
            num = re.sub(r"\D", "", phone) or "1"
            path = out_dir / f"Phone{num}_{label.name}.csv"
            write_csv(groups[phone], path)
            paths.append(path)
    return paths
