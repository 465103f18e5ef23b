"""Loading, validating and splitting the UCI smartphone HAR dataset.

Only the engineered 561-feature representation is read. The archive layout
is the published one::

    <root>/activity_labels.txt
    <root>/features.txt
    <root>/train/{X_train,y_train,subject_train}.txt
    <root>/test/{X_test,y_test,subject_test}.txt

The published ``train``/``test`` partition separates subjects and is kept
as is; the ``test`` partition is the held-out set that :func:`split_heldout`
halves into validation and test data.
"""

from __future__ import annotations

import enum
import io
import logging
import os
import shutil
import tempfile
import urllib.request
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import N_FEATURES, SeededRng
from .errors import (AcquisitionError, DatasetValidationError, IntegrityError,
                     HarmlError)

log = logging.getLogger(__name__)

FEATURE_RANGE_SLACK = 1e-6
N_SUBJECTS = 30
DEFAULT_SPLIT_SEED = 42
PROTOCOL_TAG = "uci-har:published-train / stratified-half(heldout)->validation,test"
ARCHIVE_DIRNAME = "UCI HAR Dataset"


class ActivityLabel(enum.IntEnum):
    WALKING = 1
    WALKING_UPSTAIRS = 2
    WALKING_DOWNSTAIRS = 3
    SITTING = 4
    STANDING = 5
    LAYING = 6


LABELS = tuple(ActivityLabel)
N_CLASSES = len(LABELS)


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: ActivityLabel
    subject_id: int


@dataclass(frozen=True)
class Partition:
    """An immutable block of samples stored column-wise.

    ``index`` holds each row's ordinal in the partition it was loaded from,
    which is what disjointness checks compare.
    """

    X: np.ndarray
    y: np.ndarray
    subjects: np.ndarray
    name: str = ""
    index: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            X = X.reshape(len(X), -1)
        y = np.asarray(self.y, dtype=np.int64)
        subjects = np.asarray(self.subjects, dtype=np.int64)
        index = (np.arange(len(y)) if self.index is None
                 else np.asarray(self.index, dtype=np.int64))
        if not (len(X) == len(y) == len(subjects) == len(index)):
            raise IntegrityError("partition columns have different lengths")
        for arr in (X, y, subjects, index):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "index", index)

    def __len__(self):
        return len(self.y)

    def __getitem__(self, i) -> Sample:
        return Sample(self.X[i], ActivityLabel(int(self.y[i])),
                      int(self.subjects[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def take(self, rows, name: str | None = None) -> "Partition":
        rows = np.asarray(rows, dtype=np.int64)
        return Partition(self.X[rows], self.y[rows], self.subjects[rows],
                         self.name if name is None else name, self.index[rows])

    @classmethod
    def from_samples(cls, samples, name: str = "") -> "Partition":
        samples = list(samples)
        if not samples:
            return cls(np.zeros((0, N_FEATURES)), [], [], name)
        return cls(np.stack([s.features for s in samples]),
                   [int(s.label) for s in samples],
                   [s.subject_id for s in samples], name)


@dataclass(frozen=True)
class DataSplit:
    train: Partition
    validation: Partition
    test: Partition
    seed: int
    protocol_tag: str = PROTOCOL_TAG


def _partition_files(root: Path, part: str) -> dict[str, Path]:
    return {
        "X": root / part / f"X_{part}.txt",
        "y": root / part / f"y_{part}.txt",
        "subject": root / part / f"subject_{part}.txt",
    }


def resolve_root(root) -> Path:
    """Accept either the archive root or its parent (the unzip target)."""
    root = Path(root)
    if (root / "activity_labels.txt").exists():
        return root
    nested = root / ARCHIVE_DIRNAME
    if (nested / "activity_labels.txt").exists():
        return nested
    return root


def _require(path: Path) -> Path:
    if not path.is_file():
        raise AcquisitionError(f"missing dataset file: {path}")
    return path


def read_activity_labels(root) -> dict[int, str]:
    path = _require(Path(root) / "activity_labels.txt")
    names = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2 or not parts[0].isdigit():
            raise DatasetValidationError("malformed activity label line",
                                         path, lineno)
        names[int(parts[0])] = parts[1]
    expected = {a.value: a.name for a in ActivityLabel}
    if names != expected:
        raise DatasetValidationError(
            f"activity labels {names} differ from expected {expected}", path)
    return names


def read_feature_names(root) -> list[str]:
    path = _require(Path(root) / "features.txt")
    names = [line.split(maxsplit=1)[1] for line in path.read_text().splitlines()
             if line.strip()]
    if len(names) != N_FEATURES:
        raise DatasetValidationError(
            f"expected {N_FEATURES} feature names, found {len(names)}", path)
    return names


def _parse_features(path: Path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != N_FEATURES:
                raise DatasetValidationError(
                    f"expected {N_FEATURES} features, found {len(fields)}",
                    path, lineno)
            try:
                row = np.array(fields, dtype=np.float64)
            except ValueError:
                raise DatasetValidationError("unparseable number", path,
                                             lineno) from None
            if not np.all(np.isfinite(row)):
                raise DatasetValidationError("non-finite feature value", path,
                                             lineno)
            lim = 1.0 + FEATURE_RANGE_SLACK
            if np.any(np.abs(row) > lim):
                col = int(np.argmax(np.abs(row) > lim)) + 1
                raise DatasetValidationError(
                    f"feature {col} value {row[col - 1]!r} outside [-1, 1]",
                    path, lineno)
            rows.append(row)
    if not rows:
        return np.zeros((0, N_FEATURES))
    return np.vstack(rows)


def _parse_ints(path: Path, lo: int, hi: int, what: str) -> np.ndarray:
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            try:
                v = int(float(text)) if "." in text or "e" in text.lower() \
                    else int(text)
            except ValueError:
                raise DatasetValidationError(f"unparseable {what}", path,
                                             lineno) from None
            if not lo <= v <= hi:
                raise DatasetValidationError(
                    f"{what} out of range {lo}..{hi}: {v}", path, lineno)
            values.append(v)
    return np.array(values, dtype=np.int64)


def load_partition(root, part: str) -> Partition:
    """Parse one published partition (``train`` or ``test``)."""
    root = resolve_root(root)
    files = {k: _require(p) for k, p in _partition_files(root, part).items()}
    X = _parse_features(files["X"])
    y = _parse_ints(files["y"], 1, N_CLASSES, "label")
    s = _parse_ints(files["subject"], 1, N_SUBJECTS, "subject")
    if not len(X) == len(y) == len(s):
        raise IntegrityError(
            f"{part}: row counts disagree (X={len(X)}, y={len(y)}, "
            f"subject={len(s)})")
    return Partition(X, y, s, part)


def load_uci_har(root) -> tuple[Partition, Partition]:
    """Load the published train and held-out partitions."""
    root = resolve_root(root)
    read_activity_labels(root)
    read_feature_names(root)
    train = load_partition(root, "train")
    heldout = load_partition(root, "test")
    if len(train) == 0 or len(heldout) == 0:
        raise IntegrityError("dataset partition is empty")
    log.info("loaded %d train and %d held-out samples", len(train),
             len(heldout))
    return train, heldout


def write_partition(partition: Partition, root, part: str) -> None:
    """Write a partition in the dataset's text layout.

    Values use 17 significant digits so parsing the output reproduces the
    floats exactly.
    """
    files = _partition_files(Path(root), part)
    files["X"].parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    np.savetxt(buf, partition.X.reshape(len(partition), -1), fmt="% .16e")
    files["X"].write_text(buf.getvalue())
    files["y"].write_text("".join(f"{v}\n" for v in partition.y))
    files["subject"].write_text("".join(f"{v}\n" for v in partition.subjects))


def write_metadata(root, feature_names=None) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "activity_labels.txt").write_text(
        "".join(f"{a.value} {a.name}\n" for a in ActivityLabel))
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(1, N_FEATURES + 1)]
    (root / "features.txt").write_text(
        "".join(f"{i} {n}\n" for i, n in enumerate(feature_names, 1)))


def class_histogram(samples) -> dict[ActivityLabel, int]:
    labels = samples.y if isinstance(samples, Partition) else \
        [int(s.label) for s in samples]
    counts = np.bincount(np.asarray(labels, dtype=np.int64),
                         minlength=N_CLASSES + 1)
    return {a: int(counts[a.value]) for a in ActivityLabel}


def split_heldout(heldout: Partition, seed: int = DEFAULT_SPLIT_SEED):
    """Stratified random halving of the held-out partition.

    Each class is shuffled with the seeded generator and cut in half. For
    classes of odd size the extra sample alternates between the halves
    (first odd class to validation), so the overall sizes also differ by at
    most one.
    """
    if len(heldout) == 0:
        raise HarmlError("cannot split an empty held-out partition")
    rng = SeededRng(seed)
    val_rows, test_rows = [], []
    extra_to_validation = True
    for label in np.unique(heldout.y):
        rows = np.flatnonzero(heldout.y == label)
        rows = rows[rng.permutation(len(rows))]
        half = len(rows) // 2
        if len(rows) % 2:
            if extra_to_validation:
                half += 1
            extra_to_validation = not extra_to_validation
        val_rows.append(rows[:half])
        test_rows.append(rows[half:])
    val = np.sort(np.concatenate(val_rows))
    test = np.sort(np.concatenate(test_rows))
    return heldout.take(val, "validation"), heldout.take(test, "test")


def make_split(train: Partition, heldout: Partition,
               seed: int = DEFAULT_SPLIT_SEED) -> DataSplit:
    validation, test = split_heldout(heldout, seed)
    return DataSplit(train, validation, test, seed)


def load_split(root, seed: int = DEFAULT_SPLIT_SEED) -> DataSplit:
    return make_split(*load_uci_har(root), seed=seed)


def _hist_record(p: Partition) -> dict:
    return {a.name: n for a, n in class_histogram(p).items()}


def dataset_summary(split: DataSplit) -> dict:
    """JSON-ready record of partition sizes, histograms and split seed."""
    parts = {"train": split.train, "validation": split.validation,
             "test": split.test}
    return {
        "format_version": 1,
        "protocol_tag": split.protocol_tag,
        "split_seed": split.seed,
        "n_features": int(split.train.X.shape[1]),
        "sizes": {k: len(p) for k, p in parts.items()},
        "heldout_size": len(split.validation) + len(split.test),
        "class_histogram": {k: _hist_record(p) for k, p in parts.items()},
    }


def fetch_dataset(url: str, destination) -> Path:
    """Download and unzip the dataset archive into ``destination``.

    A nested ``.zip`` of the same archive (as distributed by some mirrors)
    is unpacked too. Returns the resolved dataset root.
    """
    destination = Path(destination)
    destination.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(suffix=".zip", dir=destination)
    os.close(fd)
    try:
        try:
            with urllib.request.urlopen(url) as resp, open(tmp, "wb") as out:
                shutil.copyfileobj(resp, out)
        except OSError as exc:
            raise AcquisitionError(f"could not fetch {url}: {exc}") from exc
        _extract(Path(tmp), destination)
    finally:
        os.unlink(tmp)
    root = resolve_root(destination)
    if not (root / "activity_labels.txt").exists():
        for inner in sorted(destination.glob("*.zip")):
            _extract(inner, destination)
        root = resolve_root(destination)
    if not (root / "activity_labels.txt").exists():
        raise AcquisitionError(f"archive from {url} has no dataset layout")
    return root


def _extract(archive: Path, destination: Path) -> None:
    with zipfile.ZipFile(archive) as zf:
        for name in zf.namelist():
            target = (destination / name).resolve()
            if not str(target).startswith(str(destination.resolve())):
                raise AcquisitionError(f"unsafe path in archive: {name}")
        zf.extractall(destination)

