import json
import zipfile
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harml.dataset import (ActivityLabel, Partition, Sample, class_histogram,
                           dataset_summary, fetch_dataset, load_partition,
                           load_uci_har, make_split, split_heldout,
                           write_metadata, write_partition)
from harml.errors import (AcquisitionError, DatasetValidationError,
                          IntegrityError)
from synthetic import make_partitions, write_dataset


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("har")
    train, heldout = write_dataset(root, n_train=120, n_heldout=61, seed=3)
    return root, train, heldout


def _write_small(root, rows, labels, subjects, part="train"):
    write_metadata(root)
    d = root / part
    d.mkdir(parents=True, exist_ok=True)
    (d / f"X_{part}.txt").write_text(
        "".join(" ".join(f"{v:.7e}" for v in r) + "\n" for r in rows))
    (d / f"y_{part}.txt").write_text("".join(f"{v}\n" for v in labels))
    (d / f"subject_{part}.txt").write_text("".join(f"{v}\n" for v in subjects))


def test_load_round_trip(dataset_dir):
    root, train, heldout = dataset_dir
    t, h = load_uci_har(root)
    assert np.array_equal(t.X, train.X) and np.array_equal(h.X, heldout.X)
    assert np.array_equal(t.y, train.y) and np.array_equal(t.subjects, train.subjects)
    assert len(t) == 120 and len(h) == 61


def test_loader_accepts_parent_directory(tmp_path):
    write_dataset(tmp_path / "UCI HAR Dataset", n_train=12, n_heldout=6)
    t, h = load_uci_har(tmp_path)
    assert len(t) == 12


def test_reparse_after_serialize_is_value_identical(dataset_dir, tmp_path):
    root, _, _ = dataset_dir
    t = load_partition(root, "train")
    write_metadata(tmp_path)
    write_partition(t, tmp_path, "train")
    again = load_partition(tmp_path, "train")
    assert np.array_equal(t.X, again.X)
    assert np.array_equal(t.y, again.y)


def test_short_row_reports_line(tmp_path):
    rows = np.zeros((3, 561))
    lines = [" ".join("0" for _ in range(561)), " ".join("0" for _ in range(560)),
             " ".join("0" for _ in range(561))]
    write_metadata(tmp_path)
    (tmp_path / "train").mkdir()
    (tmp_path / "train" / "X_train.txt").write_text("\n".join(lines) + "\n")
    (tmp_path / "train" / "y_train.txt").write_text("1\n2\n3\n")
    (tmp_path / "train" / "subject_train.txt").write_text("1\n1\n1\n")
    with pytest.raises(DatasetValidationError) as err:
        load_partition(tmp_path, "train")
    assert err.value.line == 2
    assert rows.shape == (3, 561)


def test_label_out_of_range(tmp_path):
    _write_small(tmp_path, np.zeros((2, 561)), [1, 7], [1, 2])
    with pytest.raises(DatasetValidationError, match=r"label out of range 1\.\.6"):
        load_partition(tmp_path, "train")


def test_subject_and_feature_range(tmp_path):
    _write_small(tmp_path, np.zeros((2, 561)), [1, 2], [1, 31])
    with pytest.raises(DatasetValidationError, match="subject"):
        load_partition(tmp_path, "train")
    rows = np.zeros((2, 561))
    rows[1, 10] = 1.5
    _write_small(tmp_path, rows, [1, 2], [1, 2])
    with pytest.raises(DatasetValidationError) as err:
        load_partition(tmp_path, "train")
    assert err.value.line == 2


def test_scientific_and_fixed_notation(tmp_path):
    write_metadata(tmp_path)
    (tmp_path / "train").mkdir()
    row = ["2.8858451e-001", "-0.5", "1E-3"] + ["0"] * 558
    (tmp_path / "train" / "X_train.txt").write_text("  ".join(row) + "\n")
    (tmp_path / "train" / "y_train.txt").write_text("5\n")
    (tmp_path / "train" / "subject_train.txt").write_text("1\n")
    p = load_partition(tmp_path, "train")
    assert p.X[0, :3].tolist() == [0.28858451, -0.5, 0.001]


def test_missing_and_mismatched_files(tmp_path):
    write_metadata(tmp_path)
    with pytest.raises(AcquisitionError, match="X_train.txt"):
        load_partition(tmp_path, "train")
    _write_small(tmp_path, np.zeros((2, 561)), [1, 2, 3], [1, 2])
    with pytest.raises(IntegrityError):
        load_partition(tmp_path, "train")


def test_activity_labels_validated(tmp_path):
    write_dataset(tmp_path, n_train=12, n_heldout=6)
    (tmp_path / "activity_labels.txt").write_text("1 WALKING\n2 RUNNING\n")
    with pytest.raises(DatasetValidationError):
        load_uci_har(tmp_path)


def test_class_histogram():
    assert class_histogram([]) == {a: 0 for a in ActivityLabel}
    s = [Sample(np.zeros(3), ActivityLabel(c), 1) for c in (1, 1, 2)]
    h = class_histogram(s)
    assert h[ActivityLabel.WALKING] == 2 and h[ActivityLabel.WALKING_UPSTAIRS] == 1
    assert sum(h.values()) == 3


def test_histogram_recount(dataset_dir):
    root, _, _ = dataset_dir
    t, _ = load_uci_har(root)
    labels = [int(line) for line in (root / "train" / "y_train.txt").read_text().split()]
    recount = Counter(labels)
    h = class_histogram(t)
    assert all(h[a] == recount[a.value] for a in ActivityLabel)
    assert sum(h.values()) == len(t) and all(v > 0 for v in h.values())


def test_split_small_example():
    p = Partition(np.arange(10.0)[:, None], [1] * 5 + [2] * 5, [1] * 10)
    v, t = split_heldout(p, seed=0)
    for half in (v, t):
        counts = Counter(half.y.tolist())
        assert 2 <= counts[1] <= 3 and 2 <= counts[2] <= 3
    v2, t2 = split_heldout(p, seed=0)
    assert np.array_equal(v.index, v2.index) and np.array_equal(t.index, t2.index)


def test_split_counting_oracle(dataset_dir):
    _, _, heldout = dataset_dir
    v, t = split_heldout(heldout, seed=42)
    for c in range(1, 7):
        n_c = sum(1 for label in heldout.y if label == c)
        got = (sum(1 for label in v.y if label == c),
               sum(1 for label in t.y if label == c))
        assert sorted(got) == [n_c // 2, n_c - n_c // 2]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=80), st.integers(0, 2**63))
def test_split_invariants(labels, seed):
    p = Partition(np.zeros((len(labels), 1)), labels, [1] * len(labels))
    v, t = split_heldout(p, seed)
    assert len(v) + len(t) == len(p)
    assert not set(v.index) & set(t.index)
    assert abs(len(v) - len(t)) <= 1
    for c in set(labels):
        assert abs(int(np.sum(v.y == c)) - int(np.sum(t.y == c))) <= 1


def test_summary_record(dataset_dir):
    root, _, _ = dataset_dir
    split = make_split(*load_uci_har(root), seed=42)
    s = json.loads(json.dumps(dataset_summary(split)))
    assert s["split_seed"] == 42
    assert s["sizes"]["train"] == 120
    assert s["sizes"]["validation"] + s["sizes"]["test"] == 61
    assert sum(s["class_histogram"]["train"].values()) == 120


def test_fetch_from_local_archive(tmp_path):
    src = tmp_path / "src" / "UCI HAR Dataset"
    write_dataset(src, n_train=12, n_heldout=6)
    archive = tmp_path / "har.zip"
    with zipfile.ZipFile(archive, "w") as zf:
        for f in src.rglob("*"):
            zf.write(f, f.relative_to(src.parent))
    root = fetch_dataset(archive.as_uri(), tmp_path / "dest")
    t, h = load_uci_har(root)
    assert len(t) == 12 and len(h) == 6


def test_fetch_failure(tmp_path):
    with pytest.raises(AcquisitionError):
        fetch_dataset((tmp_path / "nope.zip").as_uri(), tmp_path / "dest")


def test_partition_is_immutable():
    train, _ = make_partitions(12, 6)
    with pytest.raises(ValueError):
        train.X[0, 0] = 3.0
