import re

import numpy as np
import pytest

from harml.errors import ConfigurationError, DimensionError, EmptyEvaluationError
from harml.metrics import (accuracy, evaluate, parse_json, render_csv,
                           render_json, render_report, render_svg)
from oracles import recount_accuracy


def test_perfect_predictions():
    y = [1, 2, 3, 4, 5, 6, 1, 2, 3, 4]
    r = evaluate(y, y)
    assert r.accuracy == 1.0
    assert np.array_equal(r.confusion, np.diag(np.bincount(y, minlength=7)[1:]))


def test_hand_count():
    r = evaluate([1, 2, 2], [1, 1, 2])
    assert r.accuracy == 2 / 3
    assert r.confusion[0, 0] == 1 and r.confusion[0, 1] == 1 and r.confusion[1, 1] == 1
    assert r.confusion.sum() == 3
    assert r.per_class[0]["recall"] == 0.5
    assert r.per_class[1]["precision"] == 0.5
    # classes never predicted nor present have undefined precision and recall
    assert r.per_class[5]["precision"] is None and r.per_class[5]["recall"] is None


def test_recount_oracle():
    rng = np.random.default_rng(0)
    p, t = rng.integers(1, 7, 1000), rng.integers(1, 7, 1000)
    assert evaluate(p, t).accuracy == recount_accuracy(p.tolist(), t.tolist())
    assert accuracy(p, t) == recount_accuracy(p.tolist(), t.tolist())


@pytest.mark.parametrize("seed", range(5))
def test_trace_identity_and_micro_recall(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 500))
    p, t = rng.integers(1, 7, n), rng.integers(1, 7, n)
    r = evaluate(p, t)
    assert int(np.trace(r.confusion)) == int(np.sum(p == t))
    assert r.confusion.sum() == n and 0 <= r.accuracy <= 1
    micro_recall = sum(r.confusion[i, i] for i in range(6)) / sum(
        row["support"] for row in r.per_class)
    assert micro_recall == r.accuracy
    perm = rng.permutation(n)
    assert evaluate(p[perm], t[perm]) == r


def test_errors():
    with pytest.raises(EmptyEvaluationError):
        evaluate([], [])
    with pytest.raises(DimensionError):
        evaluate([1, 2], [1])
    with pytest.raises(DimensionError):
        evaluate([1, 9], [1, 2])


def test_svg_diagonal_intensity():
    y = np.repeat(np.arange(1, 7), 5)
    svg = render_svg(evaluate(y, y, model_tag="m", split_tag="test"))
    full = re.findall(r'data-row="(\d)" data-col="(\d)" data-intensity="1\.000000"', svg)
    assert sorted(full) == [(str(i), str(i)) for i in range(6)]
    assert svg.count('class="cell"') == 36
    assert "rows=true class" in svg


def test_json_round_trip():
    r = evaluate([1, 2, 2, 6], [1, 1, 2, 5], model_tag="knn", split_tag="test",
                 config_echo={"k": 5}, seed=42)
    again = parse_json(render_json(r))
    assert again == r
    assert '"n/a"' in render_json(r)


def test_csv_layout():
    text = render_csv(evaluate([1, 2, 2], [1, 1, 2]))
    lines = text.splitlines()
    assert lines[0].startswith("# ") and "rows=true class, columns=predicted class" in lines[0]
    assert lines[1].split(",") == ["true\\predicted", "WALKING", "WALKING_UPSTAIRS",
                                   "WALKING_DOWNSTAIRS", "SITTING", "STANDING", "LAYING"]
    grid = [list(map(int, line.split(",")[1:])) for line in lines[2:]]
    assert len(grid) == 6 and all(len(row) == 6 for row in grid)
    expected = np.zeros((6, 6), dtype=int)
    expected[0, 0] = expected[0, 1] = expected[1, 1] = 1
    assert np.array_equal(grid, expected)


def test_render_report_dispatch():
    r = evaluate([1], [1])
    assert render_report(r, "CSV") == render_csv(r)
    assert render_report(r, "svg") == render_svg(r)
    with pytest.raises(ConfigurationError):
        render_report(r, "pdf")
