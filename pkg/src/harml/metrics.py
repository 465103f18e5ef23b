"""Accuracy, confusion matrices and their CSV / JSON / SVG renderings.

Confusion matrices are oriented rows = true class, columns = predicted
class, in ascending label-code order. Precision or recall with a zero
denominator is undefined; it is held as ``None`` and rendered as ``"n/a"``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .dataset import ActivityLabel
from .errors import ConfigurationError, DimensionError, EmptyEvaluationError

FORMAT_VERSION = 1
ORIENTATION = "rows=true class, columns=predicted class"
NA = "n/a"
RENDER_FORMATS = ("csv", "json", "svg")


def _label_name(code: int) -> str:
    try:
        return ActivityLabel(code).name
    except ValueError:
        return str(code)


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray
    labels: list
    per_class: list
    model_tag: str = ""
    split_tag: str = ""
    config_echo: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "model_tag": self.model_tag,
            "split_tag": self.split_tag,
            "seed": self.seed,
            "accuracy": self.accuracy,
            "orientation": ORIENTATION,
            "labels": [int(c) for c in self.labels],
            "label_names": [_label_name(c) for c in self.labels],
            "confusion": self.confusion.astype(int).tolist(),
            "per_class": [{k: (NA if v is None else v) for k, v in row.items()}
                          for row in self.per_class],
            "config_echo": self.config_echo,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("format_version") != FORMAT_VERSION:
            raise ConfigurationError(
                f"unsupported report format {d.get('format_version')!r}")
        return cls(
            accuracy=float(d["accuracy"]),
            confusion=np.asarray(d["confusion"], dtype=np.int64),
            labels=[int(c) for c in d["labels"]],
            per_class=[{k: (None if v == NA else v) for k, v in row.items()}
                       for row in d["per_class"]],
            model_tag=d.get("model_tag", ""),
            split_tag=d.get("split_tag", ""),
            config_echo=d.get("config_echo", {}),
            seed=d.get("seed"),
        )

    def __eq__(self, other):
        if not isinstance(other, EvalReport):
            return NotImplemented
        return (self.accuracy == other.accuracy
                and np.array_equal(self.confusion, other.confusion)
                and list(self.labels) == list(other.labels)
                and self.per_class == other.per_class
                and self.model_tag == other.model_tag
                and self.split_tag == other.split_tag
                and self.config_echo == other.config_echo
                and self.seed == other.seed)


def confusion_matrix(predictions, truths, labels) -> np.ndarray:
    pos = {int(c): i for i, c in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(truths, predictions):
        try:
            cm[pos[int(t)], pos[int(p)]] += 1
        except KeyError:
            raise DimensionError(f"label outside {list(labels)}: {t}/{p}") from None
    return cm


def _ratio(num: int, den: int):
    return None if den == 0 else int(num) / int(den)


def evaluate(predictions, truths, labels=None, *, model_tag: str = "",
             split_tag: str = "", config_echo: dict | None = None,
             seed: int | None = None) -> EvalReport:
    predictions = list(np.asarray(predictions, dtype=np.int64).ravel())
    truths = list(np.asarray(truths, dtype=np.int64).ravel())
    if len(predictions) != len(truths):
        raise DimensionError(
            f"{len(predictions)} predictions vs {len(truths)} truths")
    if not truths:
        raise EmptyEvaluationError("nothing to evaluate")
    labels = [a.value for a in ActivityLabel] if labels is None else \
        sorted(int(c) for c in labels)
    cm = confusion_matrix(predictions, truths, labels)
    total = int(cm.sum())
    per_class = []
    for i, c in enumerate(labels):
        per_class.append({
            "label": int(c),
            "name": _label_name(c),
            "precision": _ratio(cm[i, i], cm[:, i].sum()),
            "recall": _ratio(cm[i, i], cm[i, :].sum()),
            "support": int(cm[i, :].sum()),
        })
    return EvalReport(accuracy=_ratio(np.trace(cm), total), confusion=cm,
                      labels=labels, per_class=per_class, model_tag=model_tag,
                      split_tag=split_tag, config_echo=config_echo or {},
                      seed=seed)


def accuracy(predictions, truths) -> float:
    p = np.asarray(predictions)
    t = np.asarray(truths)
    if p.shape != t.shape:
        raise DimensionError("length mismatch")
    if len(t) == 0:
        raise EmptyEvaluationError("nothing to evaluate")
    return _ratio(int(np.sum(p == t)), len(t))


def render_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(f"# confusion matrix format_version={FORMAT_VERSION}; "
              f"{ORIENTATION}; model={report.model_tag}; "
              f"split={report.split_tag}\n")
    names = [_label_name(c) for c in report.labels]
    w.writerow(["true\\predicted"] + names)
    for name, row in zip(names, report.confusion):
        w.writerow([name] + [int(v) for v in row])
    return buf.getvalue()


def render_json(report: EvalReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def parse_json(text: str) -> EvalReport:
    return EvalReport.from_dict(json.loads(text))


def _blend(t: float) -> str:
    lo = np.array([247, 251, 255])
    hi = np.array([8, 48, 107])
    rgb = np.rint(lo + (hi - lo) * t).astype(int)
    return "#%02x%02x%02x" % tuple(rgb)


def render_svg(report: EvalReport) -> str:
    """Self-contained heat map; cells shaded by row-normalized frequency."""
    cell, left, top = 60, 170, 80
    n = len(report.labels)
    names = [_label_name(c) for c in report.labels]
    width, height = left + n * cell + 20, top + n * cell + 40
    title = escape(f"{report.model_tag} ({report.split_tag}) "
                   f"accuracy={report.accuracy:.4f}")
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" font-family="sans-serif" font-size="11">',
        f'<text x="{left}" y="18" font-size="13">{title}</text>',
        f'<text x="{left}" y="34">{escape(ORIENTATION)}</text>',
    ]
    for j, name in enumerate(names):
        x = left + j * cell + cell / 2
        out.append(f'<text x="{x}" y="{top - 6}" text-anchor="end" '
                   f'transform="rotate(-30 {x} {top - 6})">{escape(name)}</text>')
    for i, (name, row) in enumerate(zip(names, report.confusion)):
        y = top + i * cell
        out.append(f'<text x="{left - 6}" y="{y + cell / 2 + 4}" '
                   f'text-anchor="end">{escape(name)}</text>')
        row_total = int(row.sum())
        for j, v in enumerate(row):
            t = 0.0 if row_total == 0 else float(v) / row_total
            x = left + j * cell
            ink = "#ffffff" if t > 0.5 else "#000000"
            out.append(
                f'<rect class="cell" data-row="{i}" data-col="{j}" '
                f'data-intensity="{t:.6f}" x="{x}" y="{y}" width="{cell}" '
                f'height="{cell}" fill="{_blend(t)}" stroke="#999999"/>')
            out.append(f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" '
                       f'text-anchor="middle" fill="{ink}">{int(v)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_report(report: EvalReport, fmt: str) -> str:
    fmt = fmt.lower()
    if fmt == "csv":
        return render_csv(report)
    if fmt == "json":
        return render_json(report)
    if fmt == "svg":
        return render_svg(report)
    raise ConfigurationError(
        f"unsupported format {fmt!r}; expected one of {RENDER_FORMATS}")
