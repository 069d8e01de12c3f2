"""Readers and writers for every on-disk artifact.

Structured records are JSON (sorted keys, shortest round-trip float repr,
so values survive a write/read cycle bit for bit).  Tables are CSV whose
first line is ``#`` followed by a JSON header.  Every file carries a
``format`` and ``version``; readers reject unknown major versions.
"""
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import FormatError, ShapeError
from .metrics import EvalReport
from .model import ToyContrastiveModel
from .train import TrainLog

__all__ = [
    "dumps",
    "write_json",
    "read_json",
    "save_dataset",
    "load_dataset",
    "save_model",
    "load_model",
    "save_train_log",
    "load_train_log",
    "save_eval_report",
    "load_eval_report",
    "LogitDump",
    "write_logit_dump",
    "read_logit_dump",
    "save_attack_records",
    "load_attack_records",
    "load_any",
]

DATASET_FORMAT = "ucat-dataset"
DUMP_FORMAT = "ucat-logit-dump"
ATTACK_FORMAT = "ucat-attack-records"
VERSION = "1.0"


def _check_version(found, expected, line=None):
    if str(found).split(".")[0] != expected.split(".")[0]:
        raise FormatError(f"unsupported version {found!r}", line=line, field="version")


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON in {path}: {exc.msg}", line=exc.lineno) from None


def _fmt(v):
    return repr(float(v))


def _read_csv_header(lines, path, expected_format):
    if not lines or not lines[0].startswith("#"):
        raise FormatError(f"{path}: missing '#' header line", line=1)
    try:
        header = json.loads(lines[0][1:])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad header JSON ({exc.msg})", line=1) from None
    if header.get("format") != expected_format:
        raise FormatError(f"{path}: expected format {expected_format!r}", line=1, field="format")
    _check_version(header.get("version"), VERSION, line=1)
    return header


def _float(text, line, name):
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"not a number: {text!r}", line=line, field=name) from None


def _int(text, line, name):
    try:
        return int(text)
    except ValueError:
        raise FormatError(f"not an integer: {text!r}", line=line, field=name) from None


# -- datasets -----------------------------------------------------------------

def _write_split(path, X, y, header):
    with open(path, "w", newline="") as fh:
        fh.write("#" + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"x{j}" for j in range(X.shape[1])])
        for xi, yi in zip(X, y):
            w.writerow([int(yi)] + [_fmt(v) for v in xi])


def _read_split(path):
    lines = Path(path).read_text().splitlines()
    header = _read_csv_header(lines, path, DATASET_FORMAT)
    rows = list(csv.reader(lines[1:]))
    if not rows:
        raise FormatError(f"{path}: missing column header", line=2)
    cols = rows[0]
    m = int(header["input_dim"])
    if len(cols) != m + 1:
        raise FormatError(f"{path}: expected {m + 1} columns", line=2)
    X = np.empty((len(rows) - 1, m))
    y = np.empty(len(rows) - 1, dtype=int)
    for i, row in enumerate(rows[1:]):
        lineno = i + 3
        if len(row) != m + 1:
            raise FormatError(f"{path}: expected {m + 1} fields, got {len(row)}", line=lineno)
        y[i] = _int(row[0], lineno, "label")
        X[i] = [_float(v, lineno, cols[j + 1]) for j, v in enumerate(row[1:])]
    return X, y, header


def save_dataset(dataset, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for split, X, y in (("train", dataset.X_train, dataset.y_train),
                        ("test", dataset.X_test, dataset.y_test)):
        header = dict(dataset.header, format=DATASET_FORMAT, version=VERSION, split=split)
        _write_split(directory / f"{split}.csv", X, y, header)


def load_dataset(directory):
    directory = Path(directory)
    X_train, y_train, header = _read_split(directory / "train.csv")
    X_test, y_test, _ = _read_split(directory / "test.csv")
    header = {k: v for k, v in header.items() if k not in ("format", "version", "split")}
    return Dataset(X_train, y_train, X_test, y_test, header)


# -- model checkpoints, train logs, eval reports ------------------------------

def save_model(model, path):
    write_json(path, model.to_dict())


def load_model(path):
    return ToyContrastiveModel.from_dict(read_json(path))


def save_train_log(log, path):
    with open(path, "w") as fh:
        for rec in log.to_records():
            fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")


def _read_jsonl(path):
    out = []
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc.msg})", line=i) from None
    return out


def load_train_log(path):
    return TrainLog.from_records(_read_jsonl(path))


def save_eval_report(report, path):
    write_json(path, report.to_dict())


def load_eval_report(path):
    return EvalReport.from_dict(read_json(path))


# -- logit dumps --------------------------------------------------------------

@dataclass
class LogitDump:
    """Logits exported from some classifier, for offline uncertainty analysis."""

    logits: np.ndarray
    labels: np.ndarray
    ids: list
    conditions: list
    tau: float
    source: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.logits = np.atleast_2d(np.asarray(self.logits, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int)
        n = self.logits.shape[0]
        if not (len(self.labels) == len(self.ids) == len(self.conditions) == n):
            raise ShapeError("ids, labels, conditions and logits differ in length")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        bad = set(self.conditions) - {"clean", "adversarial"}
        if bad:
            raise ValueError(f"unknown conditions {sorted(bad)}")

    @property
    def n_classes(self):
        return self.logits.shape[1]


def write_logit_dump(dump, path):
    header = dict(dump.extra, format=DUMP_FORMAT, version=VERSION, C=dump.n_classes,
                  tau=dump.tau, source=dump.source)
    with open(path, "w", newline="") as fh:
        fh.write("#" + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", "condition"] + [f"l{k}" for k in range(dump.n_classes)])
        for i, y, c, row in zip(dump.ids, dump.labels, dump.conditions, dump.logits):
            w.writerow([i, int(y), c] + [_fmt(v) for v in row])


def read_logit_dump(path):
    lines = Path(path).read_text().splitlines()
    header = _read_csv_header(lines, path, DUMP_FORMAT)
    for key in ("C", "tau"):
        if key not in header:
            raise FormatError(f"{path}: header lacks {key!r}", line=1, field=key)
    C = _int(str(header["C"]), 1, "C")
    tau = _float(str(header["tau"]), 1, "tau")
    if tau <= 0:
        raise FormatError(f"{path}: tau must be positive", line=1, field="tau")
    rows = list(csv.reader(lines[1:]))
    if not rows or rows[0][:3] != ["id", "label", "condition"]:
        raise FormatError(f"{path}: expected column header 'id,label,condition,...'", line=2)
    ids, labels, conds, logits = [], [], [], []
    for i, row in enumerate(rows[1:]):
        lineno = i + 3
        if len(row) != C + 3:
            raise FormatError(f"{path}: expected {C + 3} fields, got {len(row)}", line=lineno)
        label = _int(row[1], lineno, "label")
        if not 0 <= label < C:
            raise FormatError(f"{path}: label {label} outside [0, {C})", line=lineno, field="label")
        if row[2] not in ("clean", "adversarial"):
            raise FormatError(f"{path}: unknown condition {row[2]!r}", line=lineno, field="condition")
        ids.append(row[0])
        labels.append(label)
        conds.append(row[2])
        logits.append([_float(v, lineno, f"l{k}") for k, v in enumerate(row[3:])])
    extra = {k: v for k, v in header.items() if k not in ("format", "version", "C", "tau", "source")}
    return LogitDump(np.array(logits, dtype=float).reshape(-1, C), labels, ids, conds, tau,
                     str(header.get("source", "")), extra)


# -- attack records -----------------------------------------------------------

def save_attack_records(records, path, config=None):
    with open(path, "w") as fh:
        head = {"format": ATTACK_FORMAT, "version": VERSION, "kind": "header",
                "config": config or {}}
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")


def load_attack_records(path):
    recs = _read_jsonl(path)
    if not recs or recs[0].get("format") != ATTACK_FORMAT:
        raise FormatError(f"{path}: not an attack record file", line=1, field="format")
    _check_version(recs[0].get("version"), VERSION, line=1)
    return recs[0].get("config", {}), recs[1:]


def load_any(path):
    """Load a train log (.jsonl) or evaluation report (.json) by content."""
    path = Path(path)
    text = path.read_text()
    first = text.lstrip()[:1]
    if first != "{":
        raise FormatError(f"{path}: unrecognised file", line=1)
    try:
        return load_eval_report(path)
    except FormatError:
        return load_train_log(path)
