"""Reading, validating and aligning held-out predictions.

Two on-disk formats are supported.

JSON Lines (canonical)::

    {"labels": ["rain", "sun"], "models": ["g", "k"]}
    {"id": "day-1", "outcome": "rain", "p": {"g": [0.7, 0.3], "k": [0.5, 0.5]}}

CSV (wide)::

    observation_id,outcome,g:rain,g:sun,k:rain,k:sun
    day-1,rain,0.7,0.3,0.5,0.5

Outcome labels map to indices by their declared order.  In CSV headers the
model name is everything before the first ``:``.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .exceptions import DatasetError
from .scoring import compensated_sum, get_rule
from .stats import PairedSample

__all__ = [
    "ZERO_POLICIES",
    "ValidationPolicy",
    "PredictionRecord",
    "PredictionDataset",
    "AlignedPair",
    "apply_zero_policy",
    "validate_vector",
    "parse_dataset",
    "load_dataset",
    "align_models",
]

ZERO_POLICIES = ("reject", "allow_infinite_loss", "clamp")

# vectors already this close to summing to one are left untouched, which
# makes validation idempotent
_RENORM_SLACK = 8 * np.finfo(float).eps


@dataclass(frozen=True)
class ValidationPolicy:
    """How incoming probability vectors are checked and repaired.

    ``zero_handling`` is ``"reject"`` (zero coordinates are an error),
    ``"allow_infinite_loss"`` (kept as-is; the log loss may be infinite) or
    ``"clamp"`` (coordinates raised to ``epsilon`` then renormalized).
    """

    sum_tolerance: float = 1e-6
    renormalize: bool = True
    zero_handling: str = "allow_infinite_loss"
    epsilon: float = 1e-10

    def __post_init__(self):
        if not 0 < self.sum_tolerance < 1e-2:
            raise ValueError(f"sum_tolerance must lie in (0, 1e-2), got {self.sum_tolerance}")
        if self.zero_handling not in ZERO_POLICIES:
            raise ValueError(f"zero_handling must be one of {ZERO_POLICIES}, got {self.zero_handling!r}")
        if not 0 < self.epsilon < 1e-3:
            raise ValueError(f"epsilon must lie in (0, 1e-3), got {self.epsilon}")


DEFAULT_POLICY = ValidationPolicy()


def apply_zero_policy(q, policy=DEFAULT_POLICY):
    """Apply the zero-probability part of ``policy`` to the vector ``q``."""
    q = np.asarray(q, dtype=float)
    if policy.zero_handling == "allow_infinite_loss":
        return q
    if policy.zero_handling == "reject":
        if np.any(q == 0):
            raise DatasetError("zero probability rejected by policy")
        return q
    clamped = np.maximum(q, policy.epsilon)
    return clamped / compensated_sum(clamped)


def validate_vector(values, K, policy=DEFAULT_POLICY, line=None):
    """Check one probability vector of length ``K`` and return it post-policy."""
    if not isinstance(values, (list, tuple, np.ndarray)):
        raise DatasetError(f"probability vector must be a list, got {type(values).__name__}", line)
    if len(values) != K:
        raise DatasetError(f"expected {K} probabilities, got {len(values)}", line)
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float, np.floating, np.integer)):
            raise DatasetError(f"probability {v!r} is not a number", line)
    q = np.array(values, dtype=float)
    if not np.all(np.isfinite(q)):
        raise DatasetError("probabilities must be finite", line)
    if np.any(q < 0):
        raise DatasetError(f"negative probability in {q.tolist()}", line)
    s = float(compensated_sum(q))
    if abs(s - 1.0) > policy.sum_tolerance:
        raise DatasetError(
            f"probabilities sum to {s!r}, outside tolerance {policy.sum_tolerance} of 1", line
        )
    if policy.renormalize and abs(s - 1.0) > _RENORM_SLACK:
        q = q / s
    try:
        return apply_zero_policy(q, policy)
    except DatasetError as exc:
        raise DatasetError(str(exc), line) from None


@dataclass(frozen=True)
class PredictionRecord:
    observation_id: str
    outcome_label: str
    predictions: Mapping[str, tuple]


class PredictionDataset:
    """Held-out observations with every model's prediction for each.

    Attributes
    ----------
    labels : tuple of str
        Outcome labels; position gives the outcome index.
    models : tuple of str
    ids : tuple of str
        Observation ids in file order.
    outcomes : ndarray of int, shape (n,)
    probabilities : dict of str to ndarray, shape (n, K)
    """

    def __init__(self, labels, models, ids, outcomes, probabilities):
        self.labels = tuple(labels)
        self.models = tuple(models)
        self.ids = tuple(ids)
        self.outcomes = np.asarray(outcomes, dtype=np.int64)
        self.probabilities = {m: np.asarray(probabilities[m], dtype=float) for m in self.models}
        n, K = len(self.ids), len(self.labels)
        if n < 1:
            raise DatasetError("dataset has no observations")
        if len(set(self.ids)) != n:
            raise DatasetError("observation ids are not unique")
        if self.outcomes.shape != (n,) or np.any((self.outcomes < 0) | (self.outcomes >= K)):
            raise DatasetError("outcome indices do not match the label list")
        for m, arr in self.probabilities.items():
            if arr.shape != (n, K):
                raise DatasetError(f"predictions for {m!r} have shape {arr.shape}, expected {(n, K)}")
            arr.flags.writeable = False
        self.outcomes.flags.writeable = False

    @property
    def n(self):
        return len(self.ids)

    @property
    def K(self):
        return len(self.labels)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, PredictionDataset):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.models == other.models
            and self.ids == other.ids
            and np.array_equal(self.outcomes, other.outcomes)
            and all(np.array_equal(self.probabilities[m], other.probabilities[m]) for m in self.models)
        )

    def __repr__(self):
        return f"PredictionDataset(n={self.n}, K={self.K}, models={list(self.models)})"

    def predictions(self, model):
        try:
            return self.probabilities[model]
        except KeyError:
            raise KeyError(f"unknown model {model!r}; dataset has {list(self.models)}") from None

    def records(self) -> Iterator[PredictionRecord]:
        for row, (oid, x) in enumerate(zip(self.ids, self.outcomes)):
            preds = {m: tuple(self.probabilities[m][row].tolist()) for m in self.models}
            yield PredictionRecord(oid, self.labels[x], preds)

    def to_jsonl(self):
        """Serialize to the JSON Lines format; floats round-trip exactly."""
        lines = [json.dumps({"labels": list(self.labels), "models": list(self.models)})]
        for rec in self.records():
            lines.append(json.dumps({
                "id": rec.observation_id,
                "outcome": rec.outcome_label,
                "p": {m: list(v) for m, v in rec.predictions.items()},
            }))
        return "\n".join(lines) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["observation_id", "outcome"] + [f"{m}:{lab}" for m in self.models for lab in self.labels])
        for rec in self.records():
            row = [rec.observation_id, rec.outcome_label]
            for m in self.models:
                row.extend(repr(v) for v in rec.predictions[m])
            writer.writerow(row)
        return buf.getvalue()


def _text_lines(source):
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8")


class _Builder:
    def __init__(self, labels, models, policy):
        if len(labels) < 2:
            raise DatasetError("need at least 2 outcome labels")
        if len(set(labels)) != len(labels):
            raise DatasetError("duplicate outcome labels")
        if len(models) < 1:
            raise DatasetError("need at least 1 model")
        if len(set(models)) != len(models):
            raise DatasetError("duplicate model names")
        self.labels = list(labels)
        self.models = list(models)
        self.label_index = {lab: i for i, lab in enumerate(labels)}
        self.policy = policy
        self.ids = []
        self.seen = set()
        self.outcomes = []
        self.rows = {m: [] for m in models}

    def add(self, oid, outcome, preds, line):
        if not isinstance(oid, str):
            raise DatasetError("observation id must be a string", line)
        if oid in self.seen:
            raise DatasetError(f"duplicate observation id {oid!r}", line)
        if outcome not in self.label_index:
            raise DatasetError(f"unknown outcome label {outcome!r}", line)
        for m in self.models:
            if m not in preds:
                raise DatasetError(f"missing prediction for model {m!r}", line)
        extra = set(preds) - set(self.models)
        if extra:
            raise DatasetError(f"undeclared model(s) {sorted(extra)}", line)
        for m in self.models:
            self.rows[m].append(validate_vector(preds[m], len(self.labels), self.policy, line))
        self.seen.add(oid)
        self.ids.append(oid)
        self.outcomes.append(self.label_index[outcome])

    def build(self):
        if not self.ids:
            raise DatasetError("dataset has no observations")
        K = len(self.labels)
        probs = {m: np.array(rows, dtype=float).reshape(-1, K) for m, rows in self.rows.items()}
        return PredictionDataset(self.labels, self.models, self.ids, self.outcomes, probs)


def _str_list(value, what, line):
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise DatasetError(f"header field {what!r} must be a list of strings", line)
    return value


def _parse_jsonl(stream, policy):
    builder = None
    for line_no, raw in enumerate(stream, 1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"invalid JSON ({exc.msg})", line_no) from None
        if not isinstance(obj, dict):
            raise DatasetError("each line must be a JSON object", line_no)
        if builder is None:
            if "labels" not in obj or "models" not in obj:
                raise DatasetError("first line must declare 'labels' and 'models'", line_no)
            try:
                builder = _Builder(_str_list(obj["labels"], "labels", line_no),
                                   _str_list(obj["models"], "models", line_no), policy)
            except DatasetError as exc:
                if exc.line is None:
                    raise DatasetError(str(exc), line_no) from None
                raise
            continue
        for key in ("id", "outcome", "p"):
            if key not in obj:
                raise DatasetError(f"record is missing field {key!r}", line_no)
        if not isinstance(obj["p"], dict):
            raise DatasetError("field 'p' must map model names to vectors", line_no)
        builder.add(obj["id"], obj["outcome"], obj["p"], line_no)
    if builder is None:
        raise DatasetError("empty input: missing header line")
    return builder.build()


def _parse_float(text, line):
    try:
        value = float(text)
    except ValueError:
        raise DatasetError(f"cannot parse probability {text!r}", line) from None
    return value


def _parse_csv(stream, policy):
    reader = csv.reader(stream, strict=True)
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("empty input: missing header line") from None
    except csv.Error as exc:
        raise DatasetError(f"invalid CSV ({exc})", reader.line_num) from None
    if header[:2] != ["observation_id", "outcome"] or len(header) < 4:
        raise DatasetError("CSV header must start with observation_id,outcome", 1)
    models, labels, columns = [], [], []
    for col in header[2:]:
        model, sep, label = col.partition(":")
        if not sep or not model or not label:
            raise DatasetError(f"column {col!r} is not of the form model:label", 1)
        if model not in models:
            models.append(model)
        if label not in labels:
            labels.append(label)
        columns.append((model, label))
    if sorted(columns) != sorted((m, lab) for m in models for lab in labels) or len(set(columns)) != len(columns):
        raise DatasetError("CSV header must contain exactly one column per model and label", 1)
    builder = _Builder(labels, models, policy)
    li = {lab: i for i, lab in enumerate(labels)}
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            raise DatasetError(f"invalid CSV ({exc})", reader.line_num) from None
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DatasetError(f"expected {len(header)} fields, got {len(row)}", line)
        preds = {m: [0.0] * len(labels) for m in models}
        for (model, label), cell in zip(columns, row[2:]):
            preds[model][li[label]] = _parse_float(cell, line)
        builder.add(row[0], row[1], preds, line)
    return builder.build()


def parse_dataset(source, format="jsonl", policy=None):
    """Parse predictions from ``source`` into a validated dataset.

    Parameters
    ----------
    source : bytes, str or file object
        The file contents, or an open (binary or text) stream.
    format : {"jsonl", "csv"}
    policy : ValidationPolicy, optional

    Raises
    ------
    DatasetError
        On any syntax or validation problem; ``.line`` gives the line number.
    """
    policy = policy or DEFAULT_POLICY
    try:
        stream = _text_lines(source)
        if format == "jsonl":
            return _parse_jsonl(stream, policy)
        if format == "csv":
            return _parse_csv(stream, policy)
    except UnicodeDecodeError as exc:
        raise DatasetError(f"input is not valid UTF-8 ({exc.reason})") from None
    raise ValueError(f"unknown format {format!r}; use 'jsonl' or 'csv'")


def load_dataset(path, format=None, policy=None):
    """Read a dataset file; the format defaults to the file extension."""
    if format is None:
        format = "csv" if os.fspath(path).lower().endswith(".csv") else "jsonl"
    with open(path, "rb") as fh:
        return parse_dataset(fh.read(), format, policy)


class AlignedPair:
    """Two models' predictions on the same observations, in file order."""

    def __init__(self, ds, model_a, model_b):
        for m in (model_a, model_b):
            if m not in ds.models:
                raise KeyError(f"unknown model {m!r}; dataset has {list(ds.models)}")
        self.dataset = ds
        self.model_a = model_a
        self.model_b = model_b

    def losses(self, rule):
        rule = get_rule(rule)
        ds = self.dataset
        return (rule.loss(ds.predictions(self.model_a), ds.outcomes),
                rule.loss(ds.predictions(self.model_b), ds.outcomes))

    def paired_sample(self, rule):
        """Per-observation loss pairs; infinite losses raise InfiniteLossError."""
        return PairedSample(*self.losses(rule))

    def support_disagreements(self):
        """Ids where exactly one of the two models gives the observed outcome zero probability."""
        ds = self.dataset
        rows = np.arange(ds.n)
        za = ds.predictions(self.model_a)[rows, ds.outcomes] == 0
        zb = ds.predictions(self.model_b)[rows, ds.outcomes] == 0
        return [ds.ids[i] for i in np.flatnonzero(za != zb)]


def align_models(ds, model_a, model_b):
    """Pair two models' predictions by observation (never by score order)."""
    return AlignedPair(ds, model_a, model_b)
