"""Line-delimited sequence records.

One JSON object per line: ``{"id": ..., "label": ..., "events": [...]}``
with each event ``{"t": ..., "x": [... or null ...], "c": ...}``.  A null
in ``x`` means the variable was not observed.  Labels are optional; an
integer or list of integers is a classification label, a float is a
regression target.  Numbers are written with ``repr`` so parse/serialize
round-trips are exact.
"""

from __future__ import annotations

import json
from typing import Iterable

import numpy as np

from .core import EventSequence, LabeledSequence


class RecordError(ValueError):
    """A record failed to parse; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def record_to_dict(item: LabeledSequence) -> dict:
    seq = item.sequence
    events = []
    for i in range(len(seq)):
        xs = [
            float(seq.x[i, j]) if seq.mask[i, j] else None
            for j in range(seq.r)
        ]
        events.append({"t": float(seq.t[i]), "x": xs, "c": int(seq.c[i])})
    doc: dict = {"id": seq.id}
    label = item.label
    if label is not None:
        if isinstance(label, float):
            doc["label"] = label
        else:
            arr = np.atleast_1d(np.asarray(label))
            if np.issubdtype(arr.dtype, np.floating) and not np.all(arr == arr.astype(np.int64)):
                doc["label"] = float(arr[0]) if arr.size == 1 else [float(v) for v in arr]
            elif arr.size == 1:
                doc["label"] = int(arr[0])
            else:
                doc["label"] = [int(v) for v in arr]
    doc["events"] = events
    return doc


def _parse_label(raw):
    if raw is None:
        return None
    if isinstance(raw, bool):
        raise ValueError("label must be a number or list of numbers")
    if isinstance(raw, float):
        return raw
    if isinstance(raw, int):
        return np.array([float(raw)])
    if isinstance(raw, list):
        return np.array([float(v) for v in raw])
    raise ValueError(f"unsupported label {raw!r}")


def dict_to_record(doc: dict, line: int = 0) -> LabeledSequence:
    try:
        events = doc["events"]
        if not isinstance(events, list) or not events:
            raise ValueError("'events' must be a nonempty list")
        r = len(events[0]["x"])
        n = len(events)
        t = np.empty(n)
        x = np.zeros((n, r))
        mask = np.zeros((n, r), dtype=bool)
        c = np.empty(n, dtype=np.int64)
        for i, ev in enumerate(events):
            t[i] = float(ev["t"])
            xs = ev["x"]
            if len(xs) != r:
                raise ValueError(f"event {i} has {len(xs)} values, expected {r}")
            for j, v in enumerate(xs):
                if v is not None:
                    x[i, j] = float(v)
                    mask[i, j] = True
            c[i] = int(ev["c"])
        seq = EventSequence(t, x, mask, c, id=str(doc.get("id", "")))
        return LabeledSequence(sequence=seq, label=_parse_label(doc.get("label")))
    except RecordError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordError(line, str(exc)) from exc


def write_records(path, items: Iterable[LabeledSequence]) -> None:
    with open(path, "w") as fh:
        for item in items:
            fh.write(json.dumps(record_to_dict(item)) + "\n")


def read_records(path) -> list[LabeledSequence]:
    out = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(line_no, f"invalid JSON: {exc.msg}") from exc
            out.append(dict_to_record(doc, line_no))
    if not out:
        raise RecordError(0, "no records in file")
    return out
