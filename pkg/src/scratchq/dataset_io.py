"""File formats, session ingestion, and artifact persistence.

Interchange formats (all little-endian, all with a schema version):

* sensor stream CSV: header ``t_s,value``; an empty value field is a
  missing sample.
* tablet stream CSV: header ``t_s,x_mm,y_mm,force_n``; empty x/y/force
  fields mean no contact at that timestep.
* labels CSV: header ``participant,window_start_s,mean_force_n,
  mean_velocity_mm_s,power_mw,valid,reason``; floats are written with
  shortest round-trip precision, NaN as an empty field.
* session manifest JSON: schema_version, participant, session kind, stream
  paths (relative to the manifest), activity annotations with time ranges.
* model / feature artifacts: binary container with magic, format version,
  JSON header, raw float64 arrays, and a trailing SHA-256 checksum. Binary
  weights guarantee bit-exact round-trips.

Readers reject malformed input (with file:line context) rather than
silently coercing it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ChecksumFailure, MalformedRow, MissingFile, SchemaMismatch,
                     TaskMismatch, VersionUnsupported)
from .evaluation import FeatureDataset
from .features import MinMaxScaler, Task, extract_feature_matrix
from .labeling import ContactTrace, PowerLabel, label_block
from .mlp import MlpConfig, MlpModel
from .signal_core import (ACC_RATE_HZ, CM_RATE_HZ, TABLET_RATE_HZ, Channel,
                          SensorWindow, TimeSeries, window_stream)

SCHEMA_VERSION = 1

SESSION_KINDS = ("intensity-study1", "validation-study2", "detection")

_MAGIC = b"SCRATCHQ"
_KIND_MODEL = b"MODEL\x00\x00\x00"
_KIND_FEATURES = b"FEATURES"

SENSOR_HEADER = ["t_s", "value"]
TABLET_HEADER = ["t_s", "x_mm", "y_mm", "force_n"]
LABELS_HEADER = ["participant", "window_start_s", "mean_force_n",
                 "mean_velocity_mm_s", "power_mw", "valid", "reason"]


def _fmt(x: float) -> str:
    """Shortest decimal that round-trips the float64 exactly; NaN is empty."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def _parse_float(text: str, path, line_no: int, column: str) -> float:
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise MalformedRow(path, line_no, f"bad {column} value {text!r}") from None


# --- CSV streams ---------------------------------------------------------------

def write_sensor_csv(path, series: TimeSeries) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SENSOR_HEADER)
        for t, v in zip(series.timestamps, series.values):
            writer.writerow([_fmt(t), _fmt(v)])


def read_sensor_csv(path, channel: Channel, sample_rate_hz: float) -> TimeSeries:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    timestamps, values = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SENSOR_HEADER:
            raise SchemaMismatch(f"{path}: expected header {SENSOR_HEADER}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise MalformedRow(path, line_no, f"expected 2 fields, got {len(row)}")
            t = _parse_float(row[0], path, line_no, "t_s")
            if math.isnan(t):
                raise MalformedRow(path, line_no, "timestamp must not be empty")
            timestamps.append(t)
            values.append(_parse_float(row[1], path, line_no, "value"))
    return TimeSeries(np.array(timestamps), np.array(values), channel, sample_rate_hz)


def write_tablet_csv(path, trace: ContactTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TABLET_HEADER)
        for t, x, y, f in zip(trace.t, trace.x, trace.y, trace.force):
            writer.writerow([_fmt(t), _fmt(x), _fmt(y), _fmt(f)])


def read_tablet_csv(path, block_length_s: float | None = None) -> ContactTrace:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    cols: list[list[float]] = [[], [], [], []]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TABLET_HEADER:
            raise SchemaMismatch(f"{path}: expected header {TABLET_HEADER}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise MalformedRow(path, line_no, f"expected 4 fields, got {len(row)}")
            t = _parse_float(row[0], path, line_no, "t_s")
            if math.isnan(t):
                raise MalformedRow(path, line_no, "timestamp must not be empty")
            cols[0].append(t)
            for i, name in enumerate(TABLET_HEADER[1:], start=1):
                cols[i].append(_parse_float(row[i], path, line_no, name))
    t = np.array(cols[0])
    if block_length_s is None:
        block_length_s = (t[-1] - t[0]) + 1.0 / TABLET_RATE_HZ if len(t) else 0.0
    return ContactTrace(t, np.array(cols[1]), np.array(cols[2]), np.array(cols[3]),
                        block_length_s=block_length_s)


def write_labels_csv(path, rows: list[tuple[str, PowerLabel]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABELS_HEADER)
        for participant, lab in rows:
            writer.writerow([participant, _fmt(lab.window_start),
                             _fmt(lab.mean_force), _fmt(lab.mean_velocity),
                             _fmt(lab.power), "1" if lab.valid else "0",
                             lab.reason])


def read_labels_csv(path) -> list[tuple[str, PowerLabel]]:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LABELS_HEADER:
            raise SchemaMismatch(f"{path}: expected header {LABELS_HEADER}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 7:
                raise MalformedRow(path, line_no, f"expected 7 fields, got {len(row)}")
            if row[5] not in ("0", "1"):
                raise MalformedRow(path, line_no, f"valid flag must be 0/1, got {row[5]!r}")
            rows.append((row[0], PowerLabel(
                window_start=_parse_float(row[1], path, line_no, "window_start_s"),
                mean_force=_parse_float(row[2], path, line_no, "mean_force_n"),
                mean_velocity=_parse_float(row[3], path, line_no, "mean_velocity_mm_s"),
                power=_parse_float(row[4], path, line_no, "power_mw"),
                valid=row[5] == "1",
                reason=row[6])))
    return rows


# --- session manifests -----------------------------------------------------------

@dataclass
class ActivitySpan:
    """One annotated activity block: [start_s, end_s) on the session clock."""

    name: str
    start_s: float
    end_s: float
    scratch: bool | None = None


@dataclass
class SessionManifest:
    participant_id: str
    kind: str
    cm_path: Path
    acc_path: Path
    tablet_path: Path | None = None
    labels_path: Path | None = None
    activities: list[ActivitySpan] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION


def write_manifest(path, manifest: SessionManifest) -> None:
    base = Path(path).parent

    def rel(p):
        return None if p is None else str(Path(p).relative_to(base)) if Path(p).is_relative_to(base) else str(p)

    data = {
        "schema_version": manifest.schema_version,
        "participant_id": manifest.participant_id,
        "kind": manifest.kind,
        "cm": rel(manifest.cm_path),
        "acc": rel(manifest.acc_path),
        "tablet": rel(manifest.tablet_path),
        "labels": rel(manifest.labels_path),
        "activities": [{"name": a.name, "start_s": a.start_s, "end_s": a.end_s,
                        "scratch": a.scratch} for a in manifest.activities],
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> SessionManifest:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise SchemaMismatch(f"{path}: manifest must be a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaMismatch(f"{path}: unsupported schema_version {version!r}")
    for key in ("participant_id", "kind", "cm", "acc"):
        if key not in data:
            raise SchemaMismatch(f"{path}: missing required key {key!r}")
    if data["kind"] not in SESSION_KINDS:
        raise SchemaMismatch(f"{path}: unknown session kind {data['kind']!r}")
    base = path.parent

    def resolve(p):
        return None if p is None else (base / p if not Path(p).is_absolute() else Path(p))

    activities = []
    for i, entry in enumerate(data.get("activities", [])):
        try:
            activities.append(ActivitySpan(entry["name"], float(entry["start_s"]),
                                           float(entry["end_s"]),
                                           entry.get("scratch")))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"{path}: bad activity entry {i}: {exc}") from None
    return SessionManifest(
        participant_id=str(data["participant_id"]),
        kind=str(data["kind"]),
        cm_path=resolve(data["cm"]),
        acc_path=resolve(data["acc"]),
        tablet_path=resolve(data.get("tablet")),
        labels_path=resolve(data.get("labels")),
        activities=activities,
        schema_version=version,
    )


@dataclass
class Session:
    manifest: SessionManifest
    cm: TimeSeries
    acc: TimeSeries
    tablet: ContactTrace | None = None
    labels: list[tuple[str, PowerLabel]] | None = None


def load_session(manifest: SessionManifest) -> Session:
    """Load the typed streams a manifest references.

    Raises:
        MissingFile: a referenced file does not exist (named in the error).
    """
    cm = read_sensor_csv(manifest.cm_path, Channel.CONTACT_MIC, CM_RATE_HZ)
    acc = read_sensor_csv(manifest.acc_path, Channel.ACC_Z, ACC_RATE_HZ)
    tablet = None
    if manifest.tablet_path is not None:
        tablet = read_tablet_csv(manifest.tablet_path)
    labels = None
    if manifest.labels_path is not None:
        labels = read_labels_csv(manifest.labels_path)
    return Session(manifest, cm, acc, tablet, labels)


def _session_spans(session: Session) -> list[ActivitySpan]:
    if session.manifest.activities:
        return session.manifest.activities
    start = max(session.cm.start, session.acc.start)
    end = min(session.cm.coverage_end, session.acc.coverage_end)
    return [ActivitySpan("", start, end)]


def session_windows(session: Session, stride_s: float = 0.25) -> list[SensorWindow]:
    """Cut each annotated activity span into 1 s windows at the given stride."""
    windows = []
    for span in _session_spans(session):
        cm = session.cm.slice(span.start_s, span.end_s)
        acc = session.acc.slice(span.start_s, span.end_s)
        if len(cm) == 0 or len(acc) == 0:
            continue
        windows.extend(window_stream(cm, acc, stride_s=stride_s,
                                     participant_id=session.manifest.participant_id,
                                     activity=span.name))
    return windows


def _intensity_labels(session: Session) -> list[PowerLabel]:
    if session.labels is not None:
        return [lab for pid, lab in session.labels
                if pid == session.manifest.participant_id]
    if session.tablet is None:
        raise SchemaMismatch("intensity session needs a labels or tablet stream")
    labels = []
    for span in _session_spans(session):
        t = session.tablet.t
        sel = (t >= span.start_s) & (t < span.end_s)
        block = ContactTrace(t[sel], session.tablet.x[sel], session.tablet.y[sel],
                             session.tablet.force[sel],
                             block_length_s=span.end_s - span.start_s)
        labels.extend(label_block(block))
    return labels


def featurize_session(session: Session, task: Task,
                      stride_s: float = 0.25) -> FeatureDataset:
    """Windows -> unnormalized features joined with labels.

    Intensity windows take the power of the valid 1 s label window containing
    their midpoint; unlabeled windows are dropped. Detection windows take the
    scratch flag of their activity span; spans without a flag are dropped.
    """
    windows = session_windows(session, stride_s)
    if task is Task.INTENSITY:
        valid = [lab for lab in _intensity_labels(session) if lab.valid]
        starts = np.array([lab.window_start for lab in valid])
        powers = np.array([lab.power for lab in valid])
        order = np.argsort(starts)
        starts, powers = starts[order], powers[order]
        kept, y = [], []
        for w in windows:
            mid = w.start_time + 0.5
            i = np.searchsorted(starts, mid, side="right") - 1
            if i >= 0 and mid < starts[i] + 1.0:
                kept.append(w)
                y.append(powers[i])
        windows = kept
    else:
        flags = {span.name: span.scratch for span in _session_spans(session)}
        windows = [w for w in windows if flags.get(w.activity) is not None]
        y = [float(bool(flags[w.activity])) for w in windows]

    x = extract_feature_matrix(windows, task)
    return FeatureDataset(
        x=x, y=np.array(y, dtype=np.float64),
        participants=np.array([w.participant_id for w in windows], dtype=str),
        task=task,
        activities=np.array([w.activity for w in windows], dtype=str))


def featurize_sessions(sessions: list[Session], task: Task,
                       stride_s: float = 0.25) -> FeatureDataset:
    parts = [featurize_session(s, task, stride_s) for s in sessions]
    parts = [p for p in parts if len(p)]
    if not parts:
        raise SchemaMismatch("no labeled windows in any session")
    return FeatureDataset(
        x=np.concatenate([p.x for p in parts]),
        y=np.concatenate([p.y for p in parts]),
        participants=np.concatenate([p.participants for p in parts]),
        task=task,
        activities=np.concatenate([p.activities for p in parts]))


# --- binary artifacts -------------------------------------------------------------

def _pack(kind: bytes, header: dict, arrays: list[tuple[str, np.ndarray]]) -> bytes:
    header = dict(header)
    header["schema_version"] = SCHEMA_VERSION
    header["arrays"] = [{"name": name, "shape": list(arr.shape)}
                        for name, arr in arrays]
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode("utf-8")
    parts = [_MAGIC, kind, struct.pack("<I", SCHEMA_VERSION),
             struct.pack("<Q", len(header_bytes)), header_bytes]
    for _, arr in arrays:
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def _unpack(raw: bytes, kind: bytes, path) -> tuple[dict, dict[str, np.ndarray]]:
    min_len = len(_MAGIC) + 8 + 4 + 8 + 32
    if len(raw) < min_len or raw[:len(_MAGIC)] != _MAGIC:
        raise SchemaMismatch(f"{path}: not a scratchq artifact")
    if raw[8:16] != kind:
        raise TaskMismatch(f"{path}: artifact kind {raw[8:16]!r}, expected {kind!r}")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumFailure(f"{path}: checksum mismatch (corrupt or truncated)")
    version = struct.unpack("<I", raw[16:20])[0]
    if version != SCHEMA_VERSION:
        raise VersionUnsupported(f"{path}: format version {version} unsupported")
    header_len = struct.unpack("<Q", raw[20:28])[0]
    header = json.loads(raw[28:28 + header_len].decode("utf-8"))
    offset = 28 + header_len
    arrays = {}
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * 8
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=offset)
        arrays[spec["name"]] = arr.reshape(spec["shape"]).astype(np.float64)
        offset += nbytes
    return header, arrays


def save_model(path, model: MlpModel, task: Task) -> None:
    arrays: list[tuple[str, np.ndarray]] = []
    if model.scaler is not None:
        arrays.append(("scaler_min", model.scaler.mins))
        arrays.append(("scaler_max", model.scaler.maxs))
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays.append((f"w{i}", w))
        arrays.append((f"b{i}", b))
    header = {
        "task": task.value,
        "config": {
            "layer_sizes": model.config.layer_sizes,
            "output_activation": model.config.output_activation,
            "dropout_p": model.config.dropout_p,
            "learning_rate": model.config.learning_rate,
            "batch_size": model.config.batch_size,
            "epochs": model.config.epochs,
            "loss": model.config.loss,
            "seed": model.config.seed,
        },
        "has_scaler": model.scaler is not None,
        "history": model.history,
    }
    Path(path).write_bytes(_pack(_KIND_MODEL, header, arrays))


def load_model(path) -> tuple[MlpModel, Task]:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    header, arrays = _unpack(path.read_bytes(), _KIND_MODEL, path)
    config = MlpConfig(**header["config"])
    scaler = None
    if header["has_scaler"]:
        scaler = MinMaxScaler(arrays["scaler_min"], arrays["scaler_max"])
    n_layers = len(config.layer_sizes) - 1
    weights = [arrays[f"w{i}"] for i in range(n_layers)]
    biases = [arrays[f"b{i}"] for i in range(n_layers)]
    model = MlpModel(weights, biases, config, scaler=scaler,
                     history=header.get("history", []))
    return model, Task(header["task"])


def save_features(path, dataset: FeatureDataset) -> None:
    header = {
        "task": dataset.task.value,
        "participants": dataset.participants.tolist(),
        "activities": None if dataset.activities is None
                      else dataset.activities.tolist(),
    }
    arrays = [("x", dataset.x), ("y", dataset.y)]
    Path(path).write_bytes(_pack(_KIND_FEATURES, header, arrays))


def load_features(path) -> FeatureDataset:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    header, arrays = _unpack(path.read_bytes(), _KIND_FEATURES, path)
    activities = header.get("activities")
    return FeatureDataset(
        x=arrays["x"], y=arrays["y"],
        participants=np.array(header["participants"], dtype=str),
        task=Task(header["task"]),
        activities=None if activities is None else np.array(activities, dtype=str))
