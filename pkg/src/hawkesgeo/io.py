"""On-disk artifacts: event CSVs, count series, model and report documents.

All writers go through a temp-file-plus-rename so an interrupted run never
leaves a truncated artifact.  Floats are serialized at full precision, so a
saved model reloads with its exact parameter values.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
import warnings
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .em import BranchingStructure, FitReport, FullRankParams
from .model import EmbeddingPair, EventRecord, KernelBank, ModelParams, NumericsWarning

SCHEMA_VERSION = 1

_MODEL_FIELDS = {"schema_version", "n", "m", "R", "reception_X", "influence_Y",
                 "beta_sq", "kappa", "gamma", "xi", "mu", "type_labels"}
_FULL_RANK_FIELDS = {"schema_version", "kind", "n", "R", "phi", "kappa", "w", "mu",
                     "type_labels"}


class DataFormatError(ValueError):
    """An input file does not satisfy its documented format."""


@contextmanager
def atomic_write(path, mode: str = "w"):
    """Write to a sibling temp file and rename into place on success."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    f = os.fdopen(fd, mode, newline="" if "b" not in mode else None)
    try:
        yield f
        f.close()
        os.replace(tmp, path)
    except BaseException:
        f.close()
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# ---------------------------------------------------------------------------
# event records


def load_events_csv(path, horizon: float | None = None) -> EventRecord:
    """Read a ``type,time`` CSV into a sorted record.

    Type labels map to dense ids in order of first appearance in the file;
    events then sort stably by time.  The horizon defaults to just past the
    last event unless overridden.  An empty file gives an empty record.
    """
    if not os.path.exists(path):
        raise DataFormatError(f"events file not found: {path}")
    labels: list[str] = []
    ids: dict[str, int] = {}
    types: list[int] = []
    times: list[float] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            header = None
        if header is not None and [h.strip() for h in header] != ["type", "time"]:
            raise DataFormatError(f"expected header 'type,time', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataFormatError(f"line {lineno}: expected two fields, got {len(row)}")
            label = row[0].strip()
            try:
                t = float(row[1])
            except ValueError:
                raise DataFormatError(f"line {lineno}: unparseable time {row[1]!r}") from None
            if not np.isfinite(t) or t < 0.0:
                raise DataFormatError(f"line {lineno}: time must be finite and nonnegative")
            if label not in ids:
                ids[label] = len(labels)
                labels.append(label)
            types.append(ids[label])
            times.append(t)

    types_arr = np.asarray(types, dtype=np.int64)
    times_arr = np.asarray(times, dtype=np.float64)
    order = np.argsort(times_arr, kind="stable")
    types_arr, times_arr = types_arr[order], times_arr[order]
    if horizon is None:
        if times_arr.size:
            horizon = times_arr[-1] * (1.0 + 1e-9)
            if horizon <= times_arr[-1]:
                horizon = times_arr[-1] + 1e-9
        else:
            horizon = 1.0
    elif times_arr.size and horizon <= times_arr[-1]:
        raise DataFormatError("horizon must lie strictly after the last event")
    return EventRecord(types_arr, times_arr, len(labels), horizon,
                       tuple(labels) if labels else None)


def save_events_csv(record: EventRecord, path) -> None:
    with atomic_write(path) as f:
        writer = csv.writer(f)
        writer.writerow(["type", "time"])
        for k, t in zip(record.types, record.times):
            label = record.labels[k] if record.labels else str(int(k))
            writer.writerow([label, repr(float(t))])


# ---------------------------------------------------------------------------
# count series


@dataclass(frozen=True)
class CountSeries:
    """Per-location cumulative counts on a shared day clock."""

    labels: tuple[str, ...]
    days: tuple[np.ndarray, ...]
    cumulative: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "days",
                           tuple(np.asarray(d, dtype=np.float64) for d in self.days))
        object.__setattr__(self, "cumulative",
                           tuple(np.asarray(c, dtype=np.float64) for c in self.cumulative))
        if not (len(self.labels) == len(self.days) == len(self.cumulative)):
            raise ValueError("labels, days, cumulative must align")
        if not self.labels:
            raise ValueError("count series needs at least one location")
        for lab, d, c in zip(self.labels, self.days, self.cumulative):
            if d.shape != c.shape or d.ndim != 1 or d.size == 0:
                raise ValueError(f"location {lab}: days and counts must be matched 1-d arrays")
            if np.any(np.diff(d) <= 0.0):
                raise ValueError(f"location {lab}: days must be strictly increasing")
            if np.any(np.diff(c) < 0.0) or c[0] < 0.0:
                raise ValueError(f"location {lab}: cumulative counts must be nondecreasing")


def load_counts_csv(path) -> CountSeries:
    """Read a ``location,day,cumulative_count`` CSV."""
    if not os.path.exists(path):
        raise DataFormatError(f"counts file not found: {path}")
    per_loc: dict[str, list[tuple[float, float]]] = {}
    order: list[str] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty counts file") from None
        if [h.strip() for h in header] != ["location", "day", "cumulative_count"]:
            raise DataFormatError(
                f"expected header 'location,day,cumulative_count', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataFormatError(f"line {lineno}: expected three fields")
            lab = row[0].strip()
            try:
                day, cum = float(row[1]), float(row[2])
            except ValueError:
                raise DataFormatError(f"line {lineno}: unparseable number") from None
            if lab not in per_loc:
                per_loc[lab] = []
                order.append(lab)
            per_loc[lab].append((day, cum))
    try:
        return CountSeries(
            tuple(order),
            tuple(np.array([d for d, _ in per_loc[lab]]) for lab in order),
            tuple(np.array([c for _, c in per_loc[lab]]) for lab in order),
        )
    except ValueError as exc:
        raise DataFormatError(str(exc)) from None


def discretize_counts(series: CountSeries, threshold: float = 10.0) -> EventRecord:
    """Turn cumulative count curves into threshold-crossing events.

    Counts are interpolated log-linearly between observation days (linearly
    while still at zero), and an event fires at each exact crossing of the
    levels ``threshold, 2*threshold, ...``.  Locations never reaching the
    threshold contribute no events (with a warning).
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    ev_types: list[int] = []
    ev_times: list[float] = []
    for loc, (days, cum) in enumerate(zip(series.days, series.cumulative)):
        q = int(cum[0] // threshold) + 1
        emitted = 0
        for s in range(days.size - 1):
            d0, d1 = days[s], days[s + 1]
            c0, c1 = cum[s], cum[s + 1]
            while q * threshold <= c1:
                level = q * threshold
                if level <= c0:
                    q += 1
                    continue
                if c0 > 0.0:
                    frac = (np.log(level) - np.log(c0)) / (np.log(c1) - np.log(c0))
                else:
                    frac = (level - c0) / (c1 - c0)
                ev_types.append(loc)
                ev_times.append(float(d0 + (d1 - d0) * frac))
                emitted += 1
                q += 1
        if emitted == 0:
            warnings.warn(
                f"location {series.labels[loc]} never crosses the threshold; no events",
                NumericsWarning)

    types_arr = np.asarray(ev_types, dtype=np.int64)
    times_arr = np.asarray(ev_times, dtype=np.float64)
    order = np.argsort(times_arr, kind="stable")
    types_arr, times_arr = types_arr[order], times_arr[order]
    horizon = float(max(d[-1] for d in series.days))
    if times_arr.size and horizon <= times_arr[-1]:
        horizon = times_arr[-1] * (1.0 + 1e-9) + 1e-12
    return EventRecord(types_arr, times_arr, len(series.labels), horizon, series.labels)


# ---------------------------------------------------------------------------
# models


def _default_labels(n: int) -> list[str]:
    return [str(k) for k in range(n)]


def save_model(params, path, labels=None) -> None:
    """Serialize a fitted or sampled model as a structured JSON document."""
    if isinstance(params, ModelParams):
        labels = list(labels) if labels is not None else _default_labels(params.n)
        if len(labels) != params.n:
            raise ValueError("labels must have length n")
        doc = {
            "schema_version": SCHEMA_VERSION,
            "n": params.n,
            "m": params.m,
            "R": params.R,
            "reception_X": params.embedding.reception.tolist(),
            "influence_Y": params.embedding.influence.tolist(),
            "beta_sq": params.kernels.beta_sq.tolist(),
            "kappa": params.kernels.kappa.tolist(),
            "gamma": params.kernels.gamma.tolist(),
            "xi": params.xi.tolist(),
            "mu": params.mu.tolist(),
            "type_labels": labels,
        }
    elif isinstance(params, FullRankParams):
        labels = list(labels) if labels is not None else _default_labels(params.n)
        if len(labels) != params.n:
            raise ValueError("labels must have length n")
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "full_rank",
            "n": params.n,
            "R": params.R,
            "phi": params.phi.tolist(),
            "kappa": params.kappa.tolist(),
            "w": params.w.tolist(),
            "mu": params.mu.tolist(),
            "type_labels": labels,
        }
    else:
        raise TypeError("params must be ModelParams or FullRankParams")
    with atomic_write(path) as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _require(doc: dict, fields: set, path) -> None:
    missing = fields - doc.keys()
    if missing:
        raise DataFormatError(f"{path}: missing model field(s) {sorted(missing)}")
    unknown = doc.keys() - fields
    if unknown:
        raise DataFormatError(f"{path}: unknown model field(s) {sorted(unknown)}")


def load_model(path, with_labels: bool = False):
    """Load a model document; rejects unknown versions and unknown fields."""
    if not os.path.exists(path):
        raise DataFormatError(f"model file not found: {path}")
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise DataFormatError(f"{path}: model document must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataFormatError(f"{path}: unsupported schema_version {version!r}")
    try:
        if doc.get("kind") == "full_rank":
            _require(doc, _FULL_RANK_FIELDS, path)
            params = FullRankParams(
                np.asarray(doc["phi"], dtype=np.float64),
                np.asarray(doc["kappa"], dtype=np.float64),
                np.asarray(doc["w"], dtype=np.float64),
                np.asarray(doc["mu"], dtype=np.float64),
            )
        elif "kind" in doc:
            raise DataFormatError(f"{path}: unknown model kind {doc['kind']!r}")
        else:
            _require(doc, _MODEL_FIELDS, path)
            params = ModelParams(
                EmbeddingPair(np.asarray(doc["reception_X"], dtype=np.float64),
                              np.asarray(doc["influence_Y"], dtype=np.float64)),
                KernelBank(np.asarray(doc["beta_sq"], dtype=np.float64),
                           np.asarray(doc["kappa"], dtype=np.float64),
                           np.asarray(doc["gamma"], dtype=np.float64)),
                np.asarray(doc["xi"], dtype=np.float64),
                np.asarray(doc["mu"], dtype=np.float64),
            )
    except (ValueError, TypeError) as exc:
        raise DataFormatError(f"{path}: inconsistent model document ({exc})") from None
    labels = tuple(str(x) for x in doc["type_labels"])
    if len(labels) != params.n:
        raise DataFormatError(f"{path}: type_labels length disagrees with n")
    if doc["n"] != params.n or doc["R"] != params.R:
        raise DataFormatError(f"{path}: declared sizes disagree with array shapes")
    if isinstance(params, ModelParams) and doc["m"] != params.m:
        raise DataFormatError(f"{path}: declared m disagrees with coordinates")
    return (params, labels) if with_labels else params


def reorder_to_labels(params, labels, target_labels):
    """Permute a model's per-type quantities onto a target label order."""
    labels = list(labels)
    target = list(target_labels)
    if sorted(labels) != sorted(target):
        raise DataFormatError("model and record type labels disagree")
    perm = np.array([labels.index(lab) for lab in target], dtype=np.int64)
    if isinstance(params, ModelParams):
        emb = EmbeddingPair(params.embedding.reception[perm],
                            params.embedding.influence[perm])
        return ModelParams(emb, params.kernels, params.xi[perm], params.mu[perm])
    if isinstance(params, FullRankParams):
        return FullRankParams(params.phi[np.ix_(perm, perm)], params.kappa,
                              params.w, params.mu[perm])
    raise TypeError("params must be ModelParams or FullRankParams")


# ---------------------------------------------------------------------------
# fit reports


def save_report(report: FitReport, path, config: dict | None = None) -> None:
    """Serialize a fit report (without wall time, which is run-dependent)."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "mode": report.mode,
        "epochs_run": int(report.curve.size),
        "curve": [float(v) for v in report.curve],
        "best_epoch": int(report.best_epoch),
        "aborted_epoch": None if report.aborted_epoch is None else int(report.aborted_epoch),
        "p_background": ([] if report.branching is None
                         else [float(v) for v in report.branching.p_background]),
        "config": config or {},
    }
    with atomic_write(path) as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_report(path) -> dict:
    if not os.path.exists(path):
        raise DataFormatError(f"report file not found: {path}")
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: not valid JSON ({exc})") from None
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataFormatError(f"{path}: unsupported schema_version")
    return doc


# ---------------------------------------------------------------------------
# plot-ready exports


def write_embedding_csv(params: ModelParams, labels, path) -> None:
    labels = list(labels) if labels is not None else _default_labels(params.n)
    with atomic_write(path) as f:
        writer = csv.writer(f)
        writer.writerow(["type_label", "role"] + [f"coord_{d + 1}" for d in range(params.m)])
        for role, pts in (("reception", params.embedding.reception),
                          ("influence", params.embedding.influence)):
            for k in range(params.n):
                writer.writerow([labels[k], role] + [repr(float(v)) for v in pts[k]])


def load_embedding_csv(path):
    """Read coordinates for each type, for runs with a frozen embedding.

    Accepts either ``type_label,coord_1,...`` (one point per type, used for
    both roles) or the exported ``type_label,role,coord_1,...`` layout.
    Returns ``(labels, X, Y)`` with ``Y`` equal to ``X`` in the single-role
    layout.
    """
    if not os.path.exists(path):
        raise DataFormatError(f"embedding file not found: {path}")
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError("empty embedding file") from None
        with_role = len(header) > 1 and header[1] == "role"
        coord_names = header[2:] if with_role else header[1:]
        if (header[0] not in ("type_label", "type") or not coord_names
                or coord_names != [f"coord_{d + 1}" for d in range(len(coord_names))]):
            raise DataFormatError(f"unexpected embedding header {header!r}")
        m = len(coord_names)
        rows: dict[tuple[str, str], list[float]] = {}
        order: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"line {lineno}: wrong field count")
            label = row[0].strip()
            role = row[1].strip() if with_role else "reception"
            if with_role and role not in ("reception", "influence"):
                raise DataFormatError(f"line {lineno}: unknown role {role!r}")
            try:
                coords = [float(v) for v in (row[2:] if with_role else row[1:])]
            except ValueError:
                raise DataFormatError(f"line {lineno}: unparseable coordinate") from None
            if (label, role) in rows:
                raise DataFormatError(f"line {lineno}: duplicate entry for {label!r}")
            rows[(label, role)] = coords
            if label not in order:
                order.append(label)
    X = np.empty((len(order), m))
    Y = np.empty((len(order), m)) if with_role else None
    for k, lab in enumerate(order):
        if (lab, "reception") not in rows:
            raise DataFormatError(f"missing reception coordinates for {lab!r}")
        X[k] = rows[(lab, "reception")]
        if with_role:
            if (lab, "influence") not in rows:
                raise DataFormatError(f"missing influence coordinates for {lab!r}")
            Y[k] = rows[(lab, "influence")]
    return tuple(order), X, Y


def write_curve_csv(report_doc: dict, path) -> None:
    with atomic_write(path) as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_log_likelihood"])
        for e, v in enumerate(report_doc["curve"]):
            writer.writerow([e, repr(float(v))])


def write_qq_csv(points: np.ndarray, path) -> None:
    with atomic_write(path) as f:
        writer = csv.writer(f)
        writer.writerow(["empirical_quantile", "theoretical_quantile"])
        for emp, theo in points:
            writer.writerow([repr(float(emp)), repr(float(theo))])
