"""Preprocessing: outlier filtering, normalization, resampling to 72x9.

The pipeline per admission: drop values outside the bio-limits, pick the
window end (first positive culture time for positives, last recorded
timestamp for negatives), split the final 72 hours into one-hour bins,
aggregate each occupied bin per the variable's policy, normalize with
training-set statistics via n = (x - avg) / (3 * std), forward-fill empty
bins after the first occupied one, and zero-fill before it.

Bin k covers [end - (72-k) h, end - (71-k) h), half-open on the right,
except bin 71 which is closed at the window end.
"""

import struct
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .cohort import PatientSeries
from .errors import (EmptySeriesError, FitError, FormatError, SchemaError,
                     ShapeError, TensorCacheError)
from .variables import (BIN_SECONDS, BY_NAME, N_BINS, N_VARIABLES,
                        VARIABLES, VariableSpec, WINDOW_SECONDS)

TENSOR_MAGIC = b"#hemocult-tensors v1\n"


@dataclass
class NormStats:
    """Per-variable (avg, std) in column order; std is the population form."""

    avg: np.ndarray  # (9,)
    std: np.ndarray  # (9,)

    def for_name(self, name: str) -> Tuple[float, float]:
        col = BY_NAME[name].column_index
        return float(self.avg[col]), float(self.std[col])


@dataclass
class SampleTensor:
    """One admission as a (72, 9) normalized matrix plus its label."""

    values: np.ndarray
    label: int
    admission_id: str

    def validate(self):
        if self.values.shape != (N_BINS, N_VARIABLES):
            raise ShapeError(f"tensor shape {self.values.shape}, want ({N_BINS}, {N_VARIABLES})")
        if not np.all(np.isfinite(self.values)):
            raise ShapeError("non-finite tensor entry")
        if self.label not in (0, 1):
            raise ShapeError(f"label must be 0 or 1, got {self.label}")


def filter_outliers(series: PatientSeries, specs=VARIABLES) -> Tuple[PatientSeries, int]:
    """Drop values outside closed bio-limit intervals; order preserved."""
    by_name = {spec.name: spec for spec in specs}
    channels = {}
    removed = 0
    for name, (ts, vals) in series.channels.items():
        if name not in by_name:
            raise SchemaError(f"unknown variable {name!r} in {series.admission_id}")
        limits = by_name[name].bio_limits
        if limits is None:
            channels[name] = (ts, vals)
            continue
        lo, hi = limits
        keep = (vals >= lo) & (vals <= hi)
        removed += int(ts.size - keep.sum())
        channels[name] = (ts[keep], vals[keep])
    filtered = PatientSeries(series.admission_id, series.label,
                             series.first_positive_time, channels)
    return filtered, removed


def fit_normalizer(training_series: List[PatientSeries], specs=VARIABLES) -> NormStats:
    """Mean and population std of all surviving raw values, per variable."""
    avg = np.zeros(N_VARIABLES)
    std = np.zeros(N_VARIABLES)
    for spec in specs:
        pieces = [series.channels[spec.name][1]
                  for series in training_series if spec.name in series.channels]
        if sum(arr.size for arr in pieces) == 0:
            raise FitError(f"no values to fit for variable {spec.name!r}")
        values = pieces[0] if len(pieces) == 1 else np.concatenate(pieces)
        avg[spec.column_index] = values.mean()
        std[spec.column_index] = values.std()
    return NormStats(avg=avg, std=std)


def normalize(x, avg: float, std: float):
    """Scales to (x - avg) / (3 * std); a constant variable maps to 0."""
    if np.ndim(x) == 0:
        if std == 0.0:
            return 0.0
        return float((x - avg) / (3.0 * std))
    x = np.asarray(x, dtype=float)
    if std == 0.0:
        return np.zeros_like(x)
    return (x - avg) / (3.0 * std)


def select_end_time(series: PatientSeries) -> int:
    """Positives end at the first positive culture; negatives at the last value."""
    if series.label == 1:
        if series.first_positive_time is None:
            raise SchemaError(f"{series.admission_id}: positive admission lacks a culture time")
        return int(series.first_positive_time)
    last = series.last_timestamp()
    if last is None:
        raise EmptySeriesError(f"{series.admission_id}: no measurements to anchor the window")
    return last


def resample_channel(ts: np.ndarray, vals: np.ndarray, spec: VariableSpec,
                     end_time: float, stats: NormStats) -> np.ndarray:
    """72 hourly values, oldest first: aggregate, normalize, fill."""
    avg, std = stats.for_name(spec.name)
    out = np.zeros(N_BINS)
    ts = np.asarray(ts, dtype=float)
    start = end_time - WINDOW_SECONDS
    edges = start + BIN_SECONDS * np.arange(N_BINS + 1, dtype=float)
    inside = (ts >= start) & (ts <= end_time)
    ts_in = ts[inside]
    vals_in = np.asarray(vals, dtype=float)[inside]
    bins = np.searchsorted(edges, ts_in, side="right") - 1
    # the final bin is closed at end_time (covers any rounding of edges[72])
    bins = np.minimum(bins, N_BINS - 1)
    filled = None
    for k in range(N_BINS):
        members = vals_in[bins == k]
        if members.size:
            if spec.aggregation == "min":
                agg = members.min()
            elif spec.aggregation == "max":
                agg = members.max()
            else:
                agg = members.mean()
            filled = normalize(agg, avg, std)
            out[k] = filled
        elif filled is not None:
            out[k] = filled  # forward fill after the first observation
        # else leave the zero padding (the normalized mean)
    return out


def build_tensor(series: PatientSeries, specs=VARIABLES, stats: NormStats = None) -> SampleTensor:
    """Column j is the resampled channel of the variable with column_index j."""
    if stats is None:
        raise FitError("build_tensor needs fitted normalization statistics")
    end_time = select_end_time(series)
    values = np.zeros((N_BINS, N_VARIABLES))
    for spec in specs:
        ts, vals = series.channels.get(spec.name, (np.empty(0, dtype=np.int64), np.empty(0)))
        values[:, spec.column_index] = resample_channel(ts, vals, spec, end_time, stats)
    tensor = SampleTensor(values=values, label=int(series.label),
                          admission_id=series.admission_id)
    tensor.validate()
    return tensor


def write_stats(stats: NormStats, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("variable\tavg\tstd\n")
        for spec in VARIABLES:
            fh.write(f"{spec.name}\t{float(stats.avg[spec.column_index])!r}"
                     f"\t{float(stats.std[spec.column_index])!r}\n")


def read_stats(path) -> NormStats:
    avg = np.zeros(N_VARIABLES)
    std = np.zeros(N_VARIABLES)
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "variable\tavg\tstd":
            raise FormatError(f"{path}: bad stats header")
        for line in fh:
            name, avg_s, std_s = line.rstrip("\n").split("\t")
            if name not in BY_NAME:
                raise FormatError(f"{path}: unknown variable {name!r}")
            col = BY_NAME[name].column_index
            avg[col] = float(avg_s)
            std[col] = float(std_s)
            seen.add(name)
    if len(seen) != N_VARIABLES:
        raise FormatError(f"{path}: stats cover {len(seen)} of {N_VARIABLES} variables")
    return NormStats(avg=avg, std=std)


def write_tensors(tensors: List[SampleTensor], path):
    """Binary cache: magic, then per record id, label byte, 648 LE doubles."""
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        for tensor in tensors:
            tensor.validate()
            raw_id = tensor.admission_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_id)))
            fh.write(raw_id)
            fh.write(struct.pack("<B", tensor.label))
            fh.write(np.ascontiguousarray(tensor.values, dtype="<f8").tobytes())


def read_tensors(path) -> List[SampleTensor]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(TENSOR_MAGIC):
        raise TensorCacheError(f"{path}: bad tensor cache magic")
    off = len(TENSOR_MAGIC)
    body = N_BINS * N_VARIABLES * 8
    tensors = []
    while off < len(blob):
        if off + 4 > len(blob):
            raise TensorCacheError(f"{path}: truncated record header")
        (id_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        if off + id_len + 1 + body > len(blob):
            raise TensorCacheError(f"{path}: truncated record")
        admission_id = blob[off:off + id_len].decode("utf-8")
        off += id_len
        label = blob[off]
        off += 1
        if label not in (0, 1):
            raise TensorCacheError(f"{path}: label byte {label} for {admission_id}")
        values = np.frombuffer(blob, dtype="<f8", count=N_BINS * N_VARIABLES,
                               offset=off).reshape(N_BINS, N_VARIABLES).copy()
        off += body
        tensors.append(SampleTensor(values=values, label=int(label), admission_id=admission_id))
    return tensors


__all__ = [
    "NormStats", "SampleTensor", "filter_outliers", "fit_normalizer",
    "normalize", "select_end_time", "resample_channel", "build_tensor",
    "write_stats", "read_stats", "write_tensors", "read_tensors", "TENSOR_MAGIC",
]
