"""Dataset construction: mean-biased training selection, uniform-coverage
test selection, augmentation manifests, and pose-binned batch balancing.

Training frames are those closest to the per-identity mean of the chosen
parameter (the biased set); test frames cover the observed parameter range
at evenly spaced targets (the unbiased set). Batch balancing draws an
equal number of pairs from each of six fixed pose-difference bins,
resampling a bin with replacement once its queue is exhausted.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# degrees; lower edge inclusive, upper exclusive, except the last bin which
# is closed at 180
POSE_BIN_EDGES = (
    (-180.0, -30.0),
    (-30.0, -15.0),
    (-15.0, -5.0),
    (-5.0, 5.0),
    (5.0, 30.0),
    (30.0, 180.0),
)
N_POSE_BINS = len(POSE_BIN_EDGES)

AUGMENTED_HEADER = "identity,source,param,k,value,image_path"


class EmptyBinError(ValueError):
    """A pose bin received no pairs at all."""


class ManifestCollisionError(ValueError):
    """The same frame reference was claimed by more than one source row."""


@dataclass(frozen=True)
class ParamTrace:
    """Per-identity fitted values of one parameter across ordered frames."""

    identity: str
    frames: tuple[tuple[int, float], ...]  # (frame id, value)

    def __post_init__(self):
        if not self.frames:
            raise ValueError("a trace needs at least one frame")
        values = np.array([v for _, v in self.frames])
        if not np.isfinite(values).all():
            raise ValueError("trace values must be finite")

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.frames])

    @property
    def frame_ids(self) -> list[int]:
        return [f for f, _ in self.frames]


def select_train_frames(trace: ParamTrace, n: int) -> list[int]:
    """The n frames nearest the trace mean; ties to the earliest frame id,
    output sorted by frame id."""
    if n < 0 or n > len(trace.frames):
        raise ValueError(f"cannot select {n} of {len(trace.frames)} frames")
    mean = float(trace.values.mean())
    ranked = sorted(trace.frames, key=lambda fv: (abs(fv[1] - mean), fv[0]))
    return sorted(f for f, _ in ranked[:n])


def select_test_frames(trace: ParamTrace, n: int = 10) -> list[int]:
    """Uniform-coverage selection: n evenly spaced targets over the observed
    value range, each matched greedily to the nearest unused frame."""
    if n < 1 or n > len(trace.frames):
        raise ValueError(f"cannot select {n} of {len(trace.frames)} frames")
    values = trace.values
    lo, hi = float(values.min()), float(values.max())
    targets = [lo] if n == 1 else [lo + (hi - lo) * i / (n - 1) for i in range(n)]
    used: set[int] = set()
    chosen: list[int] = []
    for target in targets:
        best = min(
            (fv for fv in trace.frames if fv[0] not in used),
            key=lambda fv: (abs(fv[1] - target), fv[0]),
        )
        used.add(best[0])
        chosen.append(best[0])
    return chosen


def build_augmented_manifest(real_frames, sweep_manifests):
    """Union of real frames and sweep rows, tagged by source.

    real_frames: iterable of (identity, image_path).
    sweep_manifests: iterables of sweep-manifest row dicts.
    Returns (rows, per-identity {source: count}); a frame reference claimed
    twice is a collision.
    """
    rows: list[dict] = []
    seen: dict[str, str] = {}
    counts: dict[str, dict[str, int]] = {}

    def claim(identity, path, source):
        key = f"{identity}::{path}"
        if key in seen:
            raise ManifestCollisionError(
                f"frame {path!r} of identity {identity!r} claimed by both "
                f"{seen[key]} and {source} sources")
        seen[key] = source
        counts.setdefault(identity, {"real": 0, "synthetic": 0})[source] += 1

    for identity, path in real_frames:
        claim(identity, path, "real")
        rows.append({"identity": identity, "source": "real", "param": "",
                     "k": "", "value": "", "image_path": path})
    for manifest in sweep_manifests:
        for row in manifest:
            claim(row["identity"], row["image_path"], "synthetic")
            rows.append({"identity": row["identity"], "source": "synthetic",
                         "param": row["param"], "k": row["k"],
                         "value": row["value"], "image_path": row["image_path"]})
    return rows, counts


def encode_augmented_manifest(rows) -> str:
    lines = [AUGMENTED_HEADER]
    for row in rows:
        k = "" if row["k"] == "" else f"{row['k']:.6f}"
        value = "" if row["value"] == "" else f"{row['value']:.6f}"
        lines.append(f"{row['identity']},{row['source']},{row['param']},{k},{value},{row['image_path']}")
    return "\n".join(lines) + "\n"


def write_augmented_manifest(rows, path) -> None:
    Path(path).write_bytes(encode_augmented_manifest(rows).encode("utf-8"))


def assign_pose_bin(delta_deg: float) -> int:
    """Bin index for a pose difference in degrees; domain is [-180, 180]."""
    if not np.isfinite(delta_deg):
        raise ValueError("pose delta must be finite")
    if delta_deg < -180.0 or delta_deg > 180.0:
        raise ValueError(f"pose delta {delta_deg} outside [-180, 180] degrees")
    for i, (lo, hi) in enumerate(POSE_BIN_EDGES):
        if lo <= delta_deg < hi:
            return i
    return N_POSE_BINS - 1  # exactly +180


def balance_batches(pairs, batch_size: int, seed: int = 0,
                    n_batches: int | None = None) -> list[list]:
    """Batches with exactly batch_size/6 pairs from each pose bin.

    Bins are consumed in input order without repetition; once a bin runs
    dry its members are redrawn with replacement from a seeded generator,
    so skewed inputs still yield uniform per-batch bin histograms.
    """
    pairs = list(pairs)
    if batch_size < N_POSE_BINS or batch_size % N_POSE_BINS != 0:
        raise ValueError(f"batch_size must be a positive multiple of {N_POSE_BINS}")
    if not pairs:
        raise ValueError("at least one pair is required")
    per_bin = batch_size // N_POSE_BINS
    bins: list[list] = [[] for _ in range(N_POSE_BINS)]
    for pair_id, delta in pairs:
        bins[assign_pose_bin(float(delta))].append(pair_id)
    for i, members in enumerate(bins):
        if not members:
            lo, hi = POSE_BIN_EDGES[i]
            raise EmptyBinError(f"pose bin {i} ([{lo:g}, {hi:g}] degrees) has no pairs")
    if n_batches is None:
        n_batches = -(-len(pairs) // batch_size)
    rng = np.random.default_rng(seed)
    queues = [deque(members) for members in bins]
    batches: list[list] = []
    for _ in range(n_batches):
        batch: list = []
        for b in range(N_POSE_BINS):
            for _ in range(per_bin):
                if queues[b]:
                    batch.append(queues[b].popleft())
                else:
                    batch.append(bins[b][int(rng.integers(len(bins[b])))])
        batches.append(batch)
    return batches


def read_trace_csv(path, param: str) -> dict[str, ParamTrace]:
    """Traces for one parameter from a CSV with header identity,frame,param,value."""
    grouped: dict[str, list[tuple[int, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"identity", "frame", "param", "value"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"trace CSV must have columns {sorted(required)}")
        for row in reader:
            if row["param"] != param:
                continue
            grouped.setdefault(row["identity"], []).append(
                (int(row["frame"]), float(row["value"])))
    return {identity: ParamTrace(identity, tuple(frames))
            for identity, frames in grouped.items()}


def read_pairs_csv(path) -> list[tuple[str, float]]:
    """(pair id, pose delta degrees) rows from a CSV with header pair,delta_deg."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"pair", "delta_deg"}.issubset(reader.fieldnames):
            raise ValueError("pairs CSV must have columns ['pair', 'delta_deg']")
        return [(row["pair"], float(row["delta_deg"])) for row in reader]
