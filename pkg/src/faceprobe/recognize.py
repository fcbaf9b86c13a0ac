"""Pluggable recognition backend: an embedded deterministic stub plus a
line-delimited JSON client for external embedding processes.

The stub embeds an image by 16x16 box-filter downsampling, mean removal,
and L2 normalization (d = 256); an all-constant image maps to the first
basis vector. Classification is nearest centroid under cosine similarity
with lexicographic tie-breaking, which is how per-identity evaluation is
normally run when no trainable recognizer is in the loop.

Wire contract (one JSON object per line over the child's stdin/stdout):
    request   {"op": "embed", "image": "<path to PGM/PPM>"}
    response  {"embedding": [..numbers..]}  or  {"error": "<message>"}
Requests are answered strictly in order. Process exit, malformed
responses, and embedding-dimension drift are reported as distinct errors.
"""

from __future__ import annotations

import json
import os
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass

import numpy as np

from .images import Image, to_gray_f64, write_pgm

EMBED_DIM = 256
_GRID = 16


class BackendError(RuntimeError):
    """Base class for recognition-backend failures."""


class BackendProcessError(BackendError):
    """The external process exited or its pipes broke."""


class BackendProtocolError(BackendError):
    """Malformed response, or the server reported an error."""


class BackendDimensionError(BackendError):
    """Embedding dimension changed between responses."""


def _unit_or_basis(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        out = np.zeros(v.size)
        out[0] = 1.0
        return out
    return v / norm


def _box_downsample(a: np.ndarray, grid: int) -> np.ndarray:
    """Partition-based box filter; cell (r, c) averages pixels mapped to it."""
    h, w = a.shape
    rows = (np.arange(h) * grid) // h
    cols = (np.arange(w) * grid) // w
    sums = np.zeros((grid, grid))
    counts = np.zeros((grid, grid))
    idx = (rows[:, None], cols[None, :])
    np.add.at(sums, idx, a)
    np.add.at(counts, idx, 1.0)
    return sums / np.maximum(counts, 1.0)


def embed_stub(image: Image | np.ndarray) -> np.ndarray:
    """Deterministic 256-d unit embedding; invariant to brightness scaling."""
    gray = to_gray_f64(image)
    small = _box_downsample(gray, _GRID)
    centered = small.ravel() - small.mean()
    return _unit_or_basis(centered)


@dataclass(frozen=True)
class Gallery:
    """Per-identity unit centroids, ids kept sorted so argmax ties resolve
    to the lexicographically smallest id."""

    ids: tuple[str, ...]
    centroids: np.ndarray  # (n, d)
    counts: tuple[int, ...]

    @staticmethod
    def empty() -> "Gallery":
        return Gallery(ids=(), centroids=np.zeros((0, 0)), counts=())


def enroll(gallery: Gallery, identity: str, images, embed=embed_stub) -> Gallery:
    """New gallery with `identity` added as the renormalized embedding mean."""
    if identity in gallery.ids:
        raise ValueError(f"identity {identity!r} already enrolled")
    embeddings = [np.asarray(embed(im), dtype=np.float64) for im in images]
    if not embeddings:
        raise ValueError("enroll requires at least one image")
    centroid = _unit_or_basis(np.mean(embeddings, axis=0))
    if gallery.ids and centroid.size != gallery.centroids.shape[1]:
        raise ValueError(
            f"embedding dimension {centroid.size} does not match gallery "
            f"dimension {gallery.centroids.shape[1]}")
    merged = list(zip(gallery.ids, gallery.centroids, gallery.counts))
    merged.append((identity, centroid, len(embeddings)))
    merged.sort(key=lambda entry: entry[0])
    ids = tuple(e[0] for e in merged)
    centroids = np.stack([e[1] for e in merged])
    counts = tuple(e[2] for e in merged)
    return Gallery(ids=ids, centroids=centroids, counts=counts)


def classify(gallery: Gallery, embedding) -> tuple[str, float]:
    """Argmax cosine similarity over centroids; query is normalized first."""
    if not gallery.ids:
        raise ValueError("cannot classify against an empty gallery")
    q = _unit_or_basis(np.asarray(embedding, dtype=np.float64))
    sims = gallery.centroids @ q
    best = int(np.argmax(sims))  # first max -> smallest id, ids are sorted
    return gallery.ids[best], float(sims[best])


class StubBackend:
    """In-process embedding backend over the deterministic stub."""

    name = "stub"

    def embed_image(self, image: Image) -> np.ndarray:
        return embed_stub(image)

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class ExternalBackend:
    """Client for an external embedding process speaking the wire contract."""

    name = "external"

    def __init__(self, command, cwd=None):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self._command = argv
        self._proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, cwd=cwd)
        self._dim: int | None = None
        self._tmp = tempfile.mkdtemp(prefix="faceprobe-backend-")

    def embed_path(self, image_path) -> np.ndarray:
        request = json.dumps({"op": "embed", "image": str(image_path)}) + "\n"
        try:
            self._proc.stdin.write(request.encode("utf-8"))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            code = self._proc.poll()
            raise BackendProcessError(
                f"backend process pipe closed (exit code {code}): {exc}") from exc
        line = self._proc.stdout.readline()
        if not line:
            code = self._proc.poll()
            raise BackendProcessError(f"backend process exited (exit code {code})")
        try:
            response = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BackendProtocolError(f"malformed backend response: {exc}") from exc
        if not isinstance(response, dict):
            raise BackendProtocolError(f"backend response is not an object: {response!r}")
        if "error" in response:
            raise BackendProtocolError(f"backend reported an error: {response['error']}")
        raw = response.get("embedding")
        if not isinstance(raw, list) or not raw:
            raise BackendProtocolError("backend response lacks a non-empty 'embedding' array")
        vec = np.asarray(raw, dtype=np.float64)
        if vec.ndim != 1 or not np.isfinite(vec).all():
            raise BackendProtocolError("backend embedding must be a flat finite numeric array")
        if self._dim is None:
            self._dim = vec.size
        elif vec.size != self._dim:
            raise BackendDimensionError(
                f"embedding dimension drifted from {self._dim} to {vec.size}")
        return _unit_or_basis(vec)

    def embed_image(self, image: Image) -> np.ndarray:
        path = os.path.join(self._tmp, "query.pgm")
        write_pgm(image, path)
        return self.embed_path(path)

    def close(self) -> None:
        if self._proc.stdin and not self._proc.stdin.closed:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        shutil.rmtree(self._tmp, ignore_errors=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
