import json
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faceprobe.images import Image, write_pgm
from faceprobe.recognize import (EMBED_DIM, BackendDimensionError,
                                 BackendProcessError, BackendProtocolError,
                                 ExternalBackend, Gallery, StubBackend,
                                 classify, embed_stub, enroll)


def random_image(rng, h=64, w=64):
    return Image(rng.integers(0, 256, size=(h, w), dtype=np.uint8))


def stub_oracle(pixels):
    """Independent two-pass reimplementation: loop-based box filter, then
    mean removal and normalization."""
    a = np.asarray(pixels, dtype=np.float64)
    if a.ndim == 3:
        a = a.mean(axis=2)
    h, w = a.shape
    cells = np.zeros((16, 16))
    counts = np.zeros((16, 16))
    for i in range(h):
        for j in range(w):
            cells[(i * 16) // h, (j * 16) // w] += a[i, j]
            counts[(i * 16) // h, (j * 16) // w] += 1
    cells = cells / np.maximum(counts, 1)
    v = cells.ravel()
    v = v - v.mean()
    n = np.linalg.norm(v)
    if n < 1e-12:
        out = np.zeros(256)
        out[0] = 1.0
        return out
    return v / n


def test_stub_is_deterministic(rng):
    image = random_image(rng)
    assert np.array_equal(embed_stub(image), embed_stub(image))


def test_stub_invariant_to_brightness_scale(rng):
    floats = rng.uniform(0.0, 100.0, size=(64, 64))
    a = embed_stub(floats)
    b = embed_stub(2.0 * floats)
    assert np.allclose(a, b, atol=1e-12)


def test_stub_matches_two_pass_oracle(rng):
    for shape in ((64, 64), (256, 256), (50, 70)):
        image = random_image(rng, *shape)
        assert np.allclose(embed_stub(image), stub_oracle(image.pixels), atol=1e-6)


def test_constant_image_maps_to_first_basis_vector():
    image = Image(np.full((32, 32), 77, dtype=np.uint8))
    e = embed_stub(image)
    expected = np.zeros(EMBED_DIM)
    expected[0] = 1.0
    assert np.array_equal(e, expected)


def test_embedding_is_unit_norm(rng):
    for _ in range(5):
        e = embed_stub(random_image(rng))
        assert abs(np.linalg.norm(e) - 1.0) < 1e-6
        assert e.size == EMBED_DIM


def unit(rng, d=8):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def test_classify_centroid_self_match(rng):
    c = unit(rng)
    gallery = Gallery(ids=("alice",), centroids=c[None, :], counts=(1,))
    identity, sim = classify(gallery, c)
    assert identity == "alice"
    assert abs(sim - 1.0) < 1e-6


def test_classify_orthogonal_centroids():
    e0 = np.zeros(4)
    e0[0] = 1.0
    e1 = np.zeros(4)
    e1[1] = 1.0
    gallery = Gallery(ids=("a", "b"), centroids=np.stack([e0, e1]), counts=(1, 1))
    identity, sim = classify(gallery, e0)
    assert identity == "a" and abs(sim - 1.0) < 1e-12
    assert float(gallery.centroids[1] @ e0) == 0.0


def test_classify_matches_brute_force_scan_oracle(rng):
    ids = tuple(f"id{i:02d}" for i in range(10))
    centroids = np.stack([unit(rng, 16) for _ in ids])
    gallery = Gallery(ids=ids, centroids=centroids, counts=(1,) * 10)
    for _ in range(100):
        q = rng.normal(size=16)
        got_id, got_sim = classify(gallery, q)
        qn = q / np.linalg.norm(q)
        best_id, best_sim = None, -np.inf
        for identity, c in zip(ids, centroids):  # full scan, lexicographic ties
            s = float(c @ qn)
            if s > best_sim or (s == best_sim and identity < best_id):
                best_id, best_sim = identity, s
        assert got_id == best_id
        assert abs(got_sim - best_sim) < 1e-12


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(min_value=1e-6, max_value=1e6))
def test_classify_invariant_to_positive_query_scaling(scale):
    rng = np.random.default_rng(7)
    gallery = Gallery(ids=("a", "b", "c"),
                      centroids=np.stack([unit(rng), unit(rng), unit(rng)]),
                      counts=(1, 1, 1))
    q = rng.normal(size=8)
    assert classify(gallery, q)[0] == classify(gallery, scale * q)[0]


def test_enroll_order_invariance(rng):
    images = [random_image(rng) for _ in range(6)]
    g1 = enroll(Gallery.empty(), "a", images)
    perm = [images[i] for i in rng.permutation(6)]
    g2 = enroll(Gallery.empty(), "a", perm)
    assert np.abs(g1.centroids - g2.centroids).max() < 1e-9


def test_enroll_keeps_ids_sorted_and_unique(rng):
    gallery = Gallery.empty()
    for name in ("zeta", "alpha", "mid"):
        gallery = enroll(gallery, name, [random_image(rng)])
    assert gallery.ids == ("alpha", "mid", "zeta")
    assert gallery.counts == (1, 1, 1)
    with pytest.raises(ValueError):
        enroll(gallery, "alpha", [random_image(rng)])


def test_classify_empty_gallery_raises(rng):
    with pytest.raises(ValueError):
        classify(Gallery.empty(), unit(rng))


# -- external backend protocol -------------------------------------------------


def inline_server(body: str) -> list[str]:
    script = (
        "import sys, json\n"
        "for line in sys.stdin:\n"
        "    req = json.loads(line)\n"
        + body
        + "    sys.stdout.flush()\n"
    )
    return [sys.executable, "-c", script]


def test_echo_server_round_trip():
    cmd = inline_server(
        "    print(json.dumps({'embedding': [3.0, 0.0, 4.0, 0.0]}))\n")
    with ExternalBackend(cmd) as backend:
        v = backend.embed_path("ignored.pgm")
    assert np.allclose(v, [0.6, 0.0, 0.8, 0.0])  # normalized 3-0-4-0


def test_dimension_drift_is_reported_with_both_dims(tmp_path):
    cmd = inline_server(
        "    n = 4 if req.get('image', '').endswith('first.pgm') else 3\n"
        "    print(json.dumps({'embedding': [1.0] * n}))\n")
    with ExternalBackend(cmd) as backend:
        backend.embed_path("first.pgm")
        with pytest.raises(BackendDimensionError, match="4.*3"):
            backend.embed_path("second.pgm")


def test_process_exit_is_reported():
    cmd = [sys.executable, "-c", "import sys; sys.exit(3)"]
    with ExternalBackend(cmd) as backend:
        with pytest.raises(BackendProcessError):
            backend.embed_path("x.pgm")


def test_malformed_response_is_reported():
    cmd = inline_server("    print('this is not json')\n")
    with ExternalBackend(cmd) as backend:
        with pytest.raises(BackendProtocolError):
            backend.embed_path("x.pgm")


def test_server_error_response_is_reported():
    cmd = inline_server("    print(json.dumps({'error': 'no such file'}))\n")
    with ExternalBackend(cmd) as backend:
        with pytest.raises(BackendProtocolError, match="no such file"):
            backend.embed_path("x.pgm")


def test_stub_server_agrees_with_in_process_stub(tmp_path, rng):
    image = random_image(rng)
    path = tmp_path / "probe.pgm"
    write_pgm(image, path)
    with ExternalBackend([sys.executable, "-m", "faceprobe.stub_server"]) as backend:
        via_wire = backend.embed_path(str(path))
        via_image = backend.embed_image(image)
    direct = embed_stub(image)
    assert np.allclose(via_wire, direct, atol=1e-12)
    assert np.allclose(via_image, direct, atol=1e-12)


def test_stub_backend_adapter(rng):
    image = random_image(rng)
    with StubBackend() as backend:
        assert np.array_equal(backend.embed_image(image), embed_stub(image))
