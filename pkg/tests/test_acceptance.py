"""Acceptance suite: one test per release criterion, each printing a
PASS line with the measured figure once its assertions hold. Run with
``pytest tests/test_acceptance.py -v -s``.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

from faceprobe.augment import assign_pose_bin, balance_batches
from faceprobe.diagnose import encode_curve, enroll_base_renders, run_diagnosis
from faceprobe.fitting import LandmarkSet, fit_landmarks
from faceprobe.losses import (CONTENT_LAYER_WEIGHTS, COMPONENT_KEYS, FeatureMap,
                              gan_loss_global, gan_loss_global_grad,
                              gan_loss_patch, style_losses, style_losses_grad,
                              total_objective, weighted_feature_l1,
                              weighted_feature_l1_grad)
from faceprobe.model import instantiate, landmarks3d
from faceprobe.recognize import ExternalBackend, StubBackend
from faceprobe.render import default_camera, project, render_mesh
from faceprobe.sweep import SweepSpec, k_grid
from faceprobe.synth import (aligned_cohort_params, random_identity_params,
                             synth_head)
from faceprobe.augment import ParamTrace, select_test_frames, select_train_frames

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "scripts"))
from make_golden_scenes import GOLDEN_DIR, golden_scenes  # noqa: E402

from faceprobe.images import encode_ppm  # noqa: E402


@pytest.fixture(scope="module")
def head():
    return synth_head(0)


def test_fit_recovery_criterion(head):
    """20 seeded identities, noiseless oracle landmarks at 256x256:
    RMS < 0.5 px, < 5% relative error on every nonzero parameter,
    < 5 s per fit."""
    worst_rel, worst_rms, slowest = 0.0, 0.0, 0.0
    for seed in range(20):
        gt_params, gt_camera = random_identity_params(head, seed=seed)
        points = project(landmarks3d(instantiate(head, gt_params), head), gt_camera)
        landmarks = LandmarkSet(points=points, confidence=np.ones(68))
        started = time.perf_counter()
        result = fit_landmarks(head, landmarks, camera=default_camera())
        elapsed = time.perf_counter() - started
        slowest = max(slowest, elapsed)
        worst_rms = max(worst_rms, result.rms_error)
        est = np.concatenate([result.params.shape, result.params.expression,
                              result.params.rotations.ravel(),
                              result.params.translation, [result.camera.focal]])
        true = np.concatenate([gt_params.shape, gt_params.expression,
                               gt_params.rotations.ravel(),
                               gt_params.translation, [gt_camera.focal]])
        nonzero = true != 0
        rel = np.abs(est[nonzero] - true[nonzero]) / np.abs(true[nonzero])
        worst_rel = max(worst_rel, float(rel.max()))
        assert elapsed < 5.0, f"seed {seed}: fit took {elapsed:.2f}s"
    assert worst_rms < 0.5, f"worst RMS {worst_rms}"
    assert worst_rel < 0.05, f"worst relative error {worst_rel}"
    print(f"\n[PASS] fit recovery: worst RMS {worst_rms:.2e}px, "
          f"worst rel err {worst_rel:.2%}, slowest fit {slowest:.2f}s")


def test_diagnosis_shape_criterion(head):
    """Stub backend, k=0 enrollment, yaw sweep K=0.5 n=21, 20 identities:
    curve maximum at k=0 and outer-20% mean strictly below; < 2 min."""
    started = time.perf_counter()
    fits = {f"id{i:02d}": aligned_cohort_params(head, seed=i) for i in range(20)}
    backend = StubBackend()
    gallery = enroll_base_renders(head, fits, backend)
    spec = SweepSpec(target="yaw", span=0.5, n_samples=21)
    curve = run_diagnosis(head, fits, spec, backend, gallery)
    elapsed = time.perf_counter() - started
    by_k = dict(zip(curve.ks, curve.accuracies))
    acc0 = by_k[0.0]
    assert acc0 == max(curve.accuracies), "curve maximum must sit at k=0"
    outer = [a for k, a in by_k.items() if abs(k) > 0.8 * spec.span]
    assert len(outer) == 4
    assert float(np.mean(outer)) < acc0, "outer 20% must dip below the center"
    assert elapsed < 120.0, f"diagnosis took {elapsed:.1f}s"
    print(f"\n[PASS] diagnosis shape: acc(0)={acc0:.3f}, "
          f"outer mean={np.mean(outer):.3f}, runtime {elapsed:.1f}s")


def test_loss_kernel_criterion(rng=np.random.default_rng(123)):
    """Gradient vs central finite differences < 1e-4 relative on 100 random
    points per kernel; unit components total exactly 26; balanced critic
    scores give -2 ln 2 within 1e-9."""

    def central(fn, x, step=1e-5):
        g = np.zeros_like(x)
        flat, xf = g.ravel(), x.ravel()
        for i in range(xf.size):
            orig = xf[i]
            xf[i] = orig + step
            hi = fn(x)
            xf[i] = orig - step
            lo = fn(x)
            xf[i] = orig
            flat[i] = (hi - lo) / (2.0 * step)
        return g

    def rel_err(analytic, numeric):
        scale = max(float(np.abs(numeric).max()), 1e-12)
        return float(np.abs(analytic - numeric).max()) / scale

    worst = 0.0
    for _ in range(100):  # weighted feature L1
        b = [FeatureMap(4, rng.normal(size=(1, 2, 3))),
             FeatureMap(9, rng.normal(size=(1, 2, 3)))]
        a_arrays = [m.values + rng.choice([-1, 1], size=m.values.shape) *
                    rng.uniform(0.2, 1.0, size=m.values.shape) for m in b]
        grads = weighted_feature_l1_grad(
            [FeatureMap(4, a_arrays[0]), FeatureMap(9, a_arrays[1])], b,
            CONTENT_LAYER_WEIGHTS)
        for idx in range(2):
            def fn(x, idx=idx):
                trial = list(a_arrays)
                trial[idx] = x
                return weighted_feature_l1(
                    [FeatureMap(4, trial[0]), FeatureMap(9, trial[1])], b,
                    CONTENT_LAYER_WEIGHTS)
            worst = max(worst, rel_err(grads[idx], central(fn, a_arrays[idx].copy())))
    assert worst < 1e-4, f"feature L1 gradient rel err {worst}"

    for _ in range(100):  # global adversarial score
        real = rng.uniform(0.1, 0.9, size=4)
        fake = rng.uniform(0.1, 0.9, size=4)
        g_real, g_fake = gan_loss_global_grad(real, fake)
        worst = max(worst, rel_err(g_real, central(lambda x: gan_loss_global(x, fake),
                                                   real.copy())))
        worst = max(worst, rel_err(g_fake, central(lambda x: gan_loss_global(real, x),
                                                   fake.copy())))
    assert worst < 1e-4, f"gan gradient rel err {worst}"

    for _ in range(100):  # style distances
        ref = rng.normal(size=6)
        tgt = ref + rng.choice([-1, 1], size=6) * rng.uniform(0.5, 1.0, size=6)
        pred = ref + rng.choice([-1, 1], size=6) * rng.uniform(0.2, 0.4, size=6)
        g_ref, g_tgt = style_losses_grad(pred, ref, tgt)
        worst = max(worst, rel_err(g_ref, central(lambda x: style_losses(x, ref, tgt)[0],
                                                  pred.copy())))
        worst = max(worst, rel_err(g_tgt, central(lambda x: style_losses(x, ref, tgt)[1],
                                                  pred.copy())))
    assert worst < 1e-4, f"style gradient rel err {worst}"

    assert total_objective({k: 1.0 for k in COMPONENT_KEYS}) == 26.0
    target = -2.0 * np.log(2.0)
    assert abs(gan_loss_global(0.5, 0.5) - target) < 1e-9
    assert abs(gan_loss_patch(np.full((8, 8), 0.5), np.full((8, 8), 0.5)) - target) < 1e-9
    print(f"\n[PASS] loss kernels: worst gradient rel err {worst:.2e}, "
          f"unit total 26.0 exact, balanced scores -2ln2")


def test_batch_balancer_criterion():
    """Adversarially skewed pose deltas still give exactly batch_size/6 per
    bin in every batch; edges behave exactly at -30, -15, -5, 5, 30."""
    assert [assign_pose_bin(v) for v in (-30.0, -15.0, -5.0, 5.0, 30.0)] == [1, 2, 3, 4, 5]
    assert [assign_pose_bin(v) for v in (-30.000001, -15.000001, -5.000001,
                                         4.999999, 29.999999)] == [0, 1, 2, 3, 4]
    rng = np.random.default_rng(9)
    pairs = [(f"maj{i}", float(rng.uniform(-4.9, 4.9))) for i in range(600)]
    pairs += [(f"rare{b}_{i}", {0: -170.0, 1: -20.0, 2: -10.0, 4: 10.0, 5: 170.0}[b])
              for b in (0, 1, 2, 4, 5) for i in range(2)]
    batch_size = 24
    batches = balance_batches(pairs, batch_size=batch_size, seed=0)
    lookup = dict(pairs)
    for batch in batches:
        hist = np.zeros(6, dtype=int)
        for pid in batch:
            hist[assign_pose_bin(lookup[pid])] += 1
        assert (hist == batch_size // 6).all(), hist
    print(f"\n[PASS] batch balancer: {len(batches)} batches, uniform "
          f"{batch_size // 6}-per-bin histograms under 98% skew")


def test_renderer_determinism_criterion():
    """Byte-equal PPM output across repeated runs and against the committed
    golden files for three fixed scenes."""
    for name, mesh, camera, light in golden_scenes():
        first = encode_ppm(render_mesh(mesh, camera, light))
        second = encode_ppm(render_mesh(mesh, camera, light))
        assert first == second, f"{name}: repeated render differs"
        golden = (GOLDEN_DIR / f"{name}.ppm").read_bytes()
        assert first == golden, f"{name}: render differs from committed golden"
    print("\n[PASS] renderer determinism: 3 scenes byte-identical across runs "
          "and against committed goldens")


def test_selection_oracle_criterion():
    """select_train/select_test agree with brute-force oracles on 1000 random
    traces; the k grid matches the closed form to 1e-12."""
    rng = np.random.default_rng(7)
    for trial in range(1000):
        length = int(rng.integers(2, 40))
        values = rng.normal(size=length)
        trace = ParamTrace("t", tuple((i, float(v)) for i, v in enumerate(values)))
        n_train = int(rng.integers(1, length + 1))
        mean = values.mean()
        oracle_train = sorted(
            sorted(range(length), key=lambda i: (abs(values[i] - mean), i))[:n_train])
        assert select_train_frames(trace, n_train) == oracle_train
        n_test = int(rng.integers(1, length + 1))
        lo, hi = values.min(), values.max()
        targets = [lo] if n_test == 1 else \
            [lo + (hi - lo) * i / (n_test - 1) for i in range(n_test)]
        used, oracle_test = set(), []
        for t in targets:
            best = min((i for i in range(length) if i not in used),
                       key=lambda i: (abs(values[i] - t), i))
            used.add(best)
            oracle_test.append(best)
        assert select_test_frames(trace, n_test) == oracle_test
    for span, n in ((0.5, 21), (0.37, 9), (1.25, 101)):
        ks = k_grid(SweepSpec(target="yaw", span=span, n_samples=n))
        for i, k in enumerate(ks):
            assert abs(k - (-span + 2.0 * span * i / (n - 1))) <= 1e-12
    print("\n[PASS] selection oracles: 1000 random traces match brute force; "
          "k grids match the closed form to 1e-12")


def test_process_boundary_equivalence_criterion(head):
    """Diagnosis through the external wire protocol wrapping the stub is
    byte-identical to the in-process run."""
    fits = {f"id{i}": aligned_cohort_params(head, seed=i) for i in range(6)}
    spec = SweepSpec(target="yaw", span=0.5, n_samples=11)
    stub = StubBackend()
    in_proc = encode_curve(run_diagnosis(
        head, fits, spec, stub, enroll_base_renders(head, fits, stub)))
    with ExternalBackend([sys.executable, "-m", "faceprobe.stub_server"]) as wire:
        external = encode_curve(run_diagnosis(
            head, fits, spec, wire, enroll_base_renders(head, fits, wire)))
    assert in_proc == external
    print("\n[PASS] process boundary: external-protocol diagnosis CSV "
          "byte-identical to in-process run")
