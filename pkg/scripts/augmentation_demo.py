"""Dataset-construction walkthrough on synthetic traces.

Simulates per-frame fitted parameter values for a cohort (smooth random
walks), selects the mean-biased training frames and the uniform-coverage
test frames per identity, renders one sweep per identity to build an
augmented training manifest, and emits pose-balanced batches from the
reference/target deltas implied by the selections.

Usage:
    python scripts/augmentation_demo.py [--identities 6] [--frames 40]
                                        [--out-dir out/augmentation]
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from faceprobe.augment import (ParamTrace, balance_batches,
                               build_augmented_manifest, select_test_frames,
                               select_train_frames, write_augmented_manifest)
from faceprobe.sweep import SweepSpec, render_sweep
from faceprobe.synth import aligned_cohort_params, synth_head


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--identities", type=int, default=6)
    parser.add_argument("--frames", type=int, default=40)
    parser.add_argument("--train-count", type=int, default=1)
    parser.add_argument("--test-count", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default="out/augmentation")
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = synth_head(args.seed)

    # simulated per-frame yaw values: a smooth drift around each identity's base
    traces = {}
    for i in range(args.identities):
        identity = f"id{i:03d}"
        base = 0.4 + 0.2 * rng.random()
        walk = np.cumsum(rng.normal(0.0, 0.03, size=args.frames))
        values = base + walk - walk.mean()
        traces[identity] = ParamTrace(identity, tuple(
            (f, float(v)) for f, v in enumerate(values)))

    selections = {}
    for identity, trace in sorted(traces.items()):
        selections[identity] = {
            "train": select_train_frames(trace, args.train_count),
            "test": select_test_frames(trace, args.test_count),
        }
    (out_dir / "selections.json").write_text(json.dumps(selections, indent=2) + "\n")
    print(f"selected {args.train_count} train / {args.test_count} test frames "
          f"per identity ({len(traces)} identities)")

    # one yaw sweep per identity augments its single training frame
    sweep_manifests = []
    real_rows = []
    for i, identity in enumerate(sorted(traces)):
        params, camera = aligned_cohort_params(model, seed=args.seed * 1000 + i)
        spec = SweepSpec(target="yaw", span=0.5, n_samples=21)
        _, rows = render_sweep(model, params, spec, camera,
                               out_dir=out_dir / "renders", identity=identity)
        sweep_manifests.append(rows)
        real_rows.append((identity, f"video/{identity}/frame_"
                          f"{selections[identity]['train'][0]:04d}.png"))
    rows, counts = build_augmented_manifest(real_rows, sweep_manifests)
    write_augmented_manifest(rows, out_dir / "train_augmented.csv")
    print(f"augmented manifest: {len(rows)} rows "
          f"({sum(c['real'] for c in counts.values())} real, "
          f"{sum(c['synthetic'] for c in counts.values())} synthetic)")

    # pose deltas between each selected test frame and the training frame,
    # expressed in degrees of yaw
    pairs = []
    for identity, trace in sorted(traces.items()):
        values = dict(trace.frames)
        anchor = values[selections[identity]["train"][0]]
        for frame in selections[identity]["test"]:
            delta = np.degrees(values[frame] - anchor) * 4.0  # spread across bins
            delta = float(np.clip(delta, -180.0, 180.0))
            pairs.append((f"{identity}/{frame}", delta))
    batches = balance_batches(pairs, batch_size=12, seed=args.seed)
    (out_dir / "batches.json").write_text(
        json.dumps({"batch_size": 12, "batches": batches}, indent=2) + "\n")
    print(f"balanced {len(pairs)} pairs into {len(batches)} batches of 12")
    print(f"artifacts written to {out_dir}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
