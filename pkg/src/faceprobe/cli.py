"""Command-line surface for the pipeline stages.

Every command resolves its options as: explicit flags first, then the
--config JSON file, then built-in defaults. Environment variables are
never read. On failure a machine-readable JSON object is printed to
stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import augment, diagnose, losses
from .fitting import (FitConfig, FitError, LandmarkSet, fit_landmarks,
                      fit_result_from_json, fit_result_to_json,
                      landmarks_from_json, load_landmarks, save_landmarks)
from .images import write_image
from .model import (instantiate, landmarks3d, load_model, params_from_json,
                    save_model, zero_params)
from .recognize import BackendError, ExternalBackend, StubBackend
from .render import (CameraParams, LightingParams, ProjectionError, project,
                     render_mesh)
from .sweep import SweepSpec, render_sweep, write_manifest
from .synth import synth_head


@dataclass
class RunConfig:
    """Defaults shared by the pipeline commands; the --config file carries
    the same keys."""

    model: str | None = None
    landmarks: str | None = None
    out_dir: str = "out"
    span: object = 0.5            # K; a {param: K} table is also accepted
    n_samples: int = 21
    sweep_mode: str = "multiplicative"
    camera_mode: str = "weak_perspective"
    focal: float = 100.0
    width: int = 256
    height: int = 256
    principal: object = None      # None -> image center
    light_direction: object = (0.0, 0.0, -1.0)
    ambient: float = 0.3
    diffuse: float = 0.7
    backend: str = "stub"
    backend_cmd: str | None = None
    seed: int = 0


def _resolve(args: argparse.Namespace) -> dict:
    """flags > config file > RunConfig defaults."""
    options = asdict(RunConfig())
    config_path = getattr(args, "config", None)
    if config_path:
        doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
        unknown = set(doc) - set(options)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        options.update(doc)
    for key in options:
        value = getattr(args, key, None)
        if value is not None:
            options[key] = value
    return options


def _camera(options: dict) -> CameraParams:
    width, height = int(options["width"]), int(options["height"])
    principal = options["principal"]
    if principal is None:
        principal = (width / 2.0, height / 2.0)
    elif isinstance(principal, str):
        principal = tuple(float(v) for v in principal.split(","))
    else:
        principal = tuple(float(v) for v in principal)
    return CameraParams(mode=options["camera_mode"], focal=float(options["focal"]),
                        principal=principal, width=width, height=height)


def _light(options: dict) -> LightingParams:
    direction = options["light_direction"]
    if isinstance(direction, str):
        direction = tuple(float(v) for v in direction.split(","))
    else:
        direction = tuple(float(v) for v in direction)
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    return LightingParams(direction=tuple(d), ambient=float(options["ambient"]),
                          diffuse=float(options["diffuse"]))


def _span_for(options: dict, param: str) -> float:
    span = options["span"]
    if isinstance(span, dict):
        if param not in span:
            raise ValueError(f"no sweep span configured for parameter {param!r}")
        return float(span[param])
    return float(span)


def _backend(options: dict):
    if options["backend_cmd"]:
        return ExternalBackend(options["backend_cmd"])
    if options["backend"] == "stub":
        return StubBackend()
    raise ValueError(f"unknown backend {options['backend']!r} (use 'stub' or --backend-cmd)")


def _load_params(model, path):
    if path is None:
        return zero_params(model)
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "params" in doc:  # accept a fit-result file directly
        doc = doc["params"]
    return params_from_json(model, doc)


def _cmd_synth_model(args) -> int:
    options = _resolve(args)
    model = synth_head(seed=int(options["seed"]), n_shape=args.n_shape,
                       n_expression=args.n_expression)
    save_model(model, args.out)
    print(json.dumps({"model": str(args.out), "vertices": model.n_vertices,
                      "triangles": int(model.triangles.shape[0])}))
    return 0


def _cmd_oracle_landmarks(args) -> int:
    options = _resolve(args)
    model = load_model(options["model"])
    params = _load_params(model, args.params)
    camera = _camera(options)
    points = project(landmarks3d(instantiate(model, params), model), camera)
    save_landmarks(LandmarkSet(points=points, confidence=np.ones(len(points))), args.out)
    print(json.dumps({"landmarks": str(args.out)}))
    return 0


def _cmd_fit(args) -> int:
    options = _resolve(args)
    model = load_model(options["model"])
    config = FitConfig(
        max_iterations=args.max_iterations if args.max_iterations is not None else 100,
        tolerance=args.tolerance if args.tolerance is not None else 1e-12,
        shape_prior=args.shape_prior if args.shape_prior is not None else 0.1,
        expression_prior=args.expression_prior if args.expression_prior is not None else 0.1,
    )
    camera = _camera(options)
    doc = json.loads(Path(options["landmarks"]).read_text(encoding="utf-8"))
    if isinstance(doc, dict):
        # batch manifest: identity -> landmark file path; --out is a directory
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        fits_manifest = {}
        for identity in sorted(doc):
            landmarks = load_landmarks(doc[identity])
            result = fit_landmarks(model, landmarks, config=config, camera=camera)
            fit_path = out_dir / f"{identity}.json"
            fit_path.write_text(json.dumps(fit_result_to_json(model, result), indent=2) + "\n",
                                encoding="utf-8")
            fits_manifest[identity] = str(fit_path)
        manifest_path = out_dir / "fits.json"
        manifest_path.write_text(json.dumps(fits_manifest, indent=2) + "\n", encoding="utf-8")
        print(json.dumps({"fits": str(manifest_path), "count": len(fits_manifest)}))
        return 0
    landmarks = landmarks_from_json(doc)
    result = fit_landmarks(model, landmarks, config=config, camera=camera)
    Path(args.out).write_text(json.dumps(fit_result_to_json(model, result), indent=2) + "\n",
                              encoding="utf-8")
    print(json.dumps({"fit": str(args.out), "rms_error": result.rms_error,
                      "converged": result.converged}))
    return 0


def _cmd_render(args) -> int:
    options = _resolve(args)
    model = load_model(options["model"])
    params = _load_params(model, args.params)
    image = render_mesh(instantiate(model, params), _camera(options), _light(options))
    write_image(image, args.out)
    print(json.dumps({"image": str(args.out)}))
    return 0


def _cmd_sweep(args) -> int:
    options = _resolve(args)
    model = load_model(options["model"])
    params = _load_params(model, args.params)
    spec = SweepSpec(target=args.param, span=_span_for(options, args.param),
                     n_samples=int(options["n_samples"]), mode=options["sweep_mode"])
    out_dir = Path(options["out_dir"])
    import warnings
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        _, rows = render_sweep(model, params, spec, _camera(options), _light(options),
                               out_dir=out_dir, identity=args.identity)
    for w in caught:
        print(json.dumps({"warning": str(w.message)}), file=sys.stderr)
    manifest_path = out_dir / f"manifest_{args.param.replace(':', '-')}.csv"
    write_manifest(rows, manifest_path)
    print(json.dumps({"manifest": str(manifest_path), "frames": len(rows)}))
    return 0


def _cmd_diagnose(args) -> int:
    options = _resolve(args)
    model = load_model(options["model"])
    fits_doc = json.loads(Path(args.fits).read_text(encoding="utf-8"))
    fits = {}
    for identity, fit_path in sorted(fits_doc.items()):
        doc = json.loads(Path(fit_path).read_text(encoding="utf-8"))
        result = fit_result_from_json(model, doc)
        fits[identity] = (result.params, result.camera)
    spec = SweepSpec(target=args.param, span=_span_for(options, args.param),
                     n_samples=int(options["n_samples"]), mode=options["sweep_mode"])
    light = _light(options)
    out_dir = Path(options["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    backend = _backend(options)
    try:
        gallery = diagnose.enroll_base_renders(model, fits, backend, light)
        curve = diagnose.run_diagnosis(model, fits, spec, backend, gallery, light)
    finally:
        backend.close()
    safe_param = args.param.replace(":", "-")
    curve_path = out_dir / f"curve_{safe_param}.csv"
    summary_path = out_dir / f"summary_{safe_param}.json"
    diagnose.write_curve(curve, curve_path)
    diagnose.write_summary(curve, summary_path)
    print(json.dumps({"curve": str(curve_path), "summary": str(summary_path),
                      "identities": curve.identity_count}))
    return 0


def _cmd_select(args) -> int:
    options = _resolve(args)
    traces = augment.read_trace_csv(args.trace, args.param)
    if not traces:
        raise ValueError(f"no rows for parameter {args.param!r} in {args.trace}")
    out_dir = Path(options["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    train_lines = ["identity,frame"]
    test_lines = ["identity,frame"]
    for identity in sorted(traces):
        trace = traces[identity]
        for frame in augment.select_train_frames(trace, args.train_count):
            train_lines.append(f"{identity},{frame}")
        for frame in augment.select_test_frames(trace, args.test_count):
            test_lines.append(f"{identity},{frame}")
    train_path = out_dir / f"train_{args.param.replace(':', '-')}.csv"
    test_path = out_dir / f"test_{args.param.replace(':', '-')}.csv"
    train_path.write_bytes(("\n".join(train_lines) + "\n").encode("utf-8"))
    test_path.write_bytes(("\n".join(test_lines) + "\n").encode("utf-8"))
    print(json.dumps({"train": str(train_path), "test": str(test_path),
                      "identities": len(traces)}))
    return 0


def _cmd_balance(args) -> int:
    options = _resolve(args)
    pairs = augment.read_pairs_csv(args.pairs)
    batches = augment.balance_batches(pairs, args.batch_size, seed=int(options["seed"]),
                                      n_batches=args.num_batches)
    doc = {"batch_size": args.batch_size, "seed": int(options["seed"]), "batches": batches}
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"batches": str(args.out), "count": len(batches)}))
    return 0


def _cmd_eval_loss(args) -> int:
    components = json.loads(Path(args.components).read_text(encoding="utf-8"))
    if args.weights:
        wdoc = json.loads(Path(args.weights).read_text(encoding="utf-8"))
        weights = losses.LossWeights(**wdoc)
    else:
        weights = losses.LossWeights()
    total = losses.total_objective(components, weights)
    print(json.dumps({"total": total}))
    return 0


def _add_common(parser: argparse.ArgumentParser, *, camera=False, light=False) -> None:
    parser.add_argument("--config", help="JSON file with RunConfig keys")
    parser.add_argument("--seed", type=int)
    if camera:
        parser.add_argument("--camera-mode", dest="camera_mode",
                            choices=["weak_perspective", "pinhole"])
        parser.add_argument("--focal", type=float)
        parser.add_argument("--width", type=int)
        parser.add_argument("--height", type=int)
        parser.add_argument("--principal", help="cx,cy in pixels")
    if light:
        parser.add_argument("--light-direction", dest="light_direction", help="x,y,z")
        parser.add_argument("--ambient", type=float)
        parser.add_argument("--diffuse", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faceprobe",
        description="Head-model fitting, controlled renders, and recognition bias probes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-model", help="write a seeded synthetic head model")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-shape", type=int, default=4)
    p.add_argument("--n-expression", type=int, default=5)
    p.set_defaults(func=_cmd_synth_model)

    p = sub.add_parser("oracle-landmarks",
                       help="project a model's landmarks to 2D (self-contained test data)")
    _add_common(p, camera=True)
    p.add_argument("--model")
    p.add_argument("--params", help="ModelParams JSON or fit-result JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_oracle_landmarks)

    p = sub.add_parser("fit", help="recover parameters and camera from 2D landmarks")
    _add_common(p, camera=True)
    p.add_argument("--model")
    p.add_argument("--landmarks")
    p.add_argument("--out", required=True)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--shape-prior", dest="shape_prior", type=float)
    p.add_argument("--expression-prior", dest="expression_prior", type=float)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("render", help="render one parameter set to PGM/PPM")
    _add_common(p, camera=True, light=True)
    p.add_argument("--model")
    p.add_argument("--params")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("sweep", help="render a (1+k) grid over one parameter")
    _add_common(p, camera=True, light=True)
    p.add_argument("--model")
    p.add_argument("--params")
    p.add_argument("--param", required=True)
    p.add_argument("--identity", default="id0")
    p.add_argument("--span", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--sweep-mode", dest="sweep_mode",
                   choices=["multiplicative", "additive"])
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("diagnose", help="accuracy-vs-k response curve over a cohort")
    _add_common(p, light=True)
    p.add_argument("--model")
    p.add_argument("--fits", required=True, help="JSON map identity -> fit-result path")
    p.add_argument("--param", required=True)
    p.add_argument("--span", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--sweep-mode", dest="sweep_mode",
                   choices=["multiplicative", "additive"])
    p.add_argument("--backend", choices=["stub"])
    p.add_argument("--backend-cmd", dest="backend_cmd")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("select", help="mean-biased train and uniform test manifests")
    _add_common(p)
    p.add_argument("--trace", required=True, help="CSV identity,frame,param,value")
    p.add_argument("--param", required=True)
    p.add_argument("--train-count", dest="train_count", type=int, default=1)
    p.add_argument("--test-count", dest="test_count", type=int, default=10)
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("balance", help="pose-binned balanced batches from pair deltas")
    _add_common(p)
    p.add_argument("--pairs", required=True, help="CSV pair,delta_deg")
    p.add_argument("--batch-size", dest="batch_size", type=int, required=True)
    p.add_argument("--num-batches", dest="num_batches", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_balance)

    p = sub.add_parser("eval-loss", help="audit the total training objective")
    p.add_argument("--components", required=True, help="JSON of the eight component values")
    p.add_argument("--weights", help="JSON overriding LossWeights fields")
    p.set_defaults(func=_cmd_eval_loss)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError, FitError,
            BackendError, ProjectionError, diagnose.DiagnosisError) as exc:
        print(json.dumps({"error": str(exc), "kind": type(exc).__name__}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
