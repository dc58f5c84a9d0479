"""Command line entry point.

Subcommands cover the full loop: synthesize a dataset, fit it, then render,
compute flow, extract mesh and skeleton, export a viewer bundle, and report
camera azimuth coverage.  Options come from defaults, overridden by a JSON
`--config` file, overridden by explicit flags; `--print-config` dumps the
effective configuration and exits.

Exit codes: 0 success, 2 configuration or parse errors, 3 numerical aborts,
4 empty results (e.g. a field with no surface).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

import numpy as np

from .autodiff import value
from .bundle import BundleFormatError
from .fields import FieldConfig
from .fitting import DatasetError, FitConfig, fit, load_fitted
from .images import ImageFormatError, write_f32
from .losses import LossWeights
from .meshing import ObjFormatError, write_obj
from .optim import NonFiniteLossError
from .params import CheckpointError
from .pipeline import (azimuth_coverage, export_fitted_bundle, extract_mesh,
                       extract_skinned, flow_field, render_frame)
from .rendering import DegenerateFlowError
from .scene import SyntheticSceneSpec, synth_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_EMPTY = 4


def _load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ValueError(f"config file is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    return doc


def _scene_spec(doc: dict) -> SyntheticSceneSpec:
    doc = dict(doc)
    if "drift" in doc:
        doc["drift"] = tuple(doc["drift"])
    try:
        return SyntheticSceneSpec(**doc)
    except TypeError as e:
        raise ValueError(f"bad scene config: {e}") from e


def _fit_config(doc: dict) -> FitConfig:
    doc = dict(doc)
    try:
        weights = LossWeights(**doc.pop("weights", {}))
        fcfg = FieldConfig(**doc.pop("field", {}))
        return FitConfig(weights=weights, field=fcfg, **doc)
    except TypeError as e:
        raise ValueError(f"bad fit config: {e}") from e


def _merged_config(args) -> dict:
    return _load_config_file(args.config) if args.config else {}


def _print_config(cfg) -> int:
    print(json.dumps(asdict(cfg), indent=2))
    return EXIT_OK


def _require_out(args):
    if args.out is None:
        raise ValueError("--out is required")
    return args.out


def cmd_synth(args) -> int:
    doc = _merged_config(args)
    if args.seed is not None:
        doc["seed"] = args.seed
    spec = _scene_spec(doc)
    if args.print_config:
        return _print_config(spec)
    out = synth_dataset(spec, _require_out(args))
    print(f"wrote {spec.n_frames} frames under {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    doc = _merged_config(args)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.steps is not None:
        doc["steps"] = args.steps
    cfg = _fit_config(doc)
    if args.print_config:
        return _print_config(cfg)
    if args.dataset is None:
        raise ValueError("a dataset directory is required")
    out = _require_out(args)
    _, trace = fit(args.dataset, cfg, out_dir=out)
    last = trace[-1]["total"] if trace else float("nan")
    print(f"fit {cfg.steps} steps, final total {last:.6g}; "
          f"checkpoint under {out}")
    return EXIT_OK


def _resolved(args, doc: dict, key: str, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    return doc.get(key, default)


def cmd_render(args) -> int:
    doc = _merged_config(args)
    fitted = load_fitted(args.checkpoint)
    samples = int(_resolved(args, doc, "samples", 64))
    stem = render_frame(fitted, args.frame, _require_out(args),
                        n_samples=samples, pair=args.pair)
    print(f"wrote {stem}.rgb.ppm")
    return EXIT_OK


def cmd_flow(args) -> int:
    doc = _merged_config(args)
    fitted = load_fitted(args.checkpoint)
    samples = int(_resolved(args, doc, "samples", 64))
    flow = flow_field(fitted, args.frame, args.to, n_samples=samples)
    out = _require_out(args)
    write_f32(out, flow)
    print(f"wrote {out} (max |flow| {np.abs(flow).max():.3f} px)")
    return EXIT_OK


def _mesh_opts(args, doc):
    return {
        "resolution": int(_resolved(args, doc, "resolution", 64)),
        "bound": float(_resolved(args, doc, "bound", 1.0)),
        "threshold": int(_resolved(args, doc, "threshold", 3)),
    }


def cmd_mesh(args) -> int:
    doc = _merged_config(args)
    opts = _mesh_opts(args, doc)
    fitted = load_fitted(args.checkpoint)
    mesh = extract_mesh(fitted, resolution=opts["resolution"],
                        bound=opts["bound"])
    if mesh.is_empty():
        print("empty mesh: the field has no zero crossing inside the bounds",
              file=sys.stderr)
        return EXIT_EMPTY
    write_obj(mesh, _require_out(args))
    print(f"wrote {args.out}: {len(mesh.vertices)} vertices, "
          f"{len(mesh.faces)} faces")
    return EXIT_OK


def cmd_skeleton(args) -> int:
    doc = _merged_config(args)
    opts = _mesh_opts(args, doc)
    fitted = load_fitted(args.checkpoint)
    skinned, skeleton = extract_skinned(fitted, **opts)
    if skinned is None:
        print("empty mesh: no skeleton to extract", file=sys.stderr)
        return EXIT_EMPTY
    out = _require_out(args)
    with open(out, "w") as fh:
        json.dump({"n_bones": skinned.n_bones,
                   "edges": skeleton.edges.tolist(),
                   "counts": skeleton.counts.tolist()}, fh)
    print(f"wrote {out}: {len(skeleton.edges)} edges over "
          f"{skinned.n_bones} bones")
    return EXIT_OK


def cmd_export_bundle(args) -> int:
    doc = _merged_config(args)
    opts = _mesh_opts(args, doc)
    fitted = load_fitted(args.checkpoint)
    out = _require_out(args)
    bundle = export_fitted_bundle(fitted, out, **opts)
    if bundle is None:
        print("empty mesh: nothing to bundle", file=sys.stderr)
        return EXIT_EMPTY
    print(f"wrote {out}: {len(bundle.vertices)} vertices, "
          f"{bundle.n_bones} bones, {len(bundle.skeleton_edges)} edges")
    return EXIT_OK


def cmd_coverage(args) -> int:
    fitted = load_fitted(args.checkpoint)
    ratio, occupancy = azimuth_coverage(value(fitted.seq.cam_quats))
    doc = {"ratio": ratio, "occupied": int(np.count_nonzero(occupancy)),
           "bins": occupancy}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh)
    print(json.dumps(doc))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="override config seed")
    common.add_argument("--out", help="output path or directory")

    p = argparse.ArgumentParser(prog="artirig",
                                description="Deformable implicit-shape "
                                            "reconstruction toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", parents=[common],
                        help="render a synthetic articulated dataset")
    sp.add_argument("--print-config", action="store_true")
    sp.set_defaults(func=cmd_synth)

    fp = sub.add_parser("fit", parents=[common],
                        help="fit field, bones, and motion to a dataset")
    fp.add_argument("dataset", nargs="?", help="dataset directory")
    fp.add_argument("--steps", type=int, help="override optimization steps")
    fp.add_argument("--print-config", action="store_true")
    fp.set_defaults(func=cmd_fit)

    rp = sub.add_parser("render", parents=[common],
                        help="render rgb/silhouette for a frame")
    rp.add_argument("checkpoint")
    rp.add_argument("--frame", type=int, required=True)
    rp.add_argument("--pair", type=int, help="also write flow to this frame")
    rp.add_argument("--samples", type=int)
    rp.set_defaults(func=cmd_render)

    lp = sub.add_parser("flow", parents=[common],
                        help="optical flow between two frames")
    lp.add_argument("checkpoint")
    lp.add_argument("--frame", type=int, required=True)
    lp.add_argument("--to", type=int, required=True)
    lp.add_argument("--samples", type=int)
    lp.set_defaults(func=cmd_flow)

    for name, fn, extra in (("mesh", cmd_mesh, "canonical surface as OBJ"),
                            ("skeleton", cmd_skeleton,
                             "bone connectivity as JSON"),
                            ("export-bundle", cmd_export_bundle,
                             "mesh + skinning + skeleton bundle")):
        mp = sub.add_parser(name, parents=[common], help=extra)
        mp.add_argument("checkpoint")
        mp.add_argument("--resolution", type=int)
        mp.add_argument("--bound", type=float)
        mp.add_argument("--threshold", type=int)
        mp.set_defaults(func=fn)

    cp = sub.add_parser("coverage", parents=[common],
                        help="camera azimuth bin occupancy")
    cp.add_argument("checkpoint")
    cp.set_defaults(func=cmd_coverage)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (NonFiniteLossError, DegenerateFlowError) as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DatasetError, CheckpointError, BundleFormatError, ObjFormatError,
            ImageFormatError, ValueError, IndexError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
