"""Command line front end: ``pcr register`` and ``pcr synth``."""

from __future__ import annotations

import argparse
import sys

from . import filters, icp, relpose, synth
from .errors import StageError
from .pipeline import PipelineConfig, run_pipeline


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcr",
        description="Register two sparse 3D point clouds that may differ by "
                    "an unknown scale; emits a report with the transform and "
                    "the pose information matrix.")
    sub = parser.add_subparsers(dest="command", required=True)

    reg = sub.add_parser("register", help="run the registration pipeline")
    reg.add_argument("--source", required=True, help="source cloud (PLY)")
    reg.add_argument("--target", required=True, help="target cloud (PLY)")
    reg.add_argument("--matches", help="keypoint matches CSV (us,vs,ds,ut,vt,dt)")
    reg.add_argument("--intrinsics-source", help="source camera intrinsics JSON")
    reg.add_argument("--intrinsics-target", help="target camera intrinsics JSON")
    reg.add_argument("--out", required=True, help="report JSON output path")
    reg.add_argument("--transformed", help="write the transformed source cloud here")
    reg.add_argument("--crop-fraction", type=float, default=0.25)
    reg.add_argument("--no-filter", action="store_true",
                     help="skip the crop and remote-point filters")
    reg.add_argument("--no-scale", action="store_true",
                     help="skip scale estimation even when a gap is detected")
    reg.add_argument("--sigma-z", type=float, default=0.01,
                     help="assumed per-coordinate sensor noise std")
    reg.add_argument("--seed", type=int, default=42)
    reg.add_argument("--max-icp-iters", type=int, default=100)
    reg.add_argument("--ransac-psi", type=float, default=1.0,
                     help="RANSAC pixel threshold")
    reg.add_argument("--ransac-iters", type=int, default=1000)
    reg.add_argument("--corr-cap", type=int, default=2000,
                     help="max correspondences used for the covariance")

    syn = sub.add_parser("synth", help="generate a synthetic test scene")
    syn.add_argument("--scale", type=float, default=2.5)
    syn.add_argument("--rot-deg", type=float, default=15.0)
    syn.add_argument("--points", type=int, default=2000)
    syn.add_argument("--noise", type=float, default=0.005)
    syn.add_argument("--outliers", type=float, default=0.0)
    syn.add_argument("--matches", type=int, default=200)
    syn.add_argument("--seed", type=int, default=7)
    syn.add_argument("--out-dir", required=True)
    return parser


def _register(args) -> int:
    cfg = PipelineConfig(
        source=args.source,
        target=args.target,
        matches=args.matches,
        intrinsics_source=args.intrinsics_source,
        intrinsics_target=args.intrinsics_target,
        report_path=args.out,
        transformed_path=args.transformed,
        ransac=relpose.RansacConfig(pixel_threshold=args.ransac_psi,
                                    max_iterations=args.ransac_iters,
                                    seed=args.seed),
        filter_cfg=filters.FilterConfig(crop_fraction=args.crop_fraction),
        icp_cfg=icp.IcpConfig(max_iterations=args.max_icp_iters),
        sigma_z=args.sigma_z,
        correspondence_cap=args.corr_cap,
        seed=args.seed,
        apply_filters=not args.no_filter,
        use_scale=not args.no_scale,
    )
    try:
        report = run_pipeline(cfg)
    except StageError as exc:
        print(f"pcr: error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return exc.exit_code
    detected = "yes" if report.scale_detected else "no"
    print(f"scale detected: {detected}  scale: {report.scale:.6g}  "
          f"rms: {report.rms:.6g}  iterations: {report.iterations}")
    print(f"report written to {args.out}")
    return 0


def _synth(args) -> int:
    spec = synth.SynthSpec(scale=args.scale, rotation_deg=args.rot_deg,
                           points=args.points, noise=args.noise,
                           outlier_fraction=args.outliers,
                           match_count=args.matches, seed=args.seed)
    paths = synth.generate_synthetic(spec, args.out_dir)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "register":
        return _register(args)
    return _synth(args)


if __name__ == "__main__":
    sys.exit(main())
