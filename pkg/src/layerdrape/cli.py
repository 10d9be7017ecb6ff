"""Command-line pipeline: body generation, draping, untangling, gradient
checks, and report rendering.

Verbs:
  gen-body   write a procedural rigged body as JSON
  drape      single-drape every configured garment, write OBJ meshes + report
  untangle   drape, stack, untangle, resolve penetrations, write OBJ + report
  gradcheck  finite-difference audit of the analytic gradients
  report     render a saved report as text tables, CSV, and figures

Progress streams to stderr as key=value lines; result files land in the
output directory; stdout carries only the report/gradcheck tables. Exit
codes: 0 success, 2 bad configuration, 3 I/O or parse failure, 4 solver
divergence, 5 validation failure (including a failed gradient check).
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time

from .errors import (
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
    ConfigError,
    MeshError,
    ObjParseError,
    RigError,
    SolverDivergence,
    ValidationError,
)

logger = logging.getLogger(__name__)

# BLAS pools size themselves when numpy first loads, so --threads has to land
# in the environment before any numeric module is imported; every command
# handler therefore imports the heavy modules lazily.
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

_GLOBAL_FLAGS = [
    ("--config", {"help": "pipeline config JSON (drape/untangle)"}),
    ("--out", {"help": "output directory; overrides the config's out_dir"}),
    ("--seed", {"type": int, "default": 0, "help": "fixture seed (gradcheck)"}),
    ("--threads", {"type": int, "default": None,
                   "help": "cap the numeric thread pools"}),
]


def build_parser() -> argparse.ArgumentParser:
    # the shared flags are defined twice: once on the root parser (usable
    # before the verb) and once, defaulting to SUPPRESS, on each subcommand
    # (usable after the verb without clobbering values the root already set)
    common = argparse.ArgumentParser(add_help=False)
    for flag, kwargs in _GLOBAL_FLAGS:
        common.add_argument(flag, **dict(kwargs, default=argparse.SUPPRESS))
    parser = argparse.ArgumentParser(
        prog="layerdrape",
        description="Quasi-static draping and untangling of layered garments.",
    )
    for flag, kwargs in _GLOBAL_FLAGS:
        parser.add_argument(flag, **kwargs)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-body", parents=[common],
                       help="generate the procedural rigged body")
    p.add_argument("--scale-shapes", type=int, default=2,
                   help="number of shape directions on the body (1-3)")
    p.add_argument("--grid-spacing", type=float, default=None,
                   help="marching-cubes grid spacing in meters")

    sub.add_parser("drape", parents=[common],
                   help="single-drape each configured garment")
    sub.add_parser("untangle", parents=[common],
                   help="drape, untangle the stack, resolve penetrations")

    p = sub.add_parser("gradcheck", parents=[common],
                       help="compare analytic and finite-difference gradients")
    p.add_argument("--term", action="append", default=None,
                   help="energy term to check (repeatable; default all)")
    p.add_argument("--size", type=int, default=80,
                   help="approximate vertex count of the check fixtures")
    p.add_argument("--step", type=float, default=1e-6,
                   help="central-difference step")

    p = sub.add_parser("report", parents=[common],
                       help="render a saved report file")
    p.add_argument("report_path", help="report JSON produced by drape/untangle")
    p.add_argument("--format", choices=("text", "structured"), default="text",
                   help="text tables (plus CSV/figures) or canonical JSON")
    return parser


# ---------------------------------------------------------------------------
# Shared pipeline setup.
# ---------------------------------------------------------------------------

def _pipeline(args):
    import numpy as np

    from .config import load_config
    from .mesh import load_obj
    from .solver import Garment

    if args.config is None:
        raise ConfigError("this command needs --config <file>")
    cfg = load_config(args.config)
    if args.out is not None:
        cfg.out_dir = args.out
    body = cfg.load_rigged_body()
    if cfg.shape.size == 0:
        cfg.shape = np.zeros(body.num_shape_dirs)
    elif cfg.shape.shape != (body.num_shape_dirs,):
        raise ConfigError(
            f"shape has {cfg.shape.size} coefficients, body has {body.num_shape_dirs}"
        )
    pose = cfg.pose_for(body)
    garments = [
        Garment.prepare(
            spec.name, load_obj(spec.mesh_path), body,
            material=cfg.garment_material(spec), held=spec.held,
        )
        for spec in cfg.garments
    ]
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg, body, pose, garments


def _posed_body_mesh(body, beta, pose):
    from .mesh import TriangleMesh
    from .rig import forward_kinematics, lbs, shape_body

    shaped_verts, shaped_joints = shape_body(body, beta)
    rt = forward_kinematics(body, shaped_joints, pose)
    return TriangleMesh(lbs(shaped_verts, body.weights, rt), body.mesh.faces)


# ---------------------------------------------------------------------------
# Verbs.
# ---------------------------------------------------------------------------

def cmd_gen_body(args) -> int:
    from .rig import ToyBodyConfig, generate_toy_body, save_body

    kwargs = {"num_shape_dirs": args.scale_shapes}
    if args.grid_spacing is not None:
        kwargs["grid_spacing"] = args.grid_spacing
    body = generate_toy_body(ToyBodyConfig(**kwargs))
    out_dir = args.out if args.out is not None else "."
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "body.json")
    save_body(path, body)
    logger.info(
        "verb=gen-body vertices=%d joints=%d shape_dirs=%d file=%s",
        body.mesh.num_vertices, body.num_joints, body.num_shape_dirs, path,
    )
    return EXIT_OK


def cmd_drape(args) -> int:
    from .mesh import TriangleMesh, save_obj
    from .postprocess import EnergyReport, count_records, detect_penetrations
    from .report import write_report
    from .solver import LayerStack, drape_single, posed_state

    cfg, body, pose, garments = _pipeline(args)
    posed_body = _posed_body_mesh(body, cfg.shape, pose)
    names, terms, objectives, phase_ms, records = [], [], [], {}, []
    for spec, garment in zip(cfg.garments, garments):
        out, rep = drape_single(garment, body, cfg.shape, pose, cfg.solver, cfg.weights)
        posed = posed_state(out, body, cfg.shape, pose)
        save_obj(
            os.path.join(cfg.out_dir, f"{spec.name}_single.obj"),
            TriangleMesh(posed, out.mesh.faces),
        )
        names.append(spec.name)
        terms.append(rep.terms[0])
        objectives.append(rep.objectives[0])
        phase_ms.update(rep.phase_ms)
        records.extend(detect_penetrations(LayerStack([out], [posed]), posed_body))
    report = EnergyReport(
        garment_names=names, terms=terms, objectives=objectives,
        counts=count_records(records), phase_ms=phase_ms,
    )
    path = os.path.join(cfg.out_dir, "report.json")
    write_report(path, report)
    logger.info("verb=drape garments=%d out=%s", len(names), cfg.out_dir)
    return EXIT_OK


def cmd_untangle(args) -> int:
    from .mesh import TriangleMesh, save_obj
    from .postprocess import EnergyReport, count_records, resolve_penetrations
    from .report import write_report
    from .solver import LayerStack, drape_single, untangle

    cfg, body, pose, garments = _pipeline(args)
    posed_body = _posed_body_mesh(body, cfg.shape, pose)
    draped, single_strains, phase_ms = [], [], {}
    for garment in garments:
        out, rep = drape_single(garment, body, cfg.shape, pose, cfg.solver, cfg.weights)
        draped.append(out)
        single_strains.append(rep.terms[0]["strain"])
        phase_ms.update(rep.phase_ms)
    stack, urep = untangle(
        LayerStack(draped), body, cfg.shape, pose, cfg.solver, cfg.weights
    )
    phase_ms.update(urep.phase_ms)
    t0 = time.perf_counter()
    stack, residuals = resolve_penetrations(stack, posed_body)
    phase_ms["postprocess"] = 1e3 * (time.perf_counter() - t0)
    for spec, garment, posed in zip(cfg.garments, stack.garments, stack.posed):
        save_obj(
            os.path.join(cfg.out_dir, f"{spec.name}_layer{spec.layer}.obj"),
            TriangleMesh(posed, garment.mesh.faces),
        )
    ratios = [
        math.nan if s == 0.0 else urep.terms[i]["strain"] / s
        for i, s in enumerate(single_strains)
    ]
    report = EnergyReport(
        garment_names=list(urep.garment_names),
        terms=urep.terms,
        objectives=urep.objectives,
        counts=count_records(residuals),
        strain_ratios=[ratios],
        residuals=residuals,
        phase_ms=phase_ms,
    )
    path = os.path.join(cfg.out_dir, "report.json")
    write_report(path, report)
    logger.info(
        "verb=untangle garments=%d residuals=%d out=%s",
        len(stack.garments), len(residuals), cfg.out_dir,
    )
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    results = run_gradcheck(args.term, args.size, args.seed, args.step)
    for r in results:
        print(
            f"term={r.term} max_rel_error={r.max_rel_error:.6e} "
            f"threshold={r.threshold:g} status={'pass' if r.passed else 'FAIL'}"
        )
    print(f"worst={max(r.max_rel_error for r in results):.6e}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def cmd_report(args) -> int:
    from .report import dumps, format_text, load_report, write_csv, write_figures

    report = load_report(args.report_path)
    if args.format == "structured":
        sys.stdout.write(dumps(report))
        return EXIT_OK
    sys.stdout.write(format_text(report))
    out_dir = args.out
    if out_dir is None:
        out_dir = os.path.dirname(os.path.abspath(args.report_path))
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "report.csv")
    write_csv(csv_path, report)
    figures = write_figures(out_dir, report)
    logger.info("verb=report csv=%s figures=%s", csv_path, ",".join(figures))
    return EXIT_OK


_COMMANDS = {
    "gen-body": cmd_gen_body,
    "drape": cmd_drape,
    "untangle": cmd_untangle,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be at least 1", file=sys.stderr)
            return EXIT_CONFIG
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ObjParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SolverDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        for key, value in sorted(exc.diagnostics.items()):
            print(f"  {key}={value}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValidationError, MeshError, RigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
