"""Command-line pipeline driver.

Subcommands: sample, persist, mesh, sweep, counterexample, wedge, serve.
A declarative config file (key=value) provides defaults; flags override.
Exit codes: 0 success, 1 internal error, 2 bad input.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys

import numpy as np

from . import geometry, grid, mesher, persistence, theory
from .config import ConfigError, RunConfig, apply_overrides, load_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_BAD_INPUT = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vfmesh", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, geometry_needed=True):
        p.add_argument("--config", help="key=value config file")
        if geometry_needed:
            p.add_argument("--geometry", help="input geometry file")
            p.add_argument("--format", choices=geometry.FORMATS)
            p.add_argument("--cell-size", dest="cell_size", type=float)
            p.add_argument("--rotation", type=float, help="grid rotation, radians")
            p.add_argument("--offset", type=_parse_offset, help="lattice offset x,y")
            p.add_argument("--padding", type=int)
            p.add_argument("--samples", type=int, help="samples per axis (even)")

    p = sub.add_parser("sample", help="compute the volume-fraction field")
    common(p)
    p.add_argument("--report-boundary", dest="report_boundary", action="store_true",
                   default=None)
    p.add_argument("--out", required=True, help="field CSV path")

    p = sub.add_parser("persist", help="persistence diagram and Betti curve")
    common(p)
    p.add_argument("--diagram-csv", required=True)
    p.add_argument("--diagram-svg")
    p.add_argument("--betti-csv")

    p = sub.add_parser("mesh", help="extract and repair a threshold mesh")
    common(p)
    p.add_argument("--threshold", type=float)
    p.add_argument("--antialias", choices=("off", "pinch", "full"))
    p.add_argument("--min-cells", dest="min_cells", type=int)
    p.add_argument("--conflict-policy", dest="conflict_policy",
                   choices=("connect", "separate", "majority"))
    p.add_argument("--mesh-out", required=True)
    p.add_argument("--mesh-format", choices=("obj", "vtk-legacy"), default="obj")
    p.add_argument("--report-out")

    p = sub.add_parser("sweep", help="gap-resolution regime sweep")
    p.add_argument("--ell", type=float, default=1.0)
    p.add_argument("--l-min", type=float, default=0.05)
    p.add_argument("--l-max", type=float, default=1.2)
    p.add_argument("--l-count", type=int, default=128)
    p.add_argument("--theta-count", type=int, default=64)
    p.add_argument("--offset-count", type=int, default=64)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--antialias", action="store_true")
    p.add_argument("--out", required=True, help="per-sample CSV")
    p.add_argument("--bands-out", help="band summary JSON")

    p = sub.add_parser("counterexample", help="grid-refinement non-convergence")
    p.add_argument("--corner", choices=("1/3", "2/3"), default="2/3")
    p.add_argument("--levels", type=int, default=6)
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--out", required=True, help="per-level CSV")

    p = sub.add_parser("wedge", help="small-angle wedge archipelago audit")
    p.add_argument("--alpha-deg", type=float, default=5.0)
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--min-cells", type=int, default=3)
    p.add_argument("--out", required=True, help="report JSON")

    p = sub.add_parser("serve", help="threshold-explorer HTTP service")
    common(p)
    p.add_argument("--threshold", type=float)
    p.add_argument("--antialias", choices=("off", "pinch", "full"))
    p.add_argument("--min-cells", dest="min_cells", type=int)
    p.add_argument("--conflict-policy", dest="conflict_policy",
                   choices=("connect", "separate", "majority"))
    p.add_argument("--port", type=int)
    p.add_argument("--ui-dir", help="static assets directory")
    return parser


def _parse_offset(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("offset needs 'x,y'")
    return (float(parts[0]), float(parts[1]))


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    cfg = apply_overrides(cfg, args)
    cfg.validate()
    if not cfg.geometry:
        raise ConfigError("no geometry file given (flag --geometry or config)")
    return cfg


def _field_from_config(cfg: RunConfig):
    soup = geometry.load_geometry(cfg.geometry, cfg.format)
    g = grid.build_grid(soup, cfg.cell_size, rotation=cfg.rotation,
                        offset=cfg.offset, padding=cfg.padding)
    field = grid.compute_field(soup, g, cfg.samples,
                               report_boundary=cfg.report_boundary)
    return soup, field


def cmd_sample(args) -> int:
    cfg = _config_from_args(args)
    soup, field = _field_from_config(cfg)
    field.dump_csv(args.out)
    logger.info("field: %s cells, %d dropped elements, %d boundary hits",
                field.cells.shape, soup.dropped, field.boundary_hits)
    print(f"wrote {args.out}: {field.cells.size} cells, "
          f"{field.boundary_hits} on-boundary samples")
    return EXIT_OK


def _diagram_from_field(field):
    if field.dimension == 2:
        cx = persistence.dualize_2d(field)
    else:
        cx = persistence.dualize_3d(field)
    return persistence.compute_diagram(cx)


def cmd_persist(args) -> int:
    cfg = _config_from_args(args)
    _, field = _field_from_config(cfg)
    dgm = _diagram_from_field(field)
    persistence.export_diagram_csv(dgm, args.diagram_csv)
    if args.diagram_svg:
        persistence.export_diagram_svg(dgm, args.diagram_svg)
    if args.betti_csv:
        curve = persistence.betti_curve(dgm, field.max_value())
        persistence.export_betti_curve_csv(curve, args.betti_csv)
    print(f"wrote {args.diagram_csv}: {len(dgm.pairs)} pairs")
    return EXIT_OK


def cmd_mesh(args) -> int:
    cfg = _config_from_args(args)
    _, field = _field_from_config(cfg)
    if cfg.antialias == "off":
        mesh = mesher.extract_mesh(field, cfg.threshold)
        pinches = [mesher.classify_pinch(p, field, cfg.threshold)
                   for p in mesher.detect_pinches(mesh)]
        _, n = (mesh.component_labels() if field.dimension == 2
                else mesh.pre_repair_labels())
        sizes = sorted((len(c) for c in mesh.component_cells().values()), reverse=True)
        report = mesher.RepairReport(pinches, n, n, 0, sizes, sizes)
    else:
        mesh, report = mesher.repair_mesh(
            field, cfg.threshold, conflict_policy=cfg.conflict_policy,
            join=cfg.antialias == "full",
            min_cells=cfg.min_cells if cfg.antialias == "full" else 1)
    mesher.export_mesh(mesh, args.mesh_out, args.mesh_format)
    if args.report_out:
        mesher.write_repair_report(report, args.report_out)
    print(f"wrote {args.mesh_out}: components {report.components_before} -> "
          f"{report.components_after}, {len(report.pinches)} pinch(es)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    L_values = np.linspace(args.l_min, args.l_max, args.l_count) * args.ell
    thetas = np.linspace(theory.THETA_LO, theory.THETA_HI, args.theta_count)
    offsets = (np.arange(args.offset_count) + 0.37) / args.offset_count * args.ell
    rep = theory.sweep_gap(args.ell, L_values, thetas, offsets, s=args.samples,
                           with_antialiasing=args.antialias)
    rep.write_csv(args.out)
    if args.bands_out:
        rep.write_band_json(args.bands_out)
    print(f"wrote {args.out}: bands {rep.band_summary()}")
    return EXIT_OK


def cmd_counterexample(args) -> int:
    corner = 1.0 / 3.0 if args.corner == "1/3" else 2.0 / 3.0
    rows = theory.nonconvergence_case(corner, args.levels, s=args.samples)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("level,ell,b0,corner_vf,corner_rel_x\n")
        for r in rows:
            fh.write(f"{r['level']},{r['ell']:.12g},{r['b0']},"
                     f"{r['corner_vf']:.12g},{r['corner_rel_x']:.12g}\n")
    seq = [r["b0"] for r in rows]
    print(f"wrote {args.out}: component counts {seq}")
    return EXIT_OK


def cmd_wedge(args) -> int:
    res = theory.wedge_case(math.radians(args.alpha_deg), s=args.samples,
                            min_cells=args.min_cells)
    theory.write_wedge_json(res, args.out)
    print(f"wrote {args.out}: {res['island_count']} island(s), "
          f"{res['components_after']} component(s) after repair")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .server import ExplorerState, serve

    cfg = _config_from_args(args)
    _, field = _field_from_config(cfg)
    dgm = _diagram_from_field(field)
    state = ExplorerState(field, dgm, cfg.geometry, antialias=cfg.antialias,
                          conflict_policy=cfg.conflict_policy,
                          min_cells=cfg.min_cells)
    server = serve(state, cfg.port, args.ui_dir)
    print(f"serving on http://127.0.0.1:{cfg.port} (Ctrl-C to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "persist": cmd_persist,
    "mesh": cmd_mesh,
    "sweep": cmd_sweep,
    "counterexample": cmd_counterexample,
    "wedge": cmd_wedge,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, geometry.GeometryError, grid.GridError,
            mesher.MeshError, theory.RegimeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
