"""Command-line front end.

Subcommands drive the library modules from flat INI configs and write
CSV outputs plus a reproducibility manifest next to each output.  Exit
codes: 0 success, 2 config error, 3 coverage/domain error, 4
certification failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from . import config as cfgmod
from .beta import beta_p_surface, gamma_p, write_beta_csv
from .charflow import CoverageError, EmptyCurveError, export_curve_csv, trace
from .config import ConfigError
from .graphs import CertificationError, OutOfDomainError, graph_map
from .multiscale import CarlesonSpec, carleson_integral
from .patchwork import (
    PatchworkParams,
    build_patchwork,
    carleson_check,
    lp_approx_check,
    partition_report,
    serialize_tree,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COVERAGE = 3
EXIT_CERTIFICATION = 4


def _float_list(raw: str):
    return [float(tok) for tok in raw.replace(",", " ").split()]


def cmd_beta(cfg, out_prefix: str, config_path) -> int:
    started = time.time()
    G = cfgmod.graph_from_run_config(cfg)
    sec = "beta"
    p_values = _float_list(cfgmod.require(cfg, sec, "p"))
    x0 = cfgmod.get_float(cfg, sec, "x0")
    x1 = cfgmod.get_float(cfg, sec, "x1")
    nx = cfgmod.get_int(cfg, sec, "nx", 4)
    z0 = cfgmod.get_float(cfg, sec, "z0")
    z1 = cfgmod.get_float(cfg, sec, "z1")
    nz = cfgmod.get_int(cfg, sec, "nz", 4)
    r0 = cfgmod.get_float(cfg, sec, "r0")
    r1 = cfgmod.get_float(cfg, sec, "r1")
    nr = cfgmod.get_int(cfg, sec, "nr", 4)
    grid = (cfgmod.get_int(cfg, sec, "grid_nx", 64), cfgmod.get_int(cfg, sec, "grid_nz", 64))
    estimator = cfg.get(sec, "estimator", fallback="gamma")
    if estimator not in ("gamma", "beta-surface", "both"):
        raise ConfigError("estimator must be gamma, beta-surface or both")

    xs = np.linspace(x0, x1, nx)
    zs = np.linspace(z0, z1, nz)
    radii = np.geomspace(r0, r1, nr)
    samples = []
    for x in xs:
        for z in zs:
            for r in radii:
                for p in p_values:
                    if estimator in ("gamma", "both"):
                        samples.append(gamma_p(G, (float(x), float(z)), float(r), p, grid))
                    if estimator in ("beta-surface", "both"):
                        point = graph_map(G, (float(x), float(z)))
                        samples.append(beta_p_surface(G, point, float(r), p, grid))
    out_csv = out_prefix + ".csv"
    with open(out_csv, "w", newline="") as fh:
        write_beta_csv(samples, fh)
    manifest = cfgmod.make_manifest(
        "beta", config_path, cfgmod.run_seed(cfg), f"{grid[0]}x{grid[1]}", started
    )
    manifest.write(out_prefix + ".manifest.json")
    print(f"wrote {out_csv} ({len(samples)} samples)")
    return EXIT_OK


def cmd_trace(cfg, out_prefix: str, config_path) -> int:
    started = time.time()
    G = cfgmod.graph_from_run_config(cfg)
    sec = "trace"
    x0 = cfgmod.get_float(cfg, sec, "x0")
    z0 = cfgmod.get_float(cfg, sec, "z0")
    t_lo = cfgmod.get_float(cfg, sec, "t_lo")
    t_hi = cfgmod.get_float(cfg, sec, "t_hi")
    step = cfgmod.get_float(cfg, sec, "step")
    if step <= 0:
        raise ConfigError("key 'step' in [trace] must be positive")
    curve = trace(G, (x0, z0), t_lo, t_hi, step)
    out_csv = out_prefix + ".csv"
    export_curve_csv(curve, out_csv)
    manifest = cfgmod.make_manifest(
        "trace", config_path, cfgmod.run_seed(cfg), f"step={step!r}", started
    )
    manifest.write(out_prefix + ".manifest.json")
    print(f"wrote {out_csv} ({len(curve.t_grid)} nodes)")
    return EXIT_OK


def _patchwork_params(cfg) -> PatchworkParams:
    sec = "patchwork"
    defaults = PatchworkParams()
    if not cfg.has_section(sec):
        return defaults
    return PatchworkParams(
        mu=cfgmod.get_float(cfg, sec, "mu", defaults.mu),
        lam=cfgmod.get_float(cfg, sec, "lambda", defaults.lam),
        depth_cap=cfgmod.get_int(cfg, sec, "depth_cap", defaults.depth_cap),
        r_const=cfgmod.get_float(cfg, sec, "r_const", defaults.r_const),
        alpha_min=cfgmod.get_float(cfg, sec, "alpha_min", defaults.alpha_min),
        trace_n_half=cfgmod.get_int(cfg, sec, "trace_n_half", defaults.trace_n_half),
        max_vertices=cfgmod.get_int(cfg, sec, "max_vertices", defaults.max_vertices),
    )


def cmd_decompose(cfg, out_prefix: str, config_path, svg: bool = False) -> int:
    started = time.time()
    G = cfgmod.graph_from_run_config(cfg)
    root = cfgmod.root_from_run_config(cfg, G)
    params = _patchwork_params(cfg)
    tree = build_patchwork(G, root, params)
    out_tree = out_prefix + ".tree"
    with open(out_tree, "w") as fh:
        fh.write(serialize_tree(tree))
    report = carleson_check(tree, cfgmod.get_float(cfg, "patchwork", "carleson_c", 1e6))
    lp_ratio, _ = lp_approx_check(tree, 1.0)
    audit = out_prefix + ".audit.txt"
    cuts = [v.cut for v in tree.vertices]
    with open(audit, "w") as fh:
        fh.write(f"vertices {len(tree)}\n")
        fh.write(f"horizontal {cuts.count('horizontal')}\n")
        fh.write(f"vertical {cuts.count('vertical')}\n")
        fh.write(f"leaves {cuts.count('leaf')}\n")
        fh.write(f"fallbacks {sum(v.fallback for v in tree.vertices)}\n")
        fh.write(f"partition_mismatch {partition_report(tree)!r}\n")
        fh.write(f"carleson_max_ratio {report.max_ratio!r}\n")
        fh.write(f"l1_ratio_max {lp_ratio!r}\n")
    if svg:
        from .svgplot import write_boundaries_svg

        polys = []
        for v in tree.leaves():
            xs = np.linspace(v.quad.a, v.quad.b, 33)
            top = v.quad.g2(xs)
            bot = v.quad.g1(xs)
            polys.append(
                (
                    np.concatenate([xs, xs[::-1], xs[:1]]),
                    np.concatenate([bot, top[::-1], bot[:1]]),
                )
            )
        write_boundaries_svg(out_prefix + ".svg", polys)
    manifest = cfgmod.make_manifest(
        "decompose", config_path, cfgmod.run_seed(cfg), f"depth_cap={params.depth_cap}", started
    )
    manifest.write(out_prefix + ".manifest.json")
    print(f"wrote {out_tree} ({len(tree)} vertices)")
    return EXIT_OK


def _carleson_spec(cfg, G, root) -> CarlesonSpec:
    sec = "carleson"
    s_values = tuple(_float_list(cfg.get(sec, "s", fallback="4.0")))
    if any(s < 1.0 for s in s_values):
        raise ConfigError("key 's' in [carleson]: exponents must be >= 1")
    p = cfgmod.get_float(cfg, sec, "p", 4.0)
    if p < 1.0:
        raise ConfigError("key 'p' in [carleson] must be >= 1")
    nu_raw = cfg.get(sec, "nu", fallback="auto")
    nu = None if nu_raw == "auto" else float(nu_raw)
    return CarlesonSpec(
        graph=G,
        root=root,
        p_exponent=p,
        s_exponents=s_values,
        i0=cfgmod.get_int(cfg, sec, "i0", 0),
        i1=cfgmod.get_int(cfg, sec, "i1", 7),
        grid=(cfgmod.get_int(cfg, sec, "grid_nx", 12), cfgmod.get_int(cfg, sec, "grid_nz", 12)),
        region_grid=(
            cfgmod.get_int(cfg, sec, "region_nx", 64),
            cfgmod.get_int(cfg, sec, "region_nz", 64),
        ),
        nu=nu,
        workers=cfgmod.get_int(cfg, sec, "workers", 0),
        grid_seed=cfgmod.get_int(cfg, sec, "grid_seed", 1),
    )


def _write_sweep_csv(path, rows, header):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def cmd_carleson(cfg, out_prefix: str, config_path) -> int:
    started = time.time()
    G = cfgmod.graph_from_run_config(cfg)
    root = cfgmod.root_from_run_config(cfg, G)
    spec = _carleson_spec(cfg, G, root)
    result = carleson_integral(spec)
    rows = []
    for s in spec.s_exponents:
        for i, (r, v) in enumerate(zip(result.radii, result.level_sums[s])):
            rows.append([repr(s), i + spec.i0, repr(r), repr(v)])
        rows.append([repr(s), "total", "", repr(result.total(s))])
        rows.append([repr(s), "normalized", "", repr(result.normalized(s))])
    out_csv = out_prefix + ".csv"
    _write_sweep_csv(out_csv, rows, ["s", "level", "r", "value"])
    manifest = cfgmod.make_manifest(
        "carleson",
        config_path,
        cfgmod.run_seed(cfg),
        f"{spec.grid[0]}x{spec.grid[1]}",
        started,
    )
    manifest.write(out_prefix + ".manifest.json")
    print(f"wrote {out_csv} (nu={result.nu!r})")
    return EXIT_OK


def cmd_sweep(cfg, out_prefix: str, config_path) -> int:
    started = time.time()
    sec = "sweep"
    s_values = tuple(_float_list(cfg.get(sec, "s", fallback="2.0 4.0")))
    if any(s < 1.0 for s in s_values):
        raise ConfigError("key 's' in [sweep]: exponents must be >= 1")
    refinements = [int(v) for v in _float_list(cfgmod.require(cfg, sec, "refinements"))]
    table = []
    for ref in refinements:
        sub = cfgmod.load_config(config_path)
        sub.set("graph", "refinement", str(ref))
        G = cfgmod.graph_from_run_config(sub)
        root = cfgmod.root_from_run_config(sub, G)
        spec = _carleson_spec(sub, G, root)
        spec = CarlesonSpec(
            **{**spec.__dict__, "s_exponents": tuple(sorted(set(spec.s_exponents) | set(s_values)))}
        )
        result = carleson_integral(spec)
        for s in s_values:
            table.append([repr(s), ref, repr(result.normalized(s))])
    out_csv = out_prefix + ".csv"
    _write_sweep_csv(out_csv, table, ["s", "refinement", "normalized_total"])
    if cfg.getboolean(sec, "gnuplot", fallback=False):
        with open(out_prefix + ".gnuplot.dat", "w") as fh:
            for s in s_values:
                fh.write(f"# s = {s}\n")
                for row in table:
                    if row[0] == repr(s):
                        fh.write(f"{row[1]} {row[2]}\n")
                fh.write("\n\n")
    manifest = cfgmod.make_manifest(
        "sweep", config_path, cfgmod.run_seed(cfg), f"refinements={refinements}", started
    )
    manifest.write(out_prefix + ".manifest.json")
    print(f"wrote {out_csv}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="heisbeta",
        description="Heisenberg-group flatness experiments: graphs, curves, "
        "pseudoquad trees and multiscale sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("beta", "flatness samples over an (x, z, r) sweep"),
        ("trace", "characteristic curve through a point"),
        ("decompose", "build a patchwork tree with audit report"),
        ("carleson", "multiscale dyadic integral over a root pseudoquad"),
        ("sweep", "exponent/refinement table for the bump family"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="INI run configuration")
        p.add_argument("-o", "--output", default=None, help="output prefix")
        if name == "decompose":
            p.add_argument("--svg", action="store_true", help="emit leaf boundaries as SVG")
    args = parser.parse_args(argv)
    out_prefix = args.output or args.config.rsplit(".", 1)[0]

    try:
        cfg = cfgmod.load_config(args.config)
        if args.command == "beta":
            return cmd_beta(cfg, out_prefix, args.config)
        if args.command == "trace":
            return cmd_trace(cfg, out_prefix, args.config)
        if args.command == "decompose":
            return cmd_decompose(cfg, out_prefix, args.config, svg=args.svg)
        if args.command == "carleson":
            return cmd_carleson(cfg, out_prefix, args.config)
        if args.command == "sweep":
            return cmd_sweep(cfg, out_prefix, args.config)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CoverageError, OutOfDomainError, EmptyCurveError) as exc:
        print(f"coverage error: {exc}", file=sys.stderr)
        return EXIT_COVERAGE
    except CertificationError as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
