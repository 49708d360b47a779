"""Command-line front end.

Commands: dim, classify, tube, scan, content, local, factor,
image-content, counterexample.  The system comes from a JSON config
(inline bundled name or file path); numeric parameters are flags.  All
floating-point output is printed with 12 significant digits and artifacts
are written atomically, so identical config + seed reproduce byte-identical
files.  Exit codes: 2 config errors, 3 failed numeric certificates,
4 resource caps.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources

import numpy as np

from . import conformal, content, local_content, tube_exact_1d, tube_numeric_nd
from .errors import (
    CertificateError,
    ConfigError,
    FractubeError,
    MapDomainError,
    NumericError,
    ResourceLimitError,
    SscViolationError,
)
from .ifs_core import (
    IfsSpec,
    Word,
    classify_lattice,
    ifs_from_json,
    moran_dimension,
    stopping_words,
)
from .map_expr import ConformalMap, parse_map

BUNDLED = ("cantor3", "c1", "c2", "nonlattice_2_5", "triangle_quarter", "devil")

_CONFIG_KEYS = {"dim", "maps", "map"}


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def load_config(source: str) -> tuple[IfsSpec, ConformalMap | None]:
    """Load a config by bundled name or file path (strict parsing)."""
    if source in BUNDLED:
        text = resources.files("fractube.configs").joinpath(f"{source}.json").read_text()
    else:
        try:
            with open(source, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {source!r}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(obj) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    ifs = ifs_from_json({k: obj[k] for k in ("dim", "maps") if k in obj})
    cmap = None
    if "map" in obj:
        if not isinstance(obj["map"], str):
            raise ConfigError("'map' must be a string")
        cmap = parse_map(obj["map"]).bind(ifs)
    return ifs, cmap


def _require_map(cmap: ConformalMap | None, args) -> ConformalMap:
    if getattr(args, "map", None):
        return parse_map(args.map)
    if cmap is None:
        raise ConfigError("this command needs a map (config 'map' field or --map)")
    return cmap


def _write_out(path: str | None, text: str) -> None:
    if path is None:
        return
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    import os

    os.replace(tmp, path)


def _exact_engine(ifs: IfsSpec):
    stream = tube_exact_1d.gap_stream(ifs)
    return stream.tube_volume


def _engine(ifs: IfsSpec, args, eps_floor: float | None = None):
    """Tube volume callable for the chosen engine.

    When the caller knows the smallest eps it will query (a quadrature
    cutoff), the point cloud is built once at that tolerance and reused.
    """
    if args.engine == "exact":
        if ifs.ambient_dim != 1:
            raise ConfigError("the exact engine is 1-D only")
        return _exact_engine(ifs)
    cloud = None
    if eps_floor is not None:
        cloud = tube_numeric_nd.attractor_cloud(
            ifs, tube_numeric_nd.MEMBERSHIP_TOL_FACTOR * eps_floor
        )
    if args.engine == "grid":
        return lambda e: tube_numeric_nd.tube_volume_grid(
            ifs, e, args.resolution, cloud=cloud
        ).value
    return lambda e: tube_numeric_nd.tube_volume_mc(
        ifs, e, args.samples, args.seed, cloud=cloud, threads=args.threads
    ).value


# ---------------------------------------------------------------------------
# commands


def cmd_dim(args) -> int:
    ifs, _ = load_config(args.config)
    delta = moran_dimension(ifs.ratios, max_dim=ifs.ambient_dim)
    residual = math.fsum(r ** delta for r in ifs.ratios) - 1.0
    out = {"moran": _fmt(delta), "residual": _fmt(residual)}
    if ifs.ambient_dim == 1:
        eps_max = args.eps_max
        verdict = classify_lattice(ifs.ratios)
        if verdict.is_lattice:
            # snap the window to whole periods so the lattice oscillation
            # cannot bias the least-squares slope
            span = math.log(args.eps_max / args.eps_min)
            periods = max(1, math.floor(span / verdict.h))
            eps_max = args.eps_min * math.exp(periods * verdict.h)
        eps = np.geomspace(args.eps_min, eps_max, args.nodes)
        est = content.dim_regression(_exact_engine(ifs), eps, d=1)
        out["regression"] = _fmt(est)
        out["regression_error"] = _fmt(abs(est - delta))
    text = json.dumps(out, indent=2)
    print(text)
    _write_out(args.out, text + "\n")
    return 0


def cmd_classify(args) -> int:
    ifs, _ = load_config(args.config)
    verdict = classify_lattice(ifs.ratios, tol=args.tol, max_depth=args.depth)
    out = {"kind": verdict.kind, "depth": verdict.depth}
    if verdict.h is not None:
        out["h"] = _fmt(verdict.h)
    text = json.dumps(out, indent=2)
    print(text)
    _write_out(args.out, text + "\n")
    return 0


def cmd_tube(args) -> int:
    ifs, _ = load_config(args.config)
    if args.engine == "exact":
        if ifs.ambient_dim != 1:
            raise ConfigError("the exact engine is 1-D only")
        value = tube_exact_1d.tube_volume_exact(ifs, args.eps)
        est = tube_numeric_nd.TubeEstimate(
            eps=args.eps, value=value, ci_half_width=0.0, method="exact"
        )
    elif args.engine == "grid":
        est = tube_numeric_nd.tube_volume_grid(ifs, args.eps, args.resolution)
    else:
        est = tube_numeric_nd.tube_volume_mc(
            ifs, args.eps, args.samples, args.seed, threads=args.threads
        )
    print(_fmt(est.value))
    _write_out(args.out, tube_numeric_nd.estimates_to_csv([est]))
    return 0


def cmd_scan(args) -> int:
    ifs, _ = load_config(args.config)
    if ifs.ambient_dim != 1:
        raise ConfigError("scan uses the exact 1-D engine")
    profile = tube_exact_1d.tube_profile(ifs, args.t_min, args.t_max, args.nodes)
    csv = profile.to_csv()
    print(csv, end="")
    _write_out(args.out, csv)
    return 0


def cmd_content(args) -> int:
    ifs, _ = load_config(args.config)
    reports = {}
    if ifs.ambient_dim == 1:
        reports["gatzouras_exact"] = content.gatzouras_avg_content(ifs).to_json()
        engine = (
            _exact_engine(ifs)
            if args.engine == "exact"
            else _engine(ifs, args, eps_floor=args.T)
        )
    else:
        engine = _engine(ifs, args, eps_floor=args.T)
    reports["cesaro_numeric"] = content.cesaro_report(
        ifs, engine, args.T, args.nodes_per_decade
    ).to_json()
    text = json.dumps(
        {
            name: {k: (_fmt(v) if isinstance(v, float) else v) for k, v in rep.items()}
            for name, rep in reports.items()
        },
        indent=2,
    )
    print(text)
    _write_out(args.out, text + "\n")
    return 0


def cmd_local(args) -> int:
    ifs, cmap = load_config(args.config)
    if args.map:
        cmap = parse_map(args.map).bind(ifs)
    if args.word:
        words = [Word.parse(args.word, ifs.ratios)]
    else:
        words = stopping_words(ifs, max(ifs.ratios) ** args.word_depth * 1.0000001)
    table = local_content.build_measure_table(ifs, words, cmap, T=args.T)
    csv = table.to_csv()
    print(csv, end="")
    _write_out(args.out, csv)
    return 0


def cmd_factor(args) -> int:
    ifs, cmap = load_config(args.config)
    cmap = _require_map(cmap, args).bind(ifs)
    lo, hi = conformal.conformal_factor(ifs, cmap, args.delta_dist)
    out = {
        "delta_dist": _fmt(args.delta_dist),
        "factor_lo": _fmt(lo),
        "factor_hi": _fmt(hi),
        "midpoint": _fmt(0.5 * (lo + hi)),
        "width": _fmt(hi - lo),
    }
    text = json.dumps(out, indent=2)
    print(text)
    _write_out(args.out, text + "\n")
    return 0


def cmd_image_content(args) -> int:
    ifs, cmap = load_config(args.config)
    cmap = _require_map(cmap, args).bind(ifs)
    report = conformal.image_avg_content(ifs, cmap, args.delta_dist)
    out = {k: (_fmt(v) if isinstance(v, float) else v) for k, v in report.to_json().items()}
    if args.crosscheck:
        mc = conformal.image_cesaro_mc(
            ifs,
            cmap,
            T=args.T,
            nodes=args.nodes,
            n_samples=args.samples,
            seed=args.seed,
            threads=args.threads,
        )
        out["mc_cesaro"] = _fmt(mc)
        out["rel_diff"] = _fmt(abs(mc - report.value) / report.value)
    text = json.dumps(out, indent=2)
    print(text)
    _write_out(args.out, text + "\n")
    return 0


def cmd_counterexample(args) -> int:
    report = conformal.counterexample_report(
        args.t_min, args.t_max, samples=args.nodes, resolution=args.resolution
    )
    csv = report.to_csv()
    summary = json.dumps(
        {
            "amplitude_K": _fmt(report.amplitude_k),
            "amplitude_F": _fmt(report.amplitude_f),
            "ratio": _fmt(report.ratio),
        },
        indent=2,
    )
    print(summary)
    _write_out(args.out, csv)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fractube",
        description="Tube volumes and Minkowski contents of self-similar attractors",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", help=f"config path or bundled name {BUNDLED}")
        sp.add_argument("--out", default=None, help="artifact output path")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--engine", choices=("exact", "grid", "mc"), default="exact")
        sp.add_argument("--resolution", type=int, default=100_000)
        sp.add_argument("--samples", type=int, default=100_000)

    sp = sub.add_parser("dim", help="Moran dimension plus regression estimate")
    common(sp)
    sp.add_argument("--eps-min", type=float, default=1e-12)
    sp.add_argument("--eps-max", type=float, default=1e-3)
    sp.add_argument("--nodes", type=int, default=160)
    sp.set_defaults(fn=cmd_dim)

    sp = sub.add_parser("classify", help="lattice / nonlattice verdict")
    common(sp)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--depth", type=int, default=50)
    sp.set_defaults(fn=cmd_classify)

    sp = sub.add_parser("tube", help="single tube volume")
    common(sp)
    sp.add_argument("--eps", type=float, required=True)
    sp.set_defaults(fn=cmd_tube)

    sp = sub.add_parser("scan", help="rescaled tube profile CSV")
    common(sp)
    sp.add_argument("--t-min", type=float, default=0.0)
    sp.add_argument("--t-max", type=float, default=12.0)
    sp.add_argument("--nodes", type=int, default=400)
    sp.set_defaults(fn=cmd_scan)

    sp = sub.add_parser("content", help="average Minkowski content, both methods")
    common(sp)
    sp.add_argument("--T", type=float, default=1e-8)
    sp.add_argument("--nodes-per-decade", type=int, default=64)
    sp.set_defaults(fn=cmd_content)

    sp = sub.add_parser("local", help="cylinder measure table CSV")
    common(sp)
    sp.add_argument("--word", default=None, help="single word, e.g. 12")
    sp.add_argument("--word-depth", type=int, default=2)
    sp.add_argument("--map", default=None)
    sp.add_argument("--T", type=float, default=1e-6)
    sp.set_defaults(fn=cmd_local)

    sp = sub.add_parser("factor", help="certified conformal factor enclosure")
    common(sp)
    sp.add_argument("--map", default=None)
    sp.add_argument("--delta-dist", type=float, default=0.02)
    sp.set_defaults(fn=cmd_factor)

    sp = sub.add_parser("image-content", help="image-set average content")
    common(sp)
    sp.add_argument("--map", default=None)
    sp.add_argument("--delta-dist", type=float, default=0.02)
    sp.add_argument(
        "--crosscheck",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="also run the Monte-Carlo Cesaro cross-check",
    )
    sp.add_argument("--T", type=float, default=1e-3)
    sp.add_argument("--nodes", type=int, default=24)
    sp.set_defaults(fn=cmd_image_content)

    sp = sub.add_parser("counterexample", help="staircase-image oscillation report")
    common(sp, config=False)
    sp.add_argument("--t-min", type=float, default=math.log(6.0))
    sp.add_argument("--t-max", type=float, default=math.log(6.0) + 5.0 * math.log(3.0))
    sp.add_argument("--nodes", type=int, default=48)
    sp.set_defaults(fn=cmd_counterexample, resolution=1 << 20)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (SscViolationError, CertificateError, NumericError, MapDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FractubeError as exc:  # pragma: no cover - catch-all
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
