"""Command-line entry point: ``crossscale <command> [flags]``.

Commands
--------
gen-synthetic   write a synthetic dataset (images + manifest)
learn           learn one subspace model per (class, condition)
match           compare a low-resolution model with a reference model
evaluate        similarity matrix and class separation for two model folders
sweep           class separation over scales (and noise levels)

Every command accepts ``--config FILE`` (JSON object whose keys are flag
names with ``-`` replaced by ``_``); explicit flags override file values.
``--print-config`` prints the fully resolved configuration and exits.

Exit codes: 0 success, 2 usage error, 3 data/format error,
4 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .dataset_io import (
    FormatError,
    default_output_dir,
    export_modes,
    format_float,
    load_image_sets,
    load_model,
    manifest_hash,
    save_image_sets,
    save_model,
    write_report,
    write_similarity_matrix,
)
from .evaluation import (
    SweepConfig,
    add_gaussian_noise,
    class_separation,
    generate_synthetic_classes,
    improvement_ratios,
    relative_to_baseline,
    run_noise_sweep,
    run_scale_sweep,
    similarity_matrix,
)
from .learning import choose_dimension, downsample_set, estimate_subspace
from .linalg import RankDeficientError
from .matching import DegenerateMatchError, MatchMethod, default_cache, match
from .projection import ImageGeometry, KernelKind

log = logging.getLogger("crossscale")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4


class UsageError(Exception):
    pass


# -- argument types ---------------------------------------------------------


def _geometry(text: str) -> ImageGeometry:
    try:
        return ImageGeometry.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _geometry_list(text: str) -> list[ImageGeometry]:
    return [_geometry(t.strip()) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


# -- parser -----------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file of default flag values")
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for independent cells")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossscale",
        description="Match linear appearance subspaces learnt at different image resolutions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="write a synthetic dataset")
    g.add_argument("--classes", type=int, default=5)
    g.add_argument("--samples", type=int, default=20, help="images per (class, condition)")
    g.add_argument("--size", type=_geometry, default=ImageGeometry(50, 50), help="WxH")
    g.add_argument("--dim", type=int, default=4, help="planted intrinsic dimension")
    g.add_argument("--conditions", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--format", choices=["pgm", "png"], default="pgm")
    g.add_argument("--out", type=Path)
    _common(g)

    l = sub.add_parser("learn", help="learn subspace models from a manifest")
    l.add_argument("--manifest", type=Path, required=True)
    l.add_argument("--out", type=Path)
    l.add_argument("--scale", type=_geometry, help="downsample to WxH before learning")
    l.add_argument("--kernel", choices=[k.value for k in KernelKind], default="bilinear")
    l.add_argument("--noise-sigma", type=float, default=0.0)
    l.add_argument("--noise-seed", type=int, default=0)
    dims = l.add_mutually_exclusive_group()
    dims.add_argument("--dim", type=int, help="subspace dimension")
    dims.add_argument("--energy", type=float, help="smallest dimension capturing this energy fraction")
    _common(l)

    m = sub.add_parser("match", help="match a low-resolution model against a reference")
    m.add_argument("--low", type=Path, required=True, help="low-resolution model file")
    m.add_argument("--high", type=Path, required=True, help="high-resolution reference model file")
    m.add_argument("--method", choices=[x.value for x in MatchMethod], default="constrained")
    m.add_argument("--kernel", choices=[k.value for k in KernelKind], default="bilinear")
    m.add_argument("--allow-degenerate", action="store_true")
    m.add_argument("--export-modes", metavar="PREFIX", help="write mode image pairs")
    m.add_argument("--modes", type=int, default=None, help="number of mode pairs to export")
    m.add_argument("--no-mean", action="store_true", help="export modes without adding the mean")
    _common(m)

    e = sub.add_parser("evaluate", help="similarity matrix and class separation")
    e.add_argument("--gallery", type=Path, required=True, help="folder of gallery model files")
    e.add_argument("--probes", type=Path, required=True, help="folder of probe model files")
    e.add_argument("--kernel", choices=[k.value for k in KernelKind], default="bilinear")
    e.add_argument("--methods", type=_str_list, default=["naive", "constrained"])
    e.add_argument("--format", choices=["csv", "json"], default="csv")
    e.add_argument("--out", type=Path)
    _common(e)

    s = sub.add_parser("sweep", help="class separation across scales and noise levels")
    s.add_argument("--manifest", type=Path, help="high-resolution dataset (default: synthetic)")
    s.add_argument("--classes", type=int, default=5, help="synthetic classes")
    s.add_argument("--samples", type=int, default=100, help="synthetic images per set")
    s.add_argument("--size", type=_geometry, default=ImageGeometry(50, 50), help="synthetic WxH")
    s.add_argument("--intrinsic-dim", type=int, default=4, help="synthetic planted dimension")
    s.add_argument("--scales", type=_geometry_list, default=_geometry_list("5x5,10x10,15x15,20x20,25x25"))
    s.add_argument("--kernels", type=_str_list, default=["bilinear", "bicubic"])
    s.add_argument("--methods", type=_str_list, default=["naive", "constrained"])
    s.add_argument("--noise-sigmas", type=_float_list, default=[0.0])
    s.add_argument("--seeds", type=_int_list, default=[0], help="e.g. 0,1,2 or 0-19")
    s.add_argument("--dim", type=int, default=4, help="subspace dimension")
    s.add_argument("--format", choices=["csv", "json"], default="csv")
    s.add_argument("--out", type=Path)
    _common(s)
    return parser


# -- config handling ----------------------------------------------------------


def _to_plain(value):
    if isinstance(value, (ImageGeometry, KernelKind, MatchMethod, Path)):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    return value


def _from_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    """Parse, then re-parse with defaults taken from ``--config`` so flags win."""
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        values = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(values, dict):
        raise FormatError("config file must hold a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        action = known.get(dest)
        if action is None or dest in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        if action.type is not None and raw is not None:
            text = ",".join(map(str, raw)) if isinstance(raw, list) else str(raw)
            raw = action.type(text)
        defaults[dest] = raw
    sub.set_defaults(**defaults)
    # required options given in the config need not be repeated on the command line
    for action in sub._actions:
        if action.dest in defaults:
            action.required = False
    return parser.parse_args(argv)


def resolved_config(args: argparse.Namespace) -> dict:
    skip = {"config", "print_config", "verbose"}
    return {k: _to_plain(v) for k, v in sorted(vars(args).items()) if k not in skip}


def provenance_config(args: argparse.Namespace) -> dict:
    """Resolved config as echoed into outputs.

    The output location and ``--jobs`` do not affect results; leaving them
    out keeps the outputs of equivalent runs byte-identical.
    """
    return {k: v for k, v in resolved_config(args).items() if k not in ("out", "jobs")}


def _out_dir(args, name: str) -> Path:
    out = args.out if args.out is not None else default_output_dir() / name
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -------------------------------------------------------------


def cmd_gen_synthetic(args) -> int:
    if args.samples < args.dim + 2:
        raise UsageError(f"--samples must be at least --dim + 2 = {args.dim + 2}")
    sets = generate_synthetic_classes(
        args.classes, args.samples, args.size, args.dim, args.seed, n_conditions=args.conditions
    )
    out = _out_dir(args, "synthetic")
    manifest = save_image_sets(sets, out, suffix=f".{args.format}", provenance=provenance_config(args))
    print(f"wrote {sum(s.n_samples for s in sets)} images and {manifest}")
    return EXIT_OK


def cmd_learn(args) -> int:
    sets = load_image_sets(args.manifest)
    out = _out_dir(args, "models")
    provenance_base = {
        "manifest": str(args.manifest),
        "manifest_sha256": manifest_hash(args.manifest),
        "config": provenance_config(args),
    }
    for idx, s in enumerate(sets):
        if args.scale is not None and args.scale != s.geometry:
            P = default_cache.get(s.geometry, args.scale, args.kernel).projection
            s = downsample_set(s, P)
        if args.noise_sigma > 0:
            s = add_gaussian_noise(s, args.noise_sigma, [args.noise_seed, idx])
        dim = args.dim
        if dim is None:
            dim = choose_dimension(s, args.energy) if args.energy is not None else 4
        model = estimate_subspace(s, dim)
        model.provenance.update(provenance_base, source_geometry=str(sets[idx].geometry))
        name = f"{s.class_label}_{s.condition_label}.model"
        save_model(model, out / name)
        print(f"{name}: {model.geometry} D={model.dim} energy={model.energy_captured:.6f}")
    return EXIT_OK


def cmd_match(args) -> int:
    lo, hi = load_model(args.low), load_model(args.high)
    result = match(lo, hi, args.kernel, args.method, allow_degenerate=args.allow_degenerate)
    print(f"method      {result.method}")
    print(f"low         {lo.geometry} D={lo.dim}  ({args.low})")
    print(f"reference   {hi.geometry} D={hi.dim}  ({args.high})")
    print("spectrum    " + " ".join(f"{v:.12g}" for v in result.spectrum))
    print(f"similarity  {result.similarity:.12g}")
    if args.export_modes:
        cm = default_cache.get(hi.geometry, lo.geometry, args.kernel)
        mean_lo = cm.reverse @ lo.mean
        files = export_modes(
            result,
            hi.mean,
            mean_lo,
            hi.geometry,
            args.export_modes,
            add_mean=not args.no_mean,
            count=args.modes,
        )
        print(f"wrote {len(files)} mode images")
    return EXIT_OK


def _model_dir(path: Path):
    files = sorted(p for p in Path(path).iterdir() if p.suffix == ".model")
    if not files:
        raise FormatError(f"no .model files in {path}")
    return [load_model(f) for f in files]


def cmd_evaluate(args) -> int:
    gallery, probes = _model_dir(args.gallery), _model_dir(args.probes)
    out = _out_dir(args, "evaluation")
    reports = []
    for name in args.methods:
        method = MatchMethod(name)
        sm = similarity_matrix(gallery, probes, args.kernel, method, jobs=args.jobs)
        write_similarity_matrix(sm, out / f"similarity_{method}.csv")
        lo = min((gallery[0].geometry, probes[0].geometry), key=lambda g: g.pixels)
        hi = max((gallery[0].geometry, probes[0].geometry), key=lambda g: g.pixels)
        rep = class_separation(sm, method=method, kernel=KernelKind(args.kernel), low_geometry=lo, high_geometry=hi)
        reports.append(rep)
        print(f"{method:12s} e_w={rep.within_confidence:.6g} e_b={rep.between_confidence:.6g} mu={rep.separation:.6g}")
    write_report(reports, args.format, out / f"separation.{args.format}")
    _write_config(args, out)
    return EXIT_OK


def _write_config(args, out: Path) -> None:
    (out / "config.json").write_text(json.dumps(provenance_config(args), indent=1, sort_keys=True) + "\n")


def _write_ratio_table(table: dict, header: Sequence[str], path: Path) -> None:
    lines = [",".join(header)]
    def cell(x):
        return format_float(x) if isinstance(x, float) else str(x)

    for key in sorted(table, key=lambda k: tuple(x if isinstance(x, (int, float)) else str(x) for x in k)):
        lines.append(",".join([*(cell(k) for k in key), cell(float(table[key]))]))
    path.write_text("\n".join(lines) + "\n")


def cmd_sweep(args) -> int:
    out = _out_dir(args, "sweep")
    reports = []
    if args.manifest is not None:
        data = load_image_sets(args.manifest)
    for seed in args.seeds:
        if args.manifest is None:
            data = generate_synthetic_classes(
                args.classes, args.samples, args.size, args.intrinsic_dim, seed
            )
        cfg = SweepConfig(
            scales=args.scales,
            kernels=args.kernels,
            methods=args.methods,
            noise_sigmas=args.noise_sigmas,
            subspace_dim=args.dim,
            seed=seed,
            jobs=args.jobs,
        )
        if any(s > 0 for s in cfg.noise_sigmas):
            reports.extend(run_noise_sweep(cfg, data))
        else:
            reports.extend(run_scale_sweep(cfg, data))
    write_report(reports, args.format, out / f"separation.{args.format}")
    _write_ratio_table(
        improvement_ratios(reports),
        ("kernel", "low_geometry", "noise_sigma", "seed", "ratio"),
        out / "ratios.csv",
    )
    if any(r.noise_sigma > 0 for r in reports):
        _write_ratio_table(
            relative_to_baseline(reports),
            ("method", "kernel", "low_geometry", "noise_sigma", "seed", "relative"),
            out / "relative_to_baseline.csv",
        )
    _write_config(args, out)
    ratios = improvement_ratios(reports)
    for key in sorted({(str(k), str(g), s) for k, g, s, _ in ratios}):
        vals = [v for (k, g, s, _), v in ratios.items() if (str(k), str(g), s) == key]
        print(f"{key[0]:9s} {key[1]:>6s} sigma={key[2]:<5g} ratio={np.mean(vals):.4g} (n={len(vals)})")
    return EXIT_OK


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "learn": cmd_learn,
    "match": cmd_match,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _from_config(parser, argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if exc.code is not None else EXIT_OK
    except UsageError as exc:
        print(f"crossscale: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"crossscale: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.print_config:
        print(json.dumps(resolved_config(args), indent=1, sort_keys=True))
        return EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"crossscale: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateMatchError, RankDeficientError) as exc:
        print(f"crossscale: degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (FormatError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"crossscale: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
