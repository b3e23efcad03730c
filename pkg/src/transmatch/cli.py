"""Command-line front end.

Exit codes: 0 success, 2 best match below the requested threshold,
1 any error (including usage errors).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from .bench import BenchConfig, run_bench, write_csv, write_json
from .blur import optimize_autocorrelation, parse_kernel
from .egs import efficient_group_size
from .imagecore import ImageFormatError, load_image, save_image
from .matcher import MODES, MatchParams, match
from .synth import SynthSpec, write_corpus

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("transmatch")

EXIT_OK, EXIT_ERROR, EXIT_BELOW = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _window(text: str) -> tuple[int, int]:
    parts = text.lower().replace("x", ",").split(",")
    try:
        vals = [int(p) for p in parts if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad window size {text!r}")
    if len(vals) == 1:
        return vals[0], vals[0]
    if len(vals) == 2:
        return vals[0], vals[1]
    raise argparse.ArgumentTypeError(f"bad window size {text!r}")


def _smoothness(text: str):
    vals = [float(v) for v in text.split(",") if v.strip()]
    if len(vals) == 1:
        return vals[0]
    if len(vals) == 2:
        return tuple(vals)
    raise argparse.ArgumentTypeError(f"bad smoothness {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="random seed")
    g.add_argument("--out", default=None, help="output file or directory")
    g.add_argument("--format", choices=("json", "csv"), default="json")
    g.add_argument("--config", default=None, help="TOML file of key = value defaults")
    g.add_argument("-v", "--verbose", action="store_true")


def _search_options(p, opta: bool) -> None:
    p.add_argument("--rho-th", type=float, default=0.8, help="detection threshold")
    p.add_argument("--h0", type=int, default=3, help="initial (odd) group size")
    p.add_argument("--xi", type=float, default=0.005, dest="xi_fraction",
                   help="group-size stopping margin as a fraction of cost")
    if opta:
        p.add_argument("--rho-max", type=float, default=0.95)
        p.add_argument("--kernel", default="w:0.05,0.20,0.50,0.20,0.05",
                       help="w:a,b,... | gauss:sigma,t_g[,radius] | delta")
        p.add_argument("--stop", type=float, default=0.005, dest="stop_fraction",
                       help="blur iteration stopping margin as a fraction of cost")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="transmatch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    _common(p)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--smoothness", type=_smoothness, default=(1.5, 3.5),
                   help="Gaussian sigma, or lo,hi to draw one per image")
    p.add_argument("--detail", type=float, default=0.5)
    p.add_argument("--sizes", type=_int_list, default=[21, 41, 61])
    p.add_argument("--per-size", type=int, default=5)
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--image-format", choices=("pgm", "png"), default="pgm")

    p = sub.add_parser("match", help="match one template")
    _common(p)
    p.add_argument("-t", "--template", required=True)
    p.add_argument("-i", "--image", required=True)
    p.add_argument("--mode", default="egs", help="brute | egs | opta")
    p.add_argument("--threshold", type=float, default=None,
                   help="user threshold; exit code 2 if the best match is below it")
    p.add_argument("--refine-radius", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    _search_options(p, opta=True)

    for name, helptext in (("egs", "efficient group size of an image"),
                           ("opta", "controlled blur of an image")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("-i", "--image", required=True)
        size = p.add_mutually_exclusive_group(required=True)
        size.add_argument("-m", "--template-size", type=_window, help="M or MxN")
        size.add_argument("-t", "--template", help="take the size from this file")
        _search_options(p, opta=(name == "opta"))
        if name == "egs":
            p.add_argument("--n-templates", type=int, default=None,
                           help="include the amortised auto-correlation cost")
        else:
            p.add_argument("--out-image", default=None,
                           help="write the blurred image here (plus a .json sidecar)")

    p = sub.add_parser("bench", help="benchmark sweep")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--images", nargs="+")
    src.add_argument("--corpus", help="corpus directory written by synth")
    p.add_argument("--sizes", type=_int_list, default=[21, 41])
    p.add_argument("--per-size", type=int, default=5)
    p.add_argument("--modes", type=_str_list, default=["brute", "egs", "opta"])
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--offset", type=float, default=0.0)
    _search_options(p, opta=True)
    return parser


def _load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = _load_config(known.config)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}")
    subparsers = next(a for a in parser._actions
                      if isinstance(a, argparse._SubParsersAction)).choices
    flat = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    for name, sp in subparsers.items():
        values = dict(flat)
        values.update(cfg.get(name, {}) if isinstance(cfg.get(name), dict) else {})
        dests = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, val in values.items():
            dest = key.replace("-", "_")
            dest = {"xi": "xi_fraction", "stop": "stop_fraction"}.get(dest, dest)
            if dest not in dests:
                continue
            action = dests[dest]
            if isinstance(val, str) and action.type is not None:
                val = action.type(val)
            defaults[dest] = val
            action.required = False
        sp.set_defaults(**defaults)
    known_keys = set()
    for sp in subparsers.values():
        known_keys |= {a.dest for a in sp._actions}
    unknown = [k for k in flat
               if {"xi": "xi_fraction", "stop": "stop_fraction"}.get(
                   k.replace("-", "_"), k.replace("-", "_")) not in known_keys]
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")


def _emit(payload, args, csv_rows=None) -> None:
    if args.format == "csv" and csv_rows is not None:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(csv_rows[0].keys()))
        writer.writeheader()
        writer.writerows(csv_rows)
        text = buf.getvalue()
    else:
        text = json.dumps(payload, indent=2) + "\n"
    if args.out and args.command in ("match", "egs", "opta"):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _match_row(d: dict) -> dict:
    return {"mode": d["mode"], "row": d["best"]["row"], "col": d["best"]["col"],
            "rho": d["best"]["rho"], "refined_row": d["refined"]["row"],
            "refined_col": d["refined"]["col"], "refined_rho": d["refined"]["rho"],
            **d["stats"]}


def cmd_match(args) -> int:
    if args.mode not in MODES:
        raise UsageError(f"invalid mode {args.mode!r}; choose from {', '.join(MODES)}")
    t = load_image(args.template)
    img = load_image(args.image)
    params = MatchParams(h0=args.h0, w0=args.h0, rho_th=args.rho_th, rho_max=args.rho_max,
                         kernel=parse_kernel(args.kernel), xi_fraction=args.xi_fraction,
                         stop_fraction=args.stop_fraction, rho_tb_init=args.threshold,
                         refine_radius=args.refine_radius, workers=args.workers)
    res = match(t, img, args.mode, params)
    out = res.to_dict()
    _emit(out, args, [_match_row(out)])
    return EXIT_BELOW if res.below_threshold else EXIT_OK


def _template_size(args) -> tuple[int, int]:
    if args.template_size:
        return args.template_size
    return load_image(args.template).shape


def cmd_egs(args) -> int:
    img = load_image(args.image)
    m, n = _template_size(args)
    res = efficient_group_size(img, m, n, args.h0, args.h0, args.rho_th, args.xi_fraction,
                               n_templates=args.n_templates)
    out = res.to_dict()
    _emit(out, args, [e.to_dict() for e in res.trace])
    return EXIT_OK


def cmd_opta(args) -> int:
    img = load_image(args.image)
    m, n = _template_size(args)
    res = optimize_autocorrelation(img, m, n, args.rho_th, args.rho_max,
                                   parse_kernel(args.kernel), args.h0, args.h0,
                                   args.xi_fraction, args.stop_fraction)
    out = res.to_dict()
    if args.out_image:
        save_image(args.out_image, res.image)
        sidecar = Path(args.out_image).with_suffix(".json")
        sidecar.write_text(json.dumps(out, indent=2) + "\n")
        out["image"] = str(args.out_image)
    _emit(out, args, [it.to_dict() for it in res.trace])
    return EXIT_OK


def cmd_synth(args) -> int:
    if not args.out:
        raise UsageError("synth needs --out DIR")
    spec = SynthSpec(count=args.count, height=args.height, width=args.width,
                     smoothness=args.smoothness, detail=args.detail,
                     template_sizes=tuple(args.sizes), per_size=args.per_size,
                     gain=args.gain, offset=args.offset, seed=args.seed,
                     fmt=args.image_format)
    try:
        manifest = write_corpus(spec, args.out)
    except OSError as exc:
        raise OSError(f"cannot write corpus to {args.out}: {exc}") from exc
    sys.stdout.write(json.dumps({"out": args.out, "images": len(manifest["images"]),
                                 "templates": len(manifest["templates"])}) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.corpus:
        root = Path(args.corpus)
        manifest = root / "manifest.json"
        if manifest.is_file():
            images = [str(root / p) for p in json.loads(manifest.read_text())["images"]]
        else:
            images = sorted(str(p) for p in (root / "images").glob("*")
                            if p.suffix.lower() in (".pgm", ".png"))
        if not images:
            raise FileNotFoundError(f"corpus missing: no images under {root}")
    else:
        images = args.images
    prefix = args.out
    cfg = BenchConfig(images=images, sizes=args.sizes, per_size=args.per_size,
                      modes=args.modes, rho_th=args.rho_th, rho_max=args.rho_max,
                      kernel=args.kernel, xi_fraction=args.xi_fraction,
                      threshold=args.threshold, gain=args.gain, offset=args.offset,
                      seed=args.seed,
                      csv_path=f"{prefix}.csv" if prefix else None,
                      json_path=f"{prefix}.json" if prefix else None)
    report = run_bench(cfg)
    if cfg.csv_path:
        write_csv(report["rows"], cfg.csv_path)
        write_json(report, cfg.json_path)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(report["rows"][0].keys()))
        writer.writeheader()
        writer.writerows(report["rows"])
        sys.stdout.write(buf.getvalue())
    else:
        sys.stdout.write(json.dumps({"rows": report["rows"]}, indent=2) + "\n")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "match": cmd_match, "egs": cmd_egs,
            "opta": cmd_opta, "bench": cmd_bench}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (FileNotFoundError, ImageFormatError, ValueError, OSError, RuntimeError) as exc:
        print(f"transmatch: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
