"""Command-line interface.

Subcommands: synth, fit, sweep-lref, sample-posterior, metrics, shape,
config.  Exit codes: 0 success, 1 usage error, 2 runtime error (diagnostic
on stderr).  Identical inputs and seeds produce byte-identical outputs,
independent of --threads.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .appearance import IntensityParams
from .config import (defaults_toml, load_run_config, parse_run_config,
                     shape_from_dict, shape_to_dict)
from .inference import FitConfig, fit, hard_segmentation
from .io import read_volume, write_volume
from .metrics import dice, hausdorff
from .parallel import set_max_workers
from .phantoms import PhantomSpec, synth_phantom
from .prior import shape_value_volume
from .shapes import EllipsePhantomShape
from .sweep import lref_sweep, write_sweep_csv
from .uncertainty import marginal_posterior, sample_posterior
from .volume import Volume


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit with code 1
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(parser, json_flag=True):
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker parallelism (default: all cores)")
    if json_flag:
        parser.add_argument("--json", action="store_true",
                            help="print a machine-readable JSON summary")


def _emit(summary, as_json):
    if as_json:
        print(json.dumps(summary, sort_keys=True))
    else:
        for key in sorted(summary):
            print(f"{key}: {summary[key]}")


def _write_float32(volume, path):
    write_volume(Volume(volume.data.astype(np.float32), volume.spacing, volume.origin), path)


def _trace_columns(shape):
    cols = ["iteration", "log_joint"]
    cols += list(shape.param_names)
    cols.append("step_norm")
    return cols


def _write_trace(result, shape, path):
    n_fg = len(result.intensity.foreground)
    cols = _trace_columns(shape) + [
        f"fg{i}_{f}" for i in range(n_fg) for f in ("mean", "scale")
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for rec in result.trace:
            row = [rec.cycle, f"{rec.log_joint:.17g}"]
            row += [f"{v:.17g}" for v in rec.shape_params]
            row.append(f"{rec.step_norm:.17g}")
            for mean, scale in rec.foreground:
                row += [f"{mean:.17g}", f"{scale:.17g}"]
            writer.writerow(row)
    return path


def _load_phantom_spec(path, seed_override=None):
    from .config import _load_document  # same parsing rules as run configs

    doc = _load_document(path)
    table = doc.get("phantom", doc)
    geom_table = table.get("geometry", {})
    kind = geom_table.get("kind", "ellipse")
    if kind == "ellipse":
        geometry = EllipsePhantomShape(
            center=tuple(geom_table["center"]),
            semi_axes=tuple(geom_table["semi_axes"]),
            angle=float(geom_table.get("angle", 0.0)),
        )
    elif kind == "cochlea":
        run = parse_run_config({"shape": geom_table}, shape_kind="cochlea")
        geometry = (run.shape, run.initial_params)
    else:
        raise ValueError(f"unknown phantom geometry kind {kind!r}")
    dims = tuple(table.get("dims", (64, 64, 1)))
    spacing = tuple(table.get("spacing", (1.0, 1.0, 1.0)))
    origin = tuple(table.get("origin", (0.0, 0.0, 0.0)))
    seed = int(table.get("seed", 0)) if seed_override is None else int(seed_override)
    return PhantomSpec(
        geometry=geometry,
        background=tuple(table.get("background", (0.0, 1.0))),
        foreground=tuple(table.get("foreground", (1.0, 1.0))),
        dims=dims, spacing=spacing, origin=origin, seed=seed,
    )


def _cmd_synth(args):
    spec = _load_phantom_spec(args.spec, seed_override=args.seed)
    image, truth = synth_phantom(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    image_path = os.path.join(args.out_dir, "image.mhd")
    truth_path = os.path.join(args.out_dir, "truth.mhd")
    _write_float32(image, image_path)
    write_volume(truth, truth_path)
    _emit({"image": image_path, "truth": truth_path, "seed": spec.seed}, args.json)
    return 0


def _cmd_fit(args):
    image = read_volume(args.image)
    run = load_run_config(args.config, shape_kind=args.shape) if args.config else \
        parse_run_config({}, shape_kind=args.shape)
    result = fit(image, run.shape, run.fit, intensity=run.intensity,
                 initial_params=run.initial_params)
    os.makedirs(args.out_dir, exist_ok=True)
    posterior_path = os.path.join(args.out_dir, "posterior.mhd")
    _write_float32(result.posterior(result.config.hard_ref_length), posterior_path)
    write_volume(result.sroi_mask(), os.path.join(args.out_dir, "sroi.mhd"))
    write_volume(result.ssi_mask(), os.path.join(args.out_dir, "ssi.mhd"))
    _write_trace(result, run.shape, os.path.join(args.out_dir, "trace.csv"))

    record = {
        "version": __version__,
        "image": os.path.abspath(args.image),
        "shape": shape_to_dict(run.shape),
        "shape_params": {n: float(v) for n, v in zip(run.shape.param_names,
                                                     result.shape_params)},
        "covariance": [[float(v) for v in row] for row in result.covariance],
        "intensity": result.intensity.to_dict(),
        "ref_length": result.config.ref_length,
        "ref_length_hard": result.config.hard_ref_length,
        "converged": result.converged,
        "cycles": len(result.trace),
        "log_joint": result.trace[-1].log_joint,
        "seed": result.config.seed,
    }
    with open(os.path.join(args.out_dir, "fit.json"), "w") as fh:
        json.dump(record, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _emit({
        "out_dir": args.out_dir, "converged": result.converged,
        "cycles": len(result.trace), "log_joint": result.trace[-1].log_joint,
    }, args.json)
    return 0


def _parse_grid(text):
    if ":" in text:
        start, step, stop = (float(v) for v in text.split(":"))
        if step <= 0:
            raise ValueError("grid step must be positive")
        n = int(round((stop - start) / step)) + 1
        values = [start + i * step for i in range(n) if start + i * step <= stop + 1e-12]
        return values
    return [float(v) for v in text.split(",") if v]


def _cmd_sweep(args):
    image = read_volume(args.image)
    run = load_run_config(args.config, shape_kind=args.shape) if args.config else \
        parse_run_config({}, shape_kind=args.shape)
    truth = read_volume(args.truth) if args.truth else None
    rows = lref_sweep(image, run.shape, run.fit, _parse_grid(args.grid),
                      truth=truth, intensity=run.intensity,
                      initial_params=run.initial_params)
    write_sweep_csv(rows, args.out)
    _emit({
        "out": args.out,
        "rows": len(rows),
        "failed": sum(1 for r in rows if r.status != "ok"),
    }, args.json)
    return 0


def _cmd_sample_posterior(args):
    with open(os.path.join(args.fit, "fit.json")) as fh:
        record = json.load(fh)
    shape = shape_from_dict(record["shape"])
    params = np.array([record["shape_params"][n] for n in shape.param_names])
    covariance = np.array(record["covariance"], dtype=np.float64)
    intensity = IntensityParams.from_dict(record["intensity"])
    image = read_volume(args.image if args.image else record["image"])

    class _Posterior:
        pass

    posterior = _Posterior()
    posterior.params = params
    posterior.covariance = covariance
    samples = sample_posterior(posterior, args.n, args.seed, bounds=shape.bounds)
    marg = marginal_posterior(image, shape, samples, intensity,
                              float(record["ref_length_hard"]))
    _write_float32(marg, args.out)
    _emit({
        "out": args.out, "n_samples": args.n, "seed": args.seed,
        "n_clipped": samples.n_clipped,
    }, args.json)
    return 0


def _cmd_metrics(args):
    a = read_volume(args.a)
    b = read_volume(args.b)
    summary = {
        "dice": dice(a, b),
        "hd95": hausdorff(a, b, percentile=95),
        "hd100": hausdorff(a, b, percentile=100),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def _parse_triple(text, cast=float):
    parts = [cast(v) for v in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated values, got {text!r}")
    return tuple(parts)


def _cmd_shape(args):
    if args.shape_command != "sdf":
        raise ValueError(f"unknown shape subcommand {args.shape_command!r}")
    run = load_run_config(args.params)
    dims = _parse_triple(args.grid, cast=int)
    spacing = _parse_triple(args.spacing)
    origin = _parse_triple(args.origin) if args.origin else (0.0, 0.0, 0.0)
    grid = Volume.zeros(dims, spacing, origin)
    values = shape_value_volume(run.shape, run.initial_params, grid)
    _write_float32(values, args.out)
    _emit({"out": args.out, "dims": list(dims)}, args.json)
    return 0


def _cmd_config(args):
    if args.defaults:
        sys.stdout.write(defaults_toml())
        return 0
    raise ValueError("nothing to do; use --defaults")


def build_parser():
    parser = _Parser(prog="shapeseg",
                     description="Shape-constrained Bayesian image segmentation")
    parser.add_argument("--version", action="version", version=f"shapeseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic phantom")
    p.add_argument("--spec", required=True, help="phantom spec (TOML or JSON)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    _add_common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit", help="fit shape and intensity parameters to an image")
    p.add_argument("--image", required=True)
    p.add_argument("--shape", choices=("cochlea", "circle"), default=None,
                   help="shape model (overrides the config file)")
    p.add_argument("--config", default=None, help="run config (TOML or JSON)")
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("sweep-lref", help="fit once per reference length")
    p.add_argument("--image", required=True)
    p.add_argument("--shape", choices=("cochlea", "circle"), default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--grid", required=True,
                   help="start:step:stop or comma-separated reference lengths")
    p.add_argument("--truth", default=None, help="ground-truth mask for Dice")
    p.add_argument("--out", required=True, help="output CSV path")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("sample-posterior",
                       help="Monte-Carlo marginal posterior from a fit directory")
    p.add_argument("--fit", required=True, help="directory written by the fit command")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--image", default=None, help="override the recorded image path")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_sample_posterior)

    p = sub.add_parser("metrics", help="Dice and Hausdorff between two masks")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    _add_common(p, json_flag=False)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("shape", help="shape-model utilities")
    shape_sub = p.add_subparsers(dest="shape_command", required=True)
    q = shape_sub.add_parser("sdf", help="evaluate the shape function on a grid")
    q.add_argument("--params", required=True, help="shape parameter file (TOML/JSON)")
    q.add_argument("--grid", required=True, help="dims as NX,NY,NZ")
    q.add_argument("--spacing", required=True, help="spacing as SX,SY,SZ in mm")
    q.add_argument("--origin", default=None, help="origin as OX,OY,OZ in mm")
    q.add_argument("--out", required=True)
    _add_common(q)
    q.set_defaults(func=_cmd_shape)

    p = sub.add_parser("config", help="configuration helpers")
    p.add_argument("--defaults", action="store_true", help="print the default config")
    _add_common(p, json_flag=False)
    p.set_defaults(func=_cmd_config)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None) is not None:
        set_max_workers(args.threads)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 0
    except Exception as exc:
        print(f"shapeseg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
