"""Command-line front end: simulate, reconstruct, tune and batch experiments.

All workflows are batch.  Machine-readable JSON goes to stdout; warnings and
progress notes go to stderr.  Exit codes: 0 success, 1 numeric failure,
2 usage error, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, io as tio
from .errors import TomogcvError
from .projector import DEFAULT_FLOOR_EPS, ImageGrid, SinogramGeometry
from .recon import METHODS, ReconRequest, reconstruct
from .gcv import minimize_elliptical, minimize_radial, precompute
from .kernels import EllipticalBandwidth
from .recon import default_h_range

EXIT_NUMERIC = 1
EXIT_USAGE = 2
EXIT_IO = 3

_GEOMETRY_PRESETS = ("default", "supplement-129", "supplement-160")


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        nx, ny = (int(v) for v in text.split(","))
        return nx, ny
    except ValueError:
        raise argparse.ArgumentTypeError(f"--grid expects NX,NY, got {text!r}")


def _geometry_for(text: str, grid: ImageGrid, bin_size: float) -> SinogramGeometry:
    if text == "default":
        return SinogramGeometry(grid.nx, round(2.5 * grid.nx), bin_size)
    if text == "supplement-129":
        # near-square system: barely more LORs than pixels
        return SinogramGeometry(grid.nx, grid.ny + 1, bin_size)
    if text == "supplement-160":
        return SinogramGeometry(grid.nx, round(1.25 * grid.nx), bin_size)
    try:
        n_dist, n_angle = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"--geometry expects R,THETA or one of {_GEOMETRY_PRESETS}, got {text!r}"
        )
    return SinogramGeometry(n_dist, n_angle, bin_size)


def _phantom_spec(text: str, grid: ImageGrid) -> harness.PhantomSpec:
    if text in ("shepp-logan", "shepp_logan"):
        return harness.PhantomSpec("shepp_logan", grid)
    if text in ("disc", "uniform-disc", "uniform_disc"):
        return harness.PhantomSpec("uniform_disc", grid)
    if text.startswith("file:"):
        return harness.PhantomSpec("file", grid, path=text[len("file:"):])
    raise argparse.ArgumentTypeError(
        f"--phantom expects shepp-logan, disc or file:PATH, got {text!r}"
    )


def _parse_bandwidth(text: str):
    if text in ("gcv", "oracle"):
        return text
    parts = text.split(",")
    try:
        if len(parts) == 1:
            return float(parts[0])
        if len(parts) == 3:
            return tuple(float(v) for v in parts)
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(
        f"--bandwidth expects gcv, oracle, H or H1,H2,RHO, got {text!r}"
    )


def _load_config(path: str, parser: argparse.ArgumentParser) -> dict:
    fields = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        parser.error(f"cannot read config file: {exc}")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            parser.error(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        fields[key.strip().replace("-", "_")] = value.strip()
    return fields


def _apply_config(
    args: argparse.Namespace,
    parser: argparse.ArgumentParser,
    subparser: argparse.ArgumentParser,
) -> None:
    """Overlay config-file values under explicit flags (flags win).

    A flag counts as explicit when its parsed value differs from the
    subcommand's default; config values fill the remaining defaults.
    """
    if not getattr(args, "config", None):
        return
    fields = _load_config(args.config, parser)
    valid = set(vars(args)) - {"command", "config"}
    for key, value in fields.items():
        if key not in valid:
            parser.error(f"unknown config key {key!r}")
        default = subparser.get_default(key)
        if getattr(args, key) != default:
            continue  # flag explicitly set, keep it
        if isinstance(default, bool):
            value = value.lower() in ("1", "true", "yes", "on")
        elif isinstance(default, int):
            value = int(value)
        elif isinstance(default, float):
            value = float(value)
        setattr(args, key, value)


def _build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="tomogcv",
        description="Backprojected-filtering reconstruction with GCV bandwidth selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    def common(p):
        p.add_argument("--grid", default="64,64", help="image grid NX,NY")
        p.add_argument("--pixel-size", dest="pixel_size", type=float, default=1.0)
        p.add_argument("--bin-size", dest="bin_size", type=float, default=1.0)
        p.add_argument("--geometry", default="default",
                       help=f"R,THETA or preset {_GEOMETRY_PRESETS}")
        p.add_argument("--config", default=None, help="key=value file with defaults")

    p_sim = sub.add_parser("simulate", help="write a phantom and a Poisson sinogram")
    common(p_sim)
    p_sim.add_argument("--phantom", default="shepp-logan")
    p_sim.add_argument("--counts-total", "--lambda", dest="counts_total",
                       type=float, required=True, help="total expected counts")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True, help="output prefix")

    p_rec = sub.add_parser("reconstruct", help="reconstruct a sinogram file")
    common(p_rec)
    p_rec.add_argument("--sinogram", required=True, help="sinogram .hdr path")
    p_rec.add_argument("--method", choices=METHODS, default="bpf")
    p_rec.add_argument("--bandwidth", default="gcv",
                       help="gcv, oracle, H, or H1,H2,RHO")
    p_rec.add_argument("--truth", default=None, help="ground-truth image (oracle mode)")
    p_rec.add_argument("--floor-eps", dest="floor_eps", type=float, default=DEFAULT_FLOOR_EPS)
    p_rec.add_argument("--h-range", dest="h_range", default=None, help="LO,HI in pixels")
    p_rec.add_argument("--out", required=True, help="output prefix")

    p_tune = sub.add_parser("tune", help="bandwidth selection only, no image output")
    common(p_tune)
    p_tune.add_argument("--sinogram", required=True)
    p_tune.add_argument("--method", choices=METHODS, default="bpf")
    p_tune.add_argument("--floor-eps", dest="floor_eps", type=float, default=DEFAULT_FLOOR_EPS)
    p_tune.add_argument("--h-range", dest="h_range", default=None)
    p_tune.add_argument("--out", default=None, help="optional JSON trace path")

    p_exp = sub.add_parser("experiment", help="Monte-Carlo sweep to CSV")
    common(p_exp)
    p_exp.add_argument("--phantom", default="shepp-logan")
    p_exp.add_argument("--lambdas", default="1e4,1e5,1e6", help="comma list of counts")
    p_exp.add_argument("--replicates", type=int, default=100)
    p_exp.add_argument("--seed", type=int, default=20250901)
    p_exp.add_argument("--methods", default="bpf:gcv,bpf:oracle,bpf+:gcv,bpf+:oracle")
    p_exp.add_argument("--floor-eps", dest="floor_eps", type=float, default=DEFAULT_FLOOR_EPS)
    p_exp.add_argument("--h-range", dest="h_range", default=None)
    p_exp.add_argument("--parallel", type=int, default=1)
    p_exp.add_argument("--resume", action="store_true")
    p_exp.add_argument("--out", required=True, help="output CSV path")
    subparsers.update(simulate=p_sim, reconstruct=p_rec, tune=p_tune, experiment=p_exp)
    return parser, subparsers


def _parse_h_range(text):
    if text is None:
        return None
    lo, hi = (float(v) for v in str(text).split(","))
    return lo, hi


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _cmd_simulate(args) -> int:
    grid = ImageGrid(*_parse_grid(args.grid), args.pixel_size)
    geom = _geometry_for(args.geometry, grid, args.bin_size)
    spec = _phantom_spec(args.phantom, grid)
    phantom = harness.make_phantom(spec)
    sino = harness.simulate_sinogram(phantom, geom, args.counts_total, args.seed)
    out = Path(args.out)
    phantom_hdr = tio.write_image(phantom, out.parent / (out.name + "_phantom"))
    sino_hdr = tio.write_sinogram(sino, out.parent / (out.name + "_sinogram"))
    _emit(
        {
            "phantom": str(phantom_hdr),
            "sinogram": str(sino_hdr),
            "sinogram_sha256": tio.checksum(sino_hdr),
            "total_counts": float(sino.values.sum()),
        }
    )
    return 0


def _cmd_reconstruct(args) -> int:
    grid = ImageGrid(*_parse_grid(args.grid), args.pixel_size)
    sino = tio.read_sinogram(args.sinogram)
    truth = tio.read_image(args.truth) if args.truth else None
    req = ReconRequest(
        sinogram=sino,
        grid=grid,
        method=args.method,
        bandwidth=_parse_bandwidth(args.bandwidth),
        truth=truth,
        h_range=_parse_h_range(args.h_range),
        floor_eps=args.floor_eps,
    )
    result = reconstruct(req)
    if result.diagnostics.get("boundary_hit"):
        print("tomogcv: warning: bandwidth search hit its range boundary", file=sys.stderr)
    if result.diagnostics.get("n_floored", 0) > 0:
        print(
            f"tomogcv: note: {result.diagnostics['n_floored']} frequencies below the "
            "spectral floor were excluded",
            file=sys.stderr,
        )
    if result.diagnostics.get("negativity_converged") is False:
        print("tomogcv: warning: negativity reduction returned a flagged best iterate",
              file=sys.stderr)
    out = Path(args.out)
    image_hdr = tio.write_image(result.image, out.parent / (out.name + "_image"))
    sidecar = out.parent / (out.name + "_diagnostics.json")
    diagnostics = {
        "method": result.method,
        "params": result.params,
        "diagnostics": result.diagnostics,
        "zeta_trace": [list(pair) for pair in result.zeta_trace],
    }
    sidecar.write_text(json.dumps(diagnostics, indent=2, sort_keys=True))
    _emit(
        {
            "image": str(image_hdr),
            "diagnostics": str(sidecar),
            "method": result.method,
            "params": result.params,
            "timings_ms": result.diagnostics["timings_ms"],
        }
    )
    return 0


def _cmd_tune(args) -> int:
    grid = ImageGrid(*_parse_grid(args.grid), args.pixel_size)
    sino = tio.read_sinogram(args.sinogram)
    h_range = _parse_h_range(args.h_range) or default_h_range(grid)
    pre = precompute(sino, grid, floor_eps=args.floor_eps)
    radial = minimize_radial(pre, grid, h_range)
    from .projector import surrogate_gap

    payload = {
        "method": args.method,
        "h_gcv": radial.bandwidth.fwhm,
        "zeta": radial.objective.zeta,
        "c_of_h": radial.objective.c_of_h,
        "boundary_hit": radial.boundary_hit,
        "n_evals": radial.n_evals,
        "n_floored": pre.n_floored,
        "surrogate_gap": surrogate_gap(grid, sino.geometry),
    }
    if args.method.startswith("bpfe"):
        h0 = radial.bandwidth.fwhm
        ell = minimize_elliptical(
            pre, grid, h_range, start=EllipticalBandwidth(h0, h0, 0.0)
        )
        payload.update(
            {
                "h1": ell.bandwidth.h1,
                "h2": ell.bandwidth.h2,
                "rho": ell.bandwidth.rho,
                "zeta": ell.objective.zeta,
                "boundary_hit": ell.boundary_hit,
                "optimizer_converged": ell.converged,
            }
        )
    if args.out:
        trace = {"zeta_trace": [list(p) for p in radial.trace], **payload}
        Path(args.out).write_text(json.dumps(trace, indent=2, sort_keys=True))
        payload["trace_file"] = args.out
    _emit(payload)
    return 0


def _cmd_experiment(args) -> int:
    grid = ImageGrid(*_parse_grid(args.grid), args.pixel_size)
    geom = _geometry_for(args.geometry, grid, args.bin_size)
    cfg = harness.SimConfig(
        phantom=_phantom_spec(args.phantom, grid),
        geom=geom,
        lambdas=tuple(float(v) for v in str(args.lambdas).split(",")),
        n_replicates=args.replicates,
        seed=args.seed,
        methods=tuple(str(args.methods).split(",")),
        h_range=_parse_h_range(args.h_range),
        floor_eps=args.floor_eps,
    )
    n, summary = harness.run_experiment_to_csv(
        cfg, args.out, parallel=args.parallel, resume=args.resume
    )
    _emit({"records_written": n, "csv": str(args.out), "summary": str(summary)})
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "reconstruct": _cmd_reconstruct,
    "tune": _cmd_tune,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    parser, subparsers = _build_parser()
    args = parser.parse_args(argv)
    _apply_config(args, parser, subparsers[args.command])
    try:
        return _COMMANDS[args.command](args)
    except OSError as exc:
        print(f"tomogcv: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TomogcvError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"tomogcv: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
