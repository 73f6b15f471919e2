"""Command line entry point: simulate -> oversample -> reconstruct -> metrics, plus benchmark.

Exit status: 0 success, 2 usage or validation error, 3 I/O or file format
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from regsynth import __version__
from regsynth.errors import FormatError, NumericalError
from regsynth.fieldsim import GammaParams, VariogramSpec, simulate_field
from regsynth.grid import read_grid, write_grid, write_pgm
from regsynth.kernels import SHAPES, half_width_from_size, make_kernel
from regsynth.metrics import benchmark_table, diff_metrics, load_scenarios
from regsynth.oversample import NoiseModel, oversample
from regsynth.rng import FIELD, NOISE, RNG_ALGORITHM, RngSpec
from regsynth.synthesis import check_observations, reconstruct, reconstructor_for

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class UsageError(ValueError):
    pass


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return v


def _kernel_size(text: str) -> int:
    v = int(text)
    if v not in (3, 5, 7):
        raise argparse.ArgumentTypeError("kernel size must be 3, 5 or 7")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="regsynth", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"regsynth {__version__} rng {RNG_ALGORITHM}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a Gamma-marginal truth field")
    s.add_argument("--rows", type=_positive_int, required=True)
    s.add_argument("--cols", type=_positive_int, required=True)
    s.add_argument("--radius", type=float, required=True, help="spherical variogram range R (pixels)")
    s.add_argument("--shape", type=float, required=True, help="Gamma shape alpha")
    s.add_argument("--scale", type=float, required=True, help="Gamma scale lambda")
    s.add_argument("--seed", type=_seed, required=True)
    s.add_argument("--replicate", type=int, default=0, help="replicate index of the field stream")
    s.add_argument("--out", required=True)
    s.add_argument("--pgm", help="also write a 16-bit PGM preview")

    o = sub.add_parser("oversample", help="oversample a field with footprint noise")
    o.add_argument("--kernel", type=_kernel_size, required=True)
    o.add_argument("--kernel-shape", choices=SHAPES, default="cosine")
    o.add_argument("--noise-sd", type=float, required=True)
    o.add_argument("--seed", type=_seed, required=True)
    o.add_argument("--replicate", type=int, default=0, help="replicate index of the noise stream")
    o.add_argument("--in", dest="inp", required=True)
    o.add_argument("--out", required=True)
    o.add_argument("--pgm")

    r = sub.add_parser("reconstruct", help="reconstruct the field from observations")
    r.add_argument("--kernel", type=_kernel_size, required=True)
    r.add_argument("--kernel-shape", choices=SHAPES, default="cosine")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--dump-weights", help="write per-pixel provenance and weights as JSON lines")
    r.add_argument("--pgm")

    m = sub.add_parser("metrics", help="difference metrics of reconstruction against truth")
    m.add_argument("--truth", required=True)
    m.add_argument("--recon", required=True)
    m.add_argument("--exclude", type=int, help="border pixels dropped per side (default h+1)")
    m.add_argument("--out")

    b = sub.add_parser("benchmark", help="run a scenario file")
    b.add_argument("--config", required=True, help="JSON array of scenario objects")
    b.add_argument("--out-csv", required=True)
    b.add_argument("--out-json", required=True)
    b.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    return p


def cmd_simulate(a) -> None:
    v = VariogramSpec(a.radius)
    g = GammaParams(a.shape, a.scale)
    rng = RngSpec(a.seed, FIELD, a.replicate)
    f = simulate_field(a.rows, a.cols, v, g, rng)
    write_grid(f, a.out)
    if a.pgm:
        write_pgm(f, a.pgm)


def cmd_oversample(a) -> None:
    kernel = make_kernel(half_width_from_size(a.kernel), a.kernel_shape)
    noise = NoiseModel(a.noise_sd)
    rng = RngSpec(a.seed, NOISE, a.replicate)
    field = read_grid(a.inp)
    if field.kind != "field":
        raise UsageError(f"{a.inp} holds a {field.kind} grid, expected a field")
    obs = oversample(field, kernel, noise, rng)
    write_grid(obs, a.out)
    if a.pgm:
        write_pgm(obs, a.pgm)


def cmd_reconstruct(a) -> None:
    kernel = make_kernel(half_width_from_size(a.kernel), a.kernel_shape)
    obs = read_grid(a.inp)
    try:
        check_observations(obs, kernel)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rec = reconstruct(obs, kernel)
    write_grid(rec, a.out)
    if a.pgm:
        write_pgm(rec, a.pgm)
    if a.dump_weights:
        h = kernel.half_width
        plan = reconstructor_for(obs.rows + 2 * h, obs.cols + 2 * h, kernel)
        with open(a.dump_weights, "w", encoding="utf-8", newline="\n") as fh:
            for record in plan.weight_records(obs.flat()):
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def cmd_metrics(a) -> None:
    truth = read_grid(a.truth)
    recon = read_grid(a.recon)
    exclude = a.exclude
    if exclude is None:
        if recon.kernel_half_width is None:
            raise UsageError("--exclude is required when the reconstruction carries no kernel half width")
        exclude = recon.kernel_half_width + 1
    try:
        m = diff_metrics(truth, recon, exclude)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = json.dumps({"mean": m.mean, "sd": m.sd, "skewness": m.skewness}, separators=(",", ":")) + "\n"
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_benchmark(a) -> None:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    configs = load_scenarios(a.config)
    benchmark_table(configs, a.out_csv, a.out_json, threads=a.threads)


COMMANDS = {
    "simulate": cmd_simulate,
    "oversample": cmd_oversample,
    "reconstruct": cmd_reconstruct,
    "metrics": cmd_metrics,
    "benchmark": cmd_benchmark,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except (FormatError, OSError, json.JSONDecodeError) as exc:
        print(f"regsynth {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"regsynth {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError, TypeError) as exc:
        print(f"regsynth {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
