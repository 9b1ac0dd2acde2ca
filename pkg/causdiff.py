#!/usr/bin/env python3
"""
causdiff - causal diffusion toolkit
Forward evolution, synthetic data and backwards diffusion for the
finite-speed diffusion model
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from datetime import datetime
from io import StringIO

import numpy as np

from errors import CausDiffError, ConfigurationError, DomainError
from forward import (
    PATHS,
    apply_forward,
    crop_grid,
    evolve_euler_standard,
    evolve_spectral,
    evolve_spectral_rate,
    l2_norm,
    pad_grid,
    required_padding,
)
from green_spectral import (
    DiffusionParams,
    envelope_decay_rate,
    fourier_normalization,
    ghat_causal,
    ghat_perturbed,
    ghat_standard,
    zero_set,
)
from gridio import load_config, read_grid, write_csv, write_grid, write_pgm
from inversion import (
    moore_penrose_spectral,
    relative_error,
    solve_landweber,
    time_reversal,
    write_iteration_log,
)
from particle import add_data_noise, particle_rng, relative_noise_level, simulate_data
from phantoms import make_phantom
from upsilon import UpsilonEvaluator

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

# ============================================================================
# Logging System
# ============================================================================

class TeeOutput:
    """Capture stdout/stderr while still printing to console."""
    def __init__(self):
        self.buffer = StringIO()
        self.terminal = sys.stdout

    def write(self, message):
        self.terminal.write(message)
        self.buffer.write(message)

    def flush(self):
        self.terminal.flush()
        self.buffer.flush()

    def getvalue(self):
        return self.buffer.getvalue()


def write_run_meta(path, args, tee, start_time, end_time, exit_code):
    meta = {
        "command": args.command,
        "arguments": {k: v for k, v in vars(args).items() if k != "handler"},
        "started": start_time.isoformat(timespec="seconds"),
        "finished": end_time.isoformat(timespec="seconds"),
        "duration_seconds": (end_time - start_time).total_seconds(),
        "exit_code": exit_code,
        "log": tee.getvalue(),
    }
    with open(path, "w") as f:
        json.dump(meta, f, indent=2, default=str)


def banner(title):
    print("=" * 60)
    print(title)
    print("=" * 60)


# ============================================================================
# Shared helpers
# ============================================================================

def _config_overrides(args, exclude=()):
    keys = ("T", "method", "eta", "seed", "output_dir", "forward_path", "max_iters", "M")
    return {k: getattr(args, k, None) for k in keys if k not in exclude}


def _prepare_output(directory):
    os.makedirs(directory, exist_ok=True)
    return directory


def _save(grid, directory, stem):
    write_grid(os.path.join(directory, f"{stem}.cdg"), grid)
    write_pgm(os.path.join(directory, f"{stem}.pgm"), grid)
    print(f"✓ Wrote {stem}.cdg / {stem}.pgm ({grid.rows}x{grid.cols})")


def load_truth(cfg):
    if cfg.input is not None:
        truth = read_grid(cfg.input)
        print(f"✓ Loaded input grid {cfg.input}")
    else:
        truth = make_phantom(cfg.image, cfg.rows, cfg.cols, cfg.dx)
        print(f"✓ Built {cfg.image} phantom {cfg.rows}x{cfg.cols}, dx={cfg.dx:g}")
    return truth


def _padding(cfg, p, T, dx):
    return required_padding(p, T, dx) if cfg.pad else 0


# ============================================================================
# Subcommands
# ============================================================================

def cmd_upsilon(args):
    if not (0 <= args.t_min < args.t_max) or args.points < 2:
        raise DomainError(f"need 0 <= t_min < t_max and points >= 2, got [{args.t_min}, {args.t_max}], {args.points}")
    ev = UpsilonEvaluator(args.N)
    t = np.linspace(args.t_min, args.t_max, args.points)
    rows = zip(t, np.asarray(ev.eval(t)), np.asarray(ev.eval_derivative(t)))
    write_csv(args.output, ["t", "upsilon", "derivative"], rows)
    print(f"✓ Υ_{args.N} on [{args.t_min:g}, {args.t_max:g}] written to {args.output}")


def cmd_compare_green(args):
    p = DiffusionParams(args.c, args.tau, args.N)
    k = np.linspace(0.0, args.k_max, args.points)
    norm = fourier_normalization(p.N)
    header, columns = ["k"], [k]
    for t in args.times:
        causal = np.asarray(ghat_causal(p, k, t)) / norm
        standard = np.asarray(ghat_standard(p, k, t)) / norm
        perturbed = np.asarray(ghat_perturbed(p, k, t)) / norm
        header += [f"causal_t{t:g}", f"standard_t{t:g}", f"perturbed_t{t:g}"]
        columns += [causal, standard, perturbed]
        exponent, a_T = envelope_decay_rate(p, t)
        print(f"✓ t={t:g}: envelope ~ {a_T:.4g} k^-{exponent:g}")
    write_csv(args.output, header, zip(*columns))
    print(f"✓ D0 = {p.D0:.6g}, D# = {p.D_perturbed:.6g}; table written to {args.output}")


def cmd_zeros(args):
    if args.t is not None:
        p = DiffusionParams(args.c, args.tau, args.N)
        zeros = zero_set(p, args.t, args.k_max)
        label = f"zeros of Ĝ_causal(·, {args.t:g}) in (0, {args.k_max:g}]"
    else:
        ev = UpsilonEvaluator(args.N)
        zeros = ev.zeros_in(args.a, args.b, which=args.which)
        label = f"zeros of Υ_{args.N} ({args.which}) in [{args.a:g}, {args.b:g}]"
    print(f"✓ {len(zeros)} {label}")
    for z in zeros:
        print(f"  {z!r}")
    if args.output:
        write_csv(args.output, ["zero"], ([z] for z in zeros))


def cmd_forward(args):
    cfg = load_config(args.config, _config_overrides(args, exclude=("method",)))
    p = cfg.params()
    out_dir = _prepare_output(cfg.output_dir)
    truth = load_truth(cfg)
    times = [f * p.tau for f in args.t_over_tau] if args.t_over_tau else [cfg.T]
    pad = _padding(cfg, p, max(times), truth.dx)
    u = pad_grid(truth, pad)
    rows = []

    for index, t in enumerate(times):
        print(f"\n--- t = {t:.6g} ({t / p.tau:.4g} tau) ---")
        if args.method == "euler":
            result = evolve_euler_standard(u, p, t, args.dt or _euler_dt(p, u.dx))
        elif args.method == "compare":
            result = apply_forward(u, p, t, cfg.forward_path, cfg.stencil_points)
            standard = evolve_euler_standard(u, p, t, args.dt or _euler_dt(p, u.dx))
            difference = relative_error(result, standard)
            print(f"✓ causal vs standard relative L2 difference {difference:.4e}")
            _save(crop_grid(standard, pad), out_dir, f"standard_{index:02d}")
        else:
            result = apply_forward(u, p, t, args.method, cfg.stencil_points)
        if result.clipped:
            print("⚠️  Support reached the grid border, mass may be lost")
        print(f"✓ mass {result.total_mass:.10g} (initial {u.total_mass:.10g})")
        rows.append([t, result.total_mass, l2_norm(result)])
        _save(crop_grid(result, pad), out_dir, f"forward_{index:02d}")

    write_csv(os.path.join(out_dir, "forward.csv"), ["t", "mass", "l2_norm"], rows)


def _euler_dt(p, dx):
    limit = dx ** 2 / (2 * p.N * p.D0)
    return min(p.tau, limit)


def cmd_simulate(args):
    cfg = load_config(args.config, _config_overrides(args))
    p = cfg.params()
    out_dir = _prepare_output(cfg.output_dir)
    truth = load_truth(cfg)
    pad = _padding(cfg, p, cfg.T, truth.dx)

    data = simulate_data(pad_grid(truth, pad), p, cfg.T, cfg.M, cfg.noise_spec(), cfg.seed)
    print(f"✓ Particle data for T={cfg.T:g} with M={cfg.M}, mass {data.total_mass:.8g}")
    _save(truth, out_dir, "truth")
    _save(crop_grid(data, pad), out_dir, "data")


def _spectral_data(u, p, cfg, rate):
    clean = evolve_spectral_rate(u, p, cfg.T) if rate else evolve_spectral(u, p, cfg.T)
    return add_data_noise(clean, cfg.noise_spec(), particle_rng(cfg.noise_seed, 2 if rate else 1))


def cmd_invert(args):
    cfg = load_config(args.config, _config_overrides(args))
    p = cfg.params()
    out_dir = _prepare_output(cfg.output_dir)
    truth = load_truth(cfg)
    pad = _padding(cfg, p, cfg.T, truth.dx)
    u_true = pad_grid(truth, pad)

    if args.data:
        data = pad_grid(read_grid(args.data), pad)
        print(f"✓ Loaded data {args.data}")
    elif cfg.method == "time_reversal":
        data = _spectral_data(u_true, p, cfg, rate=False)
    else:
        data = simulate_data(u_true, p, cfg.T, cfg.M, cfg.noise_spec(), cfg.seed)
        print(f"✓ Particle data simulated (M={cfg.M})")

    if cfg.method == "landweber":
        clean = apply_forward(u_true, p, cfg.T, cfg.forward_path, cfg.stencil_points)
        realised = relative_noise_level(data, clean)
        lw = cfg.landweber_config()
        if cfg.delta_source == "realised":
            lw = replace(lw, delta=realised)
        print(f"✓ Realised relative data error {realised:.4e}, discrepancy uses delta={lw.delta:.4e}")
        state = solve_landweber(data, p, cfg.T, lw)
        estimate = state.iterate
        write_iteration_log(state, os.path.join(out_dir, "iterations.csv"))
        marker = "✓" if state.stop_reason == "discrepancy" else "⚠️ "
        print(f"{marker} Landweber stopped after {state.stopped_at} steps ({state.stop_reason})")
    elif cfg.method == "moore_penrose":
        result = moore_penrose_spectral(data, p, cfg.T, cfg.zero_mask_tol)
        estimate = result.grid
        print(f"✓ Moore-Penrose inverse, {100 * result.masked_fraction:.1f}% of bins masked")
    else:
        rate = _spectral_data(u_true, p, cfg, rate=True)
        estimate = time_reversal(data, rate, p, cfg.T, cfg.band_split_tol)
        print("✓ Time reversal from w and ∂w/∂t")

    reconstruction = crop_grid(estimate, pad)
    error = relative_error(reconstruction, truth)
    print(f"✓ Relative L2 error {error:.4e}")
    _save(crop_grid(data, pad), out_dir, "data")
    _save(reconstruction, out_dir, "reconstruction")


# ============================================================================
# Main Entry Point
# ============================================================================

def build_parser():
    parser = argparse.ArgumentParser(
        description="Causal diffusion: forward model, synthetic data and inversion",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s upsilon --N 3 --t-max 20 --output upsilon3.csv
  %(prog)s compare-green --c 1 --tau 1 --times 0.5 1 3 --output green.csv
  %(prog)s zeros --N 2 --a 0 --b 20
  %(prog)s forward --config configs/unit_pixel_compare.json --method compare
  %(prog)s invert --config configs/question_mark_T1.json
        """,
    )
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Level of library log messages (default: WARNING)")
    parser.add_argument("--meta", help="Write run metadata (log, timestamps) to this JSON file")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ups = sub.add_parser("upsilon", help="Tabulate Υ_N and Υ'_N")
    p_ups.add_argument("--N", type=int, default=2)
    p_ups.add_argument("--t-min", type=float, default=0.0)
    p_ups.add_argument("--t-max", type=float, default=20.0)
    p_ups.add_argument("--points", type=int, default=401)
    p_ups.add_argument("--output", required=True)
    p_ups.set_defaults(handler=cmd_upsilon)

    p_green = sub.add_parser("compare-green", help="Causal, standard and perturbed Green functions")
    p_green.add_argument("--c", type=float, required=True)
    p_green.add_argument("--tau", type=float, required=True)
    p_green.add_argument("--N", type=int, default=2)
    p_green.add_argument("--times", type=float, nargs="+", required=True)
    p_green.add_argument("--k-max", type=float, default=40.0)
    p_green.add_argument("--points", type=int, default=801)
    p_green.add_argument("--output", required=True)
    p_green.set_defaults(handler=cmd_compare_green)

    p_zeros = sub.add_parser("zeros", help="Zeros of Υ_N, Υ'_N or Ĝ_causal")
    p_zeros.add_argument("--N", type=int, default=2)
    p_zeros.add_argument("--a", type=float, default=0.0)
    p_zeros.add_argument("--b", type=float, default=20.0)
    p_zeros.add_argument("--which", choices=["function", "derivative"], default="function")
    p_zeros.add_argument("--c", type=float, default=1.0)
    p_zeros.add_argument("--tau", type=float, default=1.0)
    p_zeros.add_argument("--t", type=float, help="Zeros of the Green function at this time instead")
    p_zeros.add_argument("--k-max", type=float, default=20.0)
    p_zeros.add_argument("--output")
    p_zeros.set_defaults(handler=cmd_zeros)

    for name, handler, text in (
        ("forward", cmd_forward, "Evolve an image forward in time"),
        ("simulate", cmd_simulate, "Particle-method synthetic data"),
        ("invert", cmd_invert, "Backwards diffusion from data"),
    ):
        p_cmd = sub.add_parser(name, help=text)
        p_cmd.add_argument("--config", required=True, help="Experiment JSON file")
        p_cmd.add_argument("--T", type=float, help="Override the evolution time")
        p_cmd.add_argument("--seed", type=int, help="Override the particle seed")
        p_cmd.add_argument("--M", type=int, help="Override the particle split count")
        p_cmd.add_argument("--output-dir", help="Override the output directory")
        p_cmd.add_argument("--forward-path", choices=PATHS, help="Override the forward path")
        p_cmd.set_defaults(handler=handler)
        if name == "forward":
            p_cmd.add_argument("--method", choices=["spatial", "spectral", "euler", "compare"],
                               default="spatial")
            p_cmd.add_argument("--t-over-tau", type=float, nargs="+",
                               help="Evolution times as multiples of tau")
            p_cmd.add_argument("--dt", type=float, help="Euler time step (default: stability limit)")
        if name == "invert":
            p_cmd.add_argument("--method", choices=["landweber", "moore_penrose", "time_reversal"])
            p_cmd.add_argument("--eta", type=float, help="Override the discrepancy factor")
            p_cmd.add_argument("--max-iters", type=int)
            p_cmd.add_argument("--data", help="Data GridFile instead of simulated data")
    return parser


def _meta_path(args):
    if args.meta:
        return args.meta
    if args.command in ("forward", "simulate", "invert"):
        directory = args.output_dir
        if directory is None:
            try:
                with open(args.config) as f:
                    directory = json.load(f).get("output_dir", "output")
            except (OSError, ValueError, AttributeError):
                return None
        return os.path.join(directory, "run_meta.json") if os.path.isdir(directory) else None
    return None


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    tee = TeeOutput()
    saved = sys.stdout, sys.stderr
    sys.stdout = tee
    sys.stderr = tee
    logging.basicConfig(level=args.log_level, stream=tee, force=True,
                        format="%(levelname)s %(name)s: %(message)s")

    exit_code = EXIT_OK
    start_time = datetime.now()
    try:
        banner(f"causdiff {args.command}")
        with np.errstate(over="raise", invalid="raise"):
            args.handler(args)
        print("\n✓ Done")
    except (ConfigurationError, DomainError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"\n✗ {type(e).__name__}: {e}")
        exit_code = EXIT_USAGE
    except (CausDiffError, ArithmeticError) as e:
        print(f"\n✗ {type(e).__name__}: {e}")
        exit_code = EXIT_NUMERIC
    finally:
        end_time = datetime.now()
        sys.stdout, sys.stderr = saved
        meta = _meta_path(args)
        if meta:
            write_run_meta(meta, args, tee, start_time, end_time, exit_code)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
