"""Command-line entry point.

Exit status is 0 on success, 1 on a numerical failure (including a failed
gradient audit) and 2 on a configuration or usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import audit, config, experiments, grape, hardware
from .config import ConfigError
from .linalg import ConvergenceError

log = logging.getLogger("lgrape")

BENCHES = {
    "integrators": "integrator-scaling",
    "raddamp": "raddamp-scaling",
    "broadband": "broadband-grape",
    "prephasing": "prephasing-rlc",
}

OPTIMIZE_DEFAULTS = {"problem": "prephasing", "n_intervals": 16, "max_iterations": 0}


class NumericalFailure(RuntimeError):
    pass


def _sections(args):
    return config.load(args.config) if args.config else {}


def _seeded(params, seed):
    if seed is not None and "seeds" in params:
        params = dict(params)
        params["seeds"] = [seed + i for i in range(len(params["seeds"]))]
    return params


def cmd_bench(args):
    exp = BENCHES[args.which]
    sections = _sections(args)
    cfg = experiments.ExperimentConfig.from_sections(exp, sections, jobs=args.jobs)
    cfg.params = _seeded(cfg.params, args.seed)
    cfg.out = Path(args.out or f"{exp}.csv")
    table = experiments.run(cfg)
    for k, v in table.meta.items():
        if k.startswith(("slope_", "error_", "final_mu")):
            print(f"{k}: {experiments._fmt(v)}")
    if exp == "broadband-grape":
        for (s, n), m in sorted(experiments.medians(table).items(), key=lambda kv: kv[0][::-1]):
            print(f"median {s} n={n}: {m:.6f}")
    elif exp == "prephasing-rlc":
        for col in ("pre_distortion_fidelity", "post_distortion_fidelity"):
            for (s,), m in sorted(experiments.medians(table, col, ("parameterization",)).items()):
                print(f"median {col} {s}: {m:.6f}")
    print(f"wrote {cfg.out}")
    return 0


def cmd_optimize(args):
    sections = _sections(args)
    opts = config.merge(OPTIMIZE_DEFAULTS, sections.get("optimize", {}), "optimize")
    problem = opts["problem"]
    seed = 0 if args.seed is None else args.seed
    if problem == "prephasing":
        cfg = experiments.ExperimentConfig.from_sections("prephasing-rlc", sections)
        p = cfg.params
        if opts["max_iterations"]:
            p["max_iterations"] = opts["max_iterations"]
        seq, res = experiments.optimise_prephasing(p, args.interpolation, seed)
    elif problem == "broadband":
        cfg = experiments.ExperimentConfig.from_sections("broadband-grape", sections)
        p = cfg.params
        if opts["max_iterations"]:
            p["max_iterations"] = opts["max_iterations"]
        seq, res = experiments.optimise_broadband(p, args.interpolation, opts["n_intervals"], seed)
    else:
        raise ConfigError(f"optimize.problem must be 'prephasing' or 'broadband', got {problem!r}")
    out = Path(args.out or f"{problem}-{args.interpolation}.csv")
    hardware.write_waveform(out, hardware.Waveform.from_sequence(seq))
    logpath = out.with_suffix(".log.csv")
    logpath.write_text("iteration,fidelity\n"
                       + "".join(f"{i},{1.0 - v!r}\n" for i, v in enumerate(res.history)))
    print(f"fidelity {1.0 - res.fun:.8f} after {res.n_iter} iterations ({res.status})")
    print(f"wrote {out} and {logpath}")
    return 0


def cmd_distort(args):
    w = hardware.read_waveform(args.input, args.interp)
    if not isinstance(w, hardware.Waveform):
        raise ConfigError(f"{args.input}: expected a rotating-frame waveform")
    try:
        rlc = hardware.RLCParams(2 * np.pi * args.f0, args.q)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.oversample < hardware.MIN_OVERSAMPLING:
        raise ConfigError(f"--oversample must be at least {hardware.MIN_OVERSAMPLING}")
    d = hardware.distort(w, rlc, args.oversample)
    step = slice(None, None, args.oversample)
    out = hardware.Waveform(d.output.t[step], d.output.cx[step], d.output.cy[step])
    hardware.write_waveform(args.output, out)
    print(f"delay {d.delay:.6e} s; wrote {args.output}")
    return 0


def cmd_check_grad(args):
    seed = 0 if args.seed is None else args.seed
    report = audit.gradient_audit(seed, args.n_problems)
    lines = report.lines()
    for line in lines:
        print(line)
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    if not report.passed(1e-6):
        raise NumericalFailure("gradient audit exceeded 1e-6")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'section.key = value' config file")
    common.add_argument("--out", help="output path")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")

    ap = argparse.ArgumentParser(prog="lgrape", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", parents=[common], help="run a benchmark study")
    b.add_argument("which", choices=sorted(BENCHES))
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("optimize", parents=[common], help="optimise one pulse")
    o.add_argument("interpolation", choices=["pwc", "pwl"])
    o.set_defaults(func=cmd_optimize)

    d = sub.add_parser("distort", parents=[common], help="pass a waveform through the RLC model")
    d.add_argument("--q", type=float, default=200.0)
    d.add_argument("--f0", type=float, default=5e5, help="resonance frequency (Hz)")
    d.add_argument("--oversample", type=int, default=16)
    d.add_argument("--interp", choices=["pwc", "pwl"], default="pwl")
    d.add_argument("input")
    d.add_argument("output")
    d.set_defaults(func=cmd_distort)

    c = sub.add_parser("check-grad", parents=[common], help="finite-difference gradient audit")
    c.add_argument("--n-problems", type=int, default=100)
    c.set_defaults(func=cmd_check_grad)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, ConvergenceError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
