"""Command-line front end: ``thermoscope {assess,estimate,simulate}``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.  Set
``THERMOSCOPE_LOG`` (e.g. ``DEBUG``, ``INFO``) for log output on stderr.
"""

import argparse
import contextlib
import json
import logging
import os
import sys

from . import hamiltonian, pipeline, serialization, simulate
from .errors import SolverError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3

log = logging.getLogger("thermoscope")


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _alpha(text):
    if text == "auto":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'auto' or a positive number") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("alpha must be positive")
    return value


def _positive(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _study(text):
    key, _, value = text.partition("=")
    if key != "trials" or not value.isdigit() or int(value) < 1:
        raise argparse.ArgumentTypeError("expected trials=K with K >= 1")
    return int(value)


def _load(args):
    if not os.path.exists(args.input):
        raise ValidationError("file not found", args.input)
    return serialization.load_dataset(args.input)


def cmd_assess(args):
    ds = _load(args)
    candidates = "auto"
    level_file = args.level_file or (args.candidates if args.candidates != "auto" else None)
    if level_file:
        if not os.path.exists(level_file):
            raise ValidationError("file not found", level_file)
        candidates = serialization.load_levels(level_file, ds)
    report = pipeline.assess(ds, candidates, margin_factor=args.margin_factor, alpha=args.alpha, seed=args.seed)
    for w in report.warnings:
        log.warning(w)
    with _open_out(args.output) as fh:
        serialization.dump_report(report, fh)
    if args.plot_data:
        winner = next(s for s in report.scores if s.label == report.winner)
        level = serialization.levels_from_dict(
            {"levels": [{"label": winner.label, "coefficients": winner.coefficients}]}, ds)[0]
        with _open_out(args.plot_data) as fh:
            serialization.write_plot_data(ds, level, fh)
    return EXIT_OK


def cmd_estimate(args):
    ds = _load(args)
    est = hamiltonian.estimate_hamiltonian(ds, args.method, args.margin_factor, seed=args.seed)
    doc = {
        "dataset_digest": serialization.dataset_digest(ds),
        "informationally_complete": ds.informationally_complete,
        "hamiltonian": serialization.hamiltonian_to_dict(est),
        "verdict": "thermalized" if est.thermal.passed else "inconclusive",
    }
    with _open_out(args.output) as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    return EXIT_OK


def cmd_simulate(args):
    if args.config:
        if not os.path.exists(args.config):
            raise ValidationError("file not found", args.config)
        config = serialization.load_simulation_config(args.config)
    else:
        config = simulate.preset_config(args.preset, seed=args.seed, noise_model=args.noise, size=args.size,
                                        R=args.samples)
    if args.study:
        rows, summary = simulate.recovery_study(config, args.study, margin_factor=args.margin_factor)
        with _open_out(args.output) as fh:
            simulate.write_study_csv(rows, summary, fh)
        return EXIT_OK
    ds = simulate.simulate_dataset(config)
    with _open_out(args.output) as fh:
        serialization.dump_dataset(ds, fh)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="thermoscope", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_input=True):
        if with_input:
            p.add_argument("--input", required=True, help="dataset JSON file")
        p.add_argument("--output", default="-", help="output file (default: stdout)")
        p.add_argument("--margin-factor", type=_positive, default=hamiltonian.MARGIN_FACTOR,
                       help="required safety factor on each thermalization term (default: %(default)s)")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized starts / simulation")

    p = sub.add_parser("assess", help="score levels of description and give a verdict")
    common(p)
    p.add_argument("--candidates", default="auto", help="'auto' or a levels JSON file")
    p.add_argument("--level-file", help="levels JSON file (overrides --candidates)")
    p.add_argument("--alpha", type=_alpha, default="auto", help="prior strength: 'auto' or a number")
    p.add_argument("--plot-data", help="write per-sample CSV for the winning level")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("estimate", help="estimate a single Hamiltonian and temperatures")
    common(p)
    p.add_argument("--method", choices=("exact", "fixed-point", "perturbative"), default="exact")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="generate synthetic data or run a recovery study")
    common(p, with_input=False)
    p.add_argument("--preset", choices=simulate.PRESETS, default="worked-qubit")
    p.add_argument("--config", help="simulation config JSON (replaces --preset, --noise, --size, --samples, --seed)")
    p.add_argument("--noise", choices=simulate.NOISE_MODELS, default="gaussian")
    p.add_argument("--size", type=int, help="sample size per preparation")
    p.add_argument("--samples", type=int, default=10, help="number of preparations R")
    p.add_argument("--study", type=_study, help="trials=K: run K simulate/assess trials and write CSV")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    level = os.environ.get("THERMOSCOPE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
