"""Command-line entry point: ``beamrate run | gen | validate``."""

import argparse
import logging
import os
import sys

import yaml

from beamrate.channels import generate, normalize, save
from beamrate.config import load_config, parse_scenario
from beamrate.errors import BeamrateError, ValidationError
from beamrate.results import emit
from beamrate.runner import CellError, run

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
THREADS_ENV = "BEAMRATE_THREADS"

log = logging.getLogger("beamrate")


def _threads(value):
    if value is None:
        value = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(value)
    except ValueError:
        raise ValidationError(f"thread count must be an integer, got {value!r}") from None
    if n < 1:
        raise ValidationError(f"thread count must be >= 1, got {n}")
    return n


def _cmd_run(args):
    cfg = load_config(args.config)
    threads = _threads(args.threads)
    result = run(cfg, threads=threads)
    emit(result, args.format or cfg.output_format, args.output or cfg.output_path)


def _cmd_validate(args):
    load_config(args.config)
    print(f"{args.config}: ok")


def _cmd_gen(args):
    try:
        with open(args.scenario, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ValidationError(f"{args.scenario}: not valid YAML ({exc})") from exc
    except OSError as exc:
        raise ValidationError(f"cannot read scenario: {exc}") from exc
    # accept either a bare scenario mapping or a full experiment config
    if isinstance(raw, dict) and "scenario" in raw:
        spec, norm = parse_scenario(raw["scenario"], raw.get("seed"))
    else:
        spec, norm = parse_scenario(raw)
    t = generate(spec)
    save(normalize(t) if norm else t, args.out)


def build_parser():
    p = argparse.ArgumentParser(prog="beamrate",
                                description="Massive MIMO-OFDM downlink beamforming simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output file (default: config output.path, else stdout)")
    r.add_argument("--format", choices=("csv", "json"))
    r.add_argument("--threads", help=f"worker threads (default: ${THREADS_ENV} or 1)")
    r.set_defaults(func=_cmd_run)

    g = sub.add_parser("gen", help="generate a channel tensor file (MMC1)")
    g.add_argument("scenario")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen)

    v = sub.add_parser("validate", help="parse a config without running it")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CellError as exc:
        print(f"beamrate: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, ValueError, TypeError) as exc:
        print(f"beamrate: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"beamrate: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BeamrateError as exc:
        print(f"beamrate: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
