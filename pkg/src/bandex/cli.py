"""Command-line entry point ``bandex``.

Exit codes: 0 success, 1 usage or configuration, 2 data error (unreadable
or malformed audio, corpus or model), 3 numerical or training failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import (
    BandexError,
    ConfigurationError,
    FormatError,
    LoadError,
    NumericalError,
    PreconditionError,
    TrainingError,
)
from .filters import design_inverse_irs, irs_modified_response
from .pipeline import (
    PipelineConfig,
    evaluate,
    extend_file,
    load_config,
    report_text,
    train,
    write_frames_csv,
    write_report,
)
from .predictors import load_model, save_model

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _hidden(text: str) -> tuple:
    try:
        sizes = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated sizes, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("hidden sizes must be positive")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bandex", description="Telephone speech (8 kHz) to wideband (16 kHz) extension.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("extend", help="extend an 8 kHz WAV file to 16 kHz")
    e.add_argument("--in", dest="input", required=True, type=Path)
    e.add_argument("--out", required=True, type=Path)
    e.add_argument("--model", type=Path, help="model bundle (or 'model' in the config)")
    e.add_argument("--no-irs-inverse", action="store_true", help="skip the inverse IRS equalizer")
    e.add_argument("--config", type=Path, help="flat key = value configuration file")

    t = sub.add_parser("train", help="train predictors on a wideband 16 kHz corpus")
    t.add_argument("--corpus", required=True, type=Path)
    t.add_argument("--out", required=True, type=Path)
    t.add_argument("--predictor", choices=("mlp", "codebook", "regression"))
    t.add_argument("--hidden", type=_hidden)
    t.add_argument("--codebook-bits", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--config", type=Path)

    v = sub.add_parser("eval", help="evaluate a model bundle on a wideband corpus")
    v.add_argument("--corpus", required=True, type=Path)
    v.add_argument("--model", required=True, type=Path)
    v.add_argument("--report", required=True, type=Path)
    v.add_argument("--frames", required=True, type=Path)
    v.add_argument("--config", type=Path)

    d = sub.add_parser("design-irs-inverse", help="design the inverse IRS equalizer")
    d.add_argument("--irs-table", type=Path, help="frequency/magnitude table (default: shipped table)")
    d.add_argument("--half-order", type=int, default=30)
    d.add_argument("--out", required=True, type=Path)
    return p


def _config(args, **overrides) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    changes = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _extend(args) -> int:
    cfg = _config(args, irs_inverse=False if args.no_irs_inverse else None)
    model = args.model or cfg.model
    if model is None:
        raise ConfigurationError("no model bundle given (--model or 'model' in the config)")
    extend_file(args.input, args.out, load_model(model), cfg)
    return EXIT_OK


def _train(args) -> int:
    cfg = _config(args, predictor=args.predictor, hidden=args.hidden, codebook_bits=args.codebook_bits,
                  seed=args.seed)
    bundle, report = train(args.corpus, cfg)
    save_model(bundle, args.out)
    text = report_text(report)
    args.out.with_suffix(args.out.suffix + ".report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _eval(args) -> int:
    rep = evaluate(args.corpus, load_model(args.model), _config(args))
    write_report(rep, args.report)
    write_frames_csv(rep, args.frames)
    sys.stdout.write(rep.text())
    return EXIT_OK


def _design(args) -> int:
    if args.irs_table is not None and not args.irs_table.is_file():
        raise FormatError(f"cannot read IRS table {args.irs_table}")
    fir = design_inverse_irs(irs_modified_response(512, args.irs_table), args.half_order)
    np.savetxt(args.out, fir.coefficients, fmt="%.17g",
               header=f"inverse IRS, {len(fir)} taps, 8000 Hz, linear phase")
    return EXIT_OK


COMMANDS = {"extend": _extend, "train": _train, "eval": _eval, "design-irs-inverse": _design}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, PreconditionError) as exc:
        print(f"bandex: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, LoadError, OSError) as exc:
        print(f"bandex: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, TrainingError) as exc:
        print(f"bandex: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BandexError as exc:
        print(f"bandex: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
