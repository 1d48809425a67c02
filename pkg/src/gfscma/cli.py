"""Command-line entry points: train, eval, xcorr, gen-preambles, report, run."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness, models
from .airlink import ConfigError, PreambleSet, ScenarioConfig
from .xcorr import xcorr_report


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def cmd_train(args) -> int:
    doc = json.loads(Path(args.config).read_text())
    scenario = ScenarioConfig.from_json(doc["scenario"])
    tc = models.TrainConfig.from_json(doc.get("train", {}))
    frozen = PreambleSet.load(args.preambles) if args.preambles else None
    if args.variant == "data-aided-independent" and frozen is None:
        print("error: --preambles is required for data-aided-independent", file=sys.stderr)
        return 2
    system = models.train(args.variant, scenario, tc, preambles=frozen)
    models.save_system(system, args.out)
    print(f"saved {args.variant} to {args.out} (final loss {system.loss_log[-1]:.4f})" if system.loss_log
          else f"saved untrained {args.variant} to {args.out}")
    return 0


def cmd_eval(args) -> int:
    system = models.load_system(args.checkpoint)
    rows = harness.snr_sweep([system], system.scenario, _floats(args.snr), args.trials, args.seed)
    text = harness.write_ader_csv(rows, args.out)
    sys.stdout.write(text)
    return 0


def cmd_xcorr(args) -> int:
    report = xcorr_report(PreambleSet.load(args.preambles))
    sys.stdout.write(report.to_csv(args.csv))
    if args.json:
        report.to_json(args.json)
    print(json.dumps(report.summary()), file=sys.stderr)
    return 0


def cmd_gen(args) -> int:
    ps = models.gen_independent_preambles(args.n, args.kp, args.kind, args.seed, args.j)
    if args.out:
        ps.save(args.out)
    else:
        print(json.dumps(ps.to_json()))
    return 0


def cmd_report(args) -> int:
    print(harness.format_report(args.dir))
    return 0


def cmd_run(args) -> int:
    out = harness.run_experiment(args.config, reuse=args.reuse)
    print(harness.format_report(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfscma", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one AUD system")
    p.add_argument("--config", required=True)
    p.add_argument("--variant", required=True, choices=models.VARIANTS)
    p.add_argument("--out", required=True)
    p.add_argument("--preambles", help="frozen PreambleSet JSON (independent variant)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="ADER of a checkpoint over an SNR list")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--snr", required=True, help="comma separated dB values")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write ader.csv here as well")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("xcorr", help="cross-correlation report of a PreambleSet JSON")
    p.add_argument("--preambles", required=True)
    p.add_argument("--csv")
    p.add_argument("--json")
    p.set_defaults(func=cmd_xcorr)

    p = sub.add_parser("gen-preambles", help="independently designed preamble set")
    p.add_argument("--kind", required=True, choices=["gaussian", "qpsk", "zadoff-chu-family"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--kp", type=int, required=True)
    p.add_argument("--j", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("report", help="summarize an experiment directory")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="full experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--reuse", action="store_true", help="load existing checkpoints instead of training")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
