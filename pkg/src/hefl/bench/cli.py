"""``hefl`` command line: experiments, ablations, host calibration and the self-test.

Exit codes: 0 on success, 1 when a run or a self-test check fails, 2 on usage
errors (bad flags, or a configuration the rules reject).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from ..errors import HeflError, ParameterError
from ..fl import ExperimentConfig
from ..fl.config import CryptoConfig
from .report import FORMATS, emit_report, render
from .runner import AblationSpec, ablate, apply_calibration, cache_file, check_ring_degree, run_calibration, run_config
from .selftest import CHECKS, run_selftest

log = logging.getLogger("hefl")


class UsageError(Exception):
    """Raised for invalid flag combinations; mapped to exit code 2."""


def _ring_degree(text: str) -> int:
    try:
        return check_ring_degree(int(text))
    except (ValueError, ParameterError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _add_report_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--report", type=Path, help="write a report to this path")
    p.add_argument("--format", choices=FORMATS, default="csv", help="report format (default csv)")


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "--params", dest="config", type=Path,
                   help="YAML experiment config; flags given on the command line override it")
    g = p.add_argument_group("federation")
    g.add_argument("--rule", choices=("krum", "multi-krum", "median", "mean"))
    g.add_argument("--clients", type=_positive)
    g.add_argument("--byzantine", type=int, help="assumed (and, with --attack, actual) malicious clients")
    g.add_argument("--l", type=_positive, help="Multi-Krum selection size")
    g.add_argument("--attack", choices=("none", "label-flip", "untargeted", "targeted"))
    g.add_argument("--scale", type=float, help="untargeted attack scale lambda")
    g.add_argument("--rounds", type=_positive)
    g.add_argument("--seed", type=int)
    g.add_argument("--mode", choices=("encrypted", "plaintext"))
    g.add_argument("--mirror", action="store_true", default=None, help="also run the plaintext pipeline")
    g.add_argument("--samples", type=_positive)
    g.add_argument("--dim", type=_positive)
    g.add_argument("--classes", type=_positive)
    c = p.add_argument_group("crypto")
    c.add_argument("--ring-degree", type=_ring_degree)
    c.add_argument("--depth", type=_positive)
    c.add_argument("--scale-bits", type=_positive)
    c.add_argument("--lazy-relin", type=_on_off, metavar="{on,off}")
    c.add_argument("--hoisting", choices=("off", "full", "dynamic"))
    c.add_argument("--memory-budget", type=_positive, help="bytes available to hoisting")
    c.add_argument("--slot-sum-at-kgc", action="store_true", default=None,
                   help="skip server-side rotations; the KGC sums slots after decryption")
    c.add_argument("--sumdis-score", action="store_true", default=None,
                   help="score clients by total distance (row sums) instead of Krum scores")
    c.add_argument("--threads", type=_positive)
    o = p.add_argument_group("output")
    o.add_argument("--transcript", type=Path, help="append one JSON line per round")
    o.add_argument("--redact-kgc", action="store_true", default=None)
    o.add_argument("--dump-ciphertexts", type=Path, metavar="DIR")
    _add_report_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hefl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("experiment", help="run one federated training experiment")
    _add_experiment_flags(exp)
    exp.add_argument("--repetitions", type=_positive, default=1)

    abl = sub.add_parser("ablate", help="run a configuration under each value of one toggle")
    _add_experiment_flags(abl)
    abl.add_argument("--toggle", required=True, choices=("lazy-relin", "hoisting", "ring-degree"))
    abl.add_argument("--ring-degrees", type=_ring_degree, nargs="+", help="values for the ring-degree toggle")
    abl.add_argument("--repetitions", type=_positive, default=1)

    cal = sub.add_parser("calibrate", help="measure T_H, T_D and M_c on this host and cache them")
    cal.add_argument("--ring-degree", type=_ring_degree, default=1 << 13)
    cal.add_argument("--depth", type=_positive, default=3)
    cal.add_argument("--scale-bits", type=_positive, default=40)
    cal.add_argument("--runs", type=_positive, default=11)
    cal.add_argument("--seed", type=int, default=0)
    cal.add_argument("--cache", type=Path, help=f"cache file (default {cache_file()})")

    st = sub.add_parser("selftest", help="run the bundled oracle-equivalence checks")
    st.add_argument("--check", action="append", choices=sorted(CHECKS), help="run only these checks")
    st.add_argument("--golden", type=Path, help="compare the CSV report byte for byte with this file")
    _add_report_flags(st)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Merge the optional YAML config with explicitly given flags."""
    raw: dict = {}
    if args.config is not None:
        try:
            raw = yaml.safe_load(args.config.read_text()) or {}
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None

    def put(section, key, value):
        if value is not None:
            raw.setdefault(section, {})[key] = value

    for key in ("clients", "seed", "mode", "mirror"):
        if getattr(args, key) is not None:
            raw[key] = getattr(args, key)
    put("rule", "rule", args.rule)
    put("rule", "c", args.byzantine)
    put("rule", "l", args.l)
    if args.sumdis_score:
        put("rule", "score_mode", "sumdis")
    if args.attack is not None:
        put("attack", "kind", args.attack)
    if args.byzantine is not None and (args.attack or raw.get("attack", {}).get("kind", "none")) != "none":
        put("attack", "byzantine", args.byzantine)
    put("attack", "scale", args.scale)
    put("training", "max_rounds", args.rounds)
    put("data", "samples", args.samples)
    put("data", "dim", args.dim)
    put("data", "classes", args.classes)
    put("crypto", "ring_degree", args.ring_degree)
    put("crypto", "depth", args.depth)
    put("crypto", "scale_bits", args.scale_bits)
    put("crypto", "lazy_relin", args.lazy_relin)
    put("crypto", "hoisting", args.hoisting)
    put("crypto", "memory_budget", args.memory_budget)
    put("crypto", "slot_sum_at_kgc", args.slot_sum_at_kgc)
    put("crypto", "threads", args.threads)
    put("output", "transcript", None if args.transcript is None else str(args.transcript))
    put("output", "dump_ciphertexts", None if args.dump_ciphertexts is None else str(args.dump_ciphertexts))
    put("output", "redact_kgc", args.redact_kgc)
    try:
        return apply_calibration(ExperimentConfig.from_dict(raw))
    except ParameterError as exc:
        raise UsageError(str(exc)) from None


def _write(rows: list[dict], args) -> None:
    if args.report is not None:
        emit_report(rows, args.report, args.format)
        log.info("report written to %s", args.report)
    else:
        sys.stdout.write(render(rows, args.format))


def cmd_experiment(args) -> int:
    cfg = config_from_args(args)
    row = run_config(cfg, args.repetitions)
    _write([row], args)
    return 0


def cmd_ablate(args) -> int:
    cfg = config_from_args(args)
    try:
        spec = AblationSpec.default(args.toggle, args.repetitions, args.ring_degrees)
        spec.configs(cfg)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    _write(ablate(cfg, spec), args)
    return 0


def cmd_calibrate(args) -> int:
    params = CryptoConfig(ring_degree=args.ring_degree, depth=args.depth, scale_bits=args.scale_bits).params()
    entry = run_calibration(params, args.seed, args.runs, args.cache)
    print(json.dumps(entry, sort_keys=True))
    return 0


def cmd_selftest(args) -> int:
    rows = run_selftest(args.check)
    failed = [r["check"] for r in rows if not r["passed"]]
    for r in rows:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['check']}" + (f"  ({r['error']})" if "error" in r else ""))
    if args.report is not None:
        emit_report(rows, args.report, args.format)
    if args.golden is not None and render(rows, "csv").encode() != args.golden.read_bytes():
        print(f"FAIL report differs from golden file {args.golden}")
        return 1
    return 1 if failed else 0


COMMANDS = {"experiment": cmd_experiment, "ablate": cmd_ablate, "calibrate": cmd_calibrate,
            "selftest": cmd_selftest}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hefl: error: {exc}", file=sys.stderr)
        return 2
    except (HeflError, OSError) as exc:
        print(f"hefl: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
