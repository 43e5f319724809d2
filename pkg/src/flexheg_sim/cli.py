"""``flexheg-sim`` command line.

Exit codes: 0 success, 1 invalid input (bad flags, config or parameters,
unwritable output), 2 a failed check in ``repro paper``.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import oversight as ov
from . import stability as st
from .scenario import ConfigError, ReportWriteError, emit_report, parse_config, run_scenario
from .scenario.report import to_csv

OUT_ENV = "FLEXHEG_SIM_OUT"
DEFAULT_OUT = "flexheg-out"

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_CHECK_FAILED = 2

EVAL_COLUMNS = ("u_w", "p_doom", "p_w_given_d", "u_c", "defector_payoff", "threshold", "stable")
MC_COLUMNS = ("p", "n", "trials", "seed", "analytic", "monte_carlo", "abs_error", "stderr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _stability_eval(args) -> int:
    params = st.StabilityParams(args.uw, args.pdoom, args.pwd, args.uc)
    row = {
        "u_w": args.uw,
        "p_doom": args.pdoom,
        "p_w_given_d": args.pwd,
        "u_c": args.uc,
        "defector_payoff": st.defector_payoff(params),
        "threshold": str(st.pwd_threshold(args.uw, args.pdoom, args.uc)),
        "stable": st.is_stable(params),
    }
    sys.stdout.write(to_csv(EVAL_COLUMNS, [row]))
    return EXIT_OK


def _stability_sweep(args) -> int:
    grid = st.parse_grid(args.uw_grid)
    rows = [{"u_w": u, "p_doom": d} for u, d in st.boundary_curve(args.pwd, grid, args.uc)]
    text = to_csv(st.CURVE_COLUMNS, rows)
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8", newline="")
        except OSError as exc:
            raise ReportWriteError(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _oversight_mc(args) -> int:
    cmp = ov.compare_detection(args.p, args.n, args.trials, args.seed)
    row = {
        "p": cmp.p,
        "n": cmp.n,
        "trials": cmp.trials,
        "seed": cmp.seed,
        "analytic": round(cmp.analytic, 10),
        "monte_carlo": cmp.estimate,
        "abs_error": round(cmp.abs_error, 10),
        "stderr": round(cmp.stderr, 10),
    }
    sys.stdout.write(to_csv(MC_COLUMNS, [row]))
    return EXIT_OK


def _protocol_run(args) -> int:
    try:
        text = Path(args.scenario).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {args.scenario}: {exc}") from exc
    config = parse_config(text)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    report = run_scenario(config)
    out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    formats = ("json", "csv") if args.format == "both" else (args.format,)
    for path in emit_report(report, out, formats):
        print(path)
    print(f"checksum {report.checksum}")
    return EXIT_OK


def _repro_paper(args) -> int:
    from .repro import CHECKS, run_check

    selected = args.only or [n for n, *_ in CHECKS]
    results = []
    for number in selected:
        result = run_check(number)
        print(result.line(), flush=True)
        results.append(result)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _grid(text: str) -> str:
    st.parse_grid(text)
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flexheg-sim", description="Simulate hardware-enabled compute guarantees.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    stab = sub.add_parser("stability", help="cooperation game")
    stab_sub = stab.add_subparsers(dest="action", required=True, parser_class=_Parser)
    ev = stab_sub.add_parser("eval", help="evaluate one parameter point")
    ev.add_argument("--uw", type=float, required=True, help="value of winning the race, U(C)=1")
    ev.add_argument("--pdoom", type=float, required=True, help="probability the race ends in catastrophe")
    ev.add_argument("--pwd", type=float, required=True, help="probability the first defector wins")
    ev.add_argument("--uc", type=float, default=1.0, help="value of continued cooperation")
    ev.set_defaults(handler=_stability_eval)
    sw = stab_sub.add_parser("sweep", help="stability boundary over a U(W) grid")
    sw.add_argument("--pwd", type=float, required=True)
    sw.add_argument("--uw-grid", type=_grid, required=True, metavar="A:B:N")
    sw.add_argument("--uc", type=float, default=1.0)
    sw.add_argument("--out", help="write CSV here instead of stdout")
    sw.set_defaults(handler=_stability_sweep)

    over = sub.add_parser("oversight", help="sampling-based detection")
    over_sub = over.add_subparsers(dest="action", required=True, parser_class=_Parser)
    mc = over_sub.add_parser("mc", help="analytic vs Monte Carlo detection probability")
    mc.add_argument("--p", type=float, required=True, help="per-device sampling rate")
    mc.add_argument("--n", type=int, required=True, help="compromised devices")
    mc.add_argument("--trials", type=int, default=100_000)
    mc.add_argument("--seed", type=int, default=0)
    mc.set_defaults(handler=_oversight_mc)

    proto = sub.add_parser("protocol", help="scenario runs")
    proto_sub = proto.add_subparsers(dest="action", required=True, parser_class=_Parser)
    run = proto_sub.add_parser("run", help="run a scenario and write report files")
    run.add_argument("scenario", help="scenario JSON file")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    run.add_argument("--format", choices=("json", "csv", "both"), default="both")
    run.set_defaults(handler=_protocol_run)

    repro = sub.add_parser("repro", help="acceptance suite")
    repro_sub = repro.add_subparsers(dest="action", required=True, parser_class=_Parser)
    paper = repro_sub.add_parser("paper", help="run every acceptance check and print a table")
    paper.add_argument("--only", type=int, action="append", choices=range(1, 11), metavar="N",
                       help="run only check N (repeatable)")
    paper.set_defaults(handler=_repro_paper)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.handler(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
    except ConfigError as exc:
        for pointer, message in exc.violations:
            print(f"{pointer or '/'}: {message}", file=sys.stderr)
    except (ValueError, ReportWriteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
