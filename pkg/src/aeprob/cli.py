"""Command-line front end.

::

    aeprob estimate --input trial.csv [--bootstrap N --seed S]
    aeprob compare  --input trial.csv [--variance model,bootstrap --bootstrap N --seed S]
    aeprob simulate --scenario S2 --runs 1000 --seed S [--bootstrap N] --out DIR

Input files are UTF-8 CSV with the header ``id,group,time,status`` (group A
or B; status 0 censored, 1 AE, 2 competing event). Reports are CSV with a
fixed header; numbers carry 6 significant digits, or full ``repr``
precision with ``--raw``.

Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import re
import sys
from pathlib import Path

from .compare import VarianceSource, estimates_at_tauset, log_rr_interval
from .errors import DataError, EmptyInput, NumericalError, ParseError, ZeroDenominator, ZeroValue
from .estimators import parse_estimators
from .model import Group, Policy, SubjectRecord, follow_up_times, validate_cohort
from .simulate import get_scenario, run_study
from .variance import BootstrapConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

INPUT_HEADER = ("id", "group", "time", "status")
ESTIMATE_HEADER = ("group", "policy", "estimator", "tau", "value", "variance_model",
                   "variance_bootstrap")
COMPARE_HEADER = ("policy", "estimator", "tau_a", "tau_b", "rr", "model_lower", "model_upper",
                  "bootstrap_lower", "bootstrap_upper", "length_ratio", "level", "note")
PROBABILITY_HEADER = ("policy", "group", "estimator", "mean_true", "mean_aj", "abs_bias",
                      "rel_bias", "runs", "excluded_true", "excluded_aj", "excluded_rel")
RR_HEADER = ("policy", "estimator", "true_rr", "mean_rr_aj", "abs_bias", "rel_bias", "runs",
             "excluded_true", "excluded_aj", "excluded_rel")
VARIANCE_HEADER = ("policy", "group", "estimator", "source", "count", "whisker_low", "q1",
                   "median", "q3", "whisker_high")
SIMULATE_FILES = {"probability": PROBABILITY_HEADER, "relative_risk": RR_HEADER,
                  "variance": VARIANCE_HEADER}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- input -------------------------------------------------------------------

def read_records(path) -> list[tuple[int, SubjectRecord]]:
    """Parse an input CSV into ``(line number, record)`` pairs."""
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    if not text.strip():
        raise ParseError("empty input file", 1)
    reader = csv.reader(io.StringIO(text))
    header = tuple(h.strip().lower() for h in next(reader))
    if header != INPUT_HEADER:
        raise ParseError(f"header must be {','.join(INPUT_HEADER)}, got {','.join(header)}", 1)
    out = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", line)
        rid, group, time, status = (c.strip() for c in row)
        if group not in ("A", "B"):
            raise ParseError(f"group must be A or B, got {group!r}", line)
        try:
            t = float(time)
        except ValueError:
            raise ParseError(f"time is not a number: {time!r}", line) from None
        if not (math.isfinite(t) and t > 0):
            raise ParseError(f"time must be positive and finite (id={rid})", line)
        if status not in ("0", "1", "2"):
            raise ParseError(f"status must be 0, 1 or 2 (id={rid}), got {status!r}", line)
        out.append((line, SubjectRecord(rid, Group(group), t, int(status))))
    if not out:
        raise EmptyInput("input file has a header but no records")
    return out


def read_cohorts(path):
    """Cohorts for groups A and B from an input CSV."""
    records = read_records(path)
    return tuple(validate_cohort([r for _, r in records if r.group is g], g) for g in Group)


# -- reports -----------------------------------------------------------------

_INT = re.compile(r"[+-]?\d+\Z")


def format_number(x, raw: bool = False) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, str)):
        return str(x)
    if isinstance(x, int):
        return str(x)
    x = float(x) + 0.0  # drop the sign of -0.0
    return repr(x) if raw else format(x, ".6g")


def _parse_cell(cell: str):
    if cell == "":
        return None
    if _INT.match(cell):
        return int(cell)
    try:
        return float(cell)
    except ValueError:
        return cell


def write_report(out, header, rows, raw: bool = False) -> None:
    """Write ``rows`` as CSV to a path or text stream."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write_report(fh, header, rows, raw)
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_number(v, raw) for v in row])


def read_report(src) -> tuple[tuple[str, ...], list[list]]:
    """Parse a report back into ``(header, rows)``.

    Cells become ``int``, ``float``, ``str`` or ``None`` (empty). Writing the
    result with the same ``raw`` setting reproduces the file byte for byte.
    """
    if isinstance(src, (str, Path)):
        with open(src, newline="", encoding="utf-8") as fh:
            return read_report(fh)
    reader = csv.reader(src)
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise ParseError("empty report", 1) from None
    return header, [[_parse_cell(c) for c in row] for row in reader]


# -- commands ----------------------------------------------------------------

def _bootstrap_config(args, needed: bool):
    if not needed:
        return None
    if args.seed is None:
        raise UsageError("--seed is required when bootstrap variances are requested")
    return BootstrapConfig(args.bootstrap or 1000, args.seed)


def _variance_sources(args):
    if args.variance is None:
        return [VarianceSource.MODEL] + ([VarianceSource.BOOTSTRAP] if args.bootstrap else [])
    try:
        sources = [VarianceSource(s.strip().lower()) for s in args.variance.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--variance takes model and/or bootstrap, got {args.variance!r}") from None
    if not sources:
        raise UsageError("--variance is empty")
    return list(dict.fromkeys(sources))


def cmd_estimate(args, out) -> None:
    cohort_a, cohort_b = read_cohorts(args.input)
    taus = follow_up_times(cohort_a, cohort_b)
    boot = _bootstrap_config(args, bool(args.bootstrap))
    table = estimates_at_tauset(cohort_a, cohort_b, taus, args.estimators, boot, args.workers)
    rows = [[group.value, policy.value, est.value, e.tau, e.value, e.variance_model,
             e.variance_bootstrap]
            for group in Group for policy in Policy for est in args.estimators
            for e in [table[policy, group, est]]]
    write_report(out, ESTIMATE_HEADER, rows, args.raw)


def cmd_compare(args, out) -> None:
    sources = _variance_sources(args)
    cohort_a, cohort_b = read_cohorts(args.input)
    taus = follow_up_times(cohort_a, cohort_b)
    boot = _bootstrap_config(args, VarianceSource.BOOTSTRAP in sources)
    table = estimates_at_tauset(cohort_a, cohort_b, taus, args.estimators, boot, args.workers)
    rows = []
    for policy in Policy:
        for est in args.estimators:
            ea, eb = table[policy, Group.A, est], table[policy, Group.B, est]
            ci, rr, note = {}, None, ""
            for source in sources:
                try:
                    r = log_rr_interval(ea, eb, args.level, source, policy)
                except ZeroDenominator:
                    note = "zero_denominator"
                    break
                except ZeroValue:
                    rr, note = 0.0, "zero_estimate"
                    break
                rr = r.rr
                ci[source] = (r.ci_lower, r.ci_upper)
            m = ci.get(VarianceSource.MODEL, (None, None))
            b = ci.get(VarianceSource.BOOTSTRAP, (None, None))
            ratio = None
            if None not in m + b and b[1] > b[0]:
                ratio = (m[1] - m[0]) / (b[1] - b[0])
            rows.append([policy.value, est.value, ea.tau, eb.tau, rr, *m, *b, ratio, args.level,
                         note])
    write_report(out, COMPARE_HEADER, rows, args.raw)


def simulation_tables(summary, estimators) -> dict[str, list[list]]:
    keep = set(estimators)
    prob = [[r.policy.value, r.group.value, r.estimator.value, r.mean_true, r.mean_aj,
             r.abs_bias, r.rel_bias, r.runs, r.excluded_true, r.excluded_aj, r.excluded_rel]
            for r in summary.probability if r.estimator in keep]
    rr = [[r.policy.value, r.estimator.value, r.true_rr, r.mean_rr_aj, r.abs_bias, r.rel_bias,
           r.runs, r.excluded_true, r.excluded_aj, r.excluded_rel]
          for r in summary.relative_risk if r.estimator in keep]
    var = [[r.policy.value, r.group.value, r.estimator.value, r.source, r.count, r.whisker_low,
            r.q1, r.median, r.q3, r.whisker_high]
           for r in summary.variance if r.estimator in keep]
    return {"probability": prob, "relative_risk": rr, "variance": var}


def cmd_simulate(args, out) -> None:
    if args.scenario is None:
        raise UsageError("simulate needs --scenario")
    if args.seed is None:
        raise UsageError("--seed is required for simulate")
    if args.runs < 2:
        raise UsageError("--runs must be at least 2")
    scenario = get_scenario(args.scenario)
    summary = run_study(scenario, args.runs, args.bootstrap, args.seed, args.workers)
    tables = simulation_tables(summary, args.estimators)
    if args.out is None:
        for i, (name, rows) in enumerate(tables.items()):
            if i:
                out.write("\n")
            out.write(f"# {name}\n")
            write_report(out, SIMULATE_FILES[name], rows, args.raw)
        return
    target = Path(args.out)
    target.mkdir(parents=True, exist_ok=True)
    for name, rows in tables.items():
        write_report(target / f"{name}.csv", SIMULATE_FILES[name], rows, args.raw)


COMMANDS = {"estimate": cmd_estimate, "compare": cmd_compare, "simulate": cmd_simulate}


# -- argument parsing ----------------------------------------------------------

def _estimators_arg(text):
    try:
        return parse_estimators(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"invalid estimator list {text!r}; choose from ip,ptid,km,aj,ptidce") from None


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _level_arg(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"level must lie in (0, 1), got {value}")
    return value


def _seed_arg(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--estimators", type=_estimators_arg, default=parse_estimators(None),
                        help="comma list of ip,ptid,km,aj,ptidce (default: all)")
    common.add_argument("--bootstrap", type=_positive_int, metavar="N",
                        help="bootstrap replicates (requires --seed)")
    common.add_argument("--seed", type=_seed_arg, metavar="S")
    common.add_argument("--out", metavar="PATH",
                        help="output file (simulate: directory); default stdout")
    common.add_argument("--raw", action="store_true", help="print numbers at full precision")
    common.add_argument("--workers", type=_positive_int, default=1, metavar="N",
                        help="parallel workers; results do not depend on this")

    parser = _Parser(prog="aeprob", description="Adverse-event probabilities with competing events.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, text in (("estimate", "five AE probability estimators per group and follow-up time"),
                       ("compare", "relative risks A vs B with confidence intervals")):
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        p.add_argument("--input", required=True, metavar="CSV")
        if name == "compare":
            p.add_argument("--level", type=_level_arg, default=0.95)
            p.add_argument("--variance", metavar="SOURCES",
                           help="model and/or bootstrap (default: model, plus bootstrap "
                                "when --bootstrap is given)")

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo bias study",
                       description="Monte-Carlo bias study on a catalog or custom scenario")
    p.add_argument("--scenario", metavar="ID|FILE")
    p.add_argument("--runs", type=int, default=1000)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command in ("estimate", "compare") and args.bootstrap and args.seed is None:
            raise UsageError("--seed is required when --bootstrap is given")
        command = COMMANDS[args.command]
        if args.out is None or args.command == "simulate":
            command(args, sys.stdout)
        else:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            buf = io.StringIO()
            command(args, buf)
            with open(args.out, "w", newline="", encoding="utf-8") as fh:
                fh.write(buf.getvalue())
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
