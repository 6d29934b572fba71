"""Command-line entry point: ``aporosim <command> ...``.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime error.
Set ``APOROSIM_LOG`` (DEBUG, INFO, WARNING, ...) for log output on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .analysis import DEFAULT_BINS, DegenerateInput, by_norms, trend_stat
from .config import ConfigError, load_scenario, validate_scenario
from .core import Status
from .engine import RunResult, run
from .experiments import (
    SweepPlan, atomic_write_text, dump_json, load_sweep, mask_label, run_sweep, subset_of, write_summary,
    write_sweep,
)
from .norms import NormError, NormSet, load_norms, serialize

log = logging.getLogger("aporosim")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

SUBSET_HELP = (
    "norm subset as a bitmask where bit k-1 selects the k-th norm in id order "
    "(0b000111 = norms 1,2,3; decimal and 0x forms work too) or a comma list of norm ids"
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _non_negative(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def parse_subset(text: str, norms: NormSet) -> NormSet:
    text = text.strip()
    if "," in text:
        ids = [int(x) for x in text.split(",") if x.strip()]
        missing = [i for i in ids if i not in norms.ids]
        if missing:
            raise UsageError(f"--subset names unknown norms {missing}")
        return norms.subset(ids)
    try:
        mask = int(text, 0)
    except ValueError:
        raise UsageError(f"--subset: cannot read {text!r} ({SUBSET_HELP})") from None
    try:
        return subset_of(mask, norms)
    except ValueError as exc:
        raise UsageError(f"--subset: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aporosim", description="Needs-driven agent simulation of social norms and wealth inequality.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed_required: bool):
        sp.add_argument("--scenario", default="default.scn", help="scenario file (default: shipped default.scn)")
        sp.add_argument("--norms", default=None, help="norm file (default: the one the scenario names)")
        sp.add_argument("--agents", type=_positive, default=100, help="population size (default 100)")
        sp.add_argument("--steps", type=_non_negative, default=2880, help="hourly steps (default 2880)")
        sp.add_argument("--seed", type=_u64, required=seed_required, help="64-bit seed (required)")

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario", nargs="?", default=None, help="scenario file")
    v.add_argument("--scenario", dest="scenario_opt", default=None, help=argparse.SUPPRESS)

    r = sub.add_parser("run", help="one simulation run")
    common(r, True)
    r.add_argument("--subset", default="0", help=SUBSET_HELP)
    r.add_argument("--out", default=None, help="output directory (default: print JSON to stdout)")
    r.add_argument("--trace", action="store_true", help="also write trace.csv with one row per agent per step")

    s = sub.add_parser("sweep", help="all norm subsets x replicas")
    common(s, True)
    s.add_argument("--replicas", type=_positive, default=10, help="replicas per subset (default 10)")
    s.add_argument("--jobs", type=_positive, default=os.cpu_count() or 1, help="worker processes")
    s.add_argument("--bins", type=_positive, default=DEFAULT_BINS, help="histogram bins (default 20)")
    s.add_argument("--out", required=True, help="output directory")

    a = sub.add_parser("analyze", help="recompute summary.csv and histograms from a sweep directory")
    a.add_argument("directory")
    a.add_argument("--bins", type=_positive, default=None, help="histogram bins (default: as swept)")

    n = sub.add_parser("norms", help="norm file tools")
    nsub = n.add_subparsers(dest="norms_command", required=True, parser_class=_Parser)
    c = nsub.add_parser("check", help="parse a norm file and print its canonical form")
    c.add_argument("file")
    return p


def _setup_logging() -> None:
    level = os.environ.get("APOROSIM_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _load(args):
    scenario = load_scenario(args.scenario)
    problems = validate_scenario(scenario)
    if problems:
        raise ConfigError("invalid scenario: " + ", ".join(map(str, problems)))
    norms_path = args.norms or scenario.norms_path
    if norms_path is None:
        raise ConfigError("no norm file given and the scenario names none")
    return scenario, load_norms(norms_path)


def cmd_validate(args) -> int:
    path = args.scenario or args.scenario_opt or "default.scn"
    scenario = load_scenario(path)
    problems = validate_scenario(scenario)
    for v in problems:
        print(v)
    if problems:
        return EXIT_CONFIG
    print(f"{scenario.source}: ok")
    return EXIT_OK


def _trace_csv(res: RunResult) -> str:
    tr = res.trace
    names = [a.value for a in res.action_names]
    lines = ["step,agent,action,status,wealth,cost,income,rent,norm_delta"]
    steps, n = tr.action.shape
    for t in range(steps):
        for i in range(n):
            lines.append(
                f"{t},{i},{names[tr.action[t, i]]},{Status(int(tr.status[t, i])).label},{tr.wealth[t, i]},"
                f"{tr.cost[t, i]},{tr.income[t, i]},{tr.rent[t, i]},{tr.norm_delta[t, i]}"
            )
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    scenario, norms = _load(args)
    subset = parse_subset(args.subset, norms)
    res = run(scenario, subset, args.seed, t_max=args.steps, n_agents=args.agents, trace=args.trace)
    doc = res.to_dict()
    if args.out is None:
        sys.stdout.write(dump_json(doc))
        return EXIT_OK
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "run.json", dump_json(doc))
    rows = ["step,agent,norm"] + [f"{s},{a},{k}" for s, a, k in res.norm_log.tolist()]
    atomic_write_text(out / "norm_log.csv", "\n".join(rows) + "\n")
    if args.trace:
        atomic_write_text(out / "trace.csv", _trace_csv(res))
    print(f"wrote {out}")
    return EXIT_OK


def _report(rows) -> None:
    for ids, label in (((), "baseline"), ((1, 2, 3), "non-apo"), ((4, 5, 6), "apo")):
        row = by_norms(rows, ids)
        if row is not None:
            print(f"{label:9s} gini {row.gini_mean:.4f} +- {row.gini_sd:.4f}  bankrupt {row.bankrupt_mean:.3f}")
    try:
        print(f"spearman(apo proportion, gini) = {trend_stat(rows):.4f}")
    except DegenerateInput as exc:
        print(f"trend: {exc}")


def cmd_sweep(args) -> int:
    scenario, norms = _load(args)
    plan = SweepPlan(norms, args.seed, args.replicas, args.agents, args.steps, args.jobs)
    started = time.perf_counter()
    result = run_sweep(plan, scenario)
    rows = write_sweep(result, args.out, args.bins)
    log.info("sweep of %d runs took %.1fs", len(plan), time.perf_counter() - started)
    print(f"wrote {len(rows)} subsets to {args.out}")
    _report(rows)
    return EXIT_OK


def cmd_analyze(args) -> int:
    result, bins = load_sweep(args.directory)
    bins = args.bins or bins
    rows = result.summary(bins)
    write_summary(Path(args.directory), rows, len(result.plan.norms))
    _report(rows)
    return EXIT_OK


def cmd_norms(args) -> int:
    sys.stdout.write(serialize(load_norms(args.file)))
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "sweep": cmd_sweep, "analyze": cmd_analyze,
            "norms": cmd_norms}


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"aporosim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, NormError, FileNotFoundError, IsADirectoryError, KeyError) as exc:
        print(f"aporosim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level diagnostic
        log.debug("failure", exc_info=True)
        print(f"aporosim: error: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
