"""Command line: ``klab machine describe | tables build | verify | report merge``.

Standard output carries only the payload; progress and errors go to
standard error.  Exit codes: 0 ok, 1 regression, 2 capacity, 3 io,
4 missing condition, 5 fingerprint mismatch, 6 lock held, 64 usage.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import theorems as th
from .config import load_config
from .errors import IoFailure, KlabError
from .lab import Lab
from .machine import MODES, describe, reference_machine
from .pinned import PINNED_MAX_ABS
from .reports import merge_reports, to_csv, to_json

log = logging.getLogger("klab")

EXIT_OK, EXIT_REGRESSION, EXIT_USAGE = 0, 1, 64
COUNTEREX_N = (2, 4, 8)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--scale-L", type=int, dest="L", metavar="N")
    p.add_argument("--prog-bits", type=int, dest="P", metavar="N")
    p.add_argument("--budget", type=int, dest="T", metavar="N")
    p.add_argument("--workers", type=int, metavar="N")
    p.add_argument("--format", choices=("csv", "json"), dest="output_format")
    p.add_argument("--cache-dir", metavar="PATH")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="klab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    machine = sub.add_parser("machine").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    d = machine.add_parser("describe", help="print the canonical machine description")
    d.add_argument("--mode", choices=MODES)
    d.add_argument("--machine-version", type=int, default=1)

    tables = sub.add_parser("tables").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    _common(tables.add_parser("build", help="build every table needed at scale L"))

    v = sub.add_parser("verify", help="measure identities and compare with pinned bounds")
    v.add_argument("identity", help="identity id or 'all'")
    v.add_argument("--offline", action="store_true", help="never build missing rows (exit 4 instead)")
    v.add_argument("--budget-check", action="store_true",
                   help="rebuild every used row at 2T and count entries that change")
    _common(v)

    report = sub.add_parser("report").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    m = report.add_parser("merge", help="merge report files into one trend document")
    m.add_argument("paths", nargs="+")
    m.add_argument("--out", metavar="PATH")
    return parser


def _config(args):
    try:
        return load_config(args.config, L=args.L, P=args.P, T=args.T, workers=args.workers,
                           output_format=args.output_format, cache_dir=args.cache_dir,
                           on_demand=False if getattr(args, "offline", False) else None)
    except (ValueError, OSError) as e:
        raise UsageError(str(e)) from e


def _emit(text, out=None):
    if out:
        try:
            with open(out, "w") as f:
                f.write(text)
        except OSError as e:
            raise IoFailure(f"cannot write {out}: {e}") from e
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def run_checks(lab: Lab, identity: str, L: int) -> list:
    """Reports for one identity id (or every identity for 'all')."""
    wanted = set(th.IDENTITIES) if identity == "all" else {identity}
    if identity != "all" and identity not in th.IDENTITIES:
        raise UsageError(f"unknown identity {identity!r}; choose from {', '.join(th.IDENTITIES)} or all")
    out = []
    if "THM1" in wanted:
        out.append(th.check_theorem1(lab, L))
    if "THM1_UPPER" in wanted:
        out.append(th.check_thm1_upper(lab, L))
    if wanted & {"THM1_LOWER_K", "THM1_LOWER_C"}:
        out.extend(r for r in th.check_thm1_lower(lab, L) if r.identity_id in wanted)
    if "PROP2" in wanted:
        out.append(th.check_prop2(lab, L))
    if wanted & set(th.COROLLARIES):
        out.extend(r for r in th.check_corollaries(lab, L) if r.identity_id in wanted)
    if "COR_FUNC" in wanted:
        out.extend(th.check_function_corollary(lab, f, L) for f in th.BUILTIN_FUNCTIONS)
    if "LEVIN_FP" in wanted:
        out.append(th.check_levin(lab, L))
    if "COUNTEREX" in wanted:
        rep = th.counterexample_search(lab, COUNTEREX_N, L)
        found = th.counterexample_scan(lab, L)
        rep.summary["pairs_with_excess"] = len(found)
        rep.summary["first_excess"] = [list(found[0])] if found else []
        out.append(rep)
    if wanted & {"PROP3_FP", "PROP3_SUMS"}:
        out.extend(r for r in th.check_prop3(lab, L) if r.identity_id in wanted)
    if "REMARK_SCAN" in wanted:
        out.append(th.check_remark(lab, L))
    order = {name: i for i, name in enumerate(th.IDENTITIES)}
    return sorted(out, key=lambda r: order[r.identity_id])


def within_bound(report) -> bool:
    bound = PINNED_MAX_ABS.get((report.identity_id, report.variant))
    if bound is None:
        return True
    return report.max_abs is None or report.max_abs <= bound


def cmd_machine_describe(args) -> int:
    modes = [args.mode] if args.mode else list(MODES)
    _emit("\n".join(describe(reference_machine(m, args.machine_version)) for m in modes))
    return EXIT_OK


def _lab(cfg) -> Lab:
    return Lab(cfg.P, cfg.T, workers=cfg.workers, cache_dir=cfg.cache_dir,
               on_demand=cfg.on_demand, machine_version=cfg.machine_version)


def cmd_tables_build(args) -> int:
    cfg = _config(args)
    lab = _lab(cfg)
    with lab.lock():
        run_checks(lab, "all", cfg.L)
        written = lab.save()
    log.warning("tables build: %d rows built, %d cache files written", lab.rows_built, len(written))
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config(args)
    if args.identity != "all" and args.identity not in th.IDENTITIES:
        raise UsageError(f"unknown identity {args.identity!r}")
    lab = _lab(cfg)
    with lab.lock():
        reports = run_checks(lab, args.identity, cfg.L)
        lab.save()
        if args.budget_check:
            changed = lab.budget_changes()
            for r in reports:
                r.summary["budget_changed_entries"] = len(changed)
            for mode, c, x, v, v2 in changed[:20]:
                log.warning("budget-sensitive: %s %s|%s %s -> %s at 2T", mode, x or "ε", c or "ε", v, v2)
    if cfg.output_format == "csv":
        _emit(to_csv(reports), args.out)
    else:
        _emit(to_json(reports, PINNED_MAX_ABS), args.out)
    failed = [r for r in reports if not within_bound(r)]
    for r in failed:
        log.error("%s%s: max |deviation| %s exceeds pinned bound %s", r.identity_id,
                  f"/{r.variant}" if r.variant else "", r.max_abs,
                  PINNED_MAX_ABS.get((r.identity_id, r.variant)))
    return EXIT_REGRESSION if failed else EXIT_OK


def cmd_report_merge(args) -> int:
    docs = []
    for p in args.paths:
        try:
            with open(p) as f:
                docs.append(json.load(f))
        except (OSError, ValueError) as e:
            raise UsageError(f"cannot read {p}: {e}") from e
    _emit(json.dumps(merge_reports(docs), indent=1, ensure_ascii=False), args.out)
    return EXIT_OK


COMMANDS = {
    ("machine", "describe"): cmd_machine_describe,
    ("tables", "build"): cmd_tables_build,
    ("verify", None): cmd_verify,
    ("report", "merge"): cmd_report_merge,
}


def _setup_logging(verbose):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("klab: %(message)s"))
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(logging.INFO if verbose else logging.WARNING)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(getattr(args, "verbose", False))
    try:
        return COMMANDS[args.group, getattr(args, "cmd", None)](args)
    except UsageError as e:
        print(f"klab: {e}", file=sys.stderr)
        return EXIT_USAGE
    except KlabError as e:
        print(f"klab: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
