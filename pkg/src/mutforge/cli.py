"""Command-line entry point: ``mutforge <command> ...``.

Settings resolve as command-line flag, then config file (``--config`` or
``$MUTFORGE_CONFIG``), then built-in default. Relative paths in a config file
are taken relative to the file's directory.

Exit codes: 0 success, 1 operational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .commit_miner import group_by_cve, load_rules, mine, read_log
from .dataset_stats import DatasetError, build_report, load_dataset, fixture_path, render_report
from .engine import ConfigError, RunConfig, build_mutants, run_campaign
from .mutant_store import StoreError, open_store
from .operator_catalog import CatalogError, builtin_catalog, dump_catalog, enabled, load_catalog
from .reporter import GROUPINGS, alive_report, render, render_summary
from .scanner import DEFAULT_EXCLUDES, DEFAULT_MAX_BLOCK, scan_corpus

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

CONFIG_ENV = "MUTFORGE_CONFIG"
DEFAULT_STORE = "mutforge-store"
DEFAULT_TIMEOUT = 300.0

log = logging.getLogger("mutforge")


class UsageError(Exception):
    pass


class Settings:
    """Flag/config/default lookup for one subcommand."""

    def __init__(self, args: argparse.Namespace, config: dict, base: Path | None):
        self.args = args
        self.config = config
        self.base = base

    def get(self, key: str, section: str, default: Any = None) -> Any:
        flag = getattr(self.args, key, None)
        if flag is not None and flag != []:
            return flag
        table = self.config.get(section, {})
        if key in table:
            return table[key]
        return default

    def path(self, key: str, section: str, default: str | None = None) -> Path | None:
        flag = getattr(self.args, key, None)
        if flag is not None:
            return Path(flag)
        value = self.config.get(section, {}).get(key)
        if value is not None:
            p = Path(value).expanduser()
            return p if p.is_absolute() or self.base is None else self.base / p
        return Path(default) if default is not None else None

    def command(self, key: str, section: str) -> list[str]:
        value = self.get(key, section, [])
        if isinstance(value, str):
            return shlex.split(value)
        return [str(v) for v in value]


def load_config(path: str | os.PathLike | None) -> tuple[dict, Path | None]:
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return {}, None
    p = Path(path)
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh), p.resolve().parent
    except OSError as exc:
        raise UsageError(f"cannot read config file {p}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"invalid config file {p}: {exc}") from None


def _operators(settings: Settings, section: str):
    catalog = settings.path("catalog", section)
    ops = load_catalog(catalog) if catalog else builtin_catalog()
    return enabled(ops)


# -- subcommands ---------------------------------------------------------------------


def cmd_scan(s: Settings) -> int:
    root = s.path("corpus_root", "scan") or s.path("corpus_root", "run")
    if root is None:
        raise UsageError("scan needs a corpus directory")
    ops = _operators(s, "scan")
    errors: list[tuple[str, str]] = []
    sites = scan_corpus(
        root, ops,
        include=s.get("include", "scan", None) or None,
        exclude=s.get("exclude", "scan", list(DEFAULT_EXCLUDES)),
        max_block=int(s.get("max_block", "scan", DEFAULT_MAX_BLOCK)),
        errors=errors,
    )
    store_path = s.path("store", "scan") if s.args.store or "store" in s.config.get("scan", {}) else None
    if store_path is not None:
        with open_store(store_path) as store:
            added = store.append_mutants(build_mutants(sites, ops, root))
        print(f"{len(sites)} sites, {added} new mutants stored in {store_path}")
    else:
        for site in sites:
            print(json.dumps({
                "file": site.file,
                "byte_span": list(site.byte_span),
                "line_span": list(site.line_span),
                "operator_id": site.operator_id,
                "matched_text": site.matched_text.decode("utf-8", errors="replace"),
                "context_digest": site.context_digest,
            }))
    return 1 if errors else 0


def run_config_from(s: Settings) -> RunConfig:
    root = s.path("corpus_root", "run")
    if root is None:
        raise UsageError("run needs a corpus directory (--corpus or [run].corpus_root)")
    test = s.command("test_command", "run")
    if not test:
        raise UsageError("run needs a test command (--test or [run].test_command)")
    env = {str(k): str(v) for k, v in s.config.get("run", {}).get("env", {}).items()}
    for item in s.args.env or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--env expects KEY=VALUE, got {item!r}")
        env[key] = value
    scan_cfg = s.config.get("scan", {})
    cfg = RunConfig(
        corpus_root=root,
        test_command=test,
        build_command=s.command("build_command", "run"),
        timeout=float(s.get("timeout", "run", DEFAULT_TIMEOUT)),
        workers=int(s.get("workers", "run", 1)),
        workspace_root=s.path("workspace_root", "run"),
        env=env,
        crash_markers=tuple(s.config.get("run", {}).get("crash_markers", RunConfig.crash_markers)),
        include=tuple(scan_cfg.get("include", ())),
        exclude=tuple(scan_cfg.get("exclude", DEFAULT_EXCLUDES)),
        max_block=int(scan_cfg.get("max_block", DEFAULT_MAX_BLOCK)),
        baseline=not s.args.no_baseline,
    )
    problems = cfg.problems()
    if problems:
        raise UsageError("; ".join(problems))
    return cfg


def cmd_run(s: Settings) -> int:
    cfg = run_config_from(s)
    ops = _operators(s, "run")
    store_path = s.path("store", "run", DEFAULT_STORE)

    def progress(mutant, status, evidence):
        site = mutant.site
        print(f"{status.value:<16} {mutant.operator_id:<18} {site.file}:{site.line_span[0]}",
              file=sys.stderr, flush=True)

    with open_store(store_path) as store:
        summary = run_campaign(cfg, store, ops, limit=s.args.limit, progress=progress)
        pending = len(store.pending())
    sys.stdout.write(render_summary(summary))
    if pending:
        print(f"{pending} mutants still pending; rerun to resume", file=sys.stderr)
        return 1
    return 0


def cmd_report(s: Settings) -> int:
    store_path = s.path("store", "report") or s.path("store", "run", DEFAULT_STORE)
    fmt = s.get("format", "report", "text")
    ops = _operators(s, "report")
    with open_store(store_path, readonly=True) as store:
        summary = store.summarize()
        if s.args.summary:
            sys.stdout.write(render_summary(summary, fmt, s.get("include_timeouts", "report")))
            return 0
        report = alive_report(store, s.get("group_by", "report", "operator"), ops)
    if fmt == "text":
        sys.stdout.write(render_summary(summary, include_timeouts=s.get("include_timeouts", "report")))
        print()
    sys.stdout.write(render(report, fmt))
    return 0


def cmd_stats(s: Settings) -> int:
    dataset = s.path("dataset", "stats") or fixture_path()
    report = build_report(load_dataset(dataset))
    sys.stdout.write(render_report(report, s.get("format", "stats", "text")))
    return 0


def cmd_mine(s: Settings) -> int:
    log_path = s.path("log", "mine") or (Path(s.args.log_file) if s.args.log_file else None)
    if log_path is None:
        raise UsageError("mine needs a commit log")
    rules = load_rules(s.path("rules", "mine"))
    flagged = mine(read_log(log_path, git_format=bool(s.get("git", "mine", False))), rules)
    fmt = s.get("format", "mine", "text")
    if fmt == "json":
        groups = group_by_cve(flagged)
        print(json.dumps({
            "flagged": [
                {"sha": c.sha, "keywords": list(v.matched_keywords), "cve_ids": list(v.cve_ids),
                 "summary": c.message.splitlines()[0] if c.message else ""}
                for c, v in flagged
            ],
            "cve_groups": {cve: [c.sha for c in commits] for cve, commits in groups.groups.items()},
            "without_cve": [c.sha for c in groups.remainder],
        }, indent=2))
    else:
        for commit, verdict in flagged:
            tags = ",".join(verdict.cve_ids + verdict.matched_keywords)
            first = commit.message.splitlines()[0] if commit.message else ""
            print(f"{commit.sha[:12]}  {tags}  {first}")
        if s.args.group:
            groups = group_by_cve(flagged)
            print()
            for cve, commits in sorted(groups.groups.items()):
                print(f"{cve}  {' '.join(c.sha[:12] for c in commits)}")
            print(f"(no CVE)  {len(groups.remainder)} commits")
        print(f"{len(flagged)} flagged", file=sys.stderr)
    return 0


def cmd_catalog(s: Settings) -> int:
    if s.args.action == "print":
        catalog = s.path("catalog", "catalog")
        ops = load_catalog(catalog) if catalog else builtin_catalog()
        sys.stdout.write(dump_catalog(ops))
        return 0
    ops = load_catalog(s.args.file)
    print(f"{len(ops)} operators, {len(enabled(ops))} enabled: ok")
    return 0


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mutforge", description="Security-aware mutation testing.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help=f"TOML config file (default: ${CONFIG_ENV})")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress details")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    sc = sub.add_parser("scan", help="find mutation sites in a corpus")
    sc.add_argument("corpus_root", nargs="?", help="corpus directory")
    sc.add_argument("--store", help="append mutants to this store instead of printing sites")
    sc.add_argument("--catalog", help="operator catalog file (default: builtin)")
    sc.add_argument("--include", action="append", metavar="GLOB")
    sc.add_argument("--exclude", action="append", metavar="GLOB")
    sc.add_argument("--max-block", dest="max_block", type=int)
    sc.set_defaults(func=cmd_scan)

    r = sub.add_parser("run", help="scan, then evaluate every pending mutant")
    r.add_argument("--corpus", dest="corpus_root")
    r.add_argument("--store", help=f"store directory (default: {DEFAULT_STORE})")
    r.add_argument("--catalog")
    r.add_argument("--build", dest="build_command", help="build command line")
    r.add_argument("--test", dest="test_command", help="test command line")
    r.add_argument("--timeout", type=float, help=f"seconds per phase (default: {DEFAULT_TIMEOUT:g})")
    r.add_argument("--workers", type=int)
    r.add_argument("--workspace", dest="workspace_root")
    r.add_argument("--env", action="append", metavar="KEY=VALUE")
    r.add_argument("--limit", type=int, help="evaluate at most this many mutants")
    r.add_argument("--no-baseline", action="store_true", help="skip the unmutated build/test check")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("report", help="mutation score and alive mutants")
    rp.add_argument("--store")
    rp.add_argument("--catalog")
    rp.add_argument("--format", choices=("text", "json", "csv"))
    rp.add_argument("--group-by", dest="group_by", choices=GROUPINGS)
    rp.add_argument("--include-timeouts", dest="include_timeouts", action="store_const", const=True)
    rp.add_argument("--exclude-timeouts", dest="include_timeouts", action="store_const", const=False)
    rp.add_argument("--summary", action="store_true", help="status counts only")
    rp.set_defaults(func=cmd_report)

    st = sub.add_parser("stats", help="vulnerability dataset tables")
    st.add_argument("--dataset", help="dataset CSV (default: bundled fixture)")
    st.add_argument("--format", choices=("text", "json", "csv"))
    st.set_defaults(func=cmd_stats)

    mi = sub.add_parser("mine", help="flag security-fixing commits in a log")
    mi.add_argument("log_file", nargs="?", metavar="LOG")
    mi.add_argument("--log", help="commit log file (same as the positional LOG)")
    mi.add_argument("--group", action="store_true", help="also list flagged commits per CVE")
    mi.add_argument("--git", action="store_const", const=True, help="input is `git log --numstat` output")
    mi.add_argument("--rules", help="keyword rule file (default: builtin)")
    mi.add_argument("--format", choices=("text", "json"))
    mi.set_defaults(func=cmd_mine)

    ca = sub.add_parser("catalog", help="print or validate operator catalogs")
    ca_sub = ca.add_subparsers(dest="action", metavar="ACTION", required=True)
    cp = ca_sub.add_parser("print", help="dump a catalog in the loadable file format")
    cp.add_argument("--catalog", help="catalog to print (default: builtin)")
    cv = ca_sub.add_parser("validate", help="load and check a catalog file")
    cv.add_argument("file")
    ca.set_defaults(func=cmd_catalog)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        config, base = load_config(args.config)
        return args.func(Settings(args, config, base))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mutforge: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, StoreError, CatalogError, DatasetError, ConfigError, ValueError) as exc:
        print(f"mutforge: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("mutforge: interrupted; rerun to resume", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
