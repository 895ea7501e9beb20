"""Flag candidate vulnerability-fixing commits from their messages.

A commit is flagged when its message cites a CVE identifier or matches one of
the security keyword rules. Rules live in a tab-separated file
(``name<TAB>regex``, ``#`` comments allowed); the defaults ship as
``data/security_rules.tsv``. Matching is case-insensitive and every rule is an
explicit regex alternation, no stemmer involved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

CVE_RE = re.compile(r"(?<![A-Za-z0-9])CVE-[0-9]{4}-[0-9]{4,}(?![0-9])", re.IGNORECASE)


class LogParseError(ValueError):
    def __init__(self, position: int, message: str):
        super().__init__(f"line {position}: {message}")
        self.position = position


class RuleFileError(ValueError):
    pass


@dataclass(frozen=True)
class CommitRecord:
    sha: str
    message: str
    added_lines: int = 0
    deleted_lines: int = 0
    files: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.sha:
            raise ValueError("commit sha must be non-empty")
        if self.added_lines < 0 or self.deleted_lines < 0:
            raise ValueError(f"{self.sha}: line counts must be non-negative")


@dataclass(frozen=True)
class MinerVerdict:
    flagged: bool
    matched_keywords: tuple[str, ...] = ()
    cve_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class Rule:
    name: str
    pattern: re.Pattern


@dataclass
class CveGroups:
    groups: dict[str, list[CommitRecord]] = field(default_factory=dict)
    remainder: list[CommitRecord] = field(default_factory=list)


def default_rules_path() -> Path:
    return Path(__file__).parent / "data" / "security_rules.tsv"


def parse_rules(text: str) -> list[Rule]:
    rules = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        name, sep, regex = line.partition("\t")
        if not sep or not name.strip() or not regex.strip():
            raise RuleFileError(f"line {lineno}: expected 'name<TAB>regex'")
        name = name.strip()
        if name in seen:
            raise RuleFileError(f"line {lineno}: duplicate rule {name!r}")
        seen.add(name)
        try:
            rules.append(Rule(name, re.compile(regex.strip(), re.IGNORECASE)))
        except re.error as exc:
            raise RuleFileError(f"line {lineno}: rule {name!r}: {exc}") from None
    return rules


def load_rules(path: str | Path | None = None) -> list[Rule]:
    return parse_rules(Path(path or default_rules_path()).read_text(encoding="utf-8"))


_DEFAULT_RULES: list[Rule] | None = None


def _defaults() -> list[Rule]:
    global _DEFAULT_RULES
    if _DEFAULT_RULES is None:
        _DEFAULT_RULES = load_rules()
    return _DEFAULT_RULES


def extract_cves(message: str) -> list[str]:
    """All CVE ids in ``message``, upper-cased, de-duplicated, first occurrence first."""
    found: dict[str, None] = {}
    for m in CVE_RE.finditer(message):
        found.setdefault(m.group(0).upper())
    return list(found)


def match_security_keywords(message: str, rules: list[Rule] | None = None) -> MinerVerdict:
    rules = _defaults() if rules is None else rules
    keywords = tuple(rule.name for rule in rules if rule.pattern.search(message))
    cves = tuple(extract_cves(message))
    return MinerVerdict(bool(keywords or cves), keywords, cves)


def mine(
    log: Iterable[CommitRecord], rules: list[Rule] | None = None
) -> list[tuple[CommitRecord, MinerVerdict]]:
    out = []
    for commit in log:
        verdict = match_security_keywords(commit.message, rules)
        if verdict.flagged:
            out.append((commit, verdict))
    return out


def group_by_cve(flagged: Iterable[tuple[CommitRecord, MinerVerdict]]) -> CveGroups:
    result = CveGroups()
    for commit, verdict in flagged:
        if not verdict.cve_ids:
            result.remainder.append(commit)
        for cve in verdict.cve_ids:
            result.groups.setdefault(cve, []).append(commit)
    return result


# -- log formats ---------------------------------------------------------------

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\"}


def escape_message(message: str) -> str:
    return (
        message.replace("\\", "\\\\").replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
    )


def unescape_message(text: str) -> str:
    return re.sub(r"\\(.)", lambda m: _ESCAPES.get(m.group(1), m.group(0)), text)


def format_log(commits: Iterable[CommitRecord]) -> str:
    return "".join(
        f"{c.sha}\t{c.added_lines}\t{c.deleted_lines}\t{escape_message(c.message)}\n"
        for c in commits
    )


def parse_log(lines: Iterable[str]) -> Iterator[CommitRecord]:
    """Parse ``sha<TAB>added<TAB>deleted<TAB>message`` records, one per line."""
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        parts = line.split("\t", 3)
        if len(parts) != 4:
            raise LogParseError(lineno, f"expected 4 tab-separated fields, found {len(parts)}")
        sha, added, deleted, message = parts
        if not re.fullmatch(r"[0-9a-fA-F]+", sha):
            raise LogParseError(lineno, f"sha is not hexadecimal: {sha!r}")
        try:
            yield CommitRecord(sha, unescape_message(message), int(added), int(deleted))
        except ValueError as exc:
            raise LogParseError(lineno, str(exc)) from None


_COMMIT_LINE = re.compile(r"^commit ([0-9a-fA-F]+)")
_NUMSTAT_LINE = re.compile(r"^(\d+|-)\t(\d+|-)\t(.+)$")


def parse_git_log(lines: Iterable[str]) -> Iterator[CommitRecord]:
    """Adapter for plain ``git log --numstat`` output."""
    sha = None
    start = 0
    message: list[str] = []
    added = deleted = 0
    files: list[str] = []

    def flush():
        text = "\n".join(message).strip("\n")
        return CommitRecord(sha, text, added, deleted, tuple(files))

    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n").rstrip("\r")
        head = _COMMIT_LINE.match(line)
        if head:
            if sha is not None:
                yield flush()
            sha, start = head.group(1), lineno
            message, files, added, deleted = [], [], 0, 0
            continue
        if sha is None:
            if line.strip():
                raise LogParseError(lineno, "content before first 'commit' header")
            continue
        stat = _NUMSTAT_LINE.match(line)
        if line.startswith("    "):
            message.append(line[4:])
        elif stat:
            # binary files report '-' for both counts
            added += int(stat.group(1)) if stat.group(1) != "-" else 0
            deleted += int(stat.group(2)) if stat.group(2) != "-" else 0
            files.append(stat.group(3))
        elif not line.strip():
            # git indents blank message lines, but trailing-space stripping tools do not
            if message and not files:
                message.append("")
        elif re.match(r"^(Author|AuthorDate|Commit|CommitDate|Date|Merge):", line):
            continue
        else:
            raise LogParseError(lineno, f"unrecognised line in commit starting at line {start}")
    if sha is not None:
        yield flush()


def read_log(path: str | Path, git_format: bool = False) -> list[CommitRecord]:
    with open(path, encoding="utf-8", errors="replace") as fh:
        parser = parse_git_log if git_format else parse_log
        return list(parser(fh))


def fixture_log_path() -> Path:
    return Path(__file__).parent / "data" / "commits.tsv"
