"""Mutation scores and alive-mutant listings."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .dataset_stats import UndefinedInputError
from .mutant_store import CampaignSummary, Mutant, MutantStore, Status
from .operator_catalog import MutationOperator, builtin_catalog, by_id

GROUPINGS = ("operator", "fixing_category", "cwe", "file")
FORMATS = ("text", "json", "csv")
UNCATEGORIZED = "uncategorized"
EXCERPT_WIDTH = 80
CSV_FIELDS = ("group", "mutant_id", "file", "first_line", "last_line", "operator_id", "excerpt")


def mutation_score(summary: CampaignSummary, include_timeouts: bool = True) -> float:
    c = summary.counts
    killed = c[Status.KILLED_BY_TEST] + c[Status.KILLED_BY_CRASH]
    if include_timeouts:
        killed += c[Status.KILLED_BY_TIMEOUT]
    denominator = killed + c[Status.ALIVE]
    if denominator == 0:
        raise UndefinedInputError("mutation score undefined: no killed or alive mutants")
    return killed / denominator


@dataclass(frozen=True)
class AliveEntry:
    mutant_id: str
    file: str
    line_span: tuple[int, int]
    operator_id: str
    excerpt: str


@dataclass
class AliveGroup:
    key: str
    entries: list[AliveEntry] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.entries)


@dataclass
class AliveReport:
    group_by: str
    groups: list[AliveGroup] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(g.count for g in self.groups)

    def to_dict(self) -> dict:
        return {
            "group_by": self.group_by,
            "total": self.total,
            "groups": [
                {"key": g.key, "count": g.count,
                 "entries": [dict(asdict(e), line_span=list(e.line_span)) for e in g.entries]}
                for g in self.groups
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AliveReport":
        return cls(data["group_by"], [
            AliveGroup(g["key"], [
                AliveEntry(e["mutant_id"], e["file"], tuple(e["line_span"]), e["operator_id"], e["excerpt"])
                for e in g["entries"]
            ])
            for g in data["groups"]
        ])


def excerpt(text: bytes, width: int = EXCERPT_WIDTH) -> str:
    flat = " ".join(text.decode("utf-8", errors="replace").split())
    return flat if len(flat) <= width else flat[: width - 3] + "..."


def _group_key(mutant: Mutant, group_by: str, ops: dict[str, MutationOperator]) -> str:
    if group_by == "operator":
        return mutant.operator_id
    if group_by == "file":
        return mutant.site.file
    op = ops.get(mutant.operator_id)
    if op is None:
        return UNCATEGORIZED
    if group_by == "fixing_category":
        return op.inverted_fixing_pattern.category.value
    return f"CWE-{op.seeds_cwe}" if op.seeds_cwe is not None else UNCATEGORIZED


def alive_report(
    store: MutantStore | Iterable[Mutant],
    group_by: str = "operator",
    operators: Sequence[MutationOperator] | None = None,
) -> AliveReport:
    """Alive mutants grouped by ``group_by``, largest group first.

    Operator metadata (fixing category, CWE) comes from ``operators``,
    defaulting to the builtin catalog.
    """
    if group_by not in GROUPINGS:
        raise ValueError(f"group_by must be one of {', '.join(GROUPINGS)}")
    ops = by_id(operators if operators is not None else builtin_catalog())
    mutants = store.mutants(Status.ALIVE) if isinstance(store, MutantStore) else [
        m for m in store if m.status is Status.ALIVE
    ]
    groups: dict[str, AliveGroup] = {}
    for m in mutants:
        key = _group_key(m, group_by, ops)
        groups.setdefault(key, AliveGroup(key)).entries.append(AliveEntry(
            m.mutant_id, m.site.file, m.site.line_span, m.operator_id, excerpt(m.site.matched_text),
        ))
    for g in groups.values():
        g.entries.sort(key=lambda e: (e.file, e.line_span, e.operator_id, e.mutant_id))
    ordered = sorted(groups.values(), key=lambda g: (-g.count, g.key))
    return AliveReport(group_by, ordered)


# -- rendering --------------------------------------------------------------------


def render(report: AliveReport, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for g in report.groups:
            for e in g.entries:
                writer.writerow([g.key, e.mutant_id, e.file, e.line_span[0], e.line_span[1],
                                 e.operator_id, e.excerpt])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"format must be one of {', '.join(FORMATS)}")
    if not report.groups:
        return "no alive mutants\n"
    lines = [f"{report.total} alive mutants by {report.group_by}"]
    for g in report.groups:
        lines.append("")
        lines.append(f"{g.key} ({g.count})")
        for e in g.entries:
            first, last = e.line_span
            where = f"{e.file}:{first}" if first == last else f"{e.file}:{first}-{last}"
            lines.append(f"  {where}  [{e.operator_id}]  {e.excerpt}")
    return "\n".join(lines) + "\n"


def parse_report(text: str, fmt: str, group_by: str | None = None) -> AliveReport:
    """Inverse of :func:`render` for the machine formats."""
    if fmt == "json":
        return AliveReport.from_dict(json.loads(text))
    if fmt != "csv":
        raise ValueError("only json and csv reports can be parsed")
    groups: dict[str, AliveGroup] = {}
    for row in csv.DictReader(io.StringIO(text)):
        groups.setdefault(row["group"], AliveGroup(row["group"])).entries.append(AliveEntry(
            row["mutant_id"], row["file"], (int(row["first_line"]), int(row["last_line"])),
            row["operator_id"], row["excerpt"],
        ))
    return AliveReport(group_by or "operator", list(groups.values()))


def _scores(summary: CampaignSummary) -> dict[str, float | None]:
    out = {}
    for label, flag in (("with_timeouts", True), ("without_timeouts", False)):
        try:
            out[label] = mutation_score(summary, flag)
        except UndefinedInputError:
            out[label] = None
    return out


def render_summary(
    summary: CampaignSummary, fmt: str = "text", include_timeouts: bool | None = None
) -> str:
    """Status counts plus mutation score; both score variants unless one is chosen."""
    scores = _scores(summary)
    if include_timeouts is not None:
        scores.pop("without_timeouts" if include_timeouts else "with_timeouts")
    if fmt == "json":
        return json.dumps(dict(summary.to_dict(), mutation_score=scores), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["operator"] + [s.value for s in Status] + ["total"])
        for op, row in sorted(summary.by_operator.items()):
            writer.writerow([op] + [row[s] for s in Status] + [sum(row.values())])
        writer.writerow(["ALL"] + [summary.counts[s] for s in Status] + [summary.total])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"format must be one of {', '.join(FORMATS)}")
    lines = [f"mutants: {summary.total}"]
    lines += [f"  {s.value:<16} {summary.counts[s]}" for s in Status if summary.counts[s]]

    def fmt_score(v):
        return "n/a" if v is None else f"{v:.3f}"

    if "with_timeouts" in scores:
        lines.append(f"mutation score (timeouts killed):   {fmt_score(scores['with_timeouts'])}")
    if "without_timeouts" in scores:
        lines.append(f"mutation score (timeouts excluded): {fmt_score(scores['without_timeouts'])}")
    return "\n".join(lines) + "\n"
