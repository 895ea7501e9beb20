"""Labelled vulnerability records: loading, counting and cross-tabulation."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .taxonomy import (
    Effort,
    FixingPattern,
    Library,
    RootCause,
    Symptom,
    VulnCategory,
    classify_effort,
    validate_label,
    FixingLeaf,
    FixingType,
    RootCauseLeaf,
    RootCauseType,
    VulnLeaf,
    VulnType,
)

COLUMNS = (
    "id",
    "library",
    "vuln_category",
    "vuln_subcategory",
    "root_cause_category",
    "root_cause_subcategory",
    "symptom",
    "fixing_category",
    "fixing_subcategory",
    "added_lines",
    "deleted_lines",
    "commit_ids",
    "cve_ids",
)
LIST_SEP = ";"


class DatasetError(Exception):
    pass


class DatasetParseError(DatasetError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DatasetValidationError(DatasetError):
    def __init__(self, problems: Mapping[str, list[str]]):
        self.problems = dict(problems)
        ids = ", ".join(self.problems)
        detail = "; ".join(f"{rid}: {', '.join(p)}" for rid, p in self.problems.items())
        super().__init__(f"invalid records [{ids}]: {detail}")


class UndefinedInputError(ValueError):
    pass


@dataclass(frozen=True)
class VulnRecord:
    id: str
    library: Library
    vuln: VulnCategory
    root_cause: RootCause
    symptom: Symptom
    fixing: FixingPattern
    added_lines: int
    deleted_lines: int
    commit_ids: tuple[str, ...]
    cve_ids: tuple[str, ...] = ()

    @property
    def lines_changed(self) -> int:
        return self.added_lines + self.deleted_lines

    @property
    def effort(self) -> Effort:
        return classify_effort(self.added_lines, self.deleted_lines).bucket


# Dimension name -> (key extractor, canonical key order).
def _leaf_or_category(label) -> str:
    return (label.subcategory or label.category).value


DIMENSIONS: dict[str, tuple[Callable[[VulnRecord], str], list[str]]] = {
    "library": (lambda r: r.library.value, [m.value for m in Library]),
    "vuln_category": (lambda r: r.vuln.category.value, [m.value for m in VulnType]),
    "vuln_subcategory": (
        lambda r: _leaf_or_category(r.vuln),
        [m.value for m in VulnLeaf] + [VulnType.OTHERS.value],
    ),
    "root_cause": (lambda r: r.root_cause.category.value, [m.value for m in RootCauseType]),
    "root_cause_subcategory": (
        lambda r: _leaf_or_category(r.root_cause),
        [m.value for m in RootCauseLeaf] + [RootCauseType.OTHERS.value],
    ),
    "symptom": (lambda r: r.symptom.value, [m.value for m in Symptom]),
    "fixing": (lambda r: r.fixing.category.value, [m.value for m in FixingType]),
    "fixing_subcategory": (
        lambda r: _leaf_or_category(r.fixing),
        [m.value for m in FixingLeaf] + [FixingType.OTHERS.value],
    ),
    "effort": (lambda r: r.effort.value, [m.value for m in Effort]),
}


def _key(dimension: str) -> Callable[[VulnRecord], str]:
    try:
        return DIMENSIONS[dimension][0]
    except KeyError:
        raise ValueError(
            f"unknown dimension {dimension!r}; expected one of {', '.join(DIMENSIONS)}"
        ) from None


# -- file format ------------------------------------------------------------


def _split_list(cell: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in cell.split(LIST_SEP) if part.strip())


def _parse_int(cell: str, column: str, line: int) -> int:
    try:
        return int(cell)
    except ValueError:
        raise DatasetParseError(line, f"column {column}: not an integer: {cell!r}") from None


def _parse_row(row: dict[str, str], line: int) -> VulnRecord | list[str]:
    problems = []

    def enum_cell(enum_cls: type[Enum], column: str):
        try:
            return enum_cls(row[column].strip())
        except ValueError:
            problems.append(f"unknown {column} {row[column]!r}")
            return None

    def label_cell(cls, prefix: str):
        try:
            return cls.parse(row[f"{prefix}_category"], row[f"{prefix}_subcategory"])
        except ValueError as exc:
            problems.append(str(exc))
            return None

    library = enum_cell(Library, "library")
    symptom = enum_cell(Symptom, "symptom")
    vuln = label_cell(VulnCategory, "vuln")
    root = label_cell(RootCause, "root_cause")
    fixing = label_cell(FixingPattern, "fixing")
    added = _parse_int(row["added_lines"], "added_lines", line)
    deleted = _parse_int(row["deleted_lines"], "deleted_lines", line)
    if problems:
        return problems
    record = VulnRecord(
        id=row["id"].strip(),
        library=library,
        vuln=vuln,
        root_cause=root,
        symptom=symptom,
        fixing=fixing,
        added_lines=added,
        deleted_lines=deleted,
        commit_ids=_split_list(row["commit_ids"]),
        cve_ids=_split_list(row["cve_ids"]),
    )
    return validate_label(record) or record


def parse_dataset(text: str) -> list[VulnRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetParseError(1, "missing header row") from None
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise DatasetParseError(1, f"header lacks columns: {', '.join(missing)}")

    records: list[VulnRecord] = []
    problems: dict[str, list[str]] = {}
    for row_values in reader:
        line = reader.line_num
        if not any(v.strip() for v in row_values):
            continue
        if len(row_values) != len(header):
            raise DatasetParseError(
                line, f"expected {len(header)} fields, found {len(row_values)}"
            )
        row = dict(zip(header, row_values))
        parsed = _parse_row(row, line)
        if isinstance(parsed, list):
            problems[row["id"] or f"<line {line}>"] = parsed
        else:
            records.append(parsed)
    if problems:
        raise DatasetValidationError(problems)
    return records


def load_dataset(path: str | Path) -> list[VulnRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_dataset(fh.read())


def dump_dataset(records: Iterable[VulnRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in records:
        writer.writerow([
            r.id,
            r.library.value,
            r.vuln.category.value,
            r.vuln.subcategory.value if r.vuln.subcategory else "",
            r.root_cause.category.value,
            r.root_cause.subcategory.value if r.root_cause.subcategory else "",
            r.symptom.value,
            r.fixing.category.value,
            r.fixing.subcategory.value if r.fixing.subcategory else "",
            r.added_lines,
            r.deleted_lines,
            LIST_SEP.join(r.commit_ids),
            LIST_SEP.join(r.cve_ids),
        ])
    return out.getvalue()


def save_dataset(records: Iterable[VulnRecord], path: str | Path) -> None:
    Path(path).write_text(dump_dataset(records), encoding="utf-8")


def fixture_path() -> Path:
    return Path(__file__).parent / "data" / "vulnerabilities.csv"


def load_fixture() -> list[VulnRecord]:
    return load_dataset(fixture_path())


# -- statistics --------------------------------------------------------------

Filter = Mapping[str, str] | Callable[[VulnRecord], bool] | None


def _apply_filter(records: Iterable[VulnRecord], where: Filter) -> list[VulnRecord]:
    if where is None:
        return list(records)
    if callable(where):
        return [r for r in records if where(r)]
    extractors = [(_key(dim), str(value)) for dim, value in where.items()]
    return [r for r in records if all(key(r) == value for key, value in extractors)]


def _ordered(counts: Counter, dimension: str) -> dict[str, int]:
    order = DIMENSIONS[dimension][1]
    return {k: counts[k] for k in order if counts[k]}


def count_by(records: Iterable[VulnRecord], dimension: str, where: Filter = None) -> dict[str, int]:
    """Count records per value of ``dimension``, after an optional filter.

    ``where`` is either a mapping of ``{dimension: canonical value}`` (all
    must match) or a predicate. Keys absent from the filtered set are
    omitted; the returned order follows the taxonomy declaration order.
    """
    key = _key(dimension)
    return _ordered(Counter(key(r) for r in _apply_filter(records, where)), dimension)


@dataclass
class CrossTab:
    row_dim: str
    col_dim: str
    rows: list[str]
    cols: list[str]
    cells: dict[str, dict[str, int]]

    @property
    def row_totals(self) -> dict[str, int]:
        return {r: sum(self.cells[r].values()) for r in self.rows}

    @property
    def col_totals(self) -> dict[str, int]:
        return {c: sum(self.cells[r][c] for r in self.rows) for c in self.cols}

    @property
    def grand_total(self) -> int:
        return sum(self.row_totals.values())

    def to_dict(self) -> dict:
        return {
            "row_dim": self.row_dim,
            "col_dim": self.col_dim,
            "rows": self.rows,
            "cols": self.cols,
            "cells": self.cells,
        }


def cross_tab(records: Iterable[VulnRecord], row_dim: str, col_dim: str) -> CrossTab:
    if row_dim == col_dim:
        raise ValueError(f"cross_tab needs two distinct dimensions, got {row_dim!r} twice")
    row_key, col_key = _key(row_dim), _key(col_dim)
    pairs = Counter((row_key(r), col_key(r)) for r in records)
    rows = [k for k in DIMENSIONS[row_dim][1] if any(p[0] == k for p in pairs)]
    cols = [k for k in DIMENSIONS[col_dim][1] if any(p[1] == k for p in pairs)]
    cells = {r: {c: pairs[(r, c)] for c in cols} for r in rows}
    return CrossTab(row_dim, col_dim, rows, cols, cells)


def micro_small_share(records: Sequence[VulnRecord]) -> float:
    if not records:
        raise UndefinedInputError("micro_small_share of an empty record set is undefined")
    small = sum(1 for r in records if r.effort in (Effort.MICRO, Effort.SMALL))
    return small / len(records)


# -- report -------------------------------------------------------------------

# (title, subcategory dimension, category dimension, category value)
SUBCATEGORY_TABLES = (
    ("Numeric vulnerabilities", "vuln_subcategory", "vuln_category", "numeric"),
    ("Memory vulnerabilities", "vuln_subcategory", "vuln_category", "memory"),
    ("Data type error root causes", "root_cause_subcategory", "root_cause", "data_type_errors"),
    ("Memory error root causes", "root_cause_subcategory", "root_cause", "memory_errors"),
    ("API error root causes", "root_cause_subcategory", "root_cause", "api_errors"),
    ("Add-checker fixes", "fixing_subcategory", "fixing", "add_checkers"),
)
CROSS_TABS = (
    ("library", "vuln_category"),
    ("library", "root_cause"),
    ("library", "symptom"),
    ("library", "fixing"),
    ("root_cause", "symptom"),
    ("root_cause", "fixing"),
    ("root_cause", "effort"),
)


@dataclass
class StatsReport:
    total: int
    totals: dict[str, dict[str, int]]
    subcategory_tables: dict[str, CrossTab]
    cross_tabs: dict[str, CrossTab]
    micro_small_share: float | None

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "totals": self.totals,
            "subcategory_tables": {k: v.to_dict() for k, v in self.subcategory_tables.items()},
            "cross_tabs": {k: v.to_dict() for k, v in self.cross_tabs.items()},
            "micro_small_share": self.micro_small_share,
        }


def build_report(records: Sequence[VulnRecord]) -> StatsReport:
    records = list(records)
    totals = {dim: count_by(records, dim) for dim in DIMENSIONS}
    subtables = {}
    for title, sub_dim, cat_dim, cat in SUBCATEGORY_TABLES:
        subset = _apply_filter(records, {cat_dim: cat})
        subtables[title] = cross_tab(subset, "library", sub_dim)
    tabs = {f"{a} x {b}": cross_tab(records, a, b) for a, b in CROSS_TABS}
    share = micro_small_share(records) if records else None
    return StatsReport(len(records), totals, subtables, tabs, share)


def _pct(n: int, total: int) -> str:
    return f"{100.0 * n / total:.1f}%" if total else "-"


def _render_crosstab(title: str, tab: CrossTab) -> list[str]:
    width = max([len(tab.row_dim)] + [len(r) for r in tab.rows] + [3])
    colw = [max(len(c), 5) for c in tab.cols]
    lines = [title]
    head = tab.row_dim.ljust(width) + "  " + "  ".join(c.rjust(w) for c, w in zip(tab.cols, colw))
    lines.append(head + "  " + "total".rjust(5))
    for r in tab.rows:
        cells = "  ".join(str(tab.cells[r][c]).rjust(w) for c, w in zip(tab.cols, colw))
        lines.append(r.ljust(width) + "  " + cells + "  " + str(tab.row_totals[r]).rjust(5))
    sums = "  ".join(str(tab.col_totals[c]).rjust(w) for c, w in zip(tab.cols, colw))
    lines.append("sum".ljust(width) + "  " + sums + "  " + str(tab.grand_total).rjust(5))
    return lines


def render_report(report: StatsReport, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["table", "row", "column", "count"])
        writer.writerow(["total", "", "", report.total])
        for dim, counts in report.totals.items():
            for key, n in counts.items():
                writer.writerow([f"totals:{dim}", key, "", n])
        for group in (report.subcategory_tables, report.cross_tabs):
            for title, tab in group.items():
                for r in tab.rows:
                    for c in tab.cols:
                        writer.writerow([title, r, c, tab.cells[r][c]])
        if report.micro_small_share is not None:
            writer.writerow(["micro_small_share", "", "", f"{report.micro_small_share:.4f}"])
        return out.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")

    lines = [f"records: {report.total}", ""]
    for dim, counts in report.totals.items():
        lines.append(f"by {dim}:")
        for key, n in counts.items():
            lines.append(f"  {key:<42} {n:>4}  {_pct(n, report.total):>6}")
        lines.append("")
    for title, tab in report.subcategory_tables.items():
        lines += _render_crosstab(title, tab) + [""]
    for title, tab in report.cross_tabs.items():
        lines += _render_crosstab(title, tab) + [""]
    if report.micro_small_share is not None:
        lines.append(f"micro+small share: {100 * report.micro_small_share:.1f}%")
    return "\n".join(lines).rstrip() + "\n"
