"""Deterministic construction of the bundled 596-record vulnerability dataset.

The dataset is synthetic: each record's labels are assigned so that every
per-library and per-subcategory marginal matches the reference counts below,
and the root cause x effort table matches ``EFFORT_BY_ROOT_CAUSE``. Cells
without a reference count (for example the split of buffer vulnerabilities
into leaves) are filled round-robin over the leaves in lexicographic order.

Regenerate the bundled file with ``python -m mutforge.fixture``.
"""

from __future__ import annotations

import hashlib
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .dataset_stats import VulnRecord, dump_dataset, fixture_path
from .taxonomy import (
    EFFORT_UPPER_BOUNDS,
    FIXING_TREE,
    ROOT_CAUSE_TREE,
    VULN_TREE,
    Effort,
    FixingLeaf as FL,
    FixingPattern,
    FixingType as FT,
    Library,
    RootCause,
    RootCauseLeaf as RL,
    RootCauseType as RT,
    Symptom as S,
    VulnCategory,
    VulnLeaf as VL,
    VulnType as VT,
)

TF, PT, SK, PD, NP = (
    Library.TENSORFLOW, Library.PYTORCH, Library.SCIKIT_LEARN, Library.PANDAS, Library.NUMPY,
)
LIBRARIES = (TF, PT, SK, PD, NP)

LIBRARY_TOTALS = {TF: 250, PT: 75, SK: 37, PD: 84, NP: 150}


# Rows are categories; tuple order is (tensorflow, pytorch, scikit_learn, pandas, numpy).
def _columns(rows: Mapping[Enum, Sequence[int]]) -> dict[Enum, dict[Library, int]]:
    return {cat: dict(zip(LIBRARIES, counts)) for cat, counts in rows.items()}


VULN_TYPE_COUNTS = _columns({
    VT.NUMERIC: (70, 27, 22, 41, 24),
    VT.MEMORY: (52, 16, 10, 15, 86),
    VT.BUFFER: (49, 12, 1, 12, 15),
    VT.RESOURCE: (27, 13, 0, 13, 13),
    VT.CONCURRENCY: (39, 2, 1, 0, 4),
    VT.OTHERS: (13, 5, 3, 3, 8),
})

ROOT_CAUSE_COUNTS = _columns({
    RT.DATA_TYPE_ERRORS: (100, 35, 14, 36, 28),
    RT.MEMORY_ERRORS: (57, 19, 7, 15, 78),
    RT.API_ERRORS: (14, 5, 8, 15, 26),
    RT.BUSINESS_LOGIC_ERRORS: (27, 9, 8, 6, 8),
    RT.CONCURRENCY_ERRORS: (27, 3, 0, 0, 3),
    RT.OTHERS: (25, 4, 0, 12, 7),
})

SYMPTOM_COUNTS = _columns({
    S.SEGMENTATION_FAULT: (69, 30, 0, 26, 37),
    S.CRASH: (73, 18, 10, 16, 16),
    S.UNEXPECTED_BEHAVIOR: (47, 18, 17, 27, 18),
    S.RESOURCE_CONSUMPTION: (32, 2, 7, 5, 70),
    S.HANG: (29, 6, 2, 2, 5),
    S.OTHERS: (0, 1, 1, 8, 4),
})

FIXING_COUNTS = _columns({
    FT.ADD_CHECKERS: (96, 24, 6, 18, 32),
    FT.MODIFY_BUSINESS_LOGIC: (27, 17, 12, 34, 17),
    FT.RESOLVE_DATA_TYPE_ERRORS: (44, 18, 8, 16, 10),
    FT.RESOLVE_MEMORY_ERRORS: (6, 2, 4, 4, 58),
    FT.RESOLVE_API_ERRORS: (13, 5, 7, 8, 23),
    FT.RESOLVE_CONCURRENCY_ERRORS: (20, 3, 0, 0, 3),
    FT.OTHERS: (44, 6, 0, 4, 7),
})

# Leaf counts per library where a per-library breakdown exists.
LEAF_COUNTS: dict[Enum, dict[Library, int]] = _columns({
    VL.INTEGER_OVERFLOW: (63, 18, 8, 34, 12),
    VL.INSUFFICIENT_PRECISION: (4, 6, 4, 3, 10),
    VL.DIVISION_BY_ZERO: (2, 3, 7, 3, 2),
    VL.INTEGER_UNDERFLOW: (1, 0, 3, 1, 0),
    VL.MEMORY_LEAK: (6, 2, 8, 5, 65),
    VL.NULL_POINTER_DEREFERENCE: (25, 7, 0, 6, 10),
    VL.INFINITE_LOOP: (19, 5, 2, 3, 5),
    VL.DOUBLE_FREE: (1, 2, 0, 1, 2),
    VL.USE_AFTER_FREE: (1, 0, 0, 0, 4),
    RL.NUMERICAL_PRECISION_ERROR: (34, 17, 12, 21, 10),
    RL.TENSOR_PROPERTY_ISSUE: (47, 11, 0, 2, 13),
    RL.USING_IMPROPER_DATA_TYPE: (13, 5, 1, 4, 1),
    RL.INCORRECT_TYPE_CONVERSION: (6, 2, 1, 9, 4),
    RL.INVALID_MEMORY_ACCESS: (41, 17, 0, 8, 13),
    RL.IMPROPER_MEMORY_MANAGEMENT: (4, 1, 6, 3, 58),
    RL.STACK_OR_BUFFER_SIZE_ISSUE: (7, 1, 0, 1, 4),
    RL.OUT_OF_BOUND_READ: (5, 0, 1, 3, 3),
    RL.USING_WRONG_API: (3, 2, 2, 3, 11),
    RL.API_MISUSE: (3, 1, 3, 4, 9),
    RL.MALICIOUS_PARAMETERS: (3, 1, 3, 7, 4),
    RL.API_VERSION_ISSUE: (5, 1, 0, 1, 2),
    FL.ADD_CHECKER_FOR_TENSORS_PROPERTY: (67, 13, 1, 7, 14),
    FL.ADD_CHECKER_FOR_OVERFLOW: (13, 7, 4, 10, 1),
    FL.ADD_CHECKER_FOR_NULL_POINTER_DEREFERENCE: (16, 3, 1, 1, 13),
    FL.ADD_CHECKER_FOR_RECURSION: (0, 1, 0, 0, 4),
})

EFFORT_BY_ROOT_CAUSE: dict[RT, dict[Effort, int]] = {
    cat: dict(zip(Effort, counts))
    for cat, counts in {
        RT.DATA_TYPE_ERRORS: (61, 89, 46, 17),
        RT.MEMORY_ERRORS: (72, 70, 26, 8),
        RT.API_ERRORS: (20, 37, 7, 4),
        RT.BUSINESS_LOGIC_ERRORS: (19, 21, 14, 4),
        RT.OTHERS: (15, 13, 14, 6),
        RT.CONCURRENCY_ERRORS: (14, 10, 4, 5),
    }.items()
}


def _round_robin(total: int, leaves: Sequence[Enum]) -> dict[Enum, int]:
    ordered = sorted(leaves, key=lambda leaf: leaf.value)
    base, extra = divmod(total, len(ordered))
    return {leaf: base + (1 if i < extra else 0) for i, leaf in enumerate(ordered)}


def _labels(lib: Library, counts, tree, label_cls) -> list:
    """Expand category counts for one library into a list of labels."""
    out = []
    for category, per_lib in counts.items():
        n = per_lib[lib]
        leaves = tree[category]
        if not leaves:
            out += [label_cls(category, None)] * n
            continue
        if all(leaf in LEAF_COUNTS for leaf in leaves):
            split = {leaf: LEAF_COUNTS[leaf][lib] for leaf in leaves}
            if sum(split.values()) != n:
                raise AssertionError(f"{lib.value}/{category.value}: leaf counts do not sum to {n}")
        else:
            split = _round_robin(n, leaves)
        for leaf in leaves:
            out += [label_cls(category, leaf)] * split[leaf]
    if len(out) != LIBRARY_TOTALS[lib]:
        raise AssertionError(f"{lib.value}: {len(out)} labels, expected {LIBRARY_TOTALS[lib]}")
    return out


def _spread(counts: Mapping[Effort, int]) -> list[Effort]:
    """Interleave buckets evenly, e.g. {a: 2, b: 1} -> [a, b, a]."""
    keyed = [
        ((j + 0.5) / n, i, bucket)
        for i, (bucket, n) in enumerate(counts.items())
        for j in range(n)
    ]
    return [bucket for _, _, bucket in sorted(keyed)]


def _lines_for(bucket: Effort, serial: int) -> tuple[int, int]:
    lower = 0
    for b, upper in EFFORT_UPPER_BOUNDS:
        if b is bucket:
            break
        lower = upper + 1
    else:
        upper = lower + 600
    if bucket is Effort.MICRO:
        lower = 1
    total = lower + (serial * 7) % (upper - lower + 1)
    deleted = total // 3
    return total - deleted, deleted


def build_records() -> list[VulnRecord]:
    efforts = {cat: iter(_spread(counts)) for cat, counts in EFFORT_BY_ROOT_CAUSE.items()}
    records = []
    for lib in LIBRARIES:
        vulns = _labels(lib, VULN_TYPE_COUNTS, VULN_TREE, VulnCategory)
        roots = _labels(lib, ROOT_CAUSE_COUNTS, ROOT_CAUSE_TREE, RootCause)
        fixes = _labels(lib, FIXING_COUNTS, FIXING_TREE, FixingPattern)
        symptoms = [s for s, per_lib in SYMPTOM_COUNTS.items() for _ in range(per_lib[lib])]
        for n, (vuln, root, fix, symptom) in enumerate(zip(vulns, roots, fixes, symptoms), 1):
            rid = f"{lib.value}-{n:04d}"
            bucket = next(efforts[root.category])
            added, deleted = _lines_for(bucket, len(records))
            records.append(VulnRecord(
                id=rid,
                library=lib,
                vuln=vuln,
                root_cause=root,
                symptom=symptom,
                fixing=fix,
                added_lines=added,
                deleted_lines=deleted,
                commit_ids=(hashlib.sha1(rid.encode()).hexdigest(),),
            ))
    return records


def write_fixture(path: str | Path | None = None) -> Path:
    target = Path(path) if path else fixture_path()
    target.write_text(dump_dataset(build_records()), encoding="utf-8")
    return target


if __name__ == "__main__":
    print(write_fixture())
