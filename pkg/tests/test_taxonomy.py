from types import SimpleNamespace

import pytest
from hypothesis import given, settings, strategies as st

from mutforge.taxonomy import (
    CWE, FIXING_TREE, ROOT_CAUSE_TREE, VULN_TREE, Effort, FixingLeaf, FixingPattern, FixingType,
    Library, RootCause, RootCauseType, Symptom, VulnCategory, VulnLeaf, VulnType, all_leaves,
    classify_effort, cwe_of, validate_label,
)

from oracles import effort_oracle


@pytest.mark.parametrize("added,deleted,bucket", [
    (0, 0, Effort.MICRO),
    (150, 100, Effort.LARGE),
    (20, 15, Effort.SMALL),
    (10, 0, Effort.MICRO),
    (6, 5, Effort.SMALL),
    (50, 0, Effort.SMALL),
    (25, 26, Effort.MEDIUM),
    (200, 0, Effort.MEDIUM),
    (201, 0, Effort.LARGE),
])
def test_classify_effort_boundaries(added, deleted, bucket):
    result = classify_effort(added, deleted)
    assert result.bucket is bucket
    assert result.lines_changed == added + deleted


def test_classify_effort_rejects_negative_counts():
    with pytest.raises(ValueError):
        classify_effort(-1, 0)


@settings(max_examples=300)
@given(st.integers(0, 5000), st.integers(0, 5000))
def test_classify_effort_matches_table(added, deleted):
    assert classify_effort(added, deleted).bucket is effort_oracle(added, deleted)


@settings(max_examples=200)
@given(st.integers(0, 2000), st.integers(0, 2000), st.integers(0, 2000))
def test_classify_effort_monotone(a, b, extra):
    order = list(Effort)
    lo = order.index(classify_effort(a, b).bucket)
    hi = order.index(classify_effort(a + extra, b).bucket)
    assert lo <= hi


@pytest.mark.parametrize("label,cwe", [
    (VulnCategory(VulnType.NUMERIC, VulnLeaf.INTEGER_OVERFLOW), 190),
    (VulnCategory(VulnType.MEMORY, VulnLeaf.MEMORY_LEAK), 401),
    (VulnCategory(VulnType.MEMORY, VulnLeaf.NULL_POINTER_DEREFERENCE), 476),
    (VulnCategory(VulnType.BUFFER, VulnLeaf.OUT_OF_BOUND_READ), 125),
    (VulnCategory(VulnType.CONCURRENCY, VulnLeaf.RACE_CONDITION), 362),
    (VulnCategory(VulnType.CONCURRENCY, VulnLeaf.DEADLOCK), 833),
    (VulnCategory(VulnType.RESOURCE, VulnLeaf.IMPROPER_INPUT_VALIDATION), 20),
    (VulnCategory(VulnType.OTHERS), None),
])
def test_cwe_of(label, cwe):
    assert cwe_of(label) == cwe
    assert label.cwe == cwe


def test_every_vuln_leaf_has_a_cwe():
    assert set(CWE) == set(all_leaves(VULN_TREE))


def test_numeric_leaves():
    assert set(VULN_TREE[VulnType.NUMERIC]) == {
        VulnLeaf.INTEGER_OVERFLOW, VulnLeaf.INSUFFICIENT_PRECISION,
        VulnLeaf.DIVISION_BY_ZERO, VulnLeaf.INTEGER_UNDERFLOW,
    }


@pytest.mark.parametrize("tree", [VULN_TREE, ROOT_CAUSE_TREE, FIXING_TREE])
def test_trees_partition_their_leaves(tree):
    leaves = all_leaves(tree)
    assert len(leaves) == len(set(leaves))


@pytest.mark.parametrize("cls,tree", [
    (VulnCategory, VULN_TREE), (RootCause, ROOT_CAUSE_TREE), (FixingPattern, FIXING_TREE),
])
def test_of_and_parse_agree(cls, tree):
    for category, leaves in tree.items():
        for leaf in leaves:
            label = cls.of(leaf)
            assert label.category is category
            assert cls.parse(category.value, leaf.value) == label
            assert str(label) == f"{category.value}/{leaf.value}"
            assert label.violations() == []


def test_parse_unknown_names():
    with pytest.raises(ValueError, match="category"):
        VulnCategory.parse("arithmetic", "")
    with pytest.raises(ValueError, match="subcategory"):
        VulnCategory.parse("numeric", "integer_wraparound")
    assert VulnCategory.parse("others", "") == VulnCategory(VulnType.OTHERS)


def test_leafless_and_missing_subcategory():
    assert RootCause(RootCauseType.OTHERS).violations() == []
    assert "missing subcategory" in RootCause(RootCauseType.MEMORY_ERRORS).violations()[0]


def _record(**overrides):
    base = dict(
        library=Library.TENSORFLOW,
        vuln=VulnCategory(VulnType.NUMERIC, VulnLeaf.INTEGER_OVERFLOW),
        root_cause=RootCause(RootCauseType.OTHERS),
        symptom=Symptom.CRASH,
        fixing=FixingPattern.of(FixingLeaf.ADD_CHECKER_FOR_OVERFLOW),
        added_lines=3,
        deleted_lines=1,
        commit_ids=("abc123",),
    )
    base.update(overrides)
    return SimpleNamespace(**base)


def test_validate_label_ok():
    assert validate_label(_record()) == []


def test_validate_label_cross_category():
    problems = validate_label(_record(vuln=VulnCategory(VulnType.NUMERIC, VulnLeaf.MEMORY_LEAK)))
    assert len(problems) == 1
    assert "subcategory not in category" in problems[0]


def test_validate_label_negative_effort():
    problems = validate_label(_record(added_lines=-3, deleted_lines=0))
    assert any("negative effort" in p for p in problems)


def test_validate_label_collects_everything():
    problems = validate_label(_record(
        library="caffe", symptom="meltdown", commit_ids=(),
        fixing=FixingPattern(FixingType.ADD_CHECKERS),
    ))
    assert len(problems) == 4
