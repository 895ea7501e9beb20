"""Randomized properties; every suite runs at least 1000 cases."""

import itertools
import random
import shutil
import signal
import tempfile
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from mutforge.dataset_stats import DIMENSIONS, count_by, cross_tab
from mutforge.engine import PhaseResult, Workspace, classify_outcome
from mutforge.fixture import build_records
from mutforge.mutant_store import Evidence, Mutant, Status, open_store
from mutforge.operator_catalog import builtin_catalog
from mutforge.scanner import MatchSite, digest, scan_text

from oracles import brute_count, brute_pairs, effort_oracle

CASES = settings(max_examples=1000)
OPS = builtin_catalog()


# -- apply then revert ---------------------------------------------------------------


@pytest.fixture(scope="module")
def scratch():
    path = Path(tempfile.mkdtemp(prefix="mutforge-prop-"))
    yield path
    shutil.rmtree(path, ignore_errors=True)


@st.composite
def file_and_edit(draw):
    content = draw(st.binary(min_size=1, max_size=2000))
    start = draw(st.integers(0, len(content) - 1))
    end = draw(st.integers(start + 1, len(content)))
    replacement = draw(st.binary(max_size=200))
    return content, start, end, replacement


@CASES
@given(file_and_edit())
def test_apply_then_revert_is_identity(scratch, case):
    content, start, end, replacement = case
    ws = Workspace(scratch, scratch)
    target = scratch / "f.c"
    target.write_bytes(content)
    site = MatchSite("f.c", (start, end), (1, 1), "OP", content[start:end], digest(content))
    mutant = Mutant.create(site, replacement)
    ws.apply(mutant)
    patched = target.read_bytes()
    assert patched[:start] == content[:start]
    assert patched[len(patched) - (len(content) - end):] == content[end:]
    assert patched[start:start + len(replacement)] == replacement
    ws.revert(mutant)
    assert target.read_bytes() == content


# -- scan determinism -----------------------------------------------------------------------

TOKENS = [
    "OP_REQUIRES(", "TF_LITE_ENSURE(", "free(", "Py_DECREF(", "obj.free(", "(", ")", ",", ";",
    '"', "'", "\\", "//", "/*", "*/", "\n", " ", "x", "ctx", "#define M ", "#if 0\n",
    "if (p == NULL) return;", "if (!q) return -1;", "int64_t n = 0;", "size_t k;",
    "int v = 3;", "pthread_mutex_lock(&mu);", "throw std::runtime_error(", "depth++;",
    "if x is None: return\n", "raise ValueError(", '"""', "#", "with lock:\n",
]


@CASES
@given(st.lists(st.sampled_from(TOKENS), max_size=80), st.sampled_from(["c_like", "python"]))
def test_scan_is_deterministic(tokens, language):
    text = "".join(tokens).encode()
    name = "f.py" if language == "python" else "f.cc"
    first = scan_text(text, OPS, file=name, language=language)
    second = scan_text(bytes(bytearray(text)), list(reversed(OPS)), file=name, language=language)
    assert first == second
    for site in first:
        start, end = site.byte_span
        assert 0 <= start < end <= len(text)
        assert text[start:end] == site.matched_text
        assert site.line_span[0] == text.count(b"\n", 0, start) + 1
    assert first == sorted(first, key=MatchSite.sort_key)


# -- classification totality ----------------------------------------------------------------

BUILDS = {
    "none": None,
    "ok": PhaseResult("build", 0),
    "exit1": PhaseResult("build", 1),
    "exit2": PhaseResult("build", 2),
    "segv": PhaseResult("build", None, int(signal.SIGSEGV)),
    "timeout": PhaseResult("build", None, int(signal.SIGKILL), timed_out=True),
}
TEST_OUTPUTS = ["", "FAIL: test_a\n", "Aborted (core dumped)\n", "Segmentation fault (core dumped)\n", "AddressSanitizer: x"]


def phase_results():
    out = {"not_run": None}
    for text in TEST_OUTPUTS:
        for code in (0, 1, 2, 3, 127, 134, 139, 255):
            out[f"exit{code}:{text!r}"] = PhaseResult("test", code, output=text)
        for sig in range(1, 32):
            out[f"sig{sig}:{text!r}"] = PhaseResult("test", None, sig, output=text)
        out[f"timeout:{text!r}"] = PhaseResult("test", None, 9, timed_out=True, output=text)
    return out


CRASHING = {signal.SIGSEGV, signal.SIGABRT, signal.SIGBUS, signal.SIGILL, signal.SIGFPE}


def decision_table(build, test):
    """Outcome rules written as one flat table, independent of the engine's code."""
    if build is not None:
        if build.timed_out:
            return Status.KILLED_BY_TIMEOUT
        if build.exit_code != 0 or build.signal_number is not None:
            return Status.INVALID
    if test is None:
        return Status.SKIPPED
    if test.timed_out:
        return Status.KILLED_BY_TIMEOUT
    if test.exit_code == 0 and test.signal_number is None:
        return Status.ALIVE
    sig = test.signal_number
    if sig is None and test.exit_code > 128:
        sig = test.exit_code - 128
    if sig in CRASHING:
        return Status.KILLED_BY_CRASH
    if "Segmentation fault" in test.output or "core dumped" in test.output \
            or "AddressSanitizer" in test.output:
        return Status.KILLED_BY_CRASH
    return Status.KILLED_BY_TEST


def test_classify_outcome_is_total():
    tests = phase_results()
    combos = list(itertools.product(BUILDS.items(), tests.items()))
    assert len(combos) >= 1000
    seen = set()
    for (bname, build), (tname, test) in combos:
        status = classify_outcome(build, test)
        assert status is classify_outcome(build, test)
        assert status.terminal
        assert status is decision_table(build, test), (bname, tname)
        seen.add(status)
    assert seen == set(Status) - {Status.PENDING}


# -- store replay after truncation ------------------------------------------------------------


def _mutant(i):
    text = f"guard{i}();".encode()
    site = MatchSite(f"f{i}.c", (0, len(text)), (1, 1), "OP", text, digest(text))
    return Mutant.create(site, b"")


TERMINAL = [s for s in Status if s.terminal]


@st.composite
def store_script(draw):
    n = draw(st.integers(1, 8))
    ops = []
    pending = []
    for i in range(n):
        ops.append(("insert", i))
        pending.append(i)
        if draw(st.booleans()):
            j = pending.pop(draw(st.integers(0, len(pending) - 1)))
            ops.append(("status", j, draw(st.sampled_from(TERMINAL))))
    return ops, draw(st.floats(0, 1))


@CASES
@given(store_script())
def test_truncated_store_replays_a_consistent_prefix(script):
    ops, cut_fraction = script
    tmp = Path(tempfile.mkdtemp(prefix="mutforge-store-"))
    try:
        snapshots = [{}]
        with open_store(tmp / "s", fsync=False) as store:
            for op in ops:
                if op[0] == "insert":
                    store.append_mutants([_mutant(op[1])])
                else:
                    store.update_status(_mutant(op[1]).mutant_id, op[2], Evidence(note="x"))
                snapshots.append({m.mutant_id: m.status for m in store})
        logfile = tmp / "s" / "log"
        data = logfile.read_bytes()
        cut = int(len(data) * cut_fraction)
        logfile.write_bytes(data[:cut])
        complete = data[:cut].count(b"\n")
        with open_store(tmp / "s", readonly=True) as reader:
            assert {m.mutant_id: m.status for m in reader} == snapshots[complete]
        with open_store(tmp / "s", fsync=False) as writer:
            assert {m.mutant_id: m.status for m in writer} == snapshots[complete]
        assert logfile.read_bytes() == data[:len(b"".join(data.splitlines(True)[:complete]))]
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


# -- dataset counting ----------------------------------------------------------------------

POOL = build_records()

ORACLE_KEYS = {
    "library": lambda r: r.library.value,
    "vuln_category": lambda r: r.vuln.category.value,
    "vuln_subcategory": lambda r: (r.vuln.subcategory or r.vuln.category).value,
    "root_cause": lambda r: r.root_cause.category.value,
    "root_cause_subcategory": lambda r: (r.root_cause.subcategory or r.root_cause.category).value,
    "symptom": lambda r: r.symptom.value,
    "fixing": lambda r: r.fixing.category.value,
    "fixing_subcategory": lambda r: (r.fixing.subcategory or r.fixing.category).value,
    "effort": lambda r: effort_oracle(r.added_lines, r.deleted_lines).value,
}


@st.composite
def datasets(draw):
    import dataclasses

    size = draw(st.integers(0, 1000))
    rng = random.Random(draw(st.integers(0, 2**32)))
    out = []
    for _ in range(size):
        r = rng.choice(POOL)
        out.append(dataclasses.replace(r, added_lines=rng.randint(0, 300),
                                       deleted_lines=rng.randint(0, 60)))
    return out


def test_oracle_covers_every_dimension():
    assert set(ORACLE_KEYS) == set(DIMENSIONS)


@CASES
@given(datasets(), st.sampled_from(sorted(DIMENSIONS)))
def test_count_by_partitions(records, dim):
    counts = count_by(records, dim)
    assert sum(counts.values()) == len(records)
    assert all(n > 0 for n in counts.values())
    assert counts == brute_count(records, ORACLE_KEYS[dim])


@CASES
@given(datasets(), st.sampled_from(sorted(itertools.permutations(DIMENSIONS, 2))))
def test_cross_tab_marginals(records, dims):
    row_dim, col_dim = dims
    tab = cross_tab(records, row_dim, col_dim)
    pairs = brute_pairs(records, ORACLE_KEYS[row_dim], ORACLE_KEYS[col_dim])
    for r in tab.rows:
        for c in tab.cols:
            assert tab.cells[r][c] == pairs[(r, c)]
    assert sum(pairs.values()) == tab.grand_total == len(records)
    assert tab.row_totals == brute_count(records, ORACLE_KEYS[row_dim])
    assert tab.col_totals == brute_count(records, ORACLE_KEYS[col_dim])
