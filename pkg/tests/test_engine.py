import signal
from collections import Counter

import pytest

from mutforge.engine import (
    ConfigError, PhaseResult, RevertError, RunConfig, Workspace, apply_mutant, build_mutants,
    classify_outcome, evaluate, evidence_for, first_failing_test, revert_mutant, run_campaign,
    run_phase,
)
from mutforge.mutant_store import Status, open_store
from mutforge.operator_catalog import builtin_catalog, by_id
from mutforge.scanner import scan_corpus

from conftest import ALIVE_FIXTURE, TOY_CORPUS, needs_cc, needs_cxx, toy_config
from oracles import tree_snapshot

OPS = builtin_catalog()
EXPECTED_TOY = {"KilledByTest": 6, "KilledByCrash": 1, "KilledByTimeout": 1, "Alive": 3, "Invalid": 1}


def ok(phase="test"):
    return PhaseResult(phase, 0)


def failed(phase="test", code=1, output=""):
    return PhaseResult(phase, code, output=output)


def killed(sig, phase="test"):
    return PhaseResult(phase, None, int(sig))


def timeout(phase="test"):
    return PhaseResult(phase, None, int(signal.SIGKILL), timed_out=True, duration=5.0)


# -- classification ---------------------------------------------------------------------


def test_build_failure_is_invalid():
    assert classify_outcome(failed("build"), None) is Status.INVALID


def test_passing_suite_is_alive():
    assert classify_outcome(ok("build"), ok()) is Status.ALIVE
    assert classify_outcome(None, ok()) is Status.ALIVE


def test_segfault_is_crash():
    assert classify_outcome(ok("build"), killed(signal.SIGSEGV)) is Status.KILLED_BY_CRASH


@pytest.mark.parametrize("sig", [signal.SIGABRT, signal.SIGBUS, signal.SIGILL, signal.SIGFPE])
def test_other_crash_signals(sig):
    assert classify_outcome(None, killed(sig)) is Status.KILLED_BY_CRASH


def test_shell_reported_signal_is_crash():
    assert classify_outcome(None, failed(code=128 + signal.SIGSEGV)) is Status.KILLED_BY_CRASH


def test_crash_marker_in_output():
    result = failed(code=1, output="sh: line 1: 42 Segmentation fault (core dumped) ./t\n")
    assert classify_outcome(None, result) is Status.KILLED_BY_CRASH
    assert classify_outcome(None, failed(output="boom"), crash_markers=("boom",)) is Status.KILLED_BY_CRASH


def test_nonzero_exit_is_killed_by_test():
    assert classify_outcome(None, failed(output="FAIL: test_x\n")) is Status.KILLED_BY_TEST
    assert classify_outcome(None, killed(signal.SIGTERM)) is Status.KILLED_BY_TEST


def test_timeouts_in_either_phase():
    assert classify_outcome(timeout("build"), None) is Status.KILLED_BY_TIMEOUT
    assert classify_outcome(ok("build"), timeout()) is Status.KILLED_BY_TIMEOUT


def test_tests_not_run_is_skipped():
    assert classify_outcome(ok("build"), None) is Status.SKIPPED


@pytest.mark.parametrize("output,name", [
    ("ok\nFAIL: test_rank_rejected\n", "test_rank_rejected"),
    ("[  FAILED  ] Suite.Case (3 ms)\n", "Suite.Case"),
    ("FAILED tests/test_a.py::test_b - assert 1\n", "tests/test_a.py::test_b"),
    ("ERROR: test_c (mod.Case)\n", "test_c"),
    ("all good\n", None),
])
def test_first_failing_test(output, name):
    assert first_failing_test(output) == name


def test_evidence_excerpt_is_bounded():
    result = failed(output="x" * 200_000 + "FAIL: tail\n")
    ev = evidence_for(result)
    assert len(ev.excerpt) <= 64 * 1024
    assert ev.excerpt.endswith("FAIL: tail\n")


# -- running commands -----------------------------------------------------------------------


def test_run_phase_exit_and_output(tmp_path):
    r = run_phase("test", ["sh", "-c", "echo out; echo err >&2; exit 3"], tmp_path, 10)
    assert r.exit_code == 3 and not r.ok
    assert "out" in r.output and "err" in r.output


def test_run_phase_signal(tmp_path):
    r = run_phase("test", ["sh", "-c", "kill -SEGV $$"], tmp_path, 10)
    assert r.signal_name == "SIGSEGV"


def test_run_phase_timeout_kills_group(tmp_path):
    r = run_phase("test", ["sh", "-c", "sleep 30 & sleep 30"], tmp_path, 0.5)
    assert r.timed_out and 0.5 <= r.duration < 10


def test_run_phase_missing_program(tmp_path):
    r = run_phase("build", ["definitely-not-a-program-xyz"], tmp_path, 5)
    assert r.exit_code == 127


def test_run_config_validation(tmp_path):
    assert RunConfig(tmp_path, ["true"]).problems() == []
    bad = RunConfig(tmp_path / "missing", [], timeout=0, workers=0)
    assert len(bad.problems()) == 4
    with pytest.raises(ConfigError):
        bad.validate()


# -- apply and revert -----------------------------------------------------------------------


def alive_fixture_mutant():
    sites = scan_corpus(ALIVE_FIXTURE, OPS)
    (mutant,) = build_mutants(sites, OPS, ALIVE_FIXTURE)
    return mutant


def test_apply_removes_checker_block(tmp_path):
    mutant = alive_fixture_mutant()
    ws = Workspace.create(ALIVE_FIXTURE, tmp_path / "ws")
    original = (ALIVE_FIXTURE / "broadcast_to_op.cc").read_bytes()
    apply_mutant(ws, mutant)
    patched = ws.file("broadcast_to_op.cc").read_bytes()
    assert b"OP_REQUIRES" not in patched
    start, end = mutant.site.byte_span
    assert patched == original[:start] + original[end:]
    old_lines = original.decode().splitlines()
    assert old_lines[80].lstrip().startswith("OP_REQUIRES(")
    assert patched.decode().splitlines()[80].strip() == ""
    assert patched.decode().splitlines()[81:] == old_lines[84:]
    revert_mutant(ws, mutant)
    assert ws.file("broadcast_to_op.cc").read_bytes() == original


def test_type_narrow_replacement(tmp_path):
    text = b"void f(size_t size) {\n  int64_t n = size;\n}\n"
    (tmp_path / "corpus").mkdir()
    (tmp_path / "corpus" / "n.c").write_bytes(text)
    ops = [by_id(OPS)["TYPE-NARROW"]]
    sites = [s for s in scan_corpus(tmp_path / "corpus", ops) if s.line_span == (2, 2)]
    (mutant,) = build_mutants(sites, ops, tmp_path / "corpus")
    ws = Workspace.create(tmp_path / "corpus", tmp_path / "ws")
    ws.apply(mutant)
    assert ws.file("n.c").read_bytes().splitlines()[1] == b"  int32_t n = size;"


def test_drifted_file_is_skipped(tmp_path):
    mutant = alive_fixture_mutant()
    ws = Workspace.create(ALIVE_FIXTURE, tmp_path / "ws")
    target = ws.file("broadcast_to_op.cc")
    data = bytearray(target.read_bytes())
    data[mutant.site.byte_span[0] + 3] ^= 0x20
    target.write_bytes(bytes(data))
    config = RunConfig(ALIVE_FIXTURE, ["true"])
    status, evidence = evaluate(mutant, config, ws)
    assert status is Status.SKIPPED
    assert "context mismatch" in evidence.note
    assert target.read_bytes() == bytes(data)


def test_revert_without_apply(tmp_path):
    ws = Workspace.create(ALIVE_FIXTURE, tmp_path / "ws")
    with pytest.raises(RevertError):
        ws.revert(alive_fixture_mutant())


def test_disjoint_apply_and_revert(tmp_path):
    sites = scan_corpus(TOY_CORPUS, OPS)
    mutants = build_mutants(sites, OPS, TOY_CORPUS)
    a = next(m for m in mutants if m.site.file.endswith("shapes.c"))
    b = next(m for m in mutants if m.site.file.endswith("memory.c"))
    ws = Workspace.create(TOY_CORPUS, tmp_path / "ws")
    before = tree_snapshot(ws.path)
    ws.apply(a)
    ws.apply(b)
    assert tree_snapshot(ws.path) != before
    ws.revert(b)
    ws.revert(a)
    assert tree_snapshot(ws.path) == before == tree_snapshot(TOY_CORPUS)


def test_second_mutant_in_same_file_is_refused(tmp_path):
    mutants = [m for m in build_mutants(scan_corpus(TOY_CORPUS, OPS), OPS, TOY_CORPUS)
               if m.site.file.endswith("shapes.c")]
    ws = Workspace.create(TOY_CORPUS, tmp_path / "ws")
    ws.apply(mutants[0])
    status, _ = evaluate(mutants[1], RunConfig(TOY_CORPUS, ["true"]), ws)
    assert status is Status.SKIPPED


def test_python_corpus_without_build(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "lib.py").write_text(
        "def head(xs):\n    if xs is None: raise ValueError('none')\n    return xs[0]\n")
    (corpus / "check.py").write_text(
        "import lib\ntry:\n    lib.head(None)\nexcept ValueError:\n    pass\n")
    config = RunConfig(corpus, ["python3", "check.py"], workspace_root=tmp_path / "ws")
    with open_store(tmp_path / "store") as store:
        summary = run_campaign(config, store, OPS)
    # CHK-NULL-DEL and EXC-DEL both hit the guard line; TypeError escapes either way
    assert summary.nonzero() == {"KilledByTest": 2}


# -- campaigns ---------------------------------------------------------------------------------


@needs_cc
def test_toy_campaign_summary(toy_campaign):
    _, summary, events = toy_campaign
    assert summary.nonzero() == EXPECTED_TOY
    assert len(events) == 12


@needs_cc
def test_toy_campaign_evidence(toy_campaign):
    store_path, _, _ = toy_campaign
    with open_store(store_path, readonly=True) as store:
        by_status = {}
        for m in store:
            by_status.setdefault(m.status, []).append(m)
        for m in by_status[Status.KILLED_BY_TEST]:
            assert m.evidence.failing_test and m.evidence.failing_test.startswith("test_")
        (crash,) = by_status[Status.KILLED_BY_CRASH]
        assert crash.evidence.signal_name == "SIGSEGV"
        (slow,) = by_status[Status.KILLED_BY_TIMEOUT]
        assert slow.evidence.duration >= 5
        (invalid,) = by_status[Status.INVALID]
        assert invalid.evidence.phase == "build"
        alive_ops = sorted(m.operator_id for m in by_status[Status.ALIVE])
        assert alive_ops == ["CHK-NULL-DEL", "CHK-TENSOR-DEL", "INIT-DEL"]


@needs_cc
def test_toy_guard_mutant_names_failing_test(toy_campaign):
    store_path, _, _ = toy_campaign
    with open_store(store_path, readonly=True) as store:
        (m,) = [m for m in store if m.site.file == "src/shapes.c" and m.site.line_span[0] == 6]
    assert m.status is Status.KILLED_BY_TEST
    assert m.evidence.failing_test == "test_rank_rejected"


@needs_cc
def test_rerun_is_a_no_op(toy_campaign, tmp_path):
    store_path, summary, _ = toy_campaign
    events = []
    with open_store(store_path) as store:
        again = run_campaign(toy_config(tmp_path), store, OPS,
                             progress=lambda *a: events.append(a))
    assert events == []
    assert again == summary


@needs_cc
def test_corpus_is_preserved(toy_campaign):
    before = tree_snapshot(TOY_CORPUS)
    assert set(before) == {"build.sh", "test.sh", "src/toy.h", "src/shapes.c", "src/memory.c",
                           "src/ints.c", "tests/toy_test.c"}
    assert not (TOY_CORPUS / "toytest").exists()


@needs_cc
def test_interrupt_and_resume(tmp_path, toy_campaign):
    _, full, _ = toy_campaign
    store_path = tmp_path / "store"
    evaluated = Counter()
    count = lambda m, s, e: evaluated.update([m.mutant_id])
    with open_store(store_path) as store:
        first = run_campaign(toy_config(tmp_path), store, OPS, limit=5, progress=count)
        assert first.counts[Status.PENDING] == 7
    with open_store(store_path) as store:
        second = run_campaign(toy_config(tmp_path), store, OPS, progress=count)
    assert sum(evaluated.values()) == 12
    assert set(evaluated.values()) == {1}
    assert second == full


@needs_cc
def test_single_worker_matches_parallel(tmp_path, toy_campaign):
    store_path, _, _ = toy_campaign
    with open_store(store_path, readonly=True) as store:
        parallel = {m.mutant_id: m.status for m in store}
    with open_store(tmp_path / "store") as store:
        run_campaign(toy_config(tmp_path, workers=1), store, OPS)
        serial = {m.mutant_id: m.status for m in store}
    assert serial == parallel


def test_broken_baseline_aborts(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "a.py").write_text("def f(x):\n    if x is None: return\n")
    config = RunConfig(corpus, ["false"], workspace_root=tmp_path / "ws")
    with open_store(tmp_path / "store") as store:
        with pytest.raises(ConfigError):
            run_campaign(config, store, OPS)
        assert store.summarize().nonzero() == {"Pending": 1}


def test_invalid_config_aborts_before_scan(tmp_path):
    with open_store(tmp_path / "store") as store:
        with pytest.raises(ConfigError):
            run_campaign(RunConfig(tmp_path, [], timeout=-1), store, OPS)
        assert len(store) == 0


@needs_cxx
def test_alive_fixture_campaign(tmp_path):
    config = RunConfig(ALIVE_FIXTURE, ["sh", "test.sh"], ["sh", "build.sh"], timeout=120,
                       workspace_root=tmp_path / "ws")
    with open_store(tmp_path / "store") as store:
        summary = run_campaign(config, store, OPS)
        (m,) = list(store)
    assert summary.nonzero() == {"Alive": 1}
    assert m.operator_id == "CHK-TENSOR-DEL" and m.site.line_span == (81, 84)
