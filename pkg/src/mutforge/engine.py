"""The mutation loop: apply, build, test, classify, revert, record.

Every worker owns a private copy of the corpus under ``workspace_root``; the
user's tree is never modified. Commands run in their own process group so a
timeout kills the whole tree they spawn.
"""

from __future__ import annotations

import logging
import os
import queue
import re
import shutil
import signal
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .mutant_store import Evidence, Mutant, MutantStore, Status, CampaignSummary
from .operator_catalog import MutationOperator, by_id, mutate_text
from .scanner import DEFAULT_EXCLUDES, DEFAULT_MAX_BLOCK, MatchSite, digest, language_of, scan_corpus

log = logging.getLogger(__name__)

OutcomeEvidence = Evidence
EXCERPT_LIMIT = 64 * 1024
DEFAULT_CRASH_MARKERS = ("Segmentation fault", "core dumped", "AddressSanitizer")
CRASH_SIGNALS = frozenset({signal.SIGSEGV, signal.SIGABRT, signal.SIGBUS, signal.SIGILL, signal.SIGFPE})


class ConfigError(ValueError):
    pass


class ContextMismatch(RuntimeError):
    pass


class WorkspaceCorrupt(RuntimeError):
    pass


class RevertError(RuntimeError):
    pass


@dataclass
class RunConfig:
    corpus_root: Path
    test_command: list[str]
    build_command: list[str] = field(default_factory=list)
    timeout: float = 300.0
    workers: int = 1
    workspace_root: Path | None = None
    env: dict[str, str] = field(default_factory=dict)
    crash_markers: tuple[str, ...] = DEFAULT_CRASH_MARKERS
    include: tuple[str, ...] = ()
    exclude: tuple[str, ...] = DEFAULT_EXCLUDES
    max_block: int = DEFAULT_MAX_BLOCK
    baseline: bool = True

    def __post_init__(self):
        self.corpus_root = Path(self.corpus_root)
        if self.workspace_root is not None:
            self.workspace_root = Path(self.workspace_root)
        self.test_command = list(self.test_command)
        self.build_command = list(self.build_command)

    def problems(self) -> list[str]:
        out = []
        if not self.test_command:
            out.append("test_command must be non-empty")
        if not self.timeout or self.timeout <= 0:
            out.append("timeout must be positive")
        if self.workers < 1:
            out.append("workers must be at least 1")
        if not self.corpus_root.is_dir():
            out.append(f"corpus_root is not a directory: {self.corpus_root}")
        return out

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))


# -- running commands -------------------------------------------------------------


@dataclass(frozen=True)
class PhaseResult:
    phase: str
    exit_code: int | None
    signal_number: int | None = None
    timed_out: bool = False
    output: str = ""
    duration: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.timed_out and self.signal_number is None and self.exit_code == 0

    @property
    def signal_name(self) -> str | None:
        if self.signal_number is None:
            return None
        try:
            return signal.Signals(self.signal_number).name
        except ValueError:
            return f"SIG{self.signal_number}"


def run_phase(phase: str, argv: Sequence[str], cwd: Path, timeout: float, env: dict | None = None) -> PhaseResult:
    """Run ``argv`` in ``cwd`` with stdout and stderr merged, killing its process group on timeout."""
    full_env = dict(os.environ)
    full_env.update(env or {})
    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            list(argv), cwd=cwd, env=full_env, stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE, stderr=subprocess.STDOUT, start_new_session=True,
        )
    except OSError as exc:
        return PhaseResult(phase, 127, output=f"cannot execute {argv[0]!r}: {exc}",
                           duration=time.monotonic() - start)
    timed_out = False
    try:
        out, _ = proc.communicate(timeout=timeout)
    except subprocess.TimeoutExpired:
        timed_out = True
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        try:
            out, _ = proc.communicate(timeout=10)
        except subprocess.TimeoutExpired:
            # a grandchild escaped the group and holds the pipe open
            proc.kill()
            out = b""
    duration = time.monotonic() - start
    rc = proc.returncode
    text = (out or b"").decode("utf-8", errors="replace")
    if rc is not None and rc < 0:
        return PhaseResult(phase, None, -rc, timed_out, text, duration)
    return PhaseResult(phase, rc, None, timed_out, text, duration)


_FAILING_TEST = re.compile(
    r"^(?:FAIL: |ERROR: |\[  FAILED  \] |FAILED )(?P<name>[^\s,]+)", re.MULTILINE
)


def first_failing_test(output: str) -> str | None:
    m = _FAILING_TEST.search(output)
    return m.group("name") if m else None


def _crash_signal(result: PhaseResult) -> int | None:
    if result.signal_number is not None:
        return result.signal_number
    # shells report a child killed by signal N as exit status 128 + N
    if result.exit_code is not None and result.exit_code > 128:
        n = result.exit_code - 128
        if n in CRASH_SIGNALS:
            return n
    return None


def classify_outcome(
    build: PhaseResult | None,
    test: PhaseResult | None,
    crash_markers: Iterable[str] = DEFAULT_CRASH_MARKERS,
) -> Status:
    """Terminal status for one evaluation.

    ``build`` is None when there is no build step. ``test`` is None when the
    tests did not run.
    """
    if build is not None and build.timed_out:
        return Status.KILLED_BY_TIMEOUT
    if build is not None and not build.ok:
        return Status.INVALID
    if test is None:
        return Status.SKIPPED
    if test.timed_out:
        return Status.KILLED_BY_TIMEOUT
    if test.ok:
        return Status.ALIVE
    if _crash_signal(test) in CRASH_SIGNALS:
        return Status.KILLED_BY_CRASH
    if any(marker in test.output for marker in crash_markers):
        return Status.KILLED_BY_CRASH
    return Status.KILLED_BY_TEST


def evidence_for(result: PhaseResult | None, note: str = "") -> Evidence:
    if result is None:
        return Evidence(phase="test", note=note)
    output = result.output
    if len(output) > EXCERPT_LIMIT:
        output = output[-EXCERPT_LIMIT:]
    return Evidence(
        phase=result.phase,
        exit_code=result.exit_code,
        signal_name=result.signal_name,
        failing_test=first_failing_test(result.output) if result.phase == "test" else None,
        duration=round(result.duration, 3),
        excerpt=output,
        note=note or ("timeout" if result.timed_out else ""),
    )


# -- workspaces ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Applied:
    mutant_id: str
    file: str
    original: bytes


class Workspace:
    """A private, disposable copy of the corpus."""

    def __init__(self, corpus_root: Path, path: Path):
        self.corpus_root = Path(corpus_root)
        self.path = Path(path)
        self._applied: dict[str, Applied] = {}

    @classmethod
    def create(cls, corpus_root: Path, path: Path) -> "Workspace":
        ws = cls(corpus_root, path)
        ws.rebuild()
        return ws

    def rebuild(self) -> None:
        if self.path.exists():
            shutil.rmtree(self.path)
        shutil.copytree(self.corpus_root, self.path, symlinks=True)
        self._applied.clear()

    def remove(self) -> None:
        shutil.rmtree(self.path, ignore_errors=True)

    def file(self, rel: str) -> Path:
        return self.path / rel

    def apply(self, mutant: Mutant) -> Applied:
        site = mutant.site
        target = self.file(site.file)
        try:
            content = target.read_bytes()
        except OSError as exc:
            raise ContextMismatch(f"{site.file}: {exc}") from None
        start, end = site.byte_span
        if digest(content) != site.context_digest or content[start:end] != mutant.original_text:
            raise ContextMismatch(f"{site.file} changed since it was scanned")
        if any(a.file == site.file for a in self._applied.values()):
            raise ContextMismatch(f"{site.file} already carries an applied mutant")
        target.write_bytes(content[:start] + mutant.mutated_text + content[end:])
        token = Applied(mutant.mutant_id, site.file, content)
        self._applied[mutant.mutant_id] = token
        return token

    def revert(self, mutant: Mutant | Applied) -> None:
        mid = mutant.mutant_id
        token = self._applied.get(mid)
        if token is None:
            raise RevertError(f"mutant {mid[:12]} is not applied in this workspace")
        target = self.file(token.file)
        try:
            target.write_bytes(token.original)
            if target.read_bytes() != token.original:
                raise OSError("content differs after restore")
        except OSError as exc:
            raise WorkspaceCorrupt(f"cannot restore {token.file}: {exc}") from None
        del self._applied[mid]


def apply_mutant(workspace: Workspace, mutant: Mutant) -> Applied:
    return workspace.apply(mutant)


def revert_mutant(workspace: Workspace, mutant: Mutant | Applied) -> None:
    workspace.revert(mutant)


# -- evaluation ------------------------------------------------------------------------------


def build_mutants(
    sites: Iterable[MatchSite], operators: Sequence[MutationOperator], corpus_root: Path
) -> list[Mutant]:
    ops = by_id(operators)
    cache: dict[str, bytes] = {}
    out = []
    for site in sites:
        content = cache.get(site.file)
        if content is None:
            content = cache[site.file] = (Path(corpus_root) / site.file).read_bytes()
        start = site.byte_span[0]
        mutated = mutate_text(ops[site.operator_id], site.matched_text,
                              language_of(site.file) or "c_like", content[max(0, start - 256):start])
        out.append(Mutant.create(site, mutated))
    return out


def evaluate(mutant: Mutant, config: RunConfig, workspace: Workspace | None = None) -> tuple[Status, Evidence]:
    """Apply, build, test, classify and revert one mutant.

    The revert happens on every path. A failed revert raises
    :class:`WorkspaceCorrupt` so the caller can rebuild the workspace.
    """
    owned = workspace is None
    if owned:
        tmp = Path(tempfile.mkdtemp(prefix="mutforge-ws-", dir=config.workspace_root))
        workspace = Workspace.create(config.corpus_root, tmp / "ws")
    try:
        try:
            token = workspace.apply(mutant)
        except ContextMismatch as exc:
            return Status.SKIPPED, Evidence(phase="build", note=f"context mismatch: {exc}")
        try:
            build = None
            if config.build_command:
                build = run_phase("build", config.build_command, workspace.path, config.timeout, config.env)
            test = None
            if build is None or build.ok:
                test = run_phase("test", config.test_command, workspace.path, config.timeout, config.env)
            status = classify_outcome(build, test, config.crash_markers)
        finally:
            workspace.revert(token)
        deciding = test if test is not None else build
        return status, evidence_for(deciding)
    finally:
        if owned:
            shutil.rmtree(workspace.path.parent, ignore_errors=True)


def _evaluate_with_retry(mutant: Mutant, config: RunConfig, workspace: Workspace) -> tuple[Status, Evidence]:
    for attempt in (1, 2):
        try:
            return evaluate(mutant, config, workspace)
        except (OSError, WorkspaceCorrupt) as exc:
            log.warning("mutant %s attempt %d failed: %s; rebuilding workspace",
                        mutant.mutant_id[:12], attempt, exc)
            workspace.rebuild()
            last = exc
    return Status.SKIPPED, Evidence(note=f"infrastructure failure: {last}")


def check_baseline(config: RunConfig, workspace: Workspace) -> None:
    """Fail fast when the unmutated corpus does not build or its tests do not pass."""
    if config.build_command:
        build = run_phase("build", config.build_command, workspace.path, config.timeout, config.env)
        if not build.ok:
            raise ConfigError(f"unmutated corpus does not build:\n{build.output[-2000:]}")
    test = run_phase("test", config.test_command, workspace.path, config.timeout, config.env)
    if not test.ok:
        raise ConfigError(f"tests fail on the unmutated corpus:\n{test.output[-2000:]}")


def scan_into_store(config: RunConfig, store: MutantStore, operators: Sequence[MutationOperator]) -> int:
    sites = scan_corpus(config.corpus_root, operators, include=config.include or None,
                        exclude=config.exclude, max_block=config.max_block)
    return store.append_mutants(build_mutants(sites, operators, config.corpus_root))


ProgressFn = Callable[[Mutant, Status, Evidence], None]


def run_campaign(
    config: RunConfig,
    store: MutantStore,
    operators: Sequence[MutationOperator],
    *,
    scan: bool = True,
    limit: int | None = None,
    progress: ProgressFn | None = None,
) -> CampaignSummary:
    """Evaluate Pending mutants until none remain (or ``limit`` have been run).

    Already-terminal mutants are never re-executed, so an interrupted
    campaign resumes where it stopped.
    """
    config.validate()
    if scan:
        scan_into_store(config, store, operators)
    todo = store.pending()
    if limit is not None:
        todo = todo[:limit]
    if not todo:
        return store.summarize()

    if config.workspace_root is not None:
        config.workspace_root.mkdir(parents=True, exist_ok=True)
    base = Path(tempfile.mkdtemp(prefix="mutforge-", dir=config.workspace_root))
    workspaces: queue.Queue[Workspace] = queue.Queue()
    try:
        nworkers = min(config.workers, len(todo))
        created = [Workspace.create(config.corpus_root, base / f"w{i}") for i in range(nworkers)]
        if config.baseline:
            check_baseline(config, created[0])
        for ws in created:
            workspaces.put(ws)

        def task(mutant: Mutant):
            ws = workspaces.get()
            try:
                return mutant, _evaluate_with_retry(mutant, config, ws)
            finally:
                workspaces.put(ws)

        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            futures = [pool.submit(task, m) for m in todo]
            try:
                for fut in as_completed(futures):
                    mutant, (status, evidence) = fut.result()
                    store.update_status(mutant.mutant_id, status, evidence)
                    if progress:
                        progress(mutant, status, evidence)
            except BaseException:
                for f in futures:
                    f.cancel()
                raise
    finally:
        shutil.rmtree(base, ignore_errors=True)
    return store.summarize()
