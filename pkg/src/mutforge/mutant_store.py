"""Append-only mutant database.

A store is a directory holding ``header`` (JSON metadata), ``log`` (one JSON
record per line) and ``lock``. The log has two record kinds: ``insert``
carries a full mutant, ``status`` moves one mutant from Pending to a terminal
status. Current state is the fold of the log, so reopening after a crash at
any point yields a consistent store. A torn final line is dropped with a
warning; damage anywhere else is an error.
"""

from __future__ import annotations

import base64
import fcntl
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .scanner import MatchSite

log = logging.getLogger(__name__)

FORMAT = "mutforge-store"
VERSION = 1
DIGEST = "sha256"


class Status(str, Enum):
    PENDING = "Pending"
    INVALID = "Invalid"
    KILLED_BY_TEST = "KilledByTest"
    KILLED_BY_CRASH = "KilledByCrash"
    KILLED_BY_TIMEOUT = "KilledByTimeout"
    ALIVE = "Alive"
    SKIPPED = "Skipped"

    @property
    def terminal(self) -> bool:
        return self is not Status.PENDING


class StoreError(Exception):
    pass


class StoreCorruptError(StoreError):
    pass


class StoreLockedError(StoreError):
    pass


class IntegrityError(StoreError):
    pass


class MutantNotFound(StoreError, KeyError):
    def __str__(self):
        return f"unknown mutant id {self.args[0]!r}"


class IllegalTransition(StoreError):
    pass


@dataclass(frozen=True)
class Evidence:
    phase: str = "test"  # "build" or "test"
    exit_code: int | None = None
    signal_name: str | None = None
    failing_test: str | None = None
    duration: float = 0.0
    excerpt: str = ""
    note: str = ""

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v not in (None, "")}

    @classmethod
    def from_dict(cls, data: dict) -> "Evidence":
        return cls(**data)


def mutant_id_for(site: MatchSite) -> str:
    key = json.dumps(
        [site.file, site.byte_span[0], site.byte_span[1], site.operator_id, site.context_digest],
        separators=(",", ":"),
    )
    return hashlib.sha256(key.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Mutant:
    mutant_id: str
    site: MatchSite
    original_text: bytes
    mutated_text: bytes
    status: Status = Status.PENDING
    evidence: Evidence | None = None

    @classmethod
    def create(cls, site: MatchSite, mutated_text: bytes) -> "Mutant":
        return cls(mutant_id_for(site), site, site.matched_text, mutated_text)

    def integrity_problems(self) -> list[str]:
        problems = []
        if self.original_text != self.site.matched_text:
            problems.append("original_text differs from the site's matched text")
        if self.mutant_id != mutant_id_for(self.site):
            problems.append("mutant_id does not match the site digest")
        return problems

    @property
    def operator_id(self) -> str:
        return self.site.operator_id


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _site_to_dict(site: MatchSite) -> dict:
    return {
        "file": site.file,
        "byte_span": list(site.byte_span),
        "line_span": list(site.line_span),
        "operator_id": site.operator_id,
        "matched_text": _b64(site.matched_text),
        "context_digest": site.context_digest,
    }


def _site_from_dict(d: dict) -> MatchSite:
    return MatchSite(
        file=d["file"],
        byte_span=tuple(d["byte_span"]),
        line_span=tuple(d["line_span"]),
        operator_id=d["operator_id"],
        matched_text=base64.b64decode(d["matched_text"]),
        context_digest=d["context_digest"],
    )


@dataclass
class CampaignSummary:
    counts: dict[Status, int] = field(default_factory=lambda: {s: 0 for s in Status})
    by_operator: dict[str, dict[Status, int]] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def add(self, operator_id: str, status: Status) -> None:
        self.counts[status] += 1
        row = self.by_operator.setdefault(operator_id, {s: 0 for s in Status})
        row[status] += 1

    def nonzero(self) -> dict[str, int]:
        return {s.value: n for s, n in self.counts.items() if n}

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "counts": {s.value: n for s, n in self.counts.items()},
            "by_operator": {
                op: {s.value: n for s, n in row.items()} for op, row in sorted(self.by_operator.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignSummary":
        out = cls()
        for name, n in data.get("counts", {}).items():
            out.counts[Status(name)] = n
        for op, row in data.get("by_operator", {}).items():
            out.by_operator[op] = {s: 0 for s in Status}
            for name, n in row.items():
                out.by_operator[op][Status(name)] = n
        return out


class MutantStore:
    """Handle on a store directory; use :func:`open_store` to obtain one.

    A writable handle holds an exclusive advisory lock on ``lock`` for its
    lifetime. Read-only handles take no lock and never modify the files.
    """

    def __init__(self, path: Path, readonly: bool):
        self.path = path
        self.readonly = readonly
        self._mutants: dict[str, Mutant] = {}
        self._lock_fh = None
        self._log_fh = None

    # -- lifecycle ---------------------------------------------------------------

    def _open(self, fsync: bool) -> None:
        self.fsync = fsync
        header = self.path / "header"
        if self.readonly:
            if not header.exists():
                raise StoreError(f"not a mutant store: {self.path}")
        else:
            self.path.mkdir(parents=True, exist_ok=True)
            self._lock_fh = open(self.path / "lock", "a+")
            try:
                fcntl.flock(self._lock_fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
            except BlockingIOError:
                self._lock_fh.close()
                self._lock_fh = None
                raise StoreLockedError(f"store is locked by another writer: {self.path}") from None
            if not header.exists():
                tmp = header.with_suffix(".tmp")
                tmp.write_text(json.dumps({"format": FORMAT, "version": VERSION, "digest": DIGEST}))
                os.replace(tmp, header)
        try:
            meta = json.loads(header.read_text())
        except (OSError, ValueError) as exc:
            raise StoreCorruptError(f"unreadable store header: {exc}") from None
        if meta.get("format") != FORMAT or meta.get("digest") != DIGEST:
            raise StoreError(f"unsupported store header: {meta}")
        good_end = self._replay()
        if not self.readonly:
            logfile = self.path / "log"
            if logfile.exists() and logfile.stat().st_size != good_end:
                with open(logfile, "r+b") as fh:
                    fh.truncate(good_end)
            self._log_fh = open(logfile, "ab")

    def close(self) -> None:
        if self._log_fh:
            self._log_fh.close()
            self._log_fh = None
        if self._lock_fh:
            fcntl.flock(self._lock_fh, fcntl.LOCK_UN)
            self._lock_fh.close()
            self._lock_fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- replay ---------------------------------------------------------------------

    def _replay(self) -> int:
        """Rebuild state from the log; return the byte length of the valid prefix."""
        logfile = self.path / "log"
        if not logfile.exists():
            return 0
        data = logfile.read_bytes()
        pos = 0
        lineno = 0
        while pos < len(data):
            nl = data.find(b"\n", pos)
            lineno += 1
            line = data[pos:] if nl < 0 else data[pos:nl]
            try:
                if nl < 0:
                    raise ValueError("missing newline")
                self._apply(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                rest = b"" if nl < 0 else data[nl + 1:]
                if rest.strip():
                    raise StoreCorruptError(f"log line {lineno}: {exc}") from None
                log.warning("%s: dropping torn final log record (line %d)", self.path, lineno)
                return pos
            pos = len(data) if nl < 0 else nl + 1
        return pos

    def _apply(self, rec: dict) -> None:
        kind = rec["t"]
        if kind == "insert":
            site = _site_from_dict(rec["site"])
            mutant = Mutant(rec["id"], site, site.matched_text, base64.b64decode(rec["mutated"]))
            self._mutants.setdefault(mutant.mutant_id, mutant)
        elif kind == "status":
            current = self._mutants[rec["id"]]
            status = Status(rec["status"])
            evidence = Evidence.from_dict(rec["evidence"]) if rec.get("evidence") else None
            self._mutants[current.mutant_id] = replace(current, status=status, evidence=evidence)
        else:
            raise ValueError(f"unknown record type {kind!r}")

    def refresh(self) -> None:
        """Re-read the log (for read-only handles following a live writer)."""
        self._mutants.clear()
        self._replay()

    # -- writes ------------------------------------------------------------------------

    def _write(self, records: list[dict]) -> None:
        if self.readonly or self._log_fh is None:
            raise StoreError("store is open read-only")
        payload = b"".join(
            json.dumps(r, separators=(",", ":"), sort_keys=True).encode() + b"\n" for r in records
        )
        self._log_fh.write(payload)
        self._log_fh.flush()
        if self.fsync:
            os.fsync(self._log_fh.fileno())

    def append_mutants(self, mutants: Iterable[Mutant]) -> int:
        """Insert new mutants, ignoring ids already present; return how many were new."""
        fresh: dict[str, Mutant] = {}
        for m in mutants:
            problems = m.integrity_problems()
            if problems:
                raise IntegrityError(f"{m.mutant_id[:12]}: {'; '.join(problems)}")
            if m.mutant_id not in self._mutants and m.mutant_id not in fresh:
                fresh[m.mutant_id] = replace(m, status=Status.PENDING, evidence=None)
        if fresh:
            self._write([
                {"t": "insert", "id": m.mutant_id, "site": _site_to_dict(m.site),
                 "mutated": _b64(m.mutated_text)}
                for m in fresh.values()
            ])
            self._mutants.update(fresh)
        return len(fresh)

    def update_status(self, mutant_id: str, status: Status, evidence: Evidence | None = None) -> None:
        current = self.get(mutant_id)
        status = Status(status)
        if current.status.terminal:
            raise IllegalTransition(
                f"{mutant_id[:12]}: already {current.status.value}, cannot become {status.value}"
            )
        if not status.terminal:
            raise IllegalTransition(f"{mutant_id[:12]}: target status must be terminal")
        rec = {"t": "status", "id": mutant_id, "status": status.value}
        if evidence is not None:
            rec["evidence"] = evidence.to_dict()
        self._write([rec])
        self._mutants[mutant_id] = replace(current, status=status, evidence=evidence)

    # -- reads -------------------------------------------------------------------------

    def get(self, mutant_id: str) -> Mutant:
        try:
            return self._mutants[mutant_id]
        except KeyError:
            raise MutantNotFound(mutant_id) from None

    def __contains__(self, mutant_id: str) -> bool:
        return mutant_id in self._mutants

    def __len__(self) -> int:
        return len(self._mutants)

    def __iter__(self) -> Iterator[Mutant]:
        return iter(list(self._mutants.values()))

    def mutants(self, status: Status | None = None) -> list[Mutant]:
        return [m for m in self._mutants.values() if status is None or m.status is status]

    def pending(self) -> list[Mutant]:
        return self.mutants(Status.PENDING)

    def summarize(self) -> CampaignSummary:
        out = CampaignSummary()
        for m in self._mutants.values():
            out.add(m.operator_id, m.status)
        return out


def open_store(path: str | os.PathLike, *, readonly: bool = False, fsync: bool = True) -> MutantStore:
    store = MutantStore(Path(path), readonly)
    try:
        store._open(fsync)
    except BaseException:
        store.close()
        raise
    return store


def summarize(store: MutantStore) -> CampaignSummary:
    return store.summarize()


def append_mutants(store: MutantStore, mutants: Iterable[Mutant]) -> int:
    return store.append_mutants(mutants)


def update_status(store: MutantStore, mutant_id: str, status: Status, evidence: Evidence | None = None) -> None:
    store.update_status(mutant_id, status, evidence)
