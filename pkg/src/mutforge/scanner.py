"""Locate mutation sites in a source tree.

Matching runs on a *blanked* copy of each file in which comments, string and
character literal contents and C preprocessor lines are overwritten with
spaces (newlines are kept). Offsets in the blanked copy are therefore offsets
in the original file, and nothing inside a comment or a literal can match.
"""

from __future__ import annotations

import fnmatch
import hashlib
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .operator_catalog import MatchKind, MutationOperator

log = logging.getLogger(__name__)

LANGUAGE_BY_SUFFIX = {
    ".c": "c_like", ".cc": "c_like", ".cpp": "c_like", ".cxx": "c_like",
    ".h": "c_like", ".hpp": "c_like", ".cu": "c_like",
    ".py": "python",
}

DEFAULT_EXCLUDES = (
    "*_test.*", "*_tests.*", "test_*.py", "conftest.py",
    "test/*", "tests/*", "*/test/*", "*/tests/*", "testing/*", "*/testing/*",
    "*.pb.cc", "*.pb.h", "*_pb2.py", "*_generated.*", "*.generated.*", "gen/*", "*/gen/*",
)
DEFAULT_MAX_BLOCK = 4096


@dataclass(frozen=True, order=True)
class MatchSite:
    file: str
    byte_span: tuple[int, int]
    line_span: tuple[int, int]
    operator_id: str
    matched_text: bytes
    context_digest: str

    def sort_key(self):
        return (self.file, self.operator_id, self.byte_span[0])


def language_of(path: str | os.PathLike) -> str | None:
    return LANGUAGE_BY_SUFFIX.get(Path(path).suffix.lower())


def digest(content: bytes) -> str:
    return hashlib.sha256(content).hexdigest()


# -- lexical blanking ---------------------------------------------------------------


def _blank(buf: bytearray, start: int, end: int) -> None:
    for i in range(start, end):
        if buf[i] != 0x0A:
            buf[i] = 0x20


def _skip_literal(text: bytes, i: int, quote: bytes) -> int:
    """Index just past the literal whose opening quote ends at ``i``."""
    n, q = len(text), len(quote)
    while i < n:
        if text[i] == 0x5C:  # backslash
            i += 2
            continue
        if text.startswith(quote, i):
            return i + q
        if q == 1 and text[i] == 0x0A:  # unterminated single-line literal
            return i
        i += 1
    return n


def blank_non_code(text: bytes, language: str) -> bytes:
    buf = bytearray(text)
    n = len(text)
    i = 0
    at_line_start = True
    while i < n:
        c = text[i]
        if c == 0x0A:
            at_line_start = True
            i += 1
            continue
        if c in (0x20, 0x09, 0x0D, 0x0C):
            i += 1
            continue
        if language == "python":
            if c == 0x23:  # '#'
                end = text.find(b"\n", i)
                end = n if end < 0 else end
                _blank(buf, i, end)
                i = end
                continue
            if c in (0x22, 0x27):
                quote = text[i:i + 3] if text[i:i + 3] in (b'"""', b"'''") else text[i:i + 1]
                end = _skip_literal(text, i + len(quote), quote)
                _blank(buf, i + len(quote), max(i + len(quote), end - len(quote)))
                i = end
                at_line_start = False
                continue
        else:
            if c == 0x23 and at_line_start:  # preprocessor line, with continuations
                j = i
                while True:
                    end = text.find(b"\n", j)
                    if end < 0:
                        end = n
                        break
                    if text[end - 1:end] == b"\\" or text[end - 2:end] == b"\\\r":
                        j = end + 1
                        continue
                    break
                _blank(buf, i, end)
                i = end
                continue
            if text.startswith(b"//", i):
                end = text.find(b"\n", i)
                end = n if end < 0 else end
                _blank(buf, i, end)
                i = end
                continue
            if text.startswith(b"/*", i):
                end = text.find(b"*/", i + 2)
                end = n if end < 0 else end + 2
                _blank(buf, i, end)
                i = end
                at_line_start = False
                continue
            if c in (0x22, 0x27):
                quote = text[i:i + 1]
                end = _skip_literal(text, i + 1, quote)
                _blank(buf, i + 1, max(i + 1, end - 1))
                i = end
                at_line_start = False
                continue
        at_line_start = False
        i += 1
    return bytes(buf)


# -- call blocks -------------------------------------------------------------------------


def _balanced_end(code: bytes, open_at: int, limit: int) -> int | None:
    """Index just past the paren closing the one at ``open_at``; None when unbalanced."""
    depth = 0
    for j in range(open_at, min(len(code), limit)):
        ch = code[j]
        if ch == 0x28:
            depth += 1
        elif ch == 0x29:
            depth -= 1
            if depth == 0:
                return j + 1
    return None


def find_call_blocks(
    text: bytes,
    identifiers: Iterable[str],
    *,
    language: str = "c_like",
    max_block: int = DEFAULT_MAX_BLOCK,
    code: bytes | None = None,
    where: str = "<text>",
) -> list[tuple[int, int]]:
    """Spans of ``IDENT(...)`` statements (plus a trailing ``;``) for the given callees.

    Spans are greedy and non-overlapping: a call nested inside an accepted
    span is not reported separately. Calls qualified by ``.``, ``->`` or
    ``::`` are skipped. A call left open at end of file, or longer than
    ``max_block`` bytes, is dropped with a warning.
    """
    if code is None:
        code = blank_non_code(text, language)
    names = sorted(set(identifiers), key=len, reverse=True)
    if not names:
        return []
    pattern = re.compile(rb"\b(?:" + b"|".join(re.escape(n.encode()) for n in names) + rb")\b")
    spans: list[tuple[int, int]] = []
    pos = 0
    while True:
        m = pattern.search(code, pos)
        if m is None:
            break
        start = m.start()
        pos = m.end()
        before = code[max(0, start - 2):start]
        if before.endswith(b".") or before.endswith(b"->") or before.endswith(b"::"):
            continue
        j = m.end()
        while j < len(code) and code[j] in b" \t\r\n":
            j += 1
        if j >= len(code) or code[j] != 0x28:
            continue
        end = _balanced_end(code, j, start + max_block + 1)
        if end is None:
            if _balanced_end(code, j, len(code)) is None:
                log.warning("%s: unbalanced call to %s at byte %d dropped",
                            where, m.group(0).decode(), start)
            else:
                log.warning("%s: call to %s at byte %d exceeds %d bytes, dropped",
                            where, m.group(0).decode(), start, max_block)
            continue
        k = end
        while k < len(code) and code[k] in b" \t":
            k += 1
        if k < len(code) and code[k] == 0x3B:
            end = k + 1
        if end - start > max_block:
            log.warning("%s: call to %s at byte %d exceeds %d bytes, dropped",
                        where, m.group(0).decode(), start, max_block)
            continue
        spans.append((start, end))
        pos = end
    return spans


# -- line patterns -----------------------------------------------------------------------


def find_line_matches(
    code: bytes, regex: re.Pattern[bytes], *, max_block: int = DEFAULT_MAX_BLOCK
) -> list[tuple[int, int]]:
    """Per-line regex matches on blanked code, greedy and non-overlapping.

    A match that leaves a parenthesis open (a Python ``raise Foo(`` continued
    on the next line, say) is extended to the closing parenthesis.
    """
    spans: list[tuple[int, int]] = []
    last_end = 0
    offset = 0
    for line in code.split(b"\n"):
        for m in regex.finditer(line):
            start, end = offset + m.start(), offset + m.end()
            if start < last_end or end == start:
                continue
            depth = code.count(b"(", start, end) - code.count(b")", start, end)
            if depth > 0:
                j = end
                limit = min(len(code), start + max_block)
                while j < limit and depth > 0:
                    if code[j] == 0x28:
                        depth += 1
                    elif code[j] == 0x29:
                        depth -= 1
                    j += 1
                if depth > 0:
                    continue
                end = j
            spans.append((start, end))
            last_end = end
        offset += len(line) + 1
    return spans


# -- files and corpora ------------------------------------------------------------------------


def _line_of(text: bytes, offset: int) -> int:
    return text.count(b"\n", 0, offset) + 1


def scan_text(
    text: bytes,
    operators: Sequence[MutationOperator],
    *,
    file: str,
    language: str,
    max_block: int = DEFAULT_MAX_BLOCK,
) -> list[MatchSite]:
    code = blank_non_code(text, language)
    ctx = digest(text)
    sites = []
    for op in operators:
        if not op.enabled or language not in op.language_scope:
            continue
        if op.match_spec.kind is MatchKind.CALL_BLOCK:
            spans = find_call_blocks(
                text, op.match_spec.identifiers, language=language,
                max_block=max_block, code=code, where=file,
            )
        else:
            spans = find_line_matches(code, op.match_spec.compiled(), max_block=max_block)
        for start, end in spans:
            sites.append(MatchSite(
                file=file,
                byte_span=(start, end),
                line_span=(_line_of(text, start), _line_of(text, max(start, end - 1))),
                operator_id=op.id,
                matched_text=text[start:end],
                context_digest=ctx,
            ))
    sites.sort(key=MatchSite.sort_key)
    return sites


def scan_file(
    path: str | os.PathLike,
    operators: Sequence[MutationOperator],
    *,
    root: str | os.PathLike | None = None,
    max_block: int = DEFAULT_MAX_BLOCK,
) -> list[MatchSite]:
    """Sites in one file, ordered by operator id then byte offset.

    ``file`` on each site is relative to ``root`` when one is given.
    """
    path = Path(path)
    language = language_of(path)
    if language is None:
        return []
    name = path.relative_to(root).as_posix() if root is not None else path.as_posix()
    return scan_text(path.read_bytes(), operators, file=name, language=language,
                     max_block=max_block)


def _matches_any(rel: str, patterns: Iterable[str]) -> bool:
    base = rel.rsplit("/", 1)[-1]
    return any(fnmatch.fnmatchcase(rel, p) or fnmatch.fnmatchcase(base, p) for p in patterns)


def iter_source_files(
    root: str | os.PathLike,
    include: Iterable[str] | None = None,
    exclude: Iterable[str] | None = DEFAULT_EXCLUDES,
) -> list[str]:
    """Relative POSIX paths of scannable files under ``root``, sorted."""
    root = Path(root)
    include = tuple(include or ())
    exclude = tuple(exclude or ())
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = [d for d in dirnames if not d.startswith(".") and d != "__pycache__"]
        for fn in filenames:
            rel = (Path(dirpath) / fn).relative_to(root).as_posix()
            if language_of(rel) is None:
                continue
            if include and not _matches_any(rel, include):
                continue
            if _matches_any(rel, exclude):
                continue
            found.append(rel)
    return sorted(found)


def scan_corpus(
    root: str | os.PathLike,
    operators: Sequence[MutationOperator],
    *,
    include: Iterable[str] | None = None,
    exclude: Iterable[str] | None = DEFAULT_EXCLUDES,
    max_block: int = DEFAULT_MAX_BLOCK,
    errors: list[tuple[str, str]] | None = None,
) -> list[MatchSite]:
    """All sites under ``root`` ordered by (path, operator id, byte offset).

    Unreadable files are logged, appended to ``errors`` when given, and skipped.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root does not exist or is not a directory: {root}")
    sites: list[MatchSite] = []
    for rel in iter_source_files(root, include, exclude):
        try:
            sites += scan_file(root / rel, operators, root=root, max_block=max_block)
        except OSError as exc:
            log.warning("%s: %s", rel, exc)
            if errors is not None:
                errors.append((rel, str(exc)))
    sites.sort(key=MatchSite.sort_key)
    return sites
