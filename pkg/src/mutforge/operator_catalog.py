"""Security-aware mutation operators.

Each operator undoes one kind of vulnerability fix: it deletes a checker that
was added, narrows an integer type that was widened, drops a release call,
and so on. Operators are plain data (a match spec plus a transform) so new
checker macros can be added in a catalog file without touching code.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from .taxonomy import FixingLeaf, FixingPattern

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

LANGUAGES = ("c_like", "python")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class MatchKind(str, Enum):
    LINE_PATTERN = "line_pattern"
    CALL_BLOCK = "call_block"


class TransformKind(str, Enum):
    DELETE_SPAN = "delete_span"
    REPLACE_BY_PATTERN = "replace_by_pattern"


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class MatchSpec:
    kind: MatchKind
    regex: str = ""
    identifiers: tuple[str, ...] = ()

    def compiled(self) -> re.Pattern[bytes]:
        return _compile(self.regex)


@dataclass(frozen=True)
class Transform:
    """``delete_span`` or an ordered table of (pattern, replacement) rewrites.

    For ``replace_by_pattern`` the first rule whose pattern occurs in the
    matched text is applied once.
    """

    kind: TransformKind
    rules: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class MutationOperator:
    id: str
    name: str
    inverted_fixing_pattern: FixingPattern
    seeds_cwe: int | None
    language_scope: frozenset[str]
    match_spec: MatchSpec
    transform: Transform
    enabled: bool = True
    description: str = field(default="", compare=False)


_compiled_cache: dict[str, re.Pattern[bytes]] = {}


def _compile(regex: str) -> re.Pattern[bytes]:
    pat = _compiled_cache.get(regex)
    if pat is None:
        pat = _compiled_cache[regex] = re.compile(regex.encode("utf-8"))
    return pat


def validate_operator(op: MutationOperator) -> list[str]:
    """Return the list of invariant violations for ``op`` (empty when valid)."""
    problems = []
    if not op.id or not op.id.strip():
        problems.append("empty operator id")
    if not op.language_scope:
        problems.append("empty language scope")
    unknown = sorted(set(op.language_scope) - set(LANGUAGES))
    if unknown:
        problems.append(f"unknown languages: {', '.join(unknown)}")
    problems += [f"fixing pattern: {p}" for p in op.inverted_fixing_pattern.violations()]
    if op.inverted_fixing_pattern.subcategory is None:
        problems.append("operator must invert a fixing-pattern leaf, not a bare category")

    spec = op.match_spec
    if spec.kind is MatchKind.CALL_BLOCK:
        if not spec.identifiers:
            problems.append("call_block match needs a non-empty identifier set")
        bad = [i for i in spec.identifiers if not _IDENT.fullmatch(i)]
        if bad:
            problems.append(f"not identifiers: {', '.join(bad)}")
    elif spec.kind is MatchKind.LINE_PATTERN:
        if not spec.regex:
            problems.append("line_pattern match needs a regex")
        else:
            try:
                if _compile(spec.regex).search(b"") is not None:
                    problems.append("line_pattern regex matches the empty string")
            except re.error as exc:
                problems.append(f"regex does not compile: {exc}")

    tr = op.transform
    if tr.kind is TransformKind.DELETE_SPAN:
        if tr.rules:
            problems.append("delete_span takes no replacement rules")
    elif tr.kind is TransformKind.REPLACE_BY_PATTERN:
        if not tr.rules:
            problems.append("replace_by_pattern needs at least one (pattern, replacement) rule")
        for pattern, replacement in tr.rules:
            try:
                compiled = _compile(pattern)
            except re.error as exc:
                problems.append(f"replacement pattern {pattern!r} does not compile: {exc}")
                continue
            if compiled.search(replacement.encode("utf-8")):
                problems.append(
                    f"replacement {replacement!r} re-matches its own pattern {pattern!r}"
                )
            if spec.kind is MatchKind.CALL_BLOCK and not any(
                compiled.search(ident.encode()) for ident in spec.identifiers
            ):
                problems.append(
                    f"call_block transform pattern {pattern!r} does not rewrite any callee"
                )
    return problems


def validate_catalog(ops: Iterable[MutationOperator]) -> list[str]:
    problems, seen = [], set()
    for op in ops:
        if op.id in seen:
            problems.append(f"duplicate operator id {op.id!r}")
        seen.add(op.id)
        problems += [f"{op.id}: {p}" for p in validate_operator(op)]
    return problems


# -- applying transforms ---------------------------------------------------------

_PREV_TOKEN = re.compile(rb"(\)|\belse|\bdo)\s*\Z")


def mutate_text(op: MutationOperator, matched: bytes, language: str, before: bytes = b"") -> bytes:
    """Replacement bytes for one match of ``op``.

    ``before`` is (a tail of) the file content preceding the match. A deleted
    C statement that is the body of ``if (...)``/``else``/``do`` becomes ``;``
    so the following statement does not slide into the branch; a deleted
    Python statement becomes ``pass``.
    """
    tr = op.transform
    if tr.kind is TransformKind.DELETE_SPAN:
        if language == "python":
            return b"pass"
        if _PREV_TOKEN.search(before[-64:]):
            return b";"
        return b""
    for pattern, replacement in tr.rules:
        compiled = _compile(pattern)
        if compiled.search(matched):
            return compiled.sub(replacement.encode("utf-8"), matched, count=1)
    return matched


# -- builtin catalog ----------------------------------------------------------------

_C = frozenset({"c_like"})
_CPY = frozenset({"c_like", "python"})

_NAME = r"[A-Za-z_][\w]*(?:(?:\.|->)[A-Za-z_]\w*)*"
_GUARD_BODY = r"(?:return\b[^;\n]*;|\{[^{}\n]*\})"

NULL_GUARD = (
    rf"\bif\s*\(\s*(?:!\s*{_NAME}|{_NAME}\s*==\s*(?:NULL|nullptr)|(?:NULL|nullptr)\s*==\s*{_NAME})"
    rf"\s*\)\s*{_GUARD_BODY}"
    rf"|\bif\s+{_NAME}\s+is\s+None\s*:\s*(?:return|raise)\b[^\n]*"
)
RECURSION_GUARD = (
    rf"\bif\s*\(\s*(?:[A-Za-z_]\w*(?:\.|->))*\w*(?:depth|Depth|DEPTH|recursion|Recursion|nesting|level)"
    rf"\w*\s*(?:>=|>|==)\s*[\w:.()]+\s*\)\s*(?:{_GUARD_BODY}|throw\b[^;\n]*;)"
    rf"|\bif\s+(?:[A-Za-z_]\w*\.)*\w*(?:depth|recursion|nesting|level)\w*\s*(?:>=|>|==)\s*[\w.()]+"
    rf"\s*:\s*(?:return|raise)\b[^\n]*"
)
WIDE_INT = r"\b(?:u?int64_t|int64|long\s+long(?:\s+int)?|size_t)\b"
SIGNED_SWAP = r"\b(?:size_t|unsigned(?:\s+int)?|uint32_t)\b"
INITIALIZED_DECL = (
    r"^[ \t]*(?!.*\bconst(?:expr)?\b)"
    r"(?:(?:static|volatile|register|signed|unsigned|short|long|struct)\s+)*"
    r"(?:int|char|float|double|bool|long|short|unsigned|size_t|ssize_t|u?int(?:8|16|32|64)_t"
    r"|int32|int64|Py_ssize_t|npy_intp|[A-Z][A-Za-z0-9_]*)"
    r"\s*\**\s*[A-Za-z_]\w*\s*=\s*[^;{},\n=][^;{},\n]*;"
)
LOCK_ACQUIRE = (
    r"\b(?:mutex_lock|tf_shared_lock|std::lock_guard<[^>\n]*>|std::unique_lock<[^>\n]*>"
    r"|std::scoped_lock(?:<[^>\n]*>)?)\s+[A-Za-z_]\w*\s*[({][^;\n]*[)}]\s*;"
    r"|\b(?:pthread_mutex_lock|pthread_spin_lock|pthread_rwlock_wrlock|pthread_rwlock_rdlock"
    r"|mtx_lock|EnterCriticalSection|PyThread_acquire_lock)\s*\([^;\n]*\)\s*;"
    r"|\b[A-Za-z_][\w]*(?:(?:\.|->)[A-Za-z_]\w*)*(?:\.|->)(?:lock|acquire)\(\s*\)(?:\s*;)?"
)
_BALANCED = r"\((?:[^()\n]|\((?:[^()\n]|\([^()\n]*\))*\))*\)"
_ERRORISH = (
    r"(?:-\s*[0-9]+|NULL|nullptr|false"
    r"|(?=[\w:]*(?:[Ee]rr|ERR|[Ff]ail|FAIL|[Ii]nvalid|INVALID|Status))[A-Za-z_][\w:]*(?:\([^;\n]*\))?)"
)
ERROR_EXIT = (
    rf"\bif\s*{_BALANCED}\s*return\s+{_ERRORISH}\s*;"
    r"|\bthrow\b[^;\n]*;"
    r"|\braise\b[^\n]*"
)


def _op(id, name, leaf, cwe, scope, spec, transform, description=""):
    return MutationOperator(
        id=id,
        name=name,
        inverted_fixing_pattern=FixingPattern.of(leaf),
        seeds_cwe=cwe,
        language_scope=scope,
        match_spec=spec,
        transform=transform,
        description=description,
    )


_DELETE = Transform(TransformKind.DELETE_SPAN)


def builtin_catalog() -> list[MutationOperator]:
    return [
        _op(
            "CHK-TENSOR-DEL", "Delete tensor-property checker",
            FixingLeaf.ADD_CHECKER_FOR_TENSORS_PROPERTY, 20, _C,
            MatchSpec(MatchKind.CALL_BLOCK, identifiers=(
                "OP_REQUIRES", "OP_REQUIRES_OK", "OP_REQUIRES_ASYNC", "OP_REQUIRES_OK_ASYNC",
                "TORCH_CHECK", "TORCH_CHECK_VALUE", "TORCH_CHECK_INDEX",
                "TF_LITE_ENSURE_EQ", "TF_LITE_ENSURE_TYPES_EQ",
            )),
            _DELETE,
            "Removes shape/rank/value checker macro calls.",
        ),
        _op(
            "CHK-OVERFLOW-DEL", "Delete overflow checker",
            FixingLeaf.ADD_CHECKER_FOR_OVERFLOW, 190, _C,
            MatchSpec(MatchKind.CALL_BLOCK, identifiers=("TF_LITE_ENSURE", "TF_LITE_ENSURE_MSG")),
            _DELETE,
        ),
        _op(
            "CHK-NULL-DEL", "Delete null-pointer guard",
            FixingLeaf.ADD_CHECKER_FOR_NULL_POINTER_DEREFERENCE, 476, _CPY,
            MatchSpec(MatchKind.LINE_PATTERN, regex=NULL_GUARD),
            _DELETE,
            "Removes single-line `if (p == NULL) return ...;` style guards.",
        ),
        _op(
            "CHK-RECURSION-DEL", "Delete recursion-depth guard",
            FixingLeaf.ADD_CHECKER_FOR_RECURSION, 835, _CPY,
            MatchSpec(MatchKind.LINE_PATTERN, regex=RECURSION_GUARD),
            _DELETE,
        ),
        _op(
            "TYPE-NARROW", "Narrow 64-bit integer type to 32 bits",
            FixingLeaf.INCREASE_INTEGER_TYPE_RANGE, 190, _CPY,
            MatchSpec(MatchKind.LINE_PATTERN, regex=WIDE_INT),
            Transform(TransformKind.REPLACE_BY_PATTERN, (
                (r"\bint64_t\b", "int32_t"),
                (r"\buint64_t\b", "uint32_t"),
                (r"\bint64\b", "int32"),
                (r"\blong\s+long(?:\s+int)?\b", "int"),
                (r"\bsize_t\b", "int"),
            )),
        ),
        _op(
            "SIGN-SWAP", "Make unsigned integer type signed",
            FixingLeaf.CONVERT_INTEGER_SIGN, 191, _C,
            MatchSpec(MatchKind.LINE_PATTERN, regex=SIGNED_SWAP),
            Transform(TransformKind.REPLACE_BY_PATTERN, (
                (r"\bsize_t\b", "int"),
                (r"\bunsigned(?:\s+int)?\b", "int"),
                (r"\buint32_t\b", "int32_t"),
            )),
        ),
        _op(
            "MEM-RELEASE-DEL", "Delete memory release call",
            FixingLeaf.MANAGE_MEMORY_RELEASE, 401, _C,
            MatchSpec(MatchKind.CALL_BLOCK, identifiers=(
                "free", "delete", "Py_DECREF", "Py_XDECREF", "Py_CLEAR",
                "PyMem_Free", "PyMem_RawFree", "PyObject_Free", "PyArray_free",
            )),
            _DELETE,
        ),
        _op(
            "INIT-DEL", "Drop variable initializer",
            FixingLeaf.RESOURCE_INITIALIZATION, 908, _C,
            MatchSpec(MatchKind.LINE_PATTERN, regex=INITIALIZED_DECL),
            Transform(TransformKind.REPLACE_BY_PATTERN, ((r"\s*=[^;]*", ""),)),
        ),
        _op(
            "LOCK-DEL", "Delete lock acquisition",
            FixingLeaf.ADD_LOCKING_MECHANISM, 362, _CPY,
            MatchSpec(MatchKind.LINE_PATTERN, regex=LOCK_ACQUIRE),
            _DELETE,
        ),
        _op(
            "EXC-DEL", "Delete error-raising branch",
            FixingLeaf.IMPROVED_EXCEPTION_HANDLING, None, _CPY,
            MatchSpec(MatchKind.LINE_PATTERN, regex=ERROR_EXIT),
            _DELETE,
            "Removes `if (...) return <error>;`, throw and raise statements.",
        ),
    ]


# -- catalog files ----------------------------------------------------------------


def _toml_str(value: str) -> str:
    if "'" not in value and not any(ord(ch) < 0x20 or ord(ch) == 0x7F for ch in value):
        return f"'{value}'"
    out = []
    for ch in value:
        if ch in '"\\':
            out.append("\\" + ch)
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'


def _toml_list(values: Iterable[str]) -> str:
    return "[" + ", ".join(_toml_str(v) for v in values) + "]"


def dump_catalog(ops: Iterable[MutationOperator]) -> str:
    chunks = ["# Mutation operator catalog. One [[operator]] table per operator.\n"]
    for op in ops:
        lines = [
            "[[operator]]",
            f"id = {_toml_str(op.id)}",
            f"name = {_toml_str(op.name)}",
            f"fixing_category = {_toml_str(op.inverted_fixing_pattern.category.value)}",
            f"fixing_subcategory = {_toml_str(op.inverted_fixing_pattern.subcategory.value)}",
        ]
        if op.seeds_cwe is not None:
            lines.append(f"seeds_cwe = {op.seeds_cwe}")
        lines.append(f"language_scope = {_toml_list(sorted(op.language_scope))}")
        lines.append(f"enabled = {'true' if op.enabled else 'false'}")
        if op.description:
            lines.append(f"description = {_toml_str(op.description)}")
        lines.append(f"match = {_toml_str(op.match_spec.kind.value)}")
        if op.match_spec.kind is MatchKind.CALL_BLOCK:
            lines.append(f"identifiers = {_toml_list(op.match_spec.identifiers)}")
        else:
            lines.append(f"regex = {_toml_str(op.match_spec.regex)}")
        lines.append(f"transform = {_toml_str(op.transform.kind.value)}")
        if op.transform.rules:
            rules = ", ".join(_toml_list(pair) for pair in op.transform.rules)
            lines.append(f"replace = [{rules}]")
        chunks.append("\n".join(lines) + "\n")
    return "\n".join(chunks)


def _operator_from_table(table: dict, index: int) -> MutationOperator:
    where = f"operator #{index + 1}"
    try:
        op_id = str(table["id"])
        where = f"operator {op_id!r}"
        fixing = FixingPattern.parse(table["fixing_category"], table.get("fixing_subcategory", ""))
        match_kind = MatchKind(table["match"])
        transform_kind = TransformKind(table["transform"])
        rules = tuple((str(p), str(r)) for p, r in table.get("replace", []))
        cwe = table.get("seeds_cwe")
        return MutationOperator(
            id=op_id,
            name=str(table.get("name", op_id)),
            inverted_fixing_pattern=fixing,
            seeds_cwe=int(cwe) if cwe is not None else None,
            language_scope=frozenset(table.get("language_scope", ["c_like"])),
            match_spec=MatchSpec(
                match_kind,
                regex=str(table.get("regex", "")),
                identifiers=tuple(table.get("identifiers", ())),
            ),
            transform=Transform(transform_kind, rules),
            enabled=bool(table.get("enabled", True)),
            description=str(table.get("description", "")),
        )
    except KeyError as exc:
        raise CatalogError(f"{where}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise CatalogError(f"{where}: {exc}") from None


def parse_catalog(text: str) -> list[MutationOperator]:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise CatalogError(f"catalog parse error: {exc}") from None
    ops = [_operator_from_table(t, i) for i, t in enumerate(doc.get("operator", []))]
    problems = validate_catalog(ops)
    if problems:
        raise CatalogError("; ".join(problems))
    return ops


def load_catalog(path: str | Path) -> list[MutationOperator]:
    return parse_catalog(Path(path).read_text(encoding="utf-8"))


def enabled(ops: Iterable[MutationOperator]) -> list[MutationOperator]:
    return [op for op in ops if op.enabled]


def by_id(ops: Iterable[MutationOperator]) -> dict[str, MutationOperator]:
    return {op.id: op for op in ops}
