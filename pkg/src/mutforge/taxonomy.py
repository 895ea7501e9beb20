"""Classification scheme for security vulnerabilities in ML libraries.

Five labelled dimensions are covered: vulnerability type, root cause,
symptom, fixing pattern and fixing effort. Every enum member has a canonical
lower_snake_case name which is what all file formats and reports use.

The two-level dimensions (type, root cause, fixing pattern) are modelled as a
category enum, a leaf enum and a ``*_TREE`` mapping that partitions the
leaves. ``others`` is a category without leaves.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import ClassVar, Mapping


class Library(str, Enum):
    TENSORFLOW = "tensorflow"
    PYTORCH = "pytorch"
    SCIKIT_LEARN = "scikit_learn"
    PANDAS = "pandas"
    NUMPY = "numpy"


class VulnType(str, Enum):
    NUMERIC = "numeric"
    MEMORY = "memory"
    BUFFER = "buffer"
    RESOURCE = "resource"
    CONCURRENCY = "concurrency"
    OTHERS = "others"


class VulnLeaf(str, Enum):
    INTEGER_OVERFLOW = "integer_overflow"
    INSUFFICIENT_PRECISION = "insufficient_precision"
    DIVISION_BY_ZERO = "division_by_zero"
    INTEGER_UNDERFLOW = "integer_underflow"
    MEMORY_LEAK = "memory_leak"
    NULL_POINTER_DEREFERENCE = "null_pointer_dereference"
    INFINITE_LOOP = "infinite_loop"
    DOUBLE_FREE = "double_free"
    USE_AFTER_FREE = "use_after_free"
    OUT_OF_BOUND_READ = "out_of_bound_read"
    STACK_OVERFLOW = "stack_overflow"
    HEAP_BUFFER_OVERFLOW = "heap_buffer_overflow"
    BUFFER_OVERFLOW = "buffer_overflow"
    OUT_OF_BOUND_WRITE = "out_of_bound_write"
    UNINITIALIZED_RESOURCE = "uninitialized_resource"
    IMPROPER_INPUT_VALIDATION = "improper_input_validation"
    FILE_DESCRIPTOR_LEAK = "file_descriptor_leak"
    RACE_CONDITION = "race_condition"
    DEADLOCK = "deadlock"


V = VulnLeaf
VULN_TREE: dict[VulnType, tuple[VulnLeaf, ...]] = {
    VulnType.NUMERIC: (
        V.INTEGER_OVERFLOW, V.INSUFFICIENT_PRECISION, V.DIVISION_BY_ZERO, V.INTEGER_UNDERFLOW,
    ),
    VulnType.MEMORY: (
        V.MEMORY_LEAK, V.NULL_POINTER_DEREFERENCE, V.INFINITE_LOOP, V.DOUBLE_FREE, V.USE_AFTER_FREE,
    ),
    VulnType.BUFFER: (
        V.OUT_OF_BOUND_READ, V.STACK_OVERFLOW, V.HEAP_BUFFER_OVERFLOW, V.BUFFER_OVERFLOW,
        V.OUT_OF_BOUND_WRITE,
    ),
    VulnType.RESOURCE: (
        V.UNINITIALIZED_RESOURCE, V.IMPROPER_INPUT_VALIDATION, V.FILE_DESCRIPTOR_LEAK,
    ),
    VulnType.CONCURRENCY: (V.RACE_CONDITION, V.DEADLOCK),
    VulnType.OTHERS: (),
}

CWE: dict[VulnLeaf, int] = {
    V.INTEGER_OVERFLOW: 190,
    V.INSUFFICIENT_PRECISION: 1339,
    V.DIVISION_BY_ZERO: 369,
    V.INTEGER_UNDERFLOW: 191,
    V.MEMORY_LEAK: 401,
    V.NULL_POINTER_DEREFERENCE: 476,
    V.INFINITE_LOOP: 835,
    V.DOUBLE_FREE: 415,
    V.USE_AFTER_FREE: 416,
    V.OUT_OF_BOUND_READ: 125,
    V.STACK_OVERFLOW: 121,
    V.HEAP_BUFFER_OVERFLOW: 122,
    V.BUFFER_OVERFLOW: 120,
    V.OUT_OF_BOUND_WRITE: 787,
    V.UNINITIALIZED_RESOURCE: 908,
    V.IMPROPER_INPUT_VALIDATION: 20,
    V.FILE_DESCRIPTOR_LEAK: 403,
    V.RACE_CONDITION: 362,
    V.DEADLOCK: 833,
}
del V


class RootCauseType(str, Enum):
    DATA_TYPE_ERRORS = "data_type_errors"
    MEMORY_ERRORS = "memory_errors"
    API_ERRORS = "api_errors"
    BUSINESS_LOGIC_ERRORS = "business_logic_errors"
    CONCURRENCY_ERRORS = "concurrency_errors"
    OTHERS = "others"


class RootCauseLeaf(str, Enum):
    NUMERICAL_PRECISION_ERROR = "numerical_precision_error"
    TENSOR_PROPERTY_ISSUE = "tensor_property_issue"
    USING_IMPROPER_DATA_TYPE = "using_improper_data_type"
    INCORRECT_TYPE_CONVERSION = "incorrect_type_conversion"
    INVALID_MEMORY_ACCESS = "invalid_memory_access"
    IMPROPER_MEMORY_MANAGEMENT = "improper_memory_management"
    STACK_OR_BUFFER_SIZE_ISSUE = "stack_or_buffer_size_issue"
    OUT_OF_BOUND_READ = "out_of_bound_read"
    USING_WRONG_API = "using_wrong_api"
    API_MISUSE = "api_misuse"
    MALICIOUS_PARAMETERS = "malicious_parameters"
    API_VERSION_ISSUE = "api_version_issue"
    IMPROPER_EXCEPTION_HANDLING = "improper_exception_handling"
    WRONG_ORDER_OF_EXECUTION = "wrong_order_of_execution"
    IMPROPER_STRING_MANIPULATION = "improper_string_manipulation"
    MISSING_LOCKING_STATEMENT = "missing_locking_statement"
    IMPROPER_RESOURCE_LOCKING = "improper_resource_locking"
    IMPROPER_RESOURCE_RELEASING = "improper_resource_releasing"


R = RootCauseLeaf
ROOT_CAUSE_TREE: dict[RootCauseType, tuple[RootCauseLeaf, ...]] = {
    RootCauseType.DATA_TYPE_ERRORS: (
        R.NUMERICAL_PRECISION_ERROR, R.TENSOR_PROPERTY_ISSUE, R.USING_IMPROPER_DATA_TYPE,
        R.INCORRECT_TYPE_CONVERSION,
    ),
    RootCauseType.MEMORY_ERRORS: (
        R.INVALID_MEMORY_ACCESS, R.IMPROPER_MEMORY_MANAGEMENT, R.STACK_OR_BUFFER_SIZE_ISSUE,
        R.OUT_OF_BOUND_READ,
    ),
    RootCauseType.API_ERRORS: (
        R.USING_WRONG_API, R.API_MISUSE, R.MALICIOUS_PARAMETERS, R.API_VERSION_ISSUE,
    ),
    RootCauseType.BUSINESS_LOGIC_ERRORS: (
        R.IMPROPER_EXCEPTION_HANDLING, R.WRONG_ORDER_OF_EXECUTION, R.IMPROPER_STRING_MANIPULATION,
    ),
    RootCauseType.CONCURRENCY_ERRORS: (
        R.MISSING_LOCKING_STATEMENT, R.IMPROPER_RESOURCE_LOCKING, R.IMPROPER_RESOURCE_RELEASING,
    ),
    RootCauseType.OTHERS: (),
}
del R


class Symptom(str, Enum):
    SEGMENTATION_FAULT = "segmentation_fault"
    CRASH = "crash"
    UNEXPECTED_BEHAVIOR = "unexpected_behavior"
    RESOURCE_CONSUMPTION = "resource_consumption"
    HANG = "hang"
    OTHERS = "others"


class FixingType(str, Enum):
    ADD_CHECKERS = "add_checkers"
    MODIFY_BUSINESS_LOGIC = "modify_business_logic"
    RESOLVE_DATA_TYPE_ERRORS = "resolve_data_type_errors"
    RESOLVE_MEMORY_ERRORS = "resolve_memory_errors"
    RESOLVE_API_ERRORS = "resolve_api_errors"
    RESOLVE_CONCURRENCY_ERRORS = "resolve_concurrency_errors"
    OTHERS = "others"


class FixingLeaf(str, Enum):
    ADD_CHECKER_FOR_TENSORS_PROPERTY = "add_checker_for_tensors_property"
    ADD_CHECKER_FOR_OVERFLOW = "add_checker_for_overflow"
    ADD_CHECKER_FOR_NULL_POINTER_DEREFERENCE = "add_checker_for_null_pointer_dereference"
    ADD_CHECKER_FOR_RECURSION = "add_checker_for_recursion"
    IMPROVED_EXCEPTION_HANDLING = "improved_exception_handling"
    MODIFY_FUNCTION_RETURN_VALUE = "modify_function_return_value"
    MODIFY_ORDER_OF_EXECUTION = "modify_order_of_execution"
    AVOID_STACK_OVERFLOW_ON_DEEP_GRAPHS = "avoid_stack_overflow_on_deep_graphs"
    MODIFY_INDEX_CALCULATION = "modify_index_calculation"
    CLOSE_FILE_HANDLER = "close_file_handler"
    MODIFY_DATA_TYPE = "modify_data_type"
    INCREASE_INTEGER_TYPE_RANGE = "increase_integer_type_range"
    HANDLE_NUMERICAL_PRECISION = "handle_numerical_precision"
    CONVERT_INTEGER_SIGN = "convert_integer_sign"
    MANAGE_MEMORY_RELEASE = "manage_memory_release"
    RESOURCE_INITIALIZATION = "resource_initialization"
    USING_PROPER_API = "using_proper_api"
    UPDATE_API_USAGE = "update_api_usage"
    UPDATE_API_VERSION = "update_api_version"
    ADD_LOCKING_MECHANISM = "add_locking_mechanism"
    MODIFY_LOCKING_MECHANISM = "modify_locking_mechanism"
    REMOVE_LOCKING_MECHANISM = "remove_locking_mechanism"


F = FixingLeaf
FIXING_TREE: dict[FixingType, tuple[FixingLeaf, ...]] = {
    FixingType.ADD_CHECKERS: (
        F.ADD_CHECKER_FOR_TENSORS_PROPERTY, F.ADD_CHECKER_FOR_OVERFLOW,
        F.ADD_CHECKER_FOR_NULL_POINTER_DEREFERENCE, F.ADD_CHECKER_FOR_RECURSION,
    ),
    FixingType.MODIFY_BUSINESS_LOGIC: (
        F.IMPROVED_EXCEPTION_HANDLING, F.MODIFY_FUNCTION_RETURN_VALUE, F.MODIFY_ORDER_OF_EXECUTION,
        F.AVOID_STACK_OVERFLOW_ON_DEEP_GRAPHS, F.MODIFY_INDEX_CALCULATION, F.CLOSE_FILE_HANDLER,
    ),
    FixingType.RESOLVE_DATA_TYPE_ERRORS: (
        F.MODIFY_DATA_TYPE, F.INCREASE_INTEGER_TYPE_RANGE, F.HANDLE_NUMERICAL_PRECISION,
        F.CONVERT_INTEGER_SIGN,
    ),
    FixingType.RESOLVE_MEMORY_ERRORS: (F.MANAGE_MEMORY_RELEASE, F.RESOURCE_INITIALIZATION),
    FixingType.RESOLVE_API_ERRORS: (F.USING_PROPER_API, F.UPDATE_API_USAGE, F.UPDATE_API_VERSION),
    FixingType.RESOLVE_CONCURRENCY_ERRORS: (
        F.ADD_LOCKING_MECHANISM, F.MODIFY_LOCKING_MECHANISM, F.REMOVE_LOCKING_MECHANISM,
    ),
    FixingType.OTHERS: (),
}
del F


class Effort(str, Enum):
    MICRO = "micro"
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


# Inclusive upper bound of lines changed for each bucket; Large is open-ended.
EFFORT_UPPER_BOUNDS: tuple[tuple[Effort, int], ...] = (
    (Effort.MICRO, 10),
    (Effort.SMALL, 50),
    (Effort.MEDIUM, 200),
)


def _parent_index(tree: Mapping[Enum, tuple[Enum, ...]]) -> dict[Enum, Enum]:
    parents: dict[Enum, Enum] = {}
    for category, leaves in tree.items():
        for leaf in leaves:
            if leaf in parents:
                raise AssertionError(f"{leaf} listed under {parents[leaf]} and {category}")
            parents[leaf] = category
    return parents


@dataclass(frozen=True)
class _TwoLevel:
    """A (category, subcategory) label; ``subcategory`` is None only for leafless categories."""

    category: Enum
    subcategory: Enum | None = None

    category_enum: ClassVar[type[Enum]]
    leaf_enum: ClassVar[type[Enum]]
    tree: ClassVar[Mapping[Enum, tuple[Enum, ...]]]

    def violations(self) -> list[str]:
        problems = []
        if not isinstance(self.category, self.category_enum):
            problems.append(f"unknown category {self.category!r}")
            return problems
        leaves = self.tree[self.category]
        if self.subcategory is None:
            if leaves:
                problems.append(f"missing subcategory for category {self.category.value}")
        elif not isinstance(self.subcategory, self.leaf_enum):
            problems.append(f"unknown subcategory {self.subcategory!r}")
        elif self.subcategory not in leaves:
            problems.append(
                f"subcategory not in category: {self.subcategory.value} is not under "
                f"{self.category.value}"
            )
        return problems

    def __str__(self) -> str:
        if self.subcategory is None:
            return self.category.value
        return f"{self.category.value}/{self.subcategory.value}"

    @classmethod
    def parse(cls, category: str, subcategory: str = ""):
        """Build a label from canonical names; raises ValueError on unknown names."""
        try:
            cat = cls.category_enum(category.strip())
        except ValueError:
            raise ValueError(f"unknown {cls.__name__} category {category!r}") from None
        sub = subcategory.strip()
        if not sub:
            return cls(cat, None)
        try:
            return cls(cat, cls.leaf_enum(sub))
        except ValueError:
            raise ValueError(f"unknown {cls.__name__} subcategory {sub!r}") from None

    @classmethod
    def of(cls, leaf: Enum):
        """The label whose category is the unique parent of ``leaf``."""
        return cls(cls._parents()[leaf], leaf)

    @classmethod
    def _parents(cls) -> dict[Enum, Enum]:
        cache = cls.__dict__.get("_parent_cache")
        if cache is None:
            cache = _parent_index(cls.tree)
            cls._parent_cache = cache
        return cache


@dataclass(frozen=True)
class VulnCategory(_TwoLevel):
    category: VulnType
    subcategory: VulnLeaf | None = None

    category_enum = VulnType
    leaf_enum = VulnLeaf
    tree = VULN_TREE

    @property
    def cwe(self) -> int | None:
        return cwe_of(self)


@dataclass(frozen=True)
class RootCause(_TwoLevel):
    category: RootCauseType
    subcategory: RootCauseLeaf | None = None

    category_enum = RootCauseType
    leaf_enum = RootCauseLeaf
    tree = ROOT_CAUSE_TREE


@dataclass(frozen=True)
class FixingPattern(_TwoLevel):
    category: FixingType
    subcategory: FixingLeaf | None = None

    category_enum = FixingType
    leaf_enum = FixingLeaf
    tree = FIXING_TREE


@dataclass(frozen=True)
class EffortBucket:
    bucket: Effort
    lines_changed: int


def classify_effort(added: int, deleted: int) -> EffortBucket:
    """Bucket a fix by its total number of added plus deleted lines."""
    if added < 0 or deleted < 0:
        raise ValueError(f"line counts must be non-negative, got added={added} deleted={deleted}")
    total = added + deleted
    for bucket, upper in EFFORT_UPPER_BOUNDS:
        if total <= upper:
            return EffortBucket(bucket, total)
    return EffortBucket(Effort.LARGE, total)


def cwe_of(vc: VulnCategory) -> int | None:
    if vc.subcategory is None:
        return None
    return CWE.get(vc.subcategory)


def validate_label(record) -> list[str]:
    """Return every labelling problem found on ``record``; an empty list means ok.

    Works on anything shaped like a ``VulnRecord`` (duck-typed so this module
    does not depend on the dataset layer).
    """
    problems: list[str] = []
    if not isinstance(record.library, Library):
        problems.append(f"unknown library {record.library!r}")
    for label in (record.vuln, record.root_cause, record.fixing):
        problems.extend(f"{type(label).__name__}: {p}" for p in label.violations())
    if not isinstance(record.symptom, Symptom):
        problems.append(f"unknown symptom {record.symptom!r}")
    if record.added_lines < 0 or record.deleted_lines < 0:
        problems.append("negative effort: line counts must be >= 0")
    if not record.commit_ids:
        problems.append("no commit ids")
    return problems


def all_leaves(tree: Mapping[Enum, tuple[Enum, ...]]) -> list[Enum]:
    return [leaf for leaves in tree.values() for leaf in leaves]
