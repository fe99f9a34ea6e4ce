"""Trace data model and the newline-delimited wire format.

One trace file holds every record of a single invocation: exactly one
``meta`` record, the first-import timings, and the sampled call stacks.
Records are UTF-8 JSON objects, one per line, discriminated by the ``"t"``
field. All types here are plain values; every function is pure, so the
module is safe to use from any thread.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Union

# Call paths deeper than this are truncated at the root side by collectors;
# the analyzer rejects anything deeper as malformed.
MAX_CALL_PATH_DEPTH = 128


class TraceError(Exception):
    """Base class for trace encoding/decoding/validation failures."""


class EncodeError(TraceError):
    """A record violates one of its type invariants."""


class ParseError(TraceError):
    """A wire line is not valid JSON. Carries the byte offset of the defect."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class SchemaError(TraceError):
    """A wire line is valid JSON but misses or mistypes a required field."""

    def __init__(self, field: str, detail: str = ""):
        msg = f"bad or missing field {field!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.field = field


class ValidationError(TraceError):
    """A record sequence is not a well-formed invocation trace."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"record {position}: {message}"
        super().__init__(message)
        self.position = position


class Phase(str, Enum):
    """Whether a sample fired before or after handler entry."""

    INIT = "INIT"
    EXEC = "EXEC"


@dataclass(frozen=True)
class Frame:
    """One stack frame: where the interpreter was when the sample fired."""

    file_path: str
    line: int
    function_name: str


# Entry point first, sampled (innermost) location last.
CallPath = tuple[Frame, ...]


@dataclass(frozen=True)
class ImportRecord:
    """First import of one module, with cumulative and self time.

    ``t_self_us`` is the cumulative time minus the cumulative times of the
    imports this module directly triggered, so self times partition the
    total initialization cost exactly once.
    """

    module_name: str
    file_path: str
    parent_module: str
    t_cumulative_us: int
    t_self_us: int
    order: int


@dataclass(frozen=True)
class SampleRecord:
    """One sampled call stack, timestamped relative to invocation start."""

    timestamp_us: int
    call_path: CallPath
    phase: Phase


@dataclass(frozen=True)
class InvocationMeta:
    """Per-invocation header: identity, sampling setup, and phase split."""

    invocation_id: str
    app_id: str
    code_manifest_hash: str
    sample_period_us: int
    init_end_us: int
    exec_end_us: int
    agent_version: str


TraceRecord = Union[InvocationMeta, ImportRecord, SampleRecord]


@dataclass(frozen=True)
class InvocationTrace:
    """A validated invocation: meta plus ordered imports and samples."""

    meta: InvocationMeta
    imports: tuple[ImportRecord, ...]
    samples: tuple[SampleRecord, ...]


def _check_frame(frame: Frame) -> str | None:
    if not frame.file_path:
        return "file_path non-empty"
    if not isinstance(frame.line, int) or frame.line < 1:
        return "line >= 1"
    return None


def _check_record(record: TraceRecord) -> str | None:
    """Return the violated invariant, or None if the record is valid."""
    if isinstance(record, InvocationMeta):
        if record.sample_period_us <= 0:
            return "sample_period_us > 0"
        if not (0 < record.init_end_us <= record.exec_end_us):
            return "0 < init_end_us <= exec_end_us"
        if not record.invocation_id:
            return "invocation_id non-empty"
        return None
    if isinstance(record, ImportRecord):
        if not record.module_name:
            return "module_name non-empty"
        if record.t_self_us < 0 or record.t_cumulative_us < 0:
            return "times non-negative"
        if record.t_self_us > record.t_cumulative_us:
            return "t_self_us <= t_cumulative_us"
        if record.order < 1:
            return "order >= 1"
        return None
    if isinstance(record, SampleRecord):
        if record.timestamp_us < 0:
            return "timestamp_us >= 0"
        if not 1 <= len(record.call_path) <= MAX_CALL_PATH_DEPTH:
            return f"1 <= call path length <= {MAX_CALL_PATH_DEPTH}"
        for frame in record.call_path:
            bad = _check_frame(frame)
            if bad:
                return bad
        return None
    return f"unknown record type {type(record).__name__}"


def encode_record(record: TraceRecord) -> str:
    """Encode one record as a single wire-format line (no newline).

    Field order is fixed, so encoding is deterministic.
    """
    bad = _check_record(record)
    if bad is not None:
        raise EncodeError(f"invariant violated: {bad}")
    if isinstance(record, InvocationMeta):
        obj: dict[str, Any] = {
            "t": "meta",
            "inv": record.invocation_id,
            "app": record.app_id,
            "manifest": record.code_manifest_hash,
            "period_us": record.sample_period_us,
            "init_end_us": record.init_end_us,
            "exec_end_us": record.exec_end_us,
            "agent": record.agent_version,
        }
    elif isinstance(record, ImportRecord):
        obj = {
            "t": "import",
            "mod": record.module_name,
            "file": record.file_path,
            "parent": record.parent_module,
            "cum_us": record.t_cumulative_us,
            "self_us": record.t_self_us,
            "ord": record.order,
        }
    else:
        obj = {
            "t": "sample",
            "ts_us": record.timestamp_us,
            "phase": record.phase.value,
            "stack": [
                {"file": f.file_path, "line": f.line, "fn": f.function_name}
                for f in record.call_path
            ],
        }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _require(obj: dict[str, Any], field: str, kind: type) -> Any:
    if field not in obj:
        raise SchemaError(field)
    value = obj[field]
    # bool is an int subclass; reject it for integer fields.
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise SchemaError(field, f"expected {kind.__name__}")
    return value


def decode_record(line: str) -> TraceRecord:
    """Decode one wire-format line. Unknown extra fields are ignored."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        offset = len(line[: exc.pos].encode("utf-8"))
        raise ParseError(f"malformed line: {exc.msg}", offset) from None
    if not isinstance(obj, dict):
        raise ParseError("line is not an object", 0)
    tag = obj.get("t")
    if tag == "meta":
        record: TraceRecord = InvocationMeta(
            invocation_id=_require(obj, "inv", str),
            app_id=_require(obj, "app", str),
            code_manifest_hash=_require(obj, "manifest", str),
            sample_period_us=_require(obj, "period_us", int),
            init_end_us=_require(obj, "init_end_us", int),
            exec_end_us=_require(obj, "exec_end_us", int),
            agent_version=_require(obj, "agent", str),
        )
    elif tag == "import":
        record = ImportRecord(
            module_name=_require(obj, "mod", str),
            file_path=_require(obj, "file", str),
            parent_module=_require(obj, "parent", str),
            t_cumulative_us=_require(obj, "cum_us", int),
            t_self_us=_require(obj, "self_us", int),
            order=_require(obj, "ord", int),
        )
    elif tag == "sample":
        raw_stack = _require(obj, "stack", list)
        if not raw_stack:
            raise SchemaError("stack", "must be non-empty")
        frames = []
        for entry in raw_stack:
            if not isinstance(entry, dict):
                raise SchemaError("stack", "frame is not an object")
            frames.append(
                Frame(
                    file_path=_require(entry, "file", str),
                    line=_require(entry, "line", int),
                    function_name=_require(entry, "fn", str),
                )
            )
        phase_raw = _require(obj, "phase", str)
        try:
            phase = Phase(phase_raw)
        except ValueError:
            raise SchemaError("phase", f"unknown value {phase_raw!r}") from None
        record = SampleRecord(
            timestamp_us=_require(obj, "ts_us", int),
            call_path=tuple(frames),
            phase=phase,
        )
    else:
        raise SchemaError("t", f"unknown record type {tag!r}")
    bad = _check_record(record)
    if bad is not None:
        raise SchemaError("t", f"invariant violated: {bad}")
    return record


def decode_lines(text: str) -> list[TraceRecord]:
    """Decode a whole trace file body, skipping blank lines.

    Decoding errors are re-raised with a ``lineno`` attribute set so callers
    can point at the offending line.
    """
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(decode_record(line))
        except TraceError as exc:
            exc.lineno = lineno
            raise
    return records


def validate_trace(records: Iterable[TraceRecord]) -> InvocationTrace:
    """Assemble records into a well-formed InvocationTrace.

    Checks every type invariant plus the sequence-level ones: exactly one
    meta record, unique module names and order numbers, the self/cumulative
    nesting identity over the import forest, sample timestamps within the
    invocation window, and phase consistency with the init/exec split.
    """
    meta: InvocationMeta | None = None
    imports: list[tuple[int, ImportRecord]] = []
    samples: list[tuple[int, SampleRecord]] = []
    for pos, record in enumerate(records):
        bad = _check_record(record)
        if bad is not None:
            raise ValidationError(f"invariant violated: {bad}", pos)
        if isinstance(record, InvocationMeta):
            if meta is not None:
                raise ValidationError("duplicate meta record", pos)
            meta = record
        elif isinstance(record, ImportRecord):
            imports.append((pos, record))
        else:
            samples.append((pos, record))
    if meta is None:
        raise ValidationError("missing meta record")

    imports.sort(key=lambda pr: pr[1].order)
    seen_modules: dict[str, int] = {}
    seen_orders: set[int] = set()
    children_cum: dict[str, int] = {}
    for pos, imp in imports:
        if imp.module_name in seen_modules:
            raise ValidationError(
                f"duplicate module import {imp.module_name!r}", pos
            )
        seen_modules[imp.module_name] = pos
        if imp.order in seen_orders:
            raise ValidationError(f"duplicate import order {imp.order}", pos)
        seen_orders.add(imp.order)
        children_cum[imp.parent_module] = (
            children_cum.get(imp.parent_module, 0) + imp.t_cumulative_us
        )
    for pos, imp in imports:
        nested = children_cum.get(imp.module_name, 0)
        expected_self = imp.t_cumulative_us - nested
        if imp.t_self_us != expected_self:
            raise ValidationError(
                f"nesting identity violated for {imp.module_name!r}: "
                f"self {imp.t_self_us} != cumulative {imp.t_cumulative_us} "
                f"- nested {nested}",
                pos,
            )

    samples.sort(key=lambda pr: pr[1].timestamp_us)
    for pos, sample in samples:
        if sample.timestamp_us > meta.exec_end_us:
            raise ValidationError(
                f"sample at {sample.timestamp_us}us after exec_end_us", pos
            )
        expected_phase = (
            Phase.INIT if sample.timestamp_us < meta.init_end_us else Phase.EXEC
        )
        if sample.phase is not expected_phase:
            raise ValidationError(
                f"sample at {sample.timestamp_us}us has phase "
                f"{sample.phase.value}, expected {expected_phase.value}",
                pos,
            )

    return InvocationTrace(
        meta=meta,
        imports=tuple(imp for _, imp in imports),
        samples=tuple(s for _, s in samples),
    )


def truncate_call_path(path: CallPath, max_depth: int = MAX_CALL_PATH_DEPTH) -> CallPath:
    """Drop root-side frames beyond max_depth, marking the cut."""
    if len(path) <= max_depth:
        return path
    marker = Frame(file_path="(truncated)", line=1, function_name="(truncated)")
    return (marker,) + path[-(max_depth - 1):]
