"""Calling Context Tree built from sampled call paths.

Each node is a function call identified by (file, function, call-site line);
a root-to-node walk is one distinct calling context. Nodes carry separate
INIT/EXEC sample counts for the stacks whose innermost frame landed there,
so usage metrics can exclude import-phase samples while the evidence paths
keep them. Per-trace trees can be built concurrently and merged; a finished
tree is immutable by convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .package_mapper import ModulePath, RootConfig, map_file
from .trace_model import CallPath, Frame, Phase

FrameKey = tuple[str, str, int]


class MergeError(Exception):
    """Trees from different app versions must not be mixed."""


def _key(frame: Frame) -> FrameKey:
    return (frame.file_path, frame.function_name, frame.line)


@dataclass
class CctNode:
    frame: Frame
    init_count: int = 0
    exec_count: int = 0
    module: ModulePath | None = None
    children: dict[FrameKey, "CctNode"] = field(default_factory=dict)

    @property
    def sample_count(self) -> int:
        """Samples whose innermost frame is this node."""
        return self.init_count + self.exec_count

    def subtree_count(self) -> int:
        return self.sample_count + sum(
            child.subtree_count() for child in self.children.values()
        )


_ROOT_FRAME = Frame(file_path="", line=1, function_name="(root)")


@dataclass
class CallingContextTree:
    """Merged, weighted tree of sampled call paths.

    total_samples == root.subtree_count() == init_samples + exec_samples
    holds after any sequence of insertions and merges.
    """

    app_id: str = ""
    manifest_hash: str = ""
    root: CctNode = field(default_factory=lambda: CctNode(frame=_ROOT_FRAME))
    total_samples: int = 0
    init_samples: int = 0
    exec_samples: int = 0

    def insert_path(self, path: CallPath, phase: Phase) -> None:
        """Walk/create nodes entry-first and count the innermost frame."""
        node = self.root
        for frame in path:
            key = _key(frame)
            child = node.children.get(key)
            if child is None:
                child = CctNode(frame=frame)
                node.children[key] = child
            node = child
        if phase is Phase.INIT:
            node.init_count += 1
            self.init_samples += 1
        else:
            node.exec_count += 1
            self.exec_samples += 1
        self.total_samples += 1

    def annotate_libraries(self, roots: RootConfig) -> None:
        """Label every node with its module path; unmapped frames are UNKNOWN."""
        for node, _ in self.walk():
            node.module = map_file(node.frame.file_path, roots)

    def walk(self) -> Iterable[tuple[CctNode, tuple[Frame, ...]]]:
        """Yield (node, root-to-node frames) in canonical child order."""

        def visit(node: CctNode, trail: tuple[Frame, ...]):
            for key in sorted(node.children):
                child = node.children[key]
                child_trail = trail + (child.frame,)
                yield child, child_trail
                yield from visit(child, child_trail)

        yield from visit(self.root, ())

    def iter_nodes(self) -> Iterable[CctNode]:
        """All nodes below the root, in no particular order (no sorting cost)."""
        stack = list(self.root.children.values())
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children.values())

    def samples_matching(self, prefix: str, include_init: bool = False) -> int:
        """Total innermost-sample count over nodes under the module prefix."""
        total = 0
        for node in self.iter_nodes():
            if node.module is not None and node.module.matches(prefix):
                total += node.sample_count if include_init else node.exec_count
        return total

    def samples_by_library(self, include_init: bool = False) -> dict[str, int]:
        """Innermost-sample counts keyed by root label, in one walk."""
        counts: dict[str, int] = {}
        for node in self.iter_nodes():
            if node.module is None:
                continue
            n = node.sample_count if include_init else node.exec_count
            if n:
                counts[node.module.library] = counts.get(node.module.library, 0) + n
        return counts

    def paths_to(self, dotted_prefix: str, top_k: int) -> list[tuple[CallPath, int]]:
        """Highest-count root-to-node paths into the given module prefix.

        Counts are the nodes' own sample counts (both phases), so the
        import-time chains the report surfaces stay visible. Returned
        counts are non-increasing; ties break on the path itself.
        """
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        hits: list[tuple[int, tuple[FrameKey, ...], CallPath]] = []
        for node, trail in self.walk():
            if node.sample_count == 0:
                continue
            if node.module is not None and node.module.matches(dotted_prefix):
                hits.append(
                    (-node.sample_count, tuple(_key(f) for f in trail), trail)
                )
        hits.sort(key=lambda h: (h[0], h[1]))
        return [(trail, -neg) for neg, _, trail in hits[:top_k]]

    def canonical_lines(self) -> list[str]:
        """Deterministic dump, one frame per line in wire-format style.

        Children are ordered lexicographically, so two trees are isomorphic
        with equal counts iff their dumps are equal.
        """
        lines = []
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            lines.append(
                json.dumps(
                    {
                        "d": depth,
                        "file": node.frame.file_path,
                        "line": node.frame.line,
                        "fn": node.frame.function_name,
                        "init": node.init_count,
                        "exec": node.exec_count,
                    },
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
            )
            for key in sorted(node.children, reverse=True):
                stack.append((node.children[key], depth + 1))
        return lines

    def absorb(self, other: "CallingContextTree") -> None:
        """In-place node-wise union; same result as merge(), without copying.

        Used when folding many per-invocation trees into one accumulator.
        """
        if (
            self.manifest_hash
            and other.manifest_hash
            and self.manifest_hash != other.manifest_hash
        ):
            raise MergeError(
                f"refusing to merge traces of different code versions: "
                f"{self.manifest_hash!r} != {other.manifest_hash!r}"
            )
        self.app_id = self.app_id or other.app_id
        self.manifest_hash = self.manifest_hash or other.manifest_hash
        self.total_samples += other.total_samples
        self.init_samples += other.init_samples
        self.exec_samples += other.exec_samples
        _absorb_nodes(self.root, other.root)

    def collapsed_stacks(self) -> list[str]:
        """Flame-graph style export: semicolon-joined frames, then a count.

        One line per sampled context (node with a nonzero count); the stack
        is the full root-to-node path.
        """
        lines = []
        for node, trail in self.walk():
            if node.sample_count == 0:
                continue
            stack = ";".join(
                f"{f.file_path}:{f.line}:{f.function_name}" for f in trail
            )
            lines.append(f"{stack} {node.sample_count}")
        return lines


def merge(a: CallingContextTree, b: CallingContextTree) -> CallingContextTree:
    """Node-wise union with added counts; independent of argument order."""
    if (
        a.manifest_hash
        and b.manifest_hash
        and a.manifest_hash != b.manifest_hash
    ):
        raise MergeError(
            f"refusing to merge traces of different code versions: "
            f"{a.manifest_hash!r} != {b.manifest_hash!r}"
        )
    out = CallingContextTree(
        app_id=a.app_id or b.app_id,
        manifest_hash=a.manifest_hash or b.manifest_hash,
        total_samples=a.total_samples + b.total_samples,
        init_samples=a.init_samples + b.init_samples,
        exec_samples=a.exec_samples + b.exec_samples,
    )
    out.root = _merge_nodes(a.root, b.root)
    return out


def _merge_nodes(x: CctNode, y: CctNode) -> CctNode:
    node = CctNode(
        frame=x.frame,
        init_count=x.init_count + y.init_count,
        exec_count=x.exec_count + y.exec_count,
        module=x.module or y.module,
    )
    for key, child in x.children.items():
        other = y.children.get(key)
        node.children[key] = _merge_nodes(child, other) if other else _copy(child)
    for key, child in y.children.items():
        if key not in x.children:
            node.children[key] = _copy(child)
    return node


def _copy(node: CctNode) -> CctNode:
    return CctNode(
        frame=node.frame,
        init_count=node.init_count,
        exec_count=node.exec_count,
        module=node.module,
        children={key: _copy(c) for key, c in node.children.items()},
    )


def _absorb_nodes(dst: CctNode, src: CctNode) -> None:
    dst.init_count += src.init_count
    dst.exec_count += src.exec_count
    dst.module = dst.module or src.module
    for key, child in src.children.items():
        mine = dst.children.get(key)
        if mine is None:
            dst.children[key] = _copy(child)
        else:
            _absorb_nodes(mine, child)
