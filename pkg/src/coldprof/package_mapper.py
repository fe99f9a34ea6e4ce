"""Mapping of frames and imports onto the library/package/module hierarchy.

A ModuleTree aggregates first-import times from many invocations into one
tree shaped by dotted module paths. Self times partition the total, so the
per-library and per-package sums never double count. Application-own and
standard-library modules are kept visible under the reserved root buckets
``(app)`` and ``(stdlib)`` but stay out of the library initialization total,
which is what the overhead shares are measured against.

Construction is single-writer; a finished tree is treated as immutable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .trace_model import Frame, ImportRecord

APP_BUCKET = "(app)"
STDLIB_BUCKET = "(stdlib)"
UNKNOWN_BUCKET = "(unknown)"

_RESERVED_BUCKETS = (APP_BUCKET, STDLIB_BUCKET, UNKNOWN_BUCKET)


class IntegrityError(Exception):
    """Traces of the same code version disagree about a module."""


class UnknownPathError(KeyError):
    """A dotted path or library is not present in the tree."""


class ModuleKind(str, Enum):
    LIBRARY_MODULE = "library"
    APPLICATION = "app"
    STDLIB = "stdlib"
    UNKNOWN = "unknown"


_KIND_BUCKET = {
    ModuleKind.APPLICATION: APP_BUCKET,
    ModuleKind.STDLIB: STDLIB_BUCKET,
    ModuleKind.UNKNOWN: UNKNOWN_BUCKET,
}


@dataclass(frozen=True)
class ModulePath:
    """Where a source location lives in the module hierarchy."""

    library: str
    segments: tuple[str, ...]
    kind: ModuleKind

    @property
    def dotted(self) -> str:
        return ".".join(self.segments)

    def matches(self, prefix: str) -> bool:
        """True if this path is under the given library or dotted prefix."""
        if self.library == prefix:
            return True
        dotted = self.dotted
        return dotted == prefix or dotted.startswith(prefix + ".")


@dataclass(frozen=True)
class RootConfig:
    """Source roots used to classify file paths.

    Longest matching prefix wins; an empty prefix acts as a catch-all for
    its kind. Paths under no root are UNKNOWN, never an error.
    """

    app_roots: tuple[str, ...] = ()
    library_roots: tuple[str, ...] = ()
    stdlib_roots: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, obj: dict) -> "RootConfig":
        roots = obj.get("roots", obj)
        return cls(
            app_roots=tuple(roots.get("app", ())),
            library_roots=tuple(roots.get("library", ())),
            stdlib_roots=tuple(roots.get("stdlib", ())),
        )


def _normalize(path: str) -> str:
    return path.replace("\\", "/")


def _prefix_len(path: str, root: str) -> int | None:
    """Length of the matching root prefix, or None if it does not match."""
    if root == "":
        return 0
    root = _normalize(root).rstrip("/")
    if path == root:
        return len(root)
    if path.startswith(root + "/"):
        return len(root) + 1
    return None


def _module_stem(filename: str) -> str:
    if filename.endswith(".py"):
        return filename[:-3]
    if filename.endswith(".pyc"):
        return filename[:-4]
    # native extensions carry an ABI tag after the first dot
    return filename.split(".", 1)[0]


def _dotted_segments(relative: str) -> tuple[str, ...]:
    parts = [p for p in relative.split("/") if p]
    if not parts:
        return ()
    stem = _module_stem(parts[-1])
    if stem == "__init__":
        parts = parts[:-1]
    else:
        parts[-1] = stem
    return tuple(p for p in parts if p)


def map_frame(frame: Frame, roots: RootConfig) -> ModulePath:
    """Classify a frame by longest-prefix match and derive its dotted path.

    Pure function: the same frame and roots always map the same way.
    """
    return map_file(frame.file_path, roots)


def map_file(file_path: str, roots: RootConfig) -> ModulePath:
    path = _normalize(file_path)
    best: tuple[int, ModuleKind] | None = None
    for kind, candidates in (
        (ModuleKind.APPLICATION, roots.app_roots),
        (ModuleKind.LIBRARY_MODULE, roots.library_roots),
        (ModuleKind.STDLIB, roots.stdlib_roots),
    ):
        for root in candidates:
            matched = _prefix_len(path, root)
            if matched is None:
                continue
            if best is None or matched > best[0]:
                best = (matched, kind)
    if best is None:
        return ModulePath(library=UNKNOWN_BUCKET, segments=(), kind=ModuleKind.UNKNOWN)
    matched, kind = best
    segments = _dotted_segments(path[matched:])
    if kind is ModuleKind.LIBRARY_MODULE:
        library = segments[0] if segments else UNKNOWN_BUCKET
        if not segments:
            kind = ModuleKind.UNKNOWN
    else:
        library = _KIND_BUCKET[kind]
    return ModulePath(library=library, segments=segments, kind=kind)


@dataclass
class TreeNode:
    """One module (or synthetic package) node of the ModuleTree."""

    name: str
    dotted: str
    kind: ModuleKind
    file_path: str = ""
    t_self_us: float = 0
    t_cumulative_us: float = 0
    observations: int = 0
    children: dict[str, "TreeNode"] = field(default_factory=dict)

    def subtree_self_us(self) -> float:
        """Self time of this node plus all descendants."""
        return self.t_self_us + sum(
            child.subtree_self_us() for child in self.children.values()
        )

    def walk(self) -> Iterable["TreeNode"]:
        yield self
        for name in sorted(self.children):
            yield from self.children[name].walk()


@dataclass
class ModuleTree:
    """Module hierarchy with per-node mean initialization times.

    Roots are library names plus the reserved (app)/(stdlib)/(unknown)
    buckets; only library roots contribute to total initialization.
    """

    roots: dict[str, TreeNode] = field(default_factory=dict)

    def library_names(self) -> list[str]:
        return sorted(
            name
            for name, node in self.roots.items()
            if node.kind is ModuleKind.LIBRARY_MODULE
        )

    def lookup(self, dotted_path: str) -> TreeNode:
        segments = dotted_path.split(".")
        node = self.roots.get(segments[0])
        for segment in segments[1:]:
            if node is None:
                break
            node = node.children.get(segment)
        if node is None:
            raise UnknownPathError(dotted_path)
        return node

    def ensure_node(self, bucket: str, segments: tuple[str, ...], kind: ModuleKind) -> TreeNode:
        """Find or create the node for bucket-rooted segments."""
        if bucket in _RESERVED_BUCKETS:
            root = self.roots.setdefault(
                bucket, TreeNode(name=bucket, dotted=bucket, kind=kind)
            )
            trail = segments
        else:
            root = self.roots.setdefault(
                bucket,
                TreeNode(name=bucket, dotted=bucket, kind=ModuleKind.LIBRARY_MODULE),
            )
            trail = segments[1:]
        node = root
        dotted = root.dotted
        for segment in trail:
            dotted = f"{dotted}.{segment}"
            node = node.children.setdefault(
                segment, TreeNode(name=segment, dotted=dotted, kind=kind)
            )
        return node

    def walk(self) -> Iterable[TreeNode]:
        for name in sorted(self.roots):
            yield from self.roots[name].walk()


def build_module_tree(imports: Iterable[ImportRecord], roots: RootConfig) -> ModuleTree:
    """Aggregate import records from validated traces of one app version.

    Each invocation records a module at most once, so per-module means over
    the records equal means over the invocations that imported the module.
    Missing intermediate packages become nodes with zero self time.
    """
    sums: dict[str, list] = {}
    for imp in imports:
        entry = sums.get(imp.module_name)
        if entry is None:
            sums[imp.module_name] = [imp.t_self_us, imp.t_cumulative_us, 1, imp.file_path]
        else:
            if entry[3] != imp.file_path:
                raise IntegrityError(
                    f"module {imp.module_name!r} recorded with conflicting files "
                    f"{entry[3]!r} and {imp.file_path!r}"
                )
            entry[0] += imp.t_self_us
            entry[1] += imp.t_cumulative_us
            entry[2] += 1

    tree = ModuleTree()
    for module_name in sorted(sums):
        self_sum, cum_sum, count, file_path = sums[module_name]
        mapped = map_file(file_path, roots)
        segments = tuple(module_name.split("."))
        if mapped.kind is ModuleKind.LIBRARY_MODULE:
            bucket = segments[0]
        else:
            bucket = _KIND_BUCKET[mapped.kind]
        node = tree.ensure_node(bucket, segments, mapped.kind)
        node.kind = mapped.kind
        node.file_path = file_path
        node.t_self_us = self_sum / count
        node.t_cumulative_us = cum_sum / count
        node.observations = count
    return tree


def package_time(tree: ModuleTree, dotted_path: str) -> float:
    """Total self time of the package: its node plus all descendants."""
    return tree.lookup(dotted_path).subtree_self_us()


def library_time(tree: ModuleTree, library: str) -> float:
    """Total self time of every module in the library."""
    node = tree.roots.get(library)
    if node is None:
        raise UnknownPathError(library)
    return node.subtree_self_us()


def total_initialization(tree: ModuleTree) -> float:
    """Accumulated initialization time over all library roots.

    (app)/(stdlib)/(unknown) buckets are reported separately and excluded.
    """
    return sum(library_time(tree, name) for name in tree.library_names())


def merge_trees(a: ModuleTree, b: ModuleTree) -> ModuleTree:
    """Union two trees built from disjoint invocation sets.

    Times combine as observation-weighted means, so merging per-invocation
    partial trees matches one flat build over all records.
    """
    merged = ModuleTree()

    def combine(dst: TreeNode, src: TreeNode) -> None:
        total = dst.observations + src.observations
        if total:
            dst.t_self_us = (
                dst.t_self_us * dst.observations + src.t_self_us * src.observations
            ) / total
            dst.t_cumulative_us = (
                dst.t_cumulative_us * dst.observations
                + src.t_cumulative_us * src.observations
            ) / total
        if src.observations and dst.observations:
            if dst.file_path != src.file_path:
                raise IntegrityError(
                    f"module {dst.dotted!r} recorded with conflicting files "
                    f"{dst.file_path!r} and {src.file_path!r}"
                )
        elif src.observations:
            dst.file_path = src.file_path
            dst.kind = src.kind
        dst.observations = total
        for name, child in src.children.items():
            mine = dst.children.get(name)
            if mine is None:
                dst.children[name] = _copy_node(child)
            else:
                combine(mine, child)

    for source in (a, b):
        for name, node in source.roots.items():
            mine = merged.roots.get(name)
            if mine is None:
                merged.roots[name] = _copy_node(node)
            else:
                combine(mine, node)
    return merged


def _copy_node(node: TreeNode) -> TreeNode:
    return TreeNode(
        name=node.name,
        dotted=node.dotted,
        kind=node.kind,
        file_path=node.file_path,
        t_self_us=node.t_self_us,
        t_cumulative_us=node.t_cumulative_us,
        observations=node.observations,
        children={name: _copy_node(c) for name, c in node.children.items()},
    )
