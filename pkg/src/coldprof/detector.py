"""Detection of inefficient library usage over the tree and CCT.

Three categories are assigned automatically:

* C1_UNUSED       — significant initialization share, zero usage samples.
* C2_RARELY_USED  — significant share and the CI upper bound of the
                    utilization stays below the rare-usage cutoff, i.e. a
                    conservative "lazy-load candidate" call.
* C_REVIEW        — significant share with real usage; surfaced with its
                    calling context for human judgment (covers misuse and
                    avoidable-usage cases that no threshold can decide).

Detection drills from each library into the packages that independently
clear the overhead floor, so a finding points at the most actionable node.
Everything here is pure: same inputs, same findings.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .cct import CallingContextTree
from .metrics import DEFAULT_Z, InsufficientSamplesError, confidence_interval
from .package_mapper import ModuleTree, TreeNode, total_initialization
from .trace_model import CallPath


class Category(str, Enum):
    C1_UNUSED = "C1"
    C2_RARELY_USED = "C2"
    C_REVIEW = "C_REVIEW"


_SEVERITY = {Category.C1_UNUSED: 0, Category.C2_RARELY_USED: 1, Category.C_REVIEW: 2}


@dataclass(frozen=True)
class DetectorConfig:
    overhead_floor: float = 0.05
    rare_utilization: float = 0.01
    min_samples: int = 1000
    top_k_paths: int = 3
    z: float = DEFAULT_Z

    def __post_init__(self):
        if not 0 < self.overhead_floor < 1:
            raise ValueError("overhead_floor must be in (0, 1)")
        if not 0 < self.rare_utilization < 1:
            raise ValueError("rare_utilization must be in (0, 1)")


@dataclass(frozen=True)
class Finding:
    category: Category
    subject: str
    overhead_share: float
    utilization: float
    ci_low: float
    ci_high: float
    sample_count: int
    evidence_paths: tuple[tuple[CallPath, int], ...] = ()
    import_sites: tuple[tuple[str, int], ...] = ()
    rank: int = 0


def detect(
    stats,
    tree: ModuleTree,
    cct: CallingContextTree,
    cfg: DetectorConfig = DetectorConfig(),
) -> list[Finding]:
    """Run drill-down detection over every observed library and rank.

    ``stats`` supplies the library universe (it includes libraries seen only
    in samples); classification is recomputed per subtree during drill-down.
    """
    if cct.exec_samples < cfg.min_samples:
        raise InsufficientSamplesError(
            f"need at least min_samples={cfg.min_samples} usage samples, "
            f"have {cct.exec_samples}"
        )
    findings: list[Finding] = []
    for row in stats:
        if row.library in tree.roots:
            findings.extend(drill_down(tree, cct, row.library, cfg))
    return rank(findings)


def rank(findings: list[Finding]) -> list[Finding]:
    """Order by share desc, then severity, then subject; assign ranks 1..n."""
    ordered = sorted(
        findings,
        key=lambda f: (-f.overhead_share, _SEVERITY[f.category], f.subject),
    )
    return [replace(f, rank=i) for i, f in enumerate(ordered, start=1)]


def drill_down(
    tree: ModuleTree,
    cct: CallingContextTree,
    library: str,
    cfg: DetectorConfig = DetectorConfig(),
) -> list[Finding]:
    """Findings for one library, targeting the deepest significant subtrees.

    A parent whose share is fully explained by reported children is
    suppressed; one that stays significant on its own is still reported,
    carrying the calling context.
    """
    root = tree.roots.get(library)
    if root is None:
        raise KeyError(library)
    total = total_initialization(tree)
    if total <= 0:
        return []

    findings: list[Finding] = []

    def share(node: TreeNode) -> float:
        return node.subtree_self_us() / total

    def visit(node: TreeNode) -> None:
        cleared = [
            node.children[name]
            for name in sorted(node.children)
            if share(node.children[name]) >= cfg.overhead_floor
        ]
        for child in cleared:
            visit(child)
        if not cleared:
            findings.append(_classify(node, share(node), cct, cfg))
            return
        residual = share(node) - sum(share(child) for child in cleared)
        if residual >= cfg.overhead_floor:
            findings.append(_classify(node, share(node), cct, cfg))

    if share(root) >= cfg.overhead_floor:
        visit(root)
    return findings


def _classify(
    node: TreeNode, share: float, cct: CallingContextTree, cfg: DetectorConfig
) -> Finding:
    count = cct.samples_matching(node.dotted)
    denom = cct.exec_samples
    util = count / denom
    ci_low, ci_high = confidence_interval(util, denom, cfg.z)
    if count == 0:
        category = Category.C1_UNUSED
    elif ci_high < cfg.rare_utilization:
        category = Category.C2_RARELY_USED
    else:
        category = Category.C_REVIEW
    evidence = tuple(cct.paths_to(node.dotted, cfg.top_k_paths))
    return Finding(
        category=category,
        subject=node.dotted,
        overhead_share=share,
        utilization=util,
        ci_low=ci_low,
        ci_high=ci_high,
        sample_count=count,
        evidence_paths=evidence,
        import_sites=_import_sites(node.dotted, cct),
    )


def _import_sites(subject: str, cct: CallingContextTree) -> tuple[tuple[str, int], ...]:
    """(file, line) of the frames from which the subject's import started.

    Derived from import-phase samples that landed inside the subject: the
    site is the innermost frame before the sampled stack crossed into the
    subject's own modules. Ordered by sample weight, heaviest first.
    """
    weights: dict[tuple[str, int], int] = {}
    for node, trail in cct.walk():
        if node.init_count == 0:
            continue
        if node.module is None or not node.module.matches(subject):
            continue
        boundary = None
        walk_node = cct.root
        for frame in trail:
            walk_node = walk_node.children[
                (frame.file_path, frame.function_name, frame.line)
            ]
            if walk_node.module is not None and walk_node.module.matches(subject):
                break
            boundary = frame
        if boundary is not None:
            site = (boundary.file_path, boundary.line)
            weights[site] = weights.get(site, 0) + node.init_count
    ordered = sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(site for site, _ in ordered)
