"""Post-mortem ingestion: trace directory -> ProfileBundle.

Each ``*.trace`` file in the directory is parsed, validated, and folded into
one module tree and one annotated calling context tree. Traces with
mismatched code manifests are refused; per-file defects either abort
(default) or are skipped with a warning under lenient mode.

The bundle has a stable JSON form that reconstructs to an equal bundle, so
machine output and the in-memory pipeline can be cross-checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import package_mapper as pm
from .cct import CallingContextTree, CctNode
from .detector import Category, Finding
from .metrics import (
    DEFAULT_RATIO_THRESHOLD,
    GateResult,
    LibraryStats,
    init_ratio,
    library_stats,
)
from .package_mapper import ModuleKind, ModulePath, ModuleTree, RootConfig, TreeNode
from .trace_model import (
    Frame,
    InvocationTrace,
    TraceError,
    decode_lines,
    validate_trace,
)


class IngestError(Exception):
    """The trace directory cannot be turned into a profile."""


@dataclass
class ProfileBundle:
    """Everything the reports are rendered from."""

    app_id: str
    manifest_hash: str
    invocation_count: int
    module_tree: ModuleTree
    cct: CallingContextTree
    stats: list[LibraryStats]
    gate: GateResult
    findings: list[Finding] = field(default_factory=list)
    metas: list = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def load_traces(
    directory: str | Path, lenient: bool = False
) -> tuple[list[InvocationTrace], list[str]]:
    """Parse and validate every *.trace file; returns (traces, warnings)."""
    directory = Path(directory)
    files = sorted(directory.glob("*.trace"))
    if not files:
        raise IngestError(f"no trace files in {directory}")
    traces: list[InvocationTrace] = []
    warnings: list[str] = []
    for path in files:
        try:
            records = decode_lines(path.read_text(encoding="utf-8"))
            traces.append(validate_trace(records))
        except TraceError as exc:
            lineno = getattr(exc, "lineno", None)
            where = f"{path.name}:{lineno}" if lineno else path.name
            message = f"{where}: {exc}"
            if lenient:
                warnings.append(message)
                continue
            raise IngestError(message) from exc
    if not traces:
        raise IngestError(f"no valid trace files in {directory}")
    return traces, warnings


def ingest(
    directory: str | Path,
    roots: RootConfig,
    threshold: float = DEFAULT_RATIO_THRESHOLD,
    lenient: bool = False,
) -> ProfileBundle:
    """Build the bundle (without findings) from one trace directory."""
    traces, warnings = load_traces(directory, lenient=lenient)

    manifests = {t.meta.code_manifest_hash for t in traces}
    if len(manifests) > 1:
        raise IngestError(
            "mixed code manifests in one trace directory: "
            + ", ".join(sorted(manifests))
        )
    apps = {t.meta.app_id for t in traces}
    if len(apps) > 1:
        raise IngestError("mixed app ids in one trace directory: " + ", ".join(sorted(apps)))

    all_imports = [imp for t in traces for imp in t.imports]
    tree = pm.build_module_tree(all_imports, roots)

    merged = CallingContextTree(
        app_id=traces[0].meta.app_id, manifest_hash=traces[0].meta.code_manifest_hash
    )
    for trace in traces:
        per_trace = CallingContextTree(
            app_id=trace.meta.app_id, manifest_hash=trace.meta.code_manifest_hash
        )
        for sample in trace.samples:
            per_trace.insert_path(sample.call_path, sample.phase)
        merged.absorb(per_trace)
    merged.annotate_libraries(roots)

    stats = library_stats(tree, merged) if merged.exec_samples > 0 else []
    metas = [t.meta for t in traces]
    gate = init_ratio(metas, tree, threshold)
    return ProfileBundle(
        app_id=traces[0].meta.app_id,
        manifest_hash=traces[0].meta.code_manifest_hash,
        invocation_count=len(traces),
        module_tree=tree,
        cct=merged,
        stats=stats,
        gate=gate,
        metas=metas,
        warnings=warnings,
    )


def load_root_config(path: str | Path) -> tuple[RootConfig, dict]:
    """Read the analyzer config file: roots plus optional threshold overrides."""
    import json

    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise IngestError(f"config {path}: expected a JSON object")
    thresholds = obj.get("thresholds", {})
    return RootConfig.from_dict(obj), thresholds


# --- bundle <-> JSON ---------------------------------------------------

def bundle_to_dict(bundle: ProfileBundle) -> dict:
    return {
        "app_id": bundle.app_id,
        "manifest_hash": bundle.manifest_hash,
        "invocation_count": bundle.invocation_count,
        "gate": {
            "ratio": bundle.gate.ratio,
            "threshold": bundle.gate.threshold,
            "profile_worthy": bundle.gate.profile_worthy,
        },
        "total_initialization_us": pm.total_initialization(bundle.module_tree),
        "stats": [
            {
                "library": s.library,
                "init_time_us": s.init_time_us,
                "init_overhead_share": s.init_overhead_share,
                "sample_count": s.sample_count,
                "utilization": s.utilization,
                "ci_low": s.ci_low,
                "ci_high": s.ci_high,
                "invocations_observed": s.invocations_observed,
            }
            for s in bundle.stats
        ],
        "findings": [_finding_to_dict(f) for f in bundle.findings],
        "module_tree": {
            name: _tree_node_to_dict(bundle.module_tree.roots[name])
            for name in sorted(bundle.module_tree.roots)
        },
        "cct": _cct_node_to_dict(bundle.cct.root),
        "cct_totals": {
            "total": bundle.cct.total_samples,
            "init": bundle.cct.init_samples,
            "exec": bundle.cct.exec_samples,
        },
        "warnings": list(bundle.warnings),
    }


def bundle_from_dict(obj: dict, threshold: float | None = None) -> ProfileBundle:
    tree = ModuleTree(
        roots={
            name: _tree_node_from_dict(name, name, node)
            for name, node in obj["module_tree"].items()
        }
    )
    cct = CallingContextTree(
        app_id=obj["app_id"],
        manifest_hash=obj["manifest_hash"],
        root=_cct_node_from_dict(obj["cct"]),
        total_samples=obj["cct_totals"]["total"],
        init_samples=obj["cct_totals"]["init"],
        exec_samples=obj["cct_totals"]["exec"],
    )
    stats = [
        LibraryStats(
            library=s["library"],
            init_time_us=s["init_time_us"],
            init_overhead_share=s["init_overhead_share"],
            sample_count=s["sample_count"],
            utilization=s["utilization"],
            ci_low=s["ci_low"],
            ci_high=s["ci_high"],
            invocations_observed=s["invocations_observed"],
        )
        for s in obj["stats"]
    ]
    gate = GateResult(ratio=obj["gate"]["ratio"], threshold=obj["gate"]["threshold"])
    return ProfileBundle(
        app_id=obj["app_id"],
        manifest_hash=obj["manifest_hash"],
        invocation_count=obj["invocation_count"],
        module_tree=tree,
        cct=cct,
        stats=stats,
        gate=gate,
        findings=[_finding_from_dict(f) for f in obj["findings"]],
        warnings=list(obj.get("warnings", ())),
    )


def _frame_to_dict(frame: Frame) -> dict:
    return {"file": frame.file_path, "line": frame.line, "fn": frame.function_name}


def _frame_from_dict(obj: dict) -> Frame:
    return Frame(file_path=obj["file"], line=obj["line"], function_name=obj["fn"])


def _finding_to_dict(finding: Finding) -> dict:
    return {
        "category": finding.category.value,
        "subject": finding.subject,
        "overhead_share": finding.overhead_share,
        "utilization": finding.utilization,
        "ci_low": finding.ci_low,
        "ci_high": finding.ci_high,
        "sample_count": finding.sample_count,
        "rank": finding.rank,
        "evidence_paths": [
            {"stack": [_frame_to_dict(f) for f in path], "count": count}
            for path, count in finding.evidence_paths
        ],
        "import_sites": [
            {"file": file, "line": line} for file, line in finding.import_sites
        ],
    }


def _finding_from_dict(obj: dict) -> Finding:
    return Finding(
        category=Category(obj["category"]),
        subject=obj["subject"],
        overhead_share=obj["overhead_share"],
        utilization=obj["utilization"],
        ci_low=obj["ci_low"],
        ci_high=obj["ci_high"],
        sample_count=obj["sample_count"],
        rank=obj["rank"],
        evidence_paths=tuple(
            (
                tuple(_frame_from_dict(f) for f in entry["stack"]),
                entry["count"],
            )
            for entry in obj["evidence_paths"]
        ),
        import_sites=tuple(
            (entry["file"], entry["line"]) for entry in obj["import_sites"]
        ),
    )


def _tree_node_to_dict(node: TreeNode) -> dict:
    return {
        "kind": node.kind.value,
        "file": node.file_path,
        "self_us": node.t_self_us,
        "cum_us": node.t_cumulative_us,
        "observations": node.observations,
        "children": {
            name: _tree_node_to_dict(node.children[name])
            for name in sorted(node.children)
        },
    }


def _tree_node_from_dict(name: str, dotted: str, obj: dict) -> TreeNode:
    return TreeNode(
        name=name,
        dotted=dotted,
        kind=ModuleKind(obj["kind"]),
        file_path=obj["file"],
        t_self_us=obj["self_us"],
        t_cumulative_us=obj["cum_us"],
        observations=obj["observations"],
        children={
            child: _tree_node_from_dict(child, f"{dotted}.{child}", child_obj)
            for child, child_obj in obj["children"].items()
        },
    )


def _cct_node_to_dict(node: CctNode) -> dict:
    out = {
        "file": node.frame.file_path,
        "line": node.frame.line,
        "fn": node.frame.function_name,
        "init": node.init_count,
        "exec": node.exec_count,
        "children": [
            _cct_node_to_dict(node.children[key]) for key in sorted(node.children)
        ],
    }
    if node.module is not None:
        out["module"] = {
            "library": node.module.library,
            "segments": list(node.module.segments),
            "kind": node.module.kind.value,
        }
    return out


def _cct_node_from_dict(obj: dict) -> CctNode:
    module = None
    if "module" in obj:
        module = ModulePath(
            library=obj["module"]["library"],
            segments=tuple(obj["module"]["segments"]),
            kind=ModuleKind(obj["module"]["kind"]),
        )
    node = CctNode(
        frame=Frame(
            file_path=obj["file"], line=obj["line"], function_name=obj["fn"]
        ),
        init_count=obj["init"],
        exec_count=obj["exec"],
        module=module,
    )
    for child_obj in obj["children"]:
        child = _cct_node_from_dict(child_obj)
        node.children[
            (child.frame.file_path, child.frame.function_name, child.frame.line)
        ] = child
    return node
