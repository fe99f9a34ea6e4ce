"""Text rendering of profile bundles, findings, and before/after diffs.

Output is deterministic: the same bundle and flags render byte-identical
text. Percentages are printed with two decimals (a bare ``0`` for an exact
zero, matching the summary-table convention).
"""

from __future__ import annotations

from dataclasses import dataclass

from .detector import Category, Finding
from .ingest import ProfileBundle
from .metrics import nearest_rank_percentile
from .package_mapper import total_initialization
from .trace_model import CallPath, InvocationMeta

_CATEGORY_TITLES = {
    Category.C1_UNUSED: "C1 unused import",
    Category.C2_RARELY_USED: "C2 rarely used, lazy-load candidate",
    Category.C_REVIEW: "REVIEW significant overhead",
}


def _pct(fraction: float) -> str:
    if fraction == 0:
        return "0"
    return f"{fraction * 100:.2f}"


def render_call_path(path: CallPath, indent: str = "  ") -> list[str]:
    """Arrow-chain rendering: one ``file:line`` per frame, indented inward."""
    lines = []
    for depth, frame in enumerate(path):
        location = f"{frame.file_path}:{frame.line}"
        if depth == 0:
            lines.append(f"{indent}{location}")
        else:
            lines.append(f"{indent}{'  ' * depth}-> {location}")
    return lines


def render_report(bundle: ProfileBundle, top_k: int = 3) -> str:
    """The summary table plus per-finding call-path panels."""
    out: list[str] = []
    out.append("coldprof summary")
    out.append("================")
    out.append(f"application:  {bundle.app_id}")
    out.append(f"manifest:     {bundle.manifest_hash}")
    out.append(f"invocations:  {bundle.invocation_count}")
    verdict = "profile-worthy" if bundle.gate.profile_worthy else "below threshold"
    out.append(
        f"gate:         init/exec ratio {bundle.gate.ratio:.2f} "
        f"(threshold {bundle.gate.threshold:.2f}) -> {verdict}"
    )
    total_init = total_initialization(bundle.module_tree)
    out.append(f"library init: {total_init / 1000:.1f} ms total")
    out.append("")

    finding_by_subject = {f.subject: f for f in bundle.findings}
    drill_children: dict[str, list[Finding]] = {}
    for finding in bundle.findings:
        if "." in finding.subject:
            drill_children.setdefault(finding.subject.split(".")[0], []).append(finding)

    out.append(f"  {'package':<28} {'util.%':>8} {'init.overhead%':>15}  file")
    for row in bundle.stats:
        children = drill_children.get(row.library, ())
        if children:
            marker = "-"
        elif row.library in finding_by_subject:
            marker = "+"
        else:
            marker = " "
        file_path = _library_file(bundle, row.library)
        out.append(
            f"{marker} {row.library:<28} {_pct(row.utilization):>8} "
            f"{_pct(row.init_overhead_share):>15}  {file_path}"
        )
        for child in sorted(children, key=lambda f: f.rank):
            child_file = _subject_file(bundle, child.subject)
            out.append(
                f"+   {child.subject:<26} {_pct(child.utilization):>8} "
                f"{_pct(child.overhead_share):>15}  {child_file}"
            )
    out.append("")

    if not bundle.findings:
        out.append("no inefficiencies above thresholds")
        return "\n".join(out) + "\n"

    out.append("findings")
    out.append("--------")
    for finding in bundle.findings:
        out.append(
            f"{finding.rank}. [{_CATEGORY_TITLES[finding.category]}] {finding.subject}"
        )
        out.append(
            f"   init overhead {_pct(finding.overhead_share)}%  "
            f"utilization {_pct(finding.utilization)}% "
            f"(95% CI {_pct(finding.ci_low)}-{_pct(finding.ci_high)}%)"
        )
        if finding.import_sites:
            sites = ", ".join(f"{f}:{line}" for f, line in finding.import_sites)
            out.append(f"   import sites: {sites}")
        for path, count in finding.evidence_paths[:top_k]:
            out.append(f"   call path ({count} samples):")
            out.extend(render_call_path(path, indent="     "))
        out.append("")
    return "\n".join(out).rstrip("\n") + "\n"


def _library_file(bundle: ProfileBundle, library: str) -> str:
    node = bundle.module_tree.roots.get(library)
    return node.file_path if node is not None else ""


def _subject_file(bundle: ProfileBundle, subject: str) -> str:
    try:
        return bundle.module_tree.lookup(subject).file_path
    except KeyError:
        return ""


@dataclass(frozen=True)
class PhaseDiff:
    phase: str
    mean_before_us: float
    mean_after_us: float
    p99_before_us: float
    p99_after_us: float

    @property
    def mean_speedup(self) -> float:
        return self.mean_before_us / self.mean_after_us

    @property
    def p99_speedup(self) -> float:
        return self.p99_before_us / self.p99_after_us


def diff_phases(
    before: list[InvocationMeta], after: list[InvocationMeta]
) -> list[PhaseDiff]:
    """Mean and 99th-percentile init/exec latency ratios before/after."""

    def init_times(metas):
        return [m.init_end_us for m in metas]

    def exec_times(metas):
        return [m.exec_end_us - m.init_end_us for m in metas]

    diffs = []
    for phase, extract in (("initialization", init_times), ("execution", exec_times)):
        before_values = extract(before)
        after_values = extract(after)
        diffs.append(
            PhaseDiff(
                phase=phase,
                mean_before_us=sum(before_values) / len(before_values),
                mean_after_us=sum(after_values) / len(after_values),
                p99_before_us=nearest_rank_percentile(before_values, 0.99),
                p99_after_us=nearest_rank_percentile(after_values, 0.99),
            )
        )
    return diffs


def render_diff(diffs: list[PhaseDiff]) -> str:
    out = [
        f"{'phase':<16} {'mean before':>12} {'mean after':>12} {'speedup':>9} "
        f"{'p99 before':>12} {'p99 after':>12} {'p99 speedup':>12}"
    ]
    for d in diffs:
        out.append(
            f"{d.phase:<16} {d.mean_before_us / 1000:>9.1f} ms {d.mean_after_us / 1000:>9.1f} ms "
            f"{d.mean_speedup:>8.2f}× {d.p99_before_us / 1000:>9.1f} ms "
            f"{d.p99_after_us / 1000:>9.1f} ms {d.p99_speedup:>11.2f}×"
        )
    return "\n".join(out) + "\n"


def diff_to_dict(diffs: list[PhaseDiff]) -> dict:
    return {
        d.phase: {
            "mean_before_us": d.mean_before_us,
            "mean_after_us": d.mean_after_us,
            "mean_speedup": d.mean_speedup,
            "p99_before_us": d.p99_before_us,
            "p99_after_us": d.p99_after_us,
            "p99_speedup": d.p99_speedup,
        }
        for d in diffs
    }
