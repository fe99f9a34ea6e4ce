"""Screening ratio, library utilization, and confidence intervals.

Pure functions over immutable inputs. Utilization is the share of sampled
work attributable to a library; by default only post-handler-entry (EXEC)
samples count, since import-phase samples sit in module top-level code and
would conflate "was initialized" with "is used".
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .cct import CallingContextTree
from .package_mapper import ModuleTree, library_time, total_initialization
from .trace_model import InvocationMeta

DEFAULT_Z = 1.96  # two-sided 95% normal critical value
DEFAULT_RATIO_THRESHOLD = 0.10


class DegenerateTraceError(ValueError):
    """The trace set has no measurable execution time."""


class InsufficientSamplesError(ValueError):
    """No samples to base a frequency estimate on."""


@dataclass(frozen=True)
class GateResult:
    """Outcome of the screening test: is profiling this app worthwhile."""

    ratio: float
    threshold: float

    @property
    def profile_worthy(self) -> bool:
        return self.ratio >= self.threshold


@dataclass(frozen=True)
class LibraryStats:
    library: str
    init_time_us: float
    init_overhead_share: float
    sample_count: int
    utilization: float
    ci_low: float
    ci_high: float
    invocations_observed: int


def init_ratio(
    metas: Sequence[InvocationMeta],
    tree: ModuleTree,
    threshold: float = DEFAULT_RATIO_THRESHOLD,
) -> GateResult:
    """Mean library initialization time over mean execution time.

    Execution time is init-exclusive: exec_end_us - init_end_us. The
    numerator is the tree's library-only total, which is already the mean
    across invocations.
    """
    if not metas:
        raise ValueError("no invocations")
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    mean_exec = sum(m.exec_end_us - m.init_end_us for m in metas) / len(metas)
    if mean_exec <= 0:
        raise DegenerateTraceError("zero execution time across invocations")
    return GateResult(ratio=total_initialization(tree) / mean_exec, threshold=threshold)


def utilization(
    cct: CallingContextTree, library: str, include_init: bool = False
) -> float:
    """Fraction of all samples whose innermost frame is in the library.

    The denominator spans every label (libraries, application code, stdlib,
    unknown), so utilizations over the full partition sum to 1. Returns 0
    for a library that never appears.
    """
    denom = cct.total_samples if include_init else cct.exec_samples
    if denom == 0:
        raise InsufficientSamplesError("no samples in the calling context tree")
    return cct.samples_matching(library, include_init=include_init) / denom


def confidence_interval(
    p_hat: float, n: int, z: float = DEFAULT_Z
) -> tuple[float, float]:
    """Normal-approximation interval p_hat +/- z*sqrt(p_hat(1-p_hat)/n).

    Clamped to [0, 1]; degenerate estimates (0 or 1) give a zero-width
    interval at the point.
    """
    if not 0 <= p_hat <= 1:
        raise ValueError("p_hat must be in [0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    if z <= 0:
        raise ValueError("z must be positive")
    half = z * math.sqrt(p_hat * (1.0 - p_hat) / n)
    return (max(0.0, p_hat - half), min(1.0, p_hat + half))


def library_stats(
    tree: ModuleTree,
    cct: CallingContextTree,
    z: float = DEFAULT_Z,
    include_init: bool = False,
) -> list[LibraryStats]:
    """Per-library statistics, sorted by initialization share descending.

    Ties break lexicographically so the ranking is total and deterministic.
    """
    total_init = total_initialization(tree)
    denom = cct.total_samples if include_init else cct.exec_samples
    names = set(tree.library_names())
    for node in cct.iter_nodes():
        if node.module is not None and node.module.kind.value == "library":
            names.add(node.module.library)
    by_library = cct.samples_by_library(include_init=include_init)
    rows = []
    for name in sorted(names):
        try:
            init_us = library_time(tree, name)
            observed = _max_observations(tree, name)
        except KeyError:
            init_us = 0.0
            observed = 0
        count = by_library.get(name, 0)
        if denom > 0:
            util = count / denom
            ci_low, ci_high = confidence_interval(util, denom, z)
        else:
            util, ci_low, ci_high = 0.0, 0.0, 0.0
        rows.append(
            LibraryStats(
                library=name,
                init_time_us=init_us,
                init_overhead_share=(init_us / total_init) if total_init else 0.0,
                sample_count=count,
                utilization=util,
                ci_low=ci_low,
                ci_high=ci_high,
                invocations_observed=observed,
            )
        )
    rows.sort(key=lambda r: (-r.init_overhead_share, r.library))
    return rows


def _max_observations(tree: ModuleTree, library: str) -> int:
    node = tree.roots[library]
    return max(n.observations for n in node.walk())


def nearest_rank_percentile(values: Iterable[float], q: float) -> float:
    """k-th smallest value with k = ceil(q * n); deterministic by design."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("no values")
    if not 0 < q <= 1:
        raise ValueError("q must be in (0, 1]")
    k = math.ceil(q * len(ordered))
    return ordered[k - 1]
