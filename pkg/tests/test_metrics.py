import random

import pytest
from statsmodels.stats.proportion import proportion_confint

from coldprof.cct import CallingContextTree
from coldprof.metrics import (
    DegenerateTraceError,
    InsufficientSamplesError,
    confidence_interval,
    init_ratio,
    library_stats,
    nearest_rank_percentile,
    utilization,
)
from coldprof.package_mapper import RootConfig, build_module_tree
from coldprof.trace_model import Frame, ImportRecord, InvocationMeta, Phase

ROOTS = RootConfig(app_roots=("handler.py",), library_roots=("site",))


def meta(init_end: int, exec_end: int, inv: str = "i1") -> InvocationMeta:
    return InvocationMeta(
        invocation_id=inv,
        app_id="app",
        code_manifest_hash="m1",
        sample_period_us=10_000,
        init_end_us=init_end,
        exec_end_us=exec_end,
        agent_version="a/1",
    )


def lib_tree(**lib_times):
    records = [
        ImportRecord(name, f"site/{name}/__init__.py", "", t, t, i + 1)
        for i, (name, t) in enumerate(lib_times.items())
    ]
    return build_module_tree(records, ROOTS)


def cct_with(counts: dict[str, int], phase=Phase.EXEC) -> CallingContextTree:
    tree = CallingContextTree()
    for file_path, n in counts.items():
        for _ in range(n):
            tree.insert_path((Frame(file_path, 1, "g"),), phase)
    tree.annotate_libraries(ROOTS)
    return tree


def test_init_ratio_hot_app_is_profile_worthy():
    # 700 ms init vs 1000 ms exec: the regime where init dominates
    tree = lib_tree(alpha=700_000)
    gate = init_ratio([meta(700_000, 1_700_000)], tree, threshold=0.10)
    assert gate.ratio == pytest.approx(0.7)
    assert gate.profile_worthy


def test_init_ratio_cold_app_is_not():
    tree = lib_tree(alpha=50_000)
    gate = init_ratio([meta(50_000, 1_050_000)], tree, threshold=0.10)
    assert not gate.profile_worthy


def test_init_ratio_matches_flat_recompute_on_mixed_fixture():
    rng = random.Random(17)
    libs = {f"lib{i}": rng.randint(1_000, 900_000) for i in range(4)}
    tree = lib_tree(**libs)
    metas = [
        meta(rng.randint(1, 10**6), rng.randint(10**6 + 1, 4 * 10**6), f"i{k}")
        for k in range(500)
    ]
    gate = init_ratio(metas, tree)
    exec_mean = sum(m.exec_end_us - m.init_end_us for m in metas) / len(metas)
    assert gate.ratio == pytest.approx(sum(libs.values()) / exec_mean)


def test_init_ratio_rejects_degenerate_traces():
    tree = lib_tree(alpha=1000)
    with pytest.raises(DegenerateTraceError):
        init_ratio([meta(100, 100)], tree)
    with pytest.raises(ValueError):
        init_ratio([meta(100, 200)], tree, threshold=0.0)


def test_utilization_all_in_one_library():
    cct = cct_with({"site/only/x.py": 100})
    assert utilization(cct, "only") == 1.0


def test_utilization_rare_library_fraction():
    cct = cct_with({"site/xmlschema/x.py": 78, "handler.py": 9922})
    assert utilization(cct, "xmlschema") == pytest.approx(0.0078)


def test_utilization_partition_sums_to_one():
    cct = cct_with(
        {
            "site/a/x.py": 10,
            "site/b/y.py": 20,
            "handler.py": 30,
            "/elsewhere/q.py": 40,
        }
    )
    total = sum(
        utilization(cct, label) for label in ("a", "b", "(app)", "(unknown)", "(stdlib)")
    )
    assert total == pytest.approx(1.0, abs=1e-9)


def test_utilization_excludes_init_phase_by_default():
    cct = CallingContextTree()
    cct.insert_path((Frame("site/a/x.py", 1, "<module>"),), Phase.INIT)
    cct.insert_path((Frame("handler.py", 1, "g"),), Phase.EXEC)
    cct.annotate_libraries(ROOTS)
    assert utilization(cct, "a") == 0.0
    assert utilization(cct, "a", include_init=True) == 0.5


def test_utilization_requires_samples():
    cct = CallingContextTree()
    with pytest.raises(InsufficientSamplesError):
        utilization(cct, "a")


def test_confidence_interval_against_independent_implementation():
    # frozen value: 0.5 +/- 1.96*sqrt(0.25/10000) = 0.5 +/- 0.0098
    low, high = confidence_interval(0.5, 10_000, 1.96)
    assert (low, high) == (pytest.approx(0.4902, abs=1e-12), pytest.approx(0.5098, abs=1e-12))
    # statsmodels uses the exact 97.5% quantile; feed the same z to compare
    from scipy.stats import norm

    z_exact = norm.ppf(0.975)
    for k, n in [(5000, 10_000), (78, 10_000), (50, 55), (1, 3), (999_999, 10**6)]:
        ours = confidence_interval(k / n, n, z_exact)
        ref = proportion_confint(k, n, alpha=0.05, method="normal")
        assert ours[0] == pytest.approx(max(0.0, ref[0]), abs=1e-12)
        assert ours[1] == pytest.approx(min(1.0, ref[1]), abs=1e-12)


def test_confidence_interval_degenerate_points():
    assert confidence_interval(0.0, 100) == (0.0, 0.0)
    assert confidence_interval(1.0, 100) == (1.0, 1.0)


def test_confidence_interval_width_scaling():
    low1, high1 = confidence_interval(0.2, 1000)
    low4, high4 = confidence_interval(0.2, 4000)
    assert (high4 - low4) == pytest.approx((high1 - low1) / 2)


def test_confidence_interval_properties():
    rng = random.Random(23)
    for _ in range(200):
        p = rng.random()
        n = rng.randint(1, 10**6)
        low, high = confidence_interval(p, n)
        assert low <= p <= high
        if 0 < p < 1:
            low2, high2 = confidence_interval(p, n * 2)
            assert high2 - low2 < high - low
            low_z, high_z = confidence_interval(p, n, z=2.5)
            assert high_z - low_z >= high - low


def test_library_stats_sorted_with_ci():
    tree = lib_tree(big=600_000, small=100_000, mid=300_000)
    cct = cct_with({"site/big/x.py": 500, "site/mid/y.py": 100, "handler.py": 400})
    rows = library_stats(tree, cct)
    assert [r.library for r in rows] == ["big", "mid", "small"]
    big = rows[0]
    assert big.init_overhead_share == pytest.approx(0.6)
    assert big.utilization == pytest.approx(0.5)
    assert big.ci_low <= big.utilization <= big.ci_high
    small = rows[2]
    assert small.sample_count == 0
    assert small.utilization == 0.0 and (small.ci_low, small.ci_high) == (0.0, 0.0)


def test_library_stats_includes_sample_only_libraries():
    tree = lib_tree(alpha=1000)
    cct = cct_with({"site/ghost/x.py": 5, "site/alpha/y.py": 5})
    rows = {r.library: r for r in library_stats(tree, cct)}
    assert rows["ghost"].init_time_us == 0.0
    assert rows["ghost"].utilization == pytest.approx(0.5)


def test_nearest_rank_percentile():
    values = list(range(1, 101))
    assert nearest_rank_percentile(values, 0.99) == 99
    assert nearest_rank_percentile(values, 1.0) == 100
    assert nearest_rank_percentile([7], 0.5) == 7
    with pytest.raises(ValueError):
        nearest_rank_percentile([], 0.5)
