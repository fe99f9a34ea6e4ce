import random

import pytest

from coldprof.package_mapper import (
    IntegrityError,
    ModuleKind,
    RootConfig,
    UnknownPathError,
    build_module_tree,
    library_time,
    map_frame,
    merge_trees,
    package_time,
    total_initialization,
)
from coldprof.trace_model import Frame, ImportRecord

from conftest import random_import_forest

ROOTS = RootConfig(
    app_roots=("app", "handler.py"),
    library_roots=("site-packages", "/var/site-lib"),
    stdlib_roots=("python3.x",),
)


def frame(path: str) -> Frame:
    return Frame(file_path=path, line=1, function_name="g")


def test_map_frame_classifies_library_module():
    mapped = map_frame(frame("/var/site-lib/igraph/clustering.py"), ROOTS)
    assert mapped.kind is ModuleKind.LIBRARY_MODULE
    assert mapped.library == "igraph"
    assert mapped.dotted == "igraph.clustering"


def test_map_frame_application_and_initializer():
    assert map_frame(frame("handler.py"), ROOTS).kind is ModuleKind.APPLICATION
    mapped = map_frame(frame("site-packages/pkg/__init__.py"), ROOTS)
    assert mapped.dotted == "pkg"  # initializer maps to the package itself


def test_map_frame_unknown_is_not_an_error():
    mapped = map_frame(frame("/tmp/scratch/x.py"), ROOTS)
    assert mapped.kind is ModuleKind.UNKNOWN
    assert mapped.library == "(unknown)"


def test_map_frame_longest_prefix_wins():
    roots = RootConfig(
        app_roots=("top",), library_roots=("top/vendored",), stdlib_roots=()
    )
    assert map_frame(frame("top/main.py"), roots).kind is ModuleKind.APPLICATION
    assert (
        map_frame(frame("top/vendored/lib/x.py"), roots).kind
        is ModuleKind.LIBRARY_MODULE
    )


def test_map_frame_is_pure():
    f = frame("site-packages/a/b.py")
    assert map_frame(f, ROOTS) == map_frame(f, ROOTS)


def imp(mod, file, parent, cum, self_us, order):
    return ImportRecord(mod, file, parent, cum, self_us, order)


def test_package_tree_sums_children():
    # a.x self 2000 and a.y self 3000 roll up to package a = 5000
    records = [
        imp("a", "site-packages/a/__init__.py", "", 5500, 500, 1),
        imp("a.x", "site-packages/a/x.py", "a", 2000, 2000, 2),
        imp("a.y", "site-packages/a/y.py", "a", 3000, 3000, 3),
    ]
    tree = build_module_tree(records, ROOTS)
    assert package_time(tree, "a.x") == 2000
    assert package_time(tree, "a") == 5500
    assert library_time(tree, "a") == package_time(tree, "a")


def test_child_share_ranking():
    records = [
        imp("lib", "site-packages/lib/__init__.py", "", 100_000, 0, 1),
        imp("lib.big", "site-packages/lib/big.py", "lib", 95_000, 95_000, 2),
        imp("lib.small", "site-packages/lib/small.py", "lib", 5_000, 5_000, 3),
    ]
    tree = build_module_tree(records, ROOTS)
    total = total_initialization(tree)
    shares = sorted(
        (package_time(tree, f"lib.{name}") / total for name in ("big", "small")),
        reverse=True,
    )
    assert shares == [0.95, 0.05]


def test_cross_invocation_times_are_averaged():
    rng = random.Random(5)
    times = [rng.randint(0, 10_000) for _ in range(500)]
    records = [
        imp("m", "site-packages/m.py", "", t, t, 1) for t in times
    ]
    tree = build_module_tree(records, ROOTS)
    assert tree.lookup("m").t_self_us == pytest.approx(sum(times) / 500)
    assert tree.lookup("m").observations == 500


def test_total_initialization_excludes_app_and_stdlib():
    records = [
        imp("handler", "handler.py", "", 10_000, 1_000, 1),
        imp("lib", "site-packages/lib/__init__.py", "handler", 7_000, 7_000, 2),
        imp("json", "python3.x/json/__init__.py", "handler", 2_000, 2_000, 3),
    ]
    tree = build_module_tree(records, ROOTS)
    assert total_initialization(tree) == 7_000
    # still visible under the reserved buckets
    assert tree.lookup("(app).handler").t_self_us == 1_000
    assert tree.lookup("(stdlib).json").t_self_us == 2_000


def test_empty_tree_total_is_zero():
    assert total_initialization(build_module_tree([], ROOTS)) == 0


def test_two_libraries_sum():
    records = [
        imp("x", "site-packages/x.py", "", 7000, 7000, 1),
        imp("y", "site-packages/y.py", "", 3000, 3000, 2),
    ]
    tree = build_module_tree(records, ROOTS)
    assert total_initialization(tree) == 10_000


def test_conflicting_file_paths_raise_integrity_error():
    records = [
        imp("m", "site-packages/m.py", "", 10, 10, 1),
        imp("m", "site-packages/other/m.py", "", 10, 10, 1),
    ]
    with pytest.raises(IntegrityError):
        build_module_tree(records, ROOTS)


def test_unknown_path_lookup_raises():
    tree = build_module_tree([], ROOTS)
    with pytest.raises(UnknownPathError):
        package_time(tree, "nope")
    with pytest.raises(UnknownPathError):
        library_time(tree, "nope")


def test_namespace_packages_get_zero_self_nodes():
    records = [
        imp("ns.inner.mod", "site-packages/ns/inner/mod.py", "", 4000, 4000, 1),
    ]
    tree = build_module_tree(records, ROOTS)
    assert tree.lookup("ns.inner").t_self_us == 0
    assert package_time(tree, "ns") == 4000


def test_total_matches_flat_oracle_on_random_forests():
    rng = random.Random(42)
    for _ in range(200):
        records, flat = random_import_forest(rng)
        tree = build_module_tree(records, ROOTS)
        oracle = sum(
            self_us
            for _, file_path, self_us in flat
            if file_path.startswith("site-packages/")
        )
        assert total_initialization(tree) == oracle


def test_partition_and_monotonicity_properties():
    rng = random.Random(43)
    for _ in range(100):
        records, _ = random_import_forest(rng)
        tree = build_module_tree(records, ROOTS)
        total = total_initialization(tree)
        if total == 0:
            continue
        # library shares partition the total
        assert sum(
            library_time(tree, lib) for lib in tree.library_names()
        ) == pytest.approx(total)
        # parent >= child for every descendant
        for node in tree.walk():
            for child in node.children.values():
                assert node.subtree_self_us() >= child.subtree_self_us()
        # sibling shares sum to the parent's share
        for node in tree.walk():
            if node.children:
                assert node.subtree_self_us() == pytest.approx(
                    node.t_self_us
                    + sum(c.subtree_self_us() for c in node.children.values())
                )


def test_merged_partial_trees_match_flat_build():
    rng = random.Random(44)
    records_a, _ = random_import_forest(rng)
    records_b = [
        ImportRecord(
            module_name=r.module_name,
            file_path=r.file_path,
            parent_module=r.parent_module,
            t_cumulative_us=r.t_cumulative_us + 1000,
            t_self_us=r.t_self_us + 1000,
            order=r.order,
        )
        for r in records_a
    ]
    flat = build_module_tree(records_a + records_b, ROOTS)
    merged = merge_trees(
        build_module_tree(records_a, ROOTS), build_module_tree(records_b, ROOTS)
    )
    for node in flat.walk():
        assert merged.lookup(node.dotted).t_self_us == pytest.approx(node.t_self_us)
    assert total_initialization(merged) == pytest.approx(total_initialization(flat))
