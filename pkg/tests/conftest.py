"""Shared fixtures and seeded random generators for the test suite."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from coldprof.trace_model import (
    Frame,
    ImportRecord,
    InvocationMeta,
    Phase,
    SampleRecord,
)

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def roots_file() -> Path:
    return FIXTURES / "roots.json"


_WORDS = ["alpha", "beta", "gamma", "delta", "mu", "nu", "xi", "rho", "phi", "omega"]
_FUNCS = ["run", "load", "parse", "emit", "step", "<module>", "handler"]
_UNICODE = ["", "café", "模块", "päth"]


def random_frame(rng: random.Random) -> Frame:
    return Frame(
        file_path=rng.choice(_WORDS) + rng.choice(_UNICODE) + "/mod.py",
        line=rng.randint(1, 500),
        function_name=rng.choice(_FUNCS),
    )


def random_call_path(rng: random.Random, max_len: int = 8) -> tuple[Frame, ...]:
    return tuple(random_frame(rng) for _ in range(rng.randint(1, max_len)))


def random_record(rng: random.Random):
    """One random valid TraceRecord of any of the three kinds."""
    kind = rng.randrange(3)
    if kind == 0:
        init_end = rng.randint(1, 10**9)
        return InvocationMeta(
            invocation_id=f"inv-{rng.randrange(10**6)}",
            app_id=rng.choice(_WORDS) + rng.choice(_UNICODE),
            code_manifest_hash=f"{rng.randrange(16**8):08x}",
            sample_period_us=rng.randint(1, 100_000),
            init_end_us=init_end,
            exec_end_us=init_end + rng.randint(0, 10**9),
            agent_version=f"agent/{rng.randint(0, 9)}",
        )
    if kind == 1:
        cum = rng.randint(0, 10**8)
        return ImportRecord(
            module_name=".".join(
                rng.choice(_WORDS) for _ in range(rng.randint(1, 4))
            ),
            file_path=rng.choice(_WORDS) + "/x.py",
            parent_module=rng.choice(["", "pkg.mod"]),
            t_cumulative_us=cum,
            t_self_us=rng.randint(0, cum),
            order=rng.randint(1, 10**6),
        )
    return SampleRecord(
        timestamp_us=rng.randint(0, 10**9),
        call_path=random_call_path(rng),
        phase=rng.choice([Phase.INIT, Phase.EXEC]),
    )


def random_import_forest(
    rng: random.Random, library_share: float = 0.8, namespace: str = ""
):
    """Random import records with an exact self/cumulative nesting identity.

    Returns (records, flat) where flat is [(module, file, self_us)] for
    independent recomputation. Files live under site-packages/, app/, or
    python3.x/ so kind classification is exercised too. ``namespace``
    prefixes module names so forests from different invocations never claim
    the same module with different files.
    """
    counter = [0]
    records: list[ImportRecord] = []
    flat: list[tuple[str, str, int]] = []

    def grow(parent_name: str, prefix: str, root_dir: str, depth: int) -> int:
        counter[0] += 1
        base = f"{namespace}m{counter[0]}" if namespace else f"m{counter[0]}"
        name = f"{prefix}{base}" if prefix else base
        self_us = rng.randint(0, 50_000)
        children_cum = 0
        order = len(records) + 1
        placeholder = len(records)
        records.append(None)  # patched below once children are known
        if depth < 3:
            for _ in range(rng.randint(0, 2)):
                children_cum += grow(name, name + ".", root_dir, depth + 1)
        cum = self_us + children_cum
        file_path = f"{root_dir}{name.replace('.', '/')}.py"
        records[placeholder] = ImportRecord(
            module_name=name,
            file_path=file_path,
            parent_module=parent_name,
            t_cumulative_us=cum,
            t_self_us=self_us,
            order=order,
        )
        flat.append((name, file_path, self_us))
        return cum

    for _ in range(rng.randint(1, 5)):
        roll = rng.random()
        if roll < library_share:
            root_dir = "site-packages/"
        elif roll < 0.9:
            root_dir = "app/"
        else:
            root_dir = "python3.x/"
        grow("", "", root_dir, 0)
    return records, flat


def random_valid_trace(rng: random.Random, inv_id: str, app_id: str = "bulk_app"):
    """A full record list that satisfies validate_trace."""
    imports, _ = random_import_forest(rng, namespace=inv_id.replace("-", "_") + "_")
    init_end = max(r.t_cumulative_us for r in imports) + rng.randint(1, 1000)
    exec_end = init_end + rng.randint(1000, 500_000)
    meta = InvocationMeta(
        invocation_id=inv_id,
        app_id=app_id,
        code_manifest_hash="m-bulk-1",
        sample_period_us=10_000,
        init_end_us=init_end,
        exec_end_us=exec_end,
        agent_version="testgen/1",
    )
    samples = []
    for _ in range(rng.randint(0, 30)):
        ts = rng.randint(0, exec_end)
        samples.append(
            SampleRecord(
                timestamp_us=ts,
                call_path=random_call_path(rng, max_len=5),
                phase=Phase.INIT if ts < init_end else Phase.EXEC,
            )
        )
    samples.sort(key=lambda s: s.timestamp_us)
    return [meta, *imports, *samples]
