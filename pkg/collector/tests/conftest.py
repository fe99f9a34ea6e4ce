"""Fixture applications and trace parsing helpers for the agent tests.

The helpers parse trace files with plain json: the wire format is the public
contract between the agent and the analyzer, and these tests must not import
the analyzer package.
"""

from __future__ import annotations

import json
import sys
import textwrap
from pathlib import Path

import pytest

import coldprof_agent.agent as agent_mod


@pytest.fixture(autouse=True)
def clean_agent_state():
    yield
    if agent_mod._active_agent is not None:
        agent_mod._active_agent.close()


def read_trace(path) -> dict:
    """Parse one trace file into {'meta': ..., 'imports': [...], 'samples': [...]}."""
    meta = None
    imports = []
    samples = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        obj = json.loads(line)
        if obj["t"] == "meta":
            meta = obj
        elif obj["t"] == "import":
            imports.append(obj)
        else:
            samples.append(obj)
    return {"meta": meta, "imports": imports, "samples": samples}


def assert_nesting_identity(imports: list[dict]) -> None:
    children = {}
    for imp in imports:
        children[imp["parent"]] = children.get(imp["parent"], 0) + imp["cum_us"]
    for imp in imports:
        nested = children.get(imp["mod"], 0)
        assert imp["self_us"] == imp["cum_us"] - nested, imp["mod"]


def write_module(root: Path, name: str, body: str) -> None:
    parts = name.split(".")
    if len(parts) == 1:
        (root / f"{parts[0]}.py").write_text(textwrap.dedent(body), encoding="utf-8")
    else:
        pkg = root.joinpath(*parts[:-1])
        pkg.mkdir(parents=True, exist_ok=True)
        for i in range(1, len(parts)):
            init = root.joinpath(*parts[:i]) / "__init__.py"
            if not init.exists():
                init.write_text("", encoding="utf-8")
        (pkg / f"{parts[-1]}.py").write_text(textwrap.dedent(body), encoding="utf-8")


def sleepy_package(root: Path, name: str, sleep_s: float, extra: str = "") -> None:
    pkg = root / name
    pkg.mkdir(parents=True, exist_ok=True)
    (pkg / "__init__.py").write_text(
        f"import time\ntime.sleep({sleep_s})\n{extra}", encoding="utf-8"
    )


def purge_modules(prefixes: tuple[str, ...]) -> None:
    for key in list(sys.modules):
        if any(key == p or key.startswith(p + ".") for p in prefixes):
            del sys.modules[key]


@pytest.fixture
def lib_root(tmp_path):
    root = tmp_path / "libs"
    root.mkdir()
    sys.path.insert(0, str(root))
    yield root
    sys.path.remove(str(root))


def busy_wait(seconds: float) -> int:
    import time

    deadline = time.perf_counter() + seconds
    spins = 0
    while time.perf_counter() < deadline:
        spins += 1
    return spins
