"""In-process profiling agent: import timing plus periodic stack sampling.

The agent wraps ``builtins.__import__`` (and ``importlib.import_module``,
the entry point serverless runtimes use to load handlers) to time every
first import; cached re-imports are not recorded. An interval timer's
signal handler captures the interpreter's current stack into a
fixed-capacity buffer: no I/O, no locks, drop-and-count when full.
``flush()`` serializes everything as one newline-delimited trace file per
invocation, in the wire format the offline analyzer consumes, and
deactivates the agent so a fresh ``install()`` is legal afterwards.

Only the main thread is sampled (signals are delivered there); the agent
is not meant for multi-threaded applications beyond that. Import timing
uses a monotonic clock.

This module sits on the profiled application's cold-start path, so it
avoids costly imports of its own: no dataclasses/uuid/hashlib at module
level, json only at flush time (serverless handlers almost always have it
loaded already).
"""

from __future__ import annotations

import builtins
import importlib
import os
import signal
import sys
import time

AGENT_VERSION = "coldprof-agent/0.1.0"

_AGENT_FILE = __file__


def _hidden_frame(filename: str) -> bool:
    # the agent's own frames and the import machinery it wraps never
    # belong in a sample
    return filename == _AGENT_FILE or filename.startswith("<frozen importlib")


class AgentError(RuntimeError):
    pass


class AgentConfig:
    """Collector settings; see from_env() for the COLDPROF_* variables."""

    __slots__ = (
        "output_dir",
        "app_id",
        "sample_period_us",
        "max_depth",
        "enabled",
        "buffer_capacity",
        "manifest_hash",
    )

    def __init__(
        self,
        output_dir: str = ".",
        app_id: str = "app",
        sample_period_us: int = 10_000,
        max_depth: int = 128,
        enabled: bool = True,
        buffer_capacity: int = 32_768,
        manifest_hash: str = "",
    ):
        if sample_period_us < 1_000:
            raise ValueError("sample_period_us must be >= 1000")
        if max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        self.output_dir = output_dir
        self.app_id = app_id
        self.sample_period_us = sample_period_us
        self.max_depth = max_depth
        self.enabled = enabled  # sampling on/off; import timing always runs
        self.buffer_capacity = buffer_capacity
        self.manifest_hash = manifest_hash

    @classmethod
    def from_env(cls, **overrides) -> "AgentConfig":
        values = dict(
            output_dir=os.environ.get("COLDPROF_OUT", "."),
            app_id=os.environ.get("COLDPROF_APP_ID", "app"),
            sample_period_us=int(os.environ.get("COLDPROF_PERIOD_US", "10000")),
            manifest_hash=os.environ.get("COLDPROF_MANIFEST", ""),
        )
        if os.environ.get("COLDPROF_DISABLE") == "1":
            values["enabled"] = False
        values.update(overrides)
        return cls(**values)


class _ImportFrame:
    __slots__ = ("name", "started_ns", "children_cum_us")

    def __init__(self, name: str, started_ns: int):
        self.name = name
        self.started_ns = started_ns
        self.children_cum_us = 0


_active_agent: "AgentHandle | None" = None


class AgentHandle:
    """One profiled invocation: collects records until flush()."""

    def __init__(self, config: AgentConfig):
        self.config = config
        self._t0_ns = time.monotonic_ns()
        self._orig_import = builtins.__import__
        self._orig_import_module = importlib.import_module
        self._import_stack: list[_ImportFrame] = []
        self._imports: list[tuple] = []  # (mod, file, parent, cum, self, ord)
        self._seen: set[str] = set()
        self._samples: list = [None] * config.buffer_capacity
        self._sample_count = 0
        self._dropped = 0
        self._init_end_us: int | None = None
        self._warning = ""
        self._old_sigalrm = None
        self._sampling = False
        self._active = True
        builtins.__import__ = self._import_hook
        importlib.import_module = self._import_module_hook
        if config.enabled:
            self._start_timer()

    # --- lifecycle -------------------------------------------------

    def _start_timer(self) -> None:
        if not hasattr(signal, "setitimer"):
            self._warning = "no interval timer; import timing only"
            return
        try:
            self._old_sigalrm = signal.signal(signal.SIGALRM, self._on_sample_tick)
        except ValueError:
            # signal.signal only works on the main thread
            self._warning = "not on main thread; import timing only"
            return
        period_s = self.config.sample_period_us / 1e6
        signal.setitimer(signal.ITIMER_REAL, period_s, period_s)
        self._sampling = True

    def _stop_timer(self) -> None:
        if self._sampling:
            signal.setitimer(signal.ITIMER_REAL, 0)
            signal.signal(signal.SIGALRM, self._old_sigalrm)
            self._sampling = False

    def mark_handler_entry(self) -> None:
        """Split point between initialization and execution."""
        self._init_end_us = self._now_us()

    def close(self) -> None:
        """Deactivate without writing; idempotent."""
        global _active_agent
        if not self._active:
            return
        self._stop_timer()
        builtins.__import__ = self._orig_import
        importlib.import_module = self._orig_import_module
        self._active = False
        if _active_agent is self:
            _active_agent = None

    # --- sampling --------------------------------------------------

    def _on_sample_tick(self, signum, frame) -> None:
        # interrupt context: append to the preallocated buffer, nothing else
        if self._sample_count >= len(self._samples):
            self._dropped += 1
            return
        ts_us = self._now_us()
        frames = []
        f = frame
        while f is not None:
            code = f.f_code
            if not _hidden_frame(code.co_filename):
                # innermost-first; reversed at flush
                frames.append((code.co_filename, f.f_lineno or 1, code.co_name))
            f = f.f_back
        if frames:
            self._samples[self._sample_count] = (ts_us, frames)
            self._sample_count += 1

    # --- import timing ---------------------------------------------

    def _now_us(self) -> int:
        return (time.monotonic_ns() - self._t0_ns) // 1000

    def _import_hook(self, name, globals=None, locals=None, fromlist=(), level=0):
        if not self._active:
            return self._orig_import(name, globals, locals, fromlist, level)
        resolved = _resolve_name(name, globals, level)
        if resolved is None or resolved in sys.modules or resolved in self._seen:
            return self._orig_import(name, globals, locals, fromlist, level)
        return self._timed(
            resolved,
            lambda: self._orig_import(name, globals, locals, fromlist, level),
        )

    def _import_module_hook(self, name, package=None):
        if not self._active:
            return self._orig_import_module(name, package)
        resolved = name
        if name.startswith("."):
            if not package:
                return self._orig_import_module(name, package)  # let it raise
            import importlib.util

            resolved = importlib.util.resolve_name(name, package)
        if resolved in sys.modules or resolved in self._seen:
            return self._orig_import_module(name, package)
        return self._timed(resolved, lambda: self._orig_import_module(name, package))

    def _timed(self, resolved: str, thunk):
        """Run one module load, recording cumulative and derived self time."""
        parent = self._import_stack[-1].name if self._import_stack else ""
        record = _ImportFrame(resolved, time.monotonic_ns())
        self._import_stack.append(record)
        try:
            return thunk()
        finally:
            self._import_stack.pop()
            cum_us = (time.monotonic_ns() - record.started_ns) // 1000
            if resolved in sys.modules and resolved not in self._seen:
                self._seen.add(resolved)
                module = sys.modules[resolved]
                file_path = getattr(module, "__file__", None) or f"<{resolved}>"
                self_us = max(0, cum_us - record.children_cum_us)
                self._imports.append(
                    (resolved, file_path, parent, cum_us, self_us, len(self._imports) + 1)
                )
                if self._import_stack:
                    self._import_stack[-1].children_cum_us += cum_us
            # failed or vanished imports stay inside the parent's self time

    # --- output ----------------------------------------------------

    @property
    def dropped_samples(self) -> int:
        return self._dropped

    def flush(self) -> str:
        """Write the invocation's trace file; returns its path."""
        if not self._active:
            raise AgentError("flush() after close()")
        exec_end_us = max(1, self._now_us())
        self.close()
        init_end_us = self._init_end_us if self._init_end_us is not None else exec_end_us
        init_end_us = max(1, min(init_end_us, exec_end_us))

        import json  # deferred: usually already loaded by the application

        def enc(obj) -> str:
            return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))

        invocation_id = os.urandom(16).hex()
        meta = {
            "t": "meta",
            "inv": invocation_id,
            "app": self.config.app_id,
            "manifest": self.config.manifest_hash or _default_manifest(),
            "period_us": self.config.sample_period_us,
            "init_end_us": init_end_us,
            "exec_end_us": exec_end_us,
            "agent": AGENT_VERSION,
        }
        if self._dropped:
            meta["dropped"] = self._dropped
        if self._warning:
            meta["warn"] = self._warning
        lines = [enc(meta)]
        for mod, file_path, parent, cum, self_us, order in self._imports:
            lines.append(
                enc(
                    {
                        "t": "import",
                        "mod": mod,
                        "file": file_path,
                        "parent": parent,
                        "cum_us": cum,
                        "self_us": self_us,
                        "ord": order,
                    }
                )
            )
        max_depth = self.config.max_depth
        for entry in self._samples[: self._sample_count]:
            ts_us, frames = entry
            ts_us = min(ts_us, exec_end_us)
            stack = [
                {"file": file, "line": max(1, line), "fn": fn}
                for file, line, fn in reversed(frames)
            ]
            if len(stack) > max_depth:
                stack = [{"file": "(truncated)", "line": 1, "fn": "(truncated)"}] + stack[
                    -(max_depth - 1):
                ]
            phase = "INIT" if ts_us < init_end_us else "EXEC"
            lines.append(enc({"t": "sample", "ts_us": ts_us, "phase": phase, "stack": stack}))

        out_dir = self.config.output_dir
        os.makedirs(out_dir, exist_ok=True)
        final_path = os.path.join(out_dir, f"{invocation_id}.trace")
        tmp_path = final_path + ".tmp"
        try:
            with open(tmp_path, "w", encoding="utf-8") as fh:
                fh.write("\n".join(lines) + "\n")
            os.replace(tmp_path, final_path)
        except OSError:
            if os.path.exists(tmp_path):
                os.unlink(tmp_path)
            raise
        self._samples = [None] * self.config.buffer_capacity
        self._sample_count = 0
        return final_path


def _resolve_name(name: str, globals_, level: int) -> str | None:
    """Absolute module name for an __import__ call; None if unresolvable."""
    if level == 0:
        return name or None
    g = globals_ or {}
    package = g.get("__package__")
    if package is None:
        package = g.get("__name__", "")
        if "__path__" not in g:
            package = package.rpartition(".")[0]
    if not package:
        return None
    bits = package.split(".")
    if level > 1:
        if level - 1 >= len(bits):
            return None
        bits = bits[: -(level - 1)]
    base = ".".join(bits)
    return f"{base}.{name}" if name else base


def _default_manifest() -> str:
    main = sys.modules.get("__main__")
    main_file = getattr(main, "__file__", None)
    if main_file and os.path.exists(main_file):
        import hashlib  # deferred: only needed when no manifest is configured

        with open(main_file, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()[:16]
    return "unknown"


def install(config: AgentConfig | None = None) -> AgentHandle:
    """Activate the agent; call before the application's libraries import.

    A second install while one is active is an error. On runtimes without
    an interval timer the agent degrades to import timing only and notes a
    warning in the trace meta.
    """
    global _active_agent
    if _active_agent is not None:
        raise AgentError("agent already installed")
    handle = AgentHandle(config or AgentConfig.from_env())
    _active_agent = handle
    return handle
