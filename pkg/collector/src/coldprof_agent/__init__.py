"""coldprof-agent: in-process import timing and stack sampling."""

from .agent import AGENT_VERSION, AgentConfig, AgentError, AgentHandle, install

__all__ = ["AGENT_VERSION", "AgentConfig", "AgentError", "AgentHandle", "install"]
