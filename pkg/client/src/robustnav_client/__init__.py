"""Reference client for the robustnav external-agent wire protocol (v1).

Standard-library only: transport, codec, and an example greedy agent that
doubles as integration documentation.
"""

__version__ = "0.1.0"

from .codec import (  # noqa: F401
    Observation, ProtocolError, ServerError, decode_observation,
    action_message, PROTOCOL_VERSION,
)
from .session import ClientSession, SessionClosed, connect, run_agent  # noqa: F401
