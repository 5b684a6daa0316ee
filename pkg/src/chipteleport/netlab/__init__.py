"""Two-node distributed run of the teleported CNOT over local stream sockets."""
from .backplane import OWNERSHIP, Backplane, OrderingError, SessionConfig
from .coordinator import Coordinator, SessionAborted, SessionLog
from .node import Node, NodeCrash
from .session import (
    SessionResult, check_message_counts, locc_audit, message_counts, records_jsonl,
    reference_records, run_session,
)
from .wire import FrameError, WireError, WireMessage

__all__ = [
    "OWNERSHIP", "Backplane", "OrderingError", "SessionConfig", "Coordinator", "SessionAborted",
    "SessionLog", "Node", "NodeCrash", "SessionResult", "check_message_counts", "locc_audit",
    "message_counts", "records_jsonl", "reference_records", "run_session", "FrameError",
    "WireError", "WireMessage",
]
