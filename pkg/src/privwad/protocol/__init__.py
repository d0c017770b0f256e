from .audit import Auditor, VisibilityError, allowed_artifacts
from .inproc import run_parties, run_session_inproc
from .parties import Party, SessionConfig
from .tcp import connect, serve
from .wire import (DEFAULT_PORT, VERSION, FrameReader, Message, MsgType, PeerError, ProtocolError,
                   encode_frame)

__all__ = [
    "Auditor",
    "VisibilityError",
    "allowed_artifacts",
    "run_parties",
    "run_session_inproc",
    "Party",
    "SessionConfig",
    "connect",
    "serve",
    "DEFAULT_PORT",
    "VERSION",
    "FrameReader",
    "Message",
    "MsgType",
    "PeerError",
    "ProtocolError",
    "encode_frame",
]
