"""Socket transport: one session per connection, blocking I/O with timeouts."""

from __future__ import annotations

import logging
import socket

from ..measures import DiscreteMeasure
from ..reports import SessionReport
from .audit import CLIENT, SERVER
from .parties import Party, SessionConfig
from .wire import DEFAULT_PORT, DEFAULT_TIMEOUT, MAX_FRAME, FrameReader, ProtocolError, encode_frame

log = logging.getLogger(__name__)


def _send_all(sock: socket.socket, msgs) -> None:
    for m in msgs:
        sock.sendall(encode_frame(m))


def drive(party: Party, sock: socket.socket, timeout: float = DEFAULT_TIMEOUT,
          max_frame: int = MAX_FRAME) -> SessionReport:
    """Run ``party`` over a connected socket until the session ends."""
    sock.settimeout(timeout)
    reader = FrameReader(max_frame)
    try:
        _send_all(sock, party.start())
        while not party.done:
            try:
                chunk = sock.recv(65536)
            except socket.timeout:
                raise ProtocolError(f"no message from peer within {timeout:g} s") from None
            if not chunk:
                detail = f" inside a frame ({reader.pending} bytes buffered)" if reader.pending else ""
                raise ProtocolError(f"peer disconnected mid-session{detail}")
            for msg in reader.feed(chunk):
                _send_all(sock, party.receive(msg))
                if party.done:
                    break
    except ProtocolError as exc:
        try:
            _send_all(sock, party.fail(exc))
        except OSError:
            pass
        raise
    except OSError as exc:
        party.fail(exc)
        raise ProtocolError(f"connection failed: {exc}") from exc
    if party.error is not None:
        raise party.error
    return party.report


def parse_addr(addr: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep:
        return addr or default_host, DEFAULT_PORT
    try:
        return host or default_host, int(port)
    except ValueError:
        raise ValueError(f"bad port in address {addr!r}") from None


def serve(addr: tuple[str, int] | socket.socket, data: DiscreteMeasure, cfg: SessionConfig | None = None,
          timeout: float = DEFAULT_TIMEOUT) -> SessionReport:
    """Accept one connection and run the server side of a session.

    ``addr`` may be an already-listening socket (useful with port 0).
    """
    srv = addr if isinstance(addr, socket.socket) else socket.create_server(addr)
    try:
        srv.settimeout(timeout)
        try:
            conn, peer = srv.accept()
        except socket.timeout:
            raise ProtocolError(f"no client connected within {timeout:g} s") from None
        log.info("session from %s:%d", *peer[:2])
        with conn:
            return drive(Party(SERVER, data, cfg), conn, timeout)
    finally:
        if not isinstance(addr, socket.socket):
            srv.close()


def connect(addr: tuple[str, int], data: DiscreteMeasure, cfg: SessionConfig,
            timeout: float = DEFAULT_TIMEOUT, session: str | None = None) -> SessionReport:
    """Run the client side against a listening server."""
    try:
        sock = socket.create_connection(addr, timeout=timeout)
    except OSError as exc:
        raise ProtocolError(f"cannot reach {addr[0]}:{addr[1]}: {exc}") from exc
    with sock:
        return drive(Party(CLIENT, data, cfg, session=session), sock, timeout)
