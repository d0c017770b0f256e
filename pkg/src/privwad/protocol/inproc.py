from __future__ import annotations

from collections import deque

from ..measures import DiscreteMeasure
from ..reports import SessionReport
from .audit import CLIENT, SERVER
from .parties import Party, SessionConfig
from .wire import ProtocolError, roundtrip


def run_parties(client: Party, server: Party, max_messages: int = 100_000) -> tuple[SessionReport, SessionReport]:
    """Shuttle messages between two parties until both finish.

    Every message is framed and parsed on the way, exactly as over TCP, so
    the numbers match a socket run bit for bit.
    """
    to_server = deque(client.start())
    to_client = deque(server.start())
    delivered = 0
    while not (client.done and server.done):
        if to_server and not server.done:
            to_client.extend(server.receive(roundtrip(to_server.popleft())))
        elif to_client and not client.done:
            to_server.extend(client.receive(roundtrip(to_client.popleft())))
        else:
            for p in (client, server):
                if p.error is not None:
                    raise p.error
            stuck = client if not client.done else server
            raise ProtocolError(f"{stuck.role} is waiting but no message is in flight")
        delivered += 1
        if delivered > max_messages:
            raise ProtocolError("message limit exceeded")
        for p in (client, server):
            if p.error is not None:
                # let the peer see the ERROR before surfacing the failure
                other, queue = (server, to_server) if p is client else (client, to_client)
                while queue and not other.done:
                    other.receive(roundtrip(queue.popleft()))
                raise p.error
    return client.report, server.report


def run_session_inproc(protocol: str, mu: DiscreteMeasure, nu: DiscreteMeasure,
                       cfg: SessionConfig | dict | None = None, *, session: str = "inproc") -> SessionReport:
    """Run a full session with both parties in this process.

    ``cfg`` may be a :class:`SessionConfig` or its dict form; the returned
    report is the server's (the client receives an identical copy).
    """
    if cfg is None:
        cfg = SessionConfig(protocol=protocol)
    elif isinstance(cfg, dict):
        cfg = SessionConfig.from_dict({**cfg, "protocol": protocol})
    if cfg.protocol != protocol:
        raise ProtocolError(f"config is for {cfg.protocol!r}, session requested {protocol!r}")
    client = Party(CLIENT, mu, cfg, session=session)
    server = Party(SERVER, nu)
    _, rep = run_parties(client, server)
    return rep
