"""Sans-IO party state machines for FedWad and TriangleWad sessions.

A :class:`Party` consumes decoded messages and produces messages to send;
transports (in-process queue, TCP socket) only move bytes. The party logic is
written as a generator: ``msg = yield from ctx.recv(...)`` suspends until the
transport delivers the next message.

The client holds ``mu`` and opens the session; the server holds ``nu`` and
orchestrates: it seeds FedWad's global measure, combines each round and
writes the final report, which it sends back to the client.
"""

from __future__ import annotations

import dataclasses
import time
import uuid
from dataclasses import dataclass, field

from ..fedwad import (DEFAULT_T, DEFAULT_TOL, client_step, combine_step, has_converged,
                      initial_gamma, server_step)
from ..geodesics import InterpolatingMeasure
from ..measures import DiscreteMeasure, uniform_measure
from ..ot_core import DEFAULT_P, count_solves, wasserstein
from ..reports import SessionReport
from ..trianglewad import (ConfigError, DefenseData, TriangleConfig, local_interpolate,
                           make_defense, moment_bound, server_defense)
from .audit import CLIENT, SERVER, Auditor, allowed_artifacts
from .wire import VERSION, Message, MsgType, PeerError, ProtocolError, decode_measure, encode_measure

PROTOCOLS = ("fedwad", "triangle")


@dataclass
class SessionConfig:
    protocol: str = "triangle"
    seed: int = 0
    # fedwad parameters
    K: int = 20
    t: float = DEFAULT_T
    p: float = DEFAULT_P
    tol: float = DEFAULT_TOL
    t_nu: float | None = None
    # optional public starting point for gamma (rows of support points)
    gamma0: list[list[float]] | None = None
    triangle: TriangleConfig = field(default_factory=TriangleConfig)
    share_raw: bool = False

    def __post_init__(self):
        if self.share_raw:
            raise ConfigError("raw datasets never leave their owner; share_raw is not supported")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        for name in ("t", "t_nu"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if not self.p >= 1:
            raise ConfigError(f"p must be >= 1, got {self.p}")
        if self.gamma0 is not None:
            try:
                self.gamma0 = uniform_measure(self.gamma0).support.tolist()
            except ValueError as exc:
                raise ConfigError(f"bad gamma0: {exc}") from None

    def allowed(self) -> dict[str, str]:
        return allowed_artifacts(self.protocol, self.triangle.mode, self.triangle.shared)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be an object")
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
        d = dict(d)
        tri = d.pop("triangle", {}) or {}
        try:
            return cls(triangle=TriangleConfig(**tri), **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


class _Ctx:
    def __init__(self, party: "Party"):
        self.party = party
        self._solves = 0

    def send(self, mtype: MsgType, **payload) -> None:
        self.party._emit(Message(mtype, self.party.session or "", payload))

    def recv(self, *types: MsgType):
        msg = yield
        if msg.type is MsgType.ERROR:
            raise PeerError(f"peer aborted: {msg.payload.get('reason', 'no reason given')}")
        if self.party.session is None:
            self.party.session = msg.session
        elif msg.session != self.party.session:
            raise ProtocolError(f"session id {msg.session!r} does not match {self.party.session!r}")
        if types and msg.type not in types:
            want = "/".join(t.value for t in types)
            raise ProtocolError(f"expected {want}, got {msg.type.value}")
        return msg

    def run(self, fn, *args, **kw):
        """Call ``fn`` and charge its OT solves to this party.

        The counter must not stay open across a ``yield``: in-process both
        parties share one context.
        """
        with count_solves() as c:
            out = fn(*args, **kw)
        self._solves += c.value
        return out

    def take_solves(self) -> int:
        n, self._solves = self._solves, 0
        return n


def _artifact(msg: Message, name: str) -> DiscreteMeasure:
    try:
        blob = msg.payload["artifacts"][name]
    except (KeyError, TypeError):
        raise ProtocolError(f"{msg.type.value} lacks artifact {name!r}") from None
    return decode_measure(blob)


def _number(msg: Message, name: str) -> float:
    v = msg.payload.get(name)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProtocolError(f"{msg.type.value} lacks numeric field {name!r}")
    return v


class Party:
    def __init__(self, role: str, data: DiscreteMeasure, cfg: SessionConfig | None = None,
                 session: str | None = None):
        if role not in (CLIENT, SERVER):
            raise ValueError(f"role must be client or server, got {role!r}")
        if role == CLIENT and cfg is None:
            raise ConfigError("the client must supply the session config")
        self.role = role
        self.peer = SERVER if role == CLIENT else CLIENT
        self.data = data
        self.cfg = cfg
        self.session = (session or uuid.uuid4().hex) if role == CLIENT else None
        self.auditor = Auditor({})
        self.ctx = _Ctx(self)
        self.report: SessionReport | None = None
        self.error: Exception | None = None
        self.done = False
        self._outbox: list[Message] = []
        self._primed = False
        self._started = time.perf_counter()
        body = _client_body if role == CLIENT else _server_body
        self._gen = body(self)

    def _emit(self, msg: Message) -> None:
        self.auditor.check(msg, self.role)
        self._outbox.append(msg)

    def _set_config(self, cfg: SessionConfig) -> None:
        self.cfg = cfg
        self.auditor.allowed = cfg.allowed()

    def start(self) -> list[Message]:
        if self._primed:
            return self._flush()
        self._primed = True
        return self._advance(None)

    def receive(self, msg: Message) -> list[Message]:
        if self.done:
            raise ProtocolError(f"{self.role} got {msg.type.value} after the session ended")
        early = self.start() if not self._primed else []
        if self.done:
            return early
        return early + self._advance(msg, audit=True)

    def fail(self, exc: Exception) -> list[Message]:
        """Abort from outside the state machine (timeouts, disconnects)."""
        if not self.done:
            self.done, self.error = True, exc
            self._outbox.append(Message(MsgType.ERROR, self.session or "", {"reason": str(exc)}))
        return self._flush()

    def _advance(self, msg, audit=False) -> list[Message]:
        try:
            if audit:
                self.auditor.check(msg, self.peer)
            self._gen.send(msg)
        except StopIteration as stop:
            self.done = True
            self.report = stop.value
        except PeerError as exc:
            self.done, self.error = True, exc
        except (ProtocolError, ConfigError) as exc:
            self.done, self.error = True, exc
            self._outbox.append(Message(MsgType.ERROR, self.session or "", {"reason": str(exc)}))
        return self._flush()

    def _flush(self) -> list[Message]:
        out, self._outbox = self._outbox, []
        return out

    def elapsed_ms(self) -> float:
        return (time.perf_counter() - self._started) * 1e3


# -- handshake -------------------------------------------------------------------


def _check_hello(msg: Message, expect_role: str) -> dict:
    pl = msg.payload
    if pl.get("version") != VERSION:
        raise ProtocolError(f"unsupported version {pl.get('version')!r}")
    if pl.get("role") != expect_role:
        raise ProtocolError(f"peer announced role {pl.get('role')!r}, expected {expect_role}")
    size, dim = pl.get("size"), pl.get("dim")
    if not (isinstance(size, int) and isinstance(dim, int) and size > 0 and dim > 0):
        raise ProtocolError("HELLO lacks a valid size/dim")
    return pl


def _hello_payload(party: Party) -> dict:
    return {"version": VERSION, "role": party.role, "size": party.data.size, "dim": party.data.dim}


def _client_body(party: Party):
    ctx, mu, cfg = party.ctx, party.data, party.cfg
    ctx.send(MsgType.HELLO, **_hello_payload(party))
    hello = _check_hello((yield from ctx.recv(MsgType.HELLO)), SERVER)
    if hello["dim"] != mu.dim:
        raise ConfigError(f"dimension mismatch: {mu.dim} vs {hello['dim']}")
    party._set_config(cfg)
    ctx.send(MsgType.CONFIG, config=cfg.to_dict())
    if cfg.protocol == "fedwad":
        yield from _fedwad_client(ctx, mu, cfg.t, cfg.p, prefix="")
    else:
        yield from _triangle_client(ctx, mu, cfg, hello["size"])
    msg = yield from ctx.recv(MsgType.REPORT)
    try:
        rep = SessionReport.from_dict(msg.payload["report"])
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed REPORT: {exc}") from None
    return rep


def _server_body(party: Party):
    ctx, nu = party.ctx, party.data
    hello = _check_hello((yield from ctx.recv(MsgType.HELLO)), CLIENT)
    ctx.send(MsgType.HELLO, **_hello_payload(party))
    msg = yield from ctx.recv(MsgType.CONFIG)
    cfg = SessionConfig.from_dict(msg.payload.get("config"))
    if party.cfg is not None and party.cfg != cfg:
        raise ConfigError("client config does not match the server's")
    if hello["dim"] != nu.dim:
        raise ConfigError(f"dimension mismatch: {hello['dim']} vs {nu.dim}")
    party._set_config(cfg)
    if cfg.protocol == "fedwad":
        fed = yield from _fedwad_server(ctx, nu, hello["size"], cfg.K, cfg.t, cfg.p, cfg.tol,
                                        cfg.t_nu, cfg.seed, prefix="", gamma0=cfg.gamma0)
        rep = SessionReport(
            protocol="fedwad",
            estimate=float(fed["bound"]),
            mode="federated",
            rounds=fed["rounds"],
            trace=[float(b) for b in fed["trace"]],
            solves=fed["solves"],
            extras={"t": cfg.t, "p": cfg.p, "tol": cfg.tol, "converged": fed["converged"]},
            artifacts={k: fed[k] for k in ("gamma", "eta_mu", "eta_nu")},
        )
    else:
        rep = yield from _triangle_server(ctx, nu, cfg, hello["size"])
    rep.crossed = sorted(party.auditor.crossed)
    rep.wall_ms = party.elapsed_ms()
    ctx.send(MsgType.REPORT, report=rep.to_dict())
    return rep


# -- fedwad ------------------------------------------------------------------------


def _fedwad_client(ctx: _Ctx, mu: DiscreteMeasure, t: float, p: float, prefix: str):
    while True:
        msg = yield from ctx.recv(MsgType.MEASURE)
        gamma = _artifact(msg, prefix + "gamma")
        if gamma.dim != mu.dim:
            raise ProtocolError("global measure has the wrong dimension")
        eta_mu, w_client = ctx.run(client_step, mu, gamma, t, p)
        ctx.send(MsgType.IM_SHARE, round=msg.payload.get("round"),
                 artifacts={prefix + "eta_mu": encode_measure(eta_mu.measure)})
        ctx.send(MsgType.DIST, w_client=w_client, solves=ctx.take_solves())
        msg = yield from ctx.recv(MsgType.IM_SHARE)
        _artifact(msg, prefix + "eta_nu")
        if msg.payload.get("final"):
            return


def _fedwad_server(ctx: _Ctx, nu, client_size, K, t, p, tol, t_nu, seed, prefix, gamma0=None):
    if gamma0 is None:
        gamma = initial_gamma(min(client_size, nu.size), nu.dim, seed)
    else:
        gamma = uniform_measure(gamma0)
        if gamma.dim != nu.dim:
            raise ConfigError(f"gamma0 has dim {gamma.dim}, data has {nu.dim}")
    trace: list[float] = []
    client_solves = 0
    rnd = 0
    while rnd < K:
        ctx.send(MsgType.MEASURE, round=rnd, artifacts={prefix + "gamma": encode_measure(gamma)})
        msg = yield from ctx.recv(MsgType.IM_SHARE)
        eta_mu = InterpolatingMeasure(_artifact(msg, prefix + "eta_mu"), t, "mu", "gamma")
        msg = yield from ctx.recv(MsgType.DIST)
        w_client = _number(msg, "w_client")
        client_solves += int(_number(msg, "solves"))
        eta_nu, w_server = ctx.run(server_step, nu, gamma, t if t_nu is None else t_nu, p)
        prev_size = gamma.size
        gamma, bound = ctx.run(combine_step, eta_mu, eta_nu, prev_size, w_client, w_server, p)
        trace.append(bound)
        rnd += 1
        final = rnd >= K or has_converged(trace, tol)
        ctx.send(MsgType.IM_SHARE, round=rnd - 1, bound=bound, final=final,
                 artifacts={prefix + "eta_nu": encode_measure(eta_nu.measure)})
        if final:
            break
    return {
        "bound": trace[-1],
        "trace": trace,
        "rounds": rnd,
        "converged": has_converged(trace, tol),
        "solves": client_solves + ctx.take_solves(),
        "gamma": gamma,
        "eta_mu": eta_mu.measure,
        "eta_nu": eta_nu.measure,
    }


# -- trianglewad ---------------------------------------------------------------


def _triangle_client(ctx: _Ctx, mu, cfg: SessionConfig, server_size: int):
    tc = cfg.triangle
    size = tc.resolved_size(mu.size, server_size)
    defense = make_defense(tc.defense_kind, size, mu.dim, tc.sigma, cfg.seed, tc.shared)
    if tc.shared:
        ctx.send(MsgType.MEASURE, artifacts={"defense": encode_measure(defense.measure)})
    eta_mu = ctx.run(local_interpolate, defense, mu, tc.t, tc.p, private_id="mu")
    if tc.mode == "direct":
        msg = yield from ctx.recv(MsgType.IM_SHARE)
        _artifact(msg, "eta_nu")
        ctx.send(MsgType.IM_SHARE, artifacts={"eta_mu": encode_measure(eta_mu.measure)})
    else:
        yield from _fedwad_client(ctx, eta_mu.measure, DEFAULT_T, tc.p, prefix="fed.")
    ctx.send(MsgType.DIST, moment_bound=moment_bound(defense, tc.p), solves=ctx.take_solves())


def _triangle_server(ctx: _Ctx, nu, cfg: SessionConfig, client_size: int):
    tc = cfg.triangle
    size = tc.resolved_size(client_size, nu.size)
    if tc.shared:
        msg = yield from ctx.recv(MsgType.MEASURE)
        d = _artifact(msg, "defense")
        if d.size != size or d.dim != nu.dim:
            raise ProtocolError(f"defense has shape {d.size}x{d.dim}, expected {size}x{nu.dim}")
        defense = DefenseData(d, tc.defense_kind, tc.sigma, cfg.seed, True)
    else:
        defense = server_defense(tc, None, size, nu.dim, cfg.seed)
    eta_nu = ctx.run(local_interpolate, defense, nu, tc.t, tc.p, private_id="nu")
    extras: dict = {}
    artifacts = {"eta_nu": eta_nu.measure}
    if tc.mode == "direct":
        ctx.send(MsgType.IM_SHARE, artifacts={"eta_nu": encode_measure(eta_nu.measure)})
        msg = yield from ctx.recv(MsgType.IM_SHARE)
        eta_mu = _artifact(msg, "eta_mu")
        if eta_mu.dim != nu.dim:
            raise ProtocolError("eta_mu has the wrong dimension")
        w = ctx.run(wasserstein, eta_mu, eta_nu.measure, tc.p)
        artifacts["eta_mu"] = eta_mu
        solves = 0
    else:
        fed = yield from _fedwad_server(ctx, eta_nu.measure, size, tc.K, DEFAULT_T, tc.p, tc.tol,
                                        None, cfg.seed, prefix="fed.")
        w = fed["bound"]
        extras["fedwad_rounds"] = fed["rounds"]
        solves = fed["solves"]
    msg = yield from ctx.recv(MsgType.DIST)
    bound = _number(msg, "moment_bound")
    solves += int(_number(msg, "solves")) + ctx.take_solves()
    extras.update(defense_kind=tc.defense_kind, defense_size=size, shared=tc.shared)
    return SessionReport(
        protocol="triangle",
        estimate=w / tc.t,
        mode=tc.mode,
        rounds=1,
        trace=[w],
        solves=solves,
        extras={"t": tc.t, "moment_bound": bound, **extras},
        artifacts=artifacts,
    )
