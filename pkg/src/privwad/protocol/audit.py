"""Visibility rules: which measures may leave which party.

Every message a party sends or receives passes through its :class:`Auditor`.
Measures may only travel in ``payload["artifacts"]`` under an id that the
protocol allows, and only from the party that owns that artifact. Anything
else aborts the session.
"""

from __future__ import annotations

from .wire import Message, ProtocolError

CLIENT, SERVER = "client", "server"

_FEDWAD = {"gamma": SERVER, "eta_mu": CLIENT, "eta_nu": SERVER}


class VisibilityError(ProtocolError):
    pass


def allowed_artifacts(protocol: str, mode: str = "direct", shared: bool = True) -> dict[str, str]:
    """Artifact id -> role allowed to send it."""
    if protocol == "fedwad":
        return dict(_FEDWAD)
    if protocol != "triangle":
        raise ValueError(f"unknown protocol {protocol!r}")
    out = {"defense": CLIENT} if shared else {}
    if mode == "direct":
        out.update(eta_mu=CLIENT, eta_nu=SERVER)
    else:
        out.update({f"fed.{k}": v for k, v in _FEDWAD.items()})
    return out


def _looks_like_measure(obj) -> bool:
    return isinstance(obj, dict) and "support" in obj


class Auditor:
    def __init__(self, allowed: dict[str, str]):
        self.allowed = dict(allowed)
        self.crossed: set[str] = set()
        self.log: list[tuple[str, str, str]] = []

    def check(self, msg: Message, sender: str) -> None:
        arts = msg.payload.get("artifacts", {})
        if not isinstance(arts, dict):
            raise VisibilityError("artifacts field must be an object")
        for key, value in msg.payload.items():
            if key != "artifacts" and _contains_measure(value):
                raise VisibilityError(f"measure smuggled outside artifacts in field {key!r}")
        for name in arts:
            owner = self.allowed.get(name)
            if owner is None:
                raise VisibilityError(f"artifact {name!r} may not cross the party boundary")
            if owner != sender:
                raise VisibilityError(f"artifact {name!r} may only be sent by the {owner}")
            self.crossed.add(name)
            self.log.append((sender, msg.type.value, name))


def _contains_measure(obj) -> bool:
    if _looks_like_measure(obj):
        return True
    if isinstance(obj, dict):
        return any(_contains_measure(v) for v in obj.values())
    if isinstance(obj, list):
        return any(_contains_measure(v) for v in obj)
    return False
