from __future__ import annotations

import base64
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .measures import DiscreteMeasure, matrix_to_bytes

TIMING_KEYS = ("wall_ms", "timings")


@dataclass
class SessionReport:
    """What a protocol run hands back to its caller."""

    protocol: str
    estimate: float
    mode: str = "direct"
    rounds: int = 1
    trace: list[float] = field(default_factory=list)
    solves: int = 0
    wall_ms: float = 0.0
    timings: dict[str, float] = field(default_factory=dict)
    crossed: list[str] = field(default_factory=list)
    extras: dict[str, Any] = field(default_factory=dict)
    # measures visible to (or produced by) the party that owns this report
    artifacts: dict[str, DiscreteMeasure] = field(default_factory=dict, repr=False)

    def to_dict(self, *, timing: bool = True, artifacts: bool = False) -> dict[str, Any]:
        out = {
            "protocol": self.protocol,
            "estimate": self.estimate,
            "mode": self.mode,
            "rounds": self.rounds,
            "trace": list(self.trace),
            "solves": self.solves,
            "crossed": sorted(self.crossed),
            "extras": _jsonable(self.extras),
        }
        if timing:
            out["wall_ms"] = self.wall_ms
            out["timings"] = dict(self.timings)
        if artifacts:
            out["artifacts"] = {k: measure_to_json(v) for k, v in sorted(self.artifacts.items())}
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SessionReport":
        return cls(
            protocol=d["protocol"],
            estimate=d["estimate"],
            mode=d.get("mode", "direct"),
            rounds=d.get("rounds", 1),
            trace=list(d.get("trace", [])),
            solves=d.get("solves", 0),
            wall_ms=d.get("wall_ms", 0.0),
            timings=dict(d.get("timings", {})),
            crossed=list(d.get("crossed", [])),
            extras=dict(d.get("extras", {})),
        )


def measure_to_json(m: DiscreteMeasure) -> dict[str, str]:
    return {
        "support": base64.b64encode(matrix_to_bytes(m.support)).decode("ascii"),
        "weights": base64.b64encode(matrix_to_bytes(m.weights.reshape(-1, 1))).decode("ascii"),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
