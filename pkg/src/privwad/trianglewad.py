"""One-round private Wasserstein estimation through a shared defense measure.

Both parties interpolate from the same defense measure ``D`` toward their
private data with the same ``t``::

    eta_mu = (1 - t) D + t T_mu(D)        eta_nu = (1 - t) D + t T_nu(D)

where ``T`` is the barycentric image of ``D`` in the private data. Then
``W_p(eta_mu, eta_nu) ~= t W_p(mu, nu)``, with an error on the ``p``-th power
bounded by the ``p``-th central moment of ``D``. An all-ones defense has zero
spread and makes the estimate exact up to solver precision.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream
from .fedwad import DEFAULT_TOL, fedwad_distance
from .geodesics import InterpolatingMeasure, interpolate_with_plan
from .measures import DiscreteMeasure, uniform_measure
from .ot_core import DEFAULT_P, count_solves, wasserstein
from .reports import SessionReport

DEFENSE_KINDS = ("ones", "gaussian")
MODES = ("direct", "federated")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DefenseData:
    measure: DiscreteMeasure
    kind: str
    sigma: float
    seed: int
    shared: bool = True

    @property
    def size(self) -> int:
        return self.measure.size


def make_defense(kind: str, support_size: int, dim: int, sigma: float = 1.0, seed: int = 0,
                 shared: bool = True, stream: str = "defense") -> DefenseData:
    if kind not in DEFENSE_KINDS:
        raise ConfigError(f"unknown defense kind {kind!r}; expected one of {DEFENSE_KINDS}")
    if support_size < 1 or dim < 1:
        raise ConfigError("defense needs at least one point and one dimension")
    if kind == "ones":
        support = np.ones((support_size, dim))
    else:
        if not sigma > 0:
            raise ConfigError(f"gaussian defense needs sigma > 0, got {sigma}")
        support = sigma * substream(seed, stream).standard_normal((support_size, dim))
    return DefenseData(uniform_measure(support), kind, float(sigma), int(seed), shared)


def local_interpolate(defense: DefenseData | DiscreteMeasure, private, t: float,
                      p: float = DEFAULT_P, *, return_plan: bool = False, private_id: str = "private"):
    """Interpolate from the defense toward one party's private data.

    With ``return_plan=True`` the OT plan (defense rows, private columns) is
    returned too; it never leaves the owning party, but the owner needs it to
    map scores on the interpolating measure back onto its own records.
    """
    if not 0.0 < t <= 1.0:
        raise ConfigError(f"t must lie in (0, 1], got {t}")
    d = defense.measure if isinstance(defense, DefenseData) else defense
    if d.dim != private.dim:
        raise ConfigError(f"defense dim {d.dim} does not match data dim {private.dim}")
    eta, ot = interpolate_with_plan(d, private, t, p, src_id="defense", dst_id=private_id)
    return (eta, ot) if return_plan else eta


@dataclass
class TriangleReport:
    estimate: float
    eta_mu: InterpolatingMeasure
    eta_nu: InterpolatingMeasure
    t: float
    mode: str
    bound: float = float("nan")
    wall_ms: float = 0.0
    solves: int = 0
    eta_distance: float = float("nan")
    extras: dict = field(default_factory=dict)

    def to_session_report(self) -> SessionReport:
        return SessionReport(
            protocol="triangle",
            estimate=self.estimate,
            mode=self.mode,
            rounds=1,
            trace=[self.eta_distance],
            solves=self.solves,
            wall_ms=self.wall_ms,
            extras={"t": self.t, "moment_bound": self.bound, **self.extras},
            artifacts={"eta_mu": self.eta_mu.measure, "eta_nu": self.eta_nu.measure},
        )


def triangle_distance(eta_mu: InterpolatingMeasure, eta_nu: InterpolatingMeasure, t: float,
                      p: float = DEFAULT_P, mode: str = "direct", *, K: int = 20,
                      tol: float = DEFAULT_TOL, seed: int = 0) -> TriangleReport:
    """Recover ``W_p(mu, nu)`` as ``W_p(eta_mu, eta_nu) / t``.

    ``mode="federated"`` keeps both interpolating measures private and gets
    their distance from FedWad instead of a direct solve.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    for eta in (eta_mu, eta_nu):
        if eta.t != t:
            raise ConfigError(f"interpolating measure built with t={eta.t}, session uses t={t}")
    if eta_mu.dim != eta_nu.dim:
        raise ConfigError(f"dimension mismatch: {eta_mu.dim} vs {eta_nu.dim}")
    start = time.perf_counter()
    extras = {}
    if mode == "direct":
        w = wasserstein(eta_mu.measure, eta_nu.measure, p)
    else:
        fed = fedwad_distance(eta_mu.measure, eta_nu.measure, K=K, p=p, tol=tol, seed=seed)
        w = fed.estimate
        extras["fedwad_rounds"] = fed.rounds
    return TriangleReport(
        estimate=w / t,
        eta_mu=eta_mu,
        eta_nu=eta_nu,
        t=t,
        mode=mode,
        wall_ms=(time.perf_counter() - start) * 1e3,
        eta_distance=w,
        extras=extras,
    )


def moment_bound(defense: DefenseData | DiscreteMeasure, p: float = DEFAULT_P) -> float:
    """Weighted mean of ``||d_i - mean(d)||^p`` over the defense support."""
    if isinstance(defense, DefenseData):
        if defense.kind == "ones":
            return 0.0
        defense = defense.measure
    center = defense.weights @ defense.support
    dev = np.linalg.norm(defense.support - center, axis=1)
    return float(defense.weights @ dev**p)


@dataclass
class TriangleConfig:
    defense_kind: str = "ones"
    defense_size: int | None = None
    sigma: float = 1.0
    shared: bool = True
    t: float = 0.5
    p: float = DEFAULT_P
    mode: str = "direct"
    K: int = 20
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.defense_kind not in DEFENSE_KINDS:
            raise ConfigError(f"unknown defense kind {self.defense_kind!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.t <= 1.0:
            raise ConfigError(f"t must lie in (0, 1], got {self.t}")
        if not self.p >= 1:
            raise ConfigError(f"p must be >= 1, got {self.p}")
        if self.defense_size is not None and self.defense_size < 1:
            raise ConfigError("defense_size must be positive")

    def resolved_size(self, mu_size: int, nu_size: int) -> int:
        return self.defense_size or min(mu_size, nu_size)


def server_defense(cfg: TriangleConfig, client_defense: DefenseData | None, size: int, dim: int,
                   seed: int) -> DefenseData:
    """The defense the data-holding server interpolates against.

    A shared defense is used as is. Otherwise the server only knows the kind,
    size and scale, and draws its own copy from a private stream.
    """
    if cfg.shared:
        if client_defense is None:
            raise ConfigError("shared defense was not received")
        return client_defense
    return make_defense(cfg.defense_kind, size, dim, cfg.sigma, seed, shared=False,
                        stream="defense.server")


def run_triangle_session(mu: DiscreteMeasure, nu: DiscreteMeasure, cfg: TriangleConfig | None = None,
                         seed: int = 0) -> TriangleReport:
    """Defense creation, both local interpolations, then the distance."""
    cfg = cfg or TriangleConfig()
    if mu.dim != nu.dim:
        raise ConfigError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    start = time.perf_counter()
    size = cfg.resolved_size(mu.size, nu.size)
    with count_solves() as solves:
        defense = make_defense(cfg.defense_kind, size, mu.dim, cfg.sigma, seed, cfg.shared)
        eta_mu = local_interpolate(defense, mu, cfg.t, cfg.p, private_id="mu")
        d_server = server_defense(cfg, defense, size, mu.dim, seed)
        eta_nu = local_interpolate(d_server, nu, cfg.t, cfg.p, private_id="nu")
        rep = triangle_distance(eta_mu, eta_nu, cfg.t, cfg.p, cfg.mode, K=cfg.K, tol=cfg.tol, seed=seed)
    rep.bound = moment_bound(defense, cfg.p)
    rep.solves = solves.value
    rep.wall_ms = (time.perf_counter() - start) * 1e3
    rep.extras.update(defense_kind=cfg.defense_kind, defense_size=size, shared=cfg.shared)
    return rep
