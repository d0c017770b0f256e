"""Seeded experiment runner emitting JSON reports and CSV tables.

Every row carries the config hash and root seed. Fields ending in ``_ms``
(and the derived ``speedup``) are wall-clock measurements; everything else
is reproduced byte for byte by re-running the same config.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..fedwad import fedwad_distance
from ..ot_core import wasserstein
from ..redteam import AttackConfig, AttackConfigError, dp_gap, gaussian_sigma, run_attack
from ..trianglewad import TriangleConfig, local_interpolate, make_defense, run_triangle_session
from ..valuation import contribution_scores, detect_noisy, detect_noisy_private, matching_rate
from .synthetic import SyntheticSpec, gen_synthetic, gen_text

log = logging.getLogger(__name__)

EXPERIMENTS = ("quantgap", "speed", "attack", "dpgap", "detect", "contrib", "textmatch")
TIMING_KEYS = frozenset({"speedup"})
NOISE_SIGMA = {"detect": 10.0, "contrib": 5.0}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    sizes: list[int] = field(default_factory=lambda: [100, 500, 1000])
    dim: int = 32
    shift: float = 1.0
    methods: list[str] = field(default_factory=lambda: ["direct", "fedwad", "triangle"])
    t: float = 0.5
    p: float = 2
    defense: str = "ones"
    sigma: float = 1.0
    K: int = 20
    tol: float = 1e-6
    noise_ratio: float = 0.3
    noise_sigma: float | None = None  # per-experiment default when unset
    ratios: list[float] = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.15, 0.2])
    epsilons: list[float] = field(default_factory=lambda: [10.0, 1.0, 0.1])
    delta: float = 1e-5
    steps: int = 500
    lr: float = 0.05
    repeats: int = 1
    vocab_size: int = 1000
    words: int = 50
    overlap: float = 0.8
    out_dir: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        unknown = set(self.methods) - {"direct", "fedwad", "triangle"}
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if self.repeats < 1 or not self.sizes:
            raise ValueError("need at least one size and one repeat")
        if self.noise_sigma is None:
            self.noise_sigma = NOISE_SIGMA.get(self.experiment, 10.0)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {', '.join(sorted(extra))}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def is_timing(key: str) -> bool:
    return key.endswith("_ms") or key in TIMING_KEYS


def strip_timing(obj):
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if not is_timing(k)}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def _ms(start: float) -> float:
    return (time.perf_counter() - start) * 1e3


def _clouds(cfg: ExperimentConfig, n: int, seed: int):
    mu = gen_synthetic(SyntheticSpec(size=n, dim=cfg.dim, seed=seed, name="mu")).measure()
    nu = gen_synthetic(SyntheticSpec(size=n, dim=cfg.dim, shift=cfg.shift, seed=seed, name="nu")).measure()
    return mu, nu


def _tri_cfg(cfg: ExperimentConfig, **kw) -> TriangleConfig:
    base = dict(defense_kind=cfg.defense, sigma=cfg.sigma, t=cfg.t, p=cfg.p, K=cfg.K, tol=cfg.tol)
    base.update(kw)
    return TriangleConfig(**base)


# -- experiments -------------------------------------------------------------------


def _quantgap(cfg: ExperimentConfig, rows: list):
    for n in cfg.sizes:
        for rep in range(cfg.repeats):
            seed = cfg.seed + rep
            mu, nu = _clouds(cfg, n, seed)
            row = {"n": n, "repeat": rep}
            t0 = time.perf_counter()
            w_star = wasserstein(mu, nu, cfg.p)
            row.update(w_direct=w_star, direct_ms=_ms(t0))
            if "fedwad" in cfg.methods:
                t0 = time.perf_counter()
                fed = fedwad_distance(mu, nu, K=cfg.K, t=cfg.t, p=cfg.p, tol=cfg.tol, seed=seed)
                row.update(w_fedwad=fed.estimate, gap_fedwad=abs(fed.estimate - w_star),
                           rounds_fedwad=fed.rounds, fedwad_ms=_ms(t0))
            if "triangle" in cfg.methods:
                t0 = time.perf_counter()
                tri = run_triangle_session(mu, nu, _tri_cfg(cfg), seed)
                gap = abs(tri.estimate - w_star)
                row.update(w_triangle=tri.estimate, gap_triangle=gap, rel_gap_triangle=gap / w_star,
                           triangle_ms=_ms(t0))
            rows.append(row)
    summary = {}
    for m in ("fedwad", "triangle"):
        gaps = [r[f"gap_{m}"] for r in rows if f"gap_{m}" in r]
        if gaps:
            summary[f"mean_gap_{m}_over_rows"] = float(np.mean(gaps))
    return summary


def _speed(cfg: ExperimentConfig, rows: list):
    n = cfg.sizes[0]
    for rep in range(cfg.repeats):
        seed = cfg.seed + rep
        mu, nu = _clouds(cfg, n, seed)
        t0 = time.perf_counter()
        # tol 0 runs all K rounds, the cost the comparison is about
        fed = fedwad_distance(mu, nu, K=cfg.K, t=cfg.t, p=cfg.p, tol=0.0, seed=seed)
        fed_ms = _ms(t0)
        t0 = time.perf_counter()
        tri = run_triangle_session(mu, nu, _tri_cfg(cfg), seed)
        tri_ms = _ms(t0)
        rows.append({"n": n, "repeat": rep, "rounds_fedwad": fed.rounds, "solves_fedwad": fed.solves,
                     "solves_triangle": tri.solves, "fedwad_ms": fed_ms, "triangle_ms": tri_ms,
                     "speedup": fed_ms / tri_ms})
    return {"speedup": float(min(r["speedup"] for r in rows))}


def _attack(cfg: ExperimentConfig, rows: list):
    mu = gen_synthetic(SyntheticSpec(size=cfg.sizes[0], dim=cfg.dim, shift=2.0, seed=cfg.seed,
                                     name="mu")).measure()
    nu = gen_synthetic(SyntheticSpec(size=cfg.sizes[0], dim=cfg.dim, shift=-1.0, seed=cfg.seed,
                                     name="nu")).measure()
    fed = fedwad_distance(mu, nu, K=cfg.K, t=cfg.t, p=cfg.p, tol=cfg.tol, seed=cfg.seed)
    acfg = AttackConfig.from_report(fed, nu, steps=cfg.steps, lr=cfg.lr, seed=cfg.seed, p=cfg.p)
    rep = run_attack(acfg, oracle_mu=mu)
    losses = rep.final.trace
    for step, gap in rep.oracle_gap:
        rows.append({"step": step, "loss": losses[step], "w_attack_mu": gap})
    tri = run_triangle_session(mu, nu, _tri_cfg(cfg), cfg.seed).to_session_report()
    try:
        AttackConfig.from_report(tri, nu)
        tri_msg = ""
    except AttackConfigError as exc:
        tri_msg = str(exc)
    return {
        "loss_ratio": rep.final.loss / rep.initial_loss,
        "gap_ratio": rep.oracle_gap[-1][1] / rep.oracle_gap[0][1],
        "triangle_configurable": not tri_msg,
        "triangle_rejection": tri_msg,
        "flags": rep.final.flags,
    }


def _dpgap(cfg: ExperimentConfig, rows: list):
    mu, nu = _clouds(cfg, cfg.sizes[0], cfg.seed)
    for eps in cfg.epsilons:
        rows.append({"epsilon": eps, "delta": cfg.delta, "sigma": gaussian_sigma(eps, cfg.delta),
                     "gap": dp_gap(mu, nu, eps, cfg.delta, seed=cfg.seed, p=cfg.p)})
    order = sorted(rows, key=lambda r: -r["epsilon"])
    gaps = [r["gap"] for r in order]
    return {"monotone": bool(all(b > a for a, b in zip(gaps, gaps[1:])))}


def _detection_scores(flagged, truth: set, n: int):
    flagged = set(np.asarray(flagged).tolist())
    tp = len(flagged & truth)
    negatives = n - len(truth)
    return {
        "flagged": len(flagged),
        "detection_rate": tp / len(truth) if truth else 1.0,
        "fpr": (len(flagged) - tp) / negatives if negatives else 0.0,
    }


def _detect(cfg: ExperimentConfig, rows: list):
    n = cfg.sizes[0]
    for rep in range(cfg.repeats):
        seed = cfg.seed + rep
        data = gen_synthetic(SyntheticSpec(size=n, dim=cfg.dim, noise_ratio=cfg.noise_ratio,
                                           noise_sigma=cfg.noise_sigma, seed=seed, name="mu"))
        mu = data.measure()
        nu = gen_synthetic(SyntheticSpec(size=n, dim=cfg.dim, seed=seed, name="nu")).measure()
        truth = set(data.corrupted.tolist())
        # budget k = known corruption count
        k = len(truth)
        oracle = detect_noisy(mu, nu, cfg.p, k=(k, 0)).row
        rows.append({"repeat": rep, "mode": "oracle", **_detection_scores(oracle, truth, n)})
        for kind in ("ones", "gaussian"):
            defense = make_defense(kind, n, cfg.dim, cfg.sigma, seed)
            idx = detect_noisy_private(mu, nu, defense, cfg.t, cfg.p, k=k)
            rows.append({"repeat": rep, "mode": f"triangle-{kind}", **_detection_scores(idx, truth, n)})
    out = {}
    for mode in sorted({r["mode"] for r in rows}):
        sel = [r for r in rows if r["mode"] == mode]
        out[mode] = {"detection_rate": float(np.mean([r["detection_rate"] for r in sel])),
                     "fpr": float(np.mean([r["fpr"] for r in sel]))}
    return out


def _contrib(cfg: ExperimentConfig, rows: list):
    n = cfg.sizes[0]
    val = gen_synthetic(SyntheticSpec(size=n, dim=cfg.dim, seed=cfg.seed, name="validation")).measure()
    clients = [
        gen_synthetic(SyntheticSpec(size=n, dim=cfg.dim, noise_ratio=r, noise_sigma=cfg.noise_sigma,
                                    seed=cfg.seed, name=f"client{i}")).measure()
        for i, r in enumerate(cfg.ratios)
    ]
    c = contribution_scores(clients, val, _tri_cfg(cfg), cfg.seed)
    for i, r in enumerate(cfg.ratios):
        rows.append({"client": i, "noise_ratio": r, "distance": float(c.distances[i]),
                     "score": float(c.scores[i])})
    order = np.argsort(cfg.ratios, kind="stable")
    s = c.scores[order]
    return {"strictly_decreasing": bool(np.all(np.diff(s) < 0))}


def _textmatch(cfg: ExperimentConfig, rows: list):
    for rep in range(cfg.repeats):
        seed = cfg.seed + rep
        corpus = gen_text(cfg.vocab_size, cfg.dim, cfg.words, cfg.overlap, seed)
        mu, nu = corpus.client_measure(), corpus.server_measure()
        fed = fedwad_distance(mu, nu, K=cfg.K, t=cfg.t, p=cfg.p, tol=cfg.tol, seed=seed)
        defense = make_defense(cfg.defense, mu.size, cfg.dim, cfg.sigma, seed)
        eta_mu = local_interpolate(defense, mu, cfg.t, cfg.p)
        args = (corpus.vocab, corpus.words, corpus.client_words)
        rows.append({"repeat": rep,
                     "rate_fedwad_gamma": matching_rate(fed.artifacts["gamma"], *args),
                     "rate_triangle_eta_mu": matching_rate(eta_mu, *args)})
    return {"gamma_beats_eta_everywhere": all(r["rate_fedwad_gamma"] > r["rate_triangle_eta_mu"]
                                              for r in rows)}


_RUNNERS = {
    "quantgap": _quantgap,
    "speed": _speed,
    "attack": _attack,
    "dpgap": _dpgap,
    "detect": _detect,
    "contrib": _contrib,
    "textmatch": _textmatch,
}


# -- driver ------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    report: dict
    json_path: Path | None = None
    csv_path: Path | None = None


def _write(cfg: ExperimentConfig, report: dict, rows: list) -> tuple[Path | None, Path | None]:
    if cfg.out_dir is None:
        return None, None
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.experiment}-{report['config_hash']}"
    jpath, cpath = out / f"{stem}.json", out / f"{stem}.csv"
    jpath.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    cols: list[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    with cpath.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(rows)
    return jpath, cpath


def run_experiment(cfg: ExperimentConfig | dict) -> ExperimentResult:
    """Run one experiment; on failure the rows gathered so far are still written."""
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    h = cfg.config_hash()
    rows: list[dict] = []
    report = {"experiment": cfg.experiment, "config": cfg.to_dict(), "config_hash": h, "seed": cfg.seed}
    t0 = time.perf_counter()
    try:
        summary = _RUNNERS[cfg.experiment](cfg, rows)
    except Exception as exc:
        report.update(status="failed", error=f"{type(exc).__name__}: {exc}",
                      rows=_tag(rows, h, cfg.seed))
        _write(cfg, report, report["rows"])
        raise
    report.update(status="ok", summary=summary, rows=_tag(rows, h, cfg.seed), total_ms=_ms(t0))
    jpath, cpath = _write(cfg, report, report["rows"])
    return ExperimentResult(report, jpath, cpath)


def _tag(rows, h, seed):
    return [{"config_hash": h, "seed": seed, **r} for r in rows]


def run_experiments(cfgs: list[ExperimentConfig], workers: int = 1) -> list[ExperimentResult]:
    if workers <= 1 or len(cfgs) <= 1:
        return [run_experiment(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_experiment, cfgs))
