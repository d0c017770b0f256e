"""Attacks and privacy baselines.

* identically-distributional attack: fit a surrogate dataset whose distances
  to the attacker-visible measures match the observed ones;
* residual attack: undo the interpolation step with a (possibly guessed)
  defense measure;
* Gaussian-mechanism perturbation as the differential-privacy baseline;
* a normality check for residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._rng import substream
from .geodesics import InterpolatingMeasure
from .measures import DiscreteMeasure, as_matrix, uniform_measure
from .ot_core import DEFAULT_P, solve_ot, wasserstein
from .reports import SessionReport


class AttackConfigError(ValueError):
    """The attacker lacks the distance information the attack needs."""


# -- identically distributional attack -----------------------------------------


@dataclass
class AttackState:
    d_attack: np.ndarray
    loss: float
    step: int = 0
    lr: float = 0.05
    trace: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)


def _distance_and_grad(x: np.ndarray, target: DiscreteMeasure, p: float):
    """``W_p(uniform(x), target)`` and its per-point gradient through the optimal plan."""
    src = uniform_measure(x)
    ot = solve_ot(src, target, p=p)
    w = ot.distance
    diff = x[:, None, :] - target.support[None, :, :]
    if p == 2:
        grad_pp = 2.0 * np.einsum("ij,ijk->ik", ot.plan, diff)
    else:
        norm = np.linalg.norm(diff, axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(norm > 0, p * norm ** (p - 2), 0.0)
        grad_pp = np.einsum("ij,ijk->ik", ot.plan * coef, diff)
    # per-point (mass-normalized) gradient: a uniform support point carries 1/n
    # of the mass, so the raw gradient shrinks with n and a fixed lr would stall
    grad_pp = grad_pp * x.shape[0]
    if w <= 0.0:
        return w, np.zeros_like(x), True
    # d W / d x = (1/p) W^{1-p} d W^p / d x
    return w, grad_pp * (w ** (1.0 - p) / p), False


def attack_loss(x, nu, gamma, target_wmn, target_wmg, p=DEFAULT_P) -> float:
    src = uniform_measure(x)
    return abs(wasserstein(src, nu, p) - target_wmn) + abs(wasserstein(src, gamma, p) - target_wmg)


def _loss_and_grad(x, nu, gamma, target_wmn, target_wmg, p):
    w1, g1, z1 = _distance_and_grad(x, nu, p)
    w2, g2, z2 = _distance_and_grad(x, gamma, p)
    loss = abs(w1 - target_wmn) + abs(w2 - target_wmg)
    grad = np.sign(w1 - target_wmn) * g1 + np.sign(w2 - target_wmg) * g2
    return loss, grad, z1 or z2


def attack_step(st: AttackState, nu: DiscreteMeasure, gamma: DiscreteMeasure, target_wmn: float,
                target_wmg: float, p: float = DEFAULT_P, *, line_search: bool = False,
                max_halvings: int = 20) -> AttackState:
    """One (sub)gradient step on the distance-matching loss.

    With ``line_search`` the step is halved until the loss does not increase
    (at most ``max_halvings`` times); if no halving helps the point is kept.
    """
    x = st.d_attack
    loss, grad, degenerate = _loss_and_grad(x, nu, gamma, target_wmn, target_wmg, p)
    flags = list(st.flags)
    if degenerate:
        flags.append(f"step {st.step}: zero distance, sub-gradient 0 used")
    lr = st.lr
    new_x = x - lr * grad
    new_loss = attack_loss(new_x, nu, gamma, target_wmn, target_wmg, p)
    if line_search and new_loss > loss:
        for _ in range(max_halvings):
            lr *= 0.5
            new_x = x - lr * grad
            new_loss = attack_loss(new_x, nu, gamma, target_wmn, target_wmg, p)
            if new_loss <= loss:
                break
        else:
            new_x, new_loss = x, loss
    return AttackState(
        d_attack=as_matrix(new_x),
        loss=new_loss,
        step=st.step + 1,
        lr=st.lr,
        trace=st.trace + [new_loss],
        flags=flags,
    )


@dataclass
class AttackConfig:
    """Everything the attacker observes.

    ``target_wmn`` is ``W(mu, nu)`` and ``target_wmg`` is ``W(mu, gamma)``;
    without both the attack cannot be set up.
    """

    nu: DiscreteMeasure
    gamma: DiscreteMeasure
    target_wmn: float | None
    target_wmg: float | None
    steps: int = 500
    lr: float = 0.05
    decay: float = 0.999
    seed: int = 0
    p: float = DEFAULT_P
    support_size: int | None = None
    line_search: bool = True

    def __post_init__(self):
        missing = [n for n in ("target_wmn", "target_wmg") if getattr(self, n) is None]
        if missing:
            raise AttackConfigError(
                f"attack needs the victim's distances; unavailable: {', '.join(missing)}"
            )
        if self.steps < 0:
            raise AttackConfigError("steps must be non-negative")

    @classmethod
    def from_report(cls, report: SessionReport, nu: DiscreteMeasure, **kw) -> "AttackConfig":
        """Build targets from what the data-holding server saw in a session.

        From a FedWad run the server knows the federated distance and can
        compute ``W(gamma, nu)`` itself; since the final measures sit on a
        geodesic, ``W(mu, gamma) = W(mu, nu) - W(gamma, nu)``. A TriangleWad
        session exposes neither ``W(D, mu)`` nor ``W(D, eta_mu)``, so the
        targets stay unknown.
        """
        if report.protocol == "fedwad":
            gamma = report.artifacts["gamma"]
            w_mn = report.estimate
            w_mg = w_mn - wasserstein(gamma, nu, kw.get("p", DEFAULT_P))
            return cls(nu=nu, gamma=gamma, target_wmn=w_mn, target_wmg=w_mg, **kw)
        gamma = report.artifacts.get("eta_mu") or report.artifacts.get("gamma")
        return cls(nu=nu, gamma=gamma, target_wmn=None, target_wmg=None, **kw)


@dataclass
class AttackReport:
    final: AttackState
    initial: np.ndarray
    initial_loss: float
    oracle_gap: list[tuple[int, float]] = field(default_factory=list)

    @property
    def d_attack(self) -> np.ndarray:
        return self.final.d_attack

    def to_dict(self) -> dict:
        return {
            "steps": self.final.step,
            "initial_loss": self.initial_loss,
            "final_loss": self.final.loss,
            "oracle_gap": [[s, g] for s, g in self.oracle_gap],
            "flags": self.final.flags,
        }


def run_attack(cfg: AttackConfig, oracle_mu: DiscreteMeasure | None = None,
               checkpoint_every: int = 50) -> AttackReport:
    """Iterate :func:`attack_step` from a seeded Gaussian start.

    ``oracle_mu`` is for evaluation only: it records ``W(D_attack, mu)`` at
    checkpoints and never feeds the optimization.
    """
    size = cfg.support_size or cfg.gamma.size
    x0 = as_matrix(substream(cfg.seed, "attack.init").standard_normal((size, cfg.nu.dim)))
    loss0 = attack_loss(x0, cfg.nu, cfg.gamma, cfg.target_wmn, cfg.target_wmg, cfg.p)
    st = AttackState(d_attack=x0, loss=loss0, lr=cfg.lr, trace=[loss0])
    gaps = []
    if oracle_mu is not None:
        gaps.append((0, wasserstein(uniform_measure(x0), oracle_mu, cfg.p)))
    for k in range(cfg.steps):
        st.lr = cfg.lr * cfg.decay**k
        st = attack_step(st, cfg.nu, cfg.gamma, cfg.target_wmn, cfg.target_wmg, cfg.p,
                         line_search=cfg.line_search)
        if oracle_mu is not None and (st.step % checkpoint_every == 0 or st.step == cfg.steps):
            gaps.append((st.step, wasserstein(uniform_measure(st.d_attack), oracle_mu, cfg.p)))
    st.lr = cfg.lr
    return AttackReport(final=st, initial=x0, initial_loss=loss0, oracle_gap=gaps)


# -- residual attack ---------------------------------------------------------------


def residual_attack(eta: InterpolatingMeasure | DiscreteMeasure, t: float, d_guess) -> np.ndarray:
    """Invert ``eta = (1 - t) D + t T(D)`` for ``T(D)`` using a guess of ``D``."""
    if t == 0:
        raise ValueError("t = 0 carries no information about the private data")
    if isinstance(eta, InterpolatingMeasure):
        eta = eta.measure
    if hasattr(d_guess, "measure"):
        d_guess = d_guess.measure
    guess = d_guess.support if hasattr(d_guess, "support") else as_matrix(d_guess)
    if guess.shape != eta.support.shape:
        raise ValueError(f"guess shape {guess.shape} does not match {eta.support.shape}")
    return as_matrix((eta.support - (1.0 - t) * guess) / t)


# -- differential privacy baseline ---------------------------------------------


def gaussian_sigma(epsilon: float, delta: float, sensitivity: float = 1.0) -> float:
    """Classic Gaussian-mechanism scale ``sensitivity * sqrt(2 ln(1.25/delta)) / epsilon``."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not sensitivity >= 0:
        raise ValueError("sensitivity must be non-negative")
    if math.isinf(epsilon):
        return 0.0
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def dp_perturb(mu: DiscreteMeasure, epsilon: float, delta: float, sensitivity: float = 1.0,
               seed: int = 0) -> DiscreteMeasure:
    sigma = gaussian_sigma(epsilon, delta, sensitivity)
    noise = substream(seed, "dp.noise").standard_normal(mu.support.shape)
    return mu.with_support(mu.support + sigma * noise)


def dp_gap(mu, nu, epsilon, delta=1e-5, sensitivity=1.0, seed=0, p=DEFAULT_P) -> float:
    """``|W(mu, nu) - W(perturbed mu, nu)|``."""
    return abs(wasserstein(mu, nu, p) - wasserstein(dp_perturb(mu, epsilon, delta, sensitivity, seed), nu, p))


# -- normality check ---------------------------------------------------------------

KS_ALPHA = 0.01
MAX_SKEW = 0.5
MAX_EXCESS_KURTOSIS = 1.0
MAX_KS_SAMPLE = 5000


@dataclass(frozen=True)
class GaussFitReport:
    ks_statistic: float
    ks_pvalue: float
    skewness: float
    excess_kurtosis: float
    verdict: str
    reason: str = ""
    n: int = 0

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def gaussianity_check(residual, seed: int = 0) -> GaussFitReport:
    """Pooled-entry normality check: KS against N(0, 1) after standardization.

    Inputs larger than ``MAX_KS_SAMPLE`` entries are subsampled (seeded) so the
    KS test keeps a fixed power. Passing needs ``p > 0.01``, ``|skew| < 0.5`` and
    ``|excess kurtosis| < 1``.
    """
    x = np.asarray(residual, dtype=np.float64).ravel()
    if x.size < 100:
        raise ValueError(f"need at least 100 entries, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("residual contains non-finite values")
    sd = x.std()
    if not sd > 1e-12 * max(1.0, abs(x.mean())):
        return GaussFitReport(float("nan"), 0.0, float("nan"), float("nan"), "fail",
                              "zero variance", x.size)
    if x.size > MAX_KS_SAMPLE:
        x = substream(seed, "gaussfit.subsample").choice(x, MAX_KS_SAMPLE, replace=False)
    z = (x - x.mean()) / x.std()
    ks = stats.kstest(z, "norm")
    skew = float(stats.skew(z))
    kurt = float(stats.kurtosis(z, fisher=True))
    reasons = []
    if not ks.pvalue > KS_ALPHA:
        reasons.append(f"KS p-value {ks.pvalue:.3g} <= {KS_ALPHA}")
    if not abs(skew) < MAX_SKEW:
        reasons.append(f"|skewness| {abs(skew):.3g} >= {MAX_SKEW}")
    if not abs(kurt) < MAX_EXCESS_KURTOSIS:
        reasons.append(f"|excess kurtosis| {abs(kurt):.3g} >= {MAX_EXCESS_KURTOSIS}")
    return GaussFitReport(float(ks.statistic), float(ks.pvalue), skew, kurt,
                          "fail" if reasons else "pass", "; ".join(reasons), x.size)
