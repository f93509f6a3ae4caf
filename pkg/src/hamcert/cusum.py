"""Online CUSUM change detection with exact lattice run-length analytics.

The detector keeps the reflected cumulative score s_i = max(0, s_{i-1} +
z_i) and stops when it reaches the threshold h.  Scores are binomial
log-likelihood ratios between known pre- and post-change reject
probabilities.  For scores on an integer lattice, expected run lengths
are computed exactly by solving the absorbing-chain linear system;
everything else is cross-checked by vectorized Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np


class CommensurabilityError(ValueError):
    """Score values do not share a small-integer lattice unit."""


@dataclass(frozen=True)
class CusumConfig:
    """Pre/post reject probabilities, threshold, shots per observation."""

    p: float
    q: float
    h: float
    shots: int = 1

    def __post_init__(self):
        if not 0 < self.p < self.q < 1:
            raise ValueError(f"need 0 < p < q < 1, got p={self.p}, q={self.q}")
        if self.h <= 0:
            raise ValueError(f"threshold must be positive, got h={self.h}")
        if self.shots < 1:
            raise ValueError("shots must be positive")

    @property
    def llr_reject(self) -> float:
        return math.log(self.q / self.p)

    @property
    def llr_accept(self) -> float:
        return math.log((1 - self.q) / (1 - self.p))


def llr(x: int, config: CusumConfig) -> float:
    """Binomial log-likelihood ratio score for `x` rejections in `shots` runs."""
    if not 0 <= x <= config.shots:
        raise ValueError(f"reject count {x} outside [0, {config.shots}]")
    return x * config.llr_reject + (config.shots - x) * config.llr_accept


@dataclass(frozen=True)
class CusumState:
    """Reflected cumulative score with compensated summation.

    `last_zero` is the largest index nu with s_nu = 0; reflection assigns
    a literal zero so the changepoint estimate needs no tolerance.
    """

    step: int = 0
    score: float = 0.0
    compensation: float = 0.0
    last_zero: int = 0
    terminated: bool = False


def cusum_step(state: CusumState, z: float, h: float) -> CusumState:
    """One observation: s <- max(0, s + z), terminating at s >= h."""
    if state.terminated:
        raise RuntimeError("cannot step a terminated CUSUM state")
    i = state.step + 1
    # Kahan update keeps long near-zero drifts from losing the reset point.
    y = z - state.compensation
    total = state.score + y
    comp = (total - state.score) - y
    if total <= 0.0:
        return CusumState(i, 0.0, 0.0, i, False)
    return CusumState(i, total, comp, state.last_zero, total >= h)


def changepoint_mle(state: CusumState) -> int:
    """Largest nu with s_nu = 0; the change-location MLE at termination."""
    if not state.terminated:
        raise RuntimeError("changepoint estimate requires a terminated state")
    return state.last_zero


def kl_bernoulli(q: float, p: float) -> float:
    """KL divergence D(Ber(q) || Ber(p))."""
    if not 0 < p < 1 or not 0 < q < 1:
        raise ValueError("Bernoulli parameters must be inside (0, 1)")
    return q * math.log(q / p) + (1 - q) * math.log((1 - q) / (1 - p))


def arl_lattice(
    theta_up: float, up: int, down: int, h_lattice: int, start: int = 0
) -> float:
    """Exact expected steps to absorption for a lattice CUSUM.

    Per step the score moves +up with probability theta_up and -down
    otherwise (lattice units), reflects at 0, and absorbs at >= h_lattice.
    Solves E[j] = 1 + sum_j' P(j->j') E[j'] over the transient states.
    theta_up = 0 below the threshold diverges and is reported as inf.
    """
    if not 0 <= theta_up <= 1:
        raise ValueError(f"probability {theta_up} outside [0, 1]")
    if up < 1 or down < 1 or h_lattice < 1:
        raise ValueError("lattice parameters must be positive integers")
    if start >= h_lattice:
        return 0.0
    if start < 0:
        raise ValueError("start state must be nonnegative")
    if theta_up == 0.0:
        return math.inf
    size = h_lattice
    a = np.eye(size)
    for j in range(size):
        j_up = j + up
        if j_up < h_lattice:
            a[j, j_up] -= theta_up
        j_dn = max(j - down, 0)
        a[j, j_dn] -= 1 - theta_up
    expected = np.linalg.solve(a, np.ones(size))
    return float(expected[start])


def bernoulli_lattice_units(
    p: float,
    q: float,
    *,
    tol: float = 1e-9,
    max_denominator: int = 64,
) -> tuple[int, int, float]:
    """Integer lattice decomposition (up, down, unit) of the Bernoulli LLR.

    Requires ln(q/p) and -ln((1-q)/(1-p)) to be rationally commensurable
    within `tol` with a denominator at most `max_denominator`; otherwise
    raises CommensurabilityError.
    """
    if not 0 < p < q < 1:
        raise ValueError(f"need 0 < p < q < 1, got p={p}, q={q}")
    z_reject = math.log(q / p)
    z_accept = math.log((1 - q) / (1 - p))
    ratio = z_reject / -z_accept
    frac = Fraction(ratio).limit_denominator(max_denominator)
    if frac.numerator < 1 or abs(ratio - float(frac)) > tol * max(1.0, ratio):
        raise CommensurabilityError(
            f"LLR ratio {ratio!r} is not a small-integer fraction within {tol}"
        )
    up, down = frac.numerator, frac.denominator
    unit = (z_reject / up + -z_accept / down) / 2
    return up, down, unit


def arl_bernoulli_exact(
    theta: float, config: CusumConfig, *, h_lattice: Optional[int] = None
) -> float:
    """Exact ARL of Bernoulli CUSUM at true reject probability `theta`.

    Only single-shot configs have two-valued scores on a lattice; the
    threshold defaults to config.h in log-likelihood units, rescaled to
    lattice units (pass `h_lattice` to override with a pre-scaled value).
    """
    if config.shots != 1:
        raise CommensurabilityError("exact lattice ARL requires shots = 1")
    up, down, unit = bernoulli_lattice_units(config.p, config.q)
    if h_lattice is None:
        h_lattice = math.ceil(config.h / unit - 1e-9)
    return arl_lattice(theta, up, down, h_lattice, start=0)


ScoreSampler = Callable[[np.random.Generator, int], np.ndarray]


def binomial_score_sampler(theta: float, config: CusumConfig) -> ScoreSampler:
    """Sampler of LLR scores when the true per-shot reject probability is theta."""
    if not 0 <= theta <= 1:
        raise ValueError(f"probability {theta} outside [0, 1]")
    lr_r, lr_a, s = config.llr_reject, config.llr_accept, config.shots

    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        x = rng.binomial(s, theta, size=size)
        return x * lr_r + (s - x) * lr_a

    return sample


@dataclass(frozen=True)
class MonteCarloArl:
    mean: float
    stderr: float
    censored_fraction: float
    trials: int
    horizon: int


def arl_monte_carlo(
    sample_scores: ScoreSampler,
    h: float,
    trials: int,
    rng: np.random.Generator,
    *,
    start: float = 0.0,
    horizon: int = 10**6,
) -> MonteCarloArl:
    """Sample mean termination step over independent CUSUM runs.

    Runs still active at `horizon` are censored there (counted at the
    horizon value) and reported via `censored_fraction` rather than
    extrapolated.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    scores = np.full(trials, float(start))
    steps = np.zeros(trials, dtype=np.int64)
    active = scores < h
    step = 0
    while active.any() and step < horizon:
        step += 1
        idx = np.flatnonzero(active)
        z = sample_scores(rng, idx.size)
        s = np.maximum(scores[idx] + z, 0.0)
        scores[idx] = s
        done = s >= h
        steps[idx[done]] = step
        active[idx[done]] = False
    steps[active] = horizon
    mean = float(steps.mean())
    stderr = float(steps.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return MonteCarloArl(mean, stderr, float(active.mean()), trials, horizon)


@dataclass(frozen=True)
class ArlReport:
    """Run lengths under no change (false-alarm time) and from-zero change."""

    arl_false_alarm: float
    arl_detection: float
    method: str  # "exact-lattice" | "monte-carlo"
    stderr_false_alarm: Optional[float] = None
    stderr_detection: Optional[float] = None
    censored_false_alarm: float = 0.0
    censored_detection: float = 0.0

    def as_dict(self) -> dict:
        return {
            "arl_false_alarm": self.arl_false_alarm,
            "arl_detection": self.arl_detection,
            "method": self.method,
            "stderr_false_alarm": self.stderr_false_alarm,
            "stderr_detection": self.stderr_detection,
            "censored_false_alarm": self.censored_false_alarm,
            "censored_detection": self.censored_detection,
        }


def arl_report(
    config: CusumConfig,
    *,
    method: str = "auto",
    rng: Optional[np.random.Generator] = None,
    trials: int = 10**5,
    horizon: int = 10**6,
) -> ArlReport:
    """ARL under the pre-change (theta = p) and post-change (theta = q) laws.

    `method` "auto" prefers the exact lattice solve and falls back to
    Monte Carlo for non-lattice or multi-shot scores.
    """
    if method not in ("auto", "exact", "monte-carlo"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "exact"):
        try:
            return ArlReport(
                arl_false_alarm=arl_bernoulli_exact(config.p, config),
                arl_detection=arl_bernoulli_exact(config.q, config),
                method="exact-lattice",
            )
        except CommensurabilityError:
            if method == "exact":
                raise
    if rng is None:
        raise ValueError("Monte Carlo ARL needs an rng stream")
    pre = arl_monte_carlo(
        binomial_score_sampler(config.p, config), config.h, trials, rng, horizon=horizon
    )
    post = arl_monte_carlo(
        binomial_score_sampler(config.q, config), config.h, trials, rng, horizon=horizon
    )
    return ArlReport(
        arl_false_alarm=pre.mean,
        arl_detection=post.mean,
        method="monte-carlo",
        stderr_false_alarm=pre.stderr,
        stderr_detection=post.stderr,
        censored_false_alarm=pre.censored_fraction,
        censored_detection=post.censored_fraction,
    )
