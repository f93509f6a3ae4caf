"""Full Hamiltonian certification: parameter planning, sampling rounds,
and the terminal decision rule.

A round prepares a random stabilizer product state, evolves it for time
t = c/M under the lab Hamiltonian (black-box access), computes the
truncated-series hypothesis state under the target Hamiltonian, and runs
the adaptive certification measurement for a configured number of shots.
The verdict aggregates reject counts across N rounds, either by
likelihood ratio test or by thresholding the reject fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import dtmeas, qstate
from .pauli import SparseHamiltonian

#: Evolution access to the device under test.
EvolveFn = Callable[[qstate.StateVector, float], qstate.StateVector]


@dataclass(frozen=True)
class ProtocolPlan:
    """All protocol constants for one certification or monitoring session.

    t = c/M is the per-round evolution time; l the series truncation
    order; xi the infidelity threshold separating the hypotheses; N the
    round count; shots the number of measurement repetitions per prepared
    state.
    """

    n: int
    norm_bound: float
    epsilon: float
    delta: float
    c: float
    t: float
    taylor_order: int
    xi: float
    kappa: float
    rounds: int
    shots: int = 1

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise ValueError(f"need 0 < c < 1, got c={self.c}")
        if abs(self.t * self.norm_bound - self.c) > 1e-12 * max(1.0, self.c):
            raise ValueError("t*M must equal c")
        if not 0 < self.xi < 1:
            raise ValueError(f"infidelity threshold xi={self.xi} outside (0, 1)")
        if self.c ** (self.taylor_order + 1) >= self.truncation_target:
            raise ValueError(
                f"taylor order {self.taylor_order} misses the truncation target"
            )
        if self.rounds < 1 or self.shots < 1:
            raise ValueError("rounds and shots must be positive")

    @property
    def truncation_target(self) -> float:
        """(tM)^(l+1) must stay below t^2 eps^2 / (2n)."""
        return self.t**2 * self.epsilon**2 / (2 * self.n)

    @property
    def p_null(self) -> float:
        """Pre-change per-shot reject probability xi/(2n)."""
        return self.xi / (2 * self.n)

    @property
    def q_alt(self) -> float:
        """Post-change per-shot reject probability xi/n."""
        return self.xi / self.n

    @property
    def total_evolution_time_per_step(self) -> float:
        return self.t * self.shots


def plan_parameters(
    n: int,
    norm_bound: float,
    epsilon: float,
    delta: float,
    *,
    c: float = 0.1,
    kappa: float = 0.25,
    round_factor: float = 8.0,
    shots: int = 1,
    taylor_order: int | None = None,
    rounds: int | None = None,
) -> ProtocolPlan:
    """Derive protocol constants from (n, M, epsilon, delta).

    Defaults: c = 0.1 (so t = 0.1/M), xi = kappa*eps^2/M^2 with
    kappa = 1/4, N = ceil(round_factor * n * ln(1/delta) / xi) with
    round_factor = 8, and the smallest truncation order l with
    (tM)^(l+1) < t^2 eps^2/(2n).  Every default is an override-able
    calibration knob; the formulas only pin the scaling.
    """
    if norm_bound <= 0:
        raise ValueError(f"norm bound must be positive, got {norm_bound}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if not 0 < c < 1:
        raise ValueError(f"need 0 < c < 1, got {c}")
    t = c / norm_bound
    xi = kappa * epsilon**2 / norm_bound**2
    if xi >= 1:
        raise ValueError(
            f"epsilon={epsilon} is infeasible: infidelity threshold xi={xi} >= 1"
        )
    target = t**2 * epsilon**2 / (2 * n)
    if taylor_order is None:
        taylor_order = 0
        while c ** (taylor_order + 1) >= target:
            taylor_order += 1
    if rounds is None:
        rounds = math.ceil(round_factor * n * math.log(1 / delta) / xi)
    return ProtocolPlan(
        n=n,
        norm_bound=norm_bound,
        epsilon=epsilon,
        delta=delta,
        c=c,
        t=t,
        taylor_order=taylor_order,
        xi=xi,
        kappa=kappa,
        rounds=rounds,
        shots=shots,
    )


def hamiltonian_evolver(h: SparseHamiltonian) -> EvolveFn:
    """Evolution black box backed by exact dense simulation of `h`."""

    def evolve(psi0: qstate.StateVector, t: float) -> qstate.StateVector:
        return qstate.evolve_exact(h, t, psi0)

    return evolve


def certification_round(
    evolve_lab: EvolveFn,
    h0: SparseHamiltonian,
    plan: ProtocolPlan,
    rng: np.random.Generator,
) -> int:
    """One protocol round; returns the reject count in [0, shots].

    Samples one stabilizer product input, evolves it under the lab
    black box, builds the normalized hypothesis state under `h0`, and
    repeats the certification measurement `plan.shots` times with
    independent pivots and measurement paths.
    """
    _, psi0 = qstate.sample_stabilizer_product(rng, plan.n)
    psi_t = evolve_lab(psi0, plan.t)
    hyp = qstate.taylor_hypothesis(h0, plan.t, psi0, plan.taylor_order).normalized()
    return dtmeas.reject_count(psi_t, hyp, plan.shots, rng)


@dataclass(frozen=True)
class VerdictRecord:
    """Samples and terminal decision of one certification session."""

    samples: tuple[int, ...]
    decision: str  # "Pass" | "Fail"
    log_likelihood: float
    reject_fraction: float


def decide(
    samples: Sequence[int],
    plan: ProtocolPlan,
    mode: str = "LRT",
    *,
    fraction_threshold: float = 1e-4,
) -> VerdictRecord:
    """Terminal decision on the per-round reject counts.

    LRT mode fails when the binomial log-likelihood ratio between the
    far (q = xi/n) and near (p = xi/2n) hypotheses reaches ln(1/delta).
    FRACTION mode fails when the overall reject fraction exceeds
    `fraction_threshold` (the figure-reproduction rule).  The statistic
    is accumulated sequentially in round order so results are bit-stable.
    """
    if len(samples) == 0:
        raise ValueError("cannot decide on an empty sample list")
    s = plan.shots
    if any(not 0 <= x <= s for x in samples):
        raise ValueError("reject counts out of [0, shots]")
    p, q = plan.p_null, plan.q_alt
    lr_reject = math.log(q / p)
    lr_accept = math.log((1 - q) / (1 - p))
    statistic = 0.0
    total = 0
    for x in samples:
        statistic += x * lr_reject + (s - x) * lr_accept
        total += x
    fraction = total / (len(samples) * s)
    if mode == "LRT":
        failed = statistic >= math.log(1 / plan.delta)
    elif mode == "FRACTION":
        failed = fraction > fraction_threshold
    else:
        raise ValueError(f"unknown decision mode {mode!r}")
    return VerdictRecord(
        samples=tuple(int(x) for x in samples),
        decision="Fail" if failed else "Pass",
        log_likelihood=statistic,
        reject_fraction=fraction,
    )


def run_certification(
    evolve_lab: EvolveFn,
    h0: SparseHamiltonian,
    plan: ProtocolPlan,
    rng: np.random.Generator,
    mode: str = "LRT",
    *,
    fraction_threshold: float = 1e-4,
) -> VerdictRecord:
    """N rounds plus the terminal decision."""
    samples = [
        certification_round(evolve_lab, h0, plan, rng) for _ in range(plan.rounds)
    ]
    return decide(samples, plan, mode, fraction_threshold=fraction_threshold)
