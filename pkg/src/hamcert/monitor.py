"""Hamiltonian changepoint monitoring: certification rounds feeding CUSUM.

A drift scenario materializes a fresh lab Hamiltonian every step (small
random or directed increments, with a window of larger disturbances);
each step runs one multi-shot certification round against it and sends
the reject count to the detector.  Monitoring is strictly online: steps
are consumed in order and no past Hamiltonian is revisited.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import cusum
from .certify import ProtocolPlan, certification_round, hamiltonian_evolver
from .pauli import (
    DimensionError,
    PauliString,
    SparseHamiltonian,
    frobenius_distance,
    pauli_coefficients,
)

_LAWS = ("gue", "fixed-direction")


def gue_perturbation(
    rng: np.random.Generator, n: int, scale: float
) -> SparseHamiltonian:
    """Random traceless Hermitian perturbation, `scale` times a GUE draw.

    Entry convention: off-diagonal real/imaginary parts independent
    N(0, 1/2), diagonal real N(0, 1); the trace is removed and the matrix
    projected onto the Pauli basis.
    """
    dim = 2**n
    offd = rng.normal(scale=np.sqrt(0.5), size=(dim, dim)) + 1j * rng.normal(
        scale=np.sqrt(0.5), size=(dim, dim)
    )
    diag = rng.normal(size=dim)
    mat = np.zeros((dim, dim), dtype=np.complex128)
    upper = np.triu_indices(dim, 1)
    mat[upper] = offd[upper]
    mat = mat + mat.conj().T
    mat[np.diag_indices(dim)] = diag
    mat -= np.trace(mat) / dim * np.eye(dim)
    coeffs = {w: scale * mu for w, mu in pauli_coefficients(mat).items()}
    return SparseHamiltonian.with_exact_norm_bound(n, coeffs, relaxed_coefficients=True)


def unit_frobenius_direction(rng: np.random.Generator, n: int) -> dict[PauliString, float]:
    """GUE direction rescaled to unit normalized-Frobenius norm."""
    raw = gue_perturbation(rng, n, 1.0)
    nrm = np.sqrt(sum(mu * mu for _, mu in raw.terms))
    return {w: mu / nrm for w, mu in raw.terms}


def _add_terms(
    base: dict[PauliString, float], inc: dict[PauliString, float], scale: float = 1.0
) -> dict[PauliString, float]:
    out = dict(base)
    for w, mu in inc.items():
        out[w] = out.get(w, 0.0) + scale * mu
    return out


@dataclass(frozen=True)
class DriftScenario:
    """Drifting-Hamiltonian model around a base operator.

    Increments are GUE draws (law "gue") or a fixed Hermitian direction
    (law "fixed-direction"), scaled by `sigma_large` while the start time
    of a step falls inside [window_start, window_start + window_width)
    and by `sigma_small` outside; times are total-evolution-time units,
    each step advancing t*shots.  With `accumulate` every increment adds
    to the previous Hamiltonian (drift); otherwise each step perturbs the
    base independently (jitter).
    """

    base: SparseHamiltonian
    sigma_small: float
    sigma_large: float
    window_start: float
    window_width: float
    law: str = "gue"
    accumulate: bool = True
    direction: Optional[SparseHamiltonian] = None

    def __post_init__(self):
        if self.law not in _LAWS:
            raise ValueError(f"unknown perturbation law {self.law!r}")
        if self.law == "fixed-direction" and self.direction is None:
            raise ValueError("fixed-direction law needs a direction operator")
        if self.direction is not None and self.direction.n != self.base.n:
            raise DimensionError("direction and base act on different qubit counts")
        if self.sigma_small < 0 or self.sigma_large < 0 or self.window_width < 0:
            raise ValueError("scales and window width must be nonnegative")

    @property
    def n(self) -> int:
        return self.base.n

    def scale_at(self, time_start: float) -> float:
        inside = self.window_start <= time_start < self.window_start + self.window_width
        return self.sigma_large if inside else self.sigma_small

    def increment(
        self, rng: np.random.Generator, scale: float
    ) -> dict[PauliString, float]:
        if scale == 0.0:
            return {}
        if self.law == "gue":
            return dict(gue_perturbation(rng, self.n, scale).terms)
        return {w: scale * mu for w, mu in self.direction.terms}


@dataclass(frozen=True)
class StepTrace:
    step: int
    total_time: float
    reject_count: int
    score_increment: float
    cumulative_score: float
    frobenius_deviation: float

    def csv_row(self) -> str:
        return (
            f"{self.step},{self.total_time!r},{self.reject_count},"
            f"{self.score_increment!r},{self.cumulative_score!r},"
            f"{self.frobenius_deviation!r}"
        )


@dataclass(frozen=True)
class MonitorResult:
    """Outcome of one monitoring session.

    `changepoint_estimate` is the last zero of the cumulative score: the
    change-location MLE when the run terminated, the latest reset
    otherwise.  `censored` distinguishes horizon exhaustion from
    detection.
    """

    steps: int
    total_time: float
    changepoint_estimate: int
    censored: bool
    trace: tuple[StepTrace, ...]


def detect(
    scenario: DriftScenario,
    h0: SparseHamiltonian,
    plan: ProtocolPlan,
    config: cusum.CusumConfig,
    rng: np.random.Generator,
    *,
    horizon: int = 10_000,
) -> MonitorResult:
    """Run the online change detector over a drift scenario.

    Per step: materialize the next lab Hamiltonian, run one certification
    round (plan.shots measurement repetitions), convert the reject count
    to a log-likelihood score, and update CUSUM.  Stops at threshold
    crossing or after `horizon` steps (reported as censored).
    """
    if scenario.n != h0.n or h0.n != plan.n:
        raise DimensionError("scenario, target, and plan qubit counts differ")
    step_time = plan.total_evolution_time_per_step
    current = dict(scenario.base.terms)
    state = cusum.CusumState()
    trace: list[StepTrace] = []
    detected = False
    steps = 0
    while steps < horizon:
        time_start = steps * step_time
        inc = scenario.increment(rng, scenario.scale_at(time_start))
        if scenario.accumulate:
            current = _add_terms(current, inc)
            terms = current
        else:
            terms = _add_terms(dict(scenario.base.terms), inc)
        # declared bound re-validated every step: set it to the exact norm
        h_lab = SparseHamiltonian.with_exact_norm_bound(
            scenario.n, terms, relaxed_coefficients=True
        )
        rejects = certification_round(hamiltonian_evolver(h_lab), h0, plan, rng)
        z = cusum.llr(rejects, config)
        state = cusum.cusum_step(state, z, config.h)
        steps += 1
        trace.append(
            StepTrace(
                step=steps,
                total_time=steps * step_time,
                reject_count=rejects,
                score_increment=z,
                cumulative_score=state.score,
                frobenius_deviation=frobenius_distance(h_lab, h0),
            )
        )
        if state.terminated:
            detected = True
            break
    return MonitorResult(
        steps=steps,
        total_time=steps * step_time,
        changepoint_estimate=state.last_zero,
        censored=not detected,
        trace=tuple(trace),
    )


@dataclass(frozen=True)
class SweepRow:
    deviation_norm: float
    median_steps: float
    lo_steps: float
    hi_steps: float
    censored_fraction: float


def delay_vs_deviation_sweep(
    h0: SparseHamiltonian,
    norm_grid: list[float],
    trials: int,
    plan: ProtocolPlan,
    config: cusum.CusumConfig,
    rng: np.random.Generator,
    *,
    horizon: int = 2000,
) -> list[SweepRow]:
    """Detection-delay statistics versus deviation size.

    For each norm value and trial, draws a fresh unit-Frobenius GUE
    direction, fixes H = H0 + norm * direction for the whole run, and
    records the termination step (horizon for censored runs).  Reports
    the median and the 2.5/97.5 percentiles across trials.
    """
    if not norm_grid:
        raise ValueError("norm grid must be nonempty")
    rows = []
    for norm in norm_grid:
        steps = np.empty(trials)
        censored = 0
        for trial in range(trials):
            sub = rng.spawn(1)[0]
            terms = _add_terms(
                dict(h0.terms), unit_frobenius_direction(sub, h0.n), norm
            )
            fixed = SparseHamiltonian.with_exact_norm_bound(
                h0.n, terms, relaxed_coefficients=True
            )
            scenario = DriftScenario(
                base=fixed,
                sigma_small=0.0,
                sigma_large=0.0,
                window_start=0.0,
                window_width=0.0,
            )
            result = detect(scenario, h0, plan, config, sub, horizon=horizon)
            steps[trial] = result.steps
            censored += result.censored
        lo, med, hi = np.percentile(steps, [2.5, 50.0, 97.5])
        rows.append(
            SweepRow(
                deviation_norm=float(norm),
                median_steps=float(med),
                lo_steps=float(lo),
                hi_steps=float(hi),
                censored_fraction=censored / trials,
            )
        )
    return rows
