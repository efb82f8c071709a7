"""Seeded Monte-Carlo execution of a verification protocol against noise.

One trial draws a test state j ~ p_j, a test l ~ p_(l|j), feeds the state
through the noisy channel and samples the local measurement outcomes site by
site (conditional Born sampling); the trial passes when the outcome tuple is
in the test's acceptance set.  A device is accepted when all N trials of an
experiment pass; statistics are aggregated over R independent experiments.

Reproducibility contract: the random stream of trial t is the counter-based
Philox generator keyed by (seed, t), so runs are bit-identical for a given
seed and config regardless of execution order or thread count.  Channels are
drawn i.i.d. across trials.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.random import Generator, Philox

from .channels import (
    NoiseModel,
    QuantumChannel,
    apply_noise,
    average_gate_fidelity,
    choi_of_channel,
    depolarizing_noise,
    entanglement_fidelity,
    no_noise,
    overrotation_noise,
)
from .errors import DimensionMismatch, GateVerifyError, InvariantViolation
from .strategies import VerificationStrategy

_RECORD_DTYPE = np.dtype(
    [
        ("trial", np.int64),
        ("state_index", np.int32),
        ("test_index", np.int32),
        ("outcome", np.int64),  # mixed-radix encoded; -1 for operator sampling
        ("passed", np.bool_),
    ]
)


@dataclass(frozen=True)
class RunConfig:
    """N trials per experiment, R independent experiments, one seed."""

    strategy: VerificationStrategy
    noise: NoiseModel | None
    trials: int
    seed: int
    repetitions: int = 1
    sampling: str = "sequential"  # or "operator": Bernoulli on tr(E rho)

    def __post_init__(self) -> None:
        if self.trials < 1 or self.repetitions < 1:
            raise GateVerifyError("trials and repetitions must be >= 1")
        if self.sampling not in ("sequential", "operator"):
            raise GateVerifyError(f"unknown sampling mode {self.sampling!r}")


@dataclass(frozen=True)
class RunReport:
    """Per-trial records plus exact and empirical statistics."""

    records: np.ndarray
    trials: int
    repetitions: int
    seed: int
    empirical_rate: float
    empirical_stderr: float
    exact_rate: float
    acceptance_frequency: float
    f_e: float
    f_a: float
    rate_consistent: bool
    factor_dims: tuple[int, ...]

    def outcome_tuple(self, row: int) -> tuple[int, ...] | None:
        code = int(self.records["outcome"][row])
        if code < 0:
            return None
        return tuple(int(x) for x in np.unravel_index(code, self.factor_dims))


def exact_pass_probability(strategy: VerificationStrategy, channel: QuantumChannel) -> float:
    """Average passing probability tr(Theta~ chi_Lambda) of a channel.

    Evaluates the process-operator form, its error-frame equivalent
    tr(Theta chi_E), and the direct per-state sum; all three must agree to
    1e-9.
    """
    d = strategy.dim
    if channel.dim != d:
        raise DimensionMismatch("channel and strategy dimensions differ")
    chi_lab = choi_of_channel(channel).matrix.entries
    v_lab = float(np.real(np.vdot(strategy.theta_tilde.entries, chi_lab)))
    u = strategy.gate.matrix.entries
    ui = np.kron(u.conj().T, np.eye(d))
    chi_err = ui @ chi_lab @ ui.conj().T
    v_err = float(np.real(np.vdot(strategy.theta.entries, chi_err)))
    v_direct = 0.0
    for (psi, p), verifier in zip(strategy.ensemble.items(), strategy.verifiers):
        sigma = channel.apply_pure(psi)
        for test, w in verifier.tests:
            v_direct += p * w * float(np.real(np.trace(test.operator.entries @ sigma)))
    if abs(v_lab - v_err) > 1e-9 or abs(v_lab - v_direct) > 1e-9:
        raise InvariantViolation(
            f"passing-probability forms disagree: {v_lab}, {v_err}, {v_direct}"
        )
    return v_lab


def _trial_rng(seed: int, trial: int) -> Generator:
    return Generator(Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, trial]))


def _sample_categorical(rng: Generator, cumulative: np.ndarray) -> int:
    return int(np.searchsorted(cumulative, rng.random(), side="right"))


def _sample_outcome_sequential(
    rng: Generator, joint: np.ndarray, dims: tuple[int, ...]
) -> tuple[int, ...]:
    """Site-by-site conditional sampling from a joint outcome distribution."""
    slice_ = joint
    outcome = []
    for k, dk in enumerate(dims):
        marginal = slice_.reshape(dk, -1).sum(axis=1)
        total = marginal.sum()
        if total <= 0:
            # numerically dead branch; fall back to uniform
            marginal = np.full(dk, 1.0 / dk)
            total = 1.0
        cumulative = np.cumsum(marginal / total)
        o = _sample_categorical(rng, cumulative)
        o = min(o, dk - 1)
        outcome.append(o)
        slice_ = slice_.reshape(dk, -1)[o]
    return tuple(outcome)


def run_trials(cfg: RunConfig) -> RunReport:
    """Simulate R experiments of N trials each; deterministic given the seed."""
    strategy = cfg.strategy
    dims = strategy.gate.factor_dims
    noise = cfg.noise if cfg.noise is not None else no_noise()
    channel = apply_noise(strategy.gate, noise)
    exact = exact_pass_probability(strategy, channel)

    # Per-(state, test) outcome distributions in the measurement bases.
    state_cumulative = np.cumsum(strategy.ensemble.probs)
    per_state: list[dict] = []
    for (psi, _), verifier in zip(strategy.ensemble.items(), strategy.verifiers):
        sigma = channel.apply_pure(psi)
        test_probs = np.array([w for _, w in verifier.tests])
        entries = []
        for test, _ in verifier.tests:
            if test.settings is not None and cfg.sampling == "sequential":
                b = test.settings[0].kets
                for s in test.settings[1:]:
                    b = np.kron(b, s.kets)
                joint = np.clip(np.real(np.diag(b.conj().T @ sigma @ b)), 0.0, None)
                joint = joint.reshape(dims)
                entries.append(("joint", joint, test.accept))
            else:
                p_pass = float(np.clip(np.real(np.trace(test.operator.entries @ sigma)), 0.0, 1.0))
                entries.append(("bernoulli", p_pass, None))
        per_state.append({"tests": entries, "cumulative": np.cumsum(test_probs)})

    total = cfg.trials * cfg.repetitions
    records = np.zeros(total, dtype=_RECORD_DTYPE)
    for t in range(total):
        rng = _trial_rng(cfg.seed, t)
        j = _sample_categorical(rng, state_cumulative)
        j = min(j, len(per_state) - 1)
        state = per_state[j]
        l = _sample_categorical(rng, state["cumulative"])
        l = min(l, len(state["tests"]) - 1)
        kind, payload, accept = state["tests"][l]
        if kind == "joint":
            outcome = _sample_outcome_sequential(rng, payload, dims)
            passed = outcome in accept
            code = int(np.ravel_multi_index(outcome, dims))
        else:
            passed = bool(rng.random() < payload)
            code = -1
        records[t] = (t, j, l, code, passed)

    passed_arr = records["passed"]
    rate = float(passed_arr.mean())
    stderr = float(math.sqrt(max(rate * (1 - rate), 1e-300) / total))
    blocks = passed_arr.reshape(cfg.repetitions, cfg.trials)
    acceptance = float(blocks.all(axis=1).mean())
    gate = strategy.gate
    f_e = entanglement_fidelity(channel, gate)
    f_a = average_gate_fidelity(channel, gate)
    consistent = abs(rate - exact) <= 4 * max(stderr, 1e-12)
    return RunReport(
        records=records,
        trials=cfg.trials,
        repetitions=cfg.repetitions,
        seed=cfg.seed,
        empirical_rate=rate,
        empirical_stderr=stderr,
        exact_rate=exact,
        acceptance_frequency=acceptance,
        f_e=f_e,
        f_a=f_a,
        rate_consistent=consistent,
        factor_dims=dims,
    )


def export_trials_csv(report: RunReport, strategy: VerificationStrategy, path: str) -> None:
    """Trial log: one row per trial with per-site outcome digits and bases."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "state_index", "test_index", "bases", "outcome", "passed"])
        for row in range(len(report.records)):
            rec = report.records[row]
            j, l = int(rec["state_index"]), int(rec["test_index"])
            test, _ = strategy.verifiers[j].tests[l]
            if test.settings is not None:
                bases = "|".join(s.basis_label for s in test.settings)
            else:
                bases = "operator"
            outcome = report.outcome_tuple(row)
            outcome_str = "" if outcome is None else ",".join(str(o) for o in outcome)
            writer.writerow([int(rec["trial"]), j, l, bases, outcome_str, bool(rec["passed"])])


def report_document(report: RunReport) -> dict:
    """JSON-serializable summary (records go to CSV, not JSON)."""
    return {
        "schema": "gateverify/run-report/v1",
        "trials": report.trials,
        "repetitions": report.repetitions,
        "seed": report.seed,
        "empirical_rate": report.empirical_rate,
        "empirical_stderr": report.empirical_stderr,
        "exact_rate": report.exact_rate,
        "acceptance_frequency": report.acceptance_frequency,
        "entanglement_fidelity": report.f_e,
        "average_gate_fidelity": report.f_a,
        "rate_consistent": report.rate_consistent,
    }


# ---------------------------------------------------------------------------
# Noise calibration


def infidelity_calibrated_noise(
    gate,
    eps: float,
    fidelity_kind: str = "entanglement",
    family: str = "depolarizing",
    generator: np.ndarray | None = None,
) -> NoiseModel:
    """Noise model whose composed channel has infidelity exactly eps.

    Depolarizing uses the closed form p = eps d^2/(d^2 - 1); overrotation
    bisects the angle against the dense fidelity.  Raises when eps is out of
    the family's reachable range.
    """
    if fidelity_kind not in ("entanglement", "average"):
        raise GateVerifyError(f"unknown fidelity kind {fidelity_kind!r}")
    d = gate.dim
    eps_e = eps if fidelity_kind == "entanglement" else (d + 1) * eps / d
    if eps_e < 0 or eps_e > 1:
        raise GateVerifyError(f"target infidelity {eps_e} outside [0, 1]")
    if eps_e == 0:
        return no_noise()
    if family == "depolarizing":
        p = eps_e * d**2 / (d**2 - 1)
        if p > 1.0 + 1e-12:
            raise GateVerifyError(
                f"depolarizing noise cannot reach entanglement infidelity {eps_e} at d={d}"
            )
        model = depolarizing_noise(min(p, 1.0))
    elif family == "overrotation":
        if generator is None:
            raise GateVerifyError("overrotation calibration needs a generator")
        theta = _bisect_overrotation_angle(np.asarray(generator, dtype=complex), d, eps_e)
        model = overrotation_noise(generator, theta)
    else:
        raise GateVerifyError(f"unknown noise family {family!r}")
    achieved = entanglement_infidelity_of_model(gate, model)
    if abs(achieved - eps_e) > 1e-9:
        raise InvariantViolation(
            f"calibrated infidelity {achieved} misses target {eps_e}"
        )
    return model


def entanglement_infidelity_of_model(gate, model: NoiseModel) -> float:
    channel = apply_noise(gate, model)
    return 1.0 - entanglement_fidelity(channel, gate)


def _overrotation_infidelity(h: np.ndarray, d: int, theta: float) -> float:
    vals = np.linalg.eigvalsh(0.5 * (h + h.conj().T))
    return 1.0 - abs(np.exp(-1j * theta * vals).sum() / d) ** 2


def _bisect_overrotation_angle(h: np.ndarray, d: int, eps_e: float) -> float:
    hi = 1e-3
    for _ in range(64):
        if _overrotation_infidelity(h, d, hi) >= eps_e:
            break
        hi *= 2.0
        if hi > 1e4:
            raise GateVerifyError("overrotation family cannot reach the target infidelity")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _overrotation_infidelity(h, d, mid) < eps_e:
            lo = mid
        else:
            hi = mid
    return hi
