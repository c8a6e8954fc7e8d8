"""Lockstep simulation of agents and environment, regret accounting and sweeps."""
from __future__ import annotations

import logging
import math
import random
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Sequence

import numpy as np

from .agent import Agent, Phase, ProtocolParams
from .env import ChannelEnvironment, ChannelModel, StepOutcome
from .matching import GapResult, gap_oracle

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    model: ChannelModel
    delta: float | str = "oracle"
    tiebreak_mode: str = "protocol"
    t_fix: int | None = None
    gamma: int | None = None
    rounds: int | None = None
    steps: int | None = None
    epochs: int | None = None

    def __post_init__(self):
        if (self.steps is None) == (self.epochs is None):
            raise ValueError("give exactly one of steps or epochs as the horizon")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be positive")
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.delta != "oracle" and not (isinstance(self.delta, (int, float)) and 0 < self.delta < 1):
            raise ValueError(f"delta must be 'oracle' or a number in (0, 1), got {self.delta!r}")

    def oracle(self) -> GapResult:
        return gap_oracle(self.model.matrix)

    def params(self, gap: GapResult | None = None) -> ProtocolParams:
        gap = gap or self.oracle()
        if self.delta == "oracle":
            delta = gap.delta
        else:
            delta = float(self.delta)
            if delta > gap.delta:
                warnings.warn(
                    f"delta={delta} exceeds the true gap {gap.delta}; it is not a lower bound",
                    stacklevel=2,
                )
        return ProtocolParams.from_delta(
            self.model.k, self.model.m, delta, self.tiebreak_mode,
            t_fix=self.t_fix, gamma=self.gamma, rounds=self.rounds,
        )


@dataclass
class RegretTrace:
    epoch: list[int]
    phase: list[str]
    instant: list[float]
    cumulative: list[float]
    collisions: list[int]
    stage_totals: dict[str, float]
    total: float

    def __len__(self) -> int:
        return len(self.epoch)

    def rows(self):
        for i in range(len(self.epoch)):
            yield (i + 1, self.epoch[i], self.phase[i], self.instant[i],
                   self.cumulative[i], self.collisions[i])


@dataclass
class EpochDiagnostics:
    epoch: int
    start: int
    end: int
    complete: bool
    regret: float
    stage_regret: dict[str, float]
    fixing_attempted: bool
    fixing_success: bool | None
    verdict: bool | None
    information_consistent: bool | None
    max_quantized_error: float | None
    agents_agree: bool | None
    matching: list[int] | None
    matching_optimal: bool | None
    exploit_regret: float
    faults: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class DiagnosticStats:
    epochs: list[EpochDiagnostics]
    ell_f: int | None
    fault_count: int
    desync_steps: int
    fixing_attempts: int
    fixing_successes: int

    @property
    def fixing_success_rate(self) -> float | None:
        return self.fixing_successes / self.fixing_attempts if self.fixing_attempts else None

    @property
    def boundaries(self) -> list[tuple[int, int, float]]:
        """(epoch, steps so far, cumulative regret) at the end of each complete epoch."""
        out = []
        cum = 0.0
        for e in self.epochs:
            cum += e.regret
            if e.complete:
                out.append((e.epoch, e.end, cum))
        return out

    def to_dict(self) -> dict:
        return {
            "ell_f": self.ell_f,
            "fault_count": self.fault_count,
            "protocol_fault": self.fault_count > 0 or self.desync_steps > 0,
            "desync_steps": self.desync_steps,
            "fixing_attempts": self.fixing_attempts,
            "fixing_successes": self.fixing_successes,
            "fixing_success_rate": self.fixing_success_rate,
            "epochs": [e.to_dict() for e in self.epochs],
        }


@dataclass
class EpisodeResult:
    seed: int
    params: ProtocolParams
    gap: GapResult
    trace: RegretTrace
    stats: DiagnosticStats
    agents: list[Agent] = field(repr=False, default_factory=list)


def make_agents(params: ProtocolParams, seed: int) -> tuple[list[Agent], np.random.SeedSequence]:
    """Agents with independent streams spawned from ``seed``; also returns the env stream."""
    env_ss, *agent_ss = np.random.SeedSequence(seed).spawn(params.k + 1)
    agents = []
    for ss in agent_ss:
        words = ss.generate_state(2, dtype=np.uint32)
        agents.append(Agent(params, random.Random(int(words[0]) << 32 | int(words[1]))))
    return agents, env_ss


def lockstep(agents: Sequence[Agent], env: ChannelEnvironment,
             max_steps: int | None = None) -> list[tuple[list[int], StepOutcome]]:
    """Step agents running finite programs until all finish; returns the history."""
    history = []
    while not all(a.done for a in agents):
        if any(a.done for a in agents):
            raise RuntimeError("agents finished at different steps: schedule desynchronised")
        if max_steps is not None and len(history) >= max_steps:
            break
        actions = [a.act() for a in agents]
        out = env.step(actions)
        for a, r in zip(agents, out.rewards):
            a.observe(r)
        history.append((actions, out))
    return history


def run_episode(config: RunConfig, seed: int, gap: GapResult | None = None) -> EpisodeResult:
    gap = gap or config.oracle()
    params = config.params(gap)
    matrix = config.model.matrix
    table, den = matrix.scaled
    j1 = int(gap.j1_exact * den)
    agents, env_ss = make_agents(params, seed)
    env = ChannelEnvironment(config.model, env_ss)
    first = agents[0]
    k = params.k
    max_steps = config.steps
    max_epochs = config.epochs

    epochs: list[int] = []
    phases: list[str] = []
    stages: list[int] = []
    inst: list[int] = []
    colls: list[int] = []
    desync = 0
    t = 0
    while True:
        if max_steps is not None and t >= max_steps:
            break
        ell = first.epoch
        if max_epochs is not None and ell > max_epochs:
            break
        phase, stage = first.phase, first.stage
        for a in agents:
            if a.phase is not phase or a.epoch != ell:
                desync += 1
                break
        actions = [a._action for a in agents]
        out = env.step(actions)
        gain = 0
        collided = out.collided
        for j in range(k):
            if not collided[j]:
                gain += table[j][actions[j] - 1]
        rewards = out.rewards
        for j in range(k):
            agents[j].observe(rewards[j])
        epochs.append(ell)
        phases.append(phase.value)
        stages.append(stage)
        inst.append(j1 - gain)
        colls.append(sum(collided))
        t += 1

    trace = _build_trace(epochs, phases, stages, inst, colls, den)
    stats = _diagnostics(agents, matrix, gap, epochs, stages, inst, den, desync)
    if stats.fault_count:
        log.warning("seed %s: %d protocol faults", seed, stats.fault_count)
    return EpisodeResult(seed, params, gap, trace, stats, agents)


def _build_trace(epochs, phases, stages, inst, colls, den) -> RegretTrace:
    cum_exact = list(accumulate(inst))
    stage_int = {"R1": 0, "R2": 0, "R3": 0}
    for s, v in zip(stages, inst):
        stage_int[f"R{s}"] += v
    total = cum_exact[-1] if cum_exact else 0
    assert sum(stage_int.values()) == total
    return RegretTrace(
        epoch=epochs,
        phase=phases,
        instant=[v / den for v in inst],
        cumulative=[v / den for v in cum_exact],
        collisions=colls,
        stage_totals={name: v / den for name, v in stage_int.items()},
        total=total / den,
    )


def _diagnostics(agents, matrix, gap, epochs, stages, inst, den, desync) -> DiagnosticStats:
    table = matrix.scaled[0]
    j1 = int(gap.j1_exact * den)
    k = len(agents)
    spans: dict[int, list[int]] = {}
    for i, e in enumerate(epochs):
        spans.setdefault(e, [i, i])[1] = i
    ell_f = agents[0].all_fixed_since
    diags = []
    faults = sum(1 for a in agents for ev in a.events if ev[1] == "fault")
    attempts = successes = 0
    for ell, (lo, hi) in sorted(spans.items()):
        recs = [a.records[ell - 1] for a in agents]
        stage_int = {"R1": 0, "R2": 0, "R3": 0}
        for i in range(lo, hi + 1):
            stage_int[f"R{stages[i]}"] += inst[i]
        epoch_len = hi - lo + 1
        complete = agents[0].epoch > ell
        attempted = recs[0].verdict is not None
        fix_ok = all(r.fixed_id is not None for r in recs) if attempted else None
        if attempted:
            attempts += 1
            successes += bool(fix_ok)
        quant = [r.quantized for r in recs]
        consistent = max_err = agree = matching = optimal = None
        if quant[0] is not None:
            consistent = all(q == quant[0] for q in quant)
            decoded = quant[0].decoded()
            user_of_row = {r.row: j for j, r in enumerate(recs) if r.row is not None}
            max_err = max(
                abs(decoded[row - 1][c] - matrix.values[j][c])
                for row, j in user_of_row.items()
                for c in range(matrix.m)
            )
        finals = [r.final for r in recs]
        if finals[0] is not None:
            agree = all(f == finals[0] for f in finals)
            if all(r.row is not None for r in recs):
                matching = [r.final[r.row - 1] for r in recs]
                optimal = len(set(matching)) == k and sum(
                    table[j][c - 1] for j, c in enumerate(matching)) == j1
        diags.append(EpochDiagnostics(
            epoch=ell, start=lo + 1, end=hi + 1, complete=complete,
            regret=sum(inst[lo:hi + 1]) / den,
            stage_regret={n: v / den for n, v in stage_int.items()},
            fixing_attempted=attempted, fixing_success=fix_ok,
            verdict=recs[0].verdict, information_consistent=consistent,
            max_quantized_error=max_err, agents_agree=agree,
            matching=matching, matching_optimal=optimal,
            exploit_regret=stage_int["R3"] / den if epoch_len else 0.0,
            faults=sum(len(r.faults) for r in recs),
        ))
    return DiagnosticStats(diags, ell_f, faults, desync, attempts, successes)


# --- theory ------------------------------------------------------------------

def bound_constant() -> float:
    e = math.e
    return e / (2 * e - 3) + 8 * e / ((e - 1) * (e - 2))


def theoretical_bound(params: ProtocolParams, horizon: float) -> float:
    """(M/2D^2 + K M^3 log(1/D)/log M + 4 M^3) log T + C, natural logs."""
    k, m, d = params.k, params.m, params.delta
    slope = m / (2 * d * d) + k * m ** 3 * math.log(1 / d) / math.log(m) + 4 * m ** 3
    return slope * math.log(horizon) + bound_constant()


def affine_fit(x: Sequence[float], y: Sequence[float]) -> dict:
    """Least-squares y = a + b x with the worst relative residual."""
    x_arr, y_arr = np.asarray(x, float), np.asarray(y, float)
    slope, intercept = np.polyfit(x_arr, y_arr, 1)
    fit = intercept + slope * x_arr
    rel = np.abs(y_arr - fit) / np.abs(fit)
    return {"slope": float(slope), "intercept": float(intercept),
            "max_rel_residual": float(rel.max())}


# --- sweeps ------------------------------------------------------------------

@dataclass
class EpisodeSummary:
    """The parts of an episode a sweep keeps."""

    seed: int
    cumulative: list[float]
    boundaries: list[tuple[int, int, float]]
    stats: DiagnosticStats


def _episode_summary(args) -> EpisodeSummary:
    config, seed, gap = args
    res = run_episode(config, seed, gap)
    return EpisodeSummary(seed, res.trace.cumulative, res.stats.boundaries, res.stats)


@dataclass
class SweepResult:
    seeds: list[int]
    params: ProtocolParams
    gap: GapResult
    mean: np.ndarray
    stderr: np.ndarray
    episodes: list[EpisodeSummary]

    @property
    def grid(self) -> np.ndarray:
        return np.arange(1, len(self.mean) + 1)

    def boundary_table(self) -> list[dict]:
        """Per-epoch mean regret and horizon at epoch ends, over seeds completing that epoch."""
        by_epoch: dict[int, list[tuple[int, float]]] = {}
        for ep in self.episodes:
            for ell, t, r in ep.boundaries:
                by_epoch.setdefault(ell, []).append((t, r))
        rows = []
        for ell in sorted(by_epoch):
            pts = by_epoch[ell]
            if len(pts) != len(self.episodes):
                continue
            ts = [p[0] for p in pts]
            rs = [p[1] for p in pts]
            rows.append({
                "epoch": ell,
                "mean_steps": float(np.mean(ts)),
                "min_steps": int(min(ts)),
                "mean_regret": float(np.mean(rs)),
                "max_regret": float(max(rs)),
                "bound_at_min_steps": theoretical_bound(self.params, min(ts)),
            })
        return rows

    def epoch_rates(self) -> list[dict]:
        by_epoch: dict[int, list[EpochDiagnostics]] = {}
        for ep in self.episodes:
            for d in ep.stats.epochs:
                by_epoch.setdefault(d.epoch, []).append(d)
        rows = []
        for ell in sorted(by_epoch):
            ds = by_epoch[ell]
            opt = [d.matching_optimal for d in ds if d.matching_optimal is not None]
            fix = [d.fixing_success for d in ds if d.fixing_success is not None]
            rows.append({
                "epoch": ell,
                "runs": len(ds),
                "optimal_rate": sum(opt) / len(opt) if opt else None,
                "fixing_success_rate": sum(fix) / len(fix) if fix else None,
            })
        return rows

    def fixing_success_rate(self) -> float | None:
        att = sum(ep.stats.fixing_attempts for ep in self.episodes)
        ok = sum(ep.stats.fixing_successes for ep in self.episodes)
        return ok / att if att else None

    def log_shape(self, min_epoch: int = 4) -> dict | None:
        rows = [r for r in self.boundary_table() if r["epoch"] >= min_epoch]
        if len(rows) < 3:
            return None
        by_epoch = affine_fit([r["epoch"] for r in rows], [r["mean_regret"] for r in rows])
        by_log_t = affine_fit([math.log(r["mean_steps"]) for r in rows], [r["mean_regret"] for r in rows])
        return {"min_epoch": min_epoch, "vs_epoch": by_epoch, "vs_log_steps": by_log_t}


def run_sweep(config: RunConfig, seeds: Sequence[int], workers: int = 1) -> SweepResult:
    if not seeds:
        raise ValueError("need at least one seed")
    gap = config.oracle()
    params = config.params(gap)
    jobs = [(config, s, gap) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            episodes = list(pool.map(_episode_summary, jobs))
    else:
        episodes = [_episode_summary(j) for j in jobs]
    n = min(len(ep.cumulative) for ep in episodes)
    curves = np.array([ep.cumulative[:n] for ep in episodes])
    mean = curves.mean(axis=0)
    if len(episodes) > 1:
        stderr = curves.std(axis=0, ddof=1) / math.sqrt(len(episodes))
    else:
        stderr = np.zeros(n)
    return SweepResult(list(seeds), params, gap, mean, stderr, episodes)
