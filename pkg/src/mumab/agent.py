"""Per-user protocol: fixing, verification, round-robin exploration,
collision-coded estimate exchange, tie-break and exploitation.

An :class:`Agent` only ever sees its own actions and rewards. The policy is a
generator that yields a channel and is sent back the reward for it; every
phase is its own sub-generator so tests can drive phases in isolation.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Generator, Iterator

from .matching import (
    EmptyAfterFilter,
    Matching,
    QuantizedMatrix,
    canonical_choice,
    encode_value,
    filter_by_pin,
    optimal_set_from_quantized,
    required_rounds,
)

Program = Generator[int, float, object]


class Phase(str, Enum):
    FIXING = "fixing"
    VERIFY = "verify"
    EXPLORE = "explore"
    MATCH_COMM = "match_comm"
    TIEBREAK = "tiebreak"
    EXPLOIT = "exploit"
    DEGRADED = "degraded_random"


@dataclass(frozen=True)
class ProtocolParams:
    k: int
    m: int
    delta: float
    t_fix: int
    gamma: int
    rounds: int
    tiebreak_mode: str = "protocol"

    def __post_init__(self):
        if not 1 <= self.k <= self.m:
            raise ValueError(f"need 1 <= k <= m, got k={self.k}, m={self.m}")
        if self.m < 2:
            raise ValueError("need at least two channels")
        for name in ("t_fix", "gamma", "rounds"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.tiebreak_mode not in ("protocol", "deterministic"):
            raise ValueError(f"unknown tiebreak_mode {self.tiebreak_mode!r}")

    @classmethod
    def from_delta(cls, k: int, m: int, delta: float, tiebreak_mode: str = "protocol",
                   t_fix: int | None = None, gamma: int | None = None,
                   rounds: int | None = None) -> "ProtocolParams":
        """Defaults: t_fix = ceil(m ln 20k), gamma = ceil(1 / (2 delta^2))."""
        return cls(
            k=k, m=m, delta=delta,
            t_fix=t_fix if t_fix is not None else math.ceil(m * math.log(20 * k)),
            gamma=gamma if gamma is not None else math.ceil(1 / (2 * delta * delta)),
            rounds=rounds if rounds is not None else required_rounds(delta, m),
            tiebreak_mode=tiebreak_mode,
        )

    def to_dict(self) -> dict:
        return {
            "k": self.k, "m": self.m, "delta": self.delta, "t_fix": self.t_fix,
            "gamma": self.gamma, "rounds": self.rounds, "tiebreak_mode": self.tiebreak_mode,
        }


def offset_channel(agent_id: int, s: int, m: int) -> int:
    """Channel visited at sub-step ``s`` of the offset scan by the agent with ``agent_id``."""
    return (agent_id - 1 + s) % m + 1


@dataclass
class EpochRecord:
    epoch: int
    fixed_id: int | None = None
    verdict: bool | None = None
    slots: tuple[int, ...] = ()
    quantized: QuantizedMatrix | None = None
    candidates: int = 0
    final: Matching | None = None
    row: int | None = None
    faults: list[str] = field(default_factory=list)


class Agent:
    """One user running the protocol.

    ``act()`` returns the channel for the current step and ``observe(reward)``
    feeds back its reward. ``events`` collects (epoch, kind, payload) tuples.
    """

    def __init__(self, params: ProtocolParams, rng: random.Random | int | None = None,
                 program: Program | None = None):
        self.params = params
        self.rng = rng if isinstance(rng, random.Random) else random.Random(rng)
        self.phase: Phase | None = None
        self.stage = 1
        self.epoch = 0
        self.id: int | None = None
        self.all_fixed_since: int | None = None
        self.sums = [0.0] * (params.m + 1)
        self.counts = [0] * (params.m + 1)
        self.slots: tuple[int, ...] = ()
        self.quantized: QuantizedMatrix | None = None
        self.candidates: list[Matching] = []
        self.final: Matching | None = None
        self.row: int | None = None
        self.records: list[EpochRecord] = []
        self.events: list[tuple[int, str, object]] = []
        self.result = None
        self.done = False
        self._action = 0
        self.start(program if program is not None else self.run())

    # -- driving ------------------------------------------------------------

    def start(self, program: Program) -> None:
        """Replace the running program and advance it to its first action."""
        self._gen = program
        self.done = False
        try:
            self._action = next(program)
        except StopIteration as stop:
            self._finish(stop.value)

    def act(self) -> int:
        if self.done:
            raise RuntimeError("program finished; nothing to act on")
        return self._action

    def observe(self, reward: float) -> None:
        try:
            self._action = self._gen.send(reward)
        except StopIteration as stop:
            self._finish(stop.value)

    def _finish(self, value) -> None:
        self.done = True
        self.result = value

    def _emit(self, kind: str, payload=None) -> None:
        self.events.append((self.epoch, kind, payload))

    def _fault(self, msg: str) -> None:
        self._emit("fault", msg)
        if self.records:
            self.records[-1].faults.append(msg)

    @property
    def estimates(self) -> list[float]:
        """Current sample means for channels 1..m (0 where never sampled)."""
        return [self.sums[c] / self.counts[c] if self.counts[c] else 0.0
                for c in range(1, self.params.m + 1)]

    # -- full policy --------------------------------------------------------

    def run(self) -> Iterator[int]:
        p = self.params
        while True:
            self.epoch += 1
            ell = self.epoch
            self.records.append(EpochRecord(ell))
            if self.all_fixed_since is None:
                yield from self.fixing()
                if not (yield from self.verify()):
                    yield from self.degraded(p.gamma * p.m, 2 ** ell)
                    continue
                self.all_fixed_since = ell
                self._emit("all_fixed", ell)
            yield from self.explore()
            yield from self.match_comm()
            yield from self.tiebreak()
            yield from self.exploit(2 ** ell)

    # -- phases -------------------------------------------------------------

    def fixing(self) -> Iterator[int]:
        self.phase, self.stage = Phase.FIXING, 1
        m = self.params.m
        self.id = None
        randrange = self.rng.randrange
        for _ in range(self.params.t_fix):
            if self.id is not None:
                yield self.id
                continue
            ch = randrange(m) + 1
            reward = yield ch
            if reward > 0:
                self.id = ch
                self._emit("fixed", ch)
        if self.records:
            self.records[-1].fixed_id = self.id

    def verify(self) -> Iterator[int]:
        """Unfixed agents park on channel 1; fixed agents offset-scan past it once."""
        self.phase, self.stage = Phase.VERIFY, 1
        m = self.params.m
        visit_ok = False
        for s in range(m):
            if self.id is None:
                yield 1
                continue
            ch = offset_channel(self.id, s, m)
            reward = yield ch
            if ch == 1:
                visit_ok = reward > 0
        verdict = self.id is not None and visit_ok
        self._emit("verdict", verdict)
        if self.records:
            self.records[-1].verdict = verdict
        if not verdict:
            self.id = None
        return verdict

    def degraded(self, explore_steps: int, exploit_steps: int) -> Iterator[int]:
        self.phase, self.stage = Phase.DEGRADED, 1
        m = self.params.m
        randrange = self.rng.randrange
        for _ in range(explore_steps):
            yield randrange(m) + 1
        self.stage = 3
        for _ in range(exploit_steps):
            yield randrange(m) + 1

    def explore(self) -> Iterator[int]:
        self.phase, self.stage = Phase.EXPLORE, 1
        m, gamma = self.params.m, self.params.gamma
        sums, counts = self.sums, self.counts
        for b in range(m):
            ch = offset_channel(self.id, b, m)
            for _ in range(gamma):
                reward = yield ch
                sums[ch] += reward
                counts[ch] += 1

    def _scan(self) -> Iterator[int]:
        """One m-step offset scan; returns the channels that paid zero."""
        m, me = self.params.m, self.id
        zeros = []
        for s in range(m):
            ch = offset_channel(me, s, m)
            reward = yield ch
            if reward == 0:
                zeros.append(ch)
        return zeros

    def _park(self, ch: int) -> Iterator[int]:
        for _ in range(self.params.m):
            yield ch

    def match_comm(self) -> Iterator[int]:
        """Exchange quantized estimates slot by slot.

        Each ID slot opens with a presence probe (the owner parks on its own
        ID channel). For a present slot the owner then parks on digit h_r of
        each of its m estimates, one m-step window per digit, while every other
        agent offset-scans and reads the digit off the channel where it
        collided.
        """
        self.phase, self.stage = Phase.MATCH_COMM, 2
        p = self.params
        m, rounds, me = p.m, p.rounds, self.id
        own = [encode_value(min(max(v, 0.0), 1.0), m, rounds) for v in self.estimates]
        slots = []
        rows = []
        for slot in range(1, m + 1):
            if slot == me:
                yield from self._park(slot)
                present = True
            else:
                zeros = yield from self._scan()
                present = zeros == [slot]
                if zeros and not present:
                    self._fault(f"presence probe of slot {slot} saw zeros on {zeros}")
            if not present:
                continue
            slots.append(slot)
            row = []
            for c in range(m):
                digits = []
                for r in range(rounds):
                    if slot == me:
                        h = own[c][r]
                        yield from self._park(h)
                    else:
                        zeros = yield from self._scan()
                        if len(zeros) != 1:
                            self._fault(f"slot {slot} channel {c + 1} round {r + 1}: zeros on {zeros}")
                        h = zeros[0] if zeros else 1
                    digits.append(h)
                row.append(tuple(digits))
            rows.append(tuple(row))
        if len(slots) != p.k:
            self._fault(f"found {len(slots)} present slots, expected {p.k}")
        self.slots = tuple(slots)
        self.row = slots.index(me) + 1 if me in slots else None
        self.quantized = QuantizedMatrix(m, rounds, tuple(rows)) if rows else None
        self._emit("quantized", self.quantized)
        if self.records:
            rec = self.records[-1]
            rec.slots, rec.quantized, rec.row = self.slots, self.quantized, self.row
        return self.quantized

    def tiebreak(self) -> Iterator[int]:
        """Pin rows one leader at a time until a single optimal matching remains."""
        self.phase, self.stage = Phase.TIEBREAK, 2
        if self.quantized is None or self.row is None:
            self._fault("no usable quantized matrix; keeping previous matching")
            self.candidates = [self.final] if self.final else []
            return self.final
        cands = list(optimal_set_from_quantized(self.quantized))
        if self.records:
            self.records[-1].candidates = len(cands)
        if self.params.tiebreak_mode == "protocol":
            for row in range(1, len(self.slots) + 1):
                if len(cands) == 1:
                    break
                self.candidates = cands
                if row == self.row:
                    pinned = canonical_choice(cands)[row - 1]
                    yield from self._park(pinned)
                else:
                    zeros = yield from self._scan()
                    if len(zeros) != 1:
                        self._fault(f"tie-break row {row}: zeros on {zeros}")
                    pinned = zeros[0] if zeros else canonical_choice(cands)[row - 1]
                try:
                    cands = filter_by_pin(cands, row, pinned)
                except EmptyAfterFilter as err:
                    self._fault(str(err))
        self.candidates = cands
        self.final = canonical_choice(cands)
        self._emit("final", self.final)
        if self.records:
            self.records[-1].final = self.final
        return self.final

    def exploit(self, steps: int) -> Iterator[int]:
        self.phase, self.stage = Phase.EXPLOIT, 3
        ch = self.final[self.row - 1] if self.final and self.row else 1
        for _ in range(steps):
            yield ch
