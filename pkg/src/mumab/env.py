"""Stochastic channel environment with the zero-reward collision rule."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .matching import Matching, MeanMatrix

DISTRIBUTIONS = ("point", "uniform", "truncnorm", "bernoulli")
_BUFFER_STEPS = 2048


class ZeroAtomError(ValueError):
    """The reward distribution can return exactly 0 without a collision."""


@dataclass(frozen=True)
class ChannelModel:
    """True means plus the reward law drawn around them.

    ``point`` always pays the mean; ``uniform`` is uniform on
    [mean - width, mean + width]; ``truncnorm`` is a normal with scale
    ``sigma`` truncated symmetrically to the same interval; ``bernoulli`` pays
    0 or 1 and is only accepted with ``allow_zero_atom``.
    """

    matrix: MeanMatrix
    distribution: str = "point"
    width: float = 0.0
    sigma: float = 1.0
    allow_zero_atom: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        lows = []
        for row in self.matrix.values:
            for mu in row:
                if self.distribution == "point":
                    lows.append(mu)
                elif self.distribution in ("uniform", "truncnorm"):
                    if mu + self.width > 1.0:
                        raise ValueError(f"support of mean {mu} with width {self.width} exceeds 1")
                    lows.append(mu - self.width)
        if self.distribution in ("uniform", "truncnorm") and self.width < 0:
            raise ValueError("width must be non-negative")
        if self.distribution == "truncnorm" and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        zero_atom = self.distribution == "bernoulli" or any(lo <= 0.0 for lo in lows)
        if zero_atom:
            if not self.allow_zero_atom:
                raise ZeroAtomError(
                    f"{self.distribution} rewards can be exactly 0 without a collision; "
                    "set allow_zero_atom to run anyway"
                )
            warnings.warn(
                "zero-atom rewards: collisions can no longer be told apart from zero "
                "payouts, so the protocol's guarantees do not hold",
                stacklevel=2,
            )

    @property
    def k(self) -> int:
        return self.matrix.k

    @property
    def m(self) -> int:
        return self.matrix.m


@dataclass
class StepOutcome:
    rewards: list[float]
    collided: list[bool]
    occupancy: list[int] = field(repr=False)

    @property
    def collisions(self) -> int:
        return sum(self.collided)


class ChannelEnvironment:
    """One seeded environment, stepped sequentially by a single owner.

    Each step consumes one uniform variate per user in user-index order
    (colliding users discard theirs), so equal seeds give equal traces.
    """

    def __init__(self, model: ChannelModel, seed: int | np.random.SeedSequence):
        self.model = model
        self.k, self.m = model.k, model.m
        self._means = [list(row) for row in model.matrix.values]
        self._rng = np.random.default_rng(seed)
        self._buf: list[list[float]] = []
        self._pos = 0
        kind = model.distribution
        if kind == "truncnorm":
            a = model.width / model.sigma
            self._lo_cdf = float(ndtr(-a))
            self._span_cdf = float(ndtr(a)) - self._lo_cdf
        self._kind = kind

    def _refill(self) -> None:
        u = self._rng.random((_BUFFER_STEPS, self.k))
        kind, w = self._kind, self.model.width
        if kind == "uniform":
            z = w * (2.0 * u - 1.0)
        elif kind == "truncnorm":
            if w == 0:
                z = np.zeros_like(u)
            else:
                z = self.model.sigma * ndtri(self._lo_cdf + u * self._span_cdf)
                np.clip(z, -w, w, out=z)
        else:
            z = u
        self._buf = z.tolist()
        self._pos = 0

    def step(self, actions: Sequence[int]) -> StepOutcome:
        m = self.m
        if len(actions) != self.k:
            raise ValueError(f"expected {self.k} actions, got {len(actions)}")
        occupancy = [0] * (m + 1)
        for a in actions:
            if not 1 <= a <= m:
                raise ValueError(f"action {a} outside 1..{m}")
            occupancy[a] += 1
        if self._pos >= len(self._buf):
            self._refill()
        noise = self._buf[self._pos]
        self._pos += 1
        kind = self._kind
        rewards = []
        collided = []
        for j, a in enumerate(actions):
            if occupancy[a] > 1:
                rewards.append(0.0)
                collided.append(True)
                continue
            mu = self._means[j][a - 1]
            if kind == "point":
                r = mu
            elif kind == "bernoulli":
                r = 1.0 if noise[j] < mu else 0.0
            else:
                r = mu + noise[j]
            rewards.append(r)
            collided.append(False)
        return StepOutcome(rewards, collided, occupancy[1:])

    def expected_system_reward(self, matching: Matching) -> float:
        if len(set(matching)) != len(matching):
            raise ValueError(f"matching {matching} is not injective")
        return float(self.model.matrix.system_reward(matching))
