"""Exact matching kernel: digit codec, gap oracle and tie-break helpers.

All set computations run in integer arithmetic so that every agent holding the
same digits derives the same optimal set in the same order.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from math import lcm
from typing import Sequence

import numpy as np

Matching = tuple[int, ...]
"""Channel (1-based) for each matrix row, rows ordered by ascending ID."""

MAX_CHANNELS = 16


class DegenerateMatrix(ValueError):
    """Every matching has the same system reward, so the gap is undefined."""


class EnumerationLimit(ValueError):
    pass


class EmptyAfterFilter(RuntimeError):
    """A pin removed every candidate: the agents are out of sync."""


def exact(x) -> Fraction:
    """Exact rational for a mean given as a decimal literal or float.

    Floats are read through their shortest repr, so ``0.1`` is 1/10 and
    user-written ties such as ``0.9 + 0.8 == 0.8 + 0.9`` stay ties.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class MeanMatrix:
    values: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(float(v) for v in row) for row in self.values)
        object.__setattr__(self, "values", rows)
        if not rows or not rows[0]:
            raise ValueError("mean matrix must be non-empty")
        m = len(rows[0])
        if any(len(r) != m for r in rows):
            raise ValueError("mean matrix rows must have equal length")
        if len(rows) > m:
            raise ValueError(f"need k <= m, got k={len(rows)}, m={m}")
        for row in rows:
            for v in row:
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"mean {v} outside [0, 1]")

    @classmethod
    def from_flat(cls, k: int, m: int, flat: Sequence[float]) -> "MeanMatrix":
        if len(flat) != k * m:
            raise ValueError(f"expected {k * m} values, got {len(flat)}")
        return cls(tuple(tuple(flat[j * m:(j + 1) * m]) for j in range(k)))

    @property
    def k(self) -> int:
        return len(self.values)

    @property
    def m(self) -> int:
        return len(self.values[0])

    @cached_property
    def scaled(self) -> tuple[tuple[tuple[int, ...], ...], int]:
        """(integer table, denominator) with table[j][c] / denominator == mean exactly."""
        fracs = [[exact(v) for v in row] for row in self.values]
        den = lcm(*(f.denominator for row in fracs for f in row))
        table = tuple(tuple(int(f * den) for f in row) for row in fracs)
        return table, den

    def system_reward(self, matching: Matching) -> Fraction:
        table, den = self.scaled
        return Fraction(sum(table[j][c - 1] for j, c in enumerate(matching)), den)


@dataclass(frozen=True)
class GapResult:
    j1: float
    j2: float
    delta: float
    optimal_set: tuple[Matching, ...]
    j1_exact: Fraction
    j2_exact: Fraction
    delta_exact: Fraction

    def to_dict(self) -> dict:
        return {
            "j1": self.j1,
            "j2": self.j2,
            "delta": self.delta,
            "optimal_set": [list(a) for a in self.optimal_set],
        }


# --- codec -----------------------------------------------------------------

def _check_radix_rounds(radix: int, rounds: int) -> None:
    if int(radix) != radix or radix < 2:
        raise ValueError(f"radix must be an integer >= 2, got {radix}")
    if int(rounds) != rounds or rounds < 1:
        raise ValueError(f"rounds must be an integer >= 1, got {rounds}")


def encode_value(x: float, radix: int, rounds: int) -> tuple[int, ...]:
    """Base-``radix`` digits h_1..h_R of x, each in 1..radix.

    h_r = ceil(radix^r * (x - sum_{n<r} (h_n - 1) / radix^n)), clamped into
    [1, radix]; the clamp only bites when the residual is exactly zero.
    """
    if radix.__class__ is not int or radix < 2 or rounds.__class__ is not int or rounds < 1:
        _check_radix_rounds(radix, rounds)
    if not 0 <= x <= 1:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    p, q = x.as_integer_ratio() if isinstance(x, (int, float)) else Fraction(x).as_integer_ratio()
    digits = []
    acc = 0  # sum_{n<r} (h_n - 1) * radix^(r-1-n)
    scale = 1  # radix^r
    for _ in range(rounds):
        scale *= radix
        h = -((q * radix * acc - p * scale) // q)
        if h < 1:
            h = 1
        elif h > radix:
            h = radix
        digits.append(h)
        acc = acc * radix + h - 1
    return tuple(digits)


def decode_numerator(digits: Sequence[int], radix: int) -> int:
    """Numerator of the decoded value over the denominator 2 * radix^R."""
    if not digits:
        raise ValueError("digit vector must be non-empty")
    if radix.__class__ is not int or radix < 2:
        _check_radix_rounds(radix, len(digits))
    num = 0
    for h in digits:
        if not 1 <= h <= radix:
            raise ValueError(f"digit {h} outside 1..{radix}")
        num = num * radix + h - 1
    # sum_{n<R} (h_n-1)/M^n + (2h_R-1)/(2M^R) == (2 * num + 1) / (2 M^R)
    return 2 * num + 1


def decode_value(digits: Sequence[int], radix: int) -> float:
    return decode_numerator(digits, radix) / (2 * radix ** len(digits))


_LOW26 = (1 << 26) - 1


def _ceil_scaled(xs: np.ndarray, scale: int) -> np.ndarray:
    """Exact ceil(x * scale) for float64 x in [0, 1] and integer scale < 2**35.

    x = mant * 2**(e - 53) with a 53-bit integer mantissa, which is split in
    26-bit halves so every product stays inside int64.
    """
    frac, exp = np.frexp(xs)
    mant = (frac * 2.0 ** 53).astype(np.int64)
    shift = 27 - exp.astype(np.int64)  # total shift 53 - e, minus the 26 folded in below
    hi_part = (mant >> 26) * scale
    lo_part = (mant & _LOW26) * scale
    carry = hi_part + (lo_part >> 26)
    lo_bits = lo_part & _LOW26
    big = shift > 62
    j = np.minimum(shift, 62)
    floor = np.where(big, 0, carry >> j)
    rem = np.where(big, carry != 0, (carry & ((np.int64(1) << j) - 1)) != 0) | (lo_bits != 0)
    return floor + rem


def encode_array(xs, radix: int, rounds: int) -> np.ndarray:
    """Vectorised :func:`encode_value`: an (n, rounds) int array of digits."""
    _check_radix_rounds(radix, rounds)
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size and (np.any(xs < 0) or np.any(xs > 1) or np.any(np.isnan(xs))):
        raise ValueError("values must lie in [0, 1]")
    scale = radix ** rounds
    if scale >= 2 ** 35:
        return np.array([encode_value(float(x), radix, rounds) for x in xs.ravel()], dtype=object)
    # digits of ceil(x M^R) - 1 in base M reproduce the per-round recursion
    n = np.maximum(_ceil_scaled(xs.ravel(), scale), 1) - 1
    out = np.empty((n.size, rounds), dtype=np.int64)
    for r in range(rounds - 1, -1, -1):
        n, d = np.divmod(n, radix)
        out[:, r] = d + 1
    return out


def decode_array(digits: np.ndarray, radix: int) -> np.ndarray:
    """Numerators over 2 * radix^R for an (n, R) digit array."""
    digits = np.asarray(digits, dtype=np.int64)
    if np.any(digits < 1) or np.any(digits > radix):
        raise ValueError(f"digits must lie in 1..{radix}")
    num = np.zeros(digits.shape[0], dtype=np.int64)
    for r in range(digits.shape[1]):
        num = num * radix + digits[:, r] - 1
    return 2 * num + 1


def required_rounds(delta: float, radix: int) -> int:
    """Smallest R with radix^R >= 1/delta, i.e. ceil(log(1/delta) / log(radix))."""
    if int(radix) != radix or radix < 2:
        raise ValueError(f"radix must be an integer >= 2, got {radix}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    d = Fraction(delta)
    rounds = 1
    while radix ** rounds * d < 1:
        rounds += 1
    return rounds


@dataclass(frozen=True)
class QuantizedMatrix:
    """Digits received for every (row, channel); rows follow ascending ID."""

    radix: int
    rounds: int
    digits: tuple[tuple[tuple[int, ...], ...], ...]

    @property
    def k(self) -> int:
        return len(self.digits)

    @property
    def m(self) -> int:
        return len(self.digits[0])

    @classmethod
    def from_values(cls, values, radix: int, rounds: int) -> "QuantizedMatrix":
        rows = tuple(tuple(encode_value(float(v), radix, rounds) for v in row) for row in values)
        return cls(radix, rounds, rows)

    def numerators(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(decode_numerator(d, self.radix) for d in row) for row in self.digits)

    @property
    def denominator(self) -> int:
        return 2 * self.radix ** self.rounds

    def decoded(self) -> list[list[float]]:
        den = self.denominator
        return [[n / den for n in row] for row in self.numerators()]


# --- exact assignment over channel subsets ---------------------------------

def _check_size(k: int, m: int, max_channels: int) -> None:
    if k > m:
        raise ValueError(f"need k <= m, got k={k}, m={m}")
    if m > max_channels:
        raise EnumerationLimit(f"m={m} exceeds the enumeration cap of {max_channels} channels")


def _best_completion(table: Sequence[Sequence[int]]):
    """best(row, mask): max value of rows row.. using channels not in mask."""
    k, m = len(table), len(table[0])

    @lru_cache(maxsize=None)
    def best(row: int, mask: int) -> int:
        if row == k:
            return 0
        t = table[row]
        out = None
        for c in range(m):
            bit = 1 << c
            if not mask & bit:
                v = t[c] + best(row + 1, mask | bit)
                if out is None or v > out:
                    out = v
        return out

    return best


def _all_optimal(table: Sequence[Sequence[int]], best) -> list[Matching]:
    k, m = len(table), len(table[0])
    out: list[Matching] = []
    prefix: list[int] = []

    def walk(row: int, mask: int, target: int) -> None:
        if row == k:
            out.append(tuple(prefix))
            return
        t = table[row]
        for c in range(m):
            bit = 1 << c
            if not mask & bit and t[c] + best(row + 1, mask | bit) == target:
                prefix.append(c + 1)
                walk(row + 1, mask | bit, target - t[c])
                prefix.pop()

    walk(0, 0, best(0, 0))
    return out


def _top_two(table: Sequence[Sequence[int]]) -> tuple[int, int | None]:
    """Largest and second-largest distinct system rewards over all matchings."""
    k, m = len(table), len(table[0])

    @lru_cache(maxsize=None)
    def top(row: int, mask: int) -> tuple[int, ...]:
        if row == k:
            return (0,)
        t = table[row]
        first = second = None
        for c in range(m):
            bit = 1 << c
            if mask & bit:
                continue
            for v in top(row + 1, mask | bit):
                v += t[c]
                if first is None or v > first:
                    first, second = v, first
                elif v != first and (second is None or v > second):
                    second = v
        return (first,) if second is None else (first, second)

    res = top(0, 0)
    return res[0], (res[1] if len(res) > 1 else None)


def optimal_matchings(table: Sequence[Sequence[int]], max_channels: int = MAX_CHANNELS) -> list[Matching]:
    """Every matching maximising the integer table's system reward, lexicographic order."""
    _check_size(len(table), len(table[0]), max_channels)
    return _all_optimal(table, _best_completion(table))


def gap_oracle(matrix: MeanMatrix, max_channels: int = MAX_CHANNELS) -> GapResult:
    table, den = matrix.scaled
    _check_size(matrix.k, matrix.m, max_channels)
    j1, j2 = _top_two(table)
    if j2 is None:
        raise DegenerateMatrix("all matchings have the same system reward; the gap is undefined")
    best = _best_completion(table)
    assert best(0, 0) == j1
    opt = tuple(_all_optimal(table, best))
    j1_ex, j2_ex = Fraction(j1, den), Fraction(j2, den)
    delta = (j1_ex - j2_ex) / (2 * matrix.m)
    return GapResult(
        j1=float(j1_ex), j2=float(j2_ex), delta=float(delta),
        optimal_set=opt, j1_exact=j1_ex, j2_exact=j2_ex, delta_exact=delta,
    )


@lru_cache(maxsize=256)
def optimal_set_from_quantized(q: QuantizedMatrix, max_channels: int = MAX_CHANNELS) -> tuple[Matching, ...]:
    return tuple(optimal_matchings(q.numerators(), max_channels))


def filter_by_pin(candidates: Sequence[Matching], id_slot: int, channel: int) -> list[Matching]:
    """Keep the candidates that give ``channel`` to row ``id_slot`` (1-based)."""
    kept = [a for a in candidates if a[id_slot - 1] == channel]
    if not kept:
        raise EmptyAfterFilter(f"no candidate assigns channel {channel} to slot {id_slot}")
    return kept


def canonical_choice(candidates: Sequence[Matching]) -> Matching:
    if not candidates:
        raise ValueError("empty candidate set")
    return min(candidates)
