"""Bit strings, frequency vectors, sampling, selection and margin clamping.

Bit strings are ``uint8`` numpy arrays holding 0/1. Selection breaks fitness
ties with one fresh 64-bit key per individual, drawn from the run stream right
after the population has been sampled; ordering by (fitness descending,
key ascending) is then a uniformly random order within each tie class.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import _kernels as K
from .stats import RngStream

BIT = np.uint8


def as_bits(x, n: int | None = None) -> np.ndarray:
    """Validate and convert to a 0/1 ``uint8`` array."""
    a = np.asarray(x)
    if a.ndim != 1:
        raise ValueError("a bit string is one-dimensional")
    if n is not None and a.size != n:
        raise ValueError(f"expected length {n}, got {a.size}")
    if a.size < 1:
        raise ValueError("a bit string has length n >= 1")
    if not np.all((a == 0) | (a == 1)):
        raise ValueError("bits must be 0 or 1")
    return a.astype(BIT)


def parse_bits(text: str) -> np.ndarray:
    """``"10110"`` -> array([1, 0, 1, 1, 0])."""
    text = text.strip()
    if not text or set(text) - {"0", "1"}:
        raise ValueError(f"not a bit string: {text!r}")
    return np.frombuffer(text.encode(), dtype=np.uint8) - ord("0")


def format_bits(x) -> str:
    return "".join("1" if b else "0" for b in np.asarray(x))


def clamp(v, m: float):
    """``max(m, min(1 - m, v))``; works elementwise on arrays."""
    if not 0.0 < m <= 0.5:
        raise ValueError("margin must lie in (0, 1/2]")
    if np.ndim(v) == 0:
        return max(m, min(1.0 - m, float(v)))
    return np.maximum(m, np.minimum(1.0 - m, np.asarray(v, dtype=np.float64)))


@dataclass(frozen=True)
class FrequencyVector:
    """Per-position probability of sampling a 1.

    ``margin=None`` is the borderless mode where frequencies live in [0, 1].
    """

    p: np.ndarray
    margin: float | None = None

    def __post_init__(self):
        p = np.array(self.p, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("frequency vector must be one-dimensional, n >= 1")
        if self.margin is not None:
            if not 0.0 < self.margin <= 0.5:
                raise ValueError("margin must lie in (0, 1/2]")
            lo, hi = self.margin, 1.0 - self.margin
        else:
            lo, hi = 0.0, 1.0
        if np.any(p < lo) or np.any(p > hi):
            raise ValueError(f"frequencies must lie in [{lo}, {hi}]")
        p.flags.writeable = False
        object.__setattr__(self, "p", p)

    @classmethod
    def uniform(cls, n: int, margin: float | None = None) -> FrequencyVector:
        return cls(np.full(n, 0.5), margin)

    @property
    def n(self) -> int:
        return self.p.size

    def __len__(self) -> int:
        return self.p.size

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, FrequencyVector):
            return NotImplemented
        return self.margin == other.margin and np.array_equal(self.p, other.p)

    __hash__ = None


@dataclass
class ScoredPopulation:
    """Multiset of sampled individuals with their (possibly noisy) fitness.

    ``members`` has shape ``(lam, n)``; row ``j`` scored ``fitness[j]``.
    """

    members: np.ndarray
    fitness: list = field(default_factory=list)

    def __post_init__(self):
        self.members = np.asarray(self.members, dtype=BIT)
        if self.members.ndim != 2:
            raise ValueError("members must be a 2-d array")
        if len(self.fitness) != self.members.shape[0]:
            raise ValueError("one fitness value per member")

    def __len__(self) -> int:
        return self.members.shape[0]

    def pairs(self):
        return [(self.members[j], self.fitness[j]) for j in range(len(self))]


def _as_p(p) -> np.ndarray:
    if isinstance(p, FrequencyVector):
        return p.p
    return np.ascontiguousarray(p, dtype=np.float64)


def sample(p, rng: RngStream) -> np.ndarray:
    """One individual; consumes exactly n uniforms, bit i from draw i."""
    pv = _as_p(p)
    out = np.empty(pv.size, dtype=BIT)
    K.sample_into(pv, rng.state, out)
    return out


def sample_population(p, lam: int, rng: RngStream) -> np.ndarray:
    """``lam`` individuals drawn one after another; shape ``(lam, n)``."""
    pv = _as_p(p)
    out = np.empty((lam, pv.size), dtype=BIT)
    K.sample_rows(pv, rng.state, out)
    return out


def selection_order(fitness, keys) -> list[int]:
    """Indices by fitness descending, then key ascending.

    Works on any totally ordered fitness values, including Python ints of
    arbitrary size.
    """
    keys = [int(k) for k in keys]
    return sorted(range(len(keys)), key=lambda j: (-fitness[j], keys[j]))


def tie_keys(lam: int, rng: RngStream) -> np.ndarray:
    return rng.u64_array(lam)


def select_best(pop: ScoredPopulation, mu: int, rng: RngStream) -> list:
    """The ``mu`` best ``(bits, fitness)`` pairs, best first.

    Draws ``len(pop)`` keys from ``rng`` to break ties uniformly at random.
    """
    lam = len(pop)
    if not 1 <= mu <= lam:
        raise ValueError(f"need 1 <= mu <= lambda, got mu={mu}, lambda={lam}")
    keys = tie_keys(lam, rng)
    order = selection_order(pop.fitness, keys)
    return [(pop.members[j], pop.fitness[j]) for j in order[:mu]]
