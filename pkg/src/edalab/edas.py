"""The n-Bernoulli-lambda-EDA framework and its five instances.

Every algorithm keeps a frequency vector ``p`` starting at ``1/2`` and repeats
one generation: sample ``lam`` offspring from ``p``, rank them, compute the
new ``p`` with a pure update scheme, and finally clamp into ``[m, 1 - m]``
unless the run is borderless.

Draw order within a generation, all from the run stream:

1. ``lam * n`` uniforms, offspring by offspring, bit by bit;
2. ``lam`` 64-bit tie-break keys (see :func:`edalab.core.select_best`).

Noise draws come from the fitness function's own stream, so they never shift
the sampling draws.

This module is the pure-Python reference; :mod:`edalab.runner` uses compiled
loops that reproduce it bit for bit.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import _kernels as K
from .core import BIT, ScoredPopulation, sample, selection_order, tie_keys
from .stats import RngStream

ALGORITHMS = ("umda", "pbil", "mmas_ib", "cga", "sig_cga")
ALGO_CODES = {"umda": K.UMDA, "pbil": K.PBIL, "mmas_ib": K.MMAS_IB, "cga": K.CGA}

# fields each algorithm needs (besides n) and may not receive
_REQUIRED = {
    "umda": ("lam", "mu"),
    "pbil": ("lam", "mu", "rho"),
    "mmas_ib": ("lam", "rho"),
    "cga": ("K",),
    "sig_cga": ("epsilon",),
}
_OPTIONAL = ("lam", "mu", "rho", "K", "epsilon")

# sig-cGA default history length is 2**ceil(log2(SIG_CAP_FACTOR * eps^2 * n ln n))
SIG_CAP_FACTOR = 8.0
MIN_HISTORY_CAP = 64

_SNAP = K.SNAP_TOL


class ConfigError(ValueError):
    """A configuration that can never run."""


@dataclass(frozen=True)
class EdaConfig:
    """Algorithm and parameters.

    Attributes:
        algorithm: one of ``umda``, ``pbil``, ``mmas_ib``, ``cga``, ``sig_cga``.
        n: problem size.
        lam: offspring per generation (fixed to 2 for the two cGAs).
        mu: selected offspring (fixed to 1 for MMAS_ib).
        rho: learning rate of PBIL and MMAS_ib, in (0, 1].
        K: cGA population size, real >= 1.
        epsilon: sig-cGA significance parameter, > 0.
        margin: border ``m`` in (0, 1/2]; ``None`` means ``1/n``.
        borderless: disable the margin clamp entirely.
        history_cap: sig-cGA history length (power of two); ``None`` picks a
            default from ``epsilon`` and ``n``.
    """

    algorithm: str
    n: int
    lam: int | None = None
    mu: int | None = None
    rho: float | None = None
    K: float | None = None
    epsilon: float | None = None
    margin: float | None = None
    borderless: bool = False
    history_cap: int | None = None

    def __post_init__(self):
        algo = self.algorithm
        if algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ConfigError("n must be an integer >= 1")
        need = _REQUIRED[algo]
        for name in need:
            if getattr(self, name) is None:
                raise ConfigError(f"{algo} requires {name}")
        fixed = {"cga": {"lam": 2}, "sig_cga": {"lam": 2}, "mmas_ib": {"mu": 1}}.get(algo, {})
        for name in _OPTIONAL:
            value = getattr(self, name)
            if name in need or value is None:
                continue
            if name in fixed and value == fixed[name]:
                continue
            raise ConfigError(f"{algo} does not take {name}")
        for name, value in fixed.items():
            object.__setattr__(self, name, value)

        if self.lam < 1:
            raise ConfigError("lambda must be >= 1")
        if algo in ("cga", "sig_cga"):
            pass
        elif self.mu < 1 or self.mu > self.lam:
            raise ConfigError(f"mu <= lambda is required (mu={self.mu}, lambda={self.lam})")
        if self.rho is not None and not 0.0 < self.rho <= 1.0:
            raise ConfigError("rho must lie in (0, 1]")
        if self.K is not None and not self.K >= 1.0:
            raise ConfigError("K must be >= 1")
        if self.epsilon is not None and not self.epsilon > 0.0:
            raise ConfigError("epsilon must be > 0")
        if algo == "sig_cga":
            if self.borderless or self.margin is not None:
                raise ConfigError("sig_cga always uses the values 1/n, 1/2, 1-1/n; no margin options")
            if self.n < 3:
                raise ConfigError("sig_cga needs n >= 3")
            if self.history_cap is not None:
                c = int(self.history_cap)
                if c < MIN_HISTORY_CAP or c & (c - 1):
                    raise ConfigError(f"history_cap must be a power of two >= {MIN_HISTORY_CAP}")
        elif self.history_cap is not None:
            raise ConfigError(f"{algo} does not take history_cap")
        if self.borderless and self.margin is not None:
            raise ConfigError("margin and borderless are mutually exclusive")
        if not self.borderless and algo != "sig_cga":
            m = self.m
            if not 0.0 < m <= 0.5:
                raise ConfigError(f"margin must lie in (0, 1/2], got {m} (use borderless for n = 1)")

    # -- convenience constructors ------------------------------------------
    @classmethod
    def umda(cls, n, lam, mu, **kw) -> EdaConfig:
        return cls("umda", n, lam=lam, mu=mu, **kw)

    @classmethod
    def pbil(cls, n, lam, mu, rho, **kw) -> EdaConfig:
        return cls("pbil", n, lam=lam, mu=mu, rho=rho, **kw)

    @classmethod
    def mmas_ib(cls, n, lam, rho, **kw) -> EdaConfig:
        return cls("mmas_ib", n, lam=lam, rho=rho, **kw)

    @classmethod
    def cga(cls, n, K, **kw) -> EdaConfig:
        return cls("cga", n, K=K, **kw)

    @classmethod
    def sig_cga(cls, n, epsilon, **kw) -> EdaConfig:
        return cls("sig_cga", n, epsilon=epsilon, **kw)

    # -- derived values ------------------------------------------------------
    @property
    def m(self) -> float | None:
        """Effective margin, ``None`` when borderless."""
        if self.algorithm == "sig_cga":
            return 1.0 / self.n
        if self.borderless:
            return None
        return 1.0 / self.n if self.margin is None else float(self.margin)

    @property
    def cap(self) -> int:
        """sig-cGA history length in bits."""
        if self.history_cap is not None:
            return int(self.history_cap)
        eps = self.epsilon
        target = SIG_CAP_FACTOR * eps * eps * self.n * math.log(self.n)
        return max(MIN_HISTORY_CAP, 1 << math.ceil(math.log2(target)))

    def with_(self, **changes) -> EdaConfig:
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class EdaState:
    """Mutable state of one run.

    ``histories`` is only used by sig-cGA: one deque of winner bits per
    position, newest last, holding at most ``cfg.cap`` entries.
    """

    p: np.ndarray
    t: int = 0
    evaluations: int = 0
    started: int = 0
    border_hits: int = 0
    absorptions: int = 0
    hit: bool = False
    exhausted: bool = False
    evaluations_to_hit: int | None = None
    histories: list | None = field(default=None, repr=False)

    @classmethod
    def initial(cls, cfg: EdaConfig) -> EdaState:
        hist = None
        if cfg.algorithm == "sig_cga":
            hist = [deque(maxlen=cfg.cap) for _ in range(cfg.n)]
        return cls(p=np.full(cfg.n, 0.5), histories=hist)

    @property
    def done(self) -> bool:
        return self.hit or self.exhausted


# ---------------------------------------------------------------------------
# pure update schemes (before the margin clamp)


def _rows(best) -> np.ndarray:
    rows = [np.asarray(b[0] if isinstance(b, tuple) else b) for b in best]
    return np.asarray(rows, dtype=np.float64)


def _counts(best) -> np.ndarray:
    rows = _rows(best)
    cnt = np.zeros(rows.shape[1])
    for r in rows:
        cnt += r
    return cnt


def umda_update(p, best) -> np.ndarray:
    """Relative frequency of ones among the selected; ignores ``p``."""
    mu = len(best)
    return _counts(best) / mu


def pbil_update(p, best, rho: float) -> np.ndarray:
    mu = len(best)
    return (1.0 - rho) * np.asarray(p, dtype=np.float64) + rho * (_counts(best) / mu)


def mmas_update(p, winner, rho: float) -> np.ndarray:
    w = np.asarray(winner, dtype=np.float64)
    return (1.0 - rho) * np.asarray(p, dtype=np.float64) + rho * w


def cga_update(p, x1, x2, K: float, margin: float | None = None) -> np.ndarray:
    """``p + (x1 - x2) / K`` clipped to [0, 1].

    Values within 1e-9 of 0, 1, ``margin`` or ``1 - margin`` are snapped onto
    them, so that repeated steps of size 1/K land exactly on the borders
    despite rounding.
    """
    v = np.asarray(p, dtype=np.float64) + (
        np.asarray(x1, dtype=np.float64) - np.asarray(x2, dtype=np.float64)
    ) / K
    v = np.where(np.abs(v) < _SNAP, 0.0, v)
    v = np.where(np.abs(v - 1.0) < _SNAP, 1.0, v)
    if margin is not None and margin > 0.0:
        v = np.where(np.abs(v - margin) < _SNAP, margin, v)
        v = np.where(np.abs(v - (1.0 - margin)) < _SNAP, 1.0 - margin, v)
    return np.maximum(0.0, np.minimum(1.0, v))


def apply_margin(new, old, m: float | None) -> tuple[np.ndarray, int, int]:
    """Margin clamp plus event counts.

    Returns ``(p, lower_border_hits, absorptions)``. A lower border hit is a
    move from above ``m`` onto ``m``; in borderless mode moves onto 0 are
    counted as absorptions instead.
    """
    new = np.asarray(new, dtype=np.float64)
    old = np.asarray(old, dtype=np.float64)
    if m is not None:
        out = np.maximum(m, np.minimum(1.0 - m, new))
        return out, int(np.count_nonzero((out == m) & (old > m))), 0
    return new.copy(), 0, int(np.count_nonzero((new == 0.0) & (old > 0.0)))


# ---------------------------------------------------------------------------
# sig-cGA


def sig_threshold(ell: int, pv: float, eps: float, n: int) -> float:
    """Count a window of length ``ell`` must exceed to be significant."""
    lnn = math.log(n)
    return ell * pv + eps * max(math.sqrt(ell * pv * (1.0 - pv) * lnn), lnn)


def significance(history, pv: float, eps: float, n: int) -> int:
    """+1 (too many ones), -1 (too many zeros) or 0 for one position.

    Scans the newest ``ell`` entries for ``ell = 1, 2, 4, ...`` up to the
    history length; the first significant window decides. Ones are tested
    only below ``1 - 1/n`` and zeros only above ``1/n``.
    """
    lo, hi = 1.0 / n, 1.0 - 1.0 / n
    h = len(history)
    ell = 1
    ones = 0
    seen = 0
    rev = reversed(history)
    while ell <= h:
        while seen < ell:
            ones += next(rev)
            seen += 1
        if pv < hi and ones > sig_threshold(ell, pv, eps, n):
            return 1
        if pv > lo and ell - ones > sig_threshold(ell, 1.0 - pv, eps, n):
            return -1
        ell *= 2
    return 0


def min_run_length(pv: float, eps: float, n: int) -> int:
    """Length of the shortest run of ones that is 1-significant at ``pv``.

    All windows of such a run are all-ones, and ``ell > threshold(ell)``
    is monotone in ``ell``, so the answer is the first power of two passing.
    """
    ell = 1
    while not ell > sig_threshold(ell, pv, eps, n):
        ell *= 2
    return ell


def _evaluate_generation(state, cfg, f, rng, lam, max_evals):
    n = cfg.n
    members = np.zeros((lam, n), dtype=BIT)
    fit: list = []
    if state.evaluations >= max_evals:
        state.exhausted = True
        return ScoredPopulation(members[:0], [])
    state.started += 1
    for j in range(lam):
        if state.evaluations >= max_evals:
            state.exhausted = True
            return ScoredPopulation(members[:j], fit)
        x = sample(state.p, rng)
        v = f.evaluate(x)
        state.evaluations += 1
        members[j] = x
        fit.append(v)
        if f.is_optimum(x):
            state.hit = True
            state.evaluations_to_hit = state.evaluations
            return ScoredPopulation(members[: j + 1], fit)
    return ScoredPopulation(members, fit)


def sigcga_step(state: EdaState, cfg: EdaConfig, f, rng: RngStream, max_evals: float = math.inf):
    """One sig-cGA generation; returns ``(state, population)``."""
    pop = _evaluate_generation(state, cfg, f, rng, 2, max_evals)
    if state.done:
        return state, pop
    order = selection_order(pop.fitness, tie_keys(2, rng))
    winner = pop.members[order[0]]
    n = cfg.n
    lo, hi = 1.0 / n, 1.0 - 1.0 / n
    for i in range(n):
        h = state.histories[i]
        h.append(int(winner[i]))
        d = significance(h, state.p[i], cfg.epsilon, n)
        if d == 1:
            state.p[i] = hi
            h.clear()
        elif d == -1:
            if state.p[i] > lo:
                state.border_hits += 1
            state.p[i] = lo
            h.clear()
    state.t += 1
    return state, pop


def step(state: EdaState, cfg: EdaConfig, f, rng: RngStream, max_evals: float = math.inf):
    """One generation of any algorithm; returns ``(state, population)``.

    Stops early, leaving ``p`` and ``t`` untouched, when an optimum is sampled
    or the evaluation budget ``max_evals`` runs out.
    """
    if cfg.algorithm == "sig_cga":
        return sigcga_step(state, cfg, f, rng, max_evals)
    pop = _evaluate_generation(state, cfg, f, rng, cfg.lam, max_evals)
    if state.done:
        return state, pop
    order = selection_order(pop.fitness, tie_keys(cfg.lam, rng))
    ranked = [pop.members[j] for j in order]
    algo = cfg.algorithm
    if algo == "umda":
        new = umda_update(state.p, ranked[: cfg.mu])
    elif algo == "pbil":
        new = pbil_update(state.p, ranked[: cfg.mu], cfg.rho)
    elif algo == "mmas_ib":
        new = mmas_update(state.p, ranked[0], cfg.rho)
    else:
        new = cga_update(state.p, ranked[0], ranked[1], cfg.K, cfg.m)
    p, hits, absorbed = apply_margin(new, state.p, cfg.m)
    state.p = p
    state.border_hits += hits
    state.absorptions += absorbed
    state.t += 1
    return state, pop
