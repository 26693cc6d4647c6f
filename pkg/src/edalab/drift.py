"""Drift-theorem bounds and empirical drift estimation.

Drift is measured as progress towards the target, ``E[X_t - X_{t+1} | X_t]``,
so it is positive when the potential decreases.

* additive: ``E[T] <= X0 / delta`` (upper) or ``>=`` (lower), for a drift of
  at least (at most) ``delta`` everywhere before the target;
* multiplicative: ``E[T] <= (1 + ln X0) / delta`` for a drift of at least
  ``delta * X_t`` on a space with minimum positive value 1;
* variable: ``E[T] <= 1/h(1) + int_1^X0 dx / h(x)`` for a drift of at least
  ``h(X_t)`` with ``h`` positive and increasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import stats
from .stats import RngStream

# ---------------------------------------------------------------------------
# bounds


def additive_bound(x0: float, delta: float, kind: str = "upper") -> float:
    """``X0 / delta``; ``kind`` names the direction of the inequality used."""
    if kind not in ("upper", "lower"):
        raise ValueError("kind must be 'upper' or 'lower'")
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if x0 < 0:
        raise ValueError("X0 must be >= 0")
    return x0 / delta


def multiplicative_bound(x0: float, delta: float) -> float:
    """``(1 + ln X0) / delta``."""
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if x0 < 1:
        raise ValueError("X0 must be >= 1; the process is already below its target")
    return (1.0 + math.log(x0)) / delta


_EPS = np.finfo(np.float64).eps


def _simpson(g, a, fa, b, fb, m, fm, whole, tol, depth, acc):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = g(lm), g(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    # the second test stops refinement once rounding error dominates
    if depth <= 0 or abs(delta) <= 15.0 * tol or abs(delta) <= 64.0 * _EPS * abs(left + right):
        acc[0] += left + right + delta / 15.0
        acc[1] += abs(delta) / 15.0
        return
    _simpson(g, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1, acc)
    _simpson(g, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1, acc)


def integrate(g: Callable[[float], float], a: float, b: float, tol: float = 1e-9, max_depth: int = 50):
    """Adaptive Simpson quadrature; returns ``(value, error_estimate)``."""
    if b == a:
        return 0.0, 0.0
    fa, fb = g(a), g(b)
    m = 0.5 * (a + b)
    fm = g(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    acc = [0.0, 0.0]
    _simpson(g, a, fa, b, fb, m, fm, whole, tol, max_depth, acc)
    return acc[0], acc[1]


def variable_bound(x0: float, h: Callable[[float], float], quadrature_tol: float = 1e-9):
    """``1/h(1) + int_1^X0 dx/h(x)``; returns ``(bound, error_estimate)``.

    ``h`` is checked for positivity at the quadrature nodes.
    """
    if x0 < 1:
        raise ValueError("X0 must be >= 1")

    def inv(x):
        v = h(x)
        if not v > 0:
            raise ValueError(f"h must be positive on [1, X0]; h({x}) = {v}")
        return 1.0 / v

    head = inv(1.0)
    value, err = integrate(inv, 1.0, float(x0), quadrature_tol)
    return head + value, err


def named_h(spec: str) -> Callable[[float], float]:
    """``constant[:c]``, ``linear[:c]``, ``sqrt[:c]`` or ``power:alpha[:c]``."""
    parts = spec.split(":")
    name = parts[0]
    try:
        nums = [float(v) for v in parts[1:]]
    except ValueError:
        raise ValueError(f"bad drift function {spec!r}") from None
    if name == "constant" and len(nums) <= 1:
        c = nums[0] if nums else 1.0
        return lambda x: c
    if name == "linear" and len(nums) <= 1:
        c = nums[0] if nums else 1.0
        return lambda x: c * x
    if name == "sqrt" and len(nums) <= 1:
        c = nums[0] if nums else 1.0
        return lambda x: c * math.sqrt(x)
    if name == "power" and 1 <= len(nums) <= 2:
        alpha = nums[0]
        c = nums[1] if len(nums) == 2 else 1.0
        return lambda x: c * x**alpha
    raise ValueError(f"bad drift function {spec!r}")


# ---------------------------------------------------------------------------
# empirical drift


@dataclass
class DriftBin:
    low: float
    high: float
    mean: float | None
    stderr: float | None
    count: int


@dataclass
class DriftEstimate:
    """Binned one-step drift ``E[X_t - X_{t+1} | X_t in bin]``."""

    bins: list[DriftBin] = field(default_factory=list)
    min_count: int = 1

    def centers(self) -> np.ndarray:
        return np.array([0.5 * (b.low + b.high) for b in self.bins])

    def means(self) -> np.ndarray:
        return np.array([np.nan if b.mean is None else b.mean for b in self.bins])

    def counts(self) -> np.ndarray:
        return np.array([b.count for b in self.bins])


def _values(trace) -> np.ndarray:
    if len(trace) and isinstance(trace[0], (tuple, list)):
        return np.array([v for _, v in trace], dtype=np.float64)
    return np.asarray(trace, dtype=np.float64)


def binned_drift(current, decrease, bin_edges, min_count: int = 1) -> DriftEstimate:
    """Bin one-step decreases by the value they started from.

    Bins are half-open ``[e_k, e_{k+1})`` except the last, which is closed.
    A bin with fewer than ``min_count`` samples (including none) reports its
    count but no estimate.
    """
    x = np.asarray(current, dtype=np.float64)
    d = np.asarray(decrease, dtype=np.float64)
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin_edges must be strictly increasing with >= 2 entries")
    idx = np.searchsorted(edges, x, side="right") - 1
    idx[x == edges[-1]] = edges.size - 2
    out = DriftEstimate(min_count=min_count)
    for k in range(edges.size - 1):
        sel = d[idx == k]
        if sel.size >= max(min_count, 1):
            mean, sd = stats.mean_std(sel)
            se = sd / math.sqrt(sel.size) if sel.size > 1 else 0.0
            out.bins.append(DriftBin(edges[k], edges[k + 1], mean, se, int(sel.size)))
        else:
            out.bins.append(DriftBin(edges[k], edges[k + 1], None, None, int(sel.size)))
    return out


def empirical_drift(traces, bin_edges, min_count: int = 1) -> DriftEstimate:
    """Binned drift over potential traces (``(t, X_t)`` pairs or plain values).

    Only consecutive entries are paired, so traces should be recorded at
    every generation.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one trace")
    cur, dec = [], []
    for tr in traces:
        v = _values(tr)
        cur.append(v[:-1])
        dec.append(v[:-1] - v[1:])
    return binned_drift(np.concatenate(cur), np.concatenate(dec), bin_edges, min_count)


def frequency_drift(results, bin_edges, min_count: int = 1000) -> DriftEstimate:
    """Per-frequency drift binned by ``p``, from runs traced every generation.

    Reports the mean gain ``p_{t+1} - p_t`` (the frequencies move up on
    OneMax), i.e. the negated decrease.
    """
    cur, gain = [], []
    for r in results:
        traj = r.trajectory
        if traj is None:
            raise ValueError("results need trajectories (trace with probe_every=1)")
        for (t0, a), (t1, b) in zip(traj, traj[1:]):
            if t1 != t0 + 1:
                raise ValueError("trajectories must be recorded at every generation")
            cur.append(a)
            gain.append(b - a)
    return binned_drift(np.concatenate(cur), np.concatenate(gain), bin_edges, min_count)


def shape_correlation(est: DriftEstimate) -> tuple[float, float]:
    """Correlation of bin means with ``sqrt(p(1-p))`` at bin centres.

    Also returns the least-squares coefficient ``c`` in
    ``drift ~ c * sqrt(p(1-p))``, which plays the role of ``I/sqrt(n)``.
    """
    ok = [b for b in est.bins if b.mean is not None]
    if len(ok) < 3:
        raise ValueError("need at least 3 populated bins")
    c = np.array([0.5 * (b.low + b.high) for b in ok])
    y = np.array([b.mean for b in ok])
    s = np.sqrt(c * (1.0 - c))
    r = float(np.corrcoef(s, y)[0, 1])
    coef = float(np.dot(s, y) / np.dot(s, s))
    return r, coef


# ---------------------------------------------------------------------------
# Monte Carlo validation chains


def biased_walk(rng: RngStream, x0: int = 10, top: int = 20, p_down: float = 0.75) -> int:
    """Steps until a +-1 walk on {0..top} started at ``x0`` reaches 0.

    At ``top`` an up-step is truncated (the walk stays put).
    """
    x, t = x0, 0
    while x > 0:
        t += 1
        if rng.random() < p_down:
            x -= 1
        elif x < top:
            x += 1
    return t


def binomial_thinning(rng: RngStream, x0: int = 64, retain: float = 0.9) -> int:
    """Steps until ``X_{t+1} ~ Bin(X_t, retain)`` drops below 1."""
    x, t = x0, 0
    while x >= 1:
        t += 1
        x = int(np.count_nonzero(rng.random_array(x) < retain))
    return t


def sqrt_chain(rng: RngStream, x0: int = 100) -> int:
    """Steps until ``X_{t+1} = X_t - Bin(X_t, 1/sqrt(X_t))`` drops below 1.

    The drift is exactly ``sqrt(X_t)``.
    """
    x, t = x0, 0
    while x >= 1:
        t += 1
        q = 1.0 / math.sqrt(x)
        x -= int(np.count_nonzero(rng.random_array(x) < q))
    return t


@dataclass(frozen=True)
class ChainCheck:
    name: str
    bound: float
    mean: float
    half_width: float
    runs: int
    passed: bool

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{self.name}: bound={self.bound!r} empirical={self.mean!r} "
            f"+- {self.half_width!r} (99%, runs={self.runs}) {verdict}"
        )


CHAINS = {
    "additive": (biased_walk, lambda: additive_bound(10, 0.5)),
    "multiplicative": (binomial_thinning, lambda: multiplicative_bound(64, 0.1)),
    "variable": (sqrt_chain, lambda: variable_bound(100, math.sqrt, 1e-10)[0]),
}


def check_bound(name: str, runs: int = 100_000, seed: int = 0, level: float = 0.99) -> ChainCheck:
    """Monte Carlo check that a chain's mean hitting time respects its bound.

    Passes when the lower end of the one-sided ``level`` interval for the mean
    hitting time does not exceed the upper bound.
    """
    if name not in CHAINS:
        raise ValueError(f"unknown chain {name!r}; choose from {', '.join(CHAINS)}")
    chain, bound_fn = CHAINS[name]
    rng = RngStream(seed)
    times = np.array([chain(rng) for _ in range(runs)], dtype=np.float64)
    mean, sd = stats.mean_std(times)
    z = float(stats.sps.norm.ppf(level))
    hw = z * sd / math.sqrt(runs)
    bound = bound_fn()
    return ChainCheck(name, bound, mean, hw, runs, mean - hw <= bound)
