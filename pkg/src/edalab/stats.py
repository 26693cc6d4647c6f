"""Random streams, summary statistics, regression and two-sample tests.

Generator
---------
:class:`RngStream` is xoshiro256** 1.0 (Blackman and Vigna), seeded by
running splitmix64 four times from a 64-bit seed. The identifier is exposed as
:data:`GENERATOR_ID` and written into every output header.

* ``random()`` takes the top 53 bits of one output: ``(x >> 11) * 2**-53``.
* ``normal()`` uses the cosine branch of Box-Muller on two uniforms.
* ``integer(k)`` is ``floor(random() * k)``.

Derived seeds
-------------
``derive_seed(master, (i1, ..., ik))`` folds the indices into the master seed
with the splitmix64 finalizer::

    h = mix64(master + GOLDEN)
    for i in indices:
        h = mix64((h ^ i) + GOLDEN)

with ``GOLDEN = 0x9E3779B97F4A7C15`` and all arithmetic modulo 2**64.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence

import numpy as np
from scipy import special
from scipy import stats as sps

from . import _kernels as K

GENERATOR_ID = "xoshiro256**-1.0/splitmix64"

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """splitmix64 output function on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def seed_state(seed: int) -> np.ndarray:
    """Four xoshiro words from a 64-bit seed via splitmix64."""
    x = seed & MASK64
    words = []
    for _ in range(4):
        x = (x + GOLDEN) & MASK64
        words.append(mix64(x))
    return np.array(words, dtype=np.uint64)


def derive_seed(master: int, indices: Iterable[int]) -> int:
    h = mix64((master & MASK64) + GOLDEN)
    for i in indices:
        h = mix64((h ^ (int(i) & MASK64)) + GOLDEN)
    return h


class RngStream:
    """Single-owner xoshiro256** stream.

    The whole state is the ``uint64[4]`` array :attr:`state`; the compiled
    run loops advance it in place, so a stream handed to a kernel continues
    exactly where Python-level draws left off.
    """

    algorithm = GENERATOR_ID

    def __init__(self, seed: int = 0, *, state: np.ndarray | None = None):
        if state is not None:
            self.state = np.array(state, dtype=np.uint64)
            if self.state.shape != (4,):
                raise ValueError("state must have four 64-bit words")
        else:
            self.state = seed_state(int(seed))

    def next_u64(self) -> int:
        return int(K.next_u64(self.state))

    def random(self) -> float:
        return float(K.next_double(self.state))

    def normal(self) -> float:
        return float(K.next_normal(self.state))

    def integer(self, k: int) -> int:
        """Uniform integer in ``[0, k)``."""
        if k < 1:
            raise ValueError("k must be positive")
        return int(K.next_below(self.state, k))

    def random_array(self, size: int) -> np.ndarray:
        out = np.empty(size, dtype=np.float64)
        K.fill_double(self.state, out)
        return out

    def u64_array(self, size: int) -> np.ndarray:
        out = np.empty(size, dtype=np.uint64)
        K.fill_u64(self.state, out)
        return out

    def normal_array(self, size: int) -> np.ndarray:
        out = np.empty(size, dtype=np.float64)
        K.fill_normal(self.state, out)
        return out

    def copy(self) -> RngStream:
        return RngStream(state=self.state.copy())

    def __repr__(self) -> str:
        words = ", ".join(hex(int(w)) for w in self.state)
        return f"RngStream(state=[{words}])"


def derive_stream(master: int, indices: Iterable[int]) -> RngStream:
    """Independent stream for an index tuple below ``master``."""
    return RngStream(derive_seed(master, indices))


# ---------------------------------------------------------------------------
# summaries


def _sorted(samples) -> np.ndarray:
    a = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    return a


def _mean_std(a: np.ndarray) -> tuple[float, float]:
    n = a.size
    mean = math.fsum(a) / n
    var = math.fsum((a - mean) ** 2) / (n - 1) if n > 1 else 0.0
    return mean, math.sqrt(var)


def mean_std(samples) -> tuple[float, float]:
    """Mean and sample standard deviation (ddof=1), order-independent."""
    a = _sorted(samples)
    if a.size == 0:
        raise ValueError("need at least one sample")
    return _mean_std(a)


def mean_ci(samples, level: float = 0.95) -> tuple[float, float]:
    """Normal-approximation confidence interval as ``(mean, half_width)``.

    The half-width is ``z * s / sqrt(R)`` with the population standard
    deviation ``s`` (divisor ``R``), so ``{0, 2}`` gives ``1.96 / sqrt(2)``.
    """
    a = _sorted(samples)
    if a.size < 2:
        raise ValueError("mean_ci needs at least 2 samples")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    mean, _ = _mean_std(a)
    sd = math.sqrt(math.fsum((a - mean) ** 2) / a.size)
    z = sps.norm.ppf(0.5 + level / 2.0)
    return mean, float(z * sd / math.sqrt(a.size))


def median_ci(samples, level: float = 0.95) -> tuple[float, float, float]:
    """Median with a distribution-free order-statistic interval.

    The interval ``[x_(j), x_(k)]`` uses the binomial(R, 1/2) quantiles,
    so its coverage is at least ``level`` for any continuous distribution.

    Returns:
        ``(median, low, high)``.
    """
    a = _sorted(samples)
    r = a.size
    if r < 2:
        raise ValueError("median_ci needs at least 2 samples")
    alpha = 1.0 - level
    # smallest j with P(B <= j) >= alpha/2; [x_(j), x_(r-j+1)] (1-based)
    j = int(sps.binom.ppf(alpha / 2.0, r, 0.5))
    lo = max(j - 1, 0)
    hi = min(r - j, r - 1)
    return float(np.median(a)), float(a[lo]), float(a[hi])


def loglog_slope(points: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """OLS fit of ``ln y`` against ``ln x``.

    Returns:
        ``(slope, stderr, r_squared)``. With an exact fit the stderr is 0.
    """
    pts = sorted((float(x), float(y)) for x, y in points)
    if len(pts) < 3:
        raise ValueError("loglog_slope needs at least 3 points")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("coordinates must be positive")
    xs = np.log([p[0] for p in pts])
    ys = np.log([p[1] for p in pts])
    if np.unique(xs).size != xs.size:
        raise ValueError("x values must be distinct")
    k = xs.size
    mx = math.fsum(xs) / k
    my = math.fsum(ys) / k
    sxx = math.fsum((xs - mx) ** 2)
    sxy = math.fsum((xs - mx) * (ys - my))
    syy = math.fsum((ys - my) ** 2)
    slope = sxy / sxx
    resid = ys - (my + slope * (xs - mx))
    sse = math.fsum(resid**2)
    stderr = math.sqrt(sse / (k - 2) / sxx)
    r2 = 1.0 if syy == 0.0 else 1.0 - sse / syy
    return slope, stderr, r2


def slope_ci(slope: float, stderr: float, n_points: int, level: float = 0.95) -> tuple[float, float]:
    """Student-t interval for an OLS slope fitted on ``n_points`` points."""
    t = sps.t.ppf(0.5 + level / 2.0, n_points - 2)
    return slope - t * stderr, slope + t * stderr


def linear_fit(xs, ys) -> tuple[float, float, float]:
    """OLS ``y = a + b x``; returns ``(intercept, slope, r_squared)``."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least 2 points")
    mx, my = x.mean(), y.mean()
    sxx = float(((x - mx) ** 2).sum())
    sxy = float(((x - mx) * (y - my)).sum())
    syy = float(((y - my) ** 2).sum())
    b = sxy / sxx
    r2 = 1.0 if syy == 0.0 else sxy * sxy / (sxx * syy)
    return float(my - b * mx), b, r2


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sided two-sample Kolmogorov-Smirnov test.

    The p-value is asymptotic: ``Q_KS(sqrt(n m / (n + m)) * D)``.
    """
    x = _sorted(a)
    y = _sorted(b)
    if x.size == 0 or y.size == 0:
        raise ValueError("both samples must be non-empty")
    grid = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, grid, side="right") / x.size
    cdf_y = np.searchsorted(y, grid, side="right") / y.size
    d = float(np.max(np.abs(cdf_x - cdf_y)))
    en = math.sqrt(x.size * y.size / (x.size + y.size))
    p = float(min(1.0, max(0.0, special.kolmogorov(en * d))))
    return d, p


def intervals_disjoint(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """True if the closed intervals ``a`` and ``b`` do not overlap."""
    return a[1] < b[0] or b[1] < a[0]


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be positive")
    z = sps.norm.ppf(0.5 + level / 2.0)
    ph = successes / trials
    denom = 1.0 + z * z / trials
    centre = (ph + z * z / (2 * trials)) / denom
    half = z * math.sqrt(ph * (1 - ph) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)
