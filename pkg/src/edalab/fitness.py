"""Pseudo-Boolean benchmarks, generalized variants and noise wrappers.

Every benchmark here is a :class:`Benchmark`: a name, a target bit string
``a`` and a position order ``perm``. A bit counts as "correct" when it agrees
with the target, and the plain functions are the case ``a = 1^n`` with the
identity order. Benchmarks also describe themselves to the compiled run loops
through :meth:`Benchmark.kernel_args`.

Noise is added by :class:`NoisyFitness`, which owns its own random stream.
Optimality is always judged on the noise-free value.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import _kernels as K
from .core import as_bits, parse_bits
from .stats import RngStream, derive_stream

NAMES = ("onemax", "leadingones", "binval", "needle", "constant")
CODES = {
    "onemax": K.ONEMAX,
    "leadingones": K.LEADINGONES,
    "binval": K.BINVAL,
    "needle": K.NEEDLE,
    "constant": K.CONSTANT,
}

# stream tags below a run seed
TARGET_TAG = 0x7461726765
PERM_TAG = 0x7065726D
NOISE_TAG = 0x6E6F697365

INT64_BITS = 63
FLOAT_EXACT_BITS = 53


def onemax(x) -> int:
    """Number of ones."""
    return int(np.count_nonzero(np.asarray(x)))


def leadingones(x) -> int:
    """Length of the longest all-ones prefix."""
    a = np.asarray(x)
    zeros = np.flatnonzero(a == 0)
    return int(zeros[0]) if zeros.size else int(a.size)


def binval(x, exact: bool = True) -> int:
    """Binary value with bit 1 as the most significant.

    Uses int64 arithmetic up to 63 bits and Python integers beyond. With
    ``exact=False`` strings longer than 63 bits are rejected instead.
    """
    a = np.asarray(x, dtype=np.int64)
    n = a.size
    if n <= INT64_BITS:
        weights = np.left_shift(np.int64(1), np.arange(n - 1, -1, -1, dtype=np.int64))
        return int(a @ weights)
    if not exact:
        raise OverflowError(f"BinVal needs {n} bits; fixed-width mode holds {INT64_BITS}")
    return int("".join("1" if b else "0" for b in a), 2)


def needle(x, target=None) -> int:
    """1 on the target (default all ones), 0 elsewhere."""
    a = np.asarray(x)
    if target is None:
        return int(np.all(a == 1))
    return int(np.array_equal(a, np.asarray(target)))


_PLAIN = {"onemax": onemax, "leadingones": leadingones, "binval": binval, "needle": needle}


@dataclass(frozen=True, eq=False)
class Benchmark:
    """A benchmark on ``{0,1}^n`` with target ``a`` and position order ``perm``.

    The value is the plain function applied to the agreement vector
    ``y_i = [x_perm(i) == a_perm(i)]``. Only LeadingOnes may use a
    non-identity order.
    """

    name: str
    n: int
    target: np.ndarray = None
    perm: np.ndarray = None

    def __post_init__(self):
        if self.name not in CODES:
            raise ValueError(f"unknown fitness {self.name!r}; choose from {', '.join(NAMES)}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        t = np.ones(self.n, np.uint8) if self.target is None else as_bits(self.target, self.n)
        if self.perm is None:
            pm = np.arange(self.n, dtype=np.int64)
        else:
            pm = np.asarray(self.perm, dtype=np.int64)
            if pm.shape != (self.n,) or not np.array_equal(np.sort(pm), np.arange(self.n)):
                raise ValueError("perm must be a permutation of 0..n-1")
        identity = bool(np.array_equal(pm, np.arange(self.n)))
        if not identity and self.name != "leadingones":
            raise ValueError(f"{self.name} is generalized by target only; perm must be the identity")
        t.flags.writeable = False
        pm.flags.writeable = False
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "perm", pm)
        object.__setattr__(self, "_plain", identity and bool(np.all(t == 1)))

    @property
    def code(self) -> int:
        return CODES[self.name]

    @property
    def is_plain(self) -> bool:
        return self._plain

    def agreement(self, x) -> np.ndarray:
        a = np.asarray(x)
        return (a[self.perm] == self.target[self.perm]).astype(np.uint8)

    def evaluate(self, x):
        if self.name == "constant":
            return 0
        if self._plain:
            return _PLAIN[self.name](x)
        return _PLAIN[self.name](self.agreement(x))

    __call__ = evaluate

    def is_optimum(self, x) -> bool:
        if self.name == "constant":
            return False
        return bool(np.array_equal(np.asarray(x), self.target))

    def optimum_value(self):
        return self.evaluate(self.target)

    def kernel_args(self):
        """``(code, target, perm, plain, noise_kind, noise_param)``."""
        return self.code, self.target, self.perm, self._plain, K.NOISE_NONE, 0.0

    def describe(self) -> str:
        return self.name


def constant(n: int) -> Benchmark:
    """Flat function: every point scores 0 and none is optimal."""
    return Benchmark("constant", n)


def generalize(f: str | Benchmark, a, perm=None) -> Benchmark:
    """OneMax, BinVal or LeadingOnes with target ``a`` and order ``perm``."""
    name = f.name if isinstance(f, Benchmark) else f
    if name not in ("onemax", "binval", "leadingones"):
        raise ValueError(f"cannot generalize {name!r}")
    a = as_bits(a)
    return Benchmark(name, a.size, a, perm)


@dataclass(frozen=True)
class Noise:
    """``kind`` is ``"gauss"`` (``param`` = sigma) or ``"prior"`` (``param`` = q)."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind == "gauss":
            if not self.param >= 0.0:
                raise ValueError("sigma must be >= 0")
        elif self.kind == "prior":
            if not 0.0 <= self.param <= 1.0:
                raise ValueError("q must lie in [0, 1]")
        else:
            raise ValueError(f"unknown noise kind {self.kind!r}")

    @property
    def code(self) -> int:
        return K.NOISE_GAUSS if self.kind == "gauss" else K.NOISE_PRIOR

    def __str__(self) -> str:
        return f"{self.kind}:{self.param!r}"

    @classmethod
    def parse(cls, text: str) -> Noise:
        kind, sep, value = text.partition(":")
        kind = kind.strip().lower()
        if kind == "prior" and not sep:
            return cls("prior", 1.0)
        if not sep:
            raise ValueError(f"noise needs a parameter, e.g. gauss:1.0 (got {text!r})")
        return cls(kind, float(value))


class NoisyFitness:
    """Noise around a benchmark; every call draws fresh noise.

    Gaussian noise returns ``f(x) + sigma * Z``. Prior noise draws one uniform
    and, if it falls below ``q``, flips one uniformly chosen bit of a copy of
    ``x`` before evaluating. Both consume draws only from ``rng``.
    """

    def __init__(self, inner: Benchmark, noise: Noise, rng: RngStream):
        if inner.name == "binval" and inner.n > FLOAT_EXACT_BITS:
            raise ValueError(f"noisy BinVal is limited to n <= {FLOAT_EXACT_BITS}")
        self.inner = inner
        self.noise = noise
        self.rng = rng

    @property
    def n(self) -> int:
        return self.inner.n

    @property
    def name(self) -> str:
        return self.inner.name

    def evaluate(self, x) -> float:
        if self.noise.kind == "gauss":
            return float(self.inner.evaluate(x)) + self.noise.param * self.rng.normal()
        if self.rng.random() < self.noise.param:
            y = np.array(x, dtype=np.uint8)
            k = self.rng.integer(y.size)
            y[k] = 1 - y[k]
            return float(self.inner.evaluate(y))
        return float(self.inner.evaluate(x))

    __call__ = evaluate

    def is_optimum(self, x) -> bool:
        return self.inner.is_optimum(x)

    def with_rng(self, rng: RngStream) -> NoisyFitness:
        return NoisyFitness(self.inner, self.noise, rng)

    def kernel_args(self):
        code, target, perm, plain, _, _ = self.inner.kernel_args()
        return code, target, perm, plain, self.noise.code, float(self.noise.param)

    def describe(self) -> str:
        return f"{self.inner.describe()}+{self.noise}"


def wrap_noise(f: Benchmark, kind: Noise | tuple | str, rng: RngStream) -> NoisyFitness:
    """Noisy view of ``f``; ``kind`` may be a :class:`Noise`, a tuple or ``"gauss:1"``."""
    if isinstance(kind, str):
        kind = Noise.parse(kind)
    elif isinstance(kind, tuple):
        kind = Noise(*kind)
    return NoisyFitness(f, kind, rng)


class CallableFitness:
    """Arbitrary user function; runs only on the pure-Python engine."""

    def __init__(self, fn: Callable, n: int, is_optimum: Callable | None = None, name: str = "custom"):
        self.fn = fn
        self.n = n
        self.name = name
        self._opt = is_optimum or (lambda x: False)

    def evaluate(self, x):
        return self.fn(x)

    __call__ = evaluate

    def is_optimum(self, x) -> bool:
        return bool(self._opt(x))

    def describe(self) -> str:
        return self.name


@dataclass(frozen=True)
class FitnessSpec:
    """Textual fitness description: ``name[,target=..][,perm=..][,noise=..]``.

    ``target`` is ``ones``, ``random`` or an explicit bit string; ``perm`` is
    ``identity`` or ``random``; ``noise`` is ``gauss:<sigma>`` or
    ``prior:<q>``. Random targets and orders are drawn per run from the run
    seed, so a sweep averages over them.
    """

    name: str = "onemax"
    target: str = "ones"
    perm: str = "identity"
    noise: Noise | None = None

    def __post_init__(self):
        if self.name not in CODES:
            raise ValueError(f"unknown fitness {self.name!r}; choose from {', '.join(NAMES)}")
        if self.target not in ("ones", "random"):
            parse_bits(self.target)
        if self.perm not in ("identity", "random"):
            raise ValueError("perm must be 'identity' or 'random'")
        if self.perm == "random" and self.name != "leadingones":
            raise ValueError(f"{self.name} is generalized by target only; perm must be the identity")

    @classmethod
    def parse(cls, text: str) -> FitnessSpec:
        parts = [s.strip() for s in text.split(",") if s.strip()]
        if not parts:
            raise ValueError("empty fitness spec")
        kw: dict = {"name": parts[0].lower()}
        for item in parts[1:]:
            key, sep, value = item.partition("=")
            key = key.strip().lower()
            if not sep or key not in ("target", "perm", "noise"):
                raise ValueError(f"bad fitness modifier {item!r}")
            kw[key] = Noise.parse(value) if key == "noise" else value.strip()
        return cls(**kw)

    def with_noise(self, noise: Noise | None) -> FitnessSpec:
        return replace(self, noise=noise)

    def __str__(self) -> str:
        s = self.name
        if self.target != "ones":
            s += f",target={self.target}"
        if self.perm != "identity":
            s += f",perm={self.perm}"
        if self.noise is not None:
            s += f",noise={self.noise}"
        return s

    @property
    def randomized(self) -> bool:
        return self.target == "random" or self.perm == "random"

    def build(self, n: int, seed: int = 0):
        """Concrete fitness for problem size ``n`` and run ``seed``."""
        if self.target == "ones":
            target = None
        elif self.target == "random":
            target = (derive_stream(seed, [TARGET_TAG]).random_array(n) < 0.5).astype(np.uint8)
        else:
            target = parse_bits(self.target)
            if target.size != n:
                raise ValueError(f"target has length {target.size}, n is {n}")
        perm = None
        if self.perm == "random":
            perm = _permutation(n, derive_stream(seed, [PERM_TAG]))
        f = Benchmark(self.name, n, target, perm)
        if self.noise is not None:
            return NoisyFitness(f, self.noise, derive_stream(seed, [NOISE_TAG]))
        return f


def _permutation(n: int, rng: RngStream) -> np.ndarray:
    """Fisher-Yates from the top down."""
    p = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = rng.integer(i + 1)
        p[i], p[j] = p[j], p[i]
    return p
