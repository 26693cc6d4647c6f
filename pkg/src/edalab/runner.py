"""Full optimization runs with hitting-time measurement and instrumentation.

A run is a pure function of ``(cfg, f, stop, seed)``. The sampling and
tie-break stream is ``RngStream(seed)``; a noisy fitness function gets its
own stream ``derive_stream(seed, [NOISE_TAG])`` regardless of the stream it
was constructed with.

Two engines produce identical results: ``"kernel"`` runs compiled loops and
handles the built-in benchmarks, ``"python"`` steps through
:func:`edalab.edas.step` and accepts any fitness callable. ``"auto"`` picks
the kernel whenever it can.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import _kernels as K
from .edas import ALGO_CODES, EdaConfig, EdaState, step
from .fitness import NOISE_TAG, Benchmark, NoisyFitness
from .stats import RngStream, derive_stream

_FOREVER = 1 << 62
_BLOCK_BITS = 512  # sig-cGA history bits per stored running count


def default_budget(n: int, lam: int = 1) -> int:
    """``ceil(5000 * n * ln(n + 1) * lam)`` evaluations."""
    return math.ceil(5000.0 * n * math.log(n + 1) * lam)


@dataclass(frozen=True)
class StopCondition:
    """Evaluation budget; the target is the fitness function's optimum."""

    max_evaluations: int

    def __post_init__(self):
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be positive")

    @classmethod
    def default(cls, cfg: EdaConfig) -> StopCondition:
        return cls(default_budget(cfg.n, cfg.lam))

    def check(self, cfg: EdaConfig):
        if self.max_evaluations < cfg.lam:
            raise ValueError(f"max_evaluations must be >= lambda ({cfg.lam})")


@dataclass(eq=False)
class RunResult:
    """Outcome of one run.

    Attributes:
        hit: an optimal point was sampled within the budget.
        evaluations_to_hit: index of the first optimal sample (``None`` if
            not hit).
        evaluations: fitness evaluations spent in total.
        generations: sampling rounds begun, including a final partial one.
        completed_generations: frequency updates performed.
        lower_border_hits: moves of a frequency from above ``m`` onto ``m``.
        absorptions: borderless runs only, moves of a frequency onto 0.
        final_p: frequency vector at the end.
        trajectory: ``(t, p)`` snapshots when traced.
        potential_trace: ``(t, sum(p))`` when traced.
    """

    hit: bool
    evaluations_to_hit: int | None
    evaluations: int
    generations: int
    completed_generations: int
    lower_border_hits: int
    absorptions: int
    final_p: np.ndarray
    seed: int
    trajectory: list | None = None
    potential_trace: list | None = None

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunResult):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if f.name == "final_p":
                if not np.array_equal(a, b):
                    return False
            elif f.name == "trajectory":
                if (a is None) != (b is None):
                    return False
                if a is not None and (
                    len(a) != len(b)
                    or any(ta != tb or not np.array_equal(pa, pb) for (ta, pa), (tb, pb) in zip(a, b))
                ):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None

    @property
    def runtime(self) -> int | None:
        return self.evaluations_to_hit


def bind_noise(f, seed: int):
    """Give a noisy function the run's own noise stream."""
    if isinstance(f, NoisyFitness):
        return f.with_rng(derive_stream(seed, [NOISE_TAG]))
    return f


def kernel_supported(f) -> bool:
    if isinstance(f, Benchmark):
        return True
    return isinstance(f, NoisyFitness) and isinstance(f.inner, Benchmark)


def _pick_engine(engine: str, f) -> str:
    if engine not in ("auto", "kernel", "python"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "auto":
        return "kernel" if kernel_supported(f) else "python"
    if engine == "kernel" and not kernel_supported(f):
        raise ValueError("the kernel engine needs a built-in benchmark")
    return engine


def run(
    cfg: EdaConfig,
    f,
    stop: StopCondition | None = None,
    seed: int = 0,
    *,
    engine: str = "auto",
    probe_every: int | None = None,
    snapshots: bool = True,
) -> RunResult:
    """Run until an optimum is sampled or the budget is spent.

    With ``probe_every`` set, ``p`` and ``sum(p)`` are recorded at ``t = 0``
    and after every ``probe_every`` completed generations. Recording never
    touches the random streams.
    """
    if f.n != cfg.n:
        raise ValueError(f"fitness has n={f.n}, config has n={cfg.n}")
    stop = stop or StopCondition.default(cfg)
    stop.check(cfg)
    if probe_every is not None and probe_every < 1:
        raise ValueError("probe_every must be >= 1")
    f = bind_noise(f, seed)
    if _pick_engine(engine, f) == "kernel":
        return _run_kernel(cfg, f, stop, seed, probe_every, snapshots)
    return _run_python(cfg, f, stop, seed, probe_every, snapshots)


def trace(cfg, f, stop=None, seed=0, probe_every: int = 1, **kw) -> RunResult:
    """:func:`run` with trajectory and potential recording."""
    return run(cfg, f, stop, seed, probe_every=probe_every, **kw)


class _Probe:
    def __init__(self, probe_every, snapshots):
        self.on = probe_every is not None
        self.snapshots = snapshots
        self.trajectory = [] if self.on and snapshots else None
        self.potential = [] if self.on else None

    def record(self, t, p):
        if not self.on:
            return
        if self.trajectory is not None:
            self.trajectory.append((t, p.copy()))
        self.potential.append((t, float(np.sum(p))))


def _run_python(cfg, f, stop, seed, probe_every, snapshots) -> RunResult:
    rng = RngStream(seed)
    state = EdaState.initial(cfg)
    probe = _Probe(probe_every, snapshots)
    probe.record(0, state.p)
    while True:
        state, _ = step(state, cfg, f, rng, stop.max_evaluations)
        if state.done:
            break
        if probe.on and state.t % probe_every == 0:
            probe.record(state.t, state.p)
    return RunResult(
        hit=state.hit,
        evaluations_to_hit=state.evaluations_to_hit,
        evaluations=state.evaluations,
        generations=state.started,
        completed_generations=state.t,
        lower_border_hits=state.border_hits,
        absorptions=state.absorptions,
        final_p=state.p.copy(),
        seed=seed,
        trajectory=probe.trajectory,
        potential_trace=probe.potential,
    )


def _run_kernel(cfg, f, stop, seed, probe_every, snapshots) -> RunResult:
    n = cfg.n
    code, target, perm, _, kind, param = f.kernel_args()
    target = np.ascontiguousarray(target, dtype=np.uint8)
    perm = np.ascontiguousarray(perm, dtype=np.int64)
    s = RngStream(seed).state
    ns = derive_stream(seed, [NOISE_TAG]).state
    if isinstance(f, NoisyFitness):
        ns = f.rng.state
    p = np.full(n, 0.5)
    lam = cfg.lam
    pop = np.zeros((lam, n), dtype=np.uint8)
    fit = np.zeros(lam)
    keys = np.zeros(lam, dtype=np.uint64)
    scratch = np.zeros(n, dtype=np.uint8)
    counters = np.zeros(K.N_COUNTERS, dtype=np.int64)
    max_evals = int(stop.max_evaluations)
    chunk = probe_every if probe_every is not None else _FOREVER
    probe = _Probe(probe_every, snapshots)
    probe.record(0, p)

    if cfg.algorithm == "sig_cga":
        cap = cfg.cap
        block_bits = min(cap, _BLOCK_BITS)
        # time-major rings: row t holds every position's bit of generation t
        hist = np.zeros((cap // 64, n), dtype=np.uint64)
        cum = np.zeros((cap // block_bits, n), dtype=np.uint32)
        born = np.zeros(n, dtype=np.int64)
        total = np.zeros(n, dtype=np.int64)
        due = np.ones(n, dtype=np.int64)

        def advance():
            return K.sigcga_generations(
                float(cfg.epsilon), code, target, perm, kind, param,
                p, s, ns, pop, fit, keys, scratch, counters,
                hist, cum, cap, block_bits, born, total, due, max_evals, chunk,
            )
    else:
        cnt = np.zeros(n)
        m = cfg.m
        margin = -1.0 if m is None else float(m)
        algo = ALGO_CODES[cfg.algorithm]
        mu = int(cfg.mu) if cfg.mu is not None else 2
        rho = float(cfg.rho) if cfg.rho is not None else 1.0
        kk = float(cfg.K) if cfg.K is not None else 1.0

        def advance():
            return K.bernoulli_generations(
                algo, lam, mu, rho, kk, margin,
                code, target, perm, kind, param,
                p, s, ns, pop, fit, keys, cnt, scratch, counters,
                max_evals, chunk,
            )

    while True:
        status = advance()
        if status != K.PAUSED:
            break
        probe.record(int(counters[K.C_UPDATES]), p)

    hit = bool(counters[K.C_HIT])
    return RunResult(
        hit=hit,
        evaluations_to_hit=int(counters[K.C_EVALS]) if hit else None,
        evaluations=int(counters[K.C_EVALS]),
        generations=int(counters[K.C_STARTED]),
        completed_generations=int(counters[K.C_UPDATES]),
        lower_border_hits=int(counters[K.C_BORDER_HITS]),
        absorptions=int(counters[K.C_ABSORPTIONS]),
        final_p=p.copy(),
        seed=seed,
        trajectory=probe.trajectory,
        potential_trace=probe.potential,
    )


# ---------------------------------------------------------------------------
# (1+1) EA baseline


@dataclass(frozen=True)
class EaResult:
    hit: bool
    evaluations_to_hit: int | None
    evaluations: int
    iterations: int
    seed: int


def run_ea(f, c: float = 1.0, stop: StopCondition | None = None, seed: int = 0, *, engine: str = "auto") -> EaResult:
    """(1+1) EA with standard bit mutation at rate ``c/n``.

    The offspring replaces the parent iff its fitness is not worse. Under
    noise the parent is re-evaluated in every iteration and that evaluation
    counts towards the budget. Degenerate noise (sigma = 0 or q = 0) is
    treated as noise-free, so such runs match the noise-free ones exactly.
    Mutation draws, including the uniform initial point, come from
    ``RngStream(seed)``.
    """
    n = f.n
    if isinstance(f, NoisyFitness) and f.noise.param == 0.0:
        f = f.inner
    if not c > 0.0 or c > n:
        raise ValueError("mutation strength c must lie in (0, n]")
    stop = stop or StopCondition(default_budget(n))
    f = bind_noise(f, seed)
    if _pick_engine(engine, f) == "kernel":
        code, target, perm, _, kind, param = f.kernel_args()
        x = np.zeros(n, dtype=np.uint8)
        y = np.zeros(n, dtype=np.uint8)
        scratch = np.zeros(n, dtype=np.uint8)
        counters = np.zeros(K.N_COUNTERS, dtype=np.int64)
        s = RngStream(seed).state
        ns = f.rng.state if isinstance(f, NoisyFitness) else derive_stream(seed, [NOISE_TAG]).state
        status = K.ea_run(
            c / n, code, np.ascontiguousarray(target, dtype=np.uint8),
            np.ascontiguousarray(perm, dtype=np.int64), kind, param,
            x, y, s, ns, scratch, counters, int(stop.max_evaluations),
        )
        hit = status == K.HIT
        ev = int(counters[K.C_EVALS])
        return EaResult(hit, ev if hit else None, ev, int(counters[K.C_STARTED]), seed)
    return _ea_python(f, c / n, stop, seed)


def _ea_python(f, rate, stop, seed) -> EaResult:
    rng = RngStream(seed)
    n = f.n
    noisy = isinstance(f, NoisyFitness)
    true_f = f.inner if noisy else f
    x = (rng.random_array(n) < 0.5).astype(np.uint8)
    evals = iters = 1
    if f.is_optimum(x):
        return EaResult(True, 1, 1, 1, seed)
    fx = true_f.evaluate(x)
    log_q = math.log1p(-rate) if rate < 1.0 else -math.inf
    budget = stop.max_evaluations
    while True:
        y = x.copy()
        pos, flips = -1, 0
        while True:
            u = 1.0 - rng.random()
            gap = math.floor(math.log(u) / log_q) if log_q != -math.inf else 0
            if gap >= n:
                break
            pos += gap + 1
            if pos >= n:
                break
            y[pos] = 1 - y[pos]
            flips += 1
        if noisy:
            if evals >= budget:
                break
            parent = f.evaluate(x)
            evals += 1
        if evals >= budget:
            break
        iters += 1
        evals += 1
        if flips == 0:
            if noisy:
                f.evaluate(y)
            continue
        if f.is_optimum(y):
            return EaResult(True, evals, evals, iters, seed)
        fy = true_f.evaluate(y)
        accept = f.evaluate(y) >= parent if noisy else fy >= fx
        if accept:
            x, fx = y, fy
    return EaResult(False, None, evals, iters, seed)
