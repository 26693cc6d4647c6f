"""Reproduction protocols: sweeps, phase transitions, scaling fits, comparisons
and noise studies.

Replicate ``r`` of grid point ``g`` runs with seed
``derive_seed(master_seed, [g, r])``. Runs are spread over a thread pool (the
compiled loops release the GIL) and collected by index, so every table is a
pure function of the protocol and its master seed, whatever the thread count.
"""

from __future__ import annotations

import io
import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import rules, stats
from .edas import ALGORITHMS, ConfigError, EdaConfig
from .fitness import FitnessSpec, Noise
from .runner import StopCondition, run, run_ea
from .stats import GENERATOR_ID, derive_seed

SWEEP_COLUMNS = (
    "algo", "fitness", "n", "lambda", "mu", "rho", "K", "epsilon", "margin",
    "runs", "success_rate", "mean_evals", "median_evals", "std_evals",
    "mean_border_hits", "master_seed",
)

DEFAULT_BUDGET = "5000*n*log(n+1)*lambda"
EA_TAG = 0x6561


def default_threads() -> int:
    env = os.environ.get("EDA_LAB_THREADS")
    if env:
        v = int(env)
        if v < 1:
            raise ValueError("EDA_LAB_THREADS must be >= 1")
        return v
    return os.cpu_count() or 1


def parallel_map(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]`` on a thread pool, results in input order."""
    items = list(items)
    threads = threads or default_threads()
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def fmt(v) -> str:
    """CSV field: empty when absent, shortest round-trip form for numbers."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# protocols


@dataclass(frozen=True)
class SweepProtocol:
    """A grid of configurations plus replicate count and seeding.

    Parameter entries are numbers or rule expressions. ``lam``, ``K``,
    ``rho`` and ``epsilon`` are lists (grid axes); ``mu`` and ``margin`` are
    single rules. Rules see ``n``, ``lam``/``lambda`` and, in noise studies,
    ``sigma`` and ``sigma2``. Integer parameters are floored.
    The grid is the product n x lam x rho x K x epsilon, with n outermost.
    """

    algorithm: str
    n: tuple = ()
    fitness: FitnessSpec = field(default_factory=FitnessSpec)
    lam: tuple = ()
    mu: str | int | None = None
    rho: tuple = ()
    K: tuple = ()
    epsilon: tuple = ()
    margin: str | float | None = None
    borderless: bool = False
    history_cap: int | None = None
    runs: int = 300
    master_seed: int = 0
    max_evals: str | int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        for name in ("n", "lam", "rho", "K", "epsilon"):
            v = getattr(self, name)
            if isinstance(v, (str, int, float)):
                v = (v,)
            object.__setattr__(self, name, tuple(v))
        if isinstance(self.fitness, str):
            object.__setattr__(self, "fitness", FitnessSpec.parse(self.fitness))
        if not self.n:
            raise ConfigError("the n grid is empty")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        self.grid()  # validates every point

    def _env(self, n, extra):
        # outside noise studies the noise variables describe a noise-free run
        env = {"n": n, "sigma": 0.0, "sigma2": 0.0}
        env.update(extra)
        return env

    def grid(self, **extra) -> list[tuple[EdaConfig, int]]:
        """All ``(config, budget)`` pairs in grid order."""
        out = []
        axes = [self.lam or (None,), self.rho or (None,), self.K or (None,), self.epsilon or (None,)]
        for n in self.n:
            n = int(n)
            for lam_r, rho_r, k_r, eps_r in itertools.product(*axes):
                env = self._env(n, extra)
                kw: dict = {}
                if lam_r is not None:
                    lam = rules.evaluate_int(lam_r, **env)
                    kw["lam"] = lam
                    env["lam"] = env["lambda"] = lam
                if self.mu is not None:
                    kw["mu"] = rules.evaluate_int(self.mu, **env)
                if rho_r is not None:
                    kw["rho"] = float(rules.evaluate(rho_r, **env))
                if k_r is not None:
                    kw["K"] = float(rules.evaluate(k_r, **env))
                if eps_r is not None:
                    kw["epsilon"] = float(rules.evaluate(eps_r, **env))
                if self.margin is not None:
                    kw["margin"] = float(rules.evaluate(self.margin, **env))
                if self.history_cap is not None:
                    kw["history_cap"] = int(self.history_cap)
                cfg = EdaConfig(self.algorithm, n, borderless=self.borderless, **kw)
                env["lam"] = env["lambda"] = cfg.lam
                budget = rules.evaluate(self.max_evals, **env)
                budget = int(math.ceil(budget))
                StopCondition(budget).check(cfg)
                out.append((cfg, budget))
        return out

    def describe(self) -> dict:
        d = asdict(self)
        d["fitness"] = str(self.fitness)
        return d


@dataclass
class GridResult:
    """All replicates of one grid point."""

    cfg: EdaConfig
    budget: int
    fitness: str
    master_seed: int
    results: list

    @property
    def runs(self) -> int:
        return len(self.results)

    @property
    def runtimes(self) -> np.ndarray:
        return np.array([r.evaluations_to_hit for r in self.results if r.hit], dtype=np.float64)

    @property
    def border_hits(self) -> np.ndarray:
        return np.array([r.lower_border_hits for r in self.results], dtype=np.float64)

    @property
    def success_rate(self) -> float:
        return sum(r.hit for r in self.results) / len(self.results)

    def summary(self) -> dict:
        rt = self.runtimes
        mean = median = std = None
        if rt.size:
            mean, sd = stats.mean_std(rt)
            median = float(np.median(rt))
            std = sd if rt.size > 1 else None
        c = self.cfg
        return {
            "algo": c.algorithm,
            "fitness": self.fitness,
            "n": c.n,
            "lambda": c.lam,
            "mu": c.mu,
            "rho": c.rho,
            "K": c.K,
            "epsilon": c.epsilon,
            "margin": c.m,
            "runs": self.runs,
            "success_rate": self.success_rate,
            "mean_evals": mean,
            "median_evals": median,
            "std_evals": std,
            "mean_border_hits": stats.mean_std(self.border_hits)[0],
            "master_seed": self.master_seed,
        }


@dataclass
class SweepTable:
    protocol: SweepProtocol
    points: list[GridResult]

    def rows(self) -> list[dict]:
        return [p.summary() for p in self.points]

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows()]

    def to_csv(self, meta: dict | None = None) -> str:
        return write_csv(SWEEP_COLUMNS, self.rows(), meta or {"protocol": self.protocol.describe()})


def metadata_line(meta: dict) -> str:
    from . import __version__

    payload = {"tool": f"edalab {__version__}", "generator": GENERATOR_ID}
    payload.update(meta)
    return "# " + json.dumps(payload, sort_keys=True, default=str)


def write_csv(columns, rows, meta: dict) -> str:
    """CSV text with a ``#`` metadata line, a header row and LF endings."""
    buf = io.StringIO()
    buf.write(metadata_line(meta) + "\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(row.get(c)) for c in columns) + "\n")
    return buf.getvalue()


def read_csv(text: str) -> tuple[list[str], list[dict]]:
    """Parse a CSV written by :func:`write_csv` (comment lines skipped)."""
    import csv

    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return list(reader.fieldnames or []), list(reader)


def _run_point(args):
    cfg, budget, spec, seed, engine, kwargs = args
    f = spec.build(cfg.n, seed)
    return run(cfg, f, StopCondition(budget), seed, engine=engine, **kwargs)


def run_grid(protocol: SweepProtocol, threads: int | None = None, engine: str = "auto",
             grid_extra: dict | None = None, run_kwargs: dict | None = None) -> SweepTable:
    """Run every replicate of every grid point."""
    grid = protocol.grid(**(grid_extra or {}))
    tasks = []
    for g, (cfg, budget) in enumerate(grid):
        for r in range(protocol.runs):
            seed = derive_seed(protocol.master_seed, [g, r])
            tasks.append((cfg, budget, protocol.fitness, seed, engine, run_kwargs or {}))
    results = parallel_map(_run_point, tasks, threads)
    points = []
    for g, (cfg, budget) in enumerate(grid):
        chunk = results[g * protocol.runs:(g + 1) * protocol.runs]
        points.append(GridResult(cfg, budget, str(protocol.fitness), protocol.master_seed, chunk))
    return SweepTable(protocol, points)


def sweep(protocol: SweepProtocol, threads: int | None = None, engine: str = "auto") -> SweepTable:
    """One aggregated row per grid point; see :data:`SWEEP_COLUMNS`."""
    return run_grid(protocol, threads, engine)


def reference_protocol(runs: int = 3000, master_seed: int = 0, step_size: int = 2) -> SweepProtocol:
    """UMDA on OneMax, n = 2000, lambda = 14..350, mu = lambda/2."""
    return SweepProtocol(
        "umda", (2000,), FitnessSpec("onemax"), tuple(range(14, 351, step_size)),
        mu="lambda/2", runs=runs, master_seed=master_seed,
    )


def desk_protocol(runs: int = 300, master_seed: int = 0) -> SweepProtocol:
    """The reference sweep at desk scale: lambda step 8 and 300 replicates."""
    return reference_protocol(runs, master_seed, step_size=8)


# ---------------------------------------------------------------------------
# phase transition


@dataclass(frozen=True)
class PhaseTransition:
    reached: bool
    lam_star: int | None
    bracket: tuple | None

    def __str__(self) -> str:
        if not self.reached:
            return "not reached in grid"
        return f"lambda*={self.lam_star} in ({self.bracket[0]}, {self.bracket[1]}]"


def phase_transition(sweep_output, threshold: float) -> PhaseTransition:
    """Smallest grid lambda with mean border hits <= ``threshold``.

    ``sweep_output`` is a :class:`SweepTable` or a sequence of
    ``(lambda, mean_border_hits)`` pairs. The bracket is
    ``(previous grid lambda, lambda*)``; at the first grid point both ends
    are ``lambda*``.
    """
    if isinstance(sweep_output, SweepTable):
        pairs = [(r["lambda"], r["mean_border_hits"]) for r in sweep_output.rows()]
    else:
        pairs = [(int(a), float(b)) for a, b in sweep_output]
    pairs.sort()
    prev = None
    for lam, hits in pairs:
        if hits <= threshold:
            return PhaseTransition(True, lam, (prev if prev is not None else lam, lam))
        prev = lam
    return PhaseTransition(False, None, None)


# ---------------------------------------------------------------------------
# scaling


@dataclass
class ScalingReport:
    """Median runtime per n and the fitted log-log slope.

    ``slope`` stays ``None`` with fewer than four distinct n.
    """

    ns: list
    medians: list
    success_rates: list
    runs: list
    slope: float | None = None
    stderr: float | None = None
    r_squared: float | None = None
    budget_limited: bool = False

    def slope_ci(self, level: float = 0.95) -> tuple[float, float]:
        if self.slope is None:
            raise ValueError("no slope fitted")
        return stats.slope_ci(self.slope, self.stderr, len(self.ns), level)

    def rows(self) -> list[dict]:
        return [
            {"n": n, "runs": r, "success_rate": s, "median_evals": m,
             "slope": self.slope, "slope_stderr": self.stderr, "r_squared": self.r_squared,
             "budget_limited": self.budget_limited}
            for n, m, s, r in zip(self.ns, self.medians, self.success_rates, self.runs)
        ]


def fit_scaling(ns, medians, success_rates=None, runs=None) -> ScalingReport:
    ns = [int(n) for n in ns]
    success_rates = list(success_rates) if success_rates is not None else [1.0] * len(ns)
    runs = list(runs) if runs is not None else [None] * len(ns)
    rep = ScalingReport(ns, list(medians), success_rates, runs)
    rep.budget_limited = any(s < 0.95 for s in success_rates)
    pts = [(n, m) for n, m in zip(ns, medians) if m is not None and m > 0]
    if len({n for n, _ in pts}) >= 4:
        rep.slope, rep.stderr, rep.r_squared = stats.loglog_slope(pts)
    return rep


def scaling_fit(protocol: SweepProtocol, threads: int | None = None) -> tuple[ScalingReport, SweepTable]:
    """Median evaluations per n and the slope of log(median) against log(n).

    The protocol must have one configuration per n.
    """
    table = sweep(protocol, threads)
    ns = [p.cfg.n for p in table.points]
    if len(set(ns)) != len(ns):
        raise ConfigError("scaling_fit needs exactly one configuration per n")
    medians = [float(np.median(p.runtimes)) if p.runtimes.size else None for p in table.points]
    rep = fit_scaling(ns, medians, [p.success_rate for p in table.points], [p.runs for p in table.points])
    return rep, table


# ---------------------------------------------------------------------------
# comparisons

COMPARE_COLUMNS = (
    "label", "algo", "fitness", "n", "runs", "success_rate", "median_evals",
    "median_ci_low", "median_ci_high", "mean_border_hits", "slope", "slope_stderr",
    "budget_limited",
)


@dataclass(frozen=True)
class CompareEntry:
    label: str
    protocol: SweepProtocol


@dataclass
class Comparison:
    entries: list
    reports: dict
    tables: dict

    def rows(self) -> list[dict]:
        out = []
        for e in self.entries:
            rep = self.reports[e.label]
            table = self.tables[e.label]
            for p in table.points:
                rt = p.runtimes
                med = lo = hi = None
                if rt.size >= 2:
                    med, lo, hi = stats.median_ci(rt)
                elif rt.size == 1:
                    med = float(rt[0])
                out.append({
                    "label": e.label, "algo": p.cfg.algorithm, "fitness": p.fitness,
                    "n": p.cfg.n, "runs": p.runs, "success_rate": p.success_rate,
                    "median_evals": med, "median_ci_low": lo, "median_ci_high": hi,
                    "mean_border_hits": stats.mean_std(p.border_hits)[0],
                    "slope": rep.slope, "slope_stderr": rep.stderr,
                    "budget_limited": p.success_rate < 0.95,
                })
        return out

    def to_csv(self) -> str:
        meta = {"compare": [{"label": e.label, "protocol": e.protocol.describe()} for e in self.entries]}
        return write_csv(COMPARE_COLUMNS, self.rows(), meta)


def compare(entries: list[CompareEntry], threads: int | None = None) -> Comparison:
    """Run each entry's protocol and tabulate medians and slopes.

    Budget exhaustion shows up as ``success_rate < 1`` and a
    ``budget_limited`` flag; the table is produced regardless.
    """
    labels = [e.label for e in entries]
    if len(set(labels)) != len(labels):
        raise ConfigError("comparison labels must be unique")
    reports, tables = {}, {}
    for e in entries:
        table = sweep(e.protocol, threads)
        ns = [p.cfg.n for p in table.points]
        medians = [float(np.median(p.runtimes)) if p.runtimes.size else None for p in table.points]
        rep = fit_scaling(ns, medians, [p.success_rate for p in table.points], [p.runs for p in table.points]) \
            if len(set(ns)) == len(ns) else ScalingReport(ns, medians, [], [])
        reports[e.label] = rep
        tables[e.label] = table
    return Comparison(list(entries), reports, tables)


# ---------------------------------------------------------------------------
# (1+1) EA baseline and noise


@dataclass
class EaStats:
    n: int
    c: float
    fitness: str
    results: list

    @property
    def runs(self) -> int:
        return len(self.results)

    @property
    def successes(self) -> int:
        return sum(r.hit for r in self.results)

    @property
    def success_rate(self) -> float:
        return self.successes / self.runs

    @property
    def runtimes(self) -> np.ndarray:
        return np.array([r.evaluations_to_hit for r in self.results if r.hit], dtype=np.float64)

    @property
    def median(self) -> float | None:
        rt = self.runtimes
        return float(np.median(rt)) if rt.size else None


def _ea_task(args):
    spec, n, c, budget, seed = args
    return run_ea(spec.build(n, seed), c, StopCondition(budget), seed)


def ea_baseline(fitness: FitnessSpec | str, n: int, runs: int, c: float = 1.0, master_seed: int = 0,
                max_evals: int | None = None, threads: int | None = None) -> EaStats:
    """(1+1) EA replicates with seeds ``derive_seed(master, [EA_TAG, r])``."""
    spec = FitnessSpec.parse(fitness) if isinstance(fitness, str) else fitness
    budget = max_evals if max_evals is not None else math.ceil(5000 * n * math.log(n + 1))
    tasks = [(spec, n, c, budget, derive_seed(master_seed, [EA_TAG, r])) for r in range(runs)]
    return EaStats(n, c, str(spec), parallel_map(_ea_task, tasks, threads))


NOISE_COLUMNS = (
    "noise", "sigma2", "algo", "n", "K", "lambda", "runs", "success_rate", "success_ci_low",
    "success_ci_high", "median_evals", "ea_runs", "ea_success_rate", "ea_success_ci_low",
    "ea_success_ci_high", "ea_median_evals",
)


@dataclass
class NoiseStudy:
    levels: list
    eda: list  # GridResult per level
    ea: list  # EaStats per level or None

    def rows(self) -> list[dict]:
        out = []
        for s2, g, e in zip(self.levels, self.eda, self.ea):
            lo, hi = stats.wilson_interval(sum(r.hit for r in g.results), g.runs)
            rt = g.runtimes
            row = {
                "noise": "gauss", "sigma2": s2, "algo": g.cfg.algorithm, "n": g.cfg.n,
                "K": g.cfg.K, "lambda": g.cfg.lam, "runs": g.runs,
                "success_rate": g.success_rate, "success_ci_low": lo, "success_ci_high": hi,
                "median_evals": float(np.median(rt)) if rt.size else None,
            }
            if e is not None:
                elo, ehi = stats.wilson_interval(e.successes, e.runs)
                row.update({
                    "ea_runs": e.runs, "ea_success_rate": e.success_rate,
                    "ea_success_ci_low": elo, "ea_success_ci_high": ehi,
                    "ea_median_evals": e.median,
                })
            out.append(row)
        return out

    def to_csv(self, meta: dict) -> str:
        return write_csv(NOISE_COLUMNS, self.rows(), meta)


def noise_study(protocol: SweepProtocol, sigma2_grid, ea_runs: int | None = None, ea_c: float = 1.0,
                threads: int | None = None) -> NoiseStudy:
    """EDA and (1+1) EA under Gaussian posterior noise of variance ``sigma2``.

    The protocol's rules may use ``sigma`` and ``sigma2``; it must describe a
    single configuration. Every level reuses the same replicate seeds, so
    ``sigma2 = 0`` reproduces the noise-free runs exactly.
    """
    levels, eda, ea = [], [], []
    base_fit = replace(protocol.fitness, noise=None)
    for s2 in sigma2_grid:
        s2 = float(s2)
        if s2 < 0:
            raise ConfigError("noise variance must be >= 0")
        sigma = math.sqrt(s2)
        proto = replace(protocol, fitness=base_fit.with_noise(Noise("gauss", sigma)))
        table = run_grid(proto, threads, grid_extra={"sigma": sigma, "sigma2": s2})
        if len(table.points) != 1:
            raise ConfigError("noise_study needs a protocol with a single configuration")
        levels.append(s2)
        eda.append(table.points[0])
        if ea_runs:
            cfg, budget = proto.grid(sigma=sigma, sigma2=s2)[0]
            ea.append(ea_baseline(proto.fitness, cfg.n, ea_runs, ea_c, protocol.master_seed, budget, threads))
        else:
            ea.append(None)
    return NoiseStudy(levels, eda, ea)
