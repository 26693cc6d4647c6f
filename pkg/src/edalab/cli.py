"""Command-line front end.

Commands: ``run``, ``sweep``, ``scaling``, ``compare``, ``noise``,
``drift-check`` and ``plot``. Exit codes: 0 success, 1 configuration or
input error, 2 budget exhausted (``run``), 3 a drift bound check failed.

Experiment commands read INI files. A ``[sweep]`` section (``[scaling]`` and
``[noise]`` use the same keys) looks like::

    [sweep]
    algorithm = umda
    n = 2000
    lambda = 14:350:8        ; start:stop:step, inclusive; or a comma list
    mu = lambda/2            ; rules may use n, lambda (and sigma, sigma2)
    runs = 300
    master_seed = 1

    [fitness]
    name = onemax
    noise = gauss:1.0

Unknown sections or keys are rejected.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
from collections import defaultdict

import numpy as np

from . import __version__, drift, experiments, stats
from .edas import ConfigError, EdaConfig
from .experiments import CompareEntry, SweepProtocol, write_csv
from .fitness import FitnessSpec, Noise
from .plot import line_plot
from .rules import RuleError
from .runner import StopCondition, default_budget, run

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_FAIL = 0, 1, 2, 3

SWEEP_KEYS = {
    "algorithm", "n", "lambda", "mu", "rho", "k", "epsilon", "margin", "borderless",
    "history_cap", "runs", "master_seed", "max_evals", "fitness",
}
FITNESS_KEYS = {"name", "target", "perm", "noise"}
NOISE_KEYS = SWEEP_KEYS | {"sigma2", "ea_runs", "ea_c"}

RUN_COLUMNS = (
    "algo", "fitness", "n", "lambda", "mu", "rho", "K", "epsilon", "margin", "seed",
    "max_evals", "hit", "evaluations_to_hit", "evaluations", "generations", "lower_border_hits",
)


class CliError(Exception):
    """Bad input; reported on stderr with exit code 1."""


# ---------------------------------------------------------------------------
# config files


def split_top(text: str) -> list[str]:
    """Split on commas that are not inside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur).strip())
    return [p for p in parts if p]


def parse_axis(text: str) -> tuple:
    """``"14:350:8"`` -> range; ``"a, b"`` -> list; numbers become numbers."""
    out = []
    for item in split_top(text):
        if item.count(":") == 2 and all(s.strip().lstrip("-").isdigit() for s in item.split(":")):
            a, b, s = (int(v) for v in item.split(":"))
            if s <= 0:
                raise CliError(f"range step must be positive: {item!r}")
            out.extend(range(a, b + 1, s))
        else:
            out.append(_number(item))
    return tuple(out)


def _number(item: str):
    try:
        return int(item)
    except ValueError:
        pass
    try:
        return float(item)
    except ValueError:
        return item


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise CliError(f"not a boolean: {text!r}")


def read_config(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise CliError(f"malformed config {path}: {exc}") from None
    return cp


def _check_keys(section, allowed, name):
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise CliError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")


def fitness_from(cp, section) -> FitnessSpec:
    spec = FitnessSpec()
    if "fitness" in section:
        spec = FitnessSpec.parse(section["fitness"])
    if cp.has_section("fitness"):
        fs = cp["fitness"]
        _check_keys(fs, FITNESS_KEYS, "fitness")
        kw = {"name": fs.get("name", spec.name), "target": fs.get("target", spec.target),
              "perm": fs.get("perm", spec.perm)}
        noise = fs.get("noise", "").strip()
        kw["noise"] = Noise.parse(noise) if noise else spec.noise
        spec = FitnessSpec(**kw)
    return spec


def protocol_from(section, fitness: FitnessSpec, allowed=SWEEP_KEYS, name="sweep") -> SweepProtocol:
    _check_keys(section, allowed, name)
    if "algorithm" not in section or "n" not in section:
        raise CliError(f"[{name}] needs at least 'algorithm' and 'n'")

    def opt(key):
        v = section.get(key, "").strip()
        return v or None

    kw = {
        "algorithm": section["algorithm"].strip(),
        "n": parse_axis(section["n"]),
        "fitness": fitness,
        "lam": parse_axis(opt("lambda") or ""),
        "mu": _number(opt("mu")) if opt("mu") else None,
        "rho": parse_axis(opt("rho") or ""),
        "K": parse_axis(opt("k") or ""),
        "epsilon": parse_axis(opt("epsilon") or ""),
        "margin": _number(opt("margin")) if opt("margin") else None,
        "borderless": _bool(section.get("borderless", "false")),
        "history_cap": int(opt("history_cap")) if opt("history_cap") else None,
        "runs": int(section.get("runs", "300")),
        "master_seed": int(section.get("master_seed", "0"), 0),
        "max_evals": _number(opt("max_evals")) if opt("max_evals") else experiments.DEFAULT_BUDGET,
    }
    return SweepProtocol(**kw)


def _single_section(cp, wanted):
    names = cp.sections()
    extra = [s for s in names if s not in (wanted, "fitness")]
    if extra:
        raise CliError(f"unknown section(s): {', '.join(extra)}")
    if wanted not in names:
        raise CliError(f"config needs a [{wanted}] section")
    return cp[wanted]


def write_output(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# commands


def cmd_run(a) -> int:
    spec = FitnessSpec.parse(a.fitness)
    try:
        cfg = EdaConfig(
            a.algo, a.n, lam=a.lam, mu=a.mu, rho=a.rho, K=a.K, epsilon=a.epsilon,
            margin=a.margin, borderless=a.borderless, history_cap=a.history_cap,
        )
    except ConfigError as exc:
        raise CliError(str(exc)) from None
    budget = a.max_evals if a.max_evals is not None else default_budget(cfg.n, cfg.lam)
    stop = StopCondition(budget)
    try:
        stop.check(cfg)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    f = spec.build(cfg.n, a.seed)
    r = run(cfg, f, stop, a.seed, engine=a.engine)
    print(f"algo={cfg.algorithm} n={cfg.n} fitness={spec} seed={a.seed} max_evals={budget}")
    print(
        f"hit={'true' if r.hit else 'false'} evaluations_to_hit={experiments.fmt(r.evaluations_to_hit)} "
        f"evaluations={r.evaluations} generations={r.generations} "
        f"lower_border_hits={r.lower_border_hits} absorptions={r.absorptions}"
    )
    if a.csv:
        row = {
            "algo": cfg.algorithm, "fitness": str(spec), "n": cfg.n, "lambda": cfg.lam, "mu": cfg.mu,
            "rho": cfg.rho, "K": cfg.K, "epsilon": cfg.epsilon, "margin": cfg.m, "seed": a.seed,
            "max_evals": budget, "hit": r.hit, "evaluations_to_hit": r.evaluations_to_hit,
            "evaluations": r.evaluations, "generations": r.generations,
            "lower_border_hits": r.lower_border_hits,
        }
        meta = {"command": "run", "config": cfg.as_dict(), "fitness": str(spec), "seed": a.seed,
                "max_evals": budget, "engine": a.engine}
        write_output(a.csv, write_csv(RUN_COLUMNS, [row], meta))
    return EXIT_OK if r.hit else EXIT_BUDGET


def cmd_sweep(a) -> int:
    cp = read_config(a.config)
    section = _single_section(cp, "sweep")
    proto = protocol_from(section, fitness_from(cp, section))
    table = experiments.sweep(proto, a.threads)
    write_output(a.out, table.to_csv({"command": "sweep", "protocol": proto.describe()}))
    return EXIT_OK


def cmd_scaling(a) -> int:
    cp = read_config(a.config)
    section = _single_section(cp, "scaling")
    proto = protocol_from(section, fitness_from(cp, section), name="scaling")
    rep, _ = experiments.scaling_fit(proto, a.threads)
    cols = ("n", "runs", "success_rate", "median_evals", "slope", "slope_stderr", "r_squared", "budget_limited")
    write_output(a.out, write_csv(cols, rep.rows(), {"command": "scaling", "protocol": proto.describe()}))
    if rep.slope is None:
        print("slope: not fitted (fewer than 4 distinct n)", file=sys.stderr)
    else:
        print(f"slope={rep.slope!r} stderr={rep.stderr!r} budget_limited={rep.budget_limited}", file=sys.stderr)
    return EXIT_OK


def cmd_compare(a) -> int:
    cp = read_config(a.config)
    entries = []
    for name in cp.sections():
        if not name.startswith("entry "):
            raise CliError(f"unknown section [{name}]; compare configs hold [entry <label>] sections")
        section = cp[name]
        spec = FitnessSpec.parse(section["fitness"]) if "fitness" in section else FitnessSpec()
        entries.append(CompareEntry(name[len("entry "):].strip(), protocol_from(section, spec, name=name)))
    if not entries:
        raise CliError("compare config has no [entry <label>] sections")
    cmp = experiments.compare(entries, a.threads)
    write_output(a.out, cmp.to_csv())
    return EXIT_OK


def cmd_noise(a) -> int:
    cp = read_config(a.config)
    section = _single_section(cp, "noise")
    _check_keys(section, NOISE_KEYS, "noise")
    grid = parse_axis(section.get("sigma2", "0"))
    ea_runs = int(section.get("ea_runs", "0"))
    ea_c = float(section.get("ea_c", "1"))
    base = {k: v for k, v in section.items() if k not in ("sigma2", "ea_runs", "ea_c")}
    proto = protocol_from(base, fitness_from(cp, section), name="noise")
    study = experiments.noise_study(proto, grid, ea_runs, ea_c, a.threads)
    meta = {"command": "noise", "protocol": proto.describe(), "sigma2": list(grid),
            "ea_runs": ea_runs, "ea_c": ea_c}
    write_output(a.out, study.to_csv(meta))
    return EXIT_OK


def read_traces(path: str) -> dict:
    """``run,t,value`` CSV -> {run: [(t, value), ...]} sorted by t."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise CliError(f"cannot read trace file {path}: {exc.strerror}") from None
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or not {"run", "t", "value"} <= set(reader.fieldnames):
        raise CliError("malformed trace file: header must contain run,t,value")
    traces = defaultdict(list)
    for k, row in enumerate(reader, start=2):
        try:
            traces[row["run"]].append((int(row["t"]), float(row["value"])))
        except (TypeError, ValueError):
            raise CliError(f"malformed trace file: bad row {k}") from None
    if not traces:
        raise CliError("malformed trace file: no data rows")
    return {k: sorted(v) for k, v in traces.items()}


def cmd_drift_check(a) -> int:
    if a.trace is None:
        names = list(drift.CHAINS) if a.chain == "all" else [a.chain]
        ok = True
        for name in names:
            res = drift.check_bound(name, a.runs, a.seed)
            print(res.line())
            ok &= res.passed
        return EXIT_OK if ok else EXIT_FAIL
    traces = read_traces(a.trace)
    try:
        h = drift.named_h(a.h)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    times, x0s = [], []
    for tr in traces.values():
        x0s.append(tr[0][1])
        hit = next((t - tr[0][0] for t, v in tr if v <= a.target), None)
        if hit is not None:
            times.append(hit)
    if len(times) < 2:
        raise CliError("trace file: fewer than 2 runs reach the target")
    x0 = max(x0s)
    if x0 < 1:
        raise CliError("trace file: starting values must be >= 1")
    bound, err = drift.variable_bound(x0, h, 1e-9)
    mean, hw = stats.mean_ci(times, 0.98)  # two-sided 98% = one-sided 99%
    passed = mean - hw <= bound
    print(f"traces={len(traces)} reached={len(times)} X0={x0!r} h={a.h}")
    print(f"bound={bound!r} (quadrature error {err:.3g}) empirical={mean!r} +- {hw!r} (99% one-sided)")
    vals = [[v for _, v in tr] for tr in traces.values()]
    hi = max(max(v) for v in vals)
    edges = np.linspace(0.0, hi, 6) if hi > 0 else np.array([0.0, 1.0])
    est = drift.empirical_drift(vals, edges)
    for b in est.bins:
        if b.mean is None:
            print(f"  [{b.low:.6g}, {b.high:.6g}) count={b.count} drift=n/a")
        else:
            print(f"  [{b.low:.6g}, {b.high:.6g}) count={b.count} drift={b.mean:.6g} se={b.stderr:.3g}")
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_plot(a) -> int:
    try:
        with open(a.inp, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {a.inp}: {exc.strerror}") from None
    cols, rows = experiments.read_csv(text)
    for c in [a.x] + a.y:
        if c not in cols:
            raise CliError(f"missing column {c!r} in {a.inp}")
    series = {}
    for ycol in a.y:
        pts = []
        for r in rows:
            xv, yv = r[a.x], r[ycol]
            if xv == "" or yv == "":
                continue
            try:
                pts.append((float(xv), float(yv)))
            except ValueError:
                raise CliError(f"non-numeric value in column {a.x!r} or {ycol!r}") from None
        series[ycol] = pts
    if not any(series.values()):
        raise CliError("no plottable rows")
    ylabel = ", ".join(a.y)
    write_output(a.out, line_plot(series, a.x, ylabel, a.title or ""))
    return EXIT_OK


# ---------------------------------------------------------------------------


def _threads(v: str) -> int:
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edalab", description="Univariate EDA laboratory")
    p.add_argument("--version", action="version", version=f"edalab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="a single run")
    r.add_argument("--algo", required=True, choices=["umda", "pbil", "mmas_ib", "cga", "sig_cga"])
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--fitness", default="onemax", help="e.g. onemax or 'leadingones,target=random'")
    r.add_argument("--lambda", dest="lam", type=int)
    r.add_argument("--mu", type=int)
    r.add_argument("--rho", type=float)
    r.add_argument("--K", type=float)
    r.add_argument("--epsilon", type=float)
    r.add_argument("--margin", type=float)
    r.add_argument("--borderless", action="store_true")
    r.add_argument("--history-cap", type=int)
    r.add_argument("--seed", type=lambda s: int(s, 0), default=0)
    r.add_argument("--max-evals", type=int)
    r.add_argument("--engine", choices=["auto", "kernel", "python"], default="auto")
    r.add_argument("--csv", help="also write a one-row CSV here")
    r.set_defaults(fn=cmd_run)

    for name, fn, helptext in (
        ("sweep", cmd_sweep, "parameter sweep from an INI config"),
        ("scaling", cmd_scaling, "runtime scaling fit from an INI config"),
        ("compare", cmd_compare, "comparison table from an INI config"),
        ("noise", cmd_noise, "noise study from an INI config"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config")
        s.add_argument("--out", default="-")
        s.add_argument("--threads", type=_threads, default=None)
        s.set_defaults(fn=fn)

    d = sub.add_parser("drift-check", help="Monte Carlo check of a drift bound")
    d.add_argument("--chain", choices=["additive", "multiplicative", "variable", "all"], default="all")
    d.add_argument("--runs", type=int, default=100_000)
    d.add_argument("--seed", type=lambda s: int(s, 0), default=0)
    d.add_argument("--trace", help="CSV with columns run,t,value instead of a built-in chain")
    d.add_argument("--h", default="constant:1", help="drift function: constant|linear|sqrt|power:a[:c]")
    d.add_argument("--target", type=float, default=0.0, help="hitting level for trace files")
    d.set_defaults(fn=cmd_drift_check)

    pl = sub.add_parser("plot", help="SVG line plot of CSV columns")
    pl.add_argument("--in", dest="inp", required=True)
    pl.add_argument("--x", required=True)
    pl.add_argument("--y", required=True, action="append")
    pl.add_argument("--out", required=True)
    pl.add_argument("--title")
    pl.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if getattr(a, "threads", None) is None and hasattr(a, "threads"):
        try:
            a.threads = experiments.default_threads()
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        return a.fn(a)
    except (CliError, ConfigError, RuleError, ValueError, KeyError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
