"""Sweeps, phase transitions, scaling fits, comparisons and noise studies."""

import math

import numpy as np
import pytest

from edalab import Benchmark, ConfigError, FitnessSpec, StopCondition, run_ea
from edalab.experiments import (
    SWEEP_COLUMNS,
    CompareEntry,
    SweepProtocol,
    compare,
    ea_baseline,
    fit_scaling,
    noise_study,
    phase_transition,
    read_csv,
    reference_protocol,
    scaling_fit,
    sweep,
)
from edalab.stats import derive_seed


def _small(**kw):
    base = dict(algorithm="umda", n=(20,), fitness="onemax", lam=(12,), mu="lambda/2", runs=3, master_seed=5)
    base.update(kw)
    return SweepProtocol(**base)


class TestProtocol:
    def test_reference_grid(self):
        grid = reference_protocol(runs=1).grid()
        assert len(grid) == 169
        assert [c.lam for c, _ in grid[:3]] == [14, 16, 18]
        assert all(c.mu == c.lam // 2 for c, _ in grid)

    def test_rule_budget(self):
        (cfg, budget), = _small(max_evals="100*lambda").grid()
        assert budget == 1200 and cfg.mu == 6

    def test_invalid_point(self):
        with pytest.raises(ConfigError):
            _small(mu="2*lambda")
        with pytest.raises(ConfigError):
            _small(algorithm="bogus")
        with pytest.raises(ConfigError):
            _small(runs=0)

    def test_rules_may_use_n(self):
        proto = SweepProtocol("cga", (100,), "onemax", K=("ceil(7*sqrt(n)*log(n))",), runs=1)
        assert proto.grid()[0][0].K == math.ceil(7 * 10 * math.log(100))


class TestSweep:
    def test_deterministic_csv(self):
        a = sweep(_small(), threads=1).to_csv()
        b = sweep(_small(), threads=3).to_csv()
        assert a == b
        cols, rows = read_csv(a)
        assert tuple(cols) == SWEEP_COLUMNS
        assert len(rows) == 1 and rows[0]["runs"] == "3"
        assert rows[0]["rho"] == "" and rows[0]["K"] == ""

    def test_replicate_seeds(self):
        table = sweep(_small(runs=2), threads=1)
        from edalab import run

        cfg, budget = table.points[0].cfg, table.points[0].budget
        seed = derive_seed(5, [0, 1])
        ref = run(cfg, FitnessSpec.parse("onemax").build(20, seed), StopCondition(budget), seed)
        assert table.points[0].results[1] == ref

    def test_failed_point_has_absent_statistics(self):
        proto = _small(fitness="needle", max_evals="lambda", runs=2)
        row = sweep(proto, threads=1).rows()[0]
        assert row["success_rate"] == 0.0
        assert row["mean_evals"] is None and row["median_evals"] is None


class TestPhaseTransition:
    def test_synthetic(self):
        pairs = [(lam, max(0, 100 - lam)) for lam in range(10, 201, 10)]
        pt = phase_transition(pairs, 0.0)
        assert pt.reached and pt.lam_star == 100 and pt.bracket == (90, 100)

    def test_threshold_above_everything(self):
        pt = phase_transition([(14, 3.0), (16, 2.0)], 10.0)
        assert pt.lam_star == 14 and pt.bracket == (14, 14)

    def test_not_reached(self):
        pt = phase_transition([(14, 3.0), (16, 2.0)], 1.0)
        assert not pt.reached and str(pt) == "not reached in grid"


class TestScaling:
    @pytest.mark.parametrize("power", [1, 2])
    def test_synthetic_slope(self, power):
        ns = [100, 200, 400, 800, 1600]
        rep = fit_scaling(ns, [3.0 * n**power for n in ns])
        assert rep.slope == pytest.approx(power, abs=1e-9)
        assert rep.stderr == pytest.approx(0.0, abs=1e-9)
        assert not rep.budget_limited

    def test_budget_flag_and_few_points(self):
        rep = fit_scaling([10, 20, 40], [1.0, 2.0, 4.0], [1.0, 0.9, 1.0])
        assert rep.budget_limited and rep.slope is None

    def test_scaling_fit_runs(self):
        proto = SweepProtocol("cga", (8, 16, 32, 64), "onemax", K=("ceil(sqrt(n)*log(n))",), runs=4)
        rep, table = scaling_fit(proto, threads=1)
        assert rep.ns == [8, 16, 32, 64] and rep.slope is not None
        with pytest.raises(ConfigError):
            scaling_fit(_small(lam=(10, 12)), threads=1)


class TestCompare:
    def test_deterministic(self):
        entries = [CompareEntry("a", _small()), CompareEntry("b", _small(algorithm="pbil", rho=(0.5,)))]
        assert compare(entries, 1).to_csv() == compare(entries, 2).to_csv()

    def test_unique_labels(self):
        with pytest.raises(ConfigError):
            compare([CompareEntry("a", _small()), CompareEntry("a", _small())])


class TestEa:
    def test_single_bit(self):
        f = Benchmark("onemax", 1)
        for seed in range(50):
            r = run_ea(f, 1.0, StopCondition(10), seed)
            assert r.hit and r.evaluations_to_hit <= 2

    def test_baseline_deterministic(self):
        a = ea_baseline("onemax", 30, 5, master_seed=2, threads=1)
        b = ea_baseline("onemax", 30, 5, master_seed=2, threads=4)
        assert a.results == b.results and a.success_rate == 1.0


class TestNoise:
    def test_zero_noise_matches_clean_sweep(self):
        proto = SweepProtocol("cga", (30,), "onemax", K=("10*(1+sigma2)",), runs=4, master_seed=3)
        study = noise_study(proto, [0.0, 1.0], ea_runs=3, threads=1)
        clean = sweep(SweepProtocol("cga", (30,), "onemax", K=(10,), runs=4, master_seed=3), threads=1)
        assert study.eda[0].results == clean.points[0].results
        assert study.eda[1].cfg.K == 20
        rows = study.rows()
        assert rows[0]["success_rate"] == clean.rows()[0]["success_rate"]
        assert rows[0]["ea_runs"] == 3

    def test_negative_variance(self):
        with pytest.raises(ConfigError):
            noise_study(_small(), [-1.0])

    def test_single_configuration_required(self):
        with pytest.raises(ConfigError):
            noise_study(_small(lam=(10, 12)), [0.0])


def test_runtimes_exclude_failures():
    table = sweep(_small(fitness="needle", max_evals="lambda", runs=2), threads=1)
    assert table.points[0].runtimes.size == 0
    assert np.all(table.points[0].border_hits >= 0)
