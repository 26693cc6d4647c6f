"""Whole runs: stopping, determinism, tracing and engine agreement."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edalab import Benchmark, EdaConfig, FitnessSpec, RngStream, StopCondition, run, run_ea, trace
from edalab.fitness import CallableFitness, constant
from edalab.runner import default_budget

CONFIGS = {
    "umda": EdaConfig.umda(24, 12, 6),
    "pbil": EdaConfig.pbil(24, 12, 6, 0.3),
    "mmas_ib": EdaConfig.mmas_ib(24, 6, 0.2),
    "cga": EdaConfig.cga(24, 12),
    "cga_borderless": EdaConfig.cga(24, 6, borderless=True),
    "umda_margin": EdaConfig.umda(24, 12, 3, margin=0.1),
    "sig_cga": EdaConfig.sig_cga(16, 1.5, history_cap=256),
    "sig_cga_blocks": EdaConfig.sig_cga(12, 3.0, history_cap=2048),
    "sig_cga_wrap": EdaConfig.sig_cga(10, 8.0, history_cap=1024),
}
FITNESS = [
    "onemax",
    "leadingones",
    "binval",
    "needle",
    "onemax,target=random",
    "leadingones,target=random,perm=random",
    "binval,target=random",
    "onemax,noise=gauss:1.0",
    "leadingones,noise=prior:0.5",
    "binval,noise=gauss:0.5",
]


class TestBasics:
    def test_budget_boundary(self):
        cfg = EdaConfig.umda(6, 5, 2, margin=0.5)
        f = Benchmark("needle", 6, np.zeros(6))
        # margin 1/2 keeps every frequency at 1/2; a needle cannot be forced
        res = run(cfg, f, StopCondition(5), seed=0)
        assert not res.hit and res.generations == 1 and res.evaluations == 5

    def test_unreachable_needle_with_certain_frequencies(self):
        cfg = EdaConfig.mmas_ib(5, 3, 1.0, borderless=True)
        f = Benchmark("needle", 5, np.ones(5))
        res = run(cfg, f, StopCondition(3), seed=4, engine="python")
        assert not res.hit and res.generations == 1

    def test_deterministic(self):
        cfg = EdaConfig.umda(40, 20, 10)
        f = Benchmark("onemax", 40)
        assert run(cfg, f, seed=9) == run(cfg, f, seed=9)

    def test_default_budget(self):
        assert default_budget(100) == math.ceil(5000 * 100 * math.log(101))
        assert StopCondition.default(EdaConfig.umda(10, 4, 2)).max_evaluations == default_budget(10, 4)

    def test_budget_below_lambda(self):
        with pytest.raises(ValueError):
            run(EdaConfig.umda(10, 4, 2), Benchmark("onemax", 10), StopCondition(3))

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            run(EdaConfig.umda(10, 4, 2), Benchmark("onemax", 11))

    def test_custom_callable_uses_python_engine(self):
        f = CallableFitness(lambda x: int(x.sum()), 12, lambda x: bool(x.all()))
        res = run(EdaConfig.umda(12, 10, 5), f, seed=1)
        ref = run(EdaConfig.umda(12, 10, 5), Benchmark("onemax", 12), seed=1)
        assert res == ref
        with pytest.raises(ValueError):
            run(EdaConfig.umda(12, 10, 5), f, engine="kernel")


class TestTrace:
    def test_probe_count(self):
        cfg = EdaConfig.umda(30, 10, 5)
        res = trace(cfg, constant(30), StopCondition(100), seed=1)
        assert [t for t, _ in res.trajectory] == list(range(11))
        assert len(res.potential_trace) == 11
        assert res.potential_trace[0] == (0, 15.0)

    def test_tracing_does_not_perturb(self):
        cfg = EdaConfig.cga(30, 10)
        f = Benchmark("onemax", 30)
        plain = run(cfg, f, seed=5)
        traced = trace(cfg, f, seed=5, probe_every=3)
        assert traced.hit == plain.hit
        assert traced.evaluations_to_hit == plain.evaluations_to_hit
        assert np.array_equal(traced.final_p, plain.final_p)

    def test_engines_trace_alike(self):
        cfg = EdaConfig.pbil(20, 8, 4, 0.4)
        f = Benchmark("leadingones", 20)
        a = trace(cfg, f, StopCondition(2000), seed=2, probe_every=4, engine="kernel")
        b = trace(cfg, f, StopCondition(2000), seed=2, probe_every=4, engine="python")
        assert a == b


class TestEngineIdentity:
    @pytest.mark.parametrize("algo", sorted(CONFIGS))
    @pytest.mark.parametrize("fitness", FITNESS)
    def test_kernel_matches_python(self, algo, fitness):
        cfg = CONFIGS[algo]
        spec = FitnessSpec.parse(fitness)
        for seed in range(2):
            f = spec.build(cfg.n, seed)
            stop = StopCondition(3000)
            a = run(cfg, f, stop, seed, engine="kernel", probe_every=5)
            b = run(cfg, f, stop, seed, engine="python", probe_every=5)
            assert a == b

    @given(
        st.sampled_from(["umda", "pbil", "mmas_ib", "cga"]),
        st.integers(2, 20),
        st.integers(2, 10),
        st.integers(0, 2**63),
    )
    @settings(max_examples=30, deadline=None)
    def test_random_configs(self, algo, n, lam, seed):
        rng = RngStream(seed)
        if algo == "umda":
            cfg = EdaConfig.umda(n, lam, 1 + rng.integer(lam))
        elif algo == "pbil":
            cfg = EdaConfig.pbil(n, lam, 1 + rng.integer(lam), 0.05 + 0.95 * rng.random())
        elif algo == "mmas_ib":
            cfg = EdaConfig.mmas_ib(n, lam, 0.05 + 0.95 * rng.random())
        else:
            cfg = EdaConfig.cga(n, 1.0 + 20 * rng.random())
        f = FitnessSpec.parse("leadingones,target=random").build(n, seed)
        stop = StopCondition(max(lam, 500))
        assert run(cfg, f, stop, seed, engine="kernel") == run(cfg, f, stop, seed, engine="python")


class TestEquivalences:
    def test_pbil_rho_one_is_umda(self):
        rng = RngStream(2)
        for _ in range(10):
            n, lam = 5 + rng.integer(30), 2 + rng.integer(20)
            mu = 1 + rng.integer(lam)
            seed = rng.next_u64()
            f = FitnessSpec.parse("onemax,target=random").build(n, seed)
            stop = StopCondition(100 * lam)
            a = trace(EdaConfig.pbil(n, lam, mu, 1.0), f, stop, seed)
            b = trace(EdaConfig.umda(n, lam, mu), f, stop, seed)
            assert a == b

    def test_mmas_is_pbil_with_mu_one(self):
        rng = RngStream(3)
        for _ in range(10):
            n, lam = 5 + rng.integer(30), 1 + rng.integer(20)
            rho = 0.01 + 0.99 * rng.random()
            seed = rng.next_u64()
            f = FitnessSpec.parse("leadingones").build(n, seed)
            stop = StopCondition(100 * lam)
            a = trace(EdaConfig.mmas_ib(n, lam, rho), f, stop, seed)
            b = trace(EdaConfig.pbil(n, lam, 1, rho), f, stop, seed)
            assert a == b


class TestEa:
    def test_engines_agree(self):
        for text in ("onemax", "leadingones", "binval", "onemax,noise=gauss:1.0", "onemax,noise=prior:1"):
            for seed in range(3):
                f = FitnessSpec.parse(text).build(20, seed)
                a = run_ea(f, 1.0, StopCondition(20_000), seed, engine="kernel")
                b = run_ea(f, 1.0, StopCondition(20_000), seed, engine="python")
                assert a == b

    def test_onemax_runtime(self):
        f = Benchmark("onemax", 256)
        times = [run_ea(f, 1.0, None, s).evaluations_to_hit for s in range(200)]
        expected = math.e * 256 * math.log(256)
        med = float(np.median(times))
        assert expected / 2 <= med <= expected * 2

    def test_zero_noise_is_noise_free(self):
        clean = Benchmark("onemax", 30)
        noisy = FitnessSpec.parse("onemax,noise=gauss:0").build(30, 0)
        for seed in range(5):
            assert run_ea(clean, 1.0, None, seed) == run_ea(noisy, 1.0, None, seed)

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            run_ea(Benchmark("onemax", 5), 0.0)
