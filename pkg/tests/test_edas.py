"""Update schemes, configuration checks and single generations."""

import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edalab import Benchmark, ConfigError, EdaConfig, EdaState, RngStream, step
from edalab.edas import (
    apply_margin,
    cga_update,
    min_run_length,
    mmas_update,
    pbil_update,
    sig_threshold,
    significance,
    umda_update,
)
from edalab.fitness import constant


def _column(bits):
    """Selected individuals of length 1 with the given bits."""
    return [np.array([b], dtype=np.uint8) for b in bits]


class TestUmda:
    def test_average(self):
        assert umda_update([0.3], _column([1, 0])).tolist() == [0.5]

    def test_unanimous_then_clamped(self):
        n = 10
        raw = umda_update([0.5], _column([1, 1, 1, 1]))
        assert raw.tolist() == [1.0]
        p, _, _ = apply_margin(raw, [0.5], 1 / n)
        assert p.tolist() == [1 - 1 / n]

    def test_fraction(self):
        assert umda_update([0.5], _column([1, 1, 0, 1, 0])).tolist() == [pytest.approx(0.6)]


class TestPbil:
    def test_rho_one_is_umda(self):
        rng = RngStream(1)
        for _ in range(20):
            p = rng.random_array(7)
            best = [(rng.random_array(7) < 0.5).astype(np.uint8) for _ in range(3)]
            assert pbil_update(p, best, 1.0).tolist() == umda_update(p, best).tolist()

    def test_convex_combination(self):
        assert pbil_update([0.5], _column([1, 1]), 0.5).tolist() == [0.75]
        assert pbil_update([0.9], _column([0, 0, 0]), 0.1).tolist() == [pytest.approx(0.81)]


class TestMmas:
    def test_direct(self):
        assert mmas_update([0.5], [1], 0.2).tolist() == [pytest.approx(0.6)]
        assert mmas_update([0.5], [0], 0.2).tolist() == [pytest.approx(0.4)]

    def test_full_evaporation(self):
        w = np.array([1, 0, 1, 1], dtype=np.uint8)
        assert mmas_update([0.2, 0.7, 0.5, 0.9], w, 1.0).tolist() == [1.0, 0.0, 1.0, 1.0]


class TestCga:
    def test_steps(self):
        assert cga_update([0.5], [1], [0], 10).tolist() == [pytest.approx(0.6)]
        assert cga_update([0.5], [0], [1], 10).tolist() == [pytest.approx(0.4)]

    def test_agreement_unchanged(self):
        p = [0.3, 0.7]
        assert cga_update(p, [1, 0], [1, 0], 10).tolist() == p

    def test_reaches_border_exactly(self):
        n, K = 10, 7.0
        p = np.array([0.5])
        for _ in range(20):
            p, _, _ = apply_margin(cga_update(p, [0], [1], K, 1 / n), p, 1 / n)
        assert p[0] == 1 / n

    def test_borderless_absorbs_at_zero(self):
        p = np.array([0.5])
        absorbed = 0
        for _ in range(10):
            new = cga_update(p, [0], [1], 10)
            p, _, a = apply_margin(new, p, None)
            absorbed += a
        assert p[0] == 0.0 and absorbed == 1


class TestMargin:
    def test_counts_only_arrivals(self):
        old = np.array([0.5, 0.1, 0.1])
        new = np.array([0.0, 0.0, 0.6])
        p, hits, _ = apply_margin(new, old, 0.1)
        assert p.tolist() == [0.1, 0.1, 0.6]
        assert hits == 1


class TestConfig:
    def test_mu_above_lambda(self):
        with pytest.raises(ConfigError, match="mu <= lambda"):
            EdaConfig.umda(10, 5, 6)

    def test_required_and_forbidden(self):
        with pytest.raises(ConfigError):
            EdaConfig("pbil", 10, lam=5, mu=2)
        with pytest.raises(ConfigError):
            EdaConfig("cga", 10, K=5, rho=0.1)
        with pytest.raises(ConfigError):
            EdaConfig("cga", 10, K=5, lam=3)

    def test_fixed_fields(self):
        assert EdaConfig.cga(10, 5).lam == 2
        assert EdaConfig.mmas_ib(10, 4, 0.1).mu == 1
        assert EdaConfig("cga", 10, K=5, lam=2).lam == 2

    def test_ranges(self):
        for bad in (dict(rho=0.0), dict(rho=1.5)):
            with pytest.raises(ConfigError):
                EdaConfig.pbil(10, 4, 2, **bad)
        with pytest.raises(ConfigError):
            EdaConfig.cga(10, 0.5)
        with pytest.raises(ConfigError):
            EdaConfig.sig_cga(10, 0.0)
        with pytest.raises(ConfigError):
            EdaConfig.umda(10, 4, 2, margin=0.6)

    def test_default_margin(self):
        assert EdaConfig.umda(40, 4, 2).m == 1 / 40
        assert EdaConfig.umda(40, 4, 2, borderless=True).m is None
        with pytest.raises(ConfigError):
            EdaConfig.umda(1, 4, 2)
        EdaConfig.umda(1, 4, 2, borderless=True)

    def test_sig_cga_options(self):
        with pytest.raises(ConfigError):
            EdaConfig.sig_cga(10, 1.0, margin=0.1)
        with pytest.raises(ConfigError):
            EdaConfig.sig_cga(10, 1.0, history_cap=100)
        assert EdaConfig.sig_cga(10, 1.0, history_cap=128).cap == 128
        assert EdaConfig.sig_cga(100, 13.0).cap >= 8 * 169 * 100 * math.log(100)


class TestSignificance:
    def test_fresh_state_keeps_half(self):
        cfg = EdaConfig.sig_cga(50, 13.0)
        state = EdaState.initial(cfg)
        step(state, cfg, Benchmark("onemax", 50), RngStream(0))
        assert np.all(state.p == 0.5)

    def test_run_length(self):
        n, eps = 50, 13.0
        ell = min_run_length(0.5, eps, n)
        assert ell > sig_threshold(ell, 0.5, eps, n)
        assert ell // 2 <= sig_threshold(ell // 2, 0.5, eps, n)
        h = deque([1] * (ell - 1))
        assert significance(h, 0.5, eps, n) == 0
        h.append(1)
        assert significance(h, 0.5, eps, n) == 1

    def test_run_of_ones_moves_frequency(self):
        # a fitness that always prefers a 1 in position 0 and is flat elsewhere
        n, eps = 20, 1.0
        cfg = EdaConfig.sig_cga(n, eps)
        ell = min_run_length(0.5, eps, n)
        state = EdaState.initial(cfg)
        state.histories[0].extend([1] * (ell - 1))
        f = _FirstBit(n)
        rng = RngStream(3)
        while state.p[0] == 0.5:
            step(state, cfg, f, rng)
        assert state.p[0] == 1 - 1 / n
        assert len(state.histories[0]) == 0

    def test_frequencies_use_three_values(self):
        n = 20
        cfg = EdaConfig.sig_cga(n, 1.0)
        state = EdaState.initial(cfg)
        rng = RngStream(1)
        f = Benchmark("onemax", n)
        allowed = {1 / n, 0.5, 1 - 1 / n}
        for _ in range(300):
            step(state, cfg, f, rng)
            if state.done:
                break
            assert set(state.p.tolist()) <= allowed


class _FirstBit:
    def __init__(self, n):
        self.n = n

    def evaluate(self, x):
        return int(x[0])

    def is_optimum(self, x):
        return False


class TestStep:
    @pytest.mark.parametrize(
        "cfg",
        [
            EdaConfig.umda(50, 10, 5),
            EdaConfig.pbil(50, 10, 5, 0.3),
            EdaConfig.mmas_ib(50, 10, 0.1),
            EdaConfig.cga(50, 20),
        ],
        ids=["umda", "pbil", "mmas_ib", "cga"],
    )
    def test_balanced_on_constant(self, cfg):
        f = constant(cfg.n)
        rng = RngStream(11)
        deltas = np.empty((10_000, cfg.n))
        for r in range(10_000):
            state = EdaState.initial(cfg)
            step(state, cfg, f, rng)
            deltas[r] = state.p - 0.5
        mean = deltas.mean(axis=0)
        se = deltas.std(axis=0, ddof=1) / math.sqrt(deltas.shape[0])
        assert np.all(np.abs(mean) <= 4 * se + 1e-15)

    def test_budget_stops_before_update(self):
        cfg = EdaConfig.umda(10, 4, 2)
        state = EdaState.initial(cfg)
        step(state, cfg, Benchmark("needle", 10, np.zeros(10)), RngStream(0), max_evals=3)
        assert state.exhausted and state.evaluations == 3 and state.t == 0
        assert np.all(state.p == 0.5)

    def test_hit_stops_immediately(self):
        cfg = EdaConfig.umda(3, 50, 5)
        state = EdaState.initial(cfg)
        step(state, cfg, Benchmark("onemax", 3), RngStream(0))
        assert state.hit
        assert state.evaluations == state.evaluations_to_hit < 50

    @given(st.integers(2, 30), st.integers(1, 8), st.integers(0, 2**32))
    @settings(max_examples=40, deadline=None)
    def test_frequencies_stay_in_margin(self, n, lam, seed):
        cfg = EdaConfig.umda(n, lam, max(1, lam // 2))
        state = EdaState.initial(cfg)
        rng = RngStream(seed)
        f = constant(n)
        for _ in range(5):
            step(state, cfg, f, rng)
        assert np.all(state.p >= 1 / n) and np.all(state.p <= 1 - 1 / n)
