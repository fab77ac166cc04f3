import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from htb.risk import (
    EQUAL,
    LOWER,
    NONE,
    UPPER,
    InfiniteMeanError,
    classify_regime,
    closed_form_g,
    comparison_bounds,
    constants_custom,
    constants_dependent,
    constants_from_measure,
    constants_independent,
    cote_asymptotic,
    counterexample_measure,
    counterexample_suite,
    var_asymptotic,
    verify_bounds,
)
from htb.sharing import EXACT, BipartiteGraph, Deterministic, MonteCarlo, Scenarios
from htb.spectral import (
    RNorm,
    TailModel,
    canonicalize,
    make_dependent,
    make_independent,
    margins,
    measure_from_atoms,
    pushforward,
)

I2 = np.eye(2)
ONES = np.ones((2, 2))


def canon_ind(d, r):
    return canonicalize(make_independent(TailModel(1.0, np.ones(d)), RNorm(r)))


def canon_dep(d, r):
    return canonicalize(make_dependent(TailModel(1.0, np.ones(d)), RNorm(r)))


def random_canonical(rng, d, r):
    k = int(rng.integers(2, 6))
    vecs = rng.random((k, d)) * (rng.random((k, d)) < 0.8)
    vecs[np.arange(k), rng.integers(0, d, k)] += 0.1
    raw = measure_from_atoms(vecs, rng.random(k) + 0.05, 1.0, RNorm(r))
    cols = raw.masses @ raw.directions
    if np.any(cols <= 0):
        raw = measure_from_atoms(np.vstack([vecs, np.eye(d)]), np.r_[raw.masses, np.ones(d)], 1.0, RNorm(r))
    return canonicalize(raw)


class TestConstants:
    @pytest.mark.parametrize("alpha,r", [(0.5, 0.4), (2.0, 1.0), (3.3, 2.5)])
    def test_identity_independent(self, alpha, r):
        c = constants_independent(Deterministic(I2), TailModel(alpha, [1, 1]), RNorm(r))
        np.testing.assert_allclose(c.agent_values, [1, 1])
        assert c.market.value == pytest.approx(2.0)

    def test_triangular_independent(self):
        A = [[1.0, 0.5], [0.0, 0.5]]
        c = constants_independent(Deterministic(A), TailModel(2.0, [1, 1]), RNorm(1))
        np.testing.assert_allclose(c.agent_values, [1.25, 0.25])
        assert c.market.value == pytest.approx(2.0)

    def test_scalar_case(self):
        tail, A = TailModel(1.7, [3.0]), [[0.4]]
        for fn in (constants_independent, constants_dependent):
            c = fn(Deterministic(A), tail, RNorm(2))
            assert c.agent_values[0] == pytest.approx(3.0 * 0.4**1.7)
            assert c.market.value == pytest.approx(3.0 * 0.4**1.7)

    def test_identity_dependent(self):
        c = constants_dependent(Deterministic(I2), TailModel(2.0, [1, 1]), RNorm(1))
        np.testing.assert_allclose(c.agent_values, [1, 1])
        assert c.market.value == pytest.approx(4.0)

    def test_ones_dependent(self):
        c = constants_dependent(Deterministic(ONES), TailModel(2.0, [1, 1]), RNorm(2))
        assert c.market.value == pytest.approx(8.0) == 2 ** (2.0 * 1.5)

    def test_custom_counterexample(self):
        rho0 = counterexample_measure(1.5, 3.0)
        c = constants_custom(Deterministic(I2), TailModel(1.5, [1, 1]), rho0, RNorm(3))
        assert c.market.value == pytest.approx(1 + 2 ** (1.5 / 3 - 1), rel=1e-13)

    def test_custom_needs_canonical(self):
        m = make_independent(TailModel(2.0, [1, 1]), RNorm(2))
        with pytest.raises(ValueError, match="canonical"):
            constants_custom(Deterministic(I2), TailModel(2.0, [1, 1]), m, RNorm(2))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="risks"):
            constants_independent(Deterministic(np.eye(3)), TailModel(2.0, [1, 1]), RNorm(1))

    def test_positive_agent_constant(self):
        model = Scenarios((np.zeros((2, 2)), np.array([[0.0, 0.3], [0.0, 0.0]])), [0.5, 0.5])
        c = constants_custom(model, TailModel(1.2, [1, 2]), canon_dep(2, 1.5), RNorm(1.5))
        assert c.agent_values[0] > 0 and c.agent_values[1] == 0

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), d=st.integers(1, 4), q=st.integers(1, 4), alpha=st.floats(0.3, 4.0), r=st.floats(0.3, 4.0))
    def test_custom_matches_direct_ray_evaluation(self, seed, d, q, alpha, r):
        # independent oracle: evaluate nu o A^-1 on the raw (non-canonical) rays
        rng = np.random.default_rng(seed)
        norm = RNorm(r)
        k = int(rng.integers(1, 5))
        vecs = rng.random((k, d)) + 0.01
        nu = measure_from_atoms(vecs, rng.random(k) + 0.1, alpha, norm)
        K = margins(nu)
        A = rng.random((q, d))
        per, market = constants_from_measure(nu, A, norm)
        c = constants_custom(Deterministic(A), TailModel(alpha, K), canonicalize(nu), norm)
        np.testing.assert_allclose(c.agent_values, per, rtol=1e-11)
        assert c.market.value == pytest.approx(market, rel=1e-11)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), alpha=st.floats(0.3, 4.0), r=st.floats(0.3, 4.0), scale=st.floats(0.01, 100.0))
    def test_scaling_equivariance(self, seed, alpha, r, scale):
        rng = np.random.default_rng(seed)
        q, d = 3, 3
        A = Deterministic(rng.random((q, d)))
        K = rng.random(d) + 0.1
        rho = random_canonical(rng, d, r)
        norm = RNorm(r)
        for fn in (constants_independent, constants_dependent, lambda *a: constants_custom(a[0], a[1], rho, a[2])):
            c1 = fn(A, TailModel(alpha, K), norm)
            c2 = fn(A, TailModel(alpha, scale * K), norm)
            np.testing.assert_allclose(c2.agent_values, scale * c1.agent_values, rtol=1e-12)
            assert c2.market.value == pytest.approx(scale * c1.market.value, rel=1e-12)
            v1 = var_asymptotic(c1.market.value, alpha, 1e-3)
            v2 = var_asymptotic(c2.market.value, alpha, 1e-3)
            assert v2 == pytest.approx(scale ** (1 / alpha) * v1, rel=1e-12)

    def test_bipartite_exact_vs_mc(self):
        model = BipartiteGraph([[0.8, 0.4], [0.3, 0.9]])
        tail = TailModel(1.6, [1.0, 2.0])
        ex = constants_dependent(model, tail, RNorm(2))
        mc = constants_dependent(model, tail, RNorm(2), MonteCarlo(100_000, 21))
        for e, m in zip(ex.per_agent + [ex.market], mc.per_agent + [mc.market]):
            assert abs(e.value - m.value) <= 3 * m.std_error


class TestAsymptotics:
    def test_var(self):
        assert var_asymptotic(2, 2, 1e-4) == pytest.approx(math.sqrt(2) * 100)
        assert var_asymptotic(1, 1, 0.01) == pytest.approx(100)

    @pytest.mark.parametrize("gamma", [0.0, 1.0, 1.5])
    def test_var_domain(self, gamma):
        with pytest.raises(ValueError):
            var_asymptotic(1.0, 2.0, gamma)

    def test_var_positive_constant(self):
        with pytest.raises(ValueError):
            var_asymptotic(0.0, 2.0, 0.1)

    def test_cote(self):
        assert cote_asymptotic(2, 2, 1e-4) == pytest.approx(2 * math.sqrt(2) * 100)
        assert cote_asymptotic(1, 100, 0.01) / var_asymptotic(1, 100, 0.01) == pytest.approx(100 / 99)

    def test_cote_infinite_mean(self):
        with pytest.raises(InfiniteMeanError, match="infinite-mean regime"):
            cote_asymptotic(1, 1, 0.1)

    def test_comparison_bounds(self):
        out = comparison_bounds(3.0, 1e-3, 8.0, mu=3.0, s=2.0)
        assert out["cote_dep"] == pytest.approx(1.5 * out["var_dep"])
        assert out["mean_variance"] == pytest.approx(3 + 2 * math.sqrt(0.999 / 1e-3))
        assert out["best_informational_bound"] >= out["var_dep"]
        assert "mean_variance" not in comparison_bounds(1.5, 1e-3, 8.0, mu=1.0, s=1.0)


class TestRegime:
    def test_alpha_above_r(self):
        reg = classify_regime(2.0, 1.5)
        assert (reg.market_ind_bound, reg.market_dep_bound) == (LOWER, UPPER)
        assert not reg.counterexample_zone and reg.individual_bounds == "two_sided_up"

    def test_counterexample_zone_norm(self):
        reg = classify_regime(1.5, 3.0)
        assert reg.counterexample_zone
        assert reg.market_ind_bound == reg.market_dep_bound == NONE

    def test_degenerate(self):
        reg = classify_regime(1.0, 1.0)
        assert reg.degenerate_equality
        assert reg.market_ind_bound == reg.market_dep_bound == EQUAL

    def test_counterexample_zone_quasinorm(self):
        reg = classify_regime(0.5, 0.3)
        assert reg.counterexample_zone and reg.individual_bounds == "two_sided_down"

    def test_small_alpha(self):
        reg = classify_regime(0.5, 2.0)
        assert (reg.market_ind_bound, reg.market_dep_bound) == (UPPER, LOWER)
        reg = classify_regime(0.2, 0.3)
        assert (reg.market_ind_bound, reg.market_dep_bound) == (UPPER, LOWER)
        reg = classify_regime(1.0, 0.3)
        assert (reg.market_ind_bound, reg.market_dep_bound) == (LOWER, UPPER)

    def test_boundaries_guaranteed(self):
        assert classify_regime(2.0, 2.0).market_ind_bound == LOWER
        assert classify_regime(1.0, 2.0).market_ind_bound == UPPER
        assert classify_regime(0.4, 0.4).market_ind_bound == UPPER

    @settings(max_examples=200)
    @given(alpha=st.floats(0.05, 10), r=st.floats(0.05, 10))
    def test_zone_iff_no_guarantee(self, alpha, r):
        reg = classify_regime(alpha, r)
        assert reg.counterexample_zone == (reg.market_ind_bound == NONE)
        assert reg.counterexample_zone == (reg.market_dep_bound == NONE)


class TestVerifyBounds:
    def test_counterexample_alpha_above_r(self):
        rho0 = counterexample_measure(2.0, 1.5)
        rep = verify_bounds(Deterministic(I2), TailModel(2.0, [1, 1]), rho0, RNorm(1.5))
        assert rep.ok
        assert all(c.guaranteed for c in rep.checks)

    def test_counterexample_zone_report(self):
        rho0 = counterexample_measure(1.5, 3.0)
        rep = verify_bounds(Deterministic(I2), TailModel(1.5, [1, 1]), rho0, RNorm(3))
        assert rep.ok
        assert rep.custom.market.value == pytest.approx(1 + 2**-0.5)
        assert rep.independent.market.value == pytest.approx(2.0)
        row = next(c for c in rep.checks if c.name == "market: C_nu^S vs C_ind^S")
        assert not row.guaranteed and row.passed is None and row.slack > 0
        assert any("counterexample zone" in n and "C_nu^S < C_ind^S" in n for n in rep.notes)

    def test_unit_alpha_unit_r_equality(self):
        rng = np.random.default_rng(2)
        rho = random_canonical(rng, 3, 1.0)
        rep = verify_bounds(Deterministic(rng.random((2, 3))), TailModel(1.0, [1, 1, 1]), rho, RNorm(1))
        vals = [rep.independent.market.value, rep.dependent.market.value, rep.custom.market.value]
        assert max(vals) - min(vals) <= 1e-10 * max(vals)
        assert rep.ok

    def test_monte_carlo_bounds(self):
        rng = np.random.default_rng(9)
        model = BipartiteGraph.uniform(3, 3, 0.5)
        rho = random_canonical(rng, 3, 2.0)
        rep = verify_bounds(model, TailModel(2.5, [1, 2, 3]), rho, RNorm(2.0), MonteCarlo(20_000, 4))
        assert rep.ok
        assert all(c.stderr >= 0 for c in rep.checks)
        # every guaranteed ordering holds on each realization as well
        assert all(c.worst_realization_slack >= -1e-12 for c in rep.checks if c.guaranteed)

    def test_serialization(self):
        rep = verify_bounds(Deterministic(ONES), TailModel(1.5, [1, 1]), counterexample_measure(1.5, 3), RNorm(3))
        data = json.loads(rep.to_json())
        assert data["ok"] and data["regime"]["counterexample_zone"]
        rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
        assert list(rows[0]) == ["name", "lhs", "rhs", "guaranteed", "pass", "slack", "stderr"]
        assert len(rows) == len(rep.checks)


class TestCounterexample:
    def test_zone_norm(self):
        rep = counterexample_suite(1.5, 3.0)
        assert rep.numeric["nu0_A1"] == pytest.approx(1 + 2**-0.5, rel=1e-14)
        assert rep.numeric["nu0_A1"] < rep.numeric["ind_A1"] == 2.0
        assert rep.numeric["ind_A2"] == pytest.approx(2**1.5)
        assert rep.numeric["ind_A2"] < rep.numeric["nu0_A2"]
        assert all(c.active for c in rep.crossovers)
        assert rep.ind_counterexample and rep.dep_counterexample and rep.consistent

    def test_boundary_alpha_equals_r(self):
        rep = counterexample_suite(2.0, 2.0)
        assert rep.numeric["nu0_A1"] == pytest.approx(2.0, rel=1e-15)
        c = {x.name: x for x in rep.crossovers}
        assert c["ind-A1"].relation == "=" and not c["ind-A1"].active and not c["ind-A1"].reversed_active
        assert rep.consistent

    def test_reversed_zone(self):
        rep = counterexample_suite(0.5, 0.3)
        assert all(c.reversed_active and not c.active for c in rep.crossovers)
        assert rep.ind_counterexample and rep.dep_counterexample

    @settings(max_examples=100, deadline=None)
    @given(alpha=st.floats(0.1, 6.0), r=st.floats(0.1, 6.0))
    def test_numeric_matches_closed_form(self, alpha, r):
        rep = counterexample_suite(alpha, r)
        sym = closed_form_g(alpha, r)
        for k, v in rep.numeric.items():
            assert v == pytest.approx(sym[k], rel=1e-12)

    def test_csv(self):
        rows = list(csv.DictReader(io.StringIO(counterexample_suite(1.5, 3).to_csv())))
        assert len(rows) == 10
        assert all(r["pass"] == "true" for r in rows)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), alpha=st.floats(0.2, 4.0), r=st.floats(0.25, 4.0), d=st.integers(1, 4), q=st.integers(1, 4))
def test_bound_properties(seed, alpha, r, d, q):
    rng = np.random.default_rng(seed)
    norm = RNorm(r)
    A = rng.random((q, d)) * (rng.random((q, d)) < 0.8)
    if not np.any(A):
        A[0, 0] = 1.0
    A /= norm(A @ np.ones(d))
    rep = verify_bounds(Deterministic(A), TailModel(alpha, np.ones(d)), random_canonical(rng, d, r), norm)
    for c in rep.checks:
        if c.guaranteed:
            assert c.slack >= -1e-10, c
