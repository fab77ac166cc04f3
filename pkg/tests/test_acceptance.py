"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from htb.risk import (
    constants_custom,
    constants_dependent,
    constants_independent,
    counterexample_measure,
    counterexample_suite,
    verify_bounds,
)
from htb.sharing import BipartiteGraph, Deterministic, MonteCarlo, Scenarios
from htb.simulator import DependenceSpec, bootstrap_tail_se, empirical_cote, empirical_var, sample_F
from htb.spectral import (
    RNorm,
    TailModel,
    canonicalize,
    g_functional,
    make_dependent,
    make_independent,
    measure_from_atoms,
    pushforward,
)

A1 = np.eye(2)
A2 = np.ones((2, 2))


def grid_points(n=50, seed=2024):
    """``n`` (alpha, r) pairs covering both sides of 1 and of the diagonal, boundaries included."""
    fixed = [(1.0, 1.0), (2.0, 2.0), (0.5, 0.5), (1.0, 3.0), (1.0, 0.4), (3.0, 1.0), (0.4, 1.0)]
    rng = np.random.default_rng(seed)
    rest = np.exp(rng.uniform(np.log(0.2), np.log(5.0), (n - len(fixed), 2)))
    return fixed + [tuple(map(float, p)) for p in rest]


def random_canonical(rng, d, r):
    k = int(rng.integers(1, 7))
    vecs = rng.random((k, d)) * (rng.random((k, d)) < 0.7)
    vecs[np.arange(k), rng.integers(0, d, k)] += 0.05
    vecs = np.vstack([vecs, np.eye(d)])
    masses = np.r_[rng.random(k) + 0.05, rng.random(d) * 0.5 + 0.01]
    return canonicalize(measure_from_atoms(vecs, masses, 1.0, RNorm(r)))


def random_matrix(rng, q, d, r):
    A = rng.random((q, d)) * (rng.random((q, d)) < 0.75)
    if not A.any():
        A[0, 0] = 1.0
    return A / RNorm(r)(A @ np.ones(d))


def test_criterion_1_counterexample_exactness(acceptance):
    B = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
    worst, times = 0.0, []
    for alpha, r in [(1.5, 3.0), (0.5, 0.3), (2.0, 1.0), (1.0, 2.0)]:
        norm = RNorm(r)
        nu_ind = make_independent(TailModel(alpha, np.ones(3)), norm)
        canonicalize(pushforward(nu_ind, B))  # warm-up
        t0 = time.perf_counter()
        rho0 = canonicalize(pushforward(nu_ind, B))
        times.append(time.perf_counter() - t0)
        one = norm(np.ones(2))
        expected = {(1.0, 0.0): 0.5, (0.0, 1.0): 0.5, (1 / one, 1 / one): one / 2}
        assert rho0.n_atoms == 3
        for direction, mass in zip(rho0.directions, rho0.masses):
            key = min(expected, key=lambda k: np.abs(np.array(k) - direction).max())
            assert np.abs(np.array(key) - direction).max() <= 1e-12
            worst = max(worst, abs(mass - expected[key]) / expected[key])
    ok = worst <= 1e-12 and max(times) < 1e-3
    acceptance(1, ok, f"max rel mass error {worst:.1e}, slowest build {max(times) * 1e3:.3f} ms")
    assert ok


def test_criterion_2_closed_form_g(acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    for alpha, r in grid_points():
        norm = RNorm(r)
        unit = TailModel(1.0, [1.0, 1.0])
        ind = canonicalize(make_independent(unit, norm))
        dep = canonicalize(make_dependent(unit, norm))
        rho0 = counterexample_measure(alpha, r)
        expected = {
            (ind, 1): 2.0,
            (rho0, 1): 1 + 2 ** (alpha / r - 1),
            (dep, 1): 2 ** (alpha / r),
            (ind, 2): 2 ** (alpha / r + 1),
            (rho0, 2): 2 ** (alpha / r) + 0.5 * 2 ** (alpha * (1 + 1 / r)),
            (dep, 2): 2 ** (alpha * (1 + 1 / r)),
        }
        for (m, which), value in expected.items():
            got = g_functional(m, A1 if which == 1 else A2, alpha, norm)
            worst = max(worst, abs(got - value) / value)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 1.0
    acceptance(2, ok, f"300 g values, max rel error {worst:.1e}, {elapsed:.3f} s")
    assert ok


def _expected_relation(x, y):
    return "<" if x < y else (">" if x > y else "=")


def test_criterion_3_crossover_logic(acceptance):
    # predicted lhs-vs-rhs relation of each crossover from one parameter comparison
    predicted = {
        "ind-A1": lambda a, r: _expected_relation(a, r),  # nu0 < ind iff r > alpha
        "ind-A2": lambda a, r: _expected_relation(1.0, a),  # ind < nu0 iff alpha > 1
        "dep-A1": lambda a, r: _expected_relation(r, a),  # nu0 > dep iff alpha < r
        "dep-A2": lambda a, r: _expected_relation(a, 1.0),  # dep > nu0 iff alpha > 1
    }
    points = grid_points() + [(1.0, 1.0), (2.5, 2.5), (0.3, 0.3), (1.0, 0.7), (1.0, 4.0)]
    bad, boundary = [], 0
    for alpha, r in points:
        rep = counterexample_suite(alpha, r)
        for c in rep.crossovers:
            want = predicted[c.name](alpha, r)
            if c.relation != want or c.active != (c.relation == c.op):
                bad.append((alpha, r, c.name, c.relation, want))
            boundary += c.relation == "="
    ok = not bad and boundary > 0
    acceptance(3, ok, f"{len(points)} points x 4 crossovers, {boundary} boundary equalities, {len(bad)} mismatches")
    assert ok, bad[:5]


REGIMES = {
    "r>=1, alpha>=r": lambda rng: (lambda r: (float(rng.uniform(r, r + 3)), r))(float(rng.uniform(1, 4))),
    "r>=1, alpha<=1": lambda rng: (float(rng.uniform(0.1, 1)), float(rng.uniform(1, 4))),
    "r<1, alpha>=1": lambda rng: (float(rng.uniform(1, 4)), float(rng.uniform(0.2, 1))),
    "r<1, alpha<=r": lambda rng: (lambda r: (float(rng.uniform(0.05, r)), r))(float(rng.uniform(0.2, 1))),
}


def test_criterion_4_property_suites(acceptance):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst = math.inf
    n_ind = n_market = 0
    for name, draw in REGIMES.items():
        for i in range(500):
            alpha, r = draw(rng)
            if i % 25 == 0:  # boundary of the regime
                alpha = r if "alpha>=r" in name or "alpha<=r" in name else 1.0
            d, q = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            norm = RNorm(r)
            if i % 5 == 0:
                p = rng.random((min(q, 3), min(d, 3)))
                model = BipartiteGraph(p)
                d = p.shape[1]
            else:
                model = Deterministic(random_matrix(rng, q, d, r))
            tail = TailModel(alpha, rng.random(d) + 0.1)
            rep = verify_bounds(model, tail, random_canonical(rng, d, r), norm)
            reg = rep.regime
            assert reg.market_ind_bound != "none-guaranteed", (name, alpha, r)
            for c in rep.checks:
                assert c.guaranteed
                worst = min(worst, c.slack / max(1.0, abs(c.lhs), abs(c.rhs)))
                n_market += c.name.startswith("market")
                n_ind += c.name.startswith("agent")
            expected_ind = "two_sided_up" if alpha >= 1 else "two_sided_down"
            assert reg.individual_bounds == expected_ind
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-10 and elapsed < 30
    acceptance(4, ok, f"2000 configs, {n_ind} individual + {n_market} market checks, worst rel slack {worst:.1e}, {elapsed:.1f} s")
    assert ok


def test_criterion_5_unit_exponent_equality(acceptance):
    rng = np.random.default_rng(5)
    norm = RNorm(1.0)
    worst = 0.0
    for _ in range(100):
        d, q = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        model = Deterministic(rng.random((q, d)) * 3)
        tail = TailModel(1.0, rng.random(d) * 2 + 0.1)
        vals = [
            constants_independent(model, tail, norm).market.value,
            constants_dependent(model, tail, norm).market.value,
            constants_custom(model, tail, random_canonical(rng, d, 1.0), norm).market.value,
        ]
        worst = max(worst, (max(vals) - min(vals)) / max(vals))
    ok = worst <= 1e-10
    acceptance(5, ok, f"100 cases at alpha = r = 1, max rel spread {worst:.1e}")
    assert ok


def _random_model(rng, i):
    q, d = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    if i < 4:
        q = d = 4  # largest enumerated family
    kind = i % 3
    if kind == 0:
        return BipartiteGraph(rng.random((q, d)), "resample" if i % 2 else "drop")
    if kind == 1:
        w = rng.random(3)
        return Scenarios(tuple(rng.random((q, d)) for _ in range(3)), w / w.sum())
    return Deterministic(rng.random((q, d)) * 2)


def test_criterion_6_oracle_equivalence(acceptance):
    rng = np.random.default_rng(6)
    worst, n_bip = 0.0, 0
    for i in range(200):
        model = _random_model(rng, i)
        n_bip += isinstance(model, BipartiteGraph)
        alpha, r = float(rng.uniform(0.2, 4)), float(rng.uniform(0.2, 4))
        norm = RNorm(r)
        tail = TailModel(alpha, rng.random(model.d) * 2 + 0.05)
        for direct, maker in ((constants_independent, make_independent), (constants_dependent, make_dependent)):
            a = direct(model, tail, norm)
            b = constants_custom(model, tail, canonicalize(maker(tail, norm)), norm)
            ref = np.r_[a.agent_values, a.market.value]
            got = np.r_[b.agent_values, b.market.value]
            scale = np.maximum(np.abs(ref), 1e-300)
            err = np.where(ref == 0, np.abs(got), np.abs(got - ref) / scale)
            worst = max(worst, float(err.max()))
    ok = worst <= 1e-12
    acceptance(6, ok, f"200 configs ({n_bip} enumerated bipartite), max rel error {worst:.1e}")
    assert ok


N_DESK = 10_000_000
GAMMA = 1e-3


@pytest.fixture(scope="module")
def desk_runs():
    t0 = time.perf_counter()
    runs = {}
    for kind in ("independent", "comonotone"):
        spec = DependenceSpec(kind, TailModel(2.0, [1.0, 1.0]))
        runs[kind] = sample_F(spec, Deterministic(A1), RNorm(1), N_DESK, seed=2026).aggregate
    return runs, time.perf_counter() - t0


def test_criterion_7_desk_scale_asymptotics(acceptance, desk_runs):
    runs, sample_time = desk_runs
    t0 = time.perf_counter()
    parts = []
    ok = True
    for kind, C in (("independent", 2.0), ("comonotone", 4.0)):
        v = empirical_var(runs[kind], GAMMA)
        c = empirical_cote(runs[kind], GAMMA)
        ratio = v / (math.sqrt(C) * GAMMA**-0.5)
        tail_ratio = c / v
        ok &= 0.9 <= ratio <= 1.1 and abs(tail_ratio / 2 - 1) <= 0.15
        parts.append(f"{kind}: VaR ratio {ratio:.4f}, CoTE/VaR {tail_ratio:.4f}")
    elapsed = sample_time + time.perf_counter() - t0
    ok &= elapsed < 120
    acceptance(7, ok, "; ".join(parts) + f"; {elapsed:.1f} s")
    assert ok


def test_criterion_8_dependence_ordering(acceptance, desk_runs):
    runs, _ = desk_runs
    v_ind = empirical_var(runs["independent"], GAMMA)
    v_dep = empirical_var(runs["comonotone"], GAMMA)
    se_ind = bootstrap_tail_se(runs["independent"], GAMMA, seed=1)[0]
    se_dep = bootstrap_tail_se(runs["comonotone"], GAMMA, seed=2)[0]
    z = (v_dep - v_ind) / math.hypot(se_ind, se_dep)
    ok = z > 4
    acceptance(8, ok, f"VaR dep {v_dep:.3f} vs ind {v_ind:.3f}, z = {z:.1f}")
    assert ok


def test_criterion_9_bipartite_mc_vs_exact(acceptance):
    rng = np.random.default_rng(9)
    worst, count = 0.0, 0
    for trial in range(5):
        model = BipartiteGraph(rng.uniform(0.1, 1.0, (2, 2)), "resample" if trial % 2 else "drop")
        alpha, r = float(rng.uniform(0.5, 3)), float(rng.uniform(0.5, 3))
        norm = RNorm(r)
        tail = TailModel(alpha, rng.random(2) + 0.2)
        rho = random_canonical(rng, 2, r)
        for fn in (
            lambda m: constants_independent(model, tail, norm, m),
            lambda m: constants_dependent(model, tail, norm, m),
            lambda m: constants_custom(model, tail, rho, norm, m),
        ):
            exact, mc = fn("exact"), fn(MonteCarlo(100_000, 900 + trial))
            for e, m in zip(exact.per_agent + [exact.market], mc.per_agent + [mc.market]):
                z = abs(e.value - m.value) / m.std_error if m.std_error > 0 else (0.0 if e.value == m.value else math.inf)
                worst = max(worst, z)
                count += 1
    ok = worst <= 3
    acceptance(9, ok, f"{count} MC estimates at n = 1e5, max |z| = {worst:.2f}")
    assert ok
