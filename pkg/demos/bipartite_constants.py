"""
Risk constants for a random bipartite sharing network
======================================================

Three insurers split three Pareto risks; each edge is present with its own
probability and the owners of a risk share it equally.  Small networks are
averaged exactly over every edge pattern, larger ones by Monte Carlo.
"""

import numpy as np

from htb import (
    BipartiteGraph,
    MonteCarlo,
    RNorm,
    TailModel,
    constants_dependent,
    constants_independent,
    moment_diagnostic,
    verify_bounds,
)
from htb.spectral import canonicalize, make_dependent
from htb.risk import counterexample_measure

p = np.array([[0.9, 0.5, 0.1], [0.3, 0.8, 0.6], [0.2, 0.4, 0.9]])
model = BipartiteGraph(p)
tail = TailModel(alpha=2.5, K=[1.0, 1.5, 2.0])
norm = RNorm(2.0)

ind = constants_independent(model, tail, norm)
dep = constants_dependent(model, tail, norm)
print("exact, independent:", np.round(ind.agent_values, 5), "market", round(ind.market.value, 5))
print("exact, dependent:  ", np.round(dep.agent_values, 5), "market", round(dep.market.value, 5))

# the same expectation by simulation carries a standard error
mc = constants_independent(model, tail, norm, MonteCarlo(200_000, seed=3))
print(f"monte carlo market {mc.market.value:.5f} +- {mc.market.std_error:.5f}")

# alpha = 2.5 >= r = 2: every dependence structure sits between the two
rho = canonicalize(make_dependent(TailModel(1.0, [1.0, 1.0, 1.0]), norm))
report = verify_bounds(model, tail, rho, norm)
for c in report.checks:
    print(f"{c.name:28s} slack {c.slack:+.3e}")

# sharing matrices are bounded, so the moment condition holds trivially
print(moment_diagnostic(model, tail.alpha, 0.5, 5_000, seed=0, agg=norm).flag)

# the two-dimensional mixed measure is also a valid input on a 2x2 network
small = BipartiteGraph([[1.0, 0.5], [0.5, 1.0]])
rep = verify_bounds(small, TailModel(1.5, [1.0, 1.0]), counterexample_measure(1.5, 3.0), RNorm(3.0))
print("\n".join(rep.notes))
