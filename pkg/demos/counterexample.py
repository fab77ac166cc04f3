"""
When neither independence nor full dependence bounds the market
================================================================

Two risks, two sharing matrices (the identity and the all-ones matrix) and a
mixed spectral measure with mass on both axes and on the diagonal.  Inside
the counterexample zone the mixed measure undercuts the independent market
constant for one matrix and exceeds it for the other.
"""

import numpy as np

from htb import classify_regime, counterexample_measure, counterexample_suite

# the mixed measure is the same for every alpha; only the norm changes it
rho0 = counterexample_measure(alpha=1.5, r=3.0)
for direction, mass in rho0.atoms():
    print(f"atom {np.round(direction, 6)}  mass {mass:.6f}")

# alpha = 1.5 < r = 3 lies in the zone: all four crossovers fire
report = counterexample_suite(1.5, 3.0)
for name, value in report.numeric.items():
    print(f"{name:7s} {value:.6f}")
for c in report.crossovers:
    print(f"{c.name}: {c.lhs} {c.relation} {c.rhs}  active={c.active}")

# scan a row of alpha values at fixed r and watch the zone open and close
r = 3.0
for alpha in (0.5, 1.0, 1.5, 2.5, 3.0, 4.0):
    reg = classify_regime(alpha, r)
    rep = counterexample_suite(alpha, r)
    print(f"alpha={alpha:3.1f} zone={reg.counterexample_zone!s:5s} ind-counterexample={rep.ind_counterexample}")
