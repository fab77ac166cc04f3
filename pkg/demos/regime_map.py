"""
Which bounds are guaranteed where
=================================

A coarse text map of the (alpha, r) plane.  Each cell shows how the
independent constant relates to any other dependence structure:
``L`` lower bound, ``U`` upper bound, ``=`` equality, ``x`` none.
"""

import numpy as np

from htb import classify_regime

symbol = {"lower": "L", "upper": "U", "equality": "=", "none-guaranteed": "x"}
alphas = np.array([0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0])
rs = np.array([4.0, 3.0, 2.0, 1.5, 1.0, 0.75, 0.5, 0.25])

print("r \\ alpha " + " ".join(f"{a:5.2f}" for a in alphas))
for r in rs:
    cells = [symbol[classify_regime(a, r).market_ind_bound] for a in alphas]
    print(f"{r:9.2f} " + " ".join(f"{c:>5s}" for c in cells))

print()
print(classify_regime(1.0, 1.0).describe())
