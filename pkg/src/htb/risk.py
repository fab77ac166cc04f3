"""Individual and market risk constants, VaR/CoTE asymptotics and bound checks.

For ``F = A V`` with Pareto margins ``P(V_j > t) ~ K_j t**-alpha`` the
asymptotics ``VaR_{1-gamma} ~ C**(1/alpha) gamma**(-1/alpha)`` hold with a
constant ``C`` depending on the dependence structure of ``V``.  This module
computes ``C`` for agent ``i`` (``F_i``) and for the market (``||F||_r``)
under asymptotic independence, full dependence, or any discrete canonical
spectral measure, and checks the ordering results between them.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .sharing import (
    EXACT,
    Deterministic,
    ExpectationEstimate,
    MonteCarlo,
    SharingModel,
    expect_array,
    is_enumerable,
    support,
    _estimates,
)
from .spectral import (
    DiscreteSpectralMeasure,
    NormMismatchError,
    RNorm,
    TailModel,
    canonicalize,
    g_functional,
    make_dependent,
    make_independent,
    powmul,
    pushforward,
)

EXACT_REL_TOL = 1e-10
MC_SIGMA = 4.0


class InfiniteMeanError(ValueError):
    """CoTE is undefined asymptotically when alpha <= 1."""


def default_method(model: SharingModel, n: int = 100_000, seed: int = 0):
    """Exact enumeration when the support is small, Monte Carlo otherwise."""
    return EXACT if is_enumerable(model) else MonteCarlo(n, seed)


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class RiskConstants:
    per_agent: list
    market: ExpectationEstimate
    dependence_label: str
    alpha: float
    r: float

    @property
    def agent_values(self) -> np.ndarray:
        return np.array([e.value for e in self.per_agent])

    def to_dict(self) -> dict:
        return {
            "dependence": self.dependence_label,
            "alpha": self.alpha,
            "r": self.r,
            "per_agent": [e.to_dict() for e in self.per_agent],
            "market": self.market.to_dict(),
        }


def _check_shapes(model: SharingModel, tail: TailModel):
    if model.d != tail.d:
        raise ValueError(f"sharing model has d={model.d} risks but tail model has d={tail.d}")


def _ind_batch(stack, tail: TailModel, agg: RNorm):
    a = tail.alpha
    per = np.sum(powmul(tail.K, stack, a), axis=-1)
    cols = agg(stack, axis=-2)
    market = np.sum(powmul(tail.K, cols, a), axis=-1)
    return np.concatenate([per, market[:, None]], axis=1)


def _dep_batch(stack, tail: TailModel, agg: RNorm):
    a = tail.alpha
    y = stack @ tail.scale_root()
    per = powmul(1.0, y, a)
    market = powmul(1.0, agg(y, axis=-1), a)
    return np.concatenate([per, np.atleast_1d(market)[:, None]], axis=1)


def _custom_batch(stack, tail: TailModel, rho: DiscreteSpectralMeasure, agg: RNorm):
    a = tail.alpha
    roots = rho.directions ** (1.0 / a)
    # (n, q, k): image of each canonical atom under A K^{1/alpha}
    Y = np.einsum("nqd,d,kd->nqk", stack, tail.scale_root(), roots)
    per = np.sum(powmul(rho.masses, Y, a), axis=-1)
    market = np.sum(powmul(rho.masses, agg(Y, axis=-2), a), axis=-1)
    return np.concatenate([per, market[:, None]], axis=1)


def _pack(mean, se, meta, label, tail, agg, q) -> RiskConstants:
    est = _estimates(mean, se, meta)
    return RiskConstants(est[:q], est[q], label, tail.alpha, agg.r)


def _as_stack(stack):
    return np.asarray(stack, dtype=float)


def constants_independent(model: SharingModel, tail: TailModel, agg: RNorm, method=EXACT) -> RiskConstants:
    """``C_i = sum_j K_j E A_ij**alpha`` and ``C_S = sum_j K_j E ||A e_j||**alpha``."""
    _check_shapes(model, tail)
    mean, se, meta = expect_array(model, lambda s: _ind_batch(_as_stack(s), tail, agg), method)
    return _pack(mean, se, meta, "independent", tail, agg, model.q)


def constants_dependent(model: SharingModel, tail: TailModel, agg: RNorm, method=EXACT) -> RiskConstants:
    """``C_i = E ((A K^{1/alpha} 1)_i)**alpha`` and ``C_S = E ||A K^{1/alpha} 1||**alpha``."""
    _check_shapes(model, tail)
    mean, se, meta = expect_array(model, lambda s: _dep_batch(_as_stack(s), tail, agg), method)
    return _pack(mean, se, meta, "dependent", tail, agg, model.q)


def _check_custom(rho_star, tail, agg):
    if not rho_star.canonical:
        raise ValueError("constants_custom needs a canonical spectral measure")
    if rho_star.dim != tail.d:
        raise ValueError(f"measure dim {rho_star.dim} != number of risks {tail.d}")
    if rho_star.norm.r != agg.r:
        raise NormMismatchError(
            f"sphere norm r={rho_star.norm.r} differs from aggregation norm r={agg.r}"
        )


def constants_custom(
    model: SharingModel,
    tail: TailModel,
    rho_star: DiscreteSpectralMeasure,
    agg: RNorm,
    method=EXACT,
) -> RiskConstants:
    """Constants for the dependence structure given by a canonical spectral measure.

    The market constant is ``E rho* g_{A K^{1/alpha}, alpha}``; the agent
    constant replaces the norm by the i-th coordinate.
    """
    _check_shapes(model, tail)
    _check_custom(rho_star, tail, agg)
    mean, se, meta = expect_array(
        model, lambda s: _custom_batch(_as_stack(s), tail, rho_star, agg), method
    )
    return _pack(mean, se, meta, "custom", tail, agg, model.q)


def constants_from_measure(nu: DiscreteSpectralMeasure, A, agg: RNorm) -> tuple[np.ndarray, float]:
    """Direct ray evaluation of ``nu o A^-1({x_i > 1})`` and ``nu o A^-1({||x|| > 1})``.

    Works on a raw (non-canonical) measure with margins already equal to K;
    a ray ``t s_k`` exceeds level 1 under ``A`` once ``t > 1/|A s_k|``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    img = nu.directions @ A.T
    per = np.sum(powmul(nu.masses[:, None], img, nu.alpha), axis=0)
    market = float(np.sum(powmul(nu.masses, np.atleast_1d(agg(img, axis=1)), nu.alpha)))
    return per, market


# ---------------------------------------------------------------------------
# asymptotic risk measures


def var_asymptotic(C: float, alpha: float, gamma: float) -> float:
    """``C**(1/alpha) * gamma**(-1/alpha)``."""
    if not C > 0:
        raise ValueError(f"constant must be positive, got {C!r}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma!r}")
    return float(math.exp((math.log(C) - math.log(gamma)) / alpha))


def cote_asymptotic(C: float, alpha: float, gamma: float) -> float:
    """``alpha / (alpha - 1)`` times the asymptotic VaR; needs ``alpha > 1``."""
    if not alpha > 1:
        raise InfiniteMeanError(f"infinite-mean regime: CoTE needs alpha > 1, got {alpha!r}")
    return alpha / (alpha - 1.0) * var_asymptotic(C, alpha, gamma)


def comparison_bounds(alpha: float, gamma: float, C_dep: float, mu: float | None = None, s: float | None = None) -> dict:
    """Informational non-asymptotic comparison bounds for the market VaR.

    Reports the dependent-case VaR, the CoTE-based bound ``alpha/(alpha-1)``
    times it (alpha > 1), and, for alpha > 2 with a mean/std estimate, the
    mean-variance bound ``mu + s sqrt((1-gamma)/gamma)``.  None of these is
    sharper than the dependent-case VaR itself.
    """
    out: dict[str, Any] = {"alpha": alpha, "gamma": gamma, "var_dep": var_asymptotic(C_dep, alpha, gamma)}
    if alpha > 1:
        out["cote_dep"] = cote_asymptotic(C_dep, alpha, gamma)
    if alpha > 2 and mu is not None and s is not None:
        out["mean_variance"] = mu + s * math.sqrt((1 - gamma) / gamma)
    candidates = [v for k, v in out.items() if k in ("cote_dep", "mean_variance")]
    if candidates:
        out["best_informational_bound"] = min(candidates)
    return out


# ---------------------------------------------------------------------------
# regimes


LOWER, UPPER, EQUAL, NONE = "lower", "upper", "equality", "none-guaranteed"


@dataclass(frozen=True)
class RegimeClassification:
    """Which orderings against the independent / dependent constants are guaranteed.

    ``market_ind_bound == "lower"`` means ``C_ind^S <= C_nu^S`` for every nu;
    ``market_dep_bound == "upper"`` means ``C_nu^S <= C_dep^S``.
    """

    alpha: float
    r: float
    individual_bounds: str
    market_ind_bound: str
    market_dep_bound: str
    degenerate_equality: bool
    counterexample_zone: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def describe(self) -> str:
        lines = [f"alpha={self.alpha:g}, r={self.r:g}"]
        if self.individual_bounds == "two_sided_up":
            lines.append("individual: C_ind <= C_nu <= C_dep")
        else:
            lines.append("individual: C_dep <= C_nu <= C_ind")
        if self.degenerate_equality:
            lines.append("market: degenerate equality C_ind^S = C_nu^S = C_dep^S")
        elif self.counterexample_zone:
            lines.append("market: counterexample zone, no bound guaranteed")
        else:
            rel = {
                (LOWER, UPPER): "C_ind^S <= C_nu^S <= C_dep^S",
                (UPPER, LOWER): "C_dep^S <= C_nu^S <= C_ind^S",
            }.get((self.market_ind_bound, self.market_dep_bound), "no bound guaranteed")
            lines.append(f"market: {rel}")
        return "\n".join(lines)


def classify_regime(alpha: float, r: float) -> RegimeClassification:
    if not (alpha > 0 and r > 0):
        raise ValueError("alpha and r must be positive")
    if r >= 1:
        low_ok, up_ok = alpha >= r, alpha <= 1
    else:
        low_ok, up_ok = alpha >= 1, alpha <= r
    if low_ok and up_ok:
        ind, dep = EQUAL, EQUAL
    elif low_ok:
        ind, dep = LOWER, UPPER
    elif up_ok:
        ind, dep = UPPER, LOWER
    else:
        ind, dep = NONE, NONE
    return RegimeClassification(
        alpha=float(alpha),
        r=float(r),
        individual_bounds="two_sided_up" if alpha >= 1 else "two_sided_down",
        market_ind_bound=ind,
        market_dep_bound=dep,
        degenerate_equality=(alpha == 1 and r == 1),
        counterexample_zone=(1 < alpha < r) or (r < alpha < 1),
    )


# ---------------------------------------------------------------------------
# bound verification


@dataclass
class InequalityCheck:
    """One check ``lhs <= rhs``; ``slack = rhs - lhs``."""

    name: str
    lhs: float
    rhs: float
    guaranteed: bool
    passed: bool | None
    slack: float
    stderr: float = 0.0
    worst_realization_slack: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


CSV_FIELDS = ["name", "lhs", "rhs", "guaranteed", "pass", "slack", "stderr"]


def _rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for c in rows:
        passed = "n/a" if c.passed is None else str(c.passed).lower()
        w.writerow([c.name, repr(c.lhs), repr(c.rhs), str(c.guaranteed).lower(), passed, repr(c.slack), repr(c.stderr)])
    return buf.getvalue()


@dataclass
class BoundReport:
    regime: RegimeClassification
    independent: RiskConstants
    dependent: RiskConstants
    custom: RiskConstants
    checks: list
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.guaranteed)

    @property
    def violations(self) -> list:
        return [c for c in self.checks if c.guaranteed and not c.passed]

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.to_dict(),
            "constants": {
                "independent": self.independent.to_dict(),
                "dependent": self.dependent.to_dict(),
                "custom": self.custom.to_dict(),
            },
            "checks": [c.to_dict() for c in self.checks],
            "ok": self.ok,
            "notes": list(self.notes),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_csv(self) -> str:
        return _rows_to_csv(self.checks)


def _pairs(regime: RegimeClassification, q: int):
    """Yield ``(name, lhs_col, rhs_col, guaranteed)`` over the stacked constant columns.

    Column layout per block of ``q + 1``: agents then market; blocks are
    independent (0), dependent (1), custom (2).
    """
    w = q + 1

    def col(block, i):
        return block * w + i

    IND, DEP, NU = 0, 1, 2
    for i in range(q):
        a = f"agent{i + 1}"
        if regime.individual_bounds == "two_sided_up":
            yield f"{a}: C_ind <= C_nu", col(IND, i), col(NU, i), True
            yield f"{a}: C_nu <= C_dep", col(NU, i), col(DEP, i), True
        else:
            yield f"{a}: C_dep <= C_nu", col(DEP, i), col(NU, i), True
            yield f"{a}: C_nu <= C_ind", col(NU, i), col(IND, i), True
    m = q
    ind, dep = regime.market_ind_bound, regime.market_dep_bound
    if ind in (LOWER, EQUAL):
        yield "market: C_ind^S <= C_nu^S", col(IND, m), col(NU, m), True
    if ind in (UPPER, EQUAL):
        yield "market: C_nu^S <= C_ind^S", col(NU, m), col(IND, m), True
    if dep in (UPPER, EQUAL):
        yield "market: C_nu^S <= C_dep^S", col(NU, m), col(DEP, m), True
    if dep in (LOWER, EQUAL):
        yield "market: C_dep^S <= C_nu^S", col(DEP, m), col(NU, m), True
    if ind == NONE:
        yield "market: C_nu^S vs C_ind^S", col(NU, m), col(IND, m), False
    if dep == NONE:
        yield "market: C_nu^S vs C_dep^S", col(NU, m), col(DEP, m), False


def verify_bounds(
    model: SharingModel,
    tail: TailModel,
    rho_star: DiscreteSpectralMeasure,
    agg: RNorm,
    method=EXACT,
) -> BoundReport:
    """Compute all three constant sets on common draws and check every ordering.

    Exact methods pass when the slack is above ``-1e-10`` relative to the
    larger side; Monte Carlo fails only when the mean slack is more than four
    standard errors of the paired difference below zero.  Each check also
    records the worst slack over individual matrix realizations.
    """
    _check_shapes(model, tail)
    _check_custom(rho_star, tail, agg)
    regime = classify_regime(tail.alpha, agg.r)
    q = model.q
    pairs = list(_pairs(regime, q))
    lhs_idx = np.array([p[1] for p in pairs], dtype=int)
    rhs_idx = np.array([p[2] for p in pairs], dtype=int)
    worst = np.full(len(pairs), np.inf)

    def fbatch(stack):
        stack = _as_stack(stack)
        vals = np.concatenate(
            [_ind_batch(stack, tail, agg), _dep_batch(stack, tail, agg), _custom_batch(stack, tail, rho_star, agg)],
            axis=1,
        )
        diffs = vals[:, rhs_idx] - vals[:, lhs_idx]
        scale = np.maximum(1.0, np.maximum(np.abs(vals[:, rhs_idx]), np.abs(vals[:, lhs_idx])))
        np.minimum(worst, (diffs / scale).min(axis=0), out=worst)
        return np.concatenate([vals, diffs], axis=1)

    mean, se, meta = expect_array(model, fbatch, method)
    ncol = 3 * (q + 1)
    blocks = []
    for b, label in enumerate(("independent", "dependent", "custom")):
        sl = slice(b * (q + 1), (b + 1) * (q + 1))
        est = _estimates(mean[sl], se[sl], meta)
        blocks.append(RiskConstants(est[:q], est[q], label, tail.alpha, agg.r))
    exact = meta["method"] == "exact-enumeration"
    checks = []
    for k, (name, li, ri, guaranteed) in enumerate(pairs):
        lhs, rhs = float(mean[li]), float(mean[ri])
        slack = float(mean[ncol + k])
        dse = float(se[ncol + k])
        if guaranteed:
            tol = EXACT_REL_TOL * max(1.0, abs(lhs), abs(rhs))
            passed = slack >= -tol if exact else slack >= -(MC_SIGMA * dse + tol)
        else:
            passed = None
        checks.append(InequalityCheck(name, lhs, rhs, guaranteed, passed, slack, dse, float(worst[k])))
    notes = [f"expectation method: {meta['method']}"]
    if regime.counterexample_zone:
        for c in checks:
            if not c.guaranteed:
                rel = "<" if c.slack > 0 else (">" if c.slack < 0 else "=")
                notes.append(
                    f"counterexample zone: {c.name.split(': ')[1].replace(' vs ', f' {rel} ')} "
                    "observed; no ordering is guaranteed here"
                )
    if regime.degenerate_equality:
        notes.append("alpha = r = 1: all market constants coincide")
    return BoundReport(regime, blocks[0], blocks[1], blocks[2], checks, notes)


# ---------------------------------------------------------------------------
# the two-dimensional counterexample


def counterexample_measure(alpha: float, r: float) -> DiscreteSpectralMeasure:
    """Canonical measure of ``nu_ind o B^-1`` with ``B = [[1, 1, 0], [1, 0, 1]]``.

    Equals ``1/2 delta_(1,0) + 1/2 delta_(0,1) + (||1||/2) delta_(1/||1||)``.
    """
    norm = RNorm(r)
    nu_ind3 = make_independent(TailModel(alpha, np.ones(3)), norm)
    B = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
    return canonicalize(pushforward(nu_ind3, B))


def closed_form_g(alpha: float, r: float) -> dict[str, float]:
    """The six g-values for ``A1 = I_2``, ``A2 = ones(2, 2)`` in closed form."""
    a, ar = alpha, alpha / r
    return {
        "ind_A1": 2.0,
        "nu0_A1": 1.0 + 2.0 ** (ar - 1.0),
        "dep_A1": 2.0 ** ar,
        "ind_A2": 2.0 ** (ar + 1.0),
        "nu0_A2": 2.0 ** ar + 0.5 * 2.0 ** (a * (1.0 + 1.0 / r)),
        "dep_A2": 2.0 ** (a * (1.0 + 1.0 / r)),
    }


@dataclass
class Crossover:
    """``lhs <op> rhs`` in the direction the counterexample needs."""

    name: str
    lhs: str
    op: str
    rhs: str
    relation: str
    predicted_relation: str
    active: bool
    reversed_active: bool
    condition: str

    @property
    def agrees(self) -> bool:
        return self.relation == self.predicted_relation

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["agrees"] = self.agrees
        return out


@dataclass
class CounterexampleReport:
    alpha: float
    r: float
    measure: DiscreteSpectralMeasure
    numeric: dict
    symbolic: dict
    max_rel_error: float
    crossovers: list
    ind_counterexample: bool
    dep_counterexample: bool
    regime: RegimeClassification

    @property
    def consistent(self) -> bool:
        return self.max_rel_error <= 1e-12 and all(c.agrees for c in self.crossovers)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "r": self.r,
            "measure": self.measure.to_dict(),
            "g_values": {
                k: {"numeric": self.numeric[k], "closed_form": self.symbolic[k]} for k in self.numeric
            },
            "max_rel_error": self.max_rel_error,
            "crossovers": [c.to_dict() for c in self.crossovers],
            "ind_counterexample": self.ind_counterexample,
            "dep_counterexample": self.dep_counterexample,
            "regime": self.regime.to_dict(),
            "consistent": self.consistent,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_csv(self) -> str:
        rows = []
        for c in self.crossovers:
            lhs, rhs = self.numeric[c.lhs], self.numeric[c.rhs]
            strict = c.op == "<"
            slack = rhs - lhs if strict else lhs - rhs
            rows.append(InequalityCheck(f"{c.name}: {c.lhs} {c.op} {c.rhs}", lhs, rhs, False, c.active, slack))
        for k in self.numeric:
            rows.append(
                InequalityCheck(
                    f"g {k}: numeric == closed form", self.numeric[k], self.symbolic[k], True,
                    abs(self.numeric[k] - self.symbolic[k]) <= 1e-12 * abs(self.symbolic[k]),
                    self.symbolic[k] - self.numeric[k],
                )
            )
        return _rows_to_csv(rows)


def _relation(a: float, b: float, rtol: float = 1e-11) -> str:
    if abs(a - b) <= rtol * max(abs(a), abs(b)):
        return "="
    return "<" if a < b else ">"


def _sign_rel(x: float) -> str:
    return "=" if x == 0 else ("<" if x < 0 else ">")


def counterexample_suite(alpha: float, r: float) -> CounterexampleReport:
    """Evaluate the six g-values numerically and in closed form, with the four crossovers."""
    if not (alpha > 0 and r > 0):
        raise ValueError("alpha and r must be positive")
    norm = RNorm(r)
    unit = TailModel(alpha, np.ones(2))
    measures = {
        "ind": canonicalize(make_independent(unit, norm)),
        "nu0": counterexample_measure(alpha, r),
        "dep": canonicalize(make_dependent(unit, norm)),
    }
    mats = {"A1": np.eye(2), "A2": np.ones((2, 2))}
    numeric = {
        f"{mk}_{ak}": g_functional(m, A, alpha, norm)
        for ak, A in mats.items()
        for mk, m in measures.items()
    }
    symbolic = closed_form_g(alpha, r)
    numeric = {k: numeric[k] for k in symbolic}
    max_err = max(abs(numeric[k] - symbolic[k]) / abs(symbolic[k]) for k in symbolic)

    # (name, lhs, op, rhs, predicted sign of lhs - rhs, condition text)
    spec = [
        ("ind-A1", "nu0_A1", "<", "ind_A1", _sign_rel(alpha - r), "r > alpha"),
        ("ind-A2", "ind_A2", "<", "nu0_A2", _sign_rel(1.0 - alpha), "alpha > 1"),
        ("dep-A1", "nu0_A1", ">", "dep_A1", _sign_rel(r - alpha), "alpha < r"),
        ("dep-A2", "dep_A2", ">", "nu0_A2", _sign_rel(alpha - 1.0), "alpha > 1"),
    ]
    flip = {"<": ">", ">": "<"}
    crossovers = []
    for name, lhs, op, rhs, predicted, cond in spec:
        rel = _relation(numeric[lhs], numeric[rhs])
        crossovers.append(
            Crossover(name, lhs, op, rhs, rel, predicted, rel == op, rel == flip[op], cond)
        )
    cx = {c.name: c for c in crossovers}

    def both(a, b):
        return (cx[a].active and cx[b].active) or (cx[a].reversed_active and cx[b].reversed_active)

    return CounterexampleReport(
        alpha=float(alpha),
        r=float(r),
        measure=measures["nu0"],
        numeric=numeric,
        symbolic=symbolic,
        max_rel_error=float(max_err),
        crossovers=crossovers,
        ind_counterexample=both("ind-A1", "ind-A2"),
        dep_counterexample=both("dep-A1", "dep-A2"),
        regime=classify_regime(alpha, r),
    )


def realization_constants(A, tail: TailModel, rho_star: DiscreteSpectralMeasure, agg: RNorm) -> dict:
    """Independent, dependent and custom constants for one fixed matrix."""
    model = Deterministic(A)
    return {
        "independent": constants_independent(model, tail, agg),
        "dependent": constants_dependent(model, tail, agg),
        "custom": constants_custom(model, tail, rho_star, agg),
    }
