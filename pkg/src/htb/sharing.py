"""Random q x d sharing matrices ``A`` with ``F = A V``.

Four model families are supported: a fixed matrix, a finite mixture of
matrices, the proportional-share bipartite graph ``A_ij = 1(i~j) / deg(j)``,
and an arbitrary user sampler.  Expectations ``E f(A)`` are evaluated by
exact enumeration where the support is finite and small, otherwise by
seeded Monte Carlo.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from .spectral import RNorm

ENUMERATION_MAX_EDGES = 20
SCENARIO_PROB_TOL = 1e-12
MC_CHUNK = 1 << 16


class EnumerationTooLargeError(ValueError):
    """Raised when exact enumeration would exceed the 2**20 graph cap."""


def _as_matrix(A, name: str = "matrix") -> np.ndarray:
    A = np.atleast_2d(np.array(A, dtype=float))
    if A.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional")
    if not np.all(np.isfinite(A)) or np.any(A < 0):
        raise ValueError(f"{name} must have finite nonnegative entries")
    A.setflags(write=False)
    return A


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True, eq=False)
class Deterministic:
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _as_matrix(self.matrix))

    @property
    def q(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    def to_dict(self) -> dict:
        return {"type": "deterministic", "matrix": self.matrix.tolist()}


@dataclass(frozen=True, eq=False)
class Scenarios:
    """Finite mixture: matrix ``matrices[m]`` occurs with probability ``probs[m]``."""

    matrices: tuple
    probs: np.ndarray

    def __post_init__(self):
        mats = tuple(_as_matrix(M, f"matrices[{i}]") for i, M in enumerate(self.matrices))
        if not mats:
            raise ValueError("need at least one scenario")
        shapes = {M.shape for M in mats}
        if len(shapes) != 1:
            raise ValueError(f"scenario matrices differ in shape: {sorted(shapes)}")
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if probs.size != len(mats):
            raise ValueError("one probability per scenario is required")
        if np.any(probs <= 0):
            raise ValueError("scenario probabilities must be positive")
        if abs(probs.sum() - 1.0) > SCENARIO_PROB_TOL:
            raise ValueError(f"scenario probabilities sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "probs", probs)

    @property
    def q(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def d(self) -> int:
        return self.matrices[0].shape[1]

    def to_dict(self) -> dict:
        return {
            "type": "scenarios",
            "items": [
                {"matrix": M.tolist(), "p": float(p)}
                for M, p in zip(self.matrices, self.probs)
            ],
        }


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Agent i joins risk j independently with probability ``p[i, j]``.

    ``zero_degree`` decides what happens to a risk nobody picks: ``"drop"``
    leaves its column at zero, ``"resample"`` conditions on ``deg(j) >= 1``.
    """

    p: np.ndarray
    zero_degree: str = "drop"

    def __post_init__(self):
        p = np.atleast_2d(np.array(self.p, dtype=float))
        if p.ndim != 2 or not np.all(np.isfinite(p)) or np.any((p < 0) | (p > 1)):
            raise ValueError("edge probabilities must form a q x d array in [0, 1]")
        if self.zero_degree not in ("drop", "resample"):
            raise ValueError(f"zero_degree must be 'drop' or 'resample', got {self.zero_degree!r}")
        if self.zero_degree == "resample" and np.any(np.all(p == 0, axis=0)):
            raise ValueError("resample policy needs every risk to have a possible edge")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def uniform(cls, q: int, d: int, prob: float, zero_degree: str = "drop"):
        return cls(np.full((q, d), float(prob)), zero_degree)

    @property
    def q(self) -> int:
        return self.p.shape[0]

    @property
    def d(self) -> int:
        return self.p.shape[1]

    def to_dict(self) -> dict:
        return {
            "type": "bipartite",
            "q": self.q,
            "d": self.d,
            "p": self.p.tolist(),
            "zero_degree": self.zero_degree,
        }


@dataclass(frozen=True, eq=False)
class SamplerHook:
    """Black-box law for ``A``: ``sampler(rng)`` returns one q x d matrix.

    Every draw is checked for shape and nonnegativity.
    """

    sampler: Callable[[np.random.Generator], Any]
    q: int
    d: int
    name: str = "hook"

    def to_dict(self) -> dict:
        raise TypeError("a SamplerHook cannot be serialized")


SharingModel = Deterministic | Scenarios | BipartiteGraph | SamplerHook


def model_from_dict(data: dict) -> SharingModel:
    kind = data.get("type")
    if kind == "deterministic":
        return Deterministic(data["matrix"])
    if kind == "scenarios":
        items = data["items"]
        return Scenarios(tuple(it["matrix"] for it in items), [it["p"] for it in items])
    if kind == "bipartite":
        p = np.array(data["p"], dtype=float)
        if p.ndim == 0:
            p = np.full((int(data["q"]), int(data["d"])), float(p))
        model = BipartiteGraph(p, data.get("zero_degree", "drop"))
        if "q" in data and int(data["q"]) != model.q or "d" in data and int(data["d"]) != model.d:
            raise ValueError("q/d do not match the shape of p")
        return model
    raise ValueError(f"unknown sharing model type {kind!r}")


def model_to_json(model: SharingModel, **kwargs) -> str:
    return json.dumps(model.to_dict(), **kwargs)


def model_from_json(text: str) -> SharingModel:
    return model_from_dict(json.loads(text))


def is_bounded(model: SharingModel) -> bool:
    return not isinstance(model, SamplerHook)


def is_enumerable(model: SharingModel) -> bool:
    if isinstance(model, (Deterministic, Scenarios)):
        return True
    if isinstance(model, BipartiteGraph):
        return model.q * model.d <= ENUMERATION_MAX_EDGES
    return False


# ---------------------------------------------------------------------------
# sampling


def _shares(edges: np.ndarray) -> np.ndarray:
    """Proportional shares from a (..., q, d) 0/1 edge array."""
    deg = edges.sum(axis=-2, keepdims=True)
    return np.divide(edges, deg, out=np.zeros(edges.shape), where=deg > 0)


def _validate_draw(A, model: SamplerHook) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (model.q, model.d):
        raise ValueError(f"sampler returned shape {A.shape}, expected {(model.q, model.d)}")
    if not np.all(np.isfinite(A)) or np.any(A < 0):
        raise ValueError("sampler returned a matrix with negative or non-finite entries")
    return A


def _bipartite_batch(model: BipartiteGraph, n: int, rng: np.random.Generator) -> np.ndarray:
    edges = (rng.random((n, model.q, model.d)) < model.p).astype(float)
    if model.zero_degree == "resample":
        # columns are independent, so rejection can run column by column
        empty = edges.sum(axis=1) == 0
        while np.any(empty):
            idx, col = np.nonzero(empty)
            fresh = (rng.random((idx.size, model.q)) < model.p[:, col].T).astype(float)
            edges[idx, :, col] = fresh
            empty = edges.sum(axis=1) == 0
    return _shares(edges)


def sample_batch(model: SharingModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. realizations as an (n, q, d) array."""
    if isinstance(model, Deterministic):
        return np.broadcast_to(model.matrix, (n,) + model.matrix.shape)
    if isinstance(model, Scenarios):
        idx = rng.choice(len(model.matrices), size=n, p=model.probs)
        return np.stack(model.matrices)[idx]
    if isinstance(model, BipartiteGraph):
        return _bipartite_batch(model, n, rng)
    if isinstance(model, SamplerHook):
        return np.stack([_validate_draw(model.sampler(rng), model) for _ in range(n)])
    raise TypeError(f"not a sharing model: {model!r}")


def sample(model: SharingModel, seed: int) -> np.ndarray:
    """One realization of ``A``, reproducible for a fixed seed."""
    rng = np.random.default_rng(seed)
    return np.array(sample_batch(model, 1, rng)[0])


def support(model: SharingModel) -> Iterator[tuple[np.ndarray, float]]:
    """Yield ``(matrix, probability)`` over the finite support of an enumerable model."""
    if isinstance(model, Deterministic):
        yield model.matrix, 1.0
        return
    if isinstance(model, Scenarios):
        yield from zip(model.matrices, (float(p) for p in model.probs))
        return
    if not isinstance(model, BipartiteGraph):
        raise EnumerationTooLargeError("only finite-support models can be enumerated")
    q, d = model.q, model.d
    if q * d > ENUMERATION_MAX_EDGES:
        raise EnumerationTooLargeError(
            f"enumeration too large: {q * d} edges exceed the cap of {ENUMERATION_MAX_EDGES}"
        )
    p = model.p
    # columns are independent: enumerate each column's edge patterns, then combine
    columns = []
    for j in range(d):
        pats = []
        for bits in itertools.product((0.0, 1.0), repeat=q):
            e = np.array(bits)
            w = float(np.prod(np.where(e == 1.0, p[:, j], 1.0 - p[:, j])))
            if w == 0.0:
                continue
            if model.zero_degree == "resample" and e.sum() == 0:
                continue
            pats.append((e, w))
        if model.zero_degree == "resample":
            total = sum(w for _, w in pats)
            pats = [(e, w / total) for e, w in pats]
        columns.append(pats)
    for combo in itertools.product(*columns):
        edges = np.stack([e for e, _ in combo], axis=1)
        w = math.prod(w for _, w in combo)
        yield _shares(edges), w


# ---------------------------------------------------------------------------
# expectations


@dataclass(frozen=True)
class MonteCarlo:
    """Monte Carlo expectation with ``n`` draws from ``default_rng(seed)``."""

    n: int
    seed: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("Monte Carlo needs n >= 1")


EXACT = "exact"


@dataclass(frozen=True)
class ExpectationEstimate:
    value: float
    std_error: float = 0.0
    method: str = "exact-enumeration"
    n: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.method not in ("exact-enumeration", "monte-carlo"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "exact-enumeration" and self.std_error != 0.0:
            raise ValueError("std_error must be 0 exactly for exact enumeration")
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")

    @property
    def exact(self) -> bool:
        return self.method == "exact-enumeration"

    def to_dict(self) -> dict:
        out = {"value": self.value, "std_error": self.std_error, "method": self.method}
        if not self.exact:
            out.update(n=self.n, seed=self.seed)
        return out


def expect_array(model: SharingModel, fbatch: Callable, method) -> tuple[np.ndarray, np.ndarray, dict]:
    """Expectation of a vector-valued batched functional.

    ``fbatch`` maps an (n, q, d) stack to an (n,) or (n, k) array.  Returns
    ``(mean, std_error, meta)``; exact methods have zero standard error.
    """
    if method == EXACT:
        mats, probs = [], []
        for M, p in support(model):
            mats.append(M)
            probs.append(p)
        vals = np.asarray(fbatch(np.stack(mats)), dtype=float)
        w = np.asarray(probs)
        mean = np.tensordot(w, vals, axes=(0, 0))
        return mean, np.zeros_like(mean), {"method": "exact-enumeration"}
    if not isinstance(method, MonteCarlo):
        raise ValueError(f"method must be {EXACT!r} or MonteCarlo(n, seed), got {method!r}")
    rng = np.random.default_rng(method.seed)
    total = None
    total_sq = None
    done = 0
    # chunked streaming sums keep memory bounded and the order of summation fixed
    while done < method.n:
        m = min(MC_CHUNK, method.n - done)
        vals = np.asarray(fbatch(sample_batch(model, m, rng)), dtype=float)
        s, s2 = vals.sum(axis=0), (vals * vals).sum(axis=0)
        total = s if total is None else total + s
        total_sq = s2 if total_sq is None else total_sq + s2
        done += m
    n = method.n
    mean = total / n
    if n > 1:
        var = np.maximum(total_sq - n * mean * mean, 0.0) / (n - 1)
        se = np.sqrt(var / n)
    else:
        se = np.full_like(mean, np.inf)
    return mean, se, {"method": "monte-carlo", "n": n, "seed": method.seed}


def _estimates(mean, se, meta) -> list[ExpectationEstimate]:
    mean = np.atleast_1d(mean)
    se = np.atleast_1d(se)
    return [
        ExpectationEstimate(float(v), float(s), meta["method"], meta.get("n"), meta.get("seed"))
        for v, s in zip(mean, se)
    ]


def expect(model: SharingModel, f: Callable[[np.ndarray], float], method=EXACT) -> ExpectationEstimate:
    """``E f(A)`` for a scalar functional of one matrix.

    ``f`` must be pure; it is called once per support point or per draw.
    """

    def fbatch(stack):
        return np.array([f(np.asarray(M)) for M in stack], dtype=float)

    mean, se, meta = expect_array(model, fbatch, method)
    return _estimates(mean, se, meta)[0]


# ---------------------------------------------------------------------------
# norms and the moment condition


def _power_iteration(A: np.ndarray, r: float, x0: np.ndarray, norm: RNorm, iters: int = 500, tol: float = 1e-13):
    # Boyd's nonlinear power method for the induced r-norm of a nonnegative matrix
    x = x0 / norm(x0)
    best = norm(A @ x)
    conj = r / (r - 1.0)
    for _ in range(iters):
        y = A @ x
        z = A.T @ (y ** (r - 1.0))
        if not np.any(z > 0):
            break
        x_new = z ** (conj - 1.0)
        x_new = x_new / norm(x_new)
        val = norm(A @ x_new)
        if val <= best * (1 + tol) and np.max(np.abs(x_new - x)) < 1e-12:
            best = max(best, val)
            break
        x, best = x_new, max(best, val)
    return best


def operator_norm(A, agg: RNorm, *, restarts: int = 64, seed: int = 0) -> float:
    """Induced norm ``sup_{||x|| = 1} ||A x||`` with both norms equal to ``agg``.

    Closed forms for r = 1 (max column sum) and r = 2 (largest singular
    value); nonlinear power iteration from the axis directions and random
    starts otherwise.  For quasinorms (r < 1) the value comes from a random
    search over the positive sphere plus local refinement and is approximate.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if np.any(A < 0):
        raise ValueError("operator_norm expects a nonnegative matrix")
    if not np.any(A > 0):
        return 0.0
    r = agg.r
    if r == 1.0:
        return float(A.sum(axis=0).max())
    if r == 2.0:
        return float(np.linalg.norm(A, 2))
    d = A.shape[1]
    axis_best = float(np.max(np.atleast_1d(agg(A.T, axis=1))))
    rng = np.random.default_rng(seed)
    starts = [np.eye(d)[j] for j in range(d)] + [np.ones(d)]
    starts += [rng.random(d) + 1e-3 for _ in range(max(restarts - len(starts), 0))]
    if r > 1.0:
        best = axis_best
        for x0 in starts:
            best = max(best, _power_iteration(A, r, x0, agg))
        return float(best)
    # r < 1: the ratio is scale-free; search the positive orthant by random rays
    pts = rng.dirichlet(np.ones(d), size=4096)
    vals = np.atleast_1d(agg(pts @ A.T, axis=1)) / np.atleast_1d(agg(pts, axis=1))
    best = max(axis_best, float(vals.max()))
    x = pts[int(np.argmax(vals))]
    step = 0.1
    for _ in range(400):
        cand = np.clip(x + step * rng.normal(size=d), 0, None)
        if not np.any(cand > 0):
            continue
        val = agg(A @ cand) / agg(cand)
        if val > best:
            best, x = float(val), cand
        else:
            step *= 0.98
    return float(best)


def bounded_support_bound(model: SharingModel, agg: RNorm) -> float | None:
    """Deterministic upper bound on ``||A||_op`` when the law has bounded support.

    Uses ``||A x|| <= q**max(0, 1/r - 1) * sum_ij A_ij * max_j x_j`` and
    ``max_j x_j <= ||x||``.
    """
    q = model.q
    factor = q ** max(0.0, 1.0 / agg.r - 1.0)
    if isinstance(model, Deterministic):
        return factor * float(model.matrix.sum())
    if isinstance(model, Scenarios):
        return factor * max(float(M.sum()) for M in model.matrices)
    if isinstance(model, BipartiteGraph):
        # every column of shares sums to 0 or 1
        return factor * float(model.d)
    return None


@dataclass(frozen=True)
class MomentDiagnostic:
    estimate: ExpectationEstimate
    exponent: float
    bounded_support: bool
    bound: float | None
    tail_index: float | None = None
    flag: str = "ok"
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate.to_dict(),
            "exponent": self.exponent,
            "bounded_support": self.bounded_support,
            "bound": self.bound,
            "tail_index": self.tail_index,
            "flag": self.flag,
            "notes": list(self.notes),
        }


def hill_estimate(x: np.ndarray, k: int | None = None) -> float:
    """Hill estimator of the tail index from the ``k`` largest positive values."""
    x = np.sort(np.asarray(x, dtype=float)[np.asarray(x) > 0])
    if x.size < 10:
        return math.inf
    k = k or max(10, int(math.sqrt(x.size)))
    k = min(k, x.size - 1)
    top = x[-k:]
    thresh = x[-k - 1]
    mean_log = float(np.mean(np.log(top / thresh)))
    return math.inf if mean_log <= 0 else 1.0 / mean_log


def moment_diagnostic(
    model: SharingModel, alpha: float, delta: float, n: int, seed: int, agg: RNorm | None = None
) -> MomentDiagnostic:
    """Estimate ``E ||A||_op**(alpha + delta)`` and judge the moment condition.

    Finite-support models are evaluated exactly.  Sampled models are flagged
    ``"moment condition suspect"`` when a Hill estimate of the tail index of
    ``||A||_op**(alpha + delta)`` falls below 1.5 (an infinite or barely finite
    mean).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    agg = agg or RNorm(1.0)
    p = alpha + delta
    notes = []
    bound = bounded_support_bound(model, agg)
    bounded = bound is not None
    if agg.r < 1:
        notes.append("operator quasinorm computed by search; values approximate")

    def fbatch(stack):
        return np.array([operator_norm(M, agg) ** p for M in stack])

    if isinstance(model, (Deterministic, Scenarios)):
        mean, se, meta = expect_array(model, fbatch, EXACT)
        est = _estimates(mean, se, meta)[0]
        norms = None
    else:
        rng = np.random.default_rng(seed)
        norms = fbatch(sample_batch(model, n, rng))
        mean = float(norms.mean())
        se = float(norms.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        est = ExpectationEstimate(mean, se, "monte-carlo", n, seed)
    tail_index = None
    flag = "ok"
    if bounded:
        notes.append(f"bounded support: ||A||_op <= {bound:.6g}, condition holds trivially")
    elif norms is not None:
        tail_index = hill_estimate(norms)
        if tail_index < 1.5:
            flag = "moment condition suspect"
            notes.append(
                f"Hill tail index of ||A||_op^{p:g} is {tail_index:.3g}; "
                "the running mean is unlikely to converge"
            )
    return MomentDiagnostic(est, p, bounded, bound, tail_index, flag, notes)
