"""Monte Carlo for ``F = A V`` with exact power-law margins.

Every generator draws standard Pareto radii ``P(R > t) = t**-alpha`` so the
margins satisfy ``P(V_j > t) = K_j t**-alpha`` exactly above a finite
threshold, not only asymptotically.  Work is split into fixed-size chunks,
each with its own child seed, so results do not depend on the thread count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import risk
from .sharing import Deterministic, SharingModel, is_enumerable, MonteCarlo, EXACT, sample_batch
from .spectral import DiscreteSpectralMeasure, RNorm, TailModel, canonicalize, make_dependent, make_independent

CHUNK = 1 << 18
UNDERSAMPLED = 20
BOOTSTRAP_RESAMPLES = 200
MAGIC = b"HTB1"


class TailUndersampledWarning(UserWarning):
    pass


class EmptyTailError(ValueError):
    pass


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("HTB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class DependenceSpec:
    """How the coordinates of ``V`` share extremes.

    ``kind`` is ``"independent"``, ``"comonotone"`` or ``"spectral"``; the
    last needs a canonical ``measure`` of dimension ``tail.d``.
    """

    kind: str
    tail: TailModel
    measure: DiscreteSpectralMeasure | None = None

    def __post_init__(self):
        if self.kind not in ("independent", "comonotone", "spectral"):
            raise ValueError(f"unknown dependence kind {self.kind!r}")
        if self.kind == "spectral":
            m = self.measure
            if m is None or not m.canonical:
                raise ValueError("spectral dependence needs a canonical measure")
            if m.dim != self.tail.d:
                raise ValueError(f"measure dim {m.dim} != tail dim {self.tail.d}")

    def canonical_measure(self, norm: RNorm) -> DiscreteSpectralMeasure:
        if self.kind == "independent":
            return canonicalize(make_independent(self.tail, norm))
        if self.kind == "comonotone":
            return canonicalize(make_dependent(self.tail, norm))
        return self.measure

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "tail": self.tail.to_dict()}
        if self.measure is not None:
            out["measure"] = self.measure.to_dict()
        return out

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class SampleBatch:
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size < 1:
            raise ValueError("a batch needs at least one value")
        if np.any(self.values < 0):
            raise ValueError("losses must be nonnegative")

    @property
    def n(self) -> int:
        return int(self.values.size)


# ---------------------------------------------------------------------------
# sampling


def _pareto(rng: np.random.Generator, alpha: float, size) -> np.ndarray:
    # 1 - U lies in (0, 1], so the radius is finite and >= 1
    return (1.0 - rng.random(size)) ** (-1.0 / alpha)


def _spectral_atoms(spec: DependenceSpec):
    m = spec.measure
    total = m.total_mass
    # one-radius mixture: V = R * (total * K * v_k)**(1/alpha) gives P(V_j > t) = K_j t^-alpha
    z = (total * spec.tail.K[None, :] * m.directions) ** (1.0 / spec.tail.alpha)
    return m.masses / total, z


def _sample_V_chunk(spec: DependenceSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    a = spec.tail.alpha
    d = spec.tail.d
    if spec.kind == "independent":
        return _pareto(rng, a, (n, d)) * spec.tail.scale_root()
    if spec.kind == "comonotone":
        return _pareto(rng, a, (n, 1)) * spec.tail.scale_root()
    probs, z = _spectral_atoms(spec)
    k = rng.choice(probs.size, size=n, p=probs)
    return _pareto(rng, a, (n, 1)) * z[k]


def tail_threshold(spec: DependenceSpec) -> np.ndarray:
    """Per coordinate, the level above which ``P(V_j > t) = K_j t**-alpha`` holds exactly."""
    if spec.kind != "spectral":
        return spec.tail.scale_root()
    _, z = _spectral_atoms(spec)
    return z.max(axis=0)


def _chunks(n: int, seed: int):
    sizes = [CHUNK] * (n // CHUNK) + ([n % CHUNK] if n % CHUNK else [])
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    return list(zip(sizes, seqs))


def _run_chunks(fn, n: int, seed: int, threads: int | None):
    jobs = _chunks(n, seed)
    threads = threads or default_threads()
    if threads <= 1 or len(jobs) == 1:
        return [fn(size, np.random.default_rng(ss)) for size, ss in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(job[0], np.random.default_rng(job[1])), jobs))


def sample_V(spec: DependenceSpec, n: int, seed: int, *, threads: int | None = None) -> np.ndarray:
    """``n x d`` draws of ``V``; identical for identical ``(spec, n, seed)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    parts = _run_chunks(lambda m, rng: _sample_V_chunk(spec, m, rng), n, seed, threads)
    return np.concatenate(parts, axis=0)


@dataclass
class FSample:
    """Per-agent exposures ``F_i`` and the aggregate ``||F||_r`` from one run."""

    agents: list
    aggregate: SampleBatch
    column_sums: np.ndarray | None = None


def sample_F(
    spec: DependenceSpec,
    model: SharingModel,
    agg: RNorm,
    n: int,
    seed: int,
    *,
    threads: int | None = None,
) -> FSample:
    """Draw ``A`` and ``V`` independently per sample and form ``F = A V``."""
    if model.d != spec.tail.d:
        raise ValueError(f"shape mismatch: model has d={model.d}, spec has d={spec.tail.d}")
    if n < 1:
        raise ValueError("n must be at least 1")
    fixed = model.matrix if isinstance(model, Deterministic) else None

    def chunk(m, rng):
        V = _sample_V_chunk(spec, m, rng)
        if fixed is not None:
            F = V @ fixed.T
            colsum = np.broadcast_to(fixed.sum(axis=0), (1, model.d))
        else:
            A = np.asarray(sample_batch(model, m, rng))
            F = np.einsum("nqd,nd->nq", A, V)
            colsum = A.sum(axis=1)
        return F, colsum

    parts = _run_chunks(chunk, n, seed, threads)
    F = np.concatenate([p[0] for p in parts], axis=0)
    colsums = np.concatenate([p[1] for p in parts], axis=0)
    meta = {"seed": seed, "n": n, "spec": spec.fingerprint(), "r": agg.r}
    agents = [SampleBatch(F[:, i], dict(meta, target=f"agent_{i + 1}")) for i in range(model.q)]
    aggregate = SampleBatch(np.atleast_1d(agg(F, axis=1)), dict(meta, target="market"))
    return FSample(agents, aggregate, colsums)


# ---------------------------------------------------------------------------
# estimators


def _values(batch) -> np.ndarray:
    return batch.values if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=float).reshape(-1)


def _exceed_count(n: int, gamma: float) -> int:
    """``floor(n * gamma)``, robust to the rounding of the product."""
    x = n * gamma
    k = round(x)
    if abs(x - k) <= 1e-9 * max(1.0, x):
        return int(k)
    return int(math.floor(x))


def _check_gamma(gamma: float):
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma!r}")


def empirical_var(batch, gamma: float) -> float:
    """Empirical ``inf{t : P_n(X > t) <= gamma}``: the order statistic ``x_(ceil(n(1-gamma)))``."""
    _check_gamma(gamma)
    x = _values(batch)
    n = x.size
    if n * gamma < UNDERSAMPLED:
        warnings.warn(
            f"tail undersampled: n*gamma = {n * gamma:g} < {UNDERSAMPLED}",
            TailUndersampledWarning,
            stacklevel=2,
        )
    m = n - _exceed_count(n, gamma)  # 1-based rank of the order statistic
    return float(np.partition(x, m - 1)[m - 1])


def empirical_cote(batch, gamma: float) -> float:
    """Mean of the values strictly above the empirical VaR."""
    x = _values(batch)
    v = empirical_var(batch, gamma)
    tail = x[x > v]
    if tail.size == 0:
        raise EmptyTailError("empty tail: no value exceeds the empirical VaR")
    return float(tail.mean())


def bootstrap_tail_se(batch, gamma: float, resamples: int = BOOTSTRAP_RESAMPLES, seed: int = 0) -> tuple[float, float]:
    """Bootstrap standard errors of ``(empirical_var, empirical_cote)``.

    A resample of size n is equivalent to multinomial counts over the data.
    Only counts landing in the top ``L`` order statistics matter for the
    upper quantile, so those are drawn explicitly and the rest are lumped;
    replicates whose tail reaches past ``L`` fall back to a full resample.
    CoTE replicates with an empty tail are skipped.
    """
    _check_gamma(gamma)
    x = _values(batch)
    n = x.size
    k = _exceed_count(n, gamma) + 1  # VaR is the k-th largest value
    L = int(min(n, 2 * k + 10 * math.sqrt(k) + 100))
    top = -np.sort(-np.partition(x, n - L)[n - L:]) if L < n else -np.sort(-x)
    rng = np.random.default_rng(seed)
    pvals = np.full(L + 1, 1.0 / n)
    pvals[-1] = max(0.0, 1.0 - L / n)
    vars_, cotes = [], []
    for _ in range(resamples):
        counts = rng.multinomial(n, pvals)[:L]
        cum = np.cumsum(counts)
        if cum[-1] >= k:
            j = int(np.searchsorted(cum, k))
            v = top[j]
            above = top[:j] > v
            c = counts[:j][above]
            tot = c.sum()
            cote = float((c * top[:j][above]).sum() / tot) if tot else None
        else:
            xb = x[rng.integers(0, n, n)]
            v = empirical_var(xb, gamma)
            tail = xb[xb > v]
            cote = float(tail.mean()) if tail.size else None
        vars_.append(float(v))
        if cote is not None:
            cotes.append(cote)
    se_var = float(np.std(vars_, ddof=1)) if len(vars_) > 1 else math.nan
    se_cote = float(np.std(cotes, ddof=1)) if len(cotes) > 1 else math.nan
    return se_var, se_cote


# ---------------------------------------------------------------------------
# convergence study


@dataclass
class ConvergenceRow:
    gamma: float
    target: str
    empirical: float
    asymptotic: float
    ratio: float
    stderr: float


TABLE_FIELDS = ["gamma", "target", "empirical", "asymptotic", "ratio", "stderr"]


@dataclass
class ConvergenceTable:
    rows: list
    constants: risk.RiskConstants
    meta: dict = field(default_factory=dict)

    def select(self, target: str) -> list:
        return [r for r in self.rows if r.target == target]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_FIELDS)
        for r in self.rows:
            w.writerow([repr(r.gamma), r.target, repr(r.empirical), repr(r.asymptotic), repr(r.ratio), repr(r.stderr)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "constants": self.constants.to_dict(),
            "rows": [dict(zip(TABLE_FIELDS, (r.gamma, r.target, r.empirical, r.asymptotic, r.ratio, r.stderr))) for r in self.rows],
        }


def predicted_constants(spec: DependenceSpec, model: SharingModel, agg: RNorm, n: int = 100_000, seed: int = 0) -> risk.RiskConstants:
    """Risk constants matching the dependence kind of ``spec``."""
    method = EXACT if is_enumerable(model) else MonteCarlo(n, seed)
    if spec.kind == "independent":
        return risk.constants_independent(model, spec.tail, agg, method)
    if spec.kind == "comonotone":
        return risk.constants_dependent(model, spec.tail, agg, method)
    return risk.constants_custom(model, spec.tail, spec.measure, agg, method)


def convergence_study(
    spec: DependenceSpec,
    model: SharingModel,
    agg: RNorm,
    gamma_grid: Sequence[float],
    n: int,
    seed: int,
    *,
    resamples: int = BOOTSTRAP_RESAMPLES,
    threads: int | None = None,
) -> ConvergenceTable:
    """Empirical versus asymptotic VaR/CoTE for each agent and the market.

    Targets are named ``agent_<i>.var``, ``agent_<i>.cote``, ``market.var``
    and ``market.cote``; CoTE rows are omitted for ``alpha <= 1``.  Ratio
    standard errors come from ``resamples`` bootstrap replicates.
    """
    grid = [float(g) for g in gamma_grid]
    if not grid:
        raise ValueError("gamma grid is empty")
    for g in grid:
        _check_gamma(g)
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise ValueError("gamma grid must be strictly decreasing")
    consts = predicted_constants(spec, model, agg, seed=seed)
    sample = sample_F(spec, model, agg, n, seed, threads=threads)
    alpha = spec.tail.alpha
    targets = [(f"agent_{i + 1}", b, consts.per_agent[i].value) for i, b in enumerate(sample.agents)]
    targets.append(("market", sample.aggregate, consts.market.value))
    rows = []
    for gi, g in enumerate(grid):
        for ti, (name, batch, C) in enumerate(targets):
            v = empirical_var(batch, g)
            try:
                c = empirical_cote(batch, g)
            except EmptyTailError:
                c = math.nan
            se_v, se_c = bootstrap_tail_se(batch, g, resamples, seed=seed + 7919 * gi + ti)
            av = risk.var_asymptotic(C, alpha, g) if C > 0 else math.nan
            rows.append(ConvergenceRow(g, f"{name}.var", v, av, v / av if C > 0 else math.nan, se_v / av if C > 0 else math.nan))
            if alpha > 1:
                ac = risk.cote_asymptotic(C, alpha, g) if C > 0 else math.nan
                rows.append(ConvergenceRow(g, f"{name}.cote", c, ac, c / ac if C > 0 else math.nan, se_c / ac if C > 0 else math.nan))
    meta = {"n": n, "seed": seed, "spec": spec.fingerprint(), "r": agg.r, "gammas": grid}
    return ConvergenceTable(rows, consts, meta)


# ---------------------------------------------------------------------------
# persistence


def write_batch_binary(path, values: np.ndarray, seed: int) -> None:
    """Column file: magic ``HTB1``, then little-endian u64 n, u64 d, i64 seed, then columns."""
    arr = np.asarray(values, dtype="<f8")
    if arr.ndim == 1:
        arr = arr[:, None]
    n, d = arr.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQq", n, d, int(seed)))
        fh.write(np.ascontiguousarray(arr.T).tobytes())


def read_batch_binary(path) -> tuple[np.ndarray, int]:
    """Inverse of :func:`write_batch_binary`; returns ``(values (n, d), seed)``."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an HTB1 file")
    n, d, seed = struct.unpack("<QQq", raw[4:28])
    body = np.frombuffer(raw, dtype="<f8", offset=28)
    if body.size != n * d:
        raise ValueError(f"{path}: expected {n * d} doubles, found {body.size}")
    return body.reshape(d, n).T.astype(float), int(seed)


def write_batch_csv(path, values: np.ndarray, columns: Sequence[str] | None = None) -> None:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    columns = list(columns) if columns else [f"x{j + 1}" for j in range(arr.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in arr:
            w.writerow([repr(float(v)) for v in row])
