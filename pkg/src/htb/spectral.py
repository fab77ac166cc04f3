"""Discrete spectral measures for multivariate regularly varying vectors.

An exponent measure of index ``alpha`` concentrated on finitely many rays is
stored as atoms ``(s_k, m_k)`` on the positive unit sphere of an r-norm, with
the convention that the ray ``{t * s_k : t > tau}`` carries mass
``m_k * tau**(-alpha)``.  Canonical measures (index 1, balanced margins) are
the same object with ``alpha == 1`` and ``canonical=True``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

SPHERE_TOL = 1e-12
BALANCE_TOL = 1e-10
MERGE_TOL = 1e-12
MASS_FLOOR = 1e-15
# |p * log(x)| beyond this switches power evaluation to log space
LOG_SPACE_THRESHOLD = 1e2


class DegenerateMarginError(ValueError):
    """Raised when a coordinate carries no tail mass."""


class NormMismatchError(ValueError):
    """Raised when two objects built on different r-norms are combined."""


def powmul(coef, base, p):
    """Return ``coef * base**p`` elementwise, via logs when the power is extreme.

    ``base`` must be nonnegative; ``0**p`` is 0 for ``p > 0``.
    """
    coef = np.asarray(coef, dtype=float)
    base = np.asarray(base, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        logb = np.log(base)
        big = np.abs(p * logb) > LOG_SPACE_THRESHOLD
        direct = coef * np.power(base, p)
        if np.any(big):
            logged = np.exp(np.log(coef) + p * logb)
            return np.where(big, logged, direct)
    return direct


@dataclass(frozen=True)
class RNorm:
    """The r-norm (r >= 1) or r-quasinorm (0 < r < 1) ``(sum x_i**r)**(1/r)``."""

    r: float

    def __post_init__(self):
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError(f"r must be a positive finite real, got {self.r!r}")
        object.__setattr__(self, "r", float(self.r))

    @property
    def is_quasinorm(self) -> bool:
        return self.r < 1.0

    def __call__(self, x, axis: int = -1):
        x = np.abs(np.asarray(x, dtype=float))
        # scale by the max entry so large r neither overflows nor underflows
        scale = np.max(x, axis=axis, keepdims=True)
        safe = np.where(scale > 0, scale, 1.0)
        s = np.sum((x / safe) ** self.r, axis=axis, keepdims=True) ** (1.0 / self.r)
        out = np.squeeze(s * scale, axis=axis)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TailModel:
    """Common tail index ``alpha`` and margin constants ``K_j``: P(V_j > t) ~ K_j t^-alpha."""

    alpha: float
    K: np.ndarray

    def __post_init__(self):
        alpha = float(self.alpha)
        K = np.array(self.K, dtype=float).reshape(-1)
        if not (alpha > 0 and math.isfinite(alpha)):
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if K.size < 1:
            raise ValueError("K must have at least one entry")
        if not np.all(np.isfinite(K)) or np.any(K <= 0):
            raise ValueError("every K_j must be a positive finite real")
        K.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "K", K)

    @property
    def d(self) -> int:
        return int(self.K.size)

    def scale_root(self) -> np.ndarray:
        """Diagonal of ``K**(1/alpha)``."""
        return self.K ** (1.0 / self.alpha)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "K": self.K.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "TailModel":
        return cls(alpha=data["alpha"], K=data["K"])


@dataclass(frozen=True, eq=False)
class DiscreteSpectralMeasure:
    """Finite-atom spectral (ray) representation of a homogeneous exponent measure.

    Attributes
    ----------
    norm : RNorm
        Norm defining the reference sphere.
    alpha : float
        Homogeneity index of the exponent measure (1 for canonical measures).
    directions : ndarray, shape (n_atoms, dim)
        Atom locations on the positive unit sphere.
    masses : ndarray, shape (n_atoms,)
        Strictly positive atom masses.
    canonical : bool
        Whether the measure is a canonical spectral measure.
    """

    norm: RNorm
    alpha: float
    directions: np.ndarray
    masses: np.ndarray
    canonical: bool = False
    dim: int = field(init=False)

    def __post_init__(self):
        dirs = np.array(self.directions, dtype=float)
        if dirs.ndim == 1:
            dirs = dirs.reshape(1, -1)
        masses = np.array(self.masses, dtype=float).reshape(-1)
        if not isinstance(self.norm, RNorm):
            object.__setattr__(self, "norm", RNorm(self.norm))
        if dirs.ndim != 2 or dirs.shape[0] < 1 or dirs.shape[1] < 1:
            raise ValueError("need at least one atom with a nonempty direction")
        if masses.shape[0] != dirs.shape[0]:
            raise ValueError("directions and masses disagree on the number of atoms")
        if np.any(dirs < 0) or not np.all(np.isfinite(dirs)):
            raise ValueError("directions must be finite and nonnegative")
        if np.any(masses <= 0) or not np.all(np.isfinite(masses)):
            raise ValueError("atom masses must be strictly positive and finite")
        lengths = np.atleast_1d(self.norm(dirs, axis=1))
        if np.any(np.abs(lengths - 1.0) > SPHERE_TOL):
            raise ValueError(
                f"directions must lie on the unit sphere of the r={self.norm.r} norm"
            )
        alpha = float(self.alpha)
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        if self.canonical:
            if alpha != 1.0:
                raise ValueError("a canonical measure has alpha = 1")
            balance = masses @ dirs
            if np.any(np.abs(balance - 1.0) > BALANCE_TOL):
                raise ValueError(f"canonical balance violated: {balance}")
        dirs.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "dim", int(dirs.shape[1]))

    @property
    def n_atoms(self) -> int:
        return int(self.masses.size)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def atoms(self) -> list[tuple[np.ndarray, float]]:
        return [(d, float(m)) for d, m in zip(self.directions, self.masses)]

    def __repr__(self):
        body = ", ".join(
            f"{np.array2string(d, precision=6)}: {m:.6g}" for d, m in self.atoms()
        )
        flag = ", canonical" if self.canonical else ""
        return (
            f"DiscreteSpectralMeasure(dim={self.dim}, r={self.norm.r:g}, "
            f"alpha={self.alpha:g}{flag}, {{{body}}})"
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "r": self.norm.r,
            "alpha": self.alpha,
            "canonical": bool(self.canonical),
            "atoms": [
                {"direction": d.tolist(), "mass": float(m)}
                for d, m in zip(self.directions, self.masses)
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DiscreteSpectralMeasure":
        atoms = data["atoms"]
        dirs = np.array([a["direction"] for a in atoms], dtype=float)
        masses = np.array([a["mass"] for a in atoms], dtype=float)
        out = cls(
            norm=RNorm(data["r"]),
            alpha=data["alpha"],
            directions=dirs,
            masses=masses,
            canonical=bool(data.get("canonical", False)),
        )
        if "dim" in data and int(data["dim"]) != out.dim:
            raise ValueError(f"dim={data['dim']} does not match atom length {out.dim}")
        return out

    @classmethod
    def from_json(cls, text: str) -> "DiscreteSpectralMeasure":
        return cls.from_dict(json.loads(text))


def _project(vectors: np.ndarray, norm: RNorm) -> tuple[np.ndarray, np.ndarray]:
    """Split nonzero rows into unit directions and their norms."""
    lengths = np.atleast_1d(norm(vectors, axis=1))
    dirs = vectors / lengths[:, None]
    # re-project: one more normalization removes the drift of the first division
    dirs = dirs / np.atleast_1d(norm(dirs, axis=1))[:, None]
    return dirs, lengths


def _merge_atoms(dirs: np.ndarray, masses: np.ndarray, tol: float = MERGE_TOL):
    out_dirs: list[np.ndarray] = []
    out_mass: list[float] = []
    for d, m in zip(dirs, masses):
        for i, e in enumerate(out_dirs):
            if np.max(np.abs(e - d)) <= tol:
                out_mass[i] += m
                break
        else:
            out_dirs.append(d)
            out_mass.append(float(m))
    out_dirs_arr = np.array(out_dirs)
    out_mass_arr = np.array(out_mass)
    keep = out_mass_arr >= MASS_FLOOR
    if not np.all(keep):
        warnings.warn(
            f"dropping {np.count_nonzero(~keep)} atom(s) with mass below {MASS_FLOOR}",
            RuntimeWarning,
            stacklevel=3,
        )
    return out_dirs_arr[keep], out_mass_arr[keep]


def make_independent(tail: TailModel, norm: RNorm) -> DiscreteSpectralMeasure:
    """Asymptotic independence: one atom per axis, with mass ``K_j``."""
    d = tail.d
    canonical = tail.alpha == 1.0 and bool(np.all(tail.K == 1.0))
    return DiscreteSpectralMeasure(
        norm=norm,
        alpha=tail.alpha,
        directions=np.eye(d),
        masses=tail.K.copy(),
        canonical=canonical,
    )


def make_dependent(tail: TailModel, norm: RNorm) -> DiscreteSpectralMeasure:
    """Asymptotic full dependence: one atom along ``u = K**(1/alpha)``."""
    u = tail.scale_root()
    length = norm(u)
    direction = u / length
    direction = direction / norm(direction)
    mass = float(powmul(1.0, length, tail.alpha))
    canonical = tail.d == 1 and tail.alpha == 1.0 and tail.K[0] == 1.0
    return DiscreteSpectralMeasure(
        norm=norm,
        alpha=tail.alpha,
        directions=direction[None, :],
        masses=[mass],
        canonical=canonical,
    )


def margins(m: DiscreteSpectralMeasure) -> np.ndarray:
    """Margin tail constants ``c_j = nu({x_j > 1}) = sum_k m_k s_kj**alpha``."""
    return np.sum(powmul(m.masses[:, None], m.directions, m.alpha), axis=0)


def pushforward(m: DiscreteSpectralMeasure, B) -> DiscreteSpectralMeasure:
    """Image measure ``nu o B^-1`` under a nonnegative linear map.

    Atoms sent to zero disappear; atoms landing on a common direction are
    merged.  The result lives on the sphere of the same norm and is never
    flagged canonical.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if np.any(B < 0):
        raise ValueError("pushforward matrix must be entrywise nonnegative")
    if B.shape[1] != m.dim:
        raise ValueError(f"matrix has {B.shape[1]} columns, measure has dim {m.dim}")
    images = m.directions @ B.T
    lengths = np.atleast_1d(m.norm(images, axis=1))
    alive = lengths > 0
    if not np.any(alive):
        raise ValueError("every atom is mapped to the origin")
    dirs, lengths = _project(images[alive], m.norm)
    masses = powmul(m.masses[alive], lengths, m.alpha)
    dirs, masses = _merge_atoms(dirs, masses)
    return DiscreteSpectralMeasure(
        norm=m.norm, alpha=m.alpha, directions=dirs, masses=masses, canonical=False
    )


def canonicalize(m: DiscreteSpectralMeasure) -> DiscreteSpectralMeasure:
    """Standardize margins and move to index 1.

    Each ray ``t * s_k`` becomes the ray through ``w_k = (s_kj**alpha / c_j)_j``;
    the canonical atom sits at ``w_k / ||w_k||`` with mass ``m_k * ||w_k||``.
    """
    c = margins(m)
    if np.any(c <= 0):
        raise DegenerateMarginError(f"degenerate margin: margins(m) = {c}")
    with np.errstate(divide="ignore"):
        logw = m.alpha * np.log(m.directions) - np.log(c)[None, :]
    shift = np.max(logw, axis=1, keepdims=True)
    w = np.exp(logw - shift)
    dirs, lengths = _project(w, m.norm)
    masses = np.exp(np.log(m.masses) + shift[:, 0] + np.log(lengths))
    dirs, masses = _merge_atoms(dirs, masses)
    return DiscreteSpectralMeasure(
        norm=m.norm, alpha=1.0, directions=dirs, masses=masses, canonical=True
    )


def _require_same_norm(m: DiscreteSpectralMeasure, agg: RNorm):
    if m.norm.r != agg.r:
        raise NormMismatchError(
            f"sphere norm r={m.norm.r} differs from aggregation norm r={agg.r}"
        )


def g_functional(
    rho_star: DiscreteSpectralMeasure, A, alpha: float, agg: RNorm
) -> float:
    """Integral of ``s -> ||A s**(1/alpha)||**alpha`` against a canonical measure."""
    if not rho_star.canonical:
        raise ValueError("g_functional needs a canonical spectral measure")
    _require_same_norm(rho_star, agg)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != rho_star.dim:
        raise ValueError(f"A has {A.shape[1]} columns, measure has dim {rho_star.dim}")
    if np.any(A < 0):
        raise ValueError("A must be entrywise nonnegative")
    roots = rho_star.directions ** (1.0 / alpha)
    lengths = np.atleast_1d(agg(roots @ A.T, axis=1))
    return float(np.sum(powmul(rho_star.masses, lengths, alpha)))


def measure_from_atoms(
    directions: Sequence[Sequence[float]],
    masses: Sequence[float],
    alpha: float,
    norm: RNorm,
) -> DiscreteSpectralMeasure:
    """Build a measure from arbitrary nonzero vectors, normalizing them onto the sphere.

    The mass of each atom is kept as given; directions are rescaled only.
    """
    vecs = np.atleast_2d(np.asarray(directions, dtype=float))
    dirs, _ = _project(vecs, norm)
    return DiscreteSpectralMeasure(norm=norm, alpha=alpha, directions=dirs, masses=masses)
