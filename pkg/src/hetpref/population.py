"""Distributions over user utility vectors.

Three population families are supported:

* :class:`FiniteMixture` -- a discrete distribution over a handful of utility
  vectors ("types" of users).
* :class:`GaussianMixedLogit` -- ``beta ~ N(mean, covariance)``.
* :class:`TwoType` -- the one-dimensional two-type instance where a fraction
  ``alpha`` of users has utility ``+1`` for the item and the rest ``-m``.

All specs are immutable. Sampling always goes through an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from ._numerics import as_vector, check_psd, digest, frozen

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FiniteMixture:
    weights: np.ndarray
    atoms: np.ndarray  # (K, d)

    def __init__(self, weights, atoms):
        w = np.array(weights, dtype=np.float64).reshape(-1)
        a = np.array(atoms, dtype=np.float64)
        if a.ndim == 1:
            a = a.reshape(-1, 1) if w.size == a.size and w.size > 1 else a.reshape(1, -1)
        if a.ndim != 2 or a.shape[0] != w.size:
            raise ValueError(f"need one atom per weight, got {w.size} weights and atoms of shape {a.shape}")
        if a.shape[1] < 1:
            raise ValueError("atoms must have dimension >= 1")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(a))):
            raise ValueError("weights and atoms must be finite")
        if np.any(w <= 0):
            raise ValueError("mixture weights must be strictly positive")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"mixture weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", frozen(w))
        object.__setattr__(self, "atoms", frozen(a))

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True, eq=False)
class GaussianMixedLogit:
    mean: np.ndarray
    covariance: np.ndarray

    def __init__(self, mean, covariance):
        mean = as_vector(mean, "mean")
        cov = check_psd(covariance)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean dimension {mean.size}")
        object.__setattr__(self, "mean", frozen(mean))
        object.__setattr__(self, "covariance", frozen(cov))

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class TwoType:
    """Two user types facing one item and an outside option (d = 1).

    Type 1 (fraction ``alpha``) values the item at +1, type 2 at ``-m``.
    """

    alpha: float
    m: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not (self.m > 0 and np.isfinite(self.m)):
            raise ValueError(f"m must be a positive real, got {self.m}")

    @property
    def dim(self) -> int:
        return 1

    def as_mixture(self) -> FiniteMixture:
        if self.alpha == 1.0:
            return FiniteMixture([1.0], [[1.0]])
        if self.alpha == 0.0:
            return FiniteMixture([1.0], [[-self.m]])
        return FiniteMixture([self.alpha, 1.0 - self.alpha], [[1.0], [-self.m]])


PopulationSpec = Union[FiniteMixture, GaussianMixedLogit, TwoType]


def as_discrete(spec: PopulationSpec) -> FiniteMixture | None:
    """The finite-mixture view of a discrete spec, or None for a Gaussian."""
    if isinstance(spec, TwoType):
        return spec.as_mixture()
    if isinstance(spec, FiniteMixture):
        return spec
    return None


def mean_beta(spec: PopulationSpec) -> np.ndarray:
    if isinstance(spec, GaussianMixedLogit):
        return np.array(spec.mean)
    if isinstance(spec, TwoType):
        return np.array([spec.alpha * 1.0 + (1.0 - spec.alpha) * (-spec.m)])
    return spec.weights @ spec.atoms


def sample_users(spec: PopulationSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` utility vectors, shape ``(n, d)``."""
    if isinstance(spec, GaussianMixedLogit):
        return rng.multivariate_normal(spec.mean, spec.covariance, size=n, method="eigh")
    mix = as_discrete(spec)
    idx = sample_types(mix, n, rng)
    return mix.atoms[idx]


def sample_types(mix: FiniteMixture, n: int, rng: np.random.Generator) -> np.ndarray:
    """Component indices for ``n`` users drawn from a finite mixture."""
    cdf = np.cumsum(mix.weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64)


def sample_user(spec: PopulationSpec, rng: np.random.Generator) -> np.ndarray:
    return sample_users(spec, 1, rng)[0]


def is_mean_symmetric(spec: PopulationSpec, tol: float = 1e-9) -> bool:
    """Whether ``beta - mean_beta`` has the same law as its negation.

    For finite mixtures this matches every centered atom with an antipodal
    atom of (nearly) the same weight. Zero-centered atoms match themselves.
    """
    if isinstance(spec, GaussianMixedLogit):
        return True
    if isinstance(spec, TwoType):
        return spec.alpha in (0.0, 1.0) or (abs(spec.alpha - 0.5) <= tol)
    centered = spec.atoms - mean_beta(spec)
    for w, eps in zip(spec.weights, centered):
        dist = np.max(np.abs(centered + eps), axis=1)
        if not np.any((dist <= tol) & (np.abs(spec.weights - w) <= tol)):
            return False
    return True


def scale_heterogeneity(spec: PopulationSpec, s: float) -> PopulationSpec:
    """Replace each ``beta`` by ``mean + s * (beta - mean)``."""
    if not s > 0:
        raise ValueError(f"scale must be positive, got {s}")
    if s == 1:
        return spec
    if isinstance(spec, GaussianMixedLogit):
        return GaussianMixedLogit(spec.mean, (s * s) * spec.covariance)
    mix = as_discrete(spec)
    center = mean_beta(mix)
    atoms = center + s * (mix.atoms - center)
    # Rounding may move the mean by an ulp; pin it back so mean_beta is preserved.
    atoms = atoms - (mix.weights @ atoms - center)
    return FiniteMixture(mix.weights, atoms)


# -- serialization -----------------------------------------------------------

def spec_to_dict(spec: PopulationSpec) -> dict:
    if isinstance(spec, FiniteMixture):
        return {"type": "finite_mixture", "weights": spec.weights.tolist(), "atoms": spec.atoms.tolist()}
    if isinstance(spec, GaussianMixedLogit):
        return {"type": "gaussian", "mean": spec.mean.tolist(), "covariance": spec.covariance.tolist()}
    if isinstance(spec, TwoType):
        return {"type": "two_type", "alpha": float(spec.alpha), "m": float(spec.m)}
    raise TypeError(f"not a population spec: {spec!r}")


def spec_from_dict(data: dict) -> PopulationSpec:
    kind = data.get("type")
    fields = set(data) - {"type"}
    if kind == "finite_mixture" and fields == {"weights", "atoms"}:
        return FiniteMixture(data["weights"], data["atoms"])
    if kind == "gaussian" and fields == {"mean", "covariance"}:
        return GaussianMixedLogit(data["mean"], data["covariance"])
    if kind == "two_type" and fields == {"alpha", "m"}:
        return TwoType(float(data["alpha"]), float(data["m"]))
    raise ValueError(f"malformed population spec: {data!r}")


def spec_to_json(spec: PopulationSpec) -> str:
    return json.dumps(spec_to_dict(spec))


def spec_from_json(text: str) -> PopulationSpec:
    return spec_from_dict(json.loads(text))


def spec_digest(spec: PopulationSpec) -> str:
    return digest(spec_to_dict(spec))


def specs_equal(a: PopulationSpec, b: PopulationSpec) -> bool:
    return spec_to_dict(a) == spec_to_dict(b)


# -- named instances ---------------------------------------------------------

def antipodal_counterexample() -> FiniteMixture:
    """Symmetric two-atom population in d=2 where logistic MLE is biased.

    Mean (1, 0) with centered atoms +-(1, -1) at equal weight.
    """
    return FiniteMixture([0.5, 0.5], [[2.0, -1.0], [0.0, 1.0]])


def conditionally_symmetric(c: float = 1.0) -> FiniteMixture:
    """Atoms (1, 0) +- (0, c): the orthogonal noise is symmetric given the parallel part."""
    return FiniteMixture([0.5, 0.5], [[1.0, c], [1.0, -c]])
