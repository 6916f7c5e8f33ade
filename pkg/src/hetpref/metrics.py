"""Quality metrics for direction estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ._numerics import MCEstimate
from .datagen import (
    DiffDistribution,
    ItemCatalog,
    gaussian_choice_probability_gh,
    population_choice_probability,
    sample_diffs,
)
from .population import GaussianMixedLogit, PopulationSpec

MAX_ENUMERATED_ITEMS = 2000


@dataclass(frozen=True)
class MetricReport:
    angle_degrees: float
    disagreement_rate: float
    excess_risk: float = float("nan")
    n_pairs_evaluated: int = 0
    n_ties: int = 0


class DisagreementCount(NamedTuple):
    n_disagree: int
    n_ties: int
    n_pairs: int

    @property
    def rate(self) -> float:
        return self.n_disagree / self.n_pairs


def angle(a, b) -> float:
    """Angle in radians between two nonzero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("angle is undefined for a zero vector")
    ua, ub = a / na, b / nb
    # Half-angle form stays accurate near 0 and pi, unlike acos of the dot product.
    return 2.0 * math.atan2(float(np.linalg.norm(ua - ub)), float(np.linalg.norm(ua + ub)))


def angle_degrees(a, b) -> float:
    return math.degrees(angle(a, b))


def catalog_pair_diffs(catalog: ItemCatalog, max_pairs: int = 200_000, seed: int = 0) -> np.ndarray:
    """All unordered pair differences for small catalogs, a uniform sample otherwise."""
    m = catalog.size
    if m <= MAX_ENUMERATED_ITEMS:
        i, j = np.triu_indices(m, k=1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, m, size=max_pairs)
        j = rng.integers(0, m - 1, size=max_pairs)
        j = j + (j >= i)
    return catalog.features[i] - catalog.features[j]


def disagreement_count(mu_hat, mu_bar, diffs) -> DisagreementCount:
    if isinstance(diffs, ItemCatalog):
        diffs = catalog_pair_diffs(diffs)
    diffs = np.asarray(diffs, dtype=np.float64)
    if diffs.ndim != 2 or diffs.shape[0] == 0:
        raise ValueError("need a nonempty catalog or (n, d) array of diffs")
    mu_hat = np.asarray(mu_hat, dtype=np.float64)
    mu_bar = np.asarray(mu_bar, dtype=np.float64)
    if not (np.any(mu_hat) and np.any(mu_bar)):
        raise ValueError("directions must be nonzero")
    s_hat = np.sign(diffs @ mu_hat)
    s_bar = np.sign(diffs @ mu_bar)
    ties = (s_hat == 0) | (s_bar == 0)
    disagree = (s_hat != s_bar) & ~ties
    return DisagreementCount(int(disagree.sum()), int(ties.sum()), diffs.shape[0])


def disagreement_rate(mu_hat, mu_bar, diffs) -> float:
    """Fraction of pairs ordered differently by the two directions.

    ``diffs`` is an :class:`ItemCatalog` (all pairs, or a sample for large
    catalogs) or an ``(n, d)`` array. Pairs where either inner product is
    exactly zero never count as disagreements.
    """
    return disagreement_count(mu_hat, mu_bar, diffs).rate


def choice_margin(x, spec: PopulationSpec, n_samples: Optional[int] = None, seed=None) -> np.ndarray:
    """``2 P(Y=1 | x) - 1``; Gaussian populations use Gauss-Hermite unless ``n_samples`` is given."""
    if isinstance(spec, GaussianMixedLogit) and n_samples is None:
        return 2.0 * gaussian_choice_probability_gh(x, spec) - 1.0
    return 2.0 * population_choice_probability(x, spec, n_samples=n_samples, seed=seed) - 1.0


def excess_risk_01(theta, mu_bar, spec: PopulationSpec, diffs: DiffDistribution,
                   n_mc: int = 100_000, seed=0, chunk: int = 1_000_000) -> MCEstimate:
    """Monte-Carlo estimate of ``L01(theta) - L01(mu_bar)`` with its standard error.

    Uses ``L01(u) = -E[ch(X) sign(X @ u)]`` where ``ch = 2 P(Y=1|X) - 1`` is
    computed exactly (discrete populations) or by quadrature (Gaussian).
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    theta = np.asarray(theta, dtype=np.float64)
    mu_bar = np.asarray(mu_bar, dtype=np.float64)
    rng = np.random.default_rng(seed)
    total, total_sq, done = 0.0, 0.0, 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        x, _ = sample_diffs(diffs, m, rng)
        ch = choice_margin(x, spec)
        z = ch * (np.sign(x @ mu_bar) - np.sign(x @ theta))
        total += z.sum()
        total_sq += (z * z).sum()
        done += m
    mean = total / n_mc
    var = max(total_sq / n_mc - mean * mean, 0.0)
    return MCEstimate(mean, math.sqrt(var / max(n_mc - 1, 1)))


def evaluate(mu_hat, mu_bar, eval_diffs) -> MetricReport:
    count = disagreement_count(mu_hat, mu_bar, eval_diffs)
    return MetricReport(
        angle_degrees=angle_degrees(mu_hat, mu_bar),
        disagreement_rate=count.rate,
        n_pairs_evaluated=count.n_pairs,
        n_ties=count.n_ties,
    )
