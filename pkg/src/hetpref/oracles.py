"""Independent analytic and brute-force checks.

Each function here verifies a closed-form claim about the estimators by a
route that shares no code with the estimator being checked: closed forms for
the two-type example, Stein-type reweighting for the population logistic fit,
exhaustive angle grids for the 2-D sign loss, and Monte-Carlo curvature of
the population 0-1 excess risk.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.special import logit

from ._numerics import sigmoid, sigmoid_prime, unit
from .datagen import DiffDistribution, Dataset, population_choice_probability, sample_diffs
from .estimators import OptimConfig
from .metrics import choice_margin
from .population import (
    PopulationSpec,
    as_discrete,
    is_mean_symmetric,
    mean_beta,
    sample_users,
)


class AsymmetricPopulationError(ValueError):
    """The population's centered utilities are not symmetric."""


# -- two-type example --------------------------------------------------------

@dataclass(frozen=True)
class TwoTypeAnalysis:
    u_bar: float
    u_naive: float
    alpha_threshold_naive: float
    alpha_threshold_mean: float

    @property
    def reversed(self) -> bool:
        """The pooled logistic fit prefers the item while the population mean does not."""
        return self.u_naive > 0 > self.u_bar


def two_type_analysis(alpha: float, m: float) -> TwoTypeAnalysis:
    """Closed forms for the two-type, one-item example.

    The logistic fit on one item against the outside option matches the
    observed choice frequency, so ``sigmoid(u_naive) = P(Y=1)``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly between 0 and 1, got {alpha}")
    if not m > 0:
        raise ValueError(f"m must be positive, got {m}")
    p_item = alpha * sigmoid(1.0) + (1.0 - alpha) * sigmoid(-m)
    s1, sm = sigmoid(1.0), sigmoid(m)
    # Rational arithmetic on the shortest decimal form of the inputs, so
    # alpha=0.7, m=3 gives exactly -0.2 rather than -0.20000000000000018.
    a, mm = Fraction(repr(float(alpha))), Fraction(repr(float(m)))
    return TwoTypeAnalysis(
        u_bar=float(a - (1 - a) * mm),
        u_naive=float(logit(p_item)),
        alpha_threshold_naive=float((sm - 0.5) / (s1 + sm - 1.0)),
        alpha_threshold_mean=m / (1.0 + m),
    )


def two_type_region_grid(n_m: int = 20, n_alpha: int = 20, m_range=(3.0, 100.0)):
    """Evaluate the analysis over ``m in m_range`` x ``alpha in [0.7, 1 - 1/m]``.

    Returns a list of ``((alpha, m), TwoTypeAnalysis)``.
    """
    out = []
    for m in np.linspace(*m_range, n_m):
        for alpha in np.linspace(0.7, 1.0 - 1.0 / m, n_alpha):
            out.append(((float(alpha), float(m)), two_type_analysis(float(alpha), float(m))))
    return out


# -- reweighting identity for the population logistic fit ----------------------

def _gaussian_x(sigma_x, n_mc, rng):
    sigma_x = np.asarray(sigma_x, dtype=np.float64)
    chol = np.linalg.cholesky(sigma_x + 1e-300 * np.eye(sigma_x.shape[0]))
    return rng.standard_normal((n_mc, sigma_x.shape[0])) @ chol.T


def _atoms_and_weights(spec: PopulationSpec, n_atoms: int, rng):
    mix = as_discrete(spec)
    if mix is not None:
        return mix.atoms, mix.weights
    atoms = sample_users(spec, n_atoms, rng)
    return atoms, np.full(n_atoms, 1.0 / n_atoms)


def reweighted_mean_direction(spec: PopulationSpec, sigma_x, n_mc: int = 1_000_000, seed=0,
                              n_atoms: int = 2000, chunk: int = 250_000) -> np.ndarray:
    """Normalized ``E_beta[w(beta) beta]`` with ``w(beta) = E_X[sigmoid'(X @ beta)]``.

    ``X ~ N(0, sigma_x)`` is drawn once and shared by every atom. Gaussian
    populations are replaced by ``n_atoms`` sampled atoms.
    """
    rng = np.random.default_rng(seed)
    atoms, weights = _atoms_and_weights(spec, n_atoms, rng)
    acc = np.zeros(atoms.shape[0])
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        x = _gaussian_x(sigma_x, m, rng)
        acc += sigmoid_prime(x @ atoms.T).sum(axis=0)
        done += m
    w = acc / n_mc
    total = (weights * w) @ atoms
    if not np.any(total):
        raise ValueError("reweighted mean is zero; direction undefined")
    return unit(total)


def expected_sigmoid_prime(variance: float, n_nodes: int = 64) -> float:
    """``E[sigmoid'(Z)]`` for ``Z ~ N(0, variance)``.

    Gauss-Hermite in the standardized variable for variance <= 1. Wider
    Gaussians make the integrand narrow on that scale, so the integral is
    taken over ``t = sqrt(variance) * z`` with Gauss-Legendre on ``[-40, 40]``,
    where ``sigmoid'`` sets the scale and falls below 1e-17 outside.
    """
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if variance <= 1.0:
        nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
        return float(sigmoid_prime(math.sqrt(variance) * nodes) @ weights / weights.sum())
    nodes, weights = np.polynomial.legendre.leggauss(_LEGENDRE_NODES)
    t = 40.0 * nodes
    density = np.exp(-t * t / (2.0 * variance)) / math.sqrt(2.0 * math.pi * variance)
    return float(40.0 * (weights * sigmoid_prime(t)) @ density)


_LEGENDRE_NODES = 400


def reweighted_mean_direction_gh(spec: PopulationSpec, sigma_x, n_nodes: int = 64) -> np.ndarray:
    """Deterministic variant of :func:`reweighted_mean_direction` for discrete populations.

    ``X @ beta ~ N(0, beta' Sigma beta)``, so each weight is a 1-D integral
    (see :func:`expected_sigmoid_prime`).
    """
    mix = as_discrete(spec)
    if mix is None:
        raise ValueError("quadrature route needs a discrete population")
    sigma_x = np.asarray(sigma_x, dtype=np.float64)
    w = np.array([expected_sigmoid_prime(float(b @ sigma_x @ b), n_nodes) for b in mix.atoms])
    return unit((mix.weights * w) @ mix.atoms)


@dataclass(frozen=True)
class PopulationFit:
    direction: np.ndarray
    beta: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float


def population_mle_direction(spec: PopulationSpec, sigma_x, n_mc: int = 1_000_000,
                             cfg: OptimConfig = OptimConfig(learning_rate=2.0, max_epochs=5000, tol=1e-10),
                             seed=0, n_atoms: int = 2000, return_fit: bool = False):
    """Infinite-data limit of the pooled logistic fit.

    Full-batch gradient descent on the population cross-entropy with fixed
    Monte-Carlo ``X`` draws and exact expectation over population atoms:
    ``grad = mean_X[(sigmoid(X @ b) - P(Y=1|X)) X]``. ``cfg.tol`` bounds the
    final gradient norm; non-convergence is flagged with a warning.
    """
    rng = np.random.default_rng(seed)
    atoms, weights = _atoms_and_weights(spec, n_atoms, rng)
    x = _gaussian_x(sigma_x, n_mc, rng)
    p = sigmoid(x @ atoms.T) @ weights
    xt = np.ascontiguousarray(x.T)
    b = np.zeros(x.shape[1])
    converged = False
    gnorm = math.inf
    it = 0
    for it in range(1, cfg.max_epochs + 1):
        g = xt @ (sigmoid(x @ b) - p) / n_mc
        gnorm = float(np.linalg.norm(g))
        if gnorm < cfg.tol:
            converged = True
            break
        b = b - cfg.learning_rate * g
    if not converged:
        warnings.warn(f"population MLE did not converge (grad norm {gnorm:.3g})", RuntimeWarning)
    direction = unit(b)
    if return_fit:
        return PopulationFit(direction, b, converged, it, gnorm)
    return direction


# -- 2-D exact sign-loss minimizer ----------------------------------------------

def sign_loss_on_circle(ds: Dataset, psi: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Exact 0-1 loss at ``theta = (cos psi, sin psi)`` for every angle in ``psi``."""
    s = 2.0 * ds.y - 1.0
    out = np.empty(psi.size)
    for start in range(0, psi.size, chunk):
        p = psi[start:start + chunk]
        thetas = np.stack([np.cos(p), np.sin(p)])
        out[start:start + chunk] = -(s @ np.sign(ds.x @ thetas)) / ds.n
    return out


def grid_sign_minimizer_2d(ds: Dataset, n_angles: int = 100_000, return_loss: bool = False):
    """Exhaustive minimizer of the empirical 0-1 loss over an angle grid (d = 2).

    The loss is piecewise constant in the angle with at most ``2n`` breaks;
    ``n_angles > 4n`` is recommended so the grid lands in almost every piece.
    Ties go to the smallest angle.
    """
    if ds.dim != 2:
        raise ValueError(f"grid minimizer needs d = 2, got d = {ds.dim}")
    if n_angles < 4:
        raise ValueError("n_angles must be >= 4")
    if n_angles <= 4 * ds.n:
        warnings.warn(f"n_angles={n_angles} <= 4n={4 * ds.n}; grid may miss loss pieces", RuntimeWarning)
    psi = 2.0 * math.pi * np.arange(n_angles) / n_angles
    losses = sign_loss_on_circle(ds, psi)
    best = int(np.argmin(losses))
    theta = np.array([math.cos(psi[best]), math.sin(psi[best])])
    if return_loss:
        return theta, float(losses[best])
    return theta


# -- sign identity -------------------------------------------------------------

@dataclass(frozen=True)
class SignIdentityReport:
    passed: bool
    n_checked: int
    violations: list  # [(diff, mean_utility_gap, choice_prob)]


def sign_identity_check(spec: PopulationSpec, diffs, guard: bool = True,
                        prob_tol: float = 1e-12, util_tol: float = 1e-9) -> SignIdentityReport:
    """Check ``sign(mean_beta @ x) == sign(P(Y=1|x) - 1/2)`` for every diff.

    A near-half probability must coincide with a near-zero mean utility gap.
    With ``guard`` set, asymmetric populations are rejected up front; with it
    unset the check runs anyway and reports the violating diffs.
    """
    mix = as_discrete(spec)
    if mix is None:
        raise ValueError("sign identity check needs a discrete population")
    if guard and not is_mean_symmetric(spec):
        raise AsymmetricPopulationError("population is not mean-symmetric")
    diffs = np.atleast_2d(np.asarray(diffs, dtype=np.float64))
    gap = diffs @ mean_beta(mix)
    prob = population_choice_probability(diffs, mix)
    near_half = np.abs(prob - 0.5) <= prob_tol
    near_zero = np.abs(gap) <= util_tol
    ok = np.where(near_half | near_zero, near_half == near_zero, np.sign(gap) == np.sign(prob - 0.5))
    bad = np.flatnonzero(~ok)
    violations = [(diffs[i].tolist(), float(gap[i]), float(prob[i])) for i in bad]
    return SignIdentityReport(not violations, diffs.shape[0], violations)


# -- curvature of the 0-1 excess risk ---------------------------------------------

@dataclass(frozen=True)
class CurvaturePoint:
    angle: float
    excess: float
    stderr: float


def curvature_probe(spec: PopulationSpec, diffs: DiffDistribution, angles: Sequence[float],
                    n_mc: int = 1_000_000, seed=0, chunk: int = 500_000) -> list[CurvaturePoint]:
    """Population excess 0-1 risk at directions rotated away from the mean direction.

    All directions lie in one seeded random 2-plane through the mean
    direction and share the same Monte-Carlo ``X`` draws, so the differences
    between sweep points are low-noise.
    """
    angles = np.asarray(angles, dtype=np.float64)
    if np.any(angles < 0) or np.any(angles > math.pi / 4 + 1e-12):
        raise ValueError("angles must lie in [0, pi/4]")
    if not is_mean_symmetric(spec):
        raise AsymmetricPopulationError("curvature probe needs a mean-symmetric population")
    rng = np.random.default_rng(seed)
    mu = unit(mean_beta(spec))
    d = mu.size
    if d < 2:
        raise ValueError("curvature probe needs d >= 2")
    v = rng.standard_normal(d)
    v = unit(v - (v @ mu) * mu)
    thetas = np.cos(angles)[:, None] * mu + np.sin(angles)[:, None] * v
    sums = np.zeros(angles.size)
    sums_sq = np.zeros(angles.size)
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        x, _ = sample_diffs(diffs, m, rng)
        ch = choice_margin(x, spec)
        z = ch[:, None] * (np.sign(x @ mu)[:, None] - np.sign(x @ thetas.T))
        sums += z.sum(axis=0)
        sums_sq += (z * z).sum(axis=0)
        done += m
    means = sums / n_mc
    var = np.maximum(sums_sq / n_mc - means ** 2, 0.0)
    se = np.sqrt(var / max(n_mc - 1, 1))
    return [CurvaturePoint(float(a), float(e), float(s)) for a, e, s in zip(angles, means, se)]


def fit_power_law(points: Sequence[CurvaturePoint]):
    """Least-squares fit of ``excess = c * angle**p`` on log scale; returns ``(c, p)``."""
    a = np.array([p.angle for p in points if p.angle > 0 and p.excess > 0])
    e = np.array([p.excess for p in points if p.angle > 0 and p.excess > 0])
    if a.size < 2:
        raise ValueError("need at least two positive sweep points")
    slope, intercept = np.polyfit(np.log(a), np.log(e), 1)
    return float(math.exp(intercept)), float(slope)
