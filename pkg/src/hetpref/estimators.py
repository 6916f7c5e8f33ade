"""Estimators of the population-mean utility direction.

* :func:`fit_rlhf` -- pooled logistic (Bradley-Terry) maximum likelihood,
  the standard reward-model fit.
* :func:`fit_sign` -- minimizes the 0-1 sign-agreement loss through the
  smooth surrogate ``sign(t) ~ 2*sigmoid(lam*t) - 1`` with ``lam`` annealed
  upward during training, over unit-norm parameters.
* :func:`fit_em` -- hard-assignment EM over annotator panels, fitting one
  logistic model per cluster and averaging the clusters by user count.

All three are first-order mini-batch optimizers over linear utilities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._numerics import log_sigmoid, sigmoid, unit
from .datagen import Dataset

OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class OptimConfig:
    """Mini-batch optimizer settings.

    ``tol`` is the relative epoch-over-epoch change in training loss below
    which a fit counts as converged. With ``early_stop_patience`` set, a
    ``validation_fraction`` of records is held out and training stops once
    validation loss has not improved for that many epochs.
    ``tail_average`` > 0 returns the running mean of the iterates over that
    many final epochs (Polyak averaging) instead of the last iterate.
    """

    learning_rate: float = 0.1
    batch_size: int = 256
    max_epochs: int = 20
    seed: int = 0
    early_stop_patience: Optional[int] = None
    validation_fraction: float = 0.0
    optimizer: str = "sgd"
    tol: float = 1e-3
    tail_average: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        if self.early_stop_patience is not None:
            if self.early_stop_patience < 1:
                raise ValueError("early_stop_patience must be >= 1")
            if self.validation_fraction <= 0:
                raise ValueError("early stopping needs validation_fraction > 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.tail_average < 0 or self.tail_average > self.max_epochs:
            raise ValueError("tail_average must lie in [0, max_epochs]")


@dataclass(frozen=True)
class LambdaSchedule:
    """Exponential annealing of the surrogate temperature."""

    initial: float = 1.0
    maximum: float = 15.0
    growth_factor: float = 1.02
    step_unit: str = "per_batch"

    def __post_init__(self):
        if not (self.initial > 0 and self.maximum > 0):
            raise ValueError("lambda bounds must be positive")
        if self.initial > self.maximum:
            raise ValueError("initial lambda exceeds maximum")
        if not self.growth_factor > 1:
            raise ValueError("growth_factor must exceed 1")
        if self.step_unit not in ("per_batch", "per_epoch"):
            raise ValueError("step_unit must be 'per_batch' or 'per_epoch'")

    def step(self, lam: float) -> float:
        return min(lam * self.growth_factor, self.maximum)


@dataclass(frozen=True, eq=False)
class Estimate:
    beta_hat: np.ndarray
    mu_hat: np.ndarray
    loss_trace: list  # [(epoch, training loss), ...]
    converged: bool
    final_lambda: Optional[float] = None
    grad_norm: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "mu_hat": self.mu_hat.tolist(),
            "beta_hat": self.beta_hat.tolist(),
            "loss_trace": [[int(e), float(v)] for e, v in self.loss_trace],
            "converged": bool(self.converged),
            "final_lambda": None if self.final_lambda is None else float(self.final_lambda),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Estimate":
        return cls(np.array(data["beta_hat"], dtype=np.float64), np.array(data["mu_hat"], dtype=np.float64),
                   [(int(e), float(v)) for e, v in data["loss_trace"]], bool(data["converged"]),
                   data.get("final_lambda"))


@dataclass(frozen=True, eq=False)
class EmResult:
    components: np.ndarray  # (K, d)
    assignments: dict  # user id -> cluster index
    beta_em: np.ndarray
    iterations: int
    beta_em_unweighted: np.ndarray = field(default=None)
    converged: bool = True

    @property
    def mu_hat(self) -> np.ndarray:
        return unit(self.beta_em)

    def recompute_beta_em(self) -> np.ndarray:
        idx = np.array([self.assignments[u] for u in sorted(self.assignments)])
        return self.components[idx].mean(axis=0)


# -- losses ------------------------------------------------------------------

def _require_data(ds: Dataset, theta) -> np.ndarray:
    if ds.n == 0:
        raise ValueError("dataset has zero records")
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (ds.dim,):
        raise ValueError(f"theta has shape {theta.shape}, dataset dimension is {ds.dim}")
    return theta


def cross_entropy_loss(theta, ds: Dataset) -> float:
    theta = _require_data(ds, theta)
    return _ce_loss(theta, ds.x, ds.y)


def _ce_loss(theta, x, y) -> float:
    # y*log s(t) + (1-y)*log s(-t) == log s((2y-1) t)
    t = (2.0 * y - 1.0) * (x @ theta)
    return float(-np.mean(log_sigmoid(t)))


def cross_entropy_grad(theta, ds: Dataset) -> np.ndarray:
    theta = _require_data(ds, theta)
    return _ce_grad(theta, ds.x, ds.y)


def _ce_grad(theta, x, y) -> np.ndarray:
    return (sigmoid(x @ theta) - y) @ x / y.size


def sign_surrogate_loss(theta, ds: Dataset, lam: float) -> float:
    theta = _require_data(ds, theta)
    return _surrogate_loss(theta, ds.x, ds.signs, lam)


def _surrogate_loss(theta, x, s, lam) -> float:
    return float(-np.mean(s * (2.0 * sigmoid(lam * (x @ theta)) - 1.0)))


def sign_surrogate_grad(theta, ds: Dataset, lam: float) -> np.ndarray:
    theta = _require_data(ds, theta)
    return _surrogate_grad(theta, ds.x, ds.signs, lam)


def _surrogate_grad(theta, x, s, lam) -> np.ndarray:
    p = sigmoid(lam * (x @ theta))
    return -(s * (2.0 * lam) * p * (1.0 - p)) @ x / s.size


def sign_empirical_loss(theta, ds: Dataset) -> float:
    """Exact 0-1 sign-agreement loss, with ``sign(0) = 0``."""
    theta = _require_data(ds, theta)
    return float(-np.mean(ds.signs * np.sign(ds.x @ theta)))


# -- optimizer core ----------------------------------------------------------

class _Stepper:
    def __init__(self, cfg: OptimConfig, dim: int):
        self.cfg = cfg
        self.t = 0
        if cfg.optimizer == "adam":
            self.m = np.zeros(dim)
            self.v = np.zeros(dim)

    def __call__(self, theta, grad):
        lr = self.cfg.learning_rate
        if self.cfg.optimizer == "sgd":
            return theta - lr * grad
        self.t += 1
        b1, b2 = 0.9, 0.999
        self.m = b1 * self.m + (1 - b1) * grad
        self.v = b2 * self.v + (1 - b2) * grad * grad
        m_hat = self.m / (1 - b1 ** self.t)
        v_hat = self.v / (1 - b2 ** self.t)
        return theta - lr * m_hat / (np.sqrt(v_hat) + 1e-8)


def _split(ds: Dataset, cfg: OptimConfig, rng):
    if cfg.validation_fraction <= 0 or ds.n < 2:
        return np.arange(ds.n), None
    perm = rng.permutation(ds.n)
    n_val = min(max(1, int(round(cfg.validation_fraction * ds.n))), ds.n - 1)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _run(ds: Dataset, cfg: OptimConfig, theta0, grad_fn, loss_fn, *, on_batch=None, on_epoch=None):
    """Shared mini-batch loop. Returns ``(theta, trace, converged, grad_norm)``.

    Training stops early only on validation patience. Otherwise ``converged``
    means the training loss changed by less than ``tol`` (relative) over the
    last ``early_stop_patience or 1`` epochs.
    """
    rng = np.random.default_rng(cfg.seed)
    train_idx, val_idx = _split(ds, cfg, rng)
    x, y = ds.x[train_idx], ds.y[train_idx].astype(np.float64)
    n = y.size
    stepper = _Stepper(cfg, ds.dim)
    theta = np.array(theta0, dtype=np.float64)
    trace = [(0, loss_fn(theta, x, y))]
    patience = cfg.early_stop_patience or 1
    stopped = False
    best_val, best_theta, bad_epochs = math.inf, theta.copy(), 0
    avg, n_avg = np.zeros_like(theta), 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        xs, ys = x[order], y[order]
        averaging = epoch > cfg.max_epochs - cfg.tail_average
        for start in range(0, n, cfg.batch_size):
            stop = start + cfg.batch_size
            theta = stepper(theta, grad_fn(theta, xs[start:stop], ys[start:stop]))
            if on_batch is not None:
                on_batch()
            if averaging:
                n_avg += 1
                avg += (theta - avg) / n_avg
        if on_epoch is not None:
            theta = on_epoch(theta)
        trace.append((epoch, loss_fn(theta, x, y)))
        if val_idx is not None and cfg.early_stop_patience is not None:
            val = loss_fn(theta, ds.x[val_idx], ds.y[val_idx].astype(np.float64))
            if val < best_val:
                best_val, best_theta, bad_epochs = val, theta.copy(), 0
            else:
                bad_epochs += 1
                if bad_epochs >= patience:
                    theta, stopped = best_theta, True
                    break
    if not stopped and n_avg:
        theta = on_epoch(avg) if on_epoch is not None else avg
        trace[-1] = (trace[-1][0], loss_fn(theta, x, y))
    if stopped:
        converged = True
    else:
        old, new = trace[max(0, len(trace) - 1 - patience)][1], trace[-1][1]
        converged = len(trace) > patience and abs(old - new) <= cfg.tol * max(abs(old), 1e-300)
    grad_norm = float(np.linalg.norm(grad_fn(theta, x, y)))
    return theta, trace, bool(converged), grad_norm


# -- RLHF --------------------------------------------------------------------

RLHF_CONFIG = OptimConfig(learning_rate=0.5, batch_size=256, max_epochs=30, tail_average=10)
SIGN_CONFIG = OptimConfig(learning_rate=0.01, batch_size=256, max_epochs=10)


def fit_rlhf(ds: Dataset, cfg: OptimConfig = RLHF_CONFIG, theta0=None) -> Estimate:
    """Pooled logistic MLE by mini-batch gradient descent from ``theta = 0``.

    On linearly separable data the likelihood has no maximizer and ``theta``
    grows without bound; the fit then ends at ``max_epochs`` unconverged.
    """
    if ds.n == 0:
        raise ValueError("dataset has zero records")
    start = np.zeros(ds.dim) if theta0 is None else np.asarray(theta0, dtype=np.float64)
    theta, trace, converged, gnorm = _run(ds, cfg, start, _ce_grad, _ce_loss)
    return Estimate(theta, _safe_unit(theta, ds), trace, converged, None, gnorm)


def _safe_unit(theta, ds: Dataset) -> np.ndarray:
    norm = np.linalg.norm(theta)
    if norm > 0:
        return theta / norm
    # All-zero fit (e.g. perfectly balanced labels): fall back to the label-weighted mean.
    return sign_warm_start(ds, 0)


# -- Sign --------------------------------------------------------------------

def sign_warm_start(ds: Dataset, seed: int) -> np.ndarray:
    """Unit vector along ``mean((2y - 1) x)``; random unit vector if that is ~0."""
    v = ds.signs @ ds.x / ds.n
    scale = np.abs(ds.x).mean() if ds.n else 0.0
    if np.linalg.norm(v) > 1e-12 * max(scale, 1e-300):
        return unit(v)
    g = np.random.default_rng(seed).standard_normal(ds.dim)
    return unit(g)


def fit_sign(ds: Dataset, cfg: OptimConfig = SIGN_CONFIG,
             sched: LambdaSchedule = LambdaSchedule(), theta0=None) -> Estimate:
    """Annealed-surrogate minimization of the 0-1 sign-agreement loss.

    ``lam`` is multiplied by ``sched.growth_factor`` after every mini-batch (or
    epoch) up to ``sched.maximum``, and training continues at the cap. The
    iterate is projected back to the unit sphere after every epoch.
    """
    if ds.n == 0:
        raise ValueError("dataset has zero records")
    lam = [sched.initial]

    def grad(theta, x, y):
        return _surrogate_grad(theta, x, 2.0 * y - 1.0, lam[0])

    def loss(theta, x, y):
        return _surrogate_loss(theta, x, 2.0 * y - 1.0, lam[0])

    def bump():
        lam[0] = sched.step(lam[0])

    def renormalize(theta):
        norm = np.linalg.norm(theta)
        return theta / norm if norm > 0 else theta

    per_batch = sched.step_unit == "per_batch"

    def end_epoch(theta):
        if not per_batch:
            bump()
        return renormalize(theta)

    start = sign_warm_start(ds, cfg.seed) if theta0 is None else unit(theta0)
    theta, trace, converged, gnorm = _run(
        ds, cfg, start, grad, loss, on_batch=bump if per_batch else None, on_epoch=end_epoch)
    mu = unit(theta) if np.linalg.norm(theta) > 0 else start
    return Estimate(theta, mu, trace, converged, lam[0], gnorm)


# -- EM over panels -----------------------------------------------------------

def _user_losses(ds: Dataset, users_index, n_users, components) -> np.ndarray:
    """Summed cross-entropy of every user's records under every component, ``(n_users, K)``."""
    t = ds.signs[:, None] * (ds.x @ components.T)
    per_record = -log_sigmoid(t)
    out = np.zeros((n_users, components.shape[0]))
    np.add.at(out, users_index, per_record)
    return out


def fit_em(ds: Dataset, k: int, cfg: OptimConfig = RLHF_CONFIG, rng=None,
           max_iter: int = 50) -> EmResult:
    """Hard-assignment EM over users (panel data).

    Cluster centers start at the pooled logistic fit plus ``N(0, I/d)`` noise.
    Each iteration assigns every user to the component with the smallest
    summed cross-entropy on that user's records, then refits every non-empty
    cluster with :func:`fit_rlhf`. Stops when assignments repeat or after
    ``max_iter`` iterations.
    """
    if ds.users is None:
        raise ValueError("EM needs per-record user ids")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(rng)
    user_ids, users_index = np.unique(ds.users, return_inverse=True)
    n_users = user_ids.size
    if k > n_users:
        raise ValueError(f"k={k} exceeds the number of users ({n_users})")
    d = ds.dim
    pooled = fit_rlhf(ds, cfg).beta_hat
    components = pooled + rng.standard_normal((k, d)) / math.sqrt(d)
    assign = None
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        new_assign = np.argmin(_user_losses(ds, users_index, n_users, components), axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            converged = True
            iterations -= 1
            break
        assign = new_assign
        record_cluster = assign[users_index]
        for c in range(k):
            mask = record_cluster == c
            if mask.any():
                components[c] = fit_rlhf(ds.subset(np.flatnonzero(mask)), cfg).beta_hat
    counts = np.bincount(assign, minlength=k)
    beta_em = counts @ components / n_users
    occupied = counts > 0
    return EmResult(
        components=components,
        assignments={int(u): int(c) for u, c in zip(user_ids, assign)},
        beta_em=beta_em,
        iterations=iterations,
        beta_em_unweighted=components[occupied].mean(axis=0),
        converged=converged,
    )


def fit_em_restarts(ds: Dataset, k: int, cfg: OptimConfig, seed: int, restarts: int = 1) -> EmResult:
    """Best of several EM runs by total assigned cross-entropy."""
    best, best_loss = None, math.inf
    for r in range(restarts):
        res = fit_em(ds, k, cfg, np.random.default_rng([seed, r]))
        user_ids, users_index = np.unique(ds.users, return_inverse=True)
        losses = _user_losses(ds, users_index, user_ids.size, res.components)
        total = losses[np.arange(user_ids.size), [res.assignments[int(u)] for u in user_ids]].sum()
        if total < best_loss:
            best, best_loss = res, total
    return best
