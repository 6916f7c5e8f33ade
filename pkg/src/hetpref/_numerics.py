"""Small numerical helpers shared across modules."""

from __future__ import annotations

import hashlib
import json
from typing import NamedTuple

import numpy as np
from scipy.special import expit, log_expit

sigmoid = expit
log_sigmoid = log_expit


class MCEstimate(NamedTuple):
    """A Monte-Carlo mean together with its standard error."""

    value: float
    stderr: float


def sigmoid_prime(t):
    s = expit(t)
    return s * (1.0 - s)


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.array(v, dtype=np.float64).reshape(-1)
    if arr.size < 1:
        raise ValueError(f"{name} must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / norm


def frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def digest(obj) -> str:
    """Stable sha256 of a JSON-serializable object."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def derive_seed(base_seed: int, *keys) -> int:
    """Order-independent child seed: hash of the base seed and sweep keys."""
    payload = json.dumps([int(base_seed), *keys], separators=(",", ":"))
    raw = hashlib.sha256(payload.encode()).digest()
    return int.from_bytes(raw[:8], "little") & (2**63 - 1)


def check_psd(cov, name: str = "covariance", tol: float = 1e-10) -> np.ndarray:
    cov = np.array(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise ValueError(f"{name} has non-finite entries")
    if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
        raise ValueError(f"{name} is not symmetric")
    min_eig = float(np.linalg.eigvalsh(cov).min())
    if min_eig < -tol:
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {min_eig:.3g})")
    return cov
