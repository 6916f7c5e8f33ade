"""Synthetic pairwise-preference data.

A record holds the feature difference ``X = phi(x1) - phi(x2)`` and the label
``Y = 1`` when the user preferred the first alternative. Labels are drawn as
``Bernoulli(sigmoid(X @ beta))`` for a freshly sampled user ``beta``, which is
the Bradley-Terry model without materializing the Gumbel noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Optional, Union

import numpy as np

from ._numerics import MCEstimate, check_psd, digest, frozen, sigmoid
from .population import (
    GaussianMixedLogit,
    PopulationSpec,
    as_discrete,
    sample_users,
    spec_digest,
)


# -- diff distributions ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianDiff:
    covariance: np.ndarray

    def __init__(self, covariance):
        object.__setattr__(self, "covariance", frozen(check_psd(covariance)))

    @property
    def dim(self) -> int:
        return self.covariance.shape[0]


@dataclass(frozen=True)
class UniformBall:
    radius: float
    dim: int

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")


@dataclass(frozen=True, eq=False)
class ItemCatalog:
    """A finite set of item feature vectors; pairs are two distinct items.

    With ``replace=False`` a panel user never sees the same pair twice. Ties in
    mean utility between catalog items are possible, unlike for continuous
    diff distributions.
    """

    features: np.ndarray
    replace: bool = True

    def __init__(self, features, replace: bool = True):
        feats = np.array(features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 2:
            raise ValueError("catalog needs at least two items with a common dimension")
        if not np.all(np.isfinite(feats)):
            raise ValueError("catalog features must be finite")
        object.__setattr__(self, "features", frozen(feats))
        object.__setattr__(self, "replace", bool(replace))

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def size(self) -> int:
        return self.features.shape[0]


DiffDistribution = Union[GaussianDiff, UniformBall, ItemCatalog]


def diff_to_dict(diffs: DiffDistribution) -> dict:
    if isinstance(diffs, GaussianDiff):
        return {"type": "gaussian", "covariance": diffs.covariance.tolist()}
    if isinstance(diffs, UniformBall):
        return {"type": "uniform_ball", "radius": float(diffs.radius), "dim": int(diffs.dim)}
    if isinstance(diffs, ItemCatalog):
        return {"type": "item_catalog", "features": diffs.features.tolist(), "replace": diffs.replace}
    raise TypeError(f"not a diff distribution: {diffs!r}")


def diff_from_dict(data: dict) -> DiffDistribution:
    kind = data.get("type")
    if kind == "gaussian":
        return GaussianDiff(data["covariance"])
    if kind == "uniform_ball":
        return UniformBall(float(data["radius"]), int(data["dim"]))
    if kind == "item_catalog":
        if "path" in data:
            return load_item_catalog(data["path"], replace=data.get("replace", True))
        return ItemCatalog(data["features"], data.get("replace", True))
    raise ValueError(f"malformed diff distribution: {data!r}")


def load_item_catalog(path, replace: bool = True) -> ItemCatalog:
    """Load item features from ``.npy`` or a delimited text file (one item per row)."""
    path = Path(path)
    if path.suffix == ".npy":
        feats = np.load(path)
    else:
        feats = np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None, ndmin=2)
    return ItemCatalog(feats, replace=replace)


def sample_diffs(diffs: DiffDistribution, n: int, rng: np.random.Generator):
    """Draw ``n`` feature differences. Returns ``(X, items)``; items is None unless a catalog."""
    if isinstance(diffs, GaussianDiff):
        x = rng.multivariate_normal(np.zeros(diffs.dim), diffs.covariance, size=n, method="eigh")
        return x, None
    if isinstance(diffs, UniformBall):
        g = rng.standard_normal((n, diffs.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = diffs.radius * rng.random(n) ** (1.0 / diffs.dim)
        return g * r[:, None], None
    items = _draw_pairs(diffs.size, n, rng)
    # Exchangeability: present each pair in random order.
    swap = rng.random(n) < 0.5
    items[swap] = items[swap][:, ::-1]
    x = diffs.features[items[:, 0]] - diffs.features[items[:, 1]]
    return x, items


def _draw_pairs(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    first = rng.integers(0, m, size=n)
    second = rng.integers(0, m - 1, size=n)
    second = second + (second >= first)
    return np.stack([first, second], axis=1).astype(np.int64)


def _draw_distinct_pairs(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    n_pairs = m * (m - 1) // 2
    if n > n_pairs:
        raise ValueError(f"cannot draw {n} distinct pairs from a catalog of {m} items")
    chosen: set[tuple[int, int]] = set()
    out = []
    while len(out) < n:
        i, j = (int(v) for v in _draw_pairs(m, 1, rng)[0])
        key = (min(i, j), max(i, j))
        if key not in chosen:
            chosen.add(key)
            out.append((i, j))
    return np.array(out, dtype=np.int64)


# -- choice probabilities ----------------------------------------------------

def choice_probability(diff, beta):
    """``sigmoid(X @ beta)``; ``diff`` may be a single vector or an ``(n, d)`` array."""
    diff = np.asarray(diff, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if diff.shape[-1] != beta.shape[-1]:
        raise ValueError(f"dimension mismatch: diff has {diff.shape[-1]}, beta has {beta.shape[-1]}")
    return sigmoid(diff @ beta)


def population_choice_probability(diff, spec: PopulationSpec, n_samples: Optional[int] = None,
                                  seed=None, return_stderr: bool = False):
    """Probability that a random user prefers the first alternative.

    Exact for discrete populations. Gaussian populations need ``n_samples``
    and are evaluated by Monte Carlo; pass ``return_stderr=True`` to get an
    :class:`MCEstimate` (stderr is 0 for exact evaluations).
    """
    diff = np.asarray(diff, dtype=np.float64)
    if diff.shape[-1] != spec.dim:
        raise ValueError(f"dimension mismatch: diff has {diff.shape[-1]}, population has {spec.dim}")
    mix = as_discrete(spec)
    if mix is not None:
        p = sigmoid(diff @ mix.atoms.T) @ mix.weights
        return MCEstimate(p, np.zeros_like(p)) if return_stderr else p
    if n_samples is None or n_samples < 2:
        raise ValueError("Gaussian populations need n_samples >= 2 for Monte-Carlo evaluation")
    rng = np.random.default_rng(seed)
    betas = sample_users(spec, n_samples, rng)
    probs = sigmoid(diff @ betas.T)
    p = probs.mean(axis=-1)
    if return_stderr:
        return MCEstimate(p, probs.std(axis=-1, ddof=1) / math.sqrt(n_samples))
    return p


def gaussian_choice_probability_gh(diff, spec: GaussianMixedLogit, n_nodes: int = 64):
    """Deterministic Gauss-Hermite evaluation of the Gaussian-population choice probability.

    ``X @ beta`` is normal with mean ``X @ mean`` and variance ``X' Sigma X``,
    so the expectation is a one-dimensional Gaussian integral.
    """
    diff = np.asarray(diff, dtype=np.float64)
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
    weights = weights / weights.sum()
    loc = diff @ spec.mean
    scale = np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", diff, spec.covariance, diff), 0.0))
    return sigmoid(loc[..., None] + scale[..., None] * nodes) @ weights


# -- datasets ----------------------------------------------------------------

@dataclass(frozen=True)
class PanelSpec:
    n_users: int
    pairs_per_user: int

    def __post_init__(self):
        if self.n_users < 1 or self.pairs_per_user < 1:
            raise ValueError("panel sizes must be positive")

    @property
    def size(self) -> int:
        return self.n_users * self.pairs_per_user


PROVENANCE_KEYS = ("seed", "population_digest", "diff_digest", "panel")


class PreferenceRecord(NamedTuple):
    diff: np.ndarray
    label: int
    user_id: Optional[int] = None
    item_ids: Optional[tuple[int, int]] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Preference records stored column-wise.

    ``x`` is ``(n, d)``, ``y`` is ``(n,)`` of 0/1. ``users`` and ``items`` are
    optional per-record user ids and catalog index pairs.
    """

    x: np.ndarray
    y: np.ndarray
    users: Optional[np.ndarray] = None
    items: Optional[np.ndarray] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y = np.array(self.y).reshape(-1)
        if x.ndim != 2 or x.shape[0] != y.size:
            raise ValueError(f"x has shape {x.shape} but there are {y.size} labels")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        provenance = {key: None for key in PROVENANCE_KEYS}
        provenance.update(self.provenance)
        object.__setattr__(self, "provenance", provenance)
        object.__setattr__(self, "x", frozen(x))
        y = y.astype(np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        for name in ("users", "items"):
            val = getattr(self, name)
            if val is not None:
                val = np.array(val, dtype=np.int64)
                if val.shape[0] != y.size:
                    raise ValueError(f"{name} must have one entry per record")
                val.setflags(write=False)
                object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.n

    @property
    def signs(self) -> np.ndarray:
        """``2y - 1`` as floats."""
        return 2.0 * self.y - 1.0

    def records(self) -> Iterator[PreferenceRecord]:
        for i in range(self.n):
            yield PreferenceRecord(
                self.x[i],
                int(self.y[i]),
                None if self.users is None else int(self.users[i]),
                None if self.items is None else (int(self.items[i, 0]), int(self.items[i, 1])),
            )

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.x[idx],
            self.y[idx],
            None if self.users is None else self.users[idx],
            None if self.items is None else self.items[idx],
            dict(self.provenance),
        )

    @classmethod
    def from_records(cls, records, provenance=None) -> "Dataset":
        records = list(records)
        if not records:
            raise ValueError("dataset has zero records")
        users = [r.user_id for r in records]
        items = [r.item_ids for r in records]
        return cls(
            np.array([r.diff for r in records], dtype=np.float64),
            np.array([r.label for r in records]),
            None if all(u is None for u in users) else np.array(users),
            None if all(i is None for i in items) else np.array(items),
            dict(provenance or {}),
        )

    def equals(self, other: "Dataset") -> bool:
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)

        return (same(self.x, other.x) and same(self.y, other.y) and same(self.users, other.users)
                and same(self.items, other.items) and self.provenance == other.provenance)


def generate(spec: PopulationSpec, diffs: DiffDistribution, n: int,
             panel: Optional[PanelSpec] = None, seed: int = 0) -> Dataset:
    """Sample a preference dataset.

    Without a panel every record has its own user. With a panel,
    ``panel.n_users`` users each label ``panel.pairs_per_user`` pairs and the
    user id is stored.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if spec.dim != diffs.dim:
        raise ValueError(f"population dimension {spec.dim} differs from diff dimension {diffs.dim}")
    if panel is not None and panel.size != n:
        raise ValueError(f"panel of {panel.n_users} x {panel.pairs_per_user} does not give n={n} records")
    rng = np.random.default_rng(seed)
    if panel is None:
        betas = sample_users(spec, n, rng)
        users = None
        x, items = sample_diffs(diffs, n, rng)
    else:
        user_betas = sample_users(spec, panel.n_users, rng)
        users = np.repeat(np.arange(panel.n_users, dtype=np.int64), panel.pairs_per_user)
        betas = user_betas[users]
        if isinstance(diffs, ItemCatalog) and not diffs.replace:
            items = np.concatenate([_draw_distinct_pairs(diffs.size, panel.pairs_per_user, rng)
                                    for _ in range(panel.n_users)])
            swap = rng.random(n) < 0.5
            items[swap] = items[swap][:, ::-1]
            x = diffs.features[items[:, 0]] - diffs.features[items[:, 1]]
        else:
            x, items = sample_diffs(diffs, n, rng)
    p = sigmoid(np.einsum("ij,ij->i", x, betas))
    y = (rng.random(n) < p).astype(np.int8)
    provenance = {
        "seed": int(seed),
        "population_digest": spec_digest(spec),
        "diff_digest": digest(diff_to_dict(diffs)),
        "panel": None if panel is None else {"n_users": panel.n_users, "pairs_per_user": panel.pairs_per_user},
    }
    return Dataset(x, y, users, items, provenance)


def generate_with_types(spec: PopulationSpec, diffs: DiffDistribution, panel: PanelSpec, seed: int = 0):
    """Panel dataset plus each user's true mixture component (for clustering checks)."""
    mix = as_discrete(spec)
    if mix is None:
        raise ValueError("true types exist only for discrete populations")
    ds = generate(spec, diffs, panel.size, panel=panel, seed=seed)
    # Replay the user draw: sample_users consumes the generator first.
    from .population import sample_types

    types = sample_types(mix, panel.n_users, np.random.default_rng(seed))
    return ds, types


# -- persistence -------------------------------------------------------------

class DatasetFormatError(ValueError):
    """A dataset file could not be parsed; ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


def dumps_dataset(ds: Dataset) -> str:
    header = {"dim": ds.dim, "n": ds.n, **ds.provenance}
    lines = [json.dumps(header, sort_keys=True)]
    xs = ds.x.tolist()
    for i in range(ds.n):
        rec = {
            "x": xs[i],
            "y": int(ds.y[i]),
            "user": None if ds.users is None else int(ds.users[i]),
            "items": None if ds.items is None else [int(v) for v in ds.items[i]],
        }
        lines.append(json.dumps(rec))
    return "\n".join(lines) + "\n"


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(dumps_dataset(ds))


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("missing header line", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"header is not valid JSON ({exc.msg})", 1) from None
    if not isinstance(header, dict) or not isinstance(header.get("dim"), int) or header["dim"] < 1:
        raise DatasetFormatError("header must be an object with a positive integer 'dim'", 1)
    dim = header["dim"]
    xs, ys, users, items = [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"record is not valid JSON ({exc.msg})", lineno) from None
        if not isinstance(rec, dict) or set(rec) != {"x", "y", "user", "items"}:
            raise DatasetFormatError("record must have exactly the keys x, y, user, items", lineno)
        x = rec["x"]
        if not isinstance(x, list) or len(x) != dim:
            got = len(x) if isinstance(x, list) else type(x).__name__
            raise DatasetFormatError(f"record dimension {got} does not match header dim {dim}", lineno)
        if rec["y"] not in (0, 1) or isinstance(rec["y"], bool):
            raise DatasetFormatError(f"label must be 0 or 1, got {rec['y']!r}", lineno)
        xs.append(x)
        ys.append(rec["y"])
        users.append(rec["user"])
        items.append(rec["items"])
    if not ys:
        raise DatasetFormatError("dataset has zero records")
    if "n" in header and header["n"] != len(ys):
        raise DatasetFormatError(f"header declares n={header['n']} but file has {len(ys)} records", 1)
    provenance = {k: v for k, v in header.items() if k not in ("dim", "n")}
    has_users = [u is not None for u in users]
    has_items = [i is not None for i in items]
    if any(has_users) and not all(has_users):
        raise DatasetFormatError("either every record or no record must carry a user id")
    if any(has_items) and not all(has_items):
        raise DatasetFormatError("either every record or no record must carry item ids")
    return Dataset(
        np.array(xs, dtype=np.float64).reshape(len(ys), dim),
        np.array(ys),
        np.array(users) if all(has_users) else None,
        np.array(items) if all(has_items) else None,
        provenance,
    )
