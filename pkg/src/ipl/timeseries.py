"""Lag embedding, chronological splits, simulators and feature perturbation.

All randomness goes through ``numpy.random.default_rng`` (PCG64) seeded
with an integer, so a seed reproduces the same draws on every platform.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .polycore import SparsePolynomial


@dataclass(frozen=True)
class LagSpec:
    """Number of lagged feature vectors (``lx``) and lagged targets (``ly``)."""

    lx: int = 0
    ly: int = 0

    def __post_init__(self):
        if int(self.lx) != self.lx or int(self.ly) != self.ly or self.lx < 0 or self.ly < 0:
            raise ValueError(f"lags must be non-negative integers, got ({self.lx}, {self.ly})")
        object.__setattr__(self, "lx", int(self.lx))
        object.__setattr__(self, "ly", int(self.ly))

    @property
    def warmup(self) -> int:
        return max(self.lx, self.ly)

    def dim(self, d: int) -> int:
        return d * (1 + self.lx) + self.ly


@dataclass(frozen=True)
class RawSeries:
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple
    target_name: str = "y"
    timestamps: Optional[tuple] = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.targets, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError(f"features have {X.shape[0]} rows but targets have {y.size}")
        if len(self.feature_names) != X.shape[1]:
            raise ValueError("one feature name per column is required")
        bad = np.flatnonzero(~np.isfinite(X).all(axis=1) | ~np.isfinite(y))
        if bad.size:
            shown = ", ".join(str(i) for i in bad[:10])
            raise ValueError(f"non-finite values in rows {shown}{' ...' if bad.size > 10 else ''}")
        if self.timestamps is not None:
            ts = tuple(self.timestamps)
            if len(ts) != y.size:
                raise ValueError("timestamps must align with rows")
            if any(b < a for a, b in zip(ts, ts[1:])):
                raise ValueError("timestamps must be non-decreasing")
            object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self) -> int:
        return self.targets.size

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def slice(self, start: int, stop: Optional[int] = None, step: int = 1) -> "RawSeries":
        sl = slice(start, stop, step)
        ts = None if self.timestamps is None else self.timestamps[sl]
        return replace(self, features=self.features[sl], targets=self.targets[sl], timestamps=ts)


@dataclass(frozen=True)
class SupervisedDataset:
    """Embedded inputs ``X`` (rows in time order) with aligned targets."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple
    lag_spec: LagSpec = LagSpec()
    timestamps: Optional[tuple] = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError("X and y must have the same number of rows")
        if X.shape[1] != len(self.feature_names):
            raise ValueError("one feature name per column is required")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def rows(self, start: int, stop: int) -> "SupervisedDataset":
        ts = None if self.timestamps is None else self.timestamps[start:stop]
        return replace(self, X=self.X[start:stop], y=self.y[start:stop], timestamps=ts)

    def with_column(self, j: int, values) -> "SupervisedDataset":
        X = self.X.copy()
        X[:, j] = values
        return replace(self, X=X)

    def column(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"no embedded feature named {name!r}") from None


def lag_name(base: str, lag: int) -> str:
    return f"{base}[t]" if lag == 0 else f"{base}[t-{lag}]"


def lag_embed(series: RawSeries, spec: LagSpec = LagSpec()) -> SupervisedDataset:
    """Build rows ``(x_i, x_{i-1}, ..., x_{i-lx}, y_{i-1}, ..., y_{i-ly})``.

    The first ``max(lx, ly)`` rows have incomplete history and are dropped.
    """
    T = len(series)
    m = spec.warmup
    if T <= m:
        raise ValueError(f"series of length {T} is too short for lags {spec}; need at least {m + 1} rows")
    blocks = [series.features[m - lag : T - lag] for lag in range(spec.lx + 1)]
    blocks += [series.targets[m - lag : T - lag, None] for lag in range(1, spec.ly + 1)]
    names = [lag_name(f, lag) for lag in range(spec.lx + 1) for f in series.feature_names]
    names += [lag_name(series.target_name, lag) for lag in range(1, spec.ly + 1)]
    ts = None if series.timestamps is None else series.timestamps[m:]
    return SupervisedDataset(np.hstack(blocks), series.targets[m:], tuple(names), spec, ts)


class Split(NamedTuple):
    train: SupervisedDataset
    validation: Optional[SupervisedDataset]
    test: SupervisedDataset


def _resolve_sizes(total: int, sizes: Sequence[float]) -> list[int]:
    if len(sizes) not in (2, 3):
        raise ValueError("give (train, test) or (train, validation, test) sizes")
    if any(s < 0 for s in sizes):
        raise ValueError("split sizes must be non-negative")
    if all(float(s).is_integer() for s in sizes):
        counts = [int(s) for s in sizes]
    else:
        if sum(sizes) > 1 + 1e-12:
            raise ValueError(f"split fractions sum to {sum(sizes)} > 1")
        counts = [int(np.floor(s * total + 1e-9)) for s in sizes]
        if abs(sum(sizes) - 1) <= 1e-12:
            counts[0] = total - sum(counts[1:])
    if sum(counts) > total:
        raise ValueError(f"split sizes {counts} exceed the {total} available rows")
    if len(counts) == 2:
        counts = [counts[0], 0, counts[1]]
    return counts


def chronological_split(dataset: SupervisedDataset, sizes: Sequence[float]) -> Split:
    """Contiguous train / validation / test blocks, test being the most recent.

    ``sizes`` holds row counts or fractions.  Blocks are anchored at the end
    of the series; rows older than the training block are left out.
    """
    n = len(dataset)
    n_train, n_val, n_test = _resolve_sizes(n, sizes)
    test_start = n - n_test
    val_start = test_start - n_val
    train_start = val_start - n_train
    val = dataset.rows(val_start, test_start) if n_val else None
    return Split(dataset.rows(train_start, val_start), val, dataset.rows(test_start, n))


# ---------------------------------------------------------------------------
# Simulators
# ---------------------------------------------------------------------------

BENCHMARK_COEFFICIENTS = {
    (0, 0, 0, 0, 0): 1.0,
    (1, 0, 0, 0, 0): 1.0,
    (0, 1, 0, 0, 0): 2.0,
    (0, 0, 1, 0, 0): 3.0,
    (0, 0, 0, 1, 0): 4.0,
    (0, 0, 0, 0, 1): 5.0,
    (1, 1, 0, 0, 0): 6.0,
    (0, 0, 1, 1, 0): -7.0,
}


def benchmark_signal(X) -> np.ndarray:
    """``(1 + x1 + 2x2 + 3x3 + 4x4 + 5x5 + 6x1x2 - 7x3x4) / 15``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x1, x2, x3, x4, x5 = (X[:, k] for k in range(5))
    return (1 + x1 + 2 * x2 + 3 * x3 + 4 * x4 + 5 * x5 + 6 * x1 * x2 - 7 * x3 * x4) / 15.0


def benchmark_truth(extra_features: int = 0) -> SparsePolynomial:
    names = tuple(f"x{k + 1}" for k in range(5 + extra_features))
    pad = (0,) * extra_features
    terms = tuple((alpha + pad, c / 15.0) for alpha, c in BENCHMARK_COEFFICIENTS.items())
    return SparsePolynomial(terms=terms, degree=2, feature_names=names)


def _benchmark_series(rng, T, include_temporal, noise_sd, add_irrelevant):
    X = rng.random((T, 5))
    extra = rng.random((T, 1)) if add_irrelevant else None
    eps = rng.normal(0.0, noise_sd, T) if noise_sd > 0 else np.zeros(T)
    drive = benchmark_signal(X) + eps
    y = np.empty(T)
    prev1 = prev2 = 0.0
    for t in range(T):
        y[t] = drive[t] + (np.cos(prev1) * np.sin(prev2) if include_temporal else 0.0)
        prev2, prev1 = prev1, y[t]
    feats = X if extra is None else np.hstack([X, extra])
    names = tuple(f"x{k + 1}" for k in range(feats.shape[1]))
    return RawSeries(feats, y, names, "y")


def simulate_benchmark(
    t_train: int = 4000,
    t_test: int = 1000,
    seed: int = 0,
    include_temporal: bool = True,
    noise_sd: float = 0.1,
    add_irrelevant: bool = False,
    noisy_test: bool = False,
):
    """Benchmark series with a known sparse polynomial drive.

    Row ``t`` carries the covariates ``x_t`` that drive ``y_t``:

        y_t = cos(y_{t-1}) sin(y_{t-2}) + f(x_t) + eps_t,   x_t ~ U[0,1]^5

    with ``y_{-1} = y_{-2} = 0``.  The autoregressive part is dropped when
    ``include_temporal`` is false.  Test targets are noiseless unless
    ``noisy_test``.  ``add_irrelevant`` appends an independent U[0,1]
    column ``x6`` that never enters the targets.

    Returns
    -------
    (train, test, truth) where ``truth`` is the polynomial ``f`` over the
    raw covariates.
    """
    if t_train < 3 or t_test < 3:
        raise ValueError("series need at least 3 rows")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    rng = np.random.default_rng(seed)
    train = _benchmark_series(rng, t_train, include_temporal, noise_sd, add_irrelevant)
    test = _benchmark_series(rng, t_test, include_temporal, noise_sd if noisy_test else 0.0, add_irrelevant)
    return train, test, benchmark_truth(1 if add_irrelevant else 0)


def simulate_prices(T: int = 5000, seed: int = 0, persistence: float = 0.98, drift: float = 0.002,
                    vol: float = 0.004):
    """OHLCV-like series from a random walk whose drift switches regimes.

    The drift sign follows a two-state Markov chain that stays put with
    probability ``persistence``, giving short-term momentum in the close.
    Returns a ``RawSeries`` with features (open, high, low, volume) and the
    close as target.
    """
    rng = np.random.default_rng(seed)
    regime = np.empty(T)
    state = 1.0
    for t in range(T):
        if rng.random() > persistence:
            state = -state
        regime[t] = state
    log_ret = regime * drift + vol * rng.standard_normal(T)
    close = 100.0 * np.exp(np.cumsum(log_ret))
    open_ = np.concatenate([[100.0], close[:-1]])
    wiggle = np.abs(rng.normal(0.0, vol, (T, 2))) * close[:, None]
    high = np.maximum(open_, close) + wiggle[:, 0]
    low = np.minimum(open_, close) - wiggle[:, 1]
    volume = rng.lognormal(10.0, 0.3, T) * (1.0 + 50.0 * np.abs(log_ret))
    X = np.column_stack([open_, high, low, volume])
    return RawSeries(X, close, ("open", "high", "low", "volume"), "close")


def simulate_alarm(T: int = 3000, seed: int = 0, threshold: float = 0.5, rho: float = 0.95):
    """Monitoring series whose alarm label is driven by an interaction.

    Five covariates in [0, 1] are Gaussian AR(1) processes (coefficient
    ``rho``) pushed through the normal CDF, so each is uniform at every
    time while drifting slowly.  The label is 1 when ``x2 * x3`` exceeds
    ``threshold`` and -1 otherwise; persistence of the covariates makes
    alarms come in runs.
    """
    from scipy.special import ndtr

    rng = np.random.default_rng(seed)
    z = np.empty((T, 5))
    z[0] = rng.standard_normal(5)
    innov = rng.standard_normal((T, 5)) * np.sqrt(1.0 - rho**2)
    for t in range(1, T):
        z[t] = rho * z[t - 1] + innov[t]
    X = ndtr(z)
    label = np.where(X[:, 1] * X[:, 2] > threshold, 1.0, -1.0)
    return RawSeries(X, label, tuple(f"x{k + 1}" for k in range(5)), "alarm")


# ---------------------------------------------------------------------------
# Targets and perturbation
# ---------------------------------------------------------------------------


def make_direction_targets(prices, k: int) -> np.ndarray:
    """``1`` where ``P[t+k] > P[t]`` else ``-1``; the last ``k`` positions are dropped."""
    p = np.asarray(prices, dtype=float).ravel()
    if int(k) != k or k < 1:
        raise ValueError("horizon k must be a positive integer")
    if k >= p.size:
        raise ValueError(f"horizon k={k} needs more than {k} prices, got {p.size}")
    return np.where(p[k:] > p[:-k], 1.0, -1.0)


def direction_series(series: RawSeries, k: int) -> RawSeries:
    """Replace the targets of ``series`` by ``k``-step direction labels."""
    labels = make_direction_targets(series.targets, k)
    n = labels.size
    ts = None if series.timestamps is None else series.timestamps[:n]
    return RawSeries(series.features[:n], labels, series.feature_names, f"Target_{k}period", ts)


def perturb_feature(X, feature_index: int, alpha_p: float, seed=None):
    """Add ``alpha_p * N(0, sigma_j^2)`` noise to column ``j`` only.

    ``sigma_j`` is the sample standard deviation of that column.  ``seed``
    may be an int, a ``SeedSequence`` or a ``Generator``.

    Returns
    -------
    (perturbed copy, constant_flag); a constant column comes back unchanged
    with the flag set.
    """
    if alpha_p < 0 or not np.isfinite(alpha_p):
        raise ValueError("alpha_p must be a finite non-negative number")
    is_dataset = isinstance(X, SupervisedDataset)
    M = np.array(X.X if is_dataset else X, dtype=float)
    if not 0 <= feature_index < M.shape[1]:
        raise IndexError(f"feature index {feature_index} out of range for {M.shape[1]} columns")
    col = M[:, feature_index]
    sigma = float(np.std(col, ddof=1)) if col.size > 1 else 0.0
    constant = sigma == 0.0
    if constant:
        warnings.warn(f"column {feature_index} is constant; left unperturbed", RuntimeWarning, stacklevel=2)
    elif alpha_p > 0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        M[:, feature_index] = col + alpha_p * sigma * rng.standard_normal(col.size)
    if is_dataset:
        return replace(X, X=M), constant
    return M, constant
