"""Polynomial kernel, kernel centers and explicit monomial expansion.

A degree-``s`` model in kernel form is

    f(x) = sum_j u_j (1 + eta_j . x)^s

and, expanded, the same function is a polynomial whose coefficient for the
monomial ``x^alpha`` is

    omega_alpha = sum_j u_j * M(s, alpha) * prod_k eta_jk^alpha_k

with ``M(s, alpha) = s! / ((s - |alpha|)! prod_k alpha_k!)``.  Everything in
this module works on already-scaled inputs unless a ``MinMaxScaling`` is
attached to the model, in which case prediction helpers scale raw inputs
first.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

if TYPE_CHECKING:
    from .timeseries import LagSpec

MAX_DEGREE = 20

CENTER_STRATEGIES = ("first", "uniform", "subsample")

MultiIndex = tuple  # tuple[int, ...], one exponent per embedded variable


def n_terms(dim: int, degree: int) -> int:
    """Dimension of the space of polynomials of total degree <= degree."""
    return math.comb(degree + dim, degree)


@lru_cache(maxsize=64)
def multi_indices(dim: int, degree: int) -> tuple:
    """All exponent vectors with total degree <= ``degree``.

    Ordered by total degree, then with variables in index order inside a
    degree (x1^2, x1*x2, ..., x2^2, ...).  This is the graded ordering used
    for every report and for tie-breaking.
    """
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(dim), total):
            alpha = [0] * dim
            for k in combo:
                alpha[k] += 1
            out.append(tuple(alpha))
    return tuple(out)


def multinomial(degree: int, alpha: Sequence[int]) -> int:
    """Coefficient of x^alpha in (1 + x_1 + ... + x_D)^degree, exactly."""
    if degree > MAX_DEGREE:
        raise ValueError(f"degree {degree} exceeds supported maximum {MAX_DEGREE}")
    order = sum(alpha)
    if order > degree or any(a < 0 for a in alpha):
        return 0
    # iterated binomials keep every intermediate an exact integer
    coef = math.comb(degree, order)
    remaining = order
    for a in alpha:
        coef *= math.comb(remaining, a)
        remaining -= a
    return coef


def _check_degree(s: int) -> None:
    if not isinstance(s, (int, np.integer)) or s < 1:
        raise ValueError(f"degree must be a positive integer, got {s!r}")
    if s > MAX_DEGREE:
        raise ValueError(f"degree {s} exceeds supported maximum {MAX_DEGREE}")


def kernel_eval(x, eta, s: int) -> float:
    """Inhomogeneous polynomial kernel ``(1 + x . eta)^s``."""
    _check_degree(s)
    x = np.asarray(x, dtype=float).ravel()
    eta = np.asarray(eta, dtype=float).ravel()
    if x.shape != eta.shape:
        raise ValueError(f"dimension mismatch: {x.size} vs {eta.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(eta))):
        raise ValueError("kernel inputs must be finite")
    return float((1.0 + x @ eta) ** s)


# ---------------------------------------------------------------------------
# Input scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MinMaxScaling:
    """Per-variable affine map onto [0, 1] fitted on training inputs.

    Constant variables get a unit denominator so they map to 0.
    """

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, X) -> "MinMaxScaling":
        X = np.asarray(X, dtype=float)
        return cls(lo=X.min(axis=0), hi=X.max(axis=0))

    @property
    def span(self) -> np.ndarray:
        span = self.hi - self.lo
        return np.where(span > 0, span, 1.0)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.lo.size:
            raise ValueError(
                f"dimension mismatch: scaling has {self.lo.size} variables, input has {X.shape[-1]}"
            )
        return (X - self.lo) / self.span


def _prepare(X, dim: int, scaling: Optional[MinMaxScaling]) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != dim:
        raise ValueError(f"dimension mismatch: model expects {dim} variables, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs must be finite")
    if scaling is not None:
        X = scaling.transform(X)
    return X, single


# ---------------------------------------------------------------------------
# Centers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CenterSet:
    centers: np.ndarray
    strategy: str = "first"
    seed: Optional[int] = None

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("centers must be a non-empty 2-D array")
        if not np.all(np.isfinite(c)):
            raise ValueError("centers must be finite")
        if self.strategy not in CENTER_STRATEGIES:
            raise ValueError(f"unknown center strategy {self.strategy!r}")
        object.__setattr__(self, "centers", c)

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


def build_centers(X, s: int, strategy: str = "first", seed: Optional[int] = None) -> CenterSet:
    """Pick ``C(s + D, s)`` kernel centers from (scaled) embedded inputs.

    ``first`` takes the earliest rows, ``subsample`` draws distinct rows and
    ``uniform`` draws points uniformly inside the per-variable data range.
    """
    _check_degree(s)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D array")
    T, D = X.shape
    n = n_terms(D, s)
    if strategy in ("first", "subsample") and T < n:
        raise ValueError(
            f"strategy {strategy!r} needs at least n = C({s}+{D}, {s}) = {n} rows, got {T}"
        )
    if strategy == "first":
        centers = X[:n].copy()
    elif strategy == "subsample":
        rng = np.random.default_rng(seed)
        rows = np.sort(rng.choice(T, size=n, replace=False))
        centers = X[rows].copy()
    elif strategy == "uniform":
        if T < 1:
            raise ValueError("uniform strategy needs at least one row to bound the data range")
        rng = np.random.default_rng(seed)
        lo, hi = X.min(axis=0), X.max(axis=0)
        centers = lo + (hi - lo) * rng.random((n, D))
    else:
        raise ValueError(f"unknown center strategy {strategy!r}")
    return CenterSet(centers, strategy, seed)


def validate_fundamental_system(centers, s: int) -> tuple[bool, float]:
    """Check empirically that the centers span the degree-``s`` polynomials.

    Returns ``(full_rank, smallest_singular_value)`` of the center Gram
    matrix ``G_ij = K_s(eta_i, eta_j)``.  Costs O(n^3).
    """
    C = centers.centers if isinstance(centers, CenterSet) else np.asarray(centers, dtype=float)
    G = (1.0 + C @ C.T) ** s
    sv = np.linalg.svd(G, compute_uv=False)
    tol = sv.max() * max(G.shape) * np.finfo(float).eps
    rank = int(np.sum(sv > tol))
    return rank == C.shape[0], float(sv.min())


def kernel_matrix(X, centers, s: int, threads: int = 1) -> np.ndarray:
    """``A_ij = K_s(x_i, eta_j)``; rows stay in input (time) order.

    Rows are computed in fixed blocks, so the result does not depend on
    ``threads``.
    """
    _check_degree(s)
    C = centers.centers if isinstance(centers, CenterSet) else np.asarray(centers, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != C.shape[1]:
        raise ValueError(f"dimension mismatch: data has {X.shape[1]} variables, centers {C.shape[1]}")
    block = 1024
    starts = range(0, X.shape[0], block)

    def rows(i):
        return (1.0 + X[i : i + block] @ C.T) ** s

    if threads <= 1 or X.shape[0] <= block:
        parts = [rows(i) for i in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(rows, starts))
    if not parts:
        return np.empty((0, C.shape[0]))
    return np.vstack(parts)


def monomial_features(X, indices: Sequence[Sequence[int]]) -> np.ndarray:
    """Evaluate each monomial x^alpha at every row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty((X.shape[0], len(indices)))
    for col, alpha in enumerate(indices):
        val = np.ones(X.shape[0])
        for k, a in enumerate(alpha):
            if a:
                val = val * X[:, k] ** a
        out[:, col] = val
    return out


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SparsePolynomial:
    """Explicit polynomial: a list of (multi-index, coefficient) terms.

    ``scaling`` (when present) maps raw inputs to the coordinates the
    coefficients live in.
    """

    terms: tuple
    degree: int
    feature_names: tuple
    threshold: float = 0.0
    scaling: Optional[MinMaxScaling] = None

    def __post_init__(self):
        terms = tuple((tuple(int(a) for a in alpha), float(c)) for alpha, c in self.terms)
        seen = set()
        for alpha, c in terms:
            if len(alpha) != len(self.feature_names):
                raise ValueError("multi-index length must equal the number of features")
            if sum(alpha) > self.degree:
                raise ValueError(f"term {alpha} exceeds degree {self.degree}")
            if alpha in seen:
                raise ValueError(f"duplicate multi-index {alpha}")
            if abs(c) < self.threshold:
                raise ValueError(f"coefficient {c} below threshold {self.threshold}")
            seen.add(alpha)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def dim(self) -> int:
        return len(self.feature_names)

    def coefficient(self, alpha) -> float:
        alpha = tuple(alpha)
        for a, c in self.terms:
            if a == alpha:
                return c
        return 0.0

    def as_dict(self) -> dict:
        return dict(self.terms)

    def thresholded(self, threshold: float) -> "SparsePolynomial":
        """Keep terms with ``|coefficient| >= threshold``."""
        if threshold < 0 or np.isnan(threshold):
            raise ValueError("threshold must be non-negative")
        kept = tuple((a, c) for a, c in self.terms if abs(c) >= threshold)
        return replace(self, terms=kept, threshold=float(threshold))

    def __call__(self, X) -> np.ndarray:
        return predict_sparse(self, X)


@dataclass(frozen=True)
class KernelModel:
    degree: int
    centers: CenterSet
    weights: np.ndarray
    feature_names: tuple
    loss: str = "squared"
    scaling: Optional[MinMaxScaling] = None
    lag_spec: Optional["LagSpec"] = None

    def __post_init__(self):
        _check_degree(self.degree)
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size != self.centers.n:
            raise ValueError(f"weights has length {w.size}, expected {self.centers.n}")
        if len(self.feature_names) != self.centers.dim:
            raise ValueError("feature_names must match the center dimension")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def dim(self) -> int:
        return self.centers.dim

    def predict(self, X) -> np.ndarray:
        return predict_kernel(self, X)

    def expand(self) -> SparsePolynomial:
        return expand_to_monomials(self)


def predict_kernel(model: KernelModel, X):
    """Kernel-form prediction ``sum_j u_j (1 + eta_j . x)^s`` on raw inputs."""
    Z, single = _prepare(X, model.dim, model.scaling)
    out = kernel_matrix(Z, model.centers, model.degree) @ model.weights
    return float(out[0]) if single else out


def predict_sparse(poly: SparsePolynomial, X):
    """Evaluate the explicit polynomial on raw inputs."""
    Z, single = _prepare(X, poly.dim, poly.scaling)
    if poly.terms:
        alphas = [a for a, _ in poly.terms]
        coefs = np.array([c for _, c in poly.terms])
        out = monomial_features(Z, alphas) @ coefs
    else:
        out = np.zeros(Z.shape[0])
    return float(out[0]) if single else out


def classify(scores) -> np.ndarray:
    """Sign of the score with ties mapped to +1."""
    scores = np.asarray(scores, dtype=float)
    return np.where(scores >= 0, 1, -1)


def expand_to_monomials(model: KernelModel) -> SparsePolynomial:
    """Rewrite a kernel-form model as its explicit polynomial (all terms, I = 0)."""
    C, u, s = model.centers.centers, model.weights, model.degree
    terms = []
    for alpha in multi_indices(model.dim, s):
        m = multinomial(s, alpha)
        if float(m) != m:  # pragma: no cover - guarded by MAX_DEGREE
            raise OverflowError(f"multinomial coefficient for {alpha} is not exact in floating point")
        powers = np.ones(C.shape[0])
        for k, a in enumerate(alpha):
            if a:
                powers = powers * C[:, k] ** a
        terms.append((alpha, float(m) * float(u @ powers)))
    return SparsePolynomial(
        terms=tuple(terms),
        degree=s,
        feature_names=model.feature_names,
        threshold=0.0,
        scaling=model.scaling,
    )
