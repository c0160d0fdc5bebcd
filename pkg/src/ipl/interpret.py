"""Reading feature importance off the monomial coefficients.

Also hosts the checks that a ranking is trustworthy: overlap with a known
generating polynomial, rank and value agreement, perturbation of the top
feature, and accuracy as a function of how many top terms are kept.
"""

from __future__ import annotations

import math
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .estimators import LinearRegression, LogisticRegression, mse, roc_auc
from .polycore import KernelModel, SparsePolynomial, expand_to_monomials, monomial_features
from .timeseries import SupervisedDataset, perturb_feature

_LAG0 = re.compile(r"\[t\]$")


def term_name(alpha: Sequence[int], names: Sequence[str]) -> str:
    """Readable monomial name, e.g. ``x2[t]*x3[t]`` or ``y[t-1]^2``; ``1`` for the constant."""
    parts = []
    for k, a in enumerate(alpha):
        if a == 1:
            parts.append(names[k])
        elif a > 1:
            parts.append(f"{names[k]}^{a}")
    return "*".join(parts) if parts else "1"


def term_key(alpha: Sequence[int], names: Sequence[str]) -> tuple:
    """Name-based identity of a monomial, independent of column layout.

    Current-time variables ``x1[t]`` and bare ``x1`` share a key, so a
    ground-truth polynomial over raw covariates can be matched against a
    model fitted on lag-embedded inputs.
    """
    return tuple(sorted((_LAG0.sub("", names[k]), int(a)) for k, a in enumerate(alpha) if a))


@dataclass(frozen=True)
class ImportanceEntry:
    name: str
    index: tuple
    coefficient: float
    rank: int
    key: tuple = field(compare=False, repr=False, default=())

    def matches(self, term) -> bool:
        return term == self.index or term == self.key or term == self.name


@dataclass(frozen=True)
class ImportanceReport:
    entries: tuple
    threshold: float
    feature_names: tuple
    degree: int
    loss: str = "squared"
    lag_spec: Optional[tuple] = None

    def __len__(self) -> int:
        return len(self.entries)

    def top(self, k: int) -> tuple:
        return self.entries[:k]

    def to_rows(self) -> list[list[str]]:
        """Tabular form: rank, term, exponents, coefficient."""
        rows = [["rank", "term", "exponents", "coefficient"]]
        for e in self.entries:
            rows.append([str(e.rank), e.name, " ".join(map(str, e.index)), repr(e.coefficient)])
        return rows

    @classmethod
    def from_rows(cls, rows, feature_names, degree, threshold=0.0, loss="squared", lag_spec=None):
        rows = list(rows)
        if not rows or [c.strip() for c in rows[0]] != ["rank", "term", "exponents", "coefficient"]:
            raise ValueError("importance table must start with header rank,term,exponents,coefficient")
        entries = []
        for row in rows[1:]:
            alpha = tuple(int(a) for a in row[2].split())
            entries.append(
                ImportanceEntry(row[1], alpha, float(row[3]), int(row[0]), term_key(alpha, feature_names))
            )
        return cls(tuple(entries), float(threshold), tuple(feature_names), int(degree), loss, lag_spec)


@dataclass(frozen=True)
class MetricBundle:
    feature_overlap_ratio: float
    ranking_similarity: float
    value_similarity: float
    flags: tuple = ()


def _as_polynomial(model) -> SparsePolynomial:
    if isinstance(model, SparsePolynomial):
        return model
    if isinstance(model, KernelModel):
        return expand_to_monomials(model)
    if hasattr(model, "model"):
        return expand_to_monomials(model.model)
    raise TypeError(f"cannot rank features of {type(model).__name__}")


def rank_features(model, threshold: float = 0.0, exclude_constant: bool = True) -> ImportanceReport:
    """Rank monomials by ``|coefficient|``, keeping those at or above ``threshold``.

    Ties keep the graded multi-index order.  Accepts a ``KernelModel``, a
    fitted pipeline result or an explicit ``SparsePolynomial``.
    """
    if threshold < 0 or math.isnan(threshold):
        raise ValueError("threshold must be non-negative")
    poly = _as_polynomial(model)
    order = {alpha: pos for pos, (alpha, _) in enumerate(poly.terms)}
    kept = [
        (alpha, c)
        for alpha, c in poly.terms
        if abs(c) >= threshold and not (exclude_constant and sum(alpha) == 0)
    ]
    kept.sort(key=lambda t: (-abs(t[1]), order[t[0]]))
    names = poly.feature_names
    entries = tuple(
        ImportanceEntry(term_name(a, names), a, c, r, term_key(a, names))
        for r, (a, c) in enumerate(kept, start=1)
    )
    loss = getattr(getattr(model, "model", model), "loss", "squared")
    lag = getattr(getattr(model, "model", model), "lag_spec", None)
    lag = None if lag is None else (lag.lx, lag.ly)
    return ImportanceReport(entries, float(threshold), names, poly.degree, loss, lag)


def _position(term, ordered: Sequence) -> Optional[int]:
    for pos, e in enumerate(ordered):
        if (e.matches(term) if isinstance(e, ImportanceEntry) else e == term):
            return pos
    return None


def feature_overlap_ratio(truth_terms: Iterable, report, top_k: int = 10) -> float:
    """Share of the true terms that appear among the top ``top_k`` ranked terms."""
    truth = list(truth_terms)
    if not truth:
        raise ValueError("truth term set is empty")
    top = list(report.top(top_k) if isinstance(report, ImportanceReport) else list(report)[:top_k])
    return sum(_position(t, top) is not None for t in truth) / len(truth)


def ranking_similarity(method_order: Sequence, truth_order: Sequence) -> float:
    """Spearman-style agreement ``1 - 6 sum d^2 / (n (n^2 - 1))`` over the true terms.

    ``truth_order`` lists the true terms from most to least important;
    ``method_order`` is the method's ranking (entries or identifiers).  Each
    true term is ranked by its position among the true terms the method
    lists; unlisted ones share the rank just past the listed ones.
    """
    n = len(truth_order)
    if n < 2:
        return float("nan")
    positions = [_position(t, method_order) for t in truth_order]
    listed = sorted(p for p in positions if p is not None)
    rank_of = {p: r for r, p in enumerate(listed, start=1)}
    missing_rank = len(listed) + 1
    d2 = 0.0
    for truth_rank, p in enumerate(positions, start=1):
        method_rank = rank_of[p] if p is not None else missing_rank
        d2 += (method_rank - truth_rank) ** 2
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


def value_similarity(method_coeffs, truth_coeffs) -> float:
    """Cosine similarity of coefficient vectors over the true terms."""
    a = np.asarray(method_coeffs, dtype=float)
    b = np.asarray(truth_coeffs, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("coefficient vectors must be non-empty and the same length")
    nb = np.linalg.norm(b)
    if nb == 0:
        raise ValueError("truth coefficients are all zero")
    na = np.linalg.norm(a)
    if na == 0:
        warnings.warn("method coefficients are all zero; value similarity set to 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def interpretability_metrics(report: ImportanceReport, truth: SparsePolynomial, top_k: int = 10) -> MetricBundle:
    """Overlap, ranking and value agreement of a ranking with a known polynomial.

    The constant term of ``truth`` is left out.  The ranking metric uses the
    top ``top_k`` entries; value similarity uses each true term's
    coefficient anywhere in the report (0 if absent).
    """
    flags = []
    truth_terms = [(term_key(a, truth.feature_names), c) for a, c in truth.terms if sum(a) > 0 and c != 0]
    truth_terms.sort(key=lambda t: -abs(t[1]))
    keys = [k for k, _ in truth_terms]
    overlap = feature_overlap_ratio(keys, report, top_k)
    rho = ranking_similarity(report.top(top_k), keys)
    if math.isnan(rho):
        flags.append("ranking_similarity undefined (fewer than 2 true terms)")
    method = []
    for k in keys:
        pos = _position(k, report.entries)
        method.append(report.entries[pos].coefficient if pos is not None else 0.0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cos = value_similarity(method, [c for _, c in truth_terms])
    if caught:
        flags.append("value_similarity: zero method vector")
    return MetricBundle(overlap, rho, cos, tuple(flags))


def feature_importance(report: ImportanceReport) -> np.ndarray:
    """Aggregate ``|coefficient|`` of every ranked term touching each variable."""
    agg = np.zeros(len(report.feature_names))
    for e in report.entries:
        for k, a in enumerate(e.index):
            if a:
                agg[k] += abs(e.coefficient)
    return agg


def top_feature(report: ImportanceReport) -> int:
    """Column index of the variable carrying the top-ranked term.

    For an interaction, the variable with the larger aggregate importance
    wins (lowest index on ties).
    """
    if not report.entries:
        raise ValueError("empty importance report has no top feature")
    agg = feature_importance(report)
    cand = [k for k, a in enumerate(report.entries[0].index) if a]
    return max(cand, key=lambda k: (agg[k], -k))


# ---------------------------------------------------------------------------
# Perturbation analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PerturbationRow:
    alpha: float
    feature: str
    mean_degradation: float
    std_error: float
    trials: tuple


def perturbation_analysis(
    train: SupervisedDataset,
    test: SupervisedDataset,
    features: Sequence,
    alpha_levels: Sequence[float],
    trials: int = 10,
    seed: int = 0,
    threads: int = 1,
) -> list[PerturbationRow]:
    """Relative rise in test MSE of a linear regressor when one feature is noised.

    A linear least-squares model is fitted once on clean training data.
    For each feature (column index or name) and level ``alpha``, the test
    column gets ``alpha * N(0, sigma^2)`` noise and the degradation
    ``(MSE_perturbed - MSE_clean) / MSE_clean`` is averaged over ``trials``.
    Every trial draws from its own seed derived from ``(seed, level, feature,
    trial)``, so results do not depend on ``threads``.
    """
    alphas = [float(a) for a in alpha_levels]
    if any(a < 0 or not np.isfinite(a) for a in alphas):
        raise ValueError("alpha levels must be finite and non-negative")
    if trials < 1:
        raise ValueError("trials must be positive")
    cols = [test.column(f) if isinstance(f, str) else int(f) for f in features]
    reg = LinearRegression().fit(train.X, train.y)
    clean = mse(test.y, reg.predict(test.X))
    if clean == 0:
        raise ValueError("clean test MSE is zero; relative degradation undefined")

    jobs = [(ai, fi, t) for ai in range(len(alphas)) for fi in range(len(cols)) for t in range(trials)]

    def run(job):
        ai, fi, t = job
        ss = np.random.SeedSequence([int(seed), ai, fi, t])
        Xp, _ = perturb_feature(test.X, cols[fi], alphas[ai], np.random.default_rng(ss))
        return (mse(test.y, reg.predict(Xp)) - clean) / clean

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                values = list(pool.map(run, jobs))
        else:
            values = [run(j) for j in jobs]

    out = []
    it = iter(values)
    for a in alphas:
        for c in cols:
            vals = np.array([next(it) for _ in range(trials)])
            se = float(vals.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
            out.append(PerturbationRow(a, test.feature_names[c], float(vals.mean()), se, tuple(vals)))
    return out


# ---------------------------------------------------------------------------
# Sparsity / accuracy sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepResult:
    metric: str
    k_values: tuple
    scores: tuple
    terms: tuple

    @property
    def max_fluctuation(self) -> float:
        s = np.asarray(self.scores, dtype=float)
        return float((s.max() - s.min()) / s.min()) if s.size and s.min() > 0 else float("nan")


def sparsity_accuracy_sweep(
    model,
    train: SupervisedDataset,
    test: SupervisedDataset,
    k_values: Sequence[int],
    metric: str = "auc",
    report: Optional[ImportanceReport] = None,
    threads: int = 1,
) -> SweepResult:
    """Score a logistic classifier trained on the top-k ranked monomials.

    Monomials are evaluated in the model's (scaled) input space.  ``k``
    larger than the number of ranked terms is clamped with a warning.
    """
    if metric not in ("auc", "accuracy"):
        raise ValueError("metric must be 'auc' or 'accuracy'")
    for ds in (train, test):
        if not np.all(np.isin(ds.y, (-1.0, 1.0))):
            raise ValueError("sweep needs classification labels in {-1, 1}")
    kernel = getattr(model, "model", model)
    report = report or rank_features(model)
    scaling = getattr(kernel, "scaling", None)
    Ztr = scaling.transform(train.X) if scaling is not None else train.X
    Zte = scaling.transform(test.X) if scaling is not None else test.X
    m = len(report)
    ks = []
    for k in k_values:
        if k < 1:
            raise ValueError("k must be positive")
        if k > m:
            warnings.warn(f"k={k} exceeds the {m} ranked terms; clamped", RuntimeWarning, stacklevel=2)
        ks.append(min(int(k), m))

    def score(k):
        alphas = [e.index for e in report.top(k)]
        clf = LogisticRegression().fit(monomial_features(Ztr, alphas), train.y)
        Fte = monomial_features(Zte, alphas)
        if metric == "auc":
            return roc_auc(test.y, clf.decision_function(Fte))
        return float(np.mean(clf.predict(Fte) == test.y))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(score, ks))
    else:
        scores = [score(k) for k in ks]
    return SweepResult(metric, tuple(ks), tuple(scores), tuple(e.name for e in report.top(max(ks, default=0))))
