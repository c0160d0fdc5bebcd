"""Depth-limited rule trees over top-ranked monomial terms.

Trees split on term values (products of raw embedded inputs such as
``x2[t]*x3[t]``), go left when ``value <= threshold`` and label leaves
``1`` (abnormal) or ``-1`` (normal).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .polycore import monomial_features

NORMAL, ABNORMAL = -1, 1
_LABEL_TEXT = {NORMAL: "normal", ABNORMAL: "abnormal"}


@dataclass(frozen=True)
class Node:
    label: int
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["Node"] = None
    right: Optional["Node"] = None
    n_samples: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass(frozen=True)
class WarningTree:
    root: Node
    depth: int
    pool_names: tuple
    pool_indices: tuple = ()

    def term_values(self, X) -> np.ndarray:
        """Evaluate the pool monomials on raw embedded inputs."""
        if not self.pool_indices:
            raise ValueError("tree has no pool multi-indices; pass term values directly")
        return monomial_features(X, self.pool_indices)

    def predict_values(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        out = np.empty(Z.shape[0], dtype=int)
        for i, row in enumerate(Z):
            node = self.root
            while not node.is_leaf:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.label
        return out

    def predict(self, X) -> np.ndarray:
        return self.predict_values(self.term_values(X))

    def max_path_length(self) -> int:
        def walk(node):
            return 0 if node.is_leaf else 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)

    def used_features(self) -> set:
        found = set()

        def walk(node):
            if not node.is_leaf:
                found.add(node.feature)
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return found


def _majority(y: np.ndarray) -> int:
    pos = int(np.sum(y == ABNORMAL))
    # ties go to the alarm label
    return ABNORMAL if pos * 2 >= y.size else NORMAL


def _gini(pos, total):
    p = pos / total
    return 2.0 * p * (1.0 - p)


def _short_threshold(lo: float, hi: float) -> float:
    """Midpoint of (lo, hi), rounded to 6 significant digits when that keeps lo <= t < hi."""
    mid = 0.5 * (lo + hi)
    short = float(f"{mid:.6g}")
    return short if lo <= short < hi else mid


def _best_split(Z, y, min_leaf):
    n = y.size
    pos_total = int(np.sum(y == ABNORMAL))
    i = np.arange(min_leaf, n - min_leaf + 1)
    if i.size == 0:
        return None
    best = None
    for j in range(Z.shape[1]):
        order = np.argsort(Z[:, j], kind="stable")
        zs = Z[order, j]
        cum_pos = np.cumsum(y[order] == ABNORMAL)
        valid = zs[i - 1] != zs[np.minimum(i, n - 1)]
        if not valid.any():
            continue
        ii = i[valid]
        lp = cum_pos[ii - 1]
        score = (ii * _gini(lp, ii) + (n - ii) * _gini(pos_total - lp, n - ii)) / n
        k = int(np.argmin(score))
        if best is None or score[k] < best[0] - 1e-15:
            best = (float(score[k]), j, _short_threshold(zs[ii[k] - 1], zs[ii[k]]))
    return best


def _grow(Z, y, depth, min_leaf):
    label = _majority(y)
    pos = int(np.sum(y == ABNORMAL))
    if depth == 0 or pos in (0, y.size) or y.size < 2 * min_leaf:
        return Node(label, n_samples=y.size)
    best = _best_split(Z, y, min_leaf)
    if best is None or best[0] >= _gini(pos, y.size) - 1e-15:
        return Node(label, n_samples=y.size)
    _, j, thr = best
    mask = Z[:, j] <= thr
    return Node(
        label,
        feature=j,
        threshold=thr,
        left=_grow(Z[mask], y[mask], depth - 1, min_leaf),
        right=_grow(Z[~mask], y[~mask], depth - 1, min_leaf),
        n_samples=y.size,
    )


def build_warning_tree(Z, y, pool_names: Sequence[str], depth: int, min_leaf: int = 5,
                       pool_indices: Sequence = ()) -> WarningTree:
    """Greedy Gini tree restricted to the pool columns of ``Z``.

    ``Z`` holds one column per pool term (see ``term_values``).  Growth
    stops at ``depth``, at pure nodes, when a child would hold fewer than
    ``min_leaf`` rows, or when no split lowers impurity.  Split ties go to
    the earlier pool term, then the smaller threshold.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if Z.shape[0] != y.size:
        raise ValueError("Z and y must have the same number of rows")
    if Z.shape[1] != len(pool_names) or not pool_names:
        raise ValueError("need a non-empty pool with one name per column")
    if not np.all(np.isin(y, (NORMAL, ABNORMAL))):
        raise ValueError("labels must be -1 (normal) or 1 (abnormal)")
    if depth < 0 or min_leaf < 1:
        raise ValueError("depth must be >= 0 and min_leaf >= 1")
    if y.size == 0:
        raise ValueError("no training rows")
    root = _grow(Z, y, int(depth), int(min_leaf))
    return WarningTree(root, int(depth), tuple(pool_names), tuple(tuple(a) for a in pool_indices))


def warning_pool(report, size: int) -> tuple[tuple, tuple]:
    """Names and multi-indices of the top ``size`` ranked terms."""
    top = report.top(size)
    if not top:
        raise ValueError("importance report is empty; no terms for the pool")
    return tuple(e.name for e in top), tuple(e.index for e in top)


@dataclass(frozen=True)
class WarningMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int
    flags: tuple = ()

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("precision", "recall", "f1", "accuracy", "tp", "fp", "tn", "fn")}


def warning_metrics(y_true, y_pred) -> WarningMetrics:
    """Class-1 precision, recall and F1 plus accuracy from confusion counts.

    An undefined ratio (zero denominator) is reported as 0 and flagged.
    """
    t = np.asarray(y_true) == ABNORMAL
    p = np.asarray(y_pred) == ABNORMAL
    if t.size == 0:
        raise ValueError("empty evaluation set")
    if t.shape != p.shape:
        raise ValueError("truth and predictions differ in length")
    tp, fp = int(np.sum(t & p)), int(np.sum(~t & p))
    tn, fn = int(np.sum(~t & ~p)), int(np.sum(t & ~p))
    flags = []
    precision = tp / (tp + fp) if tp + fp else 0.0
    if tp + fp == 0:
        flags.append("precision undefined: no positive predictions")
    recall = tp / (tp + fn) if tp + fn else 0.0
    if tp + fn == 0:
        flags.append("recall undefined: no positive labels")
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    accuracy = (tp + tn) / t.size
    return WarningMetrics(precision, recall, f1, accuracy, tp, fp, tn, fn, tuple(flags))


def evaluate_warning(tree: WarningTree, X=None, y=None, Z=None) -> WarningMetrics:
    """Metrics of ``tree`` on raw inputs ``X`` or precomputed term values ``Z``."""
    if y is None:
        raise ValueError("labels are required")
    pred = tree.predict_values(Z) if Z is not None else tree.predict(X)
    return warning_metrics(y, pred)


@dataclass(frozen=True)
class Episode:
    start: int
    length: int
    transition: bool


def consecutive_warning_horizon(y_pred, y_true) -> list[Episode]:
    """Maximal runs where prediction and truth are both abnormal.

    ``length`` is the number of consecutive steps warned correctly (T_n);
    ``transition`` marks runs entered from a normal ground-truth state.
    """
    p = np.asarray(y_pred) == ABNORMAL
    t = np.asarray(y_true) == ABNORMAL
    if p.shape != t.shape:
        raise ValueError("predictions and truth differ in length")
    hit = p & t
    out = []
    i, n = 0, hit.size
    while i < n:
        if hit[i]:
            j = i
            while j < n and hit[j]:
                j += 1
            out.append(Episode(i, j - i, bool(i > 0 and not t[i - 1])))
            i = j
        else:
            i += 1
    return out


# ---------------------------------------------------------------------------
# Rule text
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    short = f"{x:.6g}"
    return short if float(short) == x else repr(x)


def render_rules(tree: WarningTree) -> str:
    """One line per root-to-leaf path, left branch first."""
    lines = []

    def walk(node, conds):
        if node.is_leaf:
            prefix = "IF " + " AND ".join(conds) + " " if conds else ""
            lines.append(f"{prefix}THEN {_LABEL_TEXT[node.label]}")
            return
        name = tree.pool_names[node.feature]
        thr = _fmt(node.threshold)
        walk(node.left, conds + [f"{name} <= {thr}"])
        walk(node.right, conds + [f"{name} > {thr}"])

    walk(tree.root, [])
    return "\n".join(lines) + "\n"


_COND = re.compile(r"^(?P<name>.+?) (?P<op><=|>) (?P<thr>\S+)$")


def parse_rules(text: str, pool_names: Sequence[str], pool_indices: Sequence = ()) -> WarningTree:
    """Rebuild a tree from ``render_rules`` output."""
    pool_names = tuple(pool_names)
    paths = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if " THEN " in f" {line}":
            head, _, label_text = line.rpartition("THEN ")
        else:
            raise ValueError(f"rule line without THEN: {raw!r}")
        label_text = label_text.strip()
        inv = {v: k for k, v in _LABEL_TEXT.items()}
        if label_text not in inv:
            raise ValueError(f"unknown label {label_text!r}")
        head = head.strip()
        conds = []
        if head:
            if not head.startswith("IF "):
                raise ValueError(f"rule must start with IF: {raw!r}")
            for part in head[3:].split(" AND "):
                m = _COND.match(part.strip())
                if not m:
                    raise ValueError(f"cannot parse condition {part!r}")
                if m["name"] not in pool_names:
                    raise ValueError(f"term {m['name']!r} is not in the pool")
                conds.append((pool_names.index(m["name"]), m["op"], float(m["thr"])))
        paths.append((conds, inv[label_text]))
    if not paths:
        raise ValueError("no rules found")

    def build(subset, level):
        if len(subset) == 1 and len(subset[0][0]) == level:
            return Node(subset[0][1])
        feats = {(c[level][0], c[level][2]) for c, _ in subset if len(c) > level}
        if len(feats) != 1 or any(len(c) <= level for c, _ in subset):
            raise ValueError("rules do not form a binary tree")
        (j, thr), = feats
        left = [p for p in subset if p[0][level][1] == "<="]
        right = [p for p in subset if p[0][level][1] == ">"]
        if not left or not right:
            raise ValueError("rules do not form a binary tree")
        return Node(ABNORMAL, feature=j, threshold=thr, left=build(left, level + 1), right=build(right, level + 1))

    root = build(paths, 0)
    tree = WarningTree(root, 0, pool_names, tuple(tuple(a) for a in pool_indices))
    return WarningTree(root, tree.max_path_length(), pool_names, tree.pool_indices)
