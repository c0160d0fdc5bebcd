"""ADMM fitting of kernel weights under squared, hinge and logistic loss.

The problem is ``min_u (1/T) sum_i phi((A u)_i, y_i)``, split as
``min f(v) s.t. A u - v = 0`` and iterated as

    u <- (beta A'A + alpha I)^-1 [alpha u + beta A'v - A'w]
    v <- argmin_v f(v) - <w, v> + beta/2 ||A u - v||^2   (coordinate-wise)
    w <- w + beta (A u - v)

The v-step is a closed form for squared loss, Newton with a bisection
safeguard for logistic loss, and the exact proximal map for hinge loss.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.linalg import LinAlgError
from scipy.special import expit

LOSSES = ("squared", "hinge", "logistic")

DIVERGENCE_LIMIT = 1e12


class SolverDivergence(RuntimeError):
    """Raised when ADMM residuals blow up; carries the partial report."""

    def __init__(self, message: str, report: "FitReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class LossFunction:
    kind: str

    def __post_init__(self):
        if self.kind not in LOSSES:
            raise ValueError(f"unknown loss {self.kind!r}; expected one of {LOSSES}")

    @property
    def classification(self) -> bool:
        return self.kind != "squared"

    def value(self, v, y):
        v = np.asarray(v, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "squared":
            return (v - y) ** 2
        if self.kind == "hinge":
            return np.maximum(0.0, 1.0 - y * v)
        return np.logaddexp(0.0, -y * v)

    def derivative(self, v, y):
        """First derivative in v (a subgradient choice of 0 at the hinge kink)."""
        v = np.asarray(v, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "squared":
            return 2.0 * (v - y)
        if self.kind == "hinge":
            return np.where(y * v < 1.0, -y, 0.0)
        return y * (expit(y * v) - 1.0)

    def second_derivative(self, v, y):
        v = np.asarray(v, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "squared":
            return np.full(np.broadcast(v, y).shape, 2.0)
        if self.kind == "hinge":
            return np.zeros(np.broadcast(v, y).shape)
        s = expit(y * v)
        return s * (1.0 - s)

    def objective(self, scores, y) -> float:
        return float(np.mean(self.value(scores, y)))


def get_loss(loss) -> LossFunction:
    return loss if isinstance(loss, LossFunction) else LossFunction(str(loss).lower())


@dataclass(frozen=True)
class AdmmConfig:
    """ADMM settings.

    ``beta=None`` means ``1/T`` and ``alpha=None`` means
    ``1e-14 * beta * ||A||_2^2``; see the README for why these differ
    from a unit penalty and a trace-scaled proximal term.
    """

    alpha: Optional[float] = None
    beta: Optional[float] = None
    max_iters: int = 5000
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    newton_max_iters: int = 50
    newton_tol: float = 1e-12
    seed: Optional[int] = None

    def __post_init__(self):
        for name in ("alpha", "beta"):
            val = getattr(self, name)
            if val is not None and not (val > 0 and np.isfinite(val)):
                raise ValueError(f"{name} must be positive, got {val}")
        for name in ("tol_primal", "tol_dual", "newton_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1 or self.newton_max_iters < 1:
            raise ValueError("iteration limits must be positive")

    def resolve(self, A: np.ndarray, smax: Optional[float] = None) -> tuple[float, float]:
        """Concrete ``(alpha, beta)`` for matrix ``A`` (``smax``: its largest singular value)."""
        T, n = A.shape
        beta = self.beta if self.beta is not None else 1.0 / T
        if self.alpha is not None:
            alpha = self.alpha
        else:
            if smax is None:
                smax = float(np.linalg.norm(A, 2)) if A.size else 0.0
            alpha = 1e-14 * beta * smax**2
            alpha = alpha if alpha > 0 else 1e-14 * beta
        return alpha, beta


@dataclass
class FitReport:
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    objective_trace: np.ndarray = field(repr=False)
    primal_trace: np.ndarray = field(repr=False)
    dual_trace: np.ndarray = field(repr=False)
    wall_time: float = 0.0
    method: str = "admm"
    alpha: float = float("nan")
    beta: float = float("nan")

    @property
    def objective(self) -> float:
        return float(self.objective_trace[-1]) if len(self.objective_trace) else float("nan")

    def summary(self) -> dict:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "converged": self.converged,
            "objective": self.objective,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "alpha": self.alpha,
            "beta": self.beta,
        }


# ---------------------------------------------------------------------------
# Individual updates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class USystem:
    """SVD form of ``beta A'A + alpha I``, reused across iterations.

    Working from the SVD of ``A`` rather than a Cholesky factor of
    ``A'A`` keeps the solve accurate when ``alpha`` is tiny next to the
    spread of singular values.
    """

    Vt: np.ndarray
    denom: np.ndarray
    alpha: float

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        coef = self.Vt @ rhs
        out = self.Vt.T @ (coef / self.denom)
        if self.Vt.shape[0] < self.Vt.shape[1]:
            # directions outside the row space of A only see alpha
            out += (rhs - self.Vt.T @ coef) / self.alpha
        return out


def svd_parts(A):
    """Thin SVD ``(singular values, Vt)`` of ``A``."""
    try:
        _, sv, Vt = np.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)
    except LinAlgError as exc:
        raise LinAlgError(f"u-system factorization failed: {exc}") from exc
    return sv, Vt


def factor_u_system(A, alpha: float, beta: float, parts=None) -> USystem:
    """Prepare repeated solves with ``beta A'A + alpha I``."""
    if not alpha > 0:
        raise LinAlgError("u-system needs alpha > 0")
    sv, Vt = parts if parts is not None else svd_parts(A)
    return USystem(Vt, beta * sv**2 + alpha, float(alpha))


def u_update(u_prev, v, w, A, alpha: float, beta: float, factor=None) -> np.ndarray:
    """Proximal u-step ``(beta A'A + alpha I)^-1 [alpha u + beta A'v - A'w]``."""
    A = np.asarray(A, dtype=float)
    if factor is None:
        factor = factor_u_system(A, alpha, beta)
    rhs = alpha * np.asarray(u_prev, dtype=float) + A.T @ (beta * np.asarray(v) - np.asarray(w))
    return factor.solve(rhs)


def _logistic_gradient(v, y, b, T, beta):
    return y * (expit(y * v) - 1.0) / T + beta * (v - b)


def v_update_newton(b, y, loss, T: int, beta: float, max_iters: int = 50, tol: float = 1e-12):
    """Solve ``phi'(v_i, y_i)/T + beta (v_i - b_i) = 0`` for every coordinate."""
    loss = get_loss(loss)
    b = np.asarray(b, dtype=float)
    y = np.asarray(y, dtype=float)
    if loss.kind == "squared":
        return (2.0 * y / T + beta * b) / (2.0 / T + beta)
    if loss.kind != "logistic":
        raise ValueError("Newton v-update needs a twice differentiable loss")

    v = b.copy()
    active = np.ones(v.shape, dtype=bool)
    broken = np.zeros(v.shape, dtype=bool)
    for _ in range(max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        va, ya, ba = v[idx], y[idx], b[idx]
        s = expit(ya * va)
        step = (ya * (s - 1.0) / T + beta * (va - ba)) / (s * (1.0 - s) / T + beta)
        finite = np.isfinite(step)
        v[idx[finite]] = va[finite] - step[finite]
        broken[idx[~finite]] = True
        done = ~finite | (np.abs(step) <= tol * (1.0 + np.abs(va)))
        active[idx[done]] = False

    # bisection fallback: |phi'| < 1 puts the root within 1/(T beta) of b
    bad = active | broken | ~np.isfinite(v)
    if bad.any():
        lo = b[bad] - 1.0 / (T * beta)
        hi = b[bad] + 1.0 / (T * beta)
        yb, bb = y[bad], b[bad]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            g = _logistic_gradient(mid, yb, bb, T, beta)
            lo = np.where(g < 0, mid, lo)
            hi = np.where(g < 0, hi, mid)
        v[bad] = 0.5 * (lo + hi)
    return v


def v_update_prox_hinge(b, y, T: int, beta: float) -> np.ndarray:
    """Exact minimizer of ``max(0, 1 - y v)/T + beta/2 (v - b)^2`` per coordinate."""
    b = np.asarray(b, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("hinge loss needs labels in {-1, 1}")
    mu = 1.0 / (T * beta)
    a = y * b
    return np.where(a >= 1.0, b, np.where(a <= 1.0 - mu, b + mu * y, y))


def w_update(w, A, u_next, v_next, beta: float) -> np.ndarray:
    """Dual ascent step ``w + beta (A u - v)``."""
    A = np.asarray(A, dtype=float)
    return np.asarray(w, dtype=float) + beta * (A @ u_next - np.asarray(v_next, dtype=float))


def fit_pinv(A, y, rcond: float = 1e-10) -> np.ndarray:
    """Minimum-norm least squares via a truncated SVD."""
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
        raise ValueError("A and y must be finite")
    if A.shape[0] != y.shape[0]:
        raise ValueError(f"A has {A.shape[0]} rows but y has {y.shape[0]} entries")
    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    if sv.size == 0 or sv[0] == 0:
        return np.zeros(A.shape[1])
    keep = sv > rcond * sv[0]
    return Vt[keep].T @ ((U[:, keep].T @ y) / sv[keep])


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def _v_step(b, y, loss, T, beta, cfg):
    if loss.kind == "hinge":
        return v_update_prox_hinge(b, y, T, beta)
    return v_update_newton(b, y, loss, T, beta, cfg.newton_max_iters, cfg.newton_tol)


def fit_admm(A, y, loss="squared", cfg: Optional[AdmmConfig] = None):
    """Run ADMM from ``u = v = w = 0``.

    Stops once ``||A u - v|| <= tol_primal sqrt(T)`` and
    ``||v_new - v_old|| <= tol_dual sqrt(T)``, or after ``max_iters``.

    Returns
    -------
    (u, FitReport)
    """
    cfg = cfg or AdmmConfig()
    loss = get_loss(loss)
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
        raise ValueError("A and y must be finite")
    if A.ndim != 2 or A.shape[0] != y.size:
        raise ValueError(f"shape mismatch: A {A.shape}, y {y.shape}")
    if loss.classification and not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError(f"{loss.kind} loss needs labels in {{-1, 1}}")
    T, n = A.shape
    if T < n:
        warnings.warn(f"fewer samples ({T}) than kernel centers ({n})", RuntimeWarning, stacklevel=2)

    start = time.perf_counter()
    parts = svd_parts(A)
    alpha, beta = cfg.resolve(A, float(parts[0][0]) if parts[0].size else 0.0)
    factor = factor_u_system(A, alpha, beta, parts)
    u = np.zeros(n)
    v = np.zeros(T)
    w = np.zeros(T)
    scale = np.sqrt(T)
    objectives, primals, duals = [], [], []
    converged = False

    def report(k):
        return FitReport(
            iterations=k,
            primal_residual=primals[-1] if primals else float("nan"),
            dual_residual=duals[-1] if duals else float("nan"),
            converged=converged,
            objective_trace=np.array(objectives),
            primal_trace=np.array(primals),
            dual_trace=np.array(duals),
            wall_time=time.perf_counter() - start,
            method="admm",
            alpha=alpha,
            beta=beta,
        )

    for k in range(1, cfg.max_iters + 1):
        u = u_update(u, v, w, A, alpha, beta, factor)
        Au = A @ u
        v_new = _v_step(Au + w / beta, y, loss, T, beta, cfg)
        w = w + beta * (Au - v_new)
        primal = float(np.linalg.norm(Au - v_new))
        change = float(np.linalg.norm(v_new - v))
        v = v_new
        objectives.append(loss.objective(Au, y))
        primals.append(primal)
        duals.append(beta * change)
        if not (np.isfinite(primal) and primal < DIVERGENCE_LIMIT and np.all(np.isfinite(u))):
            raise SolverDivergence(f"ADMM diverged at iteration {k} (primal residual {primal:.3g})", report(k))
        if primal <= cfg.tol_primal * scale and change <= cfg.tol_dual * scale:
            converged = True
            break
    return u, report(k)


def fit_weights(A, y, loss="squared", cfg: Optional[AdmmConfig] = None, method: str = "auto"):
    """Fit kernel weights; squared loss uses the pseudo-inverse unless ``method='admm'``."""
    loss = get_loss(loss)
    if method not in ("auto", "pinv", "admm"):
        raise ValueError(f"unknown method {method!r}")
    if method == "pinv" or (method == "auto" and loss.kind == "squared"):
        if loss.kind != "squared":
            raise ValueError("the pseudo-inverse path only applies to squared loss")
        start = time.perf_counter()
        u = fit_pinv(A, y)
        rep = FitReport(
            iterations=0,
            primal_residual=0.0,
            dual_residual=0.0,
            converged=True,
            objective_trace=np.array([loss.objective(np.asarray(A) @ u, y)]),
            primal_trace=np.array([]),
            dual_trace=np.array([]),
            wall_time=time.perf_counter() - start,
            method="pinv",
        )
        return u, rep
    return fit_admm(A, y, loss, cfg)
