"""End-to-end fitting: scale, pick centers, fit weights, expand, threshold."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .polycore import (
    KernelModel,
    MinMaxScaling,
    SparsePolynomial,
    build_centers,
    expand_to_monomials,
    kernel_matrix,
)
from .solver import AdmmConfig, FitReport, fit_weights, get_loss
from .timeseries import SupervisedDataset


@dataclass(frozen=True)
class FittedIPL:
    model: KernelModel
    sparse: SparsePolynomial
    report: FitReport

    @property
    def threshold(self) -> float:
        return self.sparse.threshold

    def predict(self, X, use_kernel: bool = False) -> np.ndarray:
        if use_kernel:
            return self.model.predict(X)
        return self.sparse(X)


def fit_ipl(
    data: SupervisedDataset,
    degree: int = 2,
    loss: str = "squared",
    threshold: float = 0.0,
    center_strategy: str = "first",
    center_seed: Optional[int] = None,
    scale: bool = True,
    admm: Optional[AdmmConfig] = None,
    method: str = "auto",
    threads: int = 1,
) -> FittedIPL:
    """Fit an interpretable polynomial model on an embedded dataset.

    Squared loss goes through the pseudo-inverse unless ``method='admm'``;
    hinge and logistic losses always use ADMM.  Coefficients of the sparse
    predictor live in the scaled input space when ``scale`` is on.
    """
    loss_fn = get_loss(loss)
    X = data.X
    scaling = MinMaxScaling.fit(X) if scale else None
    Z = scaling.transform(X) if scaling is not None else X
    centers = build_centers(Z, degree, center_strategy, center_seed)
    A = kernel_matrix(Z, centers, degree, threads=threads)
    u, report = fit_weights(A, data.y, loss_fn, admm, method)
    model = KernelModel(
        degree=degree,
        centers=centers,
        weights=u,
        feature_names=data.feature_names,
        loss=loss_fn.kind,
        scaling=scaling,
        lag_spec=data.lag_spec,
    )
    sparse = expand_to_monomials(model).thresholded(threshold)
    return FittedIPL(model, sparse, report)
