"""Per-fold standardization of physicochemical columns.

Only physicochemical-kind columns are z-scored; auxiliary and contextual
columns pass through untouched. Statistics come from the stated fit rows
alone, which is what keeps fold hygiene auditable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from ..records import KIND_PHYSICO, FeatureMatrix


@dataclass
class Scaler:
    """Column means and SDs fitted on one index set."""

    column_indices: list[int]
    means: np.ndarray
    sds: np.ndarray
    n_fit: int

    def transform(self, matrix: FeatureMatrix) -> FeatureMatrix:
        """Standardize the fitted columns; zero-SD columns only center.

        Missing cells stay missing.
        """
        values = matrix.values.copy()
        for pos, col in enumerate(self.column_indices):
            centered = values[:, col] - self.means[pos]
            sd = self.sds[pos]
            values[:, col] = centered / sd if sd > 0 else centered
        return FeatureMatrix(
            values=values,
            missing_mask=matrix.missing_mask.copy(),
            columns=list(matrix.columns),
            row_ids=list(matrix.row_ids),
            category_levels=dict(matrix.category_levels),
        )

    def to_dict(self) -> dict:
        return {
            "column_indices": list(self.column_indices),
            "means": [float(m) for m in self.means],
            "sds": [float(s) for s in self.sds],
            "n_fit": self.n_fit,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scaler":
        return cls(
            column_indices=list(data["column_indices"]),
            means=np.array(data["means"], dtype=float),
            sds=np.array(data["sds"], dtype=float),
            n_fit=int(data["n_fit"]),
        )


def fit_fold_scaler(matrix: FeatureMatrix, fit_indices) -> Scaler:
    """Fit means and population SDs of physicochemical columns using the
    non-missing values at fit_indices only."""
    idx = np.asarray(fit_indices, dtype=np.int64)
    if idx.size == 0:
        raise ParameterError("fit_indices must be non-empty")
    cols = matrix.kind_indices(KIND_PHYSICO)
    means = np.zeros(len(cols))
    sds = np.zeros(len(cols))
    for pos, col in enumerate(cols):
        observed = matrix.values[idx, col]
        observed = observed[~(matrix.missing_mask[idx, col] | np.isnan(observed))]
        if observed.size:
            means[pos] = float(observed.mean())
            sds[pos] = float(observed.std())
    return Scaler(column_indices=cols, means=means, sds=sds, n_fit=int(idx.size))


def impute_for_linear(matrix: FeatureMatrix, fit_indices) -> FeatureMatrix:
    """Fill missing cells with column means over fit_indices (0 when a
    column has no observed fit value); for linear models that cannot route
    missing values natively. Apply after scaling so physicochemical fills
    are 0-centered."""
    idx = np.asarray(fit_indices, dtype=np.int64)
    if idx.size == 0:
        raise ParameterError("fit_indices must be non-empty")
    values = matrix.values.copy()
    missing = matrix.missing_mask | np.isnan(values)
    for col in range(matrix.n_cols):
        gaps = missing[:, col]
        if not gaps.any():
            continue
        observed = values[idx, col][~missing[idx, col]]
        fill = float(observed.mean()) if observed.size else 0.0
        values[gaps, col] = fill
    return FeatureMatrix(
        values=values,
        missing_mask=np.zeros_like(matrix.missing_mask),
        columns=list(matrix.columns),
        row_ids=list(matrix.row_ids),
        category_levels=dict(matrix.category_levels),
    )
