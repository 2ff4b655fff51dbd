"""Feature discretization for histogram tree growing.

Each column gets at most max_bins − 1 value bins plus one reserved missing
bin. Edges come from the training data only; a non-missing cell lands in the
bin b satisfying edges[b−1] < value ≤ edges[b], so re-binning new data with
stored edges reproduces training-time routing exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyInputError, ParameterError, SchemaError
from ..records import FeatureMatrix


@dataclass
class BinnedMatrix:
    """Integer bin codes plus the per-column edges that produced them."""

    bin_indices: np.ndarray
    bin_edges: list[np.ndarray]
    columns: list[tuple[str, str]]

    @property
    def n_rows(self) -> int:
        return self.bin_indices.shape[0]

    @property
    def n_cols(self) -> int:
        return self.bin_indices.shape[1]

    @property
    def total_bins(self) -> np.ndarray:
        """Per-column bin count including the trailing missing bin."""
        return np.array([len(e) + 2 for e in self.bin_edges], dtype=np.int32)

    def missing_bin(self, col: int) -> int:
        return len(self.bin_edges[col]) + 1

    def take(self, indices) -> "BinnedMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        return BinnedMatrix(
            bin_indices=self.bin_indices[idx].copy(),
            bin_edges=[e.copy() for e in self.bin_edges],
            columns=list(self.columns),
        )


def _column_edges(values: np.ndarray, max_bins: int) -> np.ndarray:
    """Sorted cut points giving at most max_bins − 1 value bins."""
    if values.size == 0:
        return np.empty(0, dtype=float)
    uniques = np.unique(values)
    if uniques.size <= max_bins - 1:
        return (uniques[1:] + uniques[:-1]) / 2.0
    value_bins = max_bins - 1
    probs = np.arange(1, value_bins) / value_bins
    return np.unique(np.quantile(values, probs))


def _digitize(values: np.ndarray, missing: np.ndarray, edges: np.ndarray) -> np.ndarray:
    codes = np.searchsorted(edges, values, side="left").astype(np.int16)
    codes[missing] = len(edges) + 1
    return codes


def bin_features(matrix: FeatureMatrix, max_bins: int) -> BinnedMatrix:
    """Fit quantile edges on the matrix and encode it.

    Columns with few distinct values get one bin per value (edges at the
    midpoints); denser columns get deduplicated quantile edges. All-missing
    columns have no edges and every cell in the missing bin.
    """
    if not 2 <= max_bins <= 256:
        raise ParameterError("max_bins must lie in [2, 256]")
    if matrix.n_rows == 0 or matrix.n_cols == 0:
        raise EmptyInputError("nothing to bin")
    missing = matrix.missing_mask | np.isnan(matrix.values)
    edges = [
        _column_edges(matrix.values[~missing[:, j], j], max_bins)
        for j in range(matrix.n_cols)
    ]
    codes = np.column_stack(
        [_digitize(matrix.values[:, j], missing[:, j], edges[j]) for j in range(matrix.n_cols)]
    )
    return BinnedMatrix(bin_indices=codes, bin_edges=edges, columns=list(matrix.columns))


def apply_bins(matrix: FeatureMatrix, reference: BinnedMatrix) -> BinnedMatrix:
    """Encode new rows with a previously fitted binning."""
    if [n for n, _ in matrix.columns] != [n for n, _ in reference.columns]:
        raise SchemaError("columns do not match the fitted binning")
    missing = matrix.missing_mask | np.isnan(matrix.values)
    codes = np.column_stack(
        [
            _digitize(matrix.values[:, j], missing[:, j], reference.bin_edges[j])
            for j in range(matrix.n_cols)
        ]
    )
    return BinnedMatrix(
        bin_indices=codes,
        bin_edges=[e.copy() for e in reference.bin_edges],
        columns=list(reference.columns),
    )
