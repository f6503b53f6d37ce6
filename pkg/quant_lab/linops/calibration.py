from functools import cached_property

import numpy as np

from quant_lab.utils.errors import DimensionMismatch, NonFiniteEntry


class CalibrationMatrix:
    """
    Read-only m x N calibration matrix (rows are samples, columns are features).
    """

    def __init__(self, entries, name="X"):
        data = np.array(entries, dtype=np.float64, copy=True)
        if data.ndim != 2:
            raise DimensionMismatch(f"{name} must be two-dimensional, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            bad = np.argwhere(~np.isfinite(data))[0]
            raise NonFiniteEntry(f"{name} has a non-finite entry at row {bad[0]}, column {bad[1]}")
        data.flags.writeable = False
        self.data = data
        self.name = name

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @cached_property
    def column_norms(self):
        norms = np.linalg.norm(self.data, axis=0)
        norms.flags.writeable = False
        return norms

    @cached_property
    def frobenius_norm_sq(self):
        return float(np.sum(self.data**2))

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.data
        return self.data.astype(dtype)

    def __repr__(self):
        return f"CalibrationMatrix({self.name}, {self.rows}x{self.cols})"


def as_array(X):
    """Plain float64 view of a CalibrationMatrix or array-like."""
    if isinstance(X, CalibrationMatrix):
        return X.data
    return np.asarray(X, dtype=np.float64)


def as_calibration(X, name="X"):
    if isinstance(X, CalibrationMatrix):
        return X
    return CalibrationMatrix(X, name=name)
