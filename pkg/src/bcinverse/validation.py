"""Input validation helpers.

scikit-learn's ``check_array`` refuses complex input, so the package keeps its
own small set of checks for complex matrices and sampled signals.
"""

from __future__ import annotations

import numbers

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def check_positive(value, name, *, integer=False):
    """Return ``value`` after checking it is a finite positive scalar."""
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        raise ValidationError(f"{name} must be a {'positive integer' if integer else 'positive real'}, got {value!r}")
    if not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be positive and finite, got {value!r}")
    return value


def check_complex_matrix(a, name, *, shape=None, square=False):
    """Coerce ``a`` to a finite 2-D complex array.

    Parameters
    ----------
    a : array_like
        Candidate matrix.
    name : str
        Used in error messages.
    shape : tuple of int or None, optional
        Required shape; ``None`` entries are wildcards.
    square : bool, optional
        Require a square matrix.

    Returns
    -------
    numpy.ndarray
        Complex128 copy-free view when possible.
    """
    arr = np.asarray(a, dtype=complex)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {arr.shape}")
    if shape is not None:
        for got, want in zip(arr.shape, shape):
            if want is not None and got != want:
                raise ValidationError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def check_samples(values, n_samples, dim, name):
    """Coerce sampled vector values to shape ``(n_samples, dim)``."""
    arr = np.asarray(values, dtype=complex)
    if arr.ndim == 1 and dim == 1:
        arr = arr[:, None]
    if arr.shape != (n_samples, dim):
        raise ValidationError(f"{name} must have shape ({n_samples}, {dim}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def check_same_grid(a, b, what="grids"):
    """Reject two time grids that do not coincide."""
    if a.n != b.n or not np.isclose(a.T, b.T, rtol=1e-13, atol=0.0):
        raise ValidationError(f"{what} differ: (T={a.T}, n={a.n}) vs (T={b.T}, n={b.n})")
