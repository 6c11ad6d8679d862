"""Matrices of the linear mixing model X = EA + N and their constraint sets.

Every matrix is column-major in meaning: one pixel per column. Spatial shape
(rows, cols) is carried as metadata only; all math sees n_bands x n.
"""
from typing import Optional, Sequence, Tuple

import chex
import jax.numpy as jnp

from unmix_jax.errors import DimensionMismatch, InvalidMatrix

# Default feasibility tolerances: sum-to-one and non-negativity.
EPS_SUM = 1e-9
EPS_FEAS = 1e-7


def _as_float_matrix(name, data):
    data = jnp.asarray(data, dtype=jnp.float64)
    if data.ndim != 2:
        raise InvalidMatrix(name, f"expected a 2d array, got shape {data.shape}")
    if not bool(jnp.all(jnp.isfinite(data))):
        raise InvalidMatrix(name, "entries must be finite")
    return data


def _as_wavelengths(name, wavelengths, n_bands):
    if wavelengths is None:
        return None
    wavelengths = jnp.asarray(wavelengths, dtype=jnp.float64)
    if wavelengths.shape != (n_bands,):
        raise InvalidMatrix(name, f"expected {n_bands} wavelengths, got shape {wavelengths.shape}")
    return wavelengths


def _as_shape(name, shape, n):
    if shape is None:
        return (1, n)
    rows, cols = (int(s) for s in shape)
    if rows < 1 or cols < 1 or rows * cols != n:
        raise InvalidMatrix(name, f"spatial shape {(rows, cols)} does not hold {n} pixels")
    return rows, cols


@chex.dataclass(frozen=True)
class EndmemberMatrix:
    """Spectral signatures E, array(n_bands, n_endmembers), one endmember per column.

    Full column rank is checked where it matters, by the Cholesky factorization
    in `unmix_jax.subspace.build_transform`.
    """

    data: chex.Array
    wavelengths: Optional[chex.Array] = None
    names: Optional[Tuple[str, ...]] = None

    @classmethod
    def from_array(cls, data, wavelengths=None, names=None):
        data = _as_float_matrix("endmember matrix", data)
        n_bands, m = data.shape
        if m < 1 or n_bands < m:
            raise InvalidMatrix("endmember matrix", f"need 1 <= n_endmembers <= n_bands, got {data.shape}")
        if names is not None:
            names = tuple(str(name) for name in names)
            if len(names) != m:
                raise InvalidMatrix("endmember matrix", f"expected {m} names, got {len(names)}")
        return cls(data=data, wavelengths=_as_wavelengths("endmember matrix", wavelengths, n_bands), names=names)

    @property
    def n_bands(self):
        return self.data.shape[0]

    @property
    def n_endmembers(self):
        return self.data.shape[1]


@chex.dataclass(frozen=True)
class ImageCube:
    """Observations X, array(n_bands, n_pixels), with spatial shape metadata."""

    data: chex.Array
    shape: Tuple[int, int]
    wavelengths: Optional[chex.Array] = None

    @classmethod
    def from_array(cls, data, shape=None, wavelengths=None):
        data = _as_float_matrix("image cube", data)
        n_bands, n = data.shape
        if n < 1 or n_bands < 1:
            raise InvalidMatrix("image cube", f"empty cube of shape {data.shape}")
        return cls(data=data,
                   shape=_as_shape("image cube", shape, n),
                   wavelengths=_as_wavelengths("image cube", wavelengths, n_bands))

    @property
    def n_bands(self):
        return self.data.shape[0]

    @property
    def n_pixels(self):
        return self.data.shape[1]


@chex.dataclass(frozen=True)
class AbundanceMatrix:
    """Fractional abundances A, array(n_endmembers, n_pixels).

    `feasible` is set by producers that verified `column_feasibility`.
    """

    data: chex.Array
    shape: Tuple[int, int]
    feasible: bool = False

    @classmethod
    def from_array(cls, data, shape=None, feasible=False):
        data = _as_float_matrix("abundance matrix", data)
        return cls(data=data, shape=_as_shape("abundance matrix", shape, data.shape[1]), feasible=bool(feasible))

    @property
    def n_endmembers(self):
        return self.data.shape[0]

    @property
    def n_pixels(self):
        return self.data.shape[1]


@chex.dataclass(frozen=True)
class CoefficientMatrix:
    """Subspace coefficients U = DA, or transformed observations Y, array(m, n)."""

    data: chex.Array


@chex.dataclass(frozen=True)
class ConstraintSets:
    """Images of the abundance constraints under the subspace transform.

    b: normal of the hyperplane S = {u : b^T u = 1}.
    half_spaces: array(m, m) whose rows d_i define N_i = {u : d_i^T u >= 0}.
    """

    b: chex.Array
    half_spaces: chex.Array


@chex.dataclass(frozen=True)
class FeasibilityReport:
    max_sum_violation: float
    min_entry: float
    feasible: bool


def validate_dimensions(E: EndmemberMatrix, X: ImageCube):
    """Check that endmembers and observations share the spectral axis."""
    if E.n_bands != X.n_bands:
        raise DimensionMismatch(E.n_bands, X.n_bands)


def column_feasibility(A, eps_sum=EPS_SUM, eps_neg=EPS_FEAS) -> FeasibilityReport:
    """Check the sum-to-one and non-negativity constraints column by column.

    Args:
        A: AbundanceMatrix or array(m, n).
        eps_sum: allowed |1^T a_j - 1|.
        eps_neg: allowed negative excursion of any entry.
    """
    data = A.data if isinstance(A, AbundanceMatrix) else jnp.asarray(A, dtype=jnp.float64)
    max_sum_violation = float(jnp.max(jnp.abs(data.sum(axis=0) - 1.0)))
    min_entry = float(jnp.min(data))
    feasible = max_sum_violation <= eps_sum and min_entry >= -eps_neg
    return FeasibilityReport(max_sum_violation=max_sum_violation, min_entry=min_entry, feasible=feasible)


def simplex_vertices(m: int, shape: Optional[Sequence[int]] = None) -> AbundanceMatrix:
    """Identity abundances: pixel j is pure endmember j."""
    return AbundanceMatrix.from_array(jnp.eye(m), shape=shape, feasible=True)
