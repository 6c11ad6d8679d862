"""Subspace transform of the fully constrained least squares problem.

With E^T E = D^T D (D upper triangular from Cholesky), the substitution U = DA
turns

    min_A ||X - EA||_F^2   s.t.  A >= 0,  1^T A = 1^T

into the Euclidean projection of Y = D^{-T} E^T X onto S ∩ N, where

    S   = {u : b^T u = 1},       b^T = 1^T D^{-1}
    N_i = {u : d_i^T u >= 0},    d_i^T the i-th row of D^{-1}.

Everything the projectors need per half-space (s_i, f_i, ||P d_i||) is
computed once here. The orthogonal projector P = I - b b^T / ||b||^2 onto
S - {c} is never formed.
"""
import logging

import chex
import jax.numpy as jnp
from jax import jit
from jax.scipy.linalg import solve_triangular

from unmix_jax.errors import DegenerateProblem, RankDeficient, ShapeMismatch
from unmix_jax.model import (AbundanceMatrix, CoefficientMatrix, ConstraintSets, EndmemberMatrix, ImageCube,
                             validate_dimensions)

logger = logging.getLogger(__name__)

# Relative Cholesky pivot threshold (scaled by trace(E^T E) / m).
RANK_TOL = 1e-12


@chex.dataclass
class SubspaceTransform:
    """Lightweight container for the subspace transform and its precomputations.

    Attributes:
        D: (m, m) upper triangular, D^T D = E^T E.
        D_inv: (m, m) explicit inverse of D; its rows are the half-space normals d_i.
        b: (m,) hyperplane normal, b^T = 1^T D^{-1}.
        c: (m,) anchor point b / ||b||^2 of the hyperplane.
        s: (m, m) row i is the unit direction s_i = P d_i / ||P d_i||.
        f: (m,) offsets f_i = -d_i^T c / ||P d_i||.
        p_norms: (m,) ||P d_i||.
    """

    D: chex.Array
    D_inv: chex.Array
    b: chex.Array
    c: chex.Array
    s: chex.Array
    f: chex.Array
    p_norms: chex.Array

    @property
    def d_rows(self):
        return self.D_inv

    @property
    def n_endmembers(self):
        return self.D.shape[0]


@jit
def _precompute(D):
    m = D.shape[0]
    D_inv = solve_triangular(D, jnp.eye(m), lower=False)
    b = D_inv.sum(axis=0)
    c = b / jnp.dot(b, b)
    # P d_i = d_i - c (b^T d_i), one row per half-space
    Pd = D_inv - jnp.outer(D_inv @ b, c)
    p_norms = jnp.linalg.norm(Pd, axis=1)
    s = Pd / p_norms[:, None]
    f = -(D_inv @ c) / p_norms
    return SubspaceTransform(D=D, D_inv=D_inv, b=b, c=c, s=s, f=f, p_norms=p_norms)


def transform_from_factor(D):
    """Build a SubspaceTransform from any upper triangular D with D^T D = E^T E."""
    D = jnp.asarray(D, dtype=jnp.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ShapeMismatch((D.shape[0], D.shape[0]), D.shape)
    return _precompute(D)


def build_transform(E: EndmemberMatrix) -> SubspaceTransform:
    """Compute D = chol(E^T E)^T and the per-half-space quantities.

    Raises:
        DegenerateProblem: for a single endmember (the solution is a = 1).
        RankDeficient: when a Cholesky pivot falls below RANK_TOL * trace(E^T E) / m.
    """
    m = E.n_endmembers
    if m == 1:
        raise DegenerateProblem(m)

    G = E.data.T @ E.data
    threshold = RANK_TOL * float(jnp.trace(G)) / m
    L = jnp.linalg.cholesky(G)
    pivots = jnp.diag(L) ** 2
    min_pivot = float(jnp.min(pivots))
    if not bool(jnp.all(jnp.isfinite(L))) or not min_pivot > threshold:
        raise RankDeficient(min_pivot, threshold)

    T = _precompute(L.T)
    logger.debug("built subspace transform: m=%d, min pivot %.3e, cond(D) %.3e",
                 m, min_pivot, float(jnp.linalg.cond(T.D)))
    return T


def constraint_sets(T: SubspaceTransform) -> ConstraintSets:
    """The hyperplane S and half-spaces N_i in subspace coordinates."""
    return ConstraintSets(b=T.b, half_spaces=T.D_inv)


@jit
def _forward(D, E, X):
    return solve_triangular(D.T, E.T @ X, lower=True)


def forward_transform(T: SubspaceTransform, E: EndmemberMatrix, X: ImageCube) -> CoefficientMatrix:
    """Y = D^{-T} E^T X, equivalently D A_LS with A_LS the unconstrained LS abundances."""
    validate_dimensions(E, X)
    if E.n_endmembers != T.n_endmembers:
        raise ShapeMismatch((T.n_endmembers,), (E.n_endmembers,))
    return CoefficientMatrix(data=_forward(T.D, E.data, X.data))


@jit
def _inverse(D, U):
    return solve_triangular(D, U, lower=False)


def inverse_transform(T: SubspaceTransform, U, shape=None) -> AbundanceMatrix:
    """A = D^{-1} U by back substitution.

    Args:
        T: subspace transform.
        U: CoefficientMatrix or array(m, n).
        shape: optional spatial shape (rows, cols) of the result.
    """
    data = U.data if isinstance(U, CoefficientMatrix) else jnp.asarray(U, dtype=jnp.float64)
    m = T.n_endmembers
    if data.ndim != 2 or data.shape[0] != m:
        raise ShapeMismatch((m, data.shape[-1]), data.shape)
    return AbundanceMatrix.from_array(_inverse(T.D, data), shape=shape)
