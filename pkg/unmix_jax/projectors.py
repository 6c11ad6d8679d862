"""Closed-form projections onto S and onto S ∩ N_i.

All functions act column-wise on a coefficient array Z of shape (m, n) and
cost O(nm): the hyperplane projection is the rank-one update
Z - c (b^T Z - 1^T), and the half-space step moves each column along the
single direction s_i.

Half-space indices are 0-based: i in [0, m).
"""
from functools import partial

import chex
import jax.numpy as jnp
from jax import jit

from unmix_jax.errors import IndexOutOfRange
from unmix_jax.subspace import SubspaceTransform


@chex.dataclass
class HalfspaceProjection:
    """Step lengths of one half-space projection.

    tau: (n,) non-negative distance moved along s_i by each column.
    moved_mask: (n,) True where the column was outside N_i (tau > 0).
    """

    tau: chex.Array
    moved_mask: chex.Array


@jit
def project_hyperplane(T: SubspaceTransform, Z):
    """Euclidean projection of every column of Z onto S = {u : b^T u = 1}."""
    return Z - jnp.outer(T.c, T.b @ Z - 1.0)


@jit
def halfspace_step(T: SubspaceTransform, i, Z):
    """tau_i^T = max{0, f_i 1^T - s_i^T Z}, the move along s_i back into N_i."""
    tau = jnp.maximum(0.0, T.f[i] - T.s[i] @ Z)
    return HalfspaceProjection(tau=tau, moved_mask=tau > 0)


@partial(jit, static_argnames="z_on_S")
def _project_geometric(T, i, Z, z_on_S=False):
    Z_bar = Z if z_on_S else project_hyperplane(T, Z)
    step = halfspace_step(T, i, Z)
    return Z_bar + jnp.outer(T.s[i], step.tau)


@jit
def _project_kkt(T, i, Z):
    Z_tilde = jnp.outer(T.c, T.b @ Z - 1.0)
    Z_bar = Z - Z_tilde
    tau = jnp.maximum(0.0, -(T.D_inv[i] @ Z_bar) / T.p_norms[i])
    return Z_bar + jnp.outer(T.s[i], tau)


def _check_index(T, i):
    m = T.n_endmembers
    if not 0 <= int(i) < m:
        raise IndexOutOfRange(int(i), m)


def project_intersection_geometric(T: SubspaceTransform, i, Z, z_on_S=False):
    """Project every column of Z onto S ∩ N_i by first projecting onto S.

    U_i* = Pi_S(Z) + s_i tau_i^T.

    Args:
        T: subspace transform.
        i: half-space index in [0, m).
        Z: (m, n) array.
        z_on_S: caller guarantees b^T z = 1 for every column, so Pi_S(Z) = Z
            and the hyperplane step is skipped.
    """
    _check_index(T, i)
    return _project_geometric(T, i, jnp.asarray(Z), z_on_S=z_on_S)


def project_intersection_kkt(T: SubspaceTransform, i, Z):
    """Project every column of Z onto S ∩ N_i from the KKT conditions.

    U_i* = Z - Z~ + s_i tau_i^T with Z~ = c (b^T Z - 1^T) and
    tau_i^T = max{0, -d_i^T (Z - Z~) / ||P d_i||}.
    """
    _check_index(T, i)
    return _project_kkt(T, i, jnp.asarray(Z))
