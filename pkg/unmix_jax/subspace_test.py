import pytest
from jax import numpy as jnp
from jax import random as jr

from unmix_jax.errors import DegenerateProblem, RankDeficient, ShapeMismatch
from unmix_jax.model import EndmemberMatrix, ImageCube
from unmix_jax.subspace import build_transform, constraint_sets, forward_transform, inverse_transform


def random_problem(key, n_bands=30, m=4, n=20):
    k_e, k_x = jr.split(key)
    E = EndmemberMatrix.from_array(jr.uniform(k_e, (n_bands, m)))
    X = ImageCube.from_array(jr.uniform(k_x, (n_bands, n)))
    return E, X


def test_factorization(seed=0):
    E, _ = random_problem(jr.PRNGKey(seed))
    T = build_transform(E)
    m = E.n_endmembers

    assert jnp.allclose(jnp.tril(T.D, -1), 0.0)
    assert jnp.allclose(T.D.T @ T.D, E.data.T @ E.data)
    assert jnp.allclose(T.D_inv @ T.D, jnp.eye(m), atol=1e-12)
    assert jnp.allclose(T.b, T.D_inv.sum(axis=0))
    assert jnp.allclose(T.b @ T.c, 1.0)


def test_halfspace_directions(seed=1):
    E, _ = random_problem(jr.PRNGKey(seed), m=5)
    T = build_transform(E)

    assert jnp.allclose(jnp.linalg.norm(T.s, axis=1), 1.0)
    assert jnp.allclose(T.s @ T.b, 0.0, atol=1e-12)
    # s_i is the direction of d_i within the hyperplane: d_i^T s_i = ||P d_i||
    assert jnp.allclose(jnp.sum(T.D_inv * T.s, axis=1), T.p_norms)
    assert jnp.allclose(T.f, -(T.D_inv @ T.c) / T.p_norms)


def test_forward_transform_is_transformed_ls(seed=2):
    E, X = random_problem(jr.PRNGKey(seed))
    T = build_transform(E)
    Y = forward_transform(T, E, X).data
    A_ls = jnp.linalg.solve(E.data.T @ E.data, E.data.T @ X.data)
    assert jnp.allclose(Y, T.D @ A_ls, rtol=1e-10, atol=1e-10)
    assert jnp.allclose(inverse_transform(T, Y).data, A_ls, rtol=1e-10, atol=1e-10)


def test_objective_gap_is_constant(seed=3, num_abundances=100):
    E, X = random_problem(jr.PRNGKey(seed))
    T = build_transform(E)
    Y = forward_transform(T, E, X).data
    As = jr.normal(jr.PRNGKey(seed + 1), (num_abundances, E.n_endmembers, X.n_pixels))

    gaps = jnp.array([jnp.sum((X.data - E.data @ A) ** 2) - jnp.sum((Y - T.D @ A) ** 2) for A in As])
    assert jnp.allclose(gaps, gaps[0], rtol=1e-8)


def test_inverse_round_trip(seed=4):
    E, _ = random_problem(jr.PRNGKey(seed))
    T = build_transform(E)
    A = jr.uniform(jr.PRNGKey(seed + 1), (E.n_endmembers, 6))
    result = inverse_transform(T, T.D @ A, shape=(2, 3))
    assert result.shape == (2, 3)
    assert jnp.allclose(result.data, A, atol=1e-12)
    with pytest.raises(ShapeMismatch):
        inverse_transform(T, jnp.ones((E.n_endmembers + 1, 6)))


def test_constraint_sets_recover_abundances(seed=5):
    E, _ = random_problem(jr.PRNGKey(seed))
    T = build_transform(E)
    sets = constraint_sets(T)
    A = jr.uniform(jr.PRNGKey(seed + 1), (E.n_endmembers, 8))
    assert jnp.allclose(sets.half_spaces @ (T.D @ A), A, atol=1e-12)
    assert jnp.allclose(sets.b @ (T.D @ A), A.sum(axis=0))


def test_rank_deficient(seed=6):
    e = jr.uniform(jr.PRNGKey(seed), (20, 2))
    E = EndmemberMatrix.from_array(jnp.concatenate([e, e[:, :1]], axis=1))
    with pytest.raises(RankDeficient):
        build_transform(E)


def test_single_endmember_is_degenerate():
    with pytest.raises(DegenerateProblem):
        build_transform(EndmemberMatrix.from_array(jnp.ones((5, 1))))
