import pytest
from jax import numpy as jnp
from jax import random as jr

from unmix_jax.errors import ConfigError
from unmix_jax.utils import (THREADS_ENV_VAR, block_pool, map_blocks, merge_columns, pad_columns, resolve_threads,
                             to_db)


def test_pad_and_merge_columns(m=3, n=10, block_size=4, seed=0):
    X = jr.normal(jr.PRNGKey(seed), (m, n))
    fill = jnp.arange(m, dtype=X.dtype)
    blocks, masks = pad_columns(X, block_size, fill)

    assert len(blocks) == 3
    assert all(block.shape == (m, block_size) for block in blocks)
    assert [int(mask.sum()) for mask in masks] == [4, 4, 2]
    assert jnp.array_equal(blocks[-1][:, 2:], jnp.tile(fill[:, None], (1, 2)))
    assert jnp.array_equal(merge_columns(blocks, n), X)


def test_block_never_wider_than_data(m=2, n=5):
    blocks, masks = pad_columns(jnp.ones((m, n)), 4096, jnp.zeros(m))
    assert len(blocks) == 1
    assert blocks[0].shape == (m, n)
    assert bool(jnp.all(masks[0]))


def test_resolve_threads(monkeypatch):
    monkeypatch.delenv(THREADS_ENV_VAR, raising=False)
    assert resolve_threads() == 1
    monkeypatch.setenv(THREADS_ENV_VAR, "3")
    assert resolve_threads() == 3
    assert resolve_threads(2) == 2

    monkeypatch.setenv(THREADS_ENV_VAR, "many")
    with pytest.raises(ConfigError):
        resolve_threads()
    with pytest.raises(ConfigError):
        resolve_threads(0)


def test_map_blocks_preserves_order(num_blocks=9):
    blocks = [jnp.full((2, 3), float(b)) for b in range(num_blocks)]
    pool = block_pool(4)
    try:
        parallel = map_blocks(lambda x, y: x * 2 + y, blocks, blocks, pool=pool)
    finally:
        pool.shutdown()
    serial = map_blocks(lambda x, y: x * 2 + y, blocks, blocks)
    assert all(jnp.array_equal(p, s) for p, s in zip(parallel, serial))
    assert [float(p[0, 0]) for p in parallel] == [3.0 * b for b in range(num_blocks)]
    assert block_pool(1) is None


def test_to_db():
    assert to_db(1e-10) == pytest.approx(-100.0)
    assert to_db(0.0) == float("-inf")
