import os
from concurrent.futures import ThreadPoolExecutor

import jax.numpy as jnp

from unmix_jax.errors import ConfigError

THREADS_ENV_VAR = "UNMIX_JAX_THREADS"


def resolve_threads(threads=None):
    """Number of worker threads: explicit value, else $UNMIX_JAX_THREADS, else 1."""
    if threads is None:
        raw = os.environ.get(THREADS_ENV_VAR, "1")
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV_VAR}={raw!r} is not an integer")
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}")
    return threads


def pad_columns(X, block_size, fill):
    """
    Split the columns of a matrix into equally sized blocks.

    The trailing block is padded with copies of `fill` so that every block has
    the same shape, which keeps a single compiled kernel for all of them.
    Blocks never exceed the number of columns.

    Parameters
    ----------
    X : array(m, n)
        Column-major data (one pixel per column).
    block_size : int
        Maximum number of columns per block.
    fill : array(m,)
        Column used for padding.

    Returns
    -------
    * list of array(m, width)
        Blocked data.
    * list of array(width,)
        True for real columns, False for padding.
    """
    m, n = X.shape
    width = min(block_size, n)
    num_blocks = -(-n // width)
    idx = jnp.arange(num_blocks * width)
    padded = jnp.where(idx < n, jnp.pad(X, ((0, 0), (0, num_blocks * width - n))), fill[:, None])
    blocks = [padded[:, b * width:(b + 1) * width] for b in range(num_blocks)]
    masks = [idx[b * width:(b + 1) * width] < n for b in range(num_blocks)]
    return blocks, masks


def merge_columns(blocks, n):
    """Inverse of `pad_columns`: drop padding and return array(m, n)."""
    return jnp.concatenate(blocks, axis=1)[:, :n]


def block_pool(threads):
    """Executor for `map_blocks`, or None for strictly serial execution."""
    return ThreadPoolExecutor(max_workers=threads) if threads > 1 else None


def map_blocks(fn, *block_args, pool=None):
    """Apply `fn` blockwise over parallel sequences of blocks, preserving block order.

    Results do not depend on `pool`: each block is computed by the same compiled
    function on an array of the same shape, whichever thread runs it.
    """
    args = list(zip(*block_args))
    if pool is None or len(args) == 1:
        return [fn(*a) for a in args]
    return list(pool.map(lambda a: fn(*a), args))


def to_db(ratio):
    """10 log10(ratio); exact zero maps to -inf."""
    return float(10.0 * jnp.log10(ratio))
