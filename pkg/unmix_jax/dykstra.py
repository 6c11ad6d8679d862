"""Dykstra's alternating projection of Y onto S ∩ N = ∩_i (S ∩ N_i).

One sweep projects onto S ∩ N_1, ..., S ∩ N_m in order. Before projection i
the correction left by the previous projection onto the same set is added
back, and afterwards it is replaced by (input - output):

    Z   = U + Q_{i-1}          (Q_{i-1} := Q_m for i = 1)
    U   = Pi_{S ∩ N_i}(Z)
    Q_{i-1} = Z - U

Only the first projection of the first sweep sees an input off the
hyperplane (Z = Y). Its correction is stored as Pi_S(Z) - U instead of Z - U;
the two differ by the constant (b^T Y - 1) c, which no later iterate depends
on. From then on every projection input lies on S and the hyperplane step of
the projector is skipped.

Columns are processed in blocks of identical shape (see
`unmix_jax.utils.pad_columns`), optionally on several threads; the result
does not depend on the number of threads.
"""
import logging
import time
from functools import partial
from typing import Callable, List, Optional

import chex
import jax.numpy as jnp
from jax import jit, lax
from jax.scipy.linalg import solve_triangular
from tqdm.auto import trange

from unmix_jax.errors import ConfigError, NonFinite, ShapeMismatch
from unmix_jax.model import AbundanceMatrix, CoefficientMatrix
from unmix_jax.projectors import _project_geometric, project_hyperplane
from unmix_jax.subspace import SubspaceTransform
from unmix_jax.utils import block_pool, map_blocks, merge_columns, pad_columns, resolve_threads, to_db

logger = logging.getLogger(__name__)

# Guard for the denominator of the relative change.
_NORM_EPS = 1e-300


@chex.dataclass
class DykstraConfig:
    """Stopping rule and telemetry options for `dykstra_project`.

    Attributes:
        max_sweeps: hard cap K on the number of sweeps.
        rel_tol: stop once ||U^(k) - U^(k-1)||_F / ||U^(k)||_F <= rel_tol.
            0 disables the test, so exactly `max_sweeps` sweeps run.
        track_per_pixel: count, per sweep, the pixels whose error against
            `reference` exceeds `pixel_tol_db`.
        pixel_tol_db: per-pixel relative error threshold in dB.
        snapshot_every: keep U every this many sweeps (0 keeps none).
        block_size: columns per block.
        threads: worker threads; None reads $UNMIX_JAX_THREADS.
        progress: show a tqdm progress bar.
        reference: optional exact abundances A*, array(m, n), for telemetry
            and reference-based stopping.
        stop_re_db: stop once RE(D^{-1} U, A*) <= stop_re_db (needs `reference`).
    """

    max_sweeps: int = 2000
    rel_tol: float = 1e-10
    track_per_pixel: bool = False
    pixel_tol_db: float = -100.0
    snapshot_every: int = 0
    block_size: int = 4096
    threads: Optional[int] = None
    progress: bool = False
    reference: Optional[chex.Array] = None
    stop_re_db: Optional[float] = None

    def __post_init__(self):
        if int(self.max_sweeps) < 1:
            raise ConfigError(f"max_sweeps must be >= 1, got {self.max_sweeps}")
        if not self.rel_tol >= 0:
            raise ConfigError(f"rel_tol must be >= 0, got {self.rel_tol}")
        if int(self.snapshot_every) < 0:
            raise ConfigError(f"snapshot_every must be >= 0, got {self.snapshot_every}")
        if int(self.block_size) < 1:
            raise ConfigError(f"block_size must be >= 1, got {self.block_size}")
        if self.reference is None and (self.track_per_pixel or self.stop_re_db is not None):
            raise ConfigError("track_per_pixel and stop_re_db need a reference")


@chex.dataclass
class DykstraTrace:
    """Per-sweep telemetry of a Dykstra run, ordered by sweep.

    Attributes:
        sweep: (K,) sweep indices 1..K.
        elapsed: (K,) seconds since the solve started.
        rel_change: (K,) relative Frobenius change between sweeps.
        objective: (K,) ||Y - U^(k)||_F^2.
        unconverged: (K,) pixels above `pixel_tol_db`, or None.
        re_db: (K,) RE of D^{-1} U^(k) against the reference in dB, or None.
        snapshot_sweeps: sweeps at which U was kept (0 is the input Y).
        snapshots: the kept iterates, array(m, n) each.
        stop_reason: "rel_tol", "reference" or "max_sweeps".
        time_to_threshold: elapsed seconds when `stop_re_db` was reached.
    """

    sweep: chex.Array = None
    elapsed: chex.Array = None
    rel_change: chex.Array = None
    objective: chex.Array = None
    unconverged: Optional[chex.Array] = None
    re_db: Optional[chex.Array] = None
    snapshot_sweeps: List[int] = None
    snapshots: List[chex.Array] = None
    stop_reason: str = None
    time_to_threshold: Optional[float] = None

    @property
    def num_sweeps(self):
        return 0 if self.sweep is None else len(self.sweep)

    @classmethod
    def empty(cls):
        return cls(sweep=jnp.zeros(0, dtype=jnp.int32), elapsed=jnp.zeros(0), rel_change=jnp.zeros(0),
                   objective=jnp.zeros(0), snapshot_sweeps=[], snapshots=[], stop_reason="direct")


@partial(jit, static_argnames="first_sweep")
def _sweep(T: SubspaceTransform, U, Q, first_sweep=False):
    """One pass over the m sets. Q has shape (m, m, n): Q[j] is the correction of set j."""
    m = U.shape[0]

    def _project(i, carry):
        U, Q = carry
        j = (i - 1) % m
        Z = U + Q[j]
        U_next = _project_geometric(T, i, Z, z_on_S=True)
        return U_next, Q.at[j].set(Z - U_next)

    start = 0
    if first_sweep:
        Z = U + Q[m - 1]
        U_next = _project_geometric(T, 0, Z, z_on_S=False)
        Q = Q.at[m - 1].set(project_hyperplane(T, Z) - U_next)
        U, start = U_next, 1

    return lax.fori_loop(start, m, _project, (U, Q))


@partial(jit, static_argnames=("first_sweep", "with_reference"))
def _block_step(T, Y, U, Q, mask, U_star, A_star, pixel_ratio, first_sweep=False, with_reference=False):
    """Sweep one block and reduce its contributions to the global statistics."""
    U_next, Q_next = _sweep(T, U, Q, first_sweep=first_sweep)
    w = mask.astype(U.dtype)
    stats = [
        jnp.sum(jnp.sum((U_next - U) ** 2, axis=0) * w),
        jnp.sum(jnp.sum(U_next ** 2, axis=0) * w),
        jnp.sum(jnp.sum((Y - U_next) ** 2, axis=0) * w),
    ]
    if with_reference:
        err = jnp.sum((U_next - U_star) ** 2, axis=0)
        ref = jnp.sum(U_star ** 2, axis=0)
        stats.append(jnp.sum((err > pixel_ratio * ref) & mask).astype(U.dtype))
        A_err = solve_triangular(T.D, U_next, lower=False) - A_star
        stats.append(jnp.sum(jnp.sum(A_err ** 2, axis=0) * w))
    finite = jnp.all(jnp.isfinite(U_next))
    return U_next, Q_next, jnp.stack(stats), finite


def _as_coefficients(Y):
    return Y.data if isinstance(Y, CoefficientMatrix) else jnp.asarray(Y, dtype=jnp.float64)


@chex.dataclass
class DykstraState:
    """Iterate of the unblocked recursion, for stepping through sweeps by hand.

    U: (m, n) current iterate. Q: (m, m, n) corrections, Q[i] belongs to set i.
    sweep: completed sweeps. last_delta: relative change of the last sweep.
    """

    U: chex.Array
    Q: chex.Array
    sweep: int = 0
    last_delta: float = float("inf")


def init_state(Y) -> DykstraState:
    """U <- Y, Q <- 0."""
    Y = _as_coefficients(Y)
    return DykstraState(U=Y, Q=jnp.zeros((Y.shape[0],) + Y.shape, dtype=Y.dtype))


def dykstra_sweep(T: SubspaceTransform, state: DykstraState) -> DykstraState:
    """Run one full sweep over all columns at once."""
    U, Q = _sweep(T, state.U, state.Q, first_sweep=state.sweep == 0)
    delta = float(jnp.linalg.norm(U - state.U)) / max(float(jnp.linalg.norm(U)), _NORM_EPS)
    return DykstraState(U=U, Q=Q, sweep=state.sweep + 1, last_delta=delta)


def dykstra_project(T: SubspaceTransform,
                    Y,
                    cfg: Optional[DykstraConfig] = None,
                    callback: Optional[Callable] = None,
                    t0: Optional[float] = None):
    """Project every column of Y onto S ∩ N with Dykstra's algorithm.

    Args:
        T: subspace transform.
        Y: CoefficientMatrix or array(m, n), the transformed observations.
        cfg: stopping rule and telemetry options.
        callback: called as callback(sweep, U) for every kept snapshot.
        t0: time.perf_counter() value elapsed times are measured from
            (defaults to the start of this call).

    Returns:
        U_hat: CoefficientMatrix, the projection of Y.
        trace: DykstraTrace.
    """
    cfg = DykstraConfig() if cfg is None else cfg
    t0 = time.perf_counter() if t0 is None else t0
    Y = _as_coefficients(Y)
    m, n = Y.shape
    if m != T.n_endmembers:
        raise ShapeMismatch((T.n_endmembers, n), Y.shape)

    with_reference = cfg.reference is not None
    Y_blocks, masks = pad_columns(Y, cfg.block_size, T.c)
    U_blocks = list(Y_blocks)
    Q_blocks = [jnp.zeros((m,) + block.shape, dtype=block.dtype) for block in Y_blocks]
    if with_reference:
        A_star = cfg.reference.data if isinstance(cfg.reference, AbundanceMatrix) else jnp.asarray(cfg.reference)
        if A_star.shape != Y.shape:
            raise ShapeMismatch(Y.shape, A_star.shape)
        ref_sq_norm = float(jnp.sum(A_star ** 2))
        A_star_blocks, _ = pad_columns(A_star, cfg.block_size, solve_triangular(T.D, T.c, lower=False))
        U_star_blocks = [T.D @ block for block in A_star_blocks]
    else:
        A_star_blocks = U_star_blocks = [None] * len(Y_blocks)
    pixel_ratio = 10.0 ** (cfg.pixel_tol_db / 10.0)

    records = {"sweep": [], "elapsed": [], "rel_change": [], "objective": [], "unconverged": [], "re_db": []}
    snapshot_sweeps, snapshots = [], []

    def _keep(sweep, U_blocks):
        U = merge_columns(U_blocks, n)
        snapshot_sweeps.append(sweep)
        snapshots.append(U)
        if callback is not None:
            callback(sweep, U)

    if cfg.snapshot_every > 0:
        _keep(0, U_blocks)

    threads = resolve_threads(cfg.threads)
    pool = block_pool(threads)
    stop_reason, time_to_threshold = "max_sweeps", None
    logger.info("dykstra: m=%d n=%d blocks=%d threads=%d max_sweeps=%d rel_tol=%.1e",
                m, n, len(Y_blocks), threads, cfg.max_sweeps, cfg.rel_tol)
    try:
        for k in trange(1, cfg.max_sweeps + 1, disable=not cfg.progress, desc="dykstra"):
            step = partial(_block_step, T, first_sweep=(k == 1), with_reference=with_reference)
            results = map_blocks(lambda *args: step(*args, pixel_ratio),
                                 Y_blocks, U_blocks, Q_blocks, masks, U_star_blocks, A_star_blocks,
                                 pool=pool)
            U_blocks = [r[0] for r in results]
            Q_blocks = [r[1] for r in results]
            if not all(bool(r[3]) for r in results):
                raise NonFinite(k)
            stats = results[0][2]
            for r in results[1:]:
                stats = stats + r[2]
            stats = [float(v) for v in stats]
            elapsed = time.perf_counter() - t0

            rel_change = stats[0] ** 0.5 / max(stats[1] ** 0.5, _NORM_EPS)
            records["sweep"].append(k)
            records["elapsed"].append(elapsed)
            records["rel_change"].append(rel_change)
            records["objective"].append(stats[2])
            if with_reference:
                records["unconverged"].append(int(stats[3]))
                records["re_db"].append(to_db(stats[4] / ref_sq_norm) if ref_sq_norm > 0 else float("nan"))
            logger.debug("sweep %d: rel_change=%.3e objective=%.6e", k, rel_change, stats[2])

            done = False
            if with_reference and cfg.stop_re_db is not None and records["re_db"][-1] <= cfg.stop_re_db:
                stop_reason, time_to_threshold, done = "reference", elapsed, True
            elif cfg.rel_tol > 0 and rel_change <= cfg.rel_tol:
                stop_reason, done = "rel_tol", True

            if cfg.snapshot_every > 0 and (k % cfg.snapshot_every == 0 or done or k == cfg.max_sweeps):
                _keep(k, U_blocks)
            if done:
                break
    finally:
        if pool is not None:
            pool.shutdown()

    if stop_reason == "max_sweeps" and cfg.rel_tol > 0:
        logger.warning("dykstra stopped at max_sweeps=%d with rel_change=%.3e > rel_tol=%.1e",
                       cfg.max_sweeps, records["rel_change"][-1], cfg.rel_tol)
    logger.info("dykstra: %d sweeps, stop=%s, %.3fs", len(records["sweep"]), stop_reason,
                time.perf_counter() - t0)

    trace = DykstraTrace(
        sweep=jnp.array(records["sweep"], dtype=jnp.int32),
        elapsed=jnp.array(records["elapsed"]),
        rel_change=jnp.array(records["rel_change"]),
        objective=jnp.array(records["objective"]),
        unconverged=jnp.array(records["unconverged"], dtype=jnp.int32) if with_reference else None,
        re_db=jnp.array(records["re_db"]) if with_reference else None,
        snapshot_sweeps=snapshot_sweeps,
        snapshots=snapshots,
        stop_reason=stop_reason,
        time_to_threshold=time_to_threshold,
    )
    return CoefficientMatrix(data=merge_columns(U_blocks, n)), trace


def per_pixel_unconverged(trace: DykstraTrace, U_star, tol_db=-100.0):
    """Count, for every kept snapshot, the pixels whose relative error
    10 log10(||u_j - u*_j||^2 / ||u*_j||^2) exceeds `tol_db`.

    Args:
        trace: a run with snapshots (`snapshot_every > 0`).
        U_star: CoefficientMatrix or array(m, n), typically from a long reference run.
        tol_db: per-pixel threshold in dB.

    Returns:
        sweeps: (S,) snapshot sweep indices.
        counts: (S,) number of unconverged pixels.
    """
    U_star = _as_coefficients(U_star)
    ref = jnp.sum(U_star ** 2, axis=0)
    ratio = 10.0 ** (tol_db / 10.0)
    counts = []
    for U in trace.snapshots:
        if U.shape != U_star.shape:
            raise ShapeMismatch(U_star.shape, U.shape)
        err = jnp.sum((U - U_star) ** 2, axis=0)
        counts.append(int(jnp.sum(err > ratio * ref)))
    return jnp.array(trace.snapshot_sweeps, dtype=jnp.int32), jnp.array(counts, dtype=jnp.int32)
