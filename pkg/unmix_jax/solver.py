"""End-to-end unmixing pipelines.

    sudap    subspace transform + Dykstra projection (fully constrained)
    ls       unconstrained least squares
    ls_sum1  least squares with the sum-to-one constraint only
    oracle   exact fully constrained solution by active-set enumeration
"""
import itertools
import logging
import time
from typing import Optional

import chex
import jax.numpy as jnp
import numpy as np
from jax import jit, vmap

from unmix_jax.dykstra import DykstraConfig, DykstraTrace, dykstra_project
from unmix_jax.errors import ConfigError, NoKKTPoint, TooManyEndmembers
from unmix_jax.model import (EPS_FEAS, AbundanceMatrix, EndmemberMatrix, ImageCube, column_feasibility,
                             validate_dimensions)
from unmix_jax.projectors import project_hyperplane
from unmix_jax.subspace import SubspaceTransform, build_transform, forward_transform, inverse_transform

logger = logging.getLogger(__name__)

SOLVER_IDS = ("sudap", "ls", "ls_sum1", "oracle")

# The oracle enumerates up to 2^m - 1 active sets per pixel.
ORACLE_MAX_ENDMEMBERS = 14
ORACLE_CHUNK = 32
PRIMAL_TOL = 1e-12
DUAL_TOL = 1e-10


@chex.dataclass
class SolveResult:
    """Output of one solver run.

    Attributes:
        A_hat: estimated abundances.
        trace: Dykstra telemetry (empty for the direct solvers).
        solver_id: one of SOLVER_IDS.
        wall_time: seconds spent in the solver, file I/O excluded.
        transform: the subspace transform, when one was built.
        active_set: (m, n) bool, entries the oracle fixed at zero.
    """

    A_hat: AbundanceMatrix
    trace: DykstraTrace
    solver_id: str
    wall_time: float
    transform: Optional[SubspaceTransform] = None
    active_set: Optional[chex.Array] = None


def _ones(X: ImageCube):
    return AbundanceMatrix.from_array(jnp.ones((1, X.n_pixels)), shape=X.shape, feasible=True)


def _finish(solver_id, A, start, trace=None, **kwargs):
    wall_time = time.perf_counter() - start
    result = SolveResult(A_hat=A,
                         trace=DykstraTrace.empty() if trace is None else trace,
                         solver_id=solver_id,
                         wall_time=wall_time,
                         **kwargs)
    logger.info("%s: m=%d n=%d done in %.3fs", solver_id, A.n_endmembers, A.n_pixels, wall_time)
    return result


def clip_abundances(A: AbundanceMatrix, eps_neg=EPS_FEAS) -> AbundanceMatrix:
    """Zero entries in [-eps_neg, 0) and renormalize each column to sum to one."""
    data = jnp.where((A.data < 0) & (A.data >= -eps_neg), 0.0, A.data)
    data = data / data.sum(axis=0, keepdims=True)
    return AbundanceMatrix.from_array(data, shape=A.shape, feasible=column_feasibility(data).feasible)


def solve_sudap(E: EndmemberMatrix, X: ImageCube, cfg: Optional[DykstraConfig] = None, clip=False) -> SolveResult:
    """Fully constrained least squares by subspace transform and Dykstra projection.

    A_hat = D^{-1} Pi_{S ∩ N}(D^{-T} E^T X).

    Args:
        E: endmembers, full column rank.
        X: observations.
        cfg: Dykstra options; `cfg.reference` are abundances A*.
        clip: clean up tiny negative entries with `clip_abundances`.
    """
    start = time.perf_counter()
    validate_dimensions(E, X)
    logger.info("sudap: m=%d n=%d bands=%d", E.n_endmembers, X.n_pixels, X.n_bands)
    if E.n_endmembers == 1:
        return _finish("sudap", _ones(X), start)

    T = build_transform(E)
    Y = forward_transform(T, E, X)
    U, trace = dykstra_project(T, Y, cfg, t0=start)
    A = inverse_transform(T, U, shape=X.shape)
    A = clip_abundances(A) if clip else A.replace(feasible=column_feasibility(A).feasible)
    return _finish("sudap", A, start, trace=trace, transform=T)


def solve_ls(E: EndmemberMatrix, X: ImageCube) -> SolveResult:
    """Unconstrained least squares A_LS = (E^T E)^{-1} E^T X = D^{-1} Y."""
    start = time.perf_counter()
    validate_dimensions(E, X)
    if E.n_endmembers == 1:
        e = E.data[:, 0]
        A = AbundanceMatrix.from_array((e @ X.data)[None, :] / (e @ e), shape=X.shape)
        return _finish("ls", A, start)

    T = build_transform(E)
    A = inverse_transform(T, forward_transform(T, E, X), shape=X.shape)
    return _finish("ls", A, start, transform=T)


def solve_ls_sum1(E: EndmemberMatrix, X: ImageCube) -> SolveResult:
    """Least squares under 1^T a = 1 only: A = D^{-1} Pi_S(Y)."""
    start = time.perf_counter()
    validate_dimensions(E, X)
    if E.n_endmembers == 1:
        return _finish("ls_sum1", _ones(X), start)

    T = build_transform(E)
    Y = forward_transform(T, E, X)
    A = inverse_transform(T, project_hyperplane(T, Y.data), shape=X.shape)
    return _finish("ls_sum1", A, start, transform=T)


def active_set_candidates(m):
    """Zero masks of every proper subset of range(m), by size then lexicographically."""
    masks = []
    for size in range(m):
        for zeroed in itertools.combinations(range(m), size):
            mask = np.zeros(m, dtype=bool)
            mask[list(zeroed)] = True
            masks.append(mask)
    return np.stack(masks)


def _kkt_solve(G, H, zero_mask):
    """Solve min 1/2 a^T G a - h^T a  s.t.  a_Z = 0, 1^T a = 1 for every column h of H.

    Zeroed coordinates keep an identity row so that every active set gives a
    system of the same size.
    """
    m = G.shape[0]
    free = 1.0 - zero_mask.astype(G.dtype)
    M = jnp.zeros((m + 1, m + 1), dtype=G.dtype)
    M = M.at[:m, :m].set(free[:, None] * G * free[None, :] + jnp.diag(1.0 - free))
    M = M.at[:m, m].set(free)
    M = M.at[m, :m].set(free)
    rhs = jnp.concatenate([free[:, None] * H, jnp.ones((1, H.shape[1]), dtype=G.dtype)])
    sol = jnp.linalg.solve(M, rhs)
    return sol[:m], sol[m]


@jit
def _evaluate_candidates(G, H, zero_masks, dual_tol):
    """Abundances and KKT acceptance for a chunk of active sets, all pixels at once."""

    def _one(zero_mask):
        a, nu = _kkt_solve(G, H, zero_mask)
        lam = G @ a - H + nu[None, :]
        primal = jnp.all(a >= -PRIMAL_TOL, axis=0)
        dual = jnp.all(jnp.where(zero_mask[:, None], lam >= -dual_tol, True), axis=0)
        return a, primal & dual & jnp.all(jnp.isfinite(a), axis=0)

    return vmap(_one)(zero_masks)


def solve_oracle_activeset(E: EndmemberMatrix, X: ImageCube, chunk=ORACLE_CHUNK) -> SolveResult:
    """Exact fully constrained least squares by active-set enumeration.

    For every pixel the candidate active sets Z (entries fixed at zero) are
    tried in order of increasing size; the first whose equality constrained
    solution is primal feasible (a >= -1e-12) with non-negative bound
    multipliers is the solution. Works on E directly, independently of the
    subspace transform.

    Raises:
        TooManyEndmembers: for m > 14.
        NoKKTPoint: when no candidate passes for some pixel.
    """
    start = time.perf_counter()
    validate_dimensions(E, X)
    m, n = E.n_endmembers, X.n_pixels
    if m > ORACLE_MAX_ENDMEMBERS:
        raise TooManyEndmembers(m, ORACLE_MAX_ENDMEMBERS)

    G = E.data.T @ E.data
    H = E.data.T @ X.data
    dual_tol = DUAL_TOL * max(1.0, float(jnp.max(jnp.abs(G))))
    candidates = active_set_candidates(m)
    logger.info("oracle: m=%d n=%d candidates=%d", m, n, len(candidates))

    A = jnp.zeros((m, n))
    active = jnp.zeros((m, n), dtype=bool)
    found = jnp.zeros(n, dtype=bool)
    for lo in range(0, len(candidates), chunk):
        masks = candidates[lo:lo + chunk]
        # repeat the last candidate so every chunk compiles to the same shape
        masks = np.concatenate([masks, np.repeat(masks[-1:], chunk - len(masks), axis=0)])
        a, passed = _evaluate_candidates(G, H, jnp.asarray(masks), dual_tol)
        first = jnp.argmax(passed, axis=0)
        take = jnp.any(passed, axis=0) & ~found
        A = jnp.where(take[None, :], a[first, :, jnp.arange(n)].T, A)
        active = jnp.where(take[None, :], jnp.asarray(masks)[first].T, active)
        found = found | take
        if bool(jnp.all(found)):
            break

    if not bool(jnp.all(found)):
        raise NoKKTPoint(np.flatnonzero(~np.asarray(found)).tolist())

    A = AbundanceMatrix.from_array(A, shape=X.shape, feasible=True)
    return _finish("oracle", A, start, active_set=active)


def solve(E: EndmemberMatrix, X: ImageCube, solver_id="sudap", cfg: Optional[DykstraConfig] = None, clip=False):
    """Dispatch to one of SOLVER_IDS."""
    if solver_id == "sudap":
        return solve_sudap(E, X, cfg, clip=clip)
    if solver_id == "ls":
        return solve_ls(E, X)
    if solver_id == "ls_sum1":
        return solve_ls_sum1(E, X)
    if solver_id == "oracle":
        return solve_oracle_activeset(E, X)
    raise ConfigError(f"unknown solver {solver_id!r}, expected one of {SOLVER_IDS}")
