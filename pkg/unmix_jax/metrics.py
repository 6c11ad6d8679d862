"""Evaluation measures. Errors are stored linear and reported in dB."""
import math
from typing import Optional

import chex
import jax.numpy as jnp
import numpy as np
from jax.scipy.linalg import solve_triangular

from unmix_jax.dykstra import (DykstraConfig, DykstraTrace, dykstra_project, dykstra_sweep, init_state,
                               per_pixel_unconverged)
from unmix_jax.errors import DimensionMismatch, ShapeMismatch, ZeroReference
from unmix_jax.model import AbundanceMatrix, EndmemberMatrix, ImageCube
from unmix_jax.subspace import SubspaceTransform
from unmix_jax.utils import to_db

CURVE_COLUMNS = ("sweep", "time_s", "objective", "re_db", "nmse_db", "unconverged")


def _data(A):
    return A.data if isinstance(A, AbundanceMatrix) else jnp.asarray(A, dtype=jnp.float64)


def relative_error_db(A_hat, A_star):
    """10 log10(||A_hat - A*||_F^2 / ||A*||_F^2); -inf when A_hat == A*."""
    A_hat, A_star = _data(A_hat), _data(A_star)
    if A_hat.shape != A_star.shape:
        raise ShapeMismatch(A_star.shape, A_hat.shape)
    ref = float(jnp.sum(A_star ** 2))
    if ref == 0:
        raise ZeroReference()
    return to_db(float(jnp.sum((A_hat - A_star) ** 2)) / ref)


def nmse_db(A_hat, A_true):
    """Normalized mean square error against the true abundances, in dB."""
    return relative_error_db(A_hat, A_true)


def objective(E: EndmemberMatrix, X: ImageCube, A_hat) -> float:
    """J = ||X - E A_hat||_F^2."""
    A_hat = _data(A_hat)
    if E.n_bands != X.n_bands:
        raise DimensionMismatch(E.n_bands, X.n_bands)
    if A_hat.shape != (E.n_endmembers, X.n_pixels):
        raise DimensionMismatch((E.n_endmembers, X.n_pixels), A_hat.shape, what="abundance matrix")
    return float(jnp.sum((X.data - E.data @ A_hat) ** 2))


def fit_geometric_rate(errors, tail_start=5, floor=1e-12):
    """Fit e_k ~ rho c^k by least squares on log e_k over the tail.

    Args:
        errors: e_1, e_2, ... (sweep k is index k - 1).
        tail_start: first sweep used in the fit.
        floor: errors at or below this are left out.

    Returns:
        (rho, c), or None when fewer than two points remain.
    """
    errors = np.asarray(errors, dtype=np.float64)
    k = np.arange(1, len(errors) + 1)
    keep = (k >= tail_start) & (errors > floor)
    if keep.sum() < 2:
        return None
    slope, intercept = np.polyfit(k[keep], np.log(errors[keep]), 1)
    return math.exp(intercept), math.exp(slope)


def error_decay(T: SubspaceTransform, Y, num_sweeps=1000, ref_sweeps=5000, drop=1e-10, floor=1e-14, threads=None):
    """Observed error drop of the Dykstra iterates over the first `num_sweeps` sweeps.

    The limit U_ref is the iterate after exactly `ref_sweeps` sweeps. With
    e_k = ||U^(k) - U_ref||_F, stepping stops early once e_k <= drop * e_1.

    Returns:
        ratio: min_k e_k / e_1, or 0 when e_1 <= floor * ||U_ref||_F.
        errors: (K,) e_1, ..., e_K.
        ref_norm: ||U_ref||_F.
    """
    U_ref, _ = dykstra_project(T, Y, DykstraConfig(max_sweeps=ref_sweeps, rel_tol=0.0, threads=threads))
    U_ref = U_ref.data
    ref_norm = float(jnp.linalg.norm(U_ref))
    state = init_state(Y)
    errors = []
    while state.sweep < num_sweeps:
        state = dykstra_sweep(T, state)
        errors.append(float(jnp.linalg.norm(state.U - U_ref)))
        if errors[-1] <= drop * errors[0]:
            break
    errors = np.array(errors)
    ratio = 0.0 if errors[0] <= floor * ref_norm else float(errors.min() / errors[0])
    return ratio, errors, ref_norm


@chex.dataclass(mappable_dataclass=False)
class ConvergenceCurve:
    """Metric series, one row per kept iterate.

    Columns are (S,) arrays; a column is None when its reference was not given.
    """

    sweep: chex.Array
    time_s: chex.Array
    objective: chex.Array
    re_db: Optional[chex.Array] = None
    nmse_db: Optional[chex.Array] = None
    unconverged: Optional[chex.Array] = None

    def __len__(self):
        return len(self.sweep)

    @classmethod
    def empty(cls):
        return cls(sweep=np.zeros(0, dtype=np.int64), time_s=np.zeros(0), objective=np.zeros(0))


def build_curve(trace: DykstraTrace,
                T: SubspaceTransform,
                E: EndmemberMatrix,
                X: ImageCube,
                A_star=None,
                A_true=None,
                pixel_tol_db=-100.0) -> ConvergenceCurve:
    """Evaluate every snapshot of a trace in abundance space.

    The objective is always filled. RE (and the per-pixel unconverged count,
    measured in subspace coordinates) needs A_star; NMSE needs A_true.
    """
    elapsed = {int(s): float(t) for s, t in zip(trace.sweep, trace.elapsed)}

    rows = {name: [] for name in CURVE_COLUMNS}
    for sweep, U in zip(trace.snapshot_sweeps, trace.snapshots):
        A = solve_triangular(T.D, U, lower=False)
        rows["sweep"].append(sweep)
        rows["time_s"].append(elapsed.get(sweep, 0.0))
        rows["objective"].append(objective(E, X, A))
        if A_star is not None:
            rows["re_db"].append(relative_error_db(A, A_star))
        if A_true is not None:
            rows["nmse_db"].append(nmse_db(A, A_true))

    unconverged = None
    if A_star is not None:
        _, unconverged = per_pixel_unconverged(trace, T.D @ _data(A_star), tol_db=pixel_tol_db)

    return ConvergenceCurve(
        sweep=np.array(rows["sweep"], dtype=np.int64),
        time_s=np.array(rows["time_s"]),
        objective=np.array(rows["objective"]),
        re_db=np.array(rows["re_db"]) if A_star is not None else None,
        nmse_db=np.array(rows["nmse_db"]) if A_true is not None else None,
        unconverged=None if unconverged is None else np.asarray(unconverged, dtype=np.int64),
    )
