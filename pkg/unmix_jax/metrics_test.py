import math

import numpy as np
import pytest
from jax import numpy as jnp
from jax import random as jr
from jax.scipy.linalg import solve_triangular

from unmix_jax.dykstra import DykstraConfig, DykstraTrace, dykstra_project, per_pixel_unconverged
from unmix_jax.errors import DimensionMismatch, ShapeMismatch, ZeroReference
from unmix_jax.metrics import (ConvergenceCurve, build_curve, error_decay, fit_geometric_rate, nmse_db, objective,
                               relative_error_db)
from unmix_jax.model import EndmemberMatrix, ImageCube
from unmix_jax.solver import solve_ls, solve_oracle_activeset
from unmix_jax.subspace import build_transform, forward_transform


def random_problem(key, n_bands=25, m=4, n=30, noise=0.1):
    k_e, k_a, k_n = jr.split(key, 3)
    E = EndmemberMatrix.from_array(jr.uniform(k_e, (n_bands, m)))
    A = jr.dirichlet(k_a, jnp.ones(m), (n,)).T
    X = ImageCube.from_array(E.data @ A + noise * jr.normal(k_n, (n_bands, n)))
    return E, A, X


def test_relative_error(seed=0):
    k_a, k_d = jr.split(jr.PRNGKey(seed))
    A = jr.uniform(k_a, (4, 10))
    assert relative_error_db(A, A) == -math.inf
    assert relative_error_db(2 * A, A) == pytest.approx(0.0, abs=1e-12)

    delta = jr.normal(k_d, A.shape)
    delta = delta / jnp.linalg.norm(delta) * jnp.linalg.norm(A) * 1e-5
    assert relative_error_db(A + delta, A) == pytest.approx(-100.0, abs=1e-9)


def test_relative_error_is_asymmetric(seed=1):
    A = jr.uniform(jr.PRNGKey(seed), (3, 5))
    assert relative_error_db(2 * A, A) == pytest.approx(0.0, abs=1e-12)
    assert relative_error_db(A, 2 * A) == pytest.approx(10 * math.log10(0.25))


def test_relative_error_errors():
    with pytest.raises(ZeroReference):
        relative_error_db(jnp.ones((2, 3)), jnp.zeros((2, 3)))
    with pytest.raises(ShapeMismatch):
        nmse_db(jnp.ones((2, 3)), jnp.ones((3, 2)))


def test_nmse(seed=2):
    A = jr.uniform(jr.PRNGKey(seed), (3, 8))
    assert nmse_db(A, A) == -math.inf
    assert nmse_db(jnp.zeros_like(A), A) == pytest.approx(0.0, abs=1e-12)


def test_objective(seed=3):
    E, A, X = random_problem(jr.PRNGKey(seed))
    assert objective(E, ImageCube.from_array(E.data @ A), A) == pytest.approx(0.0, abs=1e-20)

    # J(A) - J(A_ls) = ||E (A - A_ls)||^2
    A_ls = solve_ls(E, X).A_hat.data
    gap = objective(E, X, A) - objective(E, X, A_ls)
    assert gap == pytest.approx(float(jnp.sum((E.data @ (A - A_ls)) ** 2)), rel=1e-8)

    with pytest.raises(DimensionMismatch):
        objective(E, X, A[:-1])


def test_build_curve(seed=4):
    E, A, X = random_problem(jr.PRNGKey(seed))
    T = build_transform(E)
    _, trace = dykstra_project(T, forward_transform(T, E, X), DykstraConfig(rel_tol=1e-12, snapshot_every=2))
    A_star = solve_oracle_activeset(E, X).A_hat
    curve = build_curve(trace, T, E, X, A_star=A_star, A_true=A)

    assert len(curve) == len(trace.snapshots)
    assert list(curve.sweep) == trace.snapshot_sweeps
    assert bool((curve.time_s[1:] >= curve.time_s[:-1]).all())
    assert curve.re_db[-1] <= -120.0
    assert int(curve.unconverged[-1]) == 0
    assert curve.nmse_db.shape == curve.re_db.shape
    # row 0 is the unconstrained LS estimate, the smallest objective of all
    assert curve.objective[0] <= curve.objective[-1]
    assert curve.objective[-1] == pytest.approx(objective(E, X, A_star), rel=1e-9)


def test_unconverged_counts_match_trace(seed=7, pixel_tol_db=-80.0):
    E, _, X = random_problem(jr.PRNGKey(seed))
    T = build_transform(E)
    _, trace = dykstra_project(T, forward_transform(T, E, X), DykstraConfig(rel_tol=1e-12, snapshot_every=3))
    A_star = solve_oracle_activeset(E, X).A_hat
    curve = build_curve(trace, T, E, X, A_star=A_star, pixel_tol_db=pixel_tol_db)
    sweeps, counts = per_pixel_unconverged(trace, T.D @ A_star.data, tol_db=pixel_tol_db)
    assert list(curve.sweep) == [int(s) for s in sweeps]
    assert list(curve.unconverged) == [int(c) for c in counts]
    assert int(curve.unconverged[0]) > 0


def test_curve_length_counts_rows():
    curve = ConvergenceCurve(sweep=np.arange(3), time_s=np.zeros(3), objective=np.ones(3), re_db=None,
                             nmse_db=None, unconverged=None)
    assert len(curve) == 3
    assert len(ConvergenceCurve.empty()) == 0


def test_build_curve_without_references(seed=5):
    E, _, X = random_problem(jr.PRNGKey(seed))
    T = build_transform(E)
    _, trace = dykstra_project(T, forward_transform(T, E, X), DykstraConfig(snapshot_every=1))
    curve = build_curve(trace, T, E, X)
    assert curve.re_db is None
    assert curve.nmse_db is None
    assert curve.unconverged is None
    assert len(curve.objective) == len(trace.snapshots)
    assert len(curve) == len(trace.snapshots)


def test_single_snapshot_curve(seed=6):
    E, _, X = random_problem(jr.PRNGKey(seed))
    T = build_transform(E)
    U, _ = dykstra_project(T, forward_transform(T, E, X))
    trace = DykstraTrace(sweep=jnp.array([5]), elapsed=jnp.array([0.25]), rel_change=jnp.array([0.0]),
                         objective=jnp.array([0.0]), snapshot_sweeps=[5], snapshots=[U.data], stop_reason="rel_tol")
    curve = build_curve(trace, T, E, X, A_star=solve_triangular(T.D, U.data, lower=False))
    assert len(curve) == 1
    assert curve.re_db[0] == -math.inf
    assert curve.time_s[0] == 0.25


def test_error_decay_of_feasible_input(seed=8, m=4, n=10):
    k_e, k_a = jr.split(jr.PRNGKey(seed))
    T = build_transform(EndmemberMatrix.from_array(jr.uniform(k_e, (20, m))))
    U = T.D @ jr.dirichlet(k_a, jnp.ones(m), (n,)).T
    ratio, errors, ref_norm = error_decay(T, U, num_sweeps=10, ref_sweeps=20)
    assert ratio == 0.0
    assert len(errors) <= 10
    assert ref_norm == pytest.approx(float(jnp.linalg.norm(U)), rel=1e-12)


def test_fit_geometric_rate(num_sweeps=40):
    errors = [2.0 * 0.5**k for k in range(1, num_sweeps + 1)]
    rho, c = fit_geometric_rate(errors, floor=0.0)
    assert rho == pytest.approx(2.0)
    assert c == pytest.approx(0.5)
    assert fit_geometric_rate([1.0, 0.5]) is None
