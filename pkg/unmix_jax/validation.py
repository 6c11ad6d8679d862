"""Property suite run by `unmix-jax validate`.

Each check runs on seeded random instances and reports its worst-case error
next to the threshold it must stay under.
"""
import logging
import math
import time
from typing import Callable, List, Optional

import chex
import jax.numpy as jnp
import jax.random as jr
import numpy as np

from unmix_jax.dykstra import DykstraConfig, dykstra_project
from unmix_jax.errors import ConfigError
from unmix_jax.metrics import error_decay, fit_geometric_rate, nmse_db, relative_error_db
from unmix_jax.model import EndmemberMatrix, ImageCube, column_feasibility
from unmix_jax.projectors import project_intersection_geometric, project_intersection_kkt
from unmix_jax.simdata import synthetic_library, simulate
from unmix_jax.solver import solve_oracle_activeset
from unmix_jax.subspace import SubspaceTransform, build_transform, forward_transform, inverse_transform

logger = logging.getLogger(__name__)


@chex.dataclass
class PropertyResult:
    name: str
    worst: float
    threshold: float
    passed: bool
    detail: str = ""


@chex.dataclass
class ValidationReport:
    results: List[PropertyResult]
    elapsed: float

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def failed(self):
        return [r.name for r in self.results if not r.passed]

    def format_table(self):
        lines = [f"{'property':<26} {'worst':>12} {'threshold':>12}  status"]
        for r in self.results:
            status = "pass" if r.passed else "FAIL"
            lines.append(f"{r.name:<26} {r.worst:>12.4g} {r.threshold:>12.4g}  {status}  {r.detail}".rstrip())
        return "\n".join(lines)


def _result(name, worst, threshold, below=True, detail=""):
    passed = worst <= threshold if below else worst >= threshold
    logger.info("%s: worst=%.4g threshold=%.4g %s", name, worst, threshold, "pass" if passed else "FAIL")
    return PropertyResult(name=name, worst=float(worst), threshold=float(threshold), passed=bool(passed),
                          detail=detail)


def _range_result(name, value, low, high):
    passed = low <= value <= high
    logger.info("%s: %.4g in [%.4g, %.4g] %s", name, value, low, high, "pass" if passed else "FAIL")
    return PropertyResult(name=name, worst=float(value), threshold=float(high), passed=bool(passed),
                          detail=f"expected in [{low}, {high}]")


def _hooked_transform(E, transform_hook):
    T = build_transform(E)
    return T if transform_hook is None else transform_hook(T)


def check_projector_equivalence(key, num_triples=1000, transform_hook=None, tol=1e-12):
    """Geometric and KKT projections onto S ∩ N_i agree entrywise."""
    worst, count = 0.0, 0
    while count < num_triples:
        key, k_m, k_e, k_z = jr.split(key, 4)
        m = int(jr.randint(k_m, (), 2, 9))
        E = EndmemberMatrix.from_array(jr.normal(k_e, (4 * m, m)))
        T = _hooked_transform(E, transform_hook)
        Z = 3.0 * jr.normal(k_z, (m, 16))
        for i in range(min(m, num_triples - count)):
            diff = project_intersection_geometric(T, i, Z) - project_intersection_kkt(T, i, Z)
            worst = max(worst, float(jnp.max(jnp.abs(diff))))
            count += 1
    return _result("projector_equivalence", worst, tol, detail=f"{count} triples")


def check_reduced_problem(key, num_abundances=100, tol_gap=1e-8, tol_ls=1e-10):
    """||X - EA||^2 - ||Y - DA||^2 does not depend on A, and Y = D A_LS."""
    k_e, k_x, k_a = jr.split(key, 3)
    m, n_bands, n = 5, 40, 16
    E = EndmemberMatrix.from_array(jr.uniform(k_e, (n_bands, m)))
    X = ImageCube.from_array(jr.uniform(k_x, (n_bands, n)))
    T = build_transform(E)
    Y = forward_transform(T, E, X).data

    As = jr.normal(k_a, (num_abundances, m, n))
    gaps = jnp.array([jnp.sum((X.data - E.data @ A) ** 2) - jnp.sum((Y - T.D @ A) ** 2) for A in As])
    gap_spread = float((jnp.max(gaps) - jnp.min(gaps)) / jnp.maximum(jnp.abs(jnp.mean(gaps)), 1e-300))

    A_ls = jnp.linalg.solve(E.data.T @ E.data, E.data.T @ X.data)
    ls_err = float(jnp.linalg.norm(Y - T.D @ A_ls) / jnp.linalg.norm(Y))
    return [_result("objective_gap_constancy", gap_spread, tol_gap),
            _result("ls_identity", ls_err, tol_ls)]


def _sudap(E, X, cfg, transform_hook=None):
    T = _hooked_transform(E, transform_hook)
    U, trace = dykstra_project(T, forward_transform(T, E, X), cfg)
    return T, U, trace, inverse_transform(T, U, shape=X.shape)


def check_oracle_instances(key,
                           num_instances=50,
                           shape=(32, 32),
                           snr_db=30.0,
                           min_angle_deg=10.0,
                           transform_hook=None,
                           threads=None):
    """SUDAP against the active-set oracle, feasibility, hyperplane confinement
    and geometric convergence over the same synthetic instances."""
    k_lib, k_inst = jr.split(key)
    lib = synthetic_library(n_signatures=200, seed=int(jr.randint(k_lib, (), 0, 2**31 - 1)))
    seeds = np.asarray(jr.randint(k_inst, (num_instances,), 0, 2**31 - 1))
    cfg = DykstraConfig(max_sweeps=5000, rel_tol=1e-12, snapshot_every=1, threads=threads)

    worst_re, worst_sum, worst_min, worst_plane, worst_rate, worst_slope = -math.inf, 0.0, math.inf, 0.0, 0.0, -math.inf
    for k, seed in enumerate(seeds):
        m = 3 + k % 6
        E, _, X = simulate(lib, m, shape=shape, snr_db=snr_db, min_angle_deg=min_angle_deg, seed=int(seed))
        T, U, trace, A = _sudap(E, X, cfg, transform_hook)
        A_star = solve_oracle_activeset(E, X).A_hat

        worst_re = max(worst_re, relative_error_db(A, A_star))
        report = column_feasibility(A)
        worst_sum = max(worst_sum, report.max_sum_violation)
        worst_min = min(worst_min, report.min_entry)
        for sweep, snapshot in zip(trace.snapshot_sweeps, trace.snapshots):
            if sweep >= 1:
                worst_plane = max(worst_plane, float(jnp.max(jnp.abs(T.b @ snapshot - 1.0))))

        ratio, errors, ref_norm = error_decay(T, forward_transform(T, E, X), num_sweeps=1000, threads=threads)
        worst_rate = max(worst_rate, ratio)
        fit = fit_geometric_rate(errors, floor=1e-13 * ref_norm)
        if fit is not None:
            worst_slope = max(worst_slope, math.log(fit[1]))

    return [
        _result("oracle_equivalence_db", worst_re, -120.0, detail=f"{num_instances} instances"),
        _result("column_sum_deviation", worst_sum, 1e-9),
        _result("min_abundance", worst_min, -1e-7, below=False),
        _result("hyperplane_confinement", worst_plane, 1e-9),
        _result("error_decay_1000_sweeps", worst_rate, 1e-10),
        _result("tail_log_slope", worst_slope, 0.0),
    ]


def check_noiseless_recovery(key, shape=(16, 16), threads=None):
    """A feasible noiseless cube is recovered to NMSE <= -160 dB."""
    k_lib, k_inst = jr.split(key)
    lib = synthetic_library(n_signatures=60, seed=int(jr.randint(k_lib, (), 0, 2**31 - 1)))
    seed = int(jr.randint(k_inst, (), 0, 2**31 - 1))
    E, A, X = simulate(lib, 5, shape=shape, snr_db=math.inf, min_angle_deg=10.0, seed=seed)
    _, _, _, A_hat = _sudap(E, X, DykstraConfig(rel_tol=1e-12, threads=threads))
    return _result("noiseless_nmse_db", nmse_db(A_hat, A), -160.0)


def check_thread_determinism(key, threads=4):
    """Blocked runs on one and several threads give bit-identical iterates."""
    k_e, k_x = jr.split(key)
    E = EndmemberMatrix.from_array(jr.uniform(k_e, (30, 6)))
    X = ImageCube.from_array(jr.uniform(k_x, (30, 1000)))
    runs = [_sudap(E, X, DykstraConfig(max_sweeps=50, rel_tol=0.0, block_size=128, threads=t))[1].data
            for t in (1, threads)]
    worst = float(jnp.max(jnp.abs(runs[0] - runs[1])))
    return _result("thread_determinism", worst, 0.0, detail=f"1 vs {threads} threads")


def sweep_time(m, n, key, num_sweeps=20, warmup=3):
    """Median wall time of one sweep on random data, fixed-K mode."""
    k_e, k_y = jr.split(key)
    T = build_transform(EndmemberMatrix.from_array(jr.normal(k_e, (4 * m, m))))
    Y = jr.normal(k_y, (m, n))
    _, trace = dykstra_project(T, Y, DykstraConfig(max_sweeps=num_sweeps, rel_tol=0.0, block_size=n, threads=1))
    return float(np.median(np.diff(np.asarray(trace.elapsed))[warmup:]))


def check_sweep_scaling(key, n=10_000, m=8, low=2.5, high=6.0):
    """Sweep cost is linear in n and quadratic in m."""
    t_n = sweep_time(m, n, key)
    ratio_n = sweep_time(m, 4 * n, key) / t_n
    ratio_m = sweep_time(2 * m, n, key) / t_n
    return [_range_result("sweep_time_ratio_4n", ratio_n, low, high),
            _range_result("sweep_time_ratio_2m", ratio_m, low, high)]


def run_validation(seed=0,
                   num_instances=50,
                   shape=(32, 32),
                   num_triples=1000,
                   include_timing=True,
                   transform_hook: Optional[Callable[[SubspaceTransform], SubspaceTransform]] = None,
                   threads=None) -> ValidationReport:
    """Run every property check.

    Args:
        seed: base seed for all instances.
        num_instances: synthetic instances compared against the oracle.
        shape: spatial shape of those instances.
        num_triples: (transform, i, Z) triples for the projector check.
        include_timing: run the sweep cost scaling check.
        transform_hook: applied to every transform the checks build (fault injection).
        threads: worker threads for the Dykstra runs.
    """
    if num_instances < 1:
        raise ConfigError(f"number of instances must be >= 1, got {num_instances}")
    start = time.perf_counter()
    keys = jr.split(jr.PRNGKey(seed), 6)
    results = [check_projector_equivalence(keys[0], num_triples, transform_hook)]
    results += check_reduced_problem(keys[1])
    results += check_oracle_instances(keys[2], num_instances, shape, transform_hook=transform_hook, threads=threads)
    results.append(check_noiseless_recovery(keys[3], threads=threads))
    results.append(check_thread_determinism(keys[4]))
    if include_timing:
        results += check_sweep_scaling(keys[5])
    return ValidationReport(results=results, elapsed=time.perf_counter() - start)
