"""Timing experiments: SUDAP stopped at a relative error against the oracle.

For every value of the swept variable and every repeat, a synthetic instance
is simulated, its exact solution A* computed by the active-set oracle, and
SUDAP run until RE(A_hat, A*) <= stop_re_db. One CSV row per run is written
as soon as the run finishes; a summary CSV holds mean and standard deviation
per value.
"""
import logging
import math
from pathlib import Path

import jax.random as jr
import numpy as np
import pandas as pd

from unmix_jax.dykstra import DykstraConfig
from unmix_jax.errors import ConfigError, IoError, UnmixError
from unmix_jax.metrics import nmse_db, relative_error_db
from unmix_jax.simdata import SpectralLibrary, simulate
from unmix_jax.solver import solve_oracle_activeset, solve_sudap

logger = logging.getLogger(__name__)

SWEEP_VARS = ("m", "pixels", "snr", "min-angle")
RUN_COLUMNS = ("sweep_var", "value", "repeat", "seed", "m", "n_pixels", "snr_db", "min_angle_deg", "status",
               "error", "oracle_time_s", "sudap_time_s", "time_to_threshold_s", "sweeps", "final_re_db", "nmse_db")
SUMMARY_METRICS = ("oracle_time_s", "sudap_time_s", "time_to_threshold_s", "sweeps", "final_re_db", "nmse_db")


def pixel_shape(n):
    """Square (r, r) when n is a perfect square, else a single row."""
    r = math.isqrt(n)
    return (r, r) if r * r == n else (1, n)


def parse_values(sweep_var, text):
    """Parse a comma separated list of values for `sweep_var`."""
    if sweep_var not in SWEEP_VARS:
        raise ConfigError(f"unknown sweep variable {sweep_var!r}, expected one of {SWEEP_VARS}")
    try:
        cast = int if sweep_var in ("m", "pixels") else float
        values = [cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse values {text!r} for --sweep-var {sweep_var}")
    if not values:
        raise ConfigError("no values to sweep")
    return values


def _instance_seed(seed, value_index, repeat):
    key = jr.fold_in(jr.fold_in(jr.PRNGKey(seed), value_index), repeat)
    return int(jr.randint(key, (), 0, np.iinfo(np.int32).max))


def run_instance(lib, m, shape, snr_db, min_angle_deg, seed, stop_re_db, max_sweeps=20000, threads=None):
    """Simulate one instance, solve it with the oracle and with SUDAP; return the metric columns."""
    E, A_true, X = simulate(lib, m, shape=shape, snr_db=snr_db, min_angle_deg=min_angle_deg, seed=seed)
    oracle = solve_oracle_activeset(E, X)
    cfg = DykstraConfig(max_sweeps=max_sweeps, rel_tol=0.0, reference=oracle.A_hat, stop_re_db=stop_re_db,
                        threads=threads)
    sudap = solve_sudap(E, X, cfg)
    return {
        "oracle_time_s": oracle.wall_time,
        "sudap_time_s": sudap.wall_time,
        "time_to_threshold_s": sudap.trace.time_to_threshold,
        "sweeps": sudap.trace.num_sweeps,
        "final_re_db": relative_error_db(sudap.A_hat, oracle.A_hat),
        "nmse_db": nmse_db(sudap.A_hat, A_true),
    }


def summarize(runs: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard deviation of every metric per swept value, over successful runs."""
    ok = runs[runs["status"] == "ok"]
    metrics = ok[list(SUMMARY_METRICS)].astype(float).assign(value=ok["value"])
    grouped = metrics.groupby("value", sort=False)
    counts = runs.groupby("value", sort=False)["status"].agg(runs_ok=lambda s: int((s == "ok").sum()),
                                                             runs_failed=lambda s: int((s != "ok").sum()))
    summary = counts.join(grouped.mean().add_suffix("_mean")).join(grouped.std().add_suffix("_std"))
    return summary.reset_index()


def run_benchmark(lib: SpectralLibrary,
                  sweep_var,
                  values,
                  repeats=3,
                  stop_re_db=-100.0,
                  seed=0,
                  out_dir=".",
                  m=5,
                  n_pixels=1024,
                  snr_db=30.0,
                  min_angle_deg=10.0,
                  max_sweeps=20000,
                  threads=None):
    """Sweep one variable and write `benchmark_<var>_runs.csv` and `benchmark_<var>_summary.csv`.

    Instance failures (e.g. too few endmembers at a large min angle) are
    recorded as rows with status "failed" and do not stop the sweep.

    Returns:
        runs, summary: pandas DataFrames.
    """
    if sweep_var not in SWEEP_VARS:
        raise ConfigError(f"unknown sweep variable {sweep_var!r}, expected one of {SWEEP_VARS}")
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(out_dir, e.strerror or str(e))
    tag = sweep_var.replace("-", "_")
    runs_path = out_dir / f"benchmark_{tag}_runs.csv"
    summary_path = out_dir / f"benchmark_{tag}_summary.csv"

    rows = []
    for v_idx, value in enumerate(values):
        params = dict(m=m, n_pixels=n_pixels, snr_db=snr_db, min_angle_deg=min_angle_deg)
        params[{"m": "m", "pixels": "n_pixels", "snr": "snr_db", "min-angle": "min_angle_deg"}[sweep_var]] = value
        for repeat in range(repeats):
            instance_seed = _instance_seed(seed, v_idx, repeat)
            row = dict(sweep_var=sweep_var, value=value, repeat=repeat, seed=instance_seed, status="ok", error="",
                       **params)
            try:
                row.update(
                    run_instance(lib, int(params["m"]), pixel_shape(int(params["n_pixels"])), params["snr_db"],
                                 params["min_angle_deg"], instance_seed, stop_re_db, max_sweeps, threads))
            except UnmixError as e:
                logger.warning("benchmark %s=%s repeat %d failed: %s", sweep_var, value, repeat, e)
                row.update(status="failed", error=type(e).__name__)
            rows.append(row)
            _write_csv(pd.DataFrame(rows, columns=list(RUN_COLUMNS)), runs_path)
            logger.info("benchmark %s=%s repeat %d: %s", sweep_var, value, repeat, row["status"])

    runs = pd.DataFrame(rows, columns=list(RUN_COLUMNS))
    summary = summarize(runs)
    _write_csv(summary, summary_path)
    return runs, summary


def _write_csv(frame, path):
    try:
        frame.to_csv(path, index=False, na_rep="", float_format="%.17g")
    except OSError as e:
        raise IoError(path, e.strerror or str(e))
