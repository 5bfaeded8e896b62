#!/usr/bin/env python3
"""
End-to-end experiment runs on the shipped presets. Every test here solves
experiment-sized SDPs and is skipped unless pytest runs with --runslow.
"""

import math
import os

import numpy as np
import pytest
from scipy.stats import spearmanr

from conic_solver import residual_trend_ok
from run_experiments import DEFAULT_JOBS, ExperimentConfig, run_single, run_sweep

PRESETS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs")
SUPPORT_TOL = 1e-3


def load_preset(name: str) -> ExperimentConfig:
    return ExperimentConfig.load(os.path.join(PRESETS, name))


def check_certificate(result, dims_total: int):
    """Dual polynomial bounds and the dual value of a noiseless successful run."""
    metrics = result["metrics"]
    diagnostics = result["estimate"].diagnostics
    assert metrics["certificate_sup_norm"] <= 1.0 + 1e-3
    for label, value in diagnostics["true_support_min_norm"].items():
        assert value >= 1.0 - 1e-2, label
    assert abs(metrics["dual_value"] - dims_total) <= 1e-2
    assert residual_trend_ok(result["solution"].history)


@pytest.mark.slow
@pytest.mark.parametrize("preset", ["random_spaced.json", "many_targets.json", "closely_spaced.json"])
def test_fixed_support_presets_are_recovered(preset, tmp_path):
    config = load_preset(preset)
    result = run_single(config, str(tmp_path))
    metrics = result["metrics"]
    assert metrics["solver_status"] == "optimal"
    assert result["solution"].block_duals is not None
    assert metrics["radar_count"] == config.dims["L"]
    assert metrics["comms_count"] == config.dims["Q"]
    assert metrics["radar_support_error"] < SUPPORT_TOL
    assert metrics["comms_support_error"] < SUPPORT_TOL
    assert metrics["message_error"] < SUPPORT_TOL
    assert metrics["success"]
    check_certificate(result, config.dims["L"] + config.dims["Q"])


@pytest.mark.slow
def test_two_radar_and_two_comms_emitters(tmp_path):
    config = load_preset("multi_emitter.json")
    result = run_single(config, str(tmp_path))
    metrics = result["metrics"]
    assert metrics["radar_count"] == 2
    assert metrics["comms_count"] == 2
    assert metrics["radar_support_error"] < SUPPORT_TOL
    assert metrics["comms_support_error"] < SUPPORT_TOL
    assert metrics["success"]


@pytest.mark.slow
def test_success_probability_decreases_with_targets_and_subspace(tmp_path):
    config = load_preset("phase_transition.yaml")
    _, summary = run_sweep(config, str(tmp_path), jobs=DEFAULT_JOBS, show_progress=False)
    table = {(entry["LQ"], entry["J"]): entry for entry in summary}
    sizes = sorted({key[0] for key in table})
    subspaces = sorted({key[1] for key in table})

    def non_increasing(first, second):
        slack = max(first["std_error"], second["std_error"])
        return second["success_probability"] <= first["success_probability"] + slack

    for J in subspaces:
        for a, b in zip(sizes, sizes[1:]):
            assert non_increasing(table[(a, J)], table[(b, J)]), (a, b, J)
    for L in sizes:
        for a, b in zip(subspaces, subspaces[1:]):
            assert non_increasing(table[(L, a)], table[(L, b)]), (L, a, b)


@pytest.mark.slow
def test_sync_lag_is_periodic(tmp_path):
    config = load_preset("sync_lag_sweep.json")
    config.trials = 20
    rows, summary = run_sweep(config, str(tmp_path), jobs=DEFAULT_JOBS, show_progress=False)

    def delay_errors(lag):
        values = [r["radar_delay_error"] for r in rows
                  if math.isclose(r["sync_lag"], lag) and r.get("radar_delay_error") is not None]
        return np.array([v for v in values if np.isfinite(v)])

    start, end = delay_errors(0.0), delay_errors(1.0)
    noise = np.sqrt(np.var(start) / max(len(start), 1) + np.var(end) / max(len(end), 1))
    assert abs(start.mean() - end.mean()) <= 3.0 * noise + 1e-9
    for entry in summary:
        if np.isfinite(entry["mean_radar_doppler_error"]):
            assert entry["mean_radar_doppler_error"] <= 1e-3


@pytest.mark.slow
def test_errors_fall_with_snr(tmp_path):
    config = load_preset("snr_sweep.json")
    config.trials = 20
    _, summary = run_sweep(config, str(tmp_path), jobs=DEFAULT_JOBS, show_progress=False)
    snr = [entry["snr_db"] for entry in summary]
    for column in ("mean_radar_support_error", "mean_message_error"):
        values = [entry[column] for entry in summary]
        rho, _ = spearmanr(snr, values, nan_policy="omit")
        assert rho <= -0.9, column


@pytest.mark.slow
def test_unequal_pri_point_is_recovered(tmp_path):
    config = load_preset("unequal_pri_sweep.json").at_point({"sub_symbols": 2})
    result = run_single(config, str(tmp_path))
    metrics = result["metrics"]
    assert result["scenario"].dims.sub_symbols == 2
    assert metrics["solver_status"] == "optimal"
    assert metrics["certificate_sup_norm"] <= 1.0 + 1e-3
    assert metrics["radar_count"] == config.dims["L"]
    assert metrics["comms_count"] == config.dims["Q"]
    assert metrics["radar_support_error"] < SUPPORT_TOL
    assert metrics["comms_support_error"] < SUPPORT_TOL
