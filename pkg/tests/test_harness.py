import dataclasses
import math

import numpy as np
import pytest

from frictobs.cli import decimate
from frictobs.config import apply_overrides, preset
from frictobs.harness import (
    COLUMNS,
    RunResult,
    compute_metrics,
    convergence_time,
    eigen_scan,
    export_csv,
    half_decade_bands,
    hold_errors,
    noise_streams,
    read_csv,
    run,
    run_closed_loop,
    transient_time,
)
from frictobs.plotting import emit_plots, friction_loop_figure, friction_loop_series


@pytest.fixture(scope="module")
def short_run():
    cfg = apply_overrides(preset("illustration_stable"), ["duration=1.5"])
    return cfg, run(cfg)


def same_metrics(a, b):
    assert a.keys() == b.keys()
    for k in a:
        assert (math.isnan(a[k]) and math.isnan(b[k])) or a[k] == b[k], k


def test_csv_round_trip_is_bit_exact(short_run, tmp_path):
    cfg, res = short_run
    path = export_csv(res, tmp_path / "run.csv")
    text = path.read_text(encoding="utf-8")
    assert text.splitlines()[0] == ",".join(COLUMNS)
    back = read_csv(path)
    for name in COLUMNS:
        np.testing.assert_array_equal(back[name], res.columns[name])
    same_metrics(compute_metrics(back, cfg), res.metrics)


def test_csv_number_format(tmp_path):
    res = RunResult({"t": np.array([0.1, 1e-20, -2.5])})
    lines = export_csv(res, tmp_path / "x.csv").read_text(encoding="utf-8").splitlines()
    assert lines == ["t", "%.17g" % 0.1, "%.17g" % 1e-20, "-2.5"]


def test_empty_result_writes_header_only(tmp_path):
    path = export_csv(RunResult.empty(), tmp_path / "e.csv")
    assert path.read_text(encoding="utf-8") == ",".join(COLUMNS) + "\n"
    assert all(len(v) == 0 for v in read_csv(path).values())


def test_csv_write_failure_is_reported(tmp_path):
    with pytest.raises(OSError):
        export_csv(RunResult.empty(), tmp_path / "missing" / "x.csv")


def test_noisy_scenario_requires_seed():
    cfg = dataclasses.replace(preset("illustration_stable"), seed=None)
    with pytest.raises(ValueError):
        noise_streams(cfg, 10)


def test_noise_streams_are_seeded_and_distinct():
    cfg = preset("illustration_stable")
    u1, e1 = noise_streams(cfg, 1000)
    u2, e2 = noise_streams(cfg, 1000)
    np.testing.assert_array_equal(u1, u2)
    np.testing.assert_array_equal(e1, e2)
    u3, _ = noise_streams(dataclasses.replace(cfg, seed=2), 1000)
    assert not np.array_equal(u1, u3)
    assert np.corrcoef(u1, e1)[0, 1] < 0.5


def test_transient_time():
    assert transient_time(preset("illustration_stable")) == pytest.approx(5 / 2.4388, rel=1e-4)
    assert transient_time(preset("illustration_divergent")) == 0.0


def test_divergent_run_is_truncated_at_detection(divergent_run):
    cfg, res = divergent_run
    assert res.metrics["diverged"] == 1.0
    assert len(res) < cfg.n_steps
    hold = int(round(cfg.divergence.hold / cfg.dt))
    onset = res.metrics["divergence_onset"]
    assert res.columns["t"][-1] == pytest.approx(onset + (hold - 1) * cfg.dt)


def test_divergence_does_not_truncate_closed_loop(positioning_runs):
    for cfg, res in positioning_runs:
        assert len(res) == cfg.n_steps


@pytest.mark.parametrize("name", ["illustration_stable", "illustration_divergent"])
def test_golden_fixture_series(name, stable_run, divergent_run, fixtures_dir):
    _, res = stable_run if name == "illustration_stable" else divergent_run
    golden = read_csv(fixtures_dir / f"{name}.csv")
    fresh = decimate(res).columns
    for col in COLUMNS:
        np.testing.assert_allclose(fresh[col], golden[col], rtol=1e-9, atol=1e-12)


def test_constant_velocity_input_balances_friction(constant_velocity_run):
    cfg, res = constant_velocity_run
    c = res.columns
    np.testing.assert_allclose(cfg.plant.input_gain * c["u"] - cfg.plant.gravity_load,
                               c["f_true"], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(c["v_true"], 0.01, rtol=1e-12)


def test_closed_loop_metrics_present(positioning_runs, chirp_runs):
    (_, pid), _ = positioning_runs
    assert {"hold_error_0", "hold_error_1", "rms_error"} <= set(pid.metrics)
    (_, cpid), _ = chirp_runs
    assert {f"band_rms_{j}" for j in range(5)} <= set(cpid.metrics)


def test_half_decade_bands():
    bands = half_decade_bands(0.01, 3.0)
    assert len(bands) == 5
    assert bands[0][0] == 0.01 and bands[-1][1] == 3.0
    for (lo, hi), ratio in zip(bands[:-1], [math.sqrt(10)] * 4):
        assert hi / lo == pytest.approx(ratio)


def test_hold_errors_use_hold_tails():
    cfg = preset("positioning_pid")
    t = np.arange(75_000) * 1e-4
    err = np.where(t >= 3.4, 1.0, 0.0) + np.where(t >= 6.9, 1.0, 0.0)
    assert hold_errors(cfg, t, err) == pytest.approx([1.0, 2.0])


def test_convergence_time_on_exponential():
    t = np.arange(0, 5, 1e-3)
    e = np.exp(-2.0 * t)
    assert convergence_time(t, 0 * t, e) == pytest.approx(math.log(20) / 2, abs=2e-3)
    assert math.isnan(convergence_time(t, 0 * t, np.ones_like(t) * np.r_[np.ones(4999), 2.0]))
    assert math.isnan(convergence_time(t[:0], t[:0], t[:0]))


def test_time_series_modes_only():
    with pytest.raises(ValueError):
        run(preset("design_report"))
    with pytest.raises(ValueError):
        run_closed_loop(apply_overrides(preset("illustration_stable"), ["mode=closed_loop_pid"]))


def test_quantized_measurement():
    cfg = apply_overrides(preset("positioning_pid"), ["duration=0.8", "signal.quantization=1e-6"])
    x = run(cfg).columns["x_meas"]
    np.testing.assert_allclose(x / 1e-6, np.round(x / 1e-6), atol=1e-6)


def test_eigen_scan_table():
    cfg = apply_overrides(preset("eigen_scan"), ["eigen_scan.n_stiffness=50"])
    table = eigen_scan(cfg)
    assert len(table) == 50 * len(cfg.eigen_scan.rhos)
    rho = table.columns["rho"]
    for r in cfg.eigen_scan.rhos:
        ok = table.columns["real_negative"][rho == r]
        assert bool(np.all(ok == 1.0)) == (r > 1.0)
    assert table.metrics["all_real_negative"] == 0.0
    dom = table.columns["dominant_pole"][rho == 1.02][0]
    assert dom == pytest.approx(-math.sqrt(8000 / 0.538) * 0.02, rel=1e-9)


def test_friction_loop_plot_has_three_labeled_series(short_run, tmp_path):
    cfg, res = short_run
    fig = friction_loop_figure(res.columns, cfg.friction, cfg.dt)
    labels = [line.get_label() for line in fig.axes[0].get_lines()]
    assert labels == ["observed", "model f", "model F_c"]
    series = friction_loop_series(res.columns, cfg.friction, cfg.dt)
    assert all(len(series[k]) == len(res) for k in ("x", "observed", "model f", "model F_c"))
    paths = emit_plots(res, cfg, tmp_path, "s")
    assert [p.name for p in paths] == ["s_states.png", "s_errors.png", "s_friction_loop.png"]
    assert all(p.stat().st_size > 0 for p in paths)
    assert emit_plots(RunResult.empty(), cfg, tmp_path) == []
