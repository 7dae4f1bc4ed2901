"""File-based figures of run results (matplotlib, non-interactive Agg backend)."""

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .friction import (  # noqa: E402
    FrictionState,
    PreslidingState,
    advance_presliding,
    coulomb_force,
    viscous_step,
)
from .observer import SecondOrderLowPass  # noqa: E402


def model_friction_along(fp, velocity, dt):
    """Friction model driven by a velocity trace; returns ``(f, F_c)`` arrays.

    The viscous part follows the static law ``sigma v`` for ``beta == 0``
    and the exact lag recursion otherwise.
    """
    ps, fs = PreslidingState(), FrictionState()
    f = np.empty(len(velocity))
    fc = np.empty(len(velocity))
    for i, v in enumerate(np.asarray(velocity, dtype=float).tolist()):
        ps = advance_presliding(fp, ps, v, dt)
        fs = FrictionState(coulomb_force(fp, ps), viscous_step(fp, fs.viscous, v, dt))
        f[i], fc[i] = fs.total, fs.coulomb
    return f, fc


def friction_loop_series(columns, fp, dt, cutoff_hz=40.0):
    """Observed friction and model-computed ``f``, ``F_c`` against measured position.

    The observed series is the filtered observer friction state; the model
    curves are computed from the equally filtered velocity estimate.
    """
    lp = SecondOrderLowPass(2.0 * math.pi * cutoff_hz, dt)
    v_filt = lp.filter(columns["v_est"])
    f_model, fc_model = model_friction_along(fp, v_filt, dt)
    return {
        "x": np.asarray(columns["x_meas"]),
        "observed": np.asarray(columns["f_filt"]),
        "model f": f_model,
        "model F_c": fc_model,
    }


def friction_loop_figure(columns, fp, dt, cutoff_hz=40.0):
    """Figure with the three labeled friction-loop series (caller closes it)."""
    series = friction_loop_series(columns, fp, dt, cutoff_hz)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    x_mm = series["x"] * 1e3
    for label in ("observed", "model f", "model F_c"):
        ax.plot(x_mm, series[label], label=label, lw=1.0)
    ax.set_xlabel("x [mm]")
    ax.set_ylabel("friction [N]")
    ax.legend()
    fig.tight_layout()
    return fig


def plot_friction_loop(columns, fp, dt, path, cutoff_hz=40.0):
    fig = friction_loop_figure(columns, fp, dt, cutoff_hz)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_errors(columns, path):
    t = columns["t"]
    fig, axes = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    axes[0].plot(t, columns["eps2"], lw=0.8, label="eps2")
    axes[0].set_ylabel("velocity error [m/s]")
    axes[1].plot(t, columns["eps3"], lw=0.8, label="eps3")
    axes[1].set_ylabel("friction error [N]")
    axes[1].set_xlabel("t [s]")
    for ax in axes:
        ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_states(columns, path):
    t = columns["t"]
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 7))
    axes[0].plot(t, columns["x_meas"], lw=0.8, label="x measured")
    axes[0].plot(t, columns["x_ref"], lw=0.8, label="x reference")
    axes[0].set_ylabel("x [m]")
    axes[1].plot(t, columns["v_true"], lw=0.8, label="true")
    axes[1].plot(t, columns["v_est"], lw=0.8, label="observed")
    axes[1].set_ylabel("v [m/s]")
    axes[2].plot(t, columns["f_true"], lw=0.8, label="true")
    axes[2].plot(t, columns["f_est"], lw=0.8, label="observed")
    axes[2].set_ylabel("f [N]")
    axes[2].set_xlabel("t [s]")
    for ax in axes:
        ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def emit_plots(result, cfg, directory, stem="run"):
    """Write state, error and friction-loop figures; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cols = result.columns
    if len(cols.get("t", ())) == 0:
        return []
    try:
        return [
            plot_states(cols, directory / f"{stem}_states.png"),
            plot_errors(cols, directory / f"{stem}_errors.png"),
            plot_friction_loop(cols, cfg.friction, cfg.dt, directory / f"{stem}_friction_loop.png",
                               cfg.observer.cutoff_hz),
        ]
    except OSError as exc:
        raise OSError(f"cannot write plots to {directory}: {exc}") from exc
