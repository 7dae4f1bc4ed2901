"""Scenario orchestration, metrics and CSV persistence.

Every run records one row per sample ``t_i = i dt`` holding the state
*before* the step taken with the input of that row.  The observer estimate
in row ``i`` uses measurements up to and including ``t_i`` and inputs up to
``t_{i-1}``; the command of row ``i`` may already use it.

Column meanings
---------------
``u``
    actuator command [V].
``f_true`` / ``fc_true``
    total friction and its Coulomb part acting on the plant [N].
``f_est``
    total friction estimate [N] (the observer friction state, plus
    ``sigma v~`` for the static viscous variant).
``f_filt``
    low-pass filtered observer friction state [N] (the compensation signal).
``eps2``, ``eps3``
    ``v_est - v_true`` and ``f_est - f_true``.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict

import numpy as np

from .control import PidState, compensated_input, pid_step
from .friction import coulomb_force
from .observer import (
    DivergenceDetector,
    ObserverRunner,
    ObserverState,
    back_transform,
    design_gains,
    observer_eigenvalues,
    observer_step,
    plant_blocks,
)
from .plant import SimulationFault, initial_state, plant_step
from .signals import (
    ChirpSpec,
    ConstantVelocitySpec,
    NoiseConfig,
    PositioningSpec,
    band_limited_noise,
    chirp_frequency,
    chirp_reference,
    constant_velocity_reference,
    fade_in,
    positioning_reference,
)

COLUMNS = ("t", "u", "x_ref", "x_true", "x_meas", "v_true", "v_est",
           "f_true", "fc_true", "f_est", "f_filt", "eps2", "eps3")
CONVERGENCE_BAND = 0.05
HOLD_TAIL = 0.2  # fraction of each hold phase used for the steady-state error


@dataclass
class RunResult:
    columns: Dict[str, np.ndarray]
    metrics: Dict[str, float] = field(default_factory=dict)

    def __len__(self):
        return len(next(iter(self.columns.values()), ()))

    @classmethod
    def empty(cls):
        return cls({name: np.empty(0) for name in COLUMNS})


def _gains(cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return design_gains(cfg.friction, cfg.plant.mass, cfg.observer.rho)


def _runner(cfg, gains):
    ob = cfg.observer
    return ObserverRunner(cfg.friction, cfg.plant.mass, gains, cfg.dt,
                          2.0 * math.pi * ob.cutoff_hz, ob.method,
                          2.0 * math.pi * ob.replica_cutoff_hz)


def noise_streams(cfg, n):
    """Input and measurement noise sequences derived from ``cfg.seed``."""
    if cfg.noisy and cfg.seed is None:
        raise ValueError("a seed is required for scenarios with noise")
    sig = cfg.signal
    seeds = np.random.SeedSequence(0 if cfg.seed is None else cfg.seed).spawn(2)
    out = []
    for noise, ss in zip((sig.input_noise, sig.measurement_noise), seeds):
        nc = NoiseConfig(int(ss.generate_state(1)[0]), noise.std, noise.cutoff_hz,
                         cfg.sample_rate, noise.order)
        out.append(band_limited_noise(nc, n))
    return out


def reference(cfg, t):
    """Reference position and velocity for closed-loop and constant-velocity runs."""
    sig = cfg.signal
    if sig.reference == "positioning":
        return positioning_reference(_positioning_spec(cfg), t)
    if sig.reference == "chirp":
        return chirp_reference(_chirp_spec(cfg), t)
    if sig.reference == "constant_velocity":
        return constant_velocity_reference(ConstantVelocitySpec(sig.velocity), t)
    return np.zeros_like(t), np.zeros_like(t)


def _positioning_spec(cfg):
    s = cfg.signal
    return PositioningSpec(tuple(s.setpoints), s.ramp_time, s.hold_time, s.start_delay)


def _chirp_spec(cfg):
    s = cfg.signal
    return ChirpSpec(s.chirp_f0, s.chirp_f1, cfg.duration, s.max_velocity)


def _measure(cfg, x, eta):
    xm = x + eta
    q = cfg.signal.quantization
    if q > 0.0:
        xm = q * round(xm / q)
    return xm


def _plant_friction(cfg, st):
    fp = cfg.friction
    if cfg.plant.realization == "state_space":
        return st.w3, coulomb_force(fp, st.presliding)
    return st.friction.total, st.friction.coulomb


class _Recorder:
    def __init__(self, n):
        self.data = {name: np.empty(n) for name in COLUMNS}
        self.n = 0

    def add(self, **row):
        i = self.n
        for name in COLUMNS:
            self.data[name][i] = row[name]
        self.n += 1

    def columns(self):
        return {name: arr[: self.n].copy() for name, arr in self.data.items()}


def _simulate(cfg, closed_loop, compensate):
    n = cfg.n_steps
    dt = cfg.dt
    pp, fp = cfg.plant.params(), cfg.friction
    K, G = pp.input_gain, pp.gravity_load
    t = np.arange(n) * dt
    x_ref, v_ref = reference(cfg, t)
    u_noise, eta = noise_streams(cfg, n)
    # smooth start so the input does not kick the plant with a step
    u_noise = u_noise * fade_in(t, cfg.signal.input_ramp)
    gains = _gains(cfg)
    runner = _runner(cfg, gains)
    dv = cfg.divergence
    detector = DivergenceDetector(dt, dv.factor, dv.hold, dv.velocity_floor, dv.force_floor)
    const_v = cfg.signal.reference == "constant_velocity" and not closed_loop
    st = initial_state(0.0, cfg.signal.velocity if const_v else 0.0, fp)
    if closed_loop:
        pid_gains, d_cut = cfg.controller.resolve(pp, fp)
        limits = cfg.controller.output_limits
        pid = PidState()
    rec = _Recorder(n)
    for i in range(n):
        f_true, fc_true = _plant_friction(cfg, st)
        x_meas = _measure(cfg, st.x, eta[i])
        v_est, w3, _, f_filt = runner.estimate(x_meas)
        f_est = runner.total_friction(v_est, w3)
        if closed_loop:
            u_pid, pid = pid_step(pid_gains, pid, x_ref[i] - x_meas, dt, d_cut, limits)
            u = u_pid + G / K
            if compensate:
                u = compensated_input(u, f_filt, K)
        elif const_v:
            u = (f_true + G) / K
        else:
            u = u_noise[i]
        if not math.isfinite(u):
            raise SimulationFault("non-finite actuator command", i)
        rec.add(t=t[i], u=u, x_ref=x_ref[i], x_true=st.x, x_meas=x_meas, v_true=st.v,
                v_est=v_est, f_true=f_true, fc_true=fc_true, f_est=f_est, f_filt=f_filt,
                eps2=v_est - st.v, eps3=f_est - f_true)
        if (detector.update(i, st.v, f_true, v_est, f_est) and dv.stop_on_divergence
                and not closed_loop):
            break
        force = K * u - G
        runner.advance(force, x_meas)
        st = plant_step(pp, fp, st, force, dt, cfg.plant.realization, step=i)
    result = RunResult(rec.columns())
    result.metrics = compute_metrics(result.columns, cfg)
    return result


def run_open_loop_observer(cfg):
    """Observer driven by band-limited input noise or a constant-velocity motion."""
    if cfg.mode != "open_loop_observer":
        raise ValueError("run_open_loop_observer needs mode 'open_loop_observer'")
    return _simulate(cfg, closed_loop=False, compensate=False)


def run_closed_loop(cfg):
    """PID position loop, optionally with observer-based friction compensation."""
    if cfg.mode not in ("closed_loop_pid", "closed_loop_pid_observer"):
        raise ValueError("run_closed_loop needs a closed-loop mode")
    if cfg.signal.reference not in ("positioning", "chirp", "constant_velocity"):
        raise ValueError("closed-loop runs need a positioning, chirp or constant_velocity reference")
    compensate = cfg.mode == "closed_loop_pid_observer" and cfg.observer.compensate
    return _simulate(cfg, closed_loop=True, compensate=compensate)


def run(cfg):
    if cfg.mode == "open_loop_observer":
        return run_open_loop_observer(cfg)
    if cfg.mode in ("closed_loop_pid", "closed_loop_pid_observer"):
        return run_closed_loop(cfg)
    if cfg.mode == "eigen_scan":
        return eigen_scan(cfg)
    raise ValueError(f"mode {cfg.mode!r} does not produce a time series")


# ---------------------------------------------------------------- metrics

def _rms(x):
    return float(np.sqrt(np.mean(np.square(x)))) if len(x) else float("nan")


def transient_time(cfg):
    """``5 / |lambda_dom|`` of the configured gains (skip window for RMS metrics)."""
    lam = observer_eigenvalues(_gains(cfg), cfg.friction, cfg.plant.mass, 0.0)
    dom = max(lam[0].real, lam[1].real)
    return 5.0 / abs(dom) if dom < 0.0 else 0.0


def noise_floor(cfg, eta):
    """RMS friction estimate of the observer fed measurement noise alone.

    The observer runs with ``u = 0``, ``wbar = eta`` and the stiffness pinned
    to zero (gross sliding), so its output is the noise-induced part of the
    estimate only.
    """
    gains = _gains(cfg)
    blocks = plant_blocks(cfg.plant.mass, cfg.friction, 0.0)
    obs = ObserverState()
    out = np.empty(len(eta))
    cache = [None, None]
    for i, e in enumerate(eta.tolist()):
        w2, w3 = back_transform(gains, obs.y1, obs.y2, e)
        out[i] = w3 + (cfg.friction.viscous_coeff * w2 if cfg.friction.static_viscous else 0.0)
        obs = observer_step(blocks, gains, obs, 0.0, e, cfg.dt, cfg.observer.method, i, cache)
    return out


def hold_errors(cfg, t, err):
    """Mean ``|err|`` over the final ``HOLD_TAIL`` fraction of each hold phase."""
    out = []
    for start, end in _positioning_spec(cfg).hold_phases():
        lo = end - HOLD_TAIL * (end - start)
        mask = (t >= lo) & (t < end)
        out.append(float(np.mean(np.abs(err[mask]))) if mask.any() else float("nan"))
    return out


def half_decade_bands(f0, f1):
    """Half-decade frequency bands ``[lo, hi)`` covering ``[f0, f1]``."""
    edges = [f0]
    while edges[-1] * math.sqrt(10.0) < f1 * (1.0 - 1e-12):
        edges.append(edges[-1] * math.sqrt(10.0))
    edges.append(f1)
    return list(zip(edges[:-1], edges[1:]))


def band_rms(cfg, t, err):
    """Tracking-error RMS per half-decade band of the chirp frequency."""
    spec = _chirp_spec(cfg)
    freq = chirp_frequency(spec, t)
    out = []
    bands = half_decade_bands(spec.f0, spec.f1)
    for j, (lo, hi) in enumerate(bands):
        last = j == len(bands) - 1
        mask = (freq >= lo) & ((freq <= hi) if last else (freq < hi))
        out.append(_rms(err[mask]))
    return bands, out


def convergence_time(t, eps2, eps3, band=CONVERGENCE_BAND):
    """Time after which ``||(eps2, eps3)||`` stays below ``band`` times its peak."""
    norm = np.hypot(eps2, eps3)
    if len(norm) == 0 or not np.all(np.isfinite(norm)):
        return float("nan")
    above = np.flatnonzero(norm > band * norm.max())
    if len(above) == 0:
        return float(t[0])
    if above[-1] == len(norm) - 1:
        return float("nan")
    return float(t[above[-1] + 1])


def compute_metrics(columns, cfg):
    """Scalar metrics of a run; a pure function of the columns and the config."""
    t = np.asarray(columns["t"])
    m = {"n_samples": float(len(t))}
    if len(t) == 0:
        return m
    eps2, eps3 = np.asarray(columns["eps2"]), np.asarray(columns["eps3"])
    skip = t >= transient_time(cfg)
    m["rms_eps2"] = _rms(eps2[skip])
    m["rms_eps3"] = _rms(eps3[skip])
    m["max_abs_eps3"] = float(np.max(np.abs(eps3)))
    eta = np.asarray(columns["x_meas"]) - np.asarray(columns["x_true"])
    m["noise_floor_rms"] = _rms(noise_floor(cfg, eta)[skip]) if np.any(eta) else 0.0
    dv = cfg.divergence
    det = DivergenceDetector(cfg.dt, dv.factor, dv.hold, dv.velocity_floor, dv.force_floor)
    for i, row in enumerate(zip(columns["v_true"], columns["f_true"],
                                columns["v_est"], columns["f_est"])):
        if det.update(i, *row):
            break
    m["diverged"] = float(det.diverged)
    m["divergence_onset"] = det.onset if det.diverged else float("nan")
    m["convergence_time"] = convergence_time(t, eps2, eps3)
    if cfg.mode in ("closed_loop_pid", "closed_loop_pid_observer"):
        err = np.asarray(columns["x_ref"]) - np.asarray(columns["x_true"])
        m["rms_error"] = _rms(err)
        m["max_abs_error"] = float(np.max(np.abs(err)))
        if cfg.signal.reference == "positioning":
            for j, e in enumerate(hold_errors(cfg, t, err)):
                m[f"hold_error_{j}"] = e
        elif cfg.signal.reference == "chirp":
            for j, e in enumerate(band_rms(cfg, t, err)[1]):
                m[f"band_rms_{j}"] = e
    return m


# ------------------------------------------------------------ tables

def eigen_scan(cfg):
    """Observer eigenvalues over a ``(rho, stiffness)`` grid.

    Returns a :class:`RunResult` whose columns are ``rho``, ``stiffness``,
    real and imaginary parts of both eigenvalues, ``real_negative`` and the
    dominant pole (largest real part at zero stiffness) of each ``rho``.
    """
    fp, mass = cfg.friction, cfg.plant.mass
    rows = []
    for rho in cfg.eigen_scan.rhos:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            g = design_gains(fp, mass, rho)
        lam0 = observer_eigenvalues(g, fp, mass, 0.0)
        dom = max(lam0[0].real, lam0[1].real)
        for k in np.linspace(0.0, fp.stiffness_clamp, cfg.eigen_scan.n_stiffness):
            l1, l2 = observer_eigenvalues(g, fp, mass, float(k))
            ok = l1.imag == 0.0 and l2.imag == 0.0 and l1.real < 0.0 and l2.real < 0.0
            rows.append((rho, k, l1.real, l1.imag, l2.real, l2.imag, float(ok), dom))
    names = ("rho", "stiffness", "lambda1_re", "lambda1_im", "lambda2_re", "lambda2_im",
             "real_negative", "dominant_pole")
    arr = np.array(rows, dtype=float).reshape(-1, len(names))
    cols = {name: arr[:, j].copy() for j, name in enumerate(names)}
    return RunResult(cols, {"all_real_negative": float(np.all(arr[:, 6] == 1.0))})


# ------------------------------------------------------------ persistence

def export_csv(result, path):
    """Write the series as UTF-8 CSV with a header row and ``%.17g`` values."""
    path = Path(path)
    names = list(result.columns)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for row in zip(*(result.columns[name] for name in names)):
                w.writerow(["%.17g" % v for v in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


def read_csv(path):
    """Read a CSV written by :func:`export_csv` back into float columns."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    names, body = rows[0], rows[1:]
    return {name: np.array([float(r[j]) for r in body]) for j, name in enumerate(names)}
