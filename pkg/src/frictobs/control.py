"""Disturbance-sensitivity PID design and the discrete parallel-form PID.

The plant is approximated by ``H(s) = phi / (s (tau s + 1))`` and the PID is
written in series form ``C(s) = k (tau s + 1)(T_I s + 1) / (T_I s)`` so that
it cancels the plant pole.  Since ``|1/H + C| >= k`` on the imaginary axis,
the input-disturbance sensitivity ``S = H / (1 + H C)`` is bounded by
``1/k`` for every ``T_I > 0``.
"""

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ._validation import check_positive


class PlantTF(NamedTuple):
    gain: float  # phi
    time_constant: float  # tau


class PidDesign(NamedTuple):
    k: float
    ti: float
    max_s: float
    crossover: float
    phase_arg: float
    iterations: int = 0


class PidGains(NamedTuple):
    kp: float
    ki: float
    kd: float


# Deployed gains of the reference rig (error in m, command in V).
GOLDEN_GAINS = PidGains(kp=429.0, ki=4348.0, kd=2.67)


def plant_tf_from_params(pp, fp):
    """Linearization ``m x'' + sigma x' = K v``: ``phi = K/sigma``, ``tau = m/sigma``."""
    sigma = check_positive(fp.viscous_coeff, "viscous_coeff")
    return PlantTF(pp.input_gain / sigma, pp.mass / sigma)


def _h(tf, s):
    return tf.gain / (s * (tf.time_constant * s + 1.0))


def _c(k, ti, tau, s):
    return k * (tau * s + 1.0) * (ti * s + 1.0) / (ti * s)


def open_loop(tf, k, ti, omega):
    s = 1j * np.asarray(omega, dtype=float)
    return _c(k, ti, tf.time_constant, s) * _h(tf, s)


def sensitivity_magnitude(tf, design, omega):
    """``|S(j omega)|``; grid points at an exact pole yield NaN with a warning."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0.0):
        raise ValueError("frequency grid must be positive")
    s = 1j * omega
    with np.errstate(divide="ignore", invalid="ignore"):
        h = _h(tf, s)
        S = h / (1.0 + h * _c(design.k, design.ti, tf.time_constant, s))
        mag = np.abs(S)
    bad = ~np.isfinite(mag)
    if np.any(bad):
        warnings.warn(f"skipped {int(bad.sum())} grid points at open-loop poles",
                      RuntimeWarning, stacklevel=2)
        mag[bad] = np.nan
    return mag


def crossover_frequency(tf, k, ti, lo=1e-6, hi=1e9, rtol=1e-13):
    """0 dB crossover of ``|C H|`` by bisection in log-frequency."""
    def gain(w):
        return abs(open_loop(tf, k, ti, w)) - 1.0

    if gain(lo) <= 0.0 or gain(hi) >= 0.0:
        raise RuntimeError("no open-loop crossover in the search window")
    a, b = math.log(lo), math.log(hi)
    while b - a > rtol:
        mid = 0.5 * (a + b)
        if gain(math.exp(mid)) > 0.0:
            a = mid
        else:
            b = mid
    return math.exp(0.5 * (a + b))


def integral_time(k, phi, phase_arg):
    t2 = math.tan(phase_arg) ** 2
    return t2 / (k * phi * math.sqrt(1.0 + t2))


def design_pid(tf, max_s, phase_margin=None, ti_init=None, rtol=1e-9, max_iter=100):
    """Sensitivity-bounded PID design.

    ``k = 1/max_s``.  With ``phase_margin`` [rad] given, ``T_I`` follows from
    the phase-argument formula directly.  Otherwise ``T_I`` is iterated
    (crossover -> phase argument -> ``T_I``) from ``ti_init`` (default
    ``tau``); the map fixes any ``T_I`` that is consistent with its own
    crossover, so the iteration stops after the first consistency check.
    """
    max_s = check_positive(max_s, "max_s")
    k = 1.0 / max_s
    phi = tf.gain
    if phase_margin is not None:
        if not 0.0 < phase_margin < math.pi / 2:
            raise ValueError("phase_margin must lie in (0, pi/2)")
        ti = integral_time(k, phi, phase_margin)
        w = crossover_frequency(tf, k, ti)
        return PidDesign(k, ti, max_s, w, phase_margin, 0)
    ti = tf.time_constant if ti_init is None else check_positive(ti_init, "ti_init")
    for it in range(1, max_iter + 1):
        w = crossover_frequency(tf, k, ti)
        phase = math.pi + float(np.angle(open_loop(tf, k, ti, w)))
        new = integral_time(k, phi, phase)
        if abs(new - ti) <= rtol * ti:
            return PidDesign(k, new, max_s, w, phase, it)
        ti = new
    raise RuntimeError("PID design iteration did not converge")


def to_parallel_gains(design, tf):
    k, ti, tau = design.k, design.ti, tf.time_constant
    return PidGains(k * (ti + tau) / ti, k / ti, k * tau)


def series_branches(gains):
    """Recover ``(k, tau, T_I)`` candidates from parallel gains.

    ``k`` solves ``kp k = k^2 + kd ki``; both roots are returned, larger first.
    """
    disc = gains.kp * gains.kp - 4.0 * gains.kd * gains.ki
    # T_I = tau gives a double root; roundoff may push disc just below zero
    if abs(disc) <= 64.0 * np.finfo(float).eps * gains.kp * gains.kp:
        disc = 0.0
    if disc < 0.0:
        raise ValueError("gains are not realizable by the series PID form")
    root = math.sqrt(disc)
    out = []
    for k in ((gains.kp + root) / 2.0, (gains.kp - root) / 2.0):
        out.append((k, gains.kd / k, k / gains.ki))
    return out


def parallel_identity_residual(gains, k):
    """``kp k - (k^2 + kd ki)``; zero for gains derived from a series design."""
    return gains.kp * k - (k * k + gains.kd * gains.ki)


class PidState(NamedTuple):
    integral: float = 0.0
    prev_error: float = 0.0
    derivative: float = 0.0
    started: bool = False


def pid_step(gains, state, error, dt, derivative_cutoff=None, output_limits=None):
    """Parallel PID with trapezoidal integral and first-order filtered derivative.

    ``derivative_cutoff`` [rad/s] sets the derivative filter; ``None`` uses
    a plain backward difference.  ``output_limits`` enables clamping
    anti-windup (the integral is frozen while the output saturates).
    """
    prev = state.prev_error if state.started else 0.0
    integral = state.integral + 0.5 * dt * (error + prev)
    diff = error - prev
    if derivative_cutoff is None:
        derivative = diff / dt
    else:
        tf = 1.0 / derivative_cutoff
        derivative = (tf * state.derivative + diff) / (tf + dt)
    u = gains.kp * error + gains.ki * integral + gains.kd * derivative
    if output_limits is not None:
        lo, hi = output_limits
        if u > hi or u < lo:
            integral = state.integral
            u = min(hi, max(lo, gains.kp * error + gains.ki * integral + gains.kd * derivative))
    return u, PidState(integral, error, derivative, True)


def compensated_input(u_pid, friction_estimate, input_gain):
    """PID command plus the friction estimate converted to actuator units."""
    return u_pid + friction_estimate / input_gain


@dataclass(frozen=True)
class ControllerSpec:
    """Which PID gains a scenario uses.

    ``source="golden"`` takes :data:`GOLDEN_GAINS`; ``"design"`` runs
    :func:`design_pid` on the linearized plant with ``max_s``.
    """

    source: str = "golden"
    max_s: Optional[float] = None
    phase_margin: Optional[float] = None
    derivative_cutoff: Optional[float] = None
    output_limits: Optional[tuple] = None

    def resolve(self, pp, fp):
        """Return ``(gains, derivative_cutoff)``."""
        if self.source == "golden":
            gains = GOLDEN_GAINS
            k, tau, ti = series_branches(gains)[0]
            tf = PlantTF(pp.input_gain / fp.viscous_coeff, tau)
            wc = crossover_frequency(tf, k, ti)
        elif self.source == "design":
            if self.max_s is None:
                raise ValueError("controller.max_s is required for designed gains")
            tf = plant_tf_from_params(pp, fp)
            design = design_pid(tf, self.max_s, self.phase_margin)
            gains = to_parallel_gains(design, tf)
            wc = design.crossover
        else:
            raise ValueError(f"unknown controller source {self.source!r}")
        cutoff = self.derivative_cutoff if self.derivative_cutoff is not None else 10.0 * wc
        return gains, cutoff
