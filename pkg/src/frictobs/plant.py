"""One-degree-of-freedom motion system ``m x'' = u - f`` with dynamic friction.

Two realizations are provided:

``"physical"``
    The friction force is the sum of the algebraic Coulomb part and the
    lagged viscous part.
``"state_space"``
    The friction state ``w3`` is integrated with the time-varying
    state-space law ``w3' = (dF_c/dx + sigma/beta) x'``, i.e. the model the
    observer is built on.  Requires ``beta > 0``.

Stepping is fixed-step semi-implicit Euler: friction is taken from the
start of the step, velocity is updated first, position with the new
velocity.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ._validation import check_positive, check_step
from .friction import (
    FrictionState,
    PreslidingState,
    advance_presliding,
    coulomb_force,
    presliding_stiffness,
    viscous_step,
)

REALIZATIONS = ("physical", "state_space")


class SimulationFault(FloatingPointError):
    """Raised when the simulated state becomes non-finite."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} at step {step}")
        self.step = step


@dataclass(frozen=True)
class PlantParams:
    mass: float = 0.538
    input_gain: float = 3.28
    gravity_load: float = 0.0

    def __post_init__(self):
        check_positive(self.mass, "mass")
        check_positive(self.input_gain, "input_gain")


class PlantState(NamedTuple):
    x: float = 0.0
    v: float = 0.0
    friction: FrictionState = FrictionState()
    presliding: PreslidingState = PreslidingState()
    w3: float = 0.0  # friction state of the state-space realization


class StateSpace(NamedTuple):
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


def friction_row(fp, stiffness):
    """Entry ``A32`` (lagged viscous) or ``(A32, A33)`` pieces for the static variant."""
    if fp.static_viscous:
        return stiffness
    return stiffness + fp.sigma_over_beta


def build_state_space(pp, fp, st, velocity_sign=None):
    """Time-varying ``(A, B, C)`` at pre-sliding state ``st``.

    With viscous lag the third state is the total friction and
    ``A32 = dF_c/dx + sigma/beta``.  For the static viscous law the third
    state is the Coulomb part alone; viscous damping moves into ``A22``.
    """
    m = pp.mass
    k = presliding_stiffness(fp, st, velocity_sign)
    A = np.zeros((3, 3))
    A[0, 1] = 1.0
    A[1, 2] = -1.0 / m
    A[2, 1] = friction_row(fp, k)
    if fp.static_viscous:
        A[1, 1] = -fp.viscous_coeff / m
    B = np.array([0.0, 1.0 / m, 0.0])
    C = np.array([1.0, 0.0, 0.0])
    return StateSpace(A, B, C)


def initial_state(x=0.0, v=0.0, fp=None):
    """Rest-or-moving initial state with gross-sliding friction consistent with ``v``."""
    if v == 0.0 or fp is None:
        return PlantState(x=x, v=v)
    direction = 1 if v > 0 else -1
    ps = PreslidingState(z=float(direction) * 2.0, f_r=float(direction),
                         direction=direction, saturated=True)
    fs = FrictionState(fp.coulomb_coeff * direction, fp.viscous_coeff * v)
    w3 = fs.coulomb if fp.static_viscous else fs.total
    return PlantState(x=x, v=v, friction=fs, presliding=ps, w3=w3)


def plant_step(pp, fp, state, u, dt, realization="physical", step=None):
    """Advance ``m x'' = u - f`` by one step; ``u`` is the net driving force [N]."""
    m = pp.mass
    if realization == "physical":
        f = state.friction.coulomb + state.friction.viscous
    elif realization == "state_space":
        f = state.w3
    else:
        raise ValueError(f"unknown realization {realization!r}")
    v = state.v + dt * (u - f) / m
    x = state.x + dt * v
    ps = advance_presliding(fp, state.presliding, v, dt)
    fs = FrictionState(coulomb_force(fp, ps), viscous_step(fp, state.friction.viscous, v, dt))
    if realization == "state_space":
        if fp.static_viscous:
            raise ValueError("state_space realization needs viscous_lag > 0")
        w3 = state.w3 + dt * friction_row(fp, presliding_stiffness(fp, ps)) * v
    else:
        w3 = fs.coulomb if fp.static_viscous else fs.coulomb + fs.viscous
    if not (math.isfinite(x) and math.isfinite(v) and math.isfinite(w3)):
        raise SimulationFault("non-finite plant state", step)
    return PlantState(x, v, fs, ps, w3)


def simulate(pp, fp, u, dt, state=None, realization="physical"):
    """Run the plant over an input sequence; returns ``(n, 3)`` columns ``x, v, w3``."""
    check_step(dt)
    state = PlantState() if state is None else state
    out = np.empty((len(u), 3))
    for i, ui in enumerate(u):
        state = plant_step(pp, fp, state, float(ui), dt, realization, step=i)
        out[i] = state.x, state.v, state.w3
    return out


class StopReport(NamedTuple):
    stopped: bool
    stop_time: Optional[float]
    final_speed: float


def autonomous_stop_test(pp, fp, v0, dt=1e-4, horizon=5.0, settle=0.1):
    """Settling time of the unforced system started at velocity ``v0``.

    The stop time is the start of the final interval over which
    ``|v| < reversal_band`` holds up to ``horizon``; that interval must last
    at least ``settle`` seconds, otherwise the run is reported as not stopped.
    """
    if v0 == 0.0:
        return StopReport(True, 0.0, 0.0)
    n = int(round(horizon / dt))
    band = fp.reversal_band
    state = initial_state(v=v0, fp=fp)
    last_fast = 0
    for i in range(1, n + 1):
        state = plant_step(pp, fp, state, 0.0, dt, step=i)
        if abs(state.v) >= band:
            last_fast = i
    stop_time = (last_fast + 1) * dt
    if (n - last_fast) * dt < settle:
        return StopReport(False, None, abs(state.v))
    return StopReport(True, stop_time, abs(state.v))
