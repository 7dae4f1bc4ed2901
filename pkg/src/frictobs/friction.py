"""Kinetic friction with logarithmic pre-sliding hysteresis and viscous lag.

The friction force is the superposition ``f = F_c + F_v`` of a Coulomb part
with pre-sliding transitions and a viscous part with first-order frictional
lag.  The Coulomb part is an algebraic function of the pre-sliding state
(distance ``z`` since the last motion reversal and the latched reversal
level ``f_r``), so it stays within ``[-C_f, C_f]`` by construction.

All state transitions are pure functions on immutable named tuples.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive, check_signal_vector, check_step

STIFFNESS_SCALINGS = ("s", "inverse")
PRESLIDING_MODELS = ("log", "linear")


@dataclass(frozen=True)
class FrictionParams:
    """Physical friction constants.

    Parameters
    ----------
    coulomb_coeff : float
        Coulomb friction level ``C_f`` [N].
    viscous_coeff : float
        Viscous coefficient ``sigma`` [N s/m].
    presliding_scale : float
        Scaling ``s`` [1/m] between displacement and pre-sliding distance.
    viscous_lag : float
        Frictional-lag time constant ``beta`` [s].  ``0`` selects the static
        viscous law ``F_v = sigma * v``.
    stiffness_clamp : float
        Upper bound ``kappa`` [N/m] on the pre-sliding stiffness.
    stiffness_scaling : {"s", "inverse"}
        ``"s"`` maps the z-domain slope to displacement as ``dF/dx = s dF/dz``;
        ``"inverse"`` uses ``dF/dx = dF/dz / s``.
    presliding_model : {"log", "linear"}
        ``"linear"`` replaces the logarithmic branches by a linear spring of
        stiffness ``kappa`` (used as a comparison model only).
    reversal_band : float
        Velocity hysteresis band [m/s] for motion-reversal detection.
    """

    coulomb_coeff: float = 0.35
    viscous_coeff: float = 21.1
    presliding_scale: float = 3000.0
    viscous_lag: float = 0.001
    stiffness_clamp: float = 8000.0
    lipschitz_bound: Optional[float] = None
    coulomb_max: Optional[float] = None
    viscous_max: Optional[float] = None
    stiffness_scaling: str = "s"
    presliding_model: str = "log"
    reversal_band: float = 1e-5

    def __post_init__(self):
        # zero C_f / sigma are degenerate but allowed (frictionless checks)
        check_positive(self.coulomb_coeff, "coulomb_coeff", allow_zero=True)
        check_positive(self.viscous_coeff, "viscous_coeff", allow_zero=True)
        check_positive(self.presliding_scale, "presliding_scale")
        check_positive(self.viscous_lag, "viscous_lag", allow_zero=True)
        check_positive(self.stiffness_clamp, "stiffness_clamp")
        check_positive(self.reversal_band, "reversal_band", allow_zero=True)
        if self.lipschitz_bound is not None:
            check_positive(self.lipschitz_bound, "lipschitz_bound")
        if self.coulomb_max is not None and not 0.0 < self.coulomb_coeff < self.coulomb_max:
            raise ValueError("coulomb_coeff must lie in (0, coulomb_max)")
        if self.viscous_max is not None and not 0.0 < self.viscous_coeff < self.viscous_max:
            raise ValueError("viscous_coeff must lie in (0, viscous_max)")
        if self.stiffness_scaling not in STIFFNESS_SCALINGS:
            raise ValueError(f"stiffness_scaling must be one of {STIFFNESS_SCALINGS}")
        if self.presliding_model not in PRESLIDING_MODELS:
            raise ValueError(f"presliding_model must be one of {PRESLIDING_MODELS}")

    @property
    def static_viscous(self):
        """True when the viscous lag is neglected (``beta == 0``)."""
        return self.viscous_lag == 0.0

    @property
    def sigma_over_beta(self):
        if self.static_viscous:
            raise ValueError("sigma/beta is undefined for the static viscous law")
        return self.viscous_coeff / self.viscous_lag


class PreslidingState(NamedTuple):
    """Hysteresis memory of the Coulomb part.

    ``direction`` is 0 before the first motion, otherwise the sign of the
    velocity outside the reversal band.
    """

    z: float = 0.0
    f_r: float = 0.0
    direction: int = 0
    saturated: bool = False


class FrictionState(NamedTuple):
    coulomb: float = 0.0
    viscous: float = 0.0

    @property
    def total(self):
        return self.coulomb + self.viscous


def _clip_unit(value):
    return -1.0 if value < -1.0 else (1.0 if value > 1.0 else value)


def presliding_map(z, f_r, direction):
    """Normalized pre-sliding friction ``|d - f_r| z (1 - ln|z|) + f_r``.

    At ``z == 0`` the limit value ``f_r`` is returned.
    """
    if abs(z) > 1.0:
        raise ValueError(f"pre-sliding map is defined for |z| <= 1, got z={z!r}")
    if z == 0.0:
        return f_r
    return abs(direction - f_r) * z * (1.0 - math.log(abs(z))) + f_r


def normalized_level(p, st):
    """Current Coulomb force divided by ``C_f``, always in ``[-1, 1]``."""
    if st.saturated:
        return float(st.direction)
    if p.presliding_model == "linear":
        if p.coulomb_coeff == 0.0:
            return st.f_r
        slope = p.stiffness_clamp / (p.presliding_scale * p.coulomb_coeff)
        return _clip_unit(st.f_r + slope * st.z)
    if st.direction == 0:
        return st.f_r
    return _clip_unit(presliding_map(st.z, st.f_r, st.direction))


def coulomb_force(p, st, velocity_sign=None):
    """Coulomb friction force [N] for the pre-sliding state ``st``.

    ``velocity_sign`` overrides the latched direction of ``st``.
    """
    if velocity_sign is not None and velocity_sign != st.direction:
        st = st._replace(direction=int(velocity_sign))
    return p.coulomb_coeff * normalized_level(p, st)


def presliding_stiffness(p, st, velocity_sign=None):
    """Displacement-domain pre-sliding stiffness ``dF_c/dx`` clamped to ``[0, kappa]``.

    Zero in gross sliding; ``kappa`` at ``z == 0`` where the analytic slope
    diverges.
    """
    if st.saturated:
        return 0.0
    kappa = p.stiffness_clamp
    if p.presliding_model == "linear":
        return kappa
    if st.z == 0.0:
        return kappa
    direction = st.direction if velocity_sign is None else velocity_sign
    dfdz = -p.coulomb_coeff * abs(direction - st.f_r) * math.log(abs(st.z))
    if p.stiffness_scaling == "s":
        dfdx = p.presliding_scale * dfdz
    else:
        dfdx = dfdz / p.presliding_scale
    return min(kappa, max(dfdx, 0.0))


def _is_saturated(p, z, f_r):
    if p.presliding_model == "linear":
        if p.coulomb_coeff == 0.0:
            return True
        slope = p.stiffness_clamp / (p.presliding_scale * p.coulomb_coeff)
        return abs(f_r + slope * z) >= 1.0
    return abs(z) > 1.0


def advance_presliding(p, st, velocity, dt):
    """Advance the pre-sliding state by one step of ``velocity * dt``.

    A reversal is registered when the velocity leaves the band
    ``[-reversal_band, reversal_band]`` on the side opposite to the latched
    direction; ``z`` is then reset and the current level latched into ``f_r``.
    """
    band = p.reversal_band
    direction = st.direction
    if velocity > band:
        candidate = 1
    elif velocity < -band:
        candidate = -1
    else:
        candidate = direction
    z, f_r = st.z, st.f_r
    if candidate != direction:
        if direction != 0:
            f_r = _clip_unit(normalized_level(p, st))
        z = 0.0
        direction = candidate
    if direction == 0:
        return PreslidingState(0.0, f_r, 0, False)
    z += p.presliding_scale * velocity * dt
    # in-band creep against the latched direction cannot undo the branch
    if z * direction < 0.0:
        z = 0.0
    return PreslidingState(z, f_r, direction, _is_saturated(p, z, f_r))


def viscous_step(p, viscous_force, velocity, dt, method="exact"):
    """One step of the frictional lag ``dF_v/dt = (sigma v - F_v) / beta``."""
    target = p.viscous_coeff * velocity
    if p.static_viscous:
        return target
    if method == "exact":
        return target + (viscous_force - target) * math.exp(-dt / p.viscous_lag)
    if method == "euler":
        return viscous_force + dt / p.viscous_lag * (target - viscous_force)
    raise ValueError(f"unknown method {method!r}")


def total_friction(coulomb, viscous):
    return coulomb + viscous


def friction_step(p, presliding, friction, velocity, dt):
    """Advance both friction components for a step at ``velocity``."""
    presliding = advance_presliding(p, presliding, velocity, dt)
    friction = FrictionState(
        coulomb_force(p, presliding),
        viscous_step(p, friction.viscous, velocity, dt),
    )
    return presliding, friction


class FrictionModel(TransformerMixin, BaseEstimator):
    """Friction force along a sampled velocity trajectory.

    ``transform`` maps a velocity series to the columns
    ``[F_c, F_v, f, stiffness]``.  Each call starts from rest.

    Examples
    --------
    >>> import numpy as np
    >>> model = FrictionModel(dt=1e-4).fit()
    >>> float(model.transform(np.full(20000, 0.05))[-1, 2].round(6))
    1.405
    """

    def __init__(self, coulomb_coeff=0.35, viscous_coeff=21.1, presliding_scale=3000.0,
                 viscous_lag=0.001, stiffness_clamp=8000.0, stiffness_scaling="s",
                 reversal_band=1e-5, dt=1e-4):
        self.coulomb_coeff = coulomb_coeff
        self.viscous_coeff = viscous_coeff
        self.presliding_scale = presliding_scale
        self.viscous_lag = viscous_lag
        self.stiffness_clamp = stiffness_clamp
        self.stiffness_scaling = stiffness_scaling
        self.reversal_band = reversal_band
        self.dt = dt

    def fit(self, X=None, y=None):
        self.params_ = FrictionParams(
            coulomb_coeff=self.coulomb_coeff,
            viscous_coeff=self.viscous_coeff,
            presliding_scale=self.presliding_scale,
            viscous_lag=self.viscous_lag,
            stiffness_clamp=self.stiffness_clamp,
            stiffness_scaling=self.stiffness_scaling,
            reversal_band=self.reversal_band,
        )
        check_step(self.dt)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        v = check_signal_vector(X, "velocity")
        p, dt = self.params_, float(self.dt)
        out = np.empty((v.size, 4))
        ps, fs = PreslidingState(), FrictionState()
        for i, vi in enumerate(v):
            ps, fs = friction_step(p, ps, fs, float(vi), dt)
            out[i] = fs.coulomb, fs.viscous, fs.total, presliding_stiffness(p, ps)
        return out
