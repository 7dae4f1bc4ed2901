"""Reduced-order Luenberger observer of velocity and friction from position.

The plant state ``w = (x, v, f)`` is split into the measured part
``wbar = x`` and the unmeasured part ``y = (v, f)``.  The observer integrates

    y~' = (A22 - L A12) y~ + (By - L Bw) u + (A21 - L A11 + A22 L - L A12 L) wbar

and returns ``(v~, f~) = y~ + L wbar``.  ``A22`` depends on the pre-sliding
stiffness, which the observer takes from its own friction replica driven
by a low-pass filtered velocity estimate (its own prefilter, wider than the
output filters, so the stiffness tracks reversals without large lag).

For the static viscous law (``beta == 0``) the friction state is the
Coulomb part only, viscous damping enters ``A22[0, 0] = -sigma/m`` and the
gains become ``L1 = 2 rho sqrt(kappa/m) - sigma/m``, ``L2 = kappa (1 - rho^2)``;
this keeps the eigenvalues at ``-rho sqrt(kappa/m) +- sqrt((kappa - k)/m)``.
"""

import cmath
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.linalg import expm
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive, check_signal_matrix, check_step
from .friction import FrictionParams, PreslidingState, advance_presliding, presliding_stiffness


class ObserverFault(FloatingPointError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} at step {step}")
        self.step = step


class RegularFormBlocks(NamedTuple):
    a11: float
    a12: Tuple[float, float]
    a21: Tuple[float, float]
    a22: Tuple[Tuple[float, float], Tuple[float, float]]
    b_wbar: float
    b_y: Tuple[float, float]

    def assemble(self):
        """Reassemble the full ``(A, B)`` pair."""
        A = np.empty((3, 3))
        A[0, 0] = self.a11
        A[0, 1:] = self.a12
        A[1:, 0] = self.a21
        A[1:, 1:] = self.a22
        B = np.array([self.b_wbar, *self.b_y])
        return A, B


class ObserverGains(NamedTuple):
    L1: float
    L2: float
    rho: float = float("nan")


class ObserverState(NamedTuple):
    y1: float = 0.0
    y2: float = 0.0
    w2: float = 0.0
    w3: float = 0.0


@dataclass(frozen=True)
class StabilityReport:
    prop1_ok: Tuple[bool, bool]
    eigenvalues: Optional[Tuple[complex, complex]] = None  # at zero stiffness
    reversal_eigenvalues: Optional[Tuple[complex, complex]] = None  # at stiffness kappa
    dominant_pole: Optional[float] = None
    all_real_negative: Optional[bool] = None
    ignatyev_margin_min: Optional[float] = None
    coeff_bound_max: Optional[float] = None

    @property
    def stable(self):
        return all(self.prop1_ok)


def regular_form(ss):
    """Partition ``(A, B)`` into measured (position) and unmeasured blocks."""
    A, B = np.asarray(ss.A, dtype=float), np.asarray(ss.B, dtype=float)
    return RegularFormBlocks(
        a11=float(A[0, 0]),
        a12=(float(A[0, 1]), float(A[0, 2])),
        a21=(float(A[1, 0]), float(A[2, 0])),
        a22=((float(A[1, 1]), float(A[1, 2])), (float(A[2, 1]), float(A[2, 2]))),
        b_wbar=float(B[0]),
        b_y=(float(B[1]), float(B[2])),
    )


def plant_blocks(mass, fp, stiffness):
    """Regular-form blocks straight from parameters (no matrix assembly)."""
    inv_m = 1.0 / mass
    if fp.static_viscous:
        a22 = ((-fp.viscous_coeff * inv_m, -inv_m), (stiffness, 0.0))
    else:
        a22 = ((0.0, -inv_m), (stiffness + fp.sigma_over_beta, 0.0))
    return RegularFormBlocks(0.0, (1.0, 0.0), (0.0, 0.0), a22, 0.0, (inv_m, 0.0))


def design_gains(fp, mass, rho):
    """Observer gains placing a dominant real pole at ``-sqrt(kappa/m) (rho - 1)``."""
    kappa = check_positive(fp.stiffness_clamp, "stiffness_clamp")
    mass = check_positive(mass, "mass")
    rho = check_positive(rho, "rho")
    if rho <= 1.0:
        warnings.warn(f"rho={rho} <= 1 violates the gain conditions; the observer "
                      "will not be stable in gross sliding", RuntimeWarning, stacklevel=2)
    root = math.sqrt(kappa / mass)
    L1 = 2.0 * rho * root
    if fp.static_viscous:
        return ObserverGains(L1 - fp.viscous_coeff / mass, kappa * (1.0 - rho * rho), rho)
    return ObserverGains(L1, fp.sigma_over_beta + kappa * (1.0 - rho * rho), rho)


def _damping(fp, mass):
    return fp.viscous_coeff / mass if fp.static_viscous else 0.0


def _friction_offset(fp):
    return 0.0 if fp.static_viscous else fp.sigma_over_beta


_DISC_ULPS = 64.0 * np.finfo(float).eps


def _snap_double_pole(disc, scale):
    """Zero a discriminant that is negative only by rounding (designed double pole)."""
    return np.where((disc < 0.0) & (disc > -_DISC_ULPS * scale), 0.0, disc)


def eigenvalues(gains, mass, stiffness, sigma_over_beta, viscous_damping=0.0):
    """Eigenvalues of the observer matrix ``A22 - L A12``.

    Returns ``(lambda1, lambda2)`` as complex numbers, ``lambda1`` the more
    negative one when real.  ``viscous_damping`` is ``sigma/m`` for the
    static viscous variant (with ``sigma_over_beta = 0``).
    """
    a = gains.L1 + viscous_damping
    b = 4.0 / mass * (gains.L2 - stiffness - sigma_over_beta)
    disc = _snap_double_pole(a * a + b, a * a + abs(b))
    root = cmath.sqrt(float(disc))
    return -0.5 * (a + root), -0.5 * (a - root)


def observer_eigenvalues(gains, fp, mass, stiffness):
    return eigenvalues(gains, mass, stiffness, _friction_offset(fp), _damping(fp, mass))


def eigen_sweep(gains, fp, mass, n=1000):
    """Eigenvalues over ``n`` stiffness samples spanning ``[0, kappa]``."""
    ks = np.linspace(0.0, fp.stiffness_clamp, n)
    a = gains.L1 + _damping(fp, mass)
    b = 4.0 / mass * (gains.L2 - ks - _friction_offset(fp))
    disc = _snap_double_pole(a * a + b, a * a + np.abs(b))
    root = np.sqrt(disc.astype(complex))
    return ks, np.column_stack([-0.5 * (a + root), -0.5 * (a - root)])


def dominant_pole(fp, mass, rho):
    """Slowest designed pole ``-sqrt(kappa/m) (rho - 1)``."""
    return -math.sqrt(fp.stiffness_clamp / mass) * (rho - 1.0)


def check_stability(gains, fp, mass=None, n=1000):
    """Gain conditions ``L1 > 0`` and ``L2 < sigma/beta`` (``L2 < 0`` for static viscous).

    With ``mass`` given, the eigenvalues at both stiffness extremes and a
    realness/negativity sweep over ``n`` samples are added.
    """
    if fp.static_viscous:
        prop1 = (gains.L1 + fp.viscous_coeff / mass > 0.0 if mass else gains.L1 > 0.0,
                 gains.L2 < 0.0)
    else:
        prop1 = (gains.L1 > 0.0, gains.L2 < fp.sigma_over_beta)
    prop1 = (bool(prop1[0]), bool(prop1[1]))
    if mass is None:
        return StabilityReport(prop1)
    lam0 = observer_eigenvalues(gains, fp, mass, 0.0)
    lamk = observer_eigenvalues(gains, fp, mass, fp.stiffness_clamp)
    _, lam = eigen_sweep(gains, fp, mass, n)
    ok = bool(np.all(lam.imag == 0.0) and np.all(lam.real < 0.0))
    return StabilityReport(prop1, lam0, lamk, float(max(lam0[0].real, lam0[1].real)), ok)


def ignatyev_margins(a0, a1, dt=None, a0_dot=None):
    """Empirical witnesses for the two coefficient conditions of ``psi'' + a1 psi' + a0 psi = 0``.

    Returns ``(max |a0'| + |a1|, min a0' + 2 a0 a1)``.  ``a0_dot`` may be
    supplied analytically; where it is NaN (or absent) a finite difference
    with spacing ``dt`` is used.
    """
    a0 = np.atleast_1d(np.asarray(a0, dtype=float))
    if a0.size == 0:
        raise ValueError("empty coefficient trajectory")
    a1 = np.broadcast_to(np.asarray(a1, dtype=float), a0.shape)
    if a0.size > 1:
        fd = np.gradient(a0, dt if dt is not None else 1.0)
    else:
        fd = np.zeros(1)
    if a0_dot is None:
        d = fd
    else:
        d = np.asarray(a0_dot, dtype=float)
        d = np.where(np.isnan(d), fd, d)
    return float(np.max(np.abs(d) + np.abs(a1))), float(np.min(d + 2.0 * a0 * a1))


def a0_trajectory(gains, fp, mass, stiffness):
    """Coefficient ``a0 = (dF_c/dx + sigma/beta - L2) / m`` along a stiffness trace."""
    stiffness = np.asarray(stiffness, dtype=float)
    return (stiffness + _friction_offset(fp) - gains.L2) / mass


def a0_rate(fp, mass, presliding, velocity):
    """Analytic ``da0/dt`` in pre-sliding: ``-(s^2 C_f |d - f_r| / m) v / z`` (NaN if undefined)."""
    st = presliding
    if st.saturated or st.z == 0.0 or presliding_stiffness(fp, st) >= fp.stiffness_clamp:
        return 0.0 if st.saturated else float("nan")
    c1 = fp.coulomb_coeff * abs(st.direction - st.f_r) / mass
    s = fp.presliding_scale
    scale = s * s if fp.stiffness_scaling == "s" else 1.0
    return -c1 * scale * velocity / st.z


def noise_gain(kappa, rho):
    """Direct feedthrough ``kappa (rho^2 - 1)`` of position noise into the friction estimate."""
    if rho < 1.0:
        raise ValueError("noise gain is defined for rho >= 1")
    return kappa * (rho * rho - 1.0)


def _zoh(at, dt):
    aug = np.zeros((4, 4))
    aug[:2, :2] = at
    aug[:2, 2:] = np.eye(2)
    e = expm(aug * dt)
    return e[:2, :2], e[:2, 2:]


def observer_step(blocks, gains, obs, u, wbar, dt, method="euler", step=None, _cache=None):
    """One discrete step of the reduced-order observer followed by back transformation.

    ``method`` is ``"euler"`` (forward Euler) or ``"zoh"`` (exact for inputs
    held over the step).
    """
    L1, L2 = gains.L1, gains.L2
    (p11, p12), (p21, p22) = blocks.a22
    c1, c2 = blocks.a12
    t11, t12 = p11 - L1 * c1, p12 - L1 * c2
    t21, t22 = p21 - L2 * c1, p22 - L2 * c2
    bw = blocks.b_wbar
    b1, b2 = blocks.b_y[0] - L1 * bw, blocks.b_y[1] - L2 * bw
    s = c1 * L1 + c2 * L2
    m1 = blocks.a21[0] - L1 * blocks.a11 + p11 * L1 + p12 * L2 - L1 * s
    m2 = blocks.a21[1] - L2 * blocks.a11 + p21 * L1 + p22 * L2 - L2 * s
    y1, y2 = obs.y1, obs.y2
    g1 = b1 * u + m1 * wbar
    g2 = b2 * u + m2 * wbar
    if method == "euler":
        n1 = y1 + dt * (t11 * y1 + t12 * y2 + g1)
        n2 = y2 + dt * (t21 * y1 + t22 * y2 + g2)
    elif method == "zoh":
        key = (t11, t12, t21, t22, dt)
        if _cache is not None and _cache[0] == key:
            phi, gam = _cache[1]
        else:
            phi, gam = _zoh(np.array([[t11, t12], [t21, t22]]), dt)
            phi, gam = phi.tolist(), gam.tolist()
            if _cache is not None:
                _cache[:] = [key, (phi, gam)]
        n1 = phi[0][0] * y1 + phi[0][1] * y2 + gam[0][0] * g1 + gam[0][1] * g2
        n2 = phi[1][0] * y1 + phi[1][1] * y2 + gam[1][0] * g1 + gam[1][1] * g2
    else:
        raise ValueError(f"unknown method {method!r}")
    w2, w3 = n1 + L1 * wbar, n2 + L2 * wbar
    if not (math.isfinite(w2) and math.isfinite(w3)):
        raise ObserverFault("non-finite observer estimate", step)
    return ObserverState(n1, n2, w2, w3)


def back_transform(gains, y1, y2, wbar):
    """Estimates ``(w2~, w3~) = y + L wbar``."""
    return y1 + gains.L1 * wbar, y2 + gains.L2 * wbar


def lowpass_coefficients(omega_co, dt):
    """Bilinear discretization of ``w^2 / (s^2 + 2 w s + w^2)``.

    Returns ``(b0, b1, b2, a1, a2)`` with ``a0`` normalized to one.
    """
    w = check_positive(omega_co, "omega_co")
    c = 2.0 / check_step(dt)
    a0 = c * c + 2.0 * w * c + w * w
    w2 = w * w
    return (w2 / a0, 2.0 * w2 / a0, w2 / a0,
            (2.0 * w2 - 2.0 * c * c) / a0, (c * c - 2.0 * w * c + w2) / a0)


def lowpass_step(state, x, coeffs):
    """Transposed direct-form II step; ``state`` is the 2-tuple of delay registers."""
    b0, b1, b2, a1, a2 = coeffs
    s1, s2 = state
    y = b0 * x + s1
    return y, (b1 * x - a1 * y + s2, b2 * x - a2 * y)


def lowpass_initial_state(value, coeffs):
    """Delay registers for a filter at rest with constant input and output ``value``."""
    b0, b1, b2, a1, a2 = coeffs
    s2 = (b2 - a2) * value
    s1 = (b1 - a1) * value + s2
    return (s1, s2)


class SecondOrderLowPass:
    """Critically damped second-order low-pass with unit DC gain."""

    def __init__(self, omega_co, dt, initial=0.0):
        self.coeffs = lowpass_coefficients(omega_co, dt)
        self.reset(initial)

    def reset(self, value=0.0):
        self.state = lowpass_initial_state(value, self.coeffs)
        self.y = value

    def step(self, x):
        self.y, self.state = lowpass_step(self.state, x, self.coeffs)
        return self.y

    def filter(self, x):
        return np.array([self.step(float(v)) for v in x])


class DivergenceDetector:
    """Flags estimates that stay beyond ``factor`` times the physical bounds.

    Bounds are the running maxima of the true state magnitudes, floored by
    ``velocity_floor`` and ``force_floor``.
    """

    def __init__(self, dt, factor=10.0, hold=0.1, velocity_floor=0.01, force_floor=1.0):
        self.dt = dt
        self.factor = factor
        self.hold_steps = max(1, int(round(hold / dt)))
        self.v_bound = velocity_floor
        self.f_bound = force_floor
        self.count = 0
        self.first = None
        self.onset = None

    @property
    def diverged(self):
        return self.onset is not None

    def update(self, step, v_true, f_true, v_est, f_est):
        self.v_bound = max(self.v_bound, abs(v_true))
        self.f_bound = max(self.f_bound, abs(f_true))
        out = (abs(v_est) > self.factor * self.v_bound
               or abs(f_est) > self.factor * self.f_bound
               or not (math.isfinite(v_est) and math.isfinite(f_est)))
        if out:
            if self.count == 0:
                self.first = step
            self.count += 1
            if self.onset is None and self.count >= self.hold_steps:
                self.onset = self.first * self.dt
        else:
            self.count = 0
        return self.diverged


class ObserverRunner:
    """Stateful driver: observer step, output filters and the stiffness replica.

    Each sample is processed in two stages: :meth:`estimate` forms
    ``(v~, w3~, v_filtered, w3_filtered)`` from the propagated state and the
    current measured position, then :meth:`advance` propagates the state
    with the net driving force ``u`` [N].  The split lets a controller use
    the current estimate before it picks ``u``.
    ``omega_co`` sets the output filters, ``omega_replica`` the prefilter of
    the velocity that drives the stiffness replica.
    """

    def __init__(self, fp, mass, gains, dt, omega_co=2 * math.pi * 40.0, method="euler",
                 omega_replica=2 * math.pi * 200.0):
        self.fp, self.mass, self.gains = fp, float(mass), gains
        self.dt, self.method = float(dt), method
        self.obs = ObserverState()
        self.replica = PreslidingState()
        self.v_filter = SecondOrderLowPass(omega_co, dt)
        self.f_filter = SecondOrderLowPass(omega_co, dt)
        self.r_filter = SecondOrderLowPass(omega_replica, dt)
        self.stiffness = presliding_stiffness(fp, self.replica)
        self._cache = [None, None]
        self.n = 0

    def estimate(self, wbar):
        """Estimates at the current sample from the propagated state and ``wbar``.

        Also advances the output filters and the stiffness replica; the new
        stiffness applies to the following :meth:`advance`.
        """
        y1, y2 = self.obs.y1, self.obs.y2
        w2, w3 = back_transform(self.gains, y1, y2, wbar)
        if not (math.isfinite(w2) and math.isfinite(w3)):
            raise ObserverFault("non-finite observer estimate", self.n)
        self.obs = ObserverState(y1, y2, w2, w3)
        vf = self.v_filter.step(w2)
        ff = self.f_filter.step(w3)
        vr = self.r_filter.step(w2)
        self.replica = advance_presliding(self.fp, self.replica, vr, self.dt)
        self.stiffness = presliding_stiffness(self.fp, self.replica)
        return w2, w3, vf, ff

    def advance(self, u, wbar):
        """Propagate the observer state over one step with the current inputs."""
        blocks = plant_blocks(self.mass, self.fp, self.stiffness)
        self.obs = observer_step(blocks, self.gains, self.obs, u, wbar, self.dt,
                                 self.method, self.n, self._cache)
        self.n += 1

    def step(self, u, wbar):
        """:meth:`estimate` followed by :meth:`advance`; returns the estimates."""
        out = self.estimate(wbar)
        self.advance(u, wbar)
        return out

    def total_friction(self, v_est, w3_est):
        """Total friction from the estimates (adds ``sigma v`` for static viscous)."""
        if self.fp.static_viscous:
            return w3_est + self.fp.viscous_coeff * v_est
        return w3_est


class FrictionObserver(TransformerMixin, BaseEstimator):
    """Reduced-order friction observer as a scikit-learn transformer.

    ``fit`` designs the gains for the design parameter ``rho`` and records the
    stability report; ``transform`` runs the observer over ``X`` with columns
    ``[u, x_measured]`` (net force [N], position [m]) sampled at ``dt`` and
    returns ``[v~, w3~, v~_filtered, w3~_filtered]``.

    Examples
    --------
    >>> obs = FrictionObserver(rho=1.02).fit()
    >>> round(obs.gains_.L1, 2), round(obs.gains_.L2, 1)
    (248.76, 20776.8)
    """

    def __init__(self, mass=0.538, coulomb_coeff=0.35, viscous_coeff=21.1,
                 presliding_scale=3000.0, viscous_lag=0.001, stiffness_clamp=8000.0,
                 rho=1.02, cutoff_hz=40.0, replica_cutoff_hz=200.0, dt=1e-4,
                 method="euler", stiffness_scaling="s", reversal_band=1e-5):
        self.mass = mass
        self.coulomb_coeff = coulomb_coeff
        self.viscous_coeff = viscous_coeff
        self.presliding_scale = presliding_scale
        self.viscous_lag = viscous_lag
        self.stiffness_clamp = stiffness_clamp
        self.rho = rho
        self.cutoff_hz = cutoff_hz
        self.replica_cutoff_hz = replica_cutoff_hz
        self.dt = dt
        self.method = method
        self.stiffness_scaling = stiffness_scaling
        self.reversal_band = reversal_band

    def _friction_params(self):
        return FrictionParams(
            coulomb_coeff=self.coulomb_coeff,
            viscous_coeff=self.viscous_coeff,
            presliding_scale=self.presliding_scale,
            viscous_lag=self.viscous_lag,
            stiffness_clamp=self.stiffness_clamp,
            stiffness_scaling=self.stiffness_scaling,
            reversal_band=self.reversal_band,
        )

    def fit(self, X=None, y=None):
        check_step(self.dt)
        check_positive(self.cutoff_hz, "cutoff_hz")
        check_positive(self.replica_cutoff_hz, "replica_cutoff_hz")
        if self.method not in ("euler", "zoh"):
            raise ValueError(f"unknown method {self.method!r}")
        self.params_ = self._friction_params()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            self.gains_ = design_gains(self.params_, self.mass, self.rho)
        self.stability_ = check_stability(self.gains_, self.params_, self.mass)
        if not self.stability_.stable:
            warnings.warn("designed gains violate the stability conditions", RuntimeWarning,
                          stacklevel=2)
        return self

    def transform(self, X):
        check_is_fitted(self, "gains_")
        X = check_signal_matrix(X, 2)
        runner = ObserverRunner(self.params_, self.mass, self.gains_, float(self.dt),
                                2.0 * math.pi * self.cutoff_hz, self.method,
                                2.0 * math.pi * self.replica_cutoff_hz)
        out = np.empty((X.shape[0], 4))
        for i, (u, wbar) in enumerate(X.tolist()):
            out[i] = runner.step(u, wbar)
        return out
