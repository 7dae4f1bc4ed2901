"""Reference trajectories and reproducible band-limited noise."""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.signal import lfilter

from ._validation import check_positive


@dataclass(frozen=True)
class NoiseConfig:
    """Gaussian noise through a low-pass at ``cutoff_hz``.

    ``std`` is the stationary standard deviation of the filtered stream.
    ``order`` cascades that many identical first-order sections (``1`` is
    the plain first-order filter; higher orders give smoother streams).
    """

    seed: int = 0
    std: float = 1.0
    cutoff_hz: float = 100.0
    sample_rate: float = 10_000.0
    order: int = 1

    def __post_init__(self):
        check_positive(self.std, "std", allow_zero=True)
        check_positive(self.cutoff_hz, "cutoff_hz")
        if not self.sample_rate > 0.0:
            raise ValueError("sample_rate must be > 0")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError("order must be a positive integer")


def band_limited_noise(cfg, n):
    """``n`` samples of band-limited white noise, deterministic in ``cfg.seed``.

    The first-order filter is discretized exactly
    (``y[k] = a y[k-1] + b w[k]``, ``a = exp(-2 pi fc / fs)``) and the drive
    is scaled so the stationary variance ``b^2 / (1 - a^2)`` equals
    ``std^2``; the filter starts in its stationary distribution.  Cascades
    (``order > 1``) are run through :func:`scipy.signal.lfilter` after a
    burn-in of ten time constants per section and scaled by the exact
    stationary gain of the cascade.
    """
    n = int(n)
    if n <= 0:
        raise ValueError("n must be positive")
    if cfg.std == 0.0:
        return np.zeros(n)
    rng = np.random.default_rng(cfg.seed)
    a = math.exp(-2.0 * math.pi * cfg.cutoff_hz / cfg.sample_rate)
    if cfg.order > 1:
        return _cascade_noise(rng, a, cfg, n)
    b = cfg.std * math.sqrt(1.0 - a * a)
    w = rng.standard_normal(n)
    y = np.empty(n)
    prev = cfg.std * rng.standard_normal()
    for i, wi in enumerate(w.tolist()):
        prev = a * prev + b * wi
        y[i] = prev
    return y


def _cascade_gain(a, order, tol=1e-16):
    """Stationary std of ``order`` unit-DC first-order sections driven by unit white noise."""
    # impulse response of 1/(1 - a q^-1)^order: h_k = C(k + order - 1, order - 1) a^k
    total, h, k = 0.0, 1.0, 0
    while True:
        total += h * h
        k += 1
        h *= a * (k + order - 1) / k
        if h * h < tol * total and k > order / (1.0 - a):
            break
    return (1.0 - a) ** order * math.sqrt(total)


def _cascade_noise(rng, a, cfg, n):
    order = int(cfg.order)
    burn = int(math.ceil(10.0 * order / (1.0 - a)))
    w = rng.standard_normal(n + burn)
    den = np.array([1.0, -a])
    y = w
    for _ in range(order):
        y = lfilter([1.0 - a], den, y)
    return y[burn:] * (cfg.std / _cascade_gain(a, order))


def fade_in(t, duration):
    """Raised-cosine window rising from 0 at ``t = 0`` to 1 at ``t = duration``."""
    t = np.asarray(t, dtype=float)
    if duration <= 0.0:
        return np.ones_like(t)
    r = np.clip(t / duration, 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(math.pi * r)


@dataclass(frozen=True)
class ChirpSpec:
    """Linear up-sweep from ``f0`` to ``f1`` over ``duration``.

    The amplitude is ``max_velocity / (2 pi f1)`` so the reference velocity
    never exceeds ``max_velocity``.
    """

    f0: float = 0.01
    f1: float = 3.0
    duration: float = 60.0
    max_velocity: float = 0.1

    @property
    def amplitude(self):
        return self.max_velocity / (2.0 * math.pi * self.f1)


def chirp_frequency(spec, t):
    """Instantaneous frequency [Hz] (held at ``f1`` after the sweep)."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, spec.duration)
    return spec.f0 + (spec.f1 - spec.f0) * t / spec.duration


def chirp_reference(spec, t):
    """Position and analytic velocity of the sweep ``A sin(phase(t))``."""
    t = np.asarray(t, dtype=float)
    rate = (spec.f1 - spec.f0) / spec.duration
    tc = np.clip(t, 0.0, spec.duration)
    phase = 2.0 * math.pi * (spec.f0 * tc + 0.5 * rate * tc * tc)
    # constant frequency f1 beyond the sweep end
    phase = phase + 2.0 * math.pi * spec.f1 * (t - tc)
    freq = chirp_frequency(spec, t)
    amp = spec.amplitude
    return amp * np.sin(phase), amp * 2.0 * math.pi * freq * np.cos(phase)


@dataclass(frozen=True)
class PositioningSpec:
    """Move-hold profile: from 0, ramp to each setpoint then hold it.

    Defaults give two hold phases; the magnitudes are artifact choices.
    """

    setpoints: Tuple[float, ...] = (0.002, 0.0005)
    ramp_time: float = 0.5
    hold_time: float = 3.0
    start_delay: float = 0.5

    def __post_init__(self):
        if len(self.setpoints) < 1:
            raise ValueError("at least one setpoint is required")
        check_positive(self.ramp_time, "ramp_time")
        check_positive(self.hold_time, "hold_time")
        check_positive(self.start_delay, "start_delay", allow_zero=True)

    @property
    def duration(self):
        return self.start_delay + len(self.setpoints) * (self.ramp_time + self.hold_time)

    def hold_phases(self):
        """``(start, end)`` of each hold after reaching a setpoint."""
        phases = []
        t = self.start_delay
        for _ in self.setpoints:
            t += self.ramp_time
            phases.append((t, t + self.hold_time))
            t += self.hold_time
        return phases


def positioning_reference(spec, t):
    """Position and velocity of the positioning profile at times ``t``."""
    t = np.asarray(t, dtype=float)
    x = np.zeros_like(t)
    v = np.zeros_like(t)
    start = spec.start_delay
    prev = 0.0
    for target in spec.setpoints:
        slope = (target - prev) / spec.ramp_time
        on_ramp = (t >= start) & (t < start + spec.ramp_time)
        after = t >= start + spec.ramp_time
        x = np.where(on_ramp, prev + slope * (t - start), x)
        v = np.where(on_ramp, slope, v)
        x = np.where(after, target, x)
        v = np.where(after, 0.0, v)
        prev = target
        start += spec.ramp_time + spec.hold_time
    return x, v


@dataclass(frozen=True)
class ConstantVelocitySpec:
    velocity: float = 0.01


def constant_velocity_reference(spec, t):
    t = np.asarray(t, dtype=float)
    return spec.velocity * t, np.full_like(t, spec.velocity)
