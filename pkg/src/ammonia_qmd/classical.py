"""Broken sinusoids: a unit-frequency oscillator reset by random impacts.

Two impact rules are provided.  ``full`` draws a fresh amplitude and phase,
forgetting the old state entirely.  ``continuous`` keeps the position at the
impact time and redraws amplitude and velocity consistently with it.  Either
rule can be weakened by mixing the proposed state with the old one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .qdyn import MAX_STEP_PROBABILITY, ConfigError, ContractViolation
from .rng import check_seed, stream
from .timeseries import TimeSeries

__all__ = [
    "OscillatorState",
    "ClassicalModelConfig",
    "MODELS",
    "impact_full",
    "impact_continuous",
    "weaken",
    "carrier_phase",
    "simulate_classical",
]

TWO_PI = 2.0 * math.pi
MODELS = ("full", "continuous")
VELOCITY_MEASURES = ("amplitude", "speed")
MIXINGS = ("polar", "phasor")


def carrier_phase(t):
    """``2*pi*t`` reduced to one cycle before scaling.

    Keeps ``cos(carrier_phase(t) + phi)`` accurate to ~1e-15 even for
    t of several thousand cycles.
    """
    t = np.asarray(t, dtype=float)
    return TWO_PI * (t - np.floor(t))


@dataclass(frozen=True)
class OscillatorState:
    """``x(t) = amplitude * cos(2*pi*t + phase)``."""

    amplitude: float
    phase: float

    def __post_init__(self):
        if not -1e-12 <= self.amplitude <= 1.0 + 1e-12:
            raise ContractViolation(f"amplitude must lie in [0, 1], got {self.amplitude}")

    def position(self, t: float) -> float:
        return self.amplitude * math.cos(float(carrier_phase(t)) + self.phase)

    def velocity(self, t: float) -> float:
        return -TWO_PI * self.amplitude * math.sin(float(carrier_phase(t)) + self.phase)

    @property
    def phasor(self) -> complex:
        return self.amplitude * complex(math.cos(self.phase), math.sin(self.phase))


@dataclass(frozen=True)
class ClassicalModelConfig:
    """Parameters of the broken-sinusoid simulation.

    ``velocity_measure`` picks how the continuous model randomises the
    post-impact motion: ``amplitude`` draws the amplitude uniformly and then
    a random velocity sign; ``speed`` draws the signed velocity uniformly
    over its admissible range.  ``mixing`` selects how :func:`weaken`
    interpolates phases.
    """

    model: str = "full"
    p_rate: float = 0.0
    epsilon: float = 1.0
    dt: float = 1.0 / 64
    n_cycles: float = 2048
    seed: int = 0
    velocity_measure: str = "amplitude"
    mixing: str = "phasor"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not 0.0 < self.dt <= 0.1:
            raise ConfigError(f"dt must lie in (0, 0.1], got {self.dt}")
        if self.p_rate < 0:
            raise ConfigError("p_rate must be non-negative")
        if self.n_cycles < 1:
            raise ConfigError("n_cycles must be >= 1")
        if self.dt * self.p_rate > 1.0:
            raise ConfigError("more than one impact per step")
        if self.dt * self.p_rate > MAX_STEP_PROBABILITY:
            raise ConfigError(
                f"dt * p_rate = {self.dt * self.p_rate:g} exceeds {MAX_STEP_PROBABILITY}"
            )
        if self.velocity_measure not in VELOCITY_MEASURES:
            raise ConfigError(f"velocity_measure must be one of {VELOCITY_MEASURES}")
        if self.mixing not in MIXINGS:
            raise ConfigError(f"mixing must be one of {MIXINGS}")
        check_seed(self.seed)
        n = self.n_cycles / self.dt
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ConfigError("n_cycles must be an integer multiple of dt")

    @property
    def n_samples(self) -> int:
        return int(round(self.n_cycles / self.dt))

    def with_(self, **changes) -> "ClassicalModelConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "p_rate": self.p_rate,
            "epsilon": self.epsilon,
            "dt": self.dt,
            "n_cycles": self.n_cycles,
            "seed": self.seed,
            "velocity_measure": self.velocity_measure,
            "mixing": self.mixing,
        }


def impact_full(state: OscillatorState, t0: float, rng: np.random.Generator) -> OscillatorState:
    """Strongest impact: new amplitude in U(0, 1), new phase in U(0, 2*pi)."""
    amplitude = rng.random()
    phase = TWO_PI * rng.random()
    return OscillatorState(amplitude, phase)


def impact_continuous(
    state: OscillatorState,
    t0: float,
    rng: np.random.Generator,
    velocity_measure: str = "amplitude",
) -> OscillatorState:
    """Impact that leaves the position ``x(t0)`` unchanged.

    The new amplitude is at least ``|x(t0)|``; the phase is then fixed by
    the position up to the sign of the velocity.
    """
    carrier = float(carrier_phase(t0))
    x0 = state.amplitude * math.cos(carrier + state.phase)
    if abs(x0) > 1.0 + 1e-12:
        raise ContractViolation(f"|x(t0)| = {abs(x0)} exceeds 1")
    x0 = max(-1.0, min(1.0, x0))
    if velocity_measure == "amplitude":
        amplitude = abs(x0) + (1.0 - abs(x0)) * rng.random()
        sign = 1.0 if rng.random() < 0.5 else -1.0
        w = sign * math.sqrt(max(amplitude * amplitude - x0 * x0, 0.0))
    elif velocity_measure == "speed":
        w_max = math.sqrt(max(1.0 - x0 * x0, 0.0))
        w = w_max * (2.0 * rng.random() - 1.0)
        amplitude = math.hypot(x0, w)
    else:
        raise ContractViolation(f"unknown velocity measure {velocity_measure!r}")
    # velocity = -2*pi*w, so w = amplitude * sin(carrier + phase).
    theta = math.atan2(w, x0)
    return OscillatorState(min(amplitude, 1.0), theta - carrier)


def _wrap(phi: float) -> float:
    return phi % TWO_PI


def weaken(
    old: OscillatorState,
    proposed: OscillatorState,
    epsilon: float,
    mixing: str = "polar",
) -> OscillatorState:
    """Blend ``epsilon`` of the proposed state with ``1 - epsilon`` of the old.

    ``polar`` mixes amplitude linearly and moves the phase along the
    shortest arc.  ``phasor`` mixes the complex amplitudes
    ``A * exp(i*phi)``, which keeps the position unchanged whenever both
    states agree on it.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ContractViolation(f"epsilon must lie in (0, 1], got {epsilon}")
    if epsilon == 1.0:
        return proposed
    if mixing == "polar":
        amplitude = epsilon * proposed.amplitude + (1.0 - epsilon) * old.amplitude
        arc = (proposed.phase - old.phase + math.pi) % TWO_PI - math.pi
        return OscillatorState(amplitude, _wrap(old.phase + epsilon * arc))
    if mixing == "phasor":
        z = epsilon * proposed.phasor + (1.0 - epsilon) * old.phasor
        return OscillatorState(min(abs(z), 1.0), math.atan2(z.imag, z.real))
    raise ContractViolation(f"unknown mixing {mixing!r}")


def simulate_classical(
    config: ClassicalModelConfig,
    index: int = 0,
    initial: OscillatorState | None = None,
) -> TimeSeries:
    """Sample ``x(k*dt)`` for one realisation.

    As in the quantum model the sample at ``k`` is recorded before an
    impact at ``k``.
    """
    state = initial or OscillatorState(1.0, 0.0)
    n = config.n_samples
    starts, amps, phases = [0], [state.amplitude], [state.phase]
    if config.p_rate > 0:
        gen = stream(config.seed, index)
        hits = np.flatnonzero(gen.random(n) < config.dt * config.p_rate)
        for k in hits:
            t0 = k * config.dt
            if config.model == "full":
                proposed = impact_full(state, t0, gen)
            else:
                proposed = impact_continuous(state, t0, gen, config.velocity_measure)
            state = weaken(state, proposed, config.epsilon, config.mixing)
            starts.append(int(k))
            amps.append(state.amplitude)
            phases.append(state.phase)
    k = np.arange(n)
    seg = np.maximum(np.searchsorted(np.asarray(starts), k, side="left") - 1, 0)
    x = np.asarray(amps)[seg] * np.cos(carrier_phase(k * config.dt) + np.asarray(phases)[seg])
    meta = {"index": index, **config.to_dict(), "n_impacts": len(starts) - 1}
    meta["model"] = f"classical-{config.model}"
    return TimeSeries(x, config.dt, meta)
