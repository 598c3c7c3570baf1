"""Two-level double-well dynamics under top-hat collision impulses.

The molecule is a pair of complex amplitudes ``(alpha, beta)`` on the left
and right wells.  Between collisions the wells are coupled by the
tunnelling term ``omega1/2``; during a collision one well is raised by
``omega_p`` for a short time ``duration``.  Both propagators are the exact
2x2 unitaries, written in closed form.

Time is measured in unperturbed Rabi cycles (``omega1 = 2*pi``), so the
impact rate ``p_rate`` is the mean number of impacts per cycle.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .rng import check_seed, stream
from .timeseries import TimeSeries

__all__ = [
    "ContractViolation",
    "ConfigError",
    "StateVector",
    "QuantumModelConfig",
    "ImpactEvent",
    "DensityMatrix",
    "Trajectory",
    "CoherenceStats",
    "PRESETS",
    "preset",
    "free_propagate",
    "impact_propagate",
    "impact_propagate_matched",
    "basis_transform",
    "from_energy_basis",
    "density_matrix",
    "draw_impacts",
    "evolve",
    "simulate_trajectory",
    "simulate_ensemble",
    "coherence_statistics",
]

TWO_PI = 2.0 * math.pi
NORM_TOL = 1e-9
RENORM_TOL = 1e-12
MAX_STEP_PROBABILITY = 0.5
SIDES = ("left", "right")
SIDE_POLICIES = ("random", "left")


class ContractViolation(ValueError):
    """An operation received input outside its precondition."""


class ConfigError(ValueError):
    """A model configuration is physically or numerically inadmissible."""


@dataclass(frozen=True)
class StateVector:
    """Amplitudes on the left and right wells."""

    alpha: complex
    beta: complex

    @property
    def norm2(self) -> float:
        return abs(self.alpha) ** 2 + abs(self.beta) ** 2

    @property
    def occupancy(self) -> float:
        """Left-well occupancy ``|alpha|**2``."""
        return abs(self.alpha) ** 2

    def check_normalized(self, tol: float = NORM_TOL) -> "StateVector":
        if not abs(self.norm2 - 1.0) <= tol:
            raise ContractViolation(
                f"state is not normalized: |alpha|^2+|beta|^2 = {self.norm2!r}"
            )
        return self

    def normalized(self) -> "StateVector":
        n = math.sqrt(self.norm2)
        if n == 0.0:
            raise ContractViolation("cannot normalize the zero vector")
        return StateVector(self.alpha / n, self.beta / n)

    def with_phase(self, phase: float) -> "StateVector":
        u = cmath.exp(1j * phase)
        return StateVector(u * self.alpha, u * self.beta)


@dataclass(frozen=True)
class QuantumModelConfig:
    """Parameters of the stochastic impact model.

    ``dt`` is the sampling step and
    ``n_cycles`` the record length; the record holds ``n_cycles / dt``
    samples covering ``[0, n_cycles)``.
    """

    omega_p: float
    p_rate: float = 0.0
    dt: float = 1.0 / 64
    n_cycles: float = 2048
    seed: int = 0
    impact_side: str = "random"
    omega1: float = TWO_PI
    omega0: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.dt <= 0.1:
            raise ConfigError(f"dt must lie in (0, 0.1], got {self.dt}")
        if self.p_rate < 0 or self.omega_p < 0:
            raise ConfigError("p_rate and omega_p must be non-negative")
        if self.n_cycles < 1:
            raise ConfigError(f"n_cycles must be >= 1, got {self.n_cycles}")
        if self.omega1 <= 0:
            raise ConfigError("omega1 must be positive")
        if self.impact_side not in SIDE_POLICIES:
            raise ConfigError(f"impact_side must be one of {SIDE_POLICIES}")
        if self.dt * self.p_rate > 1.0:
            raise ConfigError(
                f"dt * p_rate = {self.dt * self.p_rate:g} > 1: more than one impact per step"
            )
        if self.dt * self.p_rate > MAX_STEP_PROBABILITY:
            raise ConfigError(
                f"dt * p_rate = {self.dt * self.p_rate:g} exceeds {MAX_STEP_PROBABILITY}; "
                "reduce dt"
            )
        if self.p_rate > 0:
            if self.omega_p == 0:
                raise ConfigError("stochastic impacts need omega_p > 0")
            if self.max_duration >= self.dt:
                raise ConfigError(
                    f"impact duration bound 2*pi/omega_p = {self.max_duration:g} "
                    f"is not shorter than dt = {self.dt:g}"
                )
        check_seed(self.seed)
        n = self.n_cycles / self.dt
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ConfigError("n_cycles must be an integer multiple of dt")

    @property
    def max_duration(self) -> float:
        return TWO_PI / self.omega_p if self.omega_p > 0 else math.inf

    @property
    def n_samples(self) -> int:
        return int(round(self.n_cycles / self.dt))

    @property
    def step_probability(self) -> float:
        return self.dt * self.p_rate

    def with_(self, **changes) -> "QuantumModelConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "omega_p": self.omega_p,
            "p_rate": self.p_rate,
            "dt": self.dt,
            "n_cycles": self.n_cycles,
            "seed": self.seed,
            "impact_side": self.impact_side,
            "omega1": self.omega1,
            "omega0": self.omega0,
        }


# Perturbation strength ~ kT (208 cm^-1) over the inversion splitting.
PRESETS = {
    "nh3": {"omega_p": 260 * TWO_PI, "p_per_bar": 4.5},
    "nd3": {"omega_p": 3925 * TWO_PI, "p_per_bar": 67.5},
}


def preset(name: str, **overrides) -> QuantumModelConfig:
    try:
        params = PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return QuantumModelConfig(omega_p=params["omega_p"], **overrides)


@dataclass(frozen=True)
class ImpactEvent:
    index: int
    duration: float
    side: str = "left"

    def __post_init__(self):
        if self.duration < 0:
            raise ContractViolation("impact duration must be non-negative")
        if self.side not in SIDES:
            raise ContractViolation(f"side must be one of {SIDES}")


@dataclass(frozen=True)
class DensityMatrix:
    rho_LL: float
    rho_RR: float
    rho_LR: complex

    @property
    def rho_RL(self) -> complex:
        return self.rho_LR.conjugate()

    @property
    def trace(self) -> float:
        return self.rho_LL + self.rho_RR

    @property
    def determinant(self) -> float:
        return self.rho_LL * self.rho_RR - abs(self.rho_LR) ** 2

    def as_array(self) -> np.ndarray:
        return np.array([[self.rho_LL, self.rho_LR], [self.rho_RL, self.rho_RR]])


def _free_coeffs(t, omega1):
    half = 0.5 * omega1 * t
    return np.cos(half), np.sin(half)


def free_propagate(state: StateVector, t: float, omega1: float = TWO_PI) -> StateVector:
    """Advance ``state`` by ``t`` under the unperturbed double well.

    The baseline well energy only contributes a global phase and is dropped.
    """
    state.check_normalized()
    c, s = math.cos(0.5 * omega1 * t), math.sin(0.5 * omega1 * t)
    a, b = state.alpha, state.beta
    return StateVector(c * a - 1j * s * b, -1j * s * a + c * b)


def impact_propagate(
    state: StateVector,
    duration: float,
    side: str = "left",
    omega_p: float = 260 * TWO_PI,
    omega1: float = TWO_PI,
) -> StateVector:
    """Advance ``state`` by ``duration`` with one well raised by ``omega_p``."""
    state.check_normalized()
    if duration < 0:
        raise ContractViolation("impact duration must be non-negative")
    big = math.hypot(omega_p, omega1)
    cos_t, sin_t = omega_p / big, omega1 / big
    if side == "right":
        cos_t = -cos_t
    elif side != "left":
        raise ContractViolation(f"side must be one of {SIDES}")
    c, s = math.cos(0.5 * big * duration), math.sin(0.5 * big * duration)
    ph = cmath.exp(-0.5j * omega_p * duration)
    a, b = state.alpha, state.beta
    return StateVector(
        ph * ((c - 1j * s * cos_t) * a - 1j * s * sin_t * b),
        ph * (-1j * s * sin_t * a + (c + 1j * s * cos_t) * b),
    )


def impact_propagate_matched(
    state: StateVector,
    duration: float,
    side: str = "left",
    omega_p: float = 260 * TWO_PI,
    omega1: float = TWO_PI,
    omega0: float = 0.0,
) -> StateVector:
    """Impact evolution by explicit eigenvector matching.

    Diagonalises the perturbed Hamiltonian, projects the spatial amplitudes
    at onset onto its eigenvectors, evolves each eigen-amplitude by its own
    phase and re-expands at offset.  Slow, but independent of the closed
    form in :func:`impact_propagate`.
    """
    raised = 0 if side == "left" else 1
    h = np.array([[omega0, 0.5 * omega1], [0.5 * omega1, omega0]], dtype=complex)
    h[raised, raised] += omega_p
    energies, vecs = np.linalg.eigh(h)
    psi = np.array([state.alpha, state.beta])
    coeffs = vecs.conj().T @ psi  # (a_P, b_P) at onset
    coeffs = coeffs * np.exp(-1j * energies * duration)
    out = vecs @ coeffs
    # Drop the omega0 global phase, as the closed form does.
    out = out * cmath.exp(1j * omega0 * duration)
    return StateVector(complex(out[0]), complex(out[1]))


_SQRT_HALF = math.sqrt(0.5)


def basis_transform(state: StateVector) -> tuple[complex, complex]:
    """Energy-basis coefficients ``(a, b)`` of a spatial-basis state.

    ``a`` multiplies the symmetric combination of the wells, ``b`` the
    antisymmetric one.
    """
    state.check_normalized()
    return (
        _SQRT_HALF * (state.alpha + state.beta),
        _SQRT_HALF * (state.alpha - state.beta),
    )


def from_energy_basis(a: complex, b: complex) -> StateVector:
    return StateVector(_SQRT_HALF * (a + b), _SQRT_HALF * (a - b))


def density_matrix(state: StateVector) -> DensityMatrix:
    state.check_normalized()
    a, b = state.alpha, state.beta
    return DensityMatrix(abs(a) ** 2, abs(b) ** 2, a * b.conjugate())


def draw_impacts(config: QuantumModelConfig, index: int = 0) -> list[ImpactEvent]:
    """Random impacts for trajectory ``index`` of ``config.seed``.

    Each sample step carries one Bernoulli trial with probability
    ``dt * p_rate``.  Durations are uniform on ``[0, 2*pi/omega_p]``.  The
    side is drawn even under the left-only policy so both policies share
    impact times and durations for a given seed.
    """
    if config.p_rate == 0:
        return []
    gen = stream(config.seed, index)
    hits = np.flatnonzero(gen.random(config.n_samples) < config.step_probability)
    durations = gen.random(hits.size) * config.max_duration
    right = gen.random(hits.size) < 0.5
    if config.impact_side == "left":
        right[:] = False
    return [
        ImpactEvent(int(k), float(d), "right" if r else "left")
        for k, d, r in zip(hits, durations, right)
    ]


@dataclass
class Trajectory:
    """Sampled amplitudes of one realisation."""

    alpha: np.ndarray
    beta: np.ndarray
    dt: float
    impacts: list[ImpactEvent] = field(default_factory=list)
    renormalizations: int = 0

    @property
    def occupancy(self) -> np.ndarray:
        return self.alpha.real**2 + self.alpha.imag**2

    @property
    def coherence(self) -> np.ndarray:
        """``rho_LR(t) = alpha * conj(beta)``."""
        return self.alpha * np.conj(self.beta)

    @property
    def norm2(self) -> np.ndarray:
        return self.occupancy + self.beta.real**2 + self.beta.imag**2

    @property
    def final_state(self) -> StateVector:
        return StateVector(complex(self.alpha[-1]), complex(self.beta[-1]))

    def to_timeseries(self, meta: dict | None = None) -> TimeSeries:
        return TimeSeries(self.occupancy, self.dt, dict(meta or {}))


def evolve(
    config: QuantumModelConfig,
    impacts: Sequence[ImpactEvent] | Iterable[ImpactEvent] = (),
    initial: StateVector | None = None,
) -> Trajectory:
    """Sample the amplitudes on the grid ``k * dt`` for a given impact list.

    The amplitude recorded at sample ``k`` is taken before any impact at
    ``k``; the impact acts as an instantaneous kick that consumes no clock
    time, so the sampling grid stays uniform.  Between impacts the state is
    evaluated in closed form from the last post-impact state, which keeps
    round-off from accumulating step by step.
    """
    state = (initial or StateVector(1.0 + 0j, 0j)).check_normalized()
    n = config.n_samples
    impacts = sorted(impacts, key=lambda e: e.index)
    for ev in impacts:
        if not 0 <= ev.index < n:
            raise ContractViolation(f"impact index {ev.index} outside record of {n} samples")

    w1 = config.omega1
    # Segment j starts at sample starts[j] with state seg_a[j], seg_b[j].
    starts = [0]
    seg_a, seg_b = [state.alpha], [state.beta]
    renorm = 0
    a, b, k0 = state.alpha, state.beta, 0
    for ev in impacts:
        half = 0.5 * w1 * (ev.index - k0) * config.dt
        c, s = math.cos(half), math.sin(half)
        a, b = c * a - 1j * s * b, -1j * s * a + c * b
        kicked = impact_propagate(
            StateVector(a, b), ev.duration, ev.side, config.omega_p, w1
        )
        a, b = kicked.alpha, kicked.beta
        n2 = abs(a) ** 2 + abs(b) ** 2
        if abs(n2 - 1.0) > RENORM_TOL:
            r = math.sqrt(n2)
            a, b = a / r, b / r
            renorm += 1
        k0 = ev.index
        # Two kicks at one sample just compose; the later one wins the segment.
        if starts[-1] == k0 and len(starts) > 1:
            seg_a[-1], seg_b[-1] = a, b
        else:
            starts.append(k0)
            seg_a.append(a)
            seg_b.append(b)

    k = np.arange(n)
    starts_arr = np.asarray(starts)
    # Sample k belongs to the last segment whose kick happened strictly before k.
    seg = np.maximum(np.searchsorted(starts_arr, k, side="left") - 1, 0)
    c, s = _free_coeffs((k - starts_arr[seg]) * config.dt, w1)
    a0 = np.asarray(seg_a, dtype=complex)[seg]
    b0 = np.asarray(seg_b, dtype=complex)[seg]
    alpha = c * a0 - 1j * s * b0
    beta = -1j * s * a0 + c * b0
    return Trajectory(alpha, beta, config.dt, list(impacts), renorm)


def simulate_trajectory(
    config: QuantumModelConfig,
    initial: StateVector | None = None,
    index: int = 0,
) -> TimeSeries:
    """Left-well occupancy ``|alpha|**2`` of one stochastic realisation."""
    traj = evolve(config, draw_impacts(config, index), initial)
    meta = {"model": "quantum", "index": index, **config.to_dict()}
    meta["n_impacts"] = len(traj.impacts)
    return traj.to_timeseries(meta)


def simulate_ensemble(
    config: QuantumModelConfig,
    n_trajectories: int,
    initial: StateVector | None = None,
) -> list[Trajectory]:
    return [
        evolve(config, draw_impacts(config, i), initial) for i in range(n_trajectories)
    ]


@dataclass(frozen=True)
class CoherenceStats:
    """Localisation diagnostics over a late-time window.

    A collapse onto the well eigenstates would drive ``mean_abs_coherence``
    towards zero and pile the occupancy histogram up at 0 and 1.
    """

    window: tuple[float, float]
    per_trajectory: np.ndarray
    mean_abs_coherence: float
    ensemble_coherence: float
    histogram: np.ndarray
    bin_edges: np.ndarray
    edge_fraction: float
    n_trajectories: int

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "per_trajectory_mean_abs_rho_LR": self.per_trajectory.tolist(),
            "mean_abs_rho_LR": self.mean_abs_coherence,
            "abs_ensemble_rho_LR": self.ensemble_coherence,
            "occupancy_histogram": self.histogram.tolist(),
            "occupancy_bin_edges": self.bin_edges.tolist(),
            "edge_fraction": self.edge_fraction,
            "n_trajectories": self.n_trajectories,
        }


def coherence_statistics(
    trajectories: Sequence[Trajectory],
    window: tuple[float, float] | None = None,
    bins: int = 20,
    edge: float = 0.05,
) -> CoherenceStats:
    """Summarise ``|rho_LR|`` and ``|alpha|**2`` over ``window`` (in cycles).

    ``edge_fraction`` is the share of occupancy samples within ``edge`` of
    0 or 1.  Without a window the second half of the record is used.
    """
    if not trajectories:
        raise ContractViolation("need at least one trajectory")
    dt = trajectories[0].dt
    n = min(t.alpha.size for t in trajectories)
    if window is None:
        window = (0.5 * n * dt, n * dt)
    lo = int(math.ceil(window[0] / dt - 1e-9))
    hi = min(int(math.floor(window[1] / dt + 1e-9)), n)
    if not 0 <= lo < hi:
        raise ContractViolation(f"empty window {window}")
    per_traj = np.array([np.abs(t.coherence[lo:hi]).mean() for t in trajectories])
    ens = np.zeros(hi - lo, dtype=complex)
    for t in trajectories:
        ens += t.coherence[lo:hi]
    ens /= len(trajectories)
    occ = np.concatenate([t.occupancy[lo:hi] for t in trajectories])
    hist, edges = np.histogram(occ, bins=bins, range=(0.0, 1.0))
    near = np.count_nonzero((occ <= edge) | (occ >= 1.0 - edge)) / occ.size
    return CoherenceStats(
        window=(lo * dt, hi * dt),
        per_trajectory=per_traj,
        mean_abs_coherence=float(per_traj.mean()),
        ensemble_coherence=float(np.abs(ens).mean()),
        histogram=hist,
        bin_edges=edges,
        edge_fraction=float(near),
        n_trajectories=len(trajectories),
    )
