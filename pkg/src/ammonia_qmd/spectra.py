"""Periodograms and Van Vleck-Weisskopf line fitting."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .timeseries import TimeSeries

__all__ = [
    "Spectrum",
    "LineshapeFit",
    "QUANTITIES",
    "periodogram",
    "average_spectra",
    "vvw_lineshape",
    "vvw_strong_impact_width",
    "fit_lineshape",
    "DEFAULT_FIT_RANGE",
]

QUANTITIES = ("power", "modulus")
DEFAULT_FIT_RANGE = (0.0, 4.0)
# Relative residual gap below which the nu0 = 0 fit is preferred.
QUENCH_TIE = 1e-3


@dataclass(frozen=True)
class Spectrum:
    """One-sided spectrum on the grid ``k / duration``, ``k = 0 .. N//2``.

    ``quantity`` is ``power`` (squared modulus) or ``modulus``.
    """

    frequencies: np.ndarray
    power: np.ndarray
    n_trajectories: int = 1
    quantity: str = "power"

    @property
    def resolution(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# quantity={self.quantity} n_trajectories={self.n_trajectories}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["nu", "power"])
            for nu, pw in zip(self.frequencies, self.power):
                w.writerow([repr(float(nu)), repr(float(pw))])

    @classmethod
    def from_csv(cls, path) -> "Spectrum":
        quantity, n_traj = "power", 1
        rows = []
        with open(path, newline="") as fh:
            for line in fh:
                if line.startswith("#"):
                    for tok in line[1:].split():
                        key, _, val = tok.partition("=")
                        if key == "quantity":
                            quantity = val
                        elif key == "n_trajectories":
                            n_traj = int(val)
                    continue
                rows.append(line)
        reader = csv.DictReader(rows)
        if reader.fieldnames is None or not {"nu", "power"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns nu, power")
        data = [(float(r["nu"]), float(r["power"])) for r in reader]
        nu, pw = (np.array(c) for c in zip(*data))
        return cls(nu, pw, n_traj, quantity)


def periodogram(series: TimeSeries, remove_mean: bool = True, quantity: str = "power") -> Spectrum:
    """One-sided periodogram with a rectangular window.

    Power is normalised so that its sum over the one-sided grid equals
    ``N * var(x)`` for a mean-removed series (Parseval).  The ``modulus``
    quantity is the square root of the same power.
    """
    x = np.asarray(series.values, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("periodogram needs at least two samples")
    if quantity not in QUANTITIES:
        raise ValueError(f"quantity must be one of {QUANTITIES}")
    if remove_mean:
        # A constant series maps to exact zeros rather than rounding residue.
        x = np.zeros_like(x) if np.all(x == x[0]) else x - x.mean()
    coeffs = np.fft.rfft(x)
    power = (coeffs.real**2 + coeffs.imag**2) / n
    # Fold negative frequencies; DC and (for even n) Nyquist appear once.
    if n % 2 == 0:
        power[1:-1] *= 2.0
    else:
        power[1:] *= 2.0
    freqs = np.fft.rfftfreq(n, series.dt)
    if quantity == "modulus":
        power = np.sqrt(power)
    return Spectrum(freqs, power, 1, quantity)


def average_spectra(spectra: Sequence[Spectrum]) -> Spectrum:
    """Pointwise mean, accumulated in list order."""
    if not spectra:
        raise ValueError("nothing to average")
    first = spectra[0]
    total = np.zeros_like(first.power)
    count = 0
    for s in spectra:
        if s.quantity != first.quantity:
            raise ValueError("cannot average spectra of different quantities")
        if s.frequencies.shape != first.frequencies.shape or not np.array_equal(
            s.frequencies, first.frequencies
        ):
            raise ValueError("spectra are on different frequency grids")
        total += s.power * s.n_trajectories
        count += s.n_trajectories
    return Spectrum(first.frequencies, total / count, count, first.quantity)


def vvw_lineshape(nu, b, nu0):
    """Van Vleck-Weisskopf profile: Lorentzians of half-width ``b`` at +/- ``nu0``."""
    if not np.all(np.asarray(b) > 0):
        raise ValueError("line width b must be positive")
    nu = np.asarray(nu, dtype=float)
    return 1.0 / (1.0 + ((nu - nu0) / b) ** 2) + 1.0 / (1.0 + ((nu + nu0) / b) ** 2)


def vvw_strong_impact_width(p):
    """Width ``1/(2*pi*tau)`` of strong-impact theory for ``p = 1/tau`` impacts per cycle."""
    if np.any(np.asarray(p) < 0):
        raise ValueError("impact rate must be non-negative")
    return np.asarray(p) / (2.0 * math.pi) if np.ndim(p) else p / (2.0 * math.pi)


@dataclass(frozen=True)
class LineshapeFit:
    b: float
    nu0: float
    A: float
    residual_norm: float
    converged: bool
    quenched: bool = False
    n_bins: int = 0
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def model(self, nu):
        return self.A * vvw_lineshape(nu, self.b, self.nu0)


def _half_width_guess(nu, y, i_peak):
    half = 0.5 * y[i_peak]
    above = np.flatnonzero(y >= half)
    # Widest contiguous run of bins above half maximum that contains the peak.
    lo = hi = i_peak
    while lo > 0 and y[lo - 1] >= half:
        lo -= 1
    while hi < y.size - 1 and y[hi + 1] >= half:
        hi += 1
    if above.size == 0 or hi == lo:
        return max(nu[1] - nu[0], 1e-6) if nu.size > 1 else 1e-3
    return max(0.5 * (nu[hi] - nu[lo]), 0.5 * (nu[1] - nu[0]))


def _solve(nu, y, x0, pinned):
    if pinned:
        def resid(q):
            return q[1] * vvw_lineshape(nu, q[0], 0.0) - y

        lower, upper = [1e-12, 0.0], [np.inf, np.inf]
        start = [x0[0], x0[2]]
    else:
        def resid(q):
            return q[2] * vvw_lineshape(nu, q[0], q[1]) - y

        lower, upper = [1e-12, 0.0, 0.0], [np.inf, np.inf, np.inf]
        start = list(x0)
    return least_squares(
        resid,
        start,
        bounds=(lower, upper),
        method="trf",
        x_scale="jac",
        ftol=1e-10,
        xtol=1e-10,
        gtol=1e-10,
        max_nfev=2000,
    )


def fit_lineshape(
    spectrum: Spectrum,
    fit_range: tuple[float, float] = DEFAULT_FIT_RANGE,
) -> LineshapeFit:
    """Least-squares fit of ``A * f(nu; b, nu0)`` over ``nu_min < nu <= nu_max``.

    The DC bin is always excluded.  ``nu0 >= 0`` and ``b > 0`` are enforced
    as box bounds.  Several starting points are tried; when a fit with
    ``nu0`` pinned at zero is within ``QUENCH_TIE`` of the free fit in
    residual, the line is reported as quenched with ``nu0 = 0``.
    """
    nu_all, y_all = spectrum.frequencies, spectrum.power
    mask = (nu_all > max(fit_range[0], 0.0)) & (nu_all <= fit_range[1])
    nu, y = nu_all[mask], np.asarray(y_all[mask], dtype=float)
    if nu.size < 10:
        raise ValueError(f"only {nu.size} bins in fit range {fit_range}; need >= 10")
    scale = float(np.max(np.abs(y)))
    if scale == 0.0 or not np.isfinite(scale):
        raise ValueError("cannot fit a degenerate (all-zero) spectrum")
    y = y / scale

    i_peak = int(np.argmax(y))
    b_guess = _half_width_guess(nu, y, i_peak)
    starts = [(b_guess, float(nu[i_peak]), float(y[i_peak]))]
    for nu0 in (1.0, 0.5 * float(nu[i_peak])):
        starts.append((b_guess, nu0, float(y[i_peak])))
    starts.append((2.0 * b_guess + 0.1, 0.0, float(y[i_peak])))

    best = None
    for x0 in starts:
        sol = _solve(nu, y, x0, pinned=False)
        if best is None or sol.cost < best.cost:
            best = sol
    pinned = _solve(nu, y, starts[0], pinned=True)

    b, nu0, amp = (float(v) for v in best.x)
    cost, converged, message = best.cost, bool(best.status > 0), best.message
    quenched = False
    if pinned.cost <= best.cost * (1.0 + QUENCH_TIE) + 1e-300:
        b, amp = (float(v) for v in pinned.x)
        nu0, cost, quenched = 0.0, pinned.cost, True
        converged, message = bool(pinned.status > 0), pinned.message
    return LineshapeFit(
        b=b,
        nu0=nu0,
        A=amp * scale,
        residual_norm=math.sqrt(2.0 * cost) * scale,
        converged=converged,
        quenched=quenched,
        n_bins=int(nu.size),
        message=str(message),
    )
