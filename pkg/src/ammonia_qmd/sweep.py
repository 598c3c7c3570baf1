"""Impact-rate sweeps, quench detection and comparison with pressure data."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import classical, qdyn
from .spectra import (
    DEFAULT_FIT_RANGE,
    Spectrum,
    average_spectra,
    fit_lineshape,
    periodogram,
)

__all__ = [
    "SweepRow",
    "SweepResult",
    "PressureScaling",
    "SCALINGS",
    "ExperimentalDataset",
    "ComparisonReport",
    "ensemble_spectrum",
    "run_sweep",
    "detect_quench",
    "broadening_slope",
    "map_pressure",
    "compare_experiment",
    "parse_grid",
    "config_hash",
]

DEFAULT_ENSEMBLE = 32
QUENCH_THRESHOLD = 0.05
SE_GROUPS = 16


def _simulate(template, p: float, index: int):
    cfg = template.with_(p_rate=p)
    if isinstance(cfg, qdyn.QuantumModelConfig):
        return qdyn.simulate_trajectory(cfg, index=index)
    return classical.simulate_classical(cfg, index=index)


def ensemble_spectrum(
    template,
    p: float,
    n_trajectories: int,
    quantity: str = "modulus",
    threads: int = 1,
) -> list[Spectrum]:
    """Per-trajectory spectra at impact rate ``p``, in trajectory order.

    Trajectory ``i`` always uses sub-stream ``(template.seed, i)``, so rows
    of a sweep share random numbers and the output does not depend on
    ``threads``.
    """

    def one(i):
        return periodogram(_simulate(template, p, i), quantity=quantity)

    if threads <= 1:
        return [one(i) for i in range(n_trajectories)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(n_trajectories)))


@dataclass(frozen=True)
class SweepRow:
    p: float
    nu0: float | None
    b: float | None
    A: float | None
    converged: bool
    n_traj: int
    nu0_se: float | None = None
    b_se: float | None = None
    quenched: bool = False
    pressure_bar: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.nu0 is not None


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    model: str
    config: dict
    seed: int
    quantity: str = "modulus"
    fit_range: tuple[float, float] = DEFAULT_FIT_RANGE

    def __post_init__(self):
        ps = [r.p for r in self.rows]
        if ps != sorted(ps):
            raise ValueError("sweep rows must be sorted by p")

    @property
    def p(self) -> np.ndarray:
        return np.array([r.p for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        return np.array(
            [np.nan if getattr(r, name) is None else getattr(r, name) for r in self.rows],
            dtype=float,
        )

    def row_at(self, p: float) -> SweepRow:
        for r in self.rows:
            if math.isclose(r.p, p, rel_tol=0, abs_tol=1e-9):
                return r
        raise KeyError(p)

    def header(self) -> dict:
        return {
            "model": self.model,
            "seed": self.seed,
            "quantity": self.quantity,
            "fit_range": list(self.fit_range),
            "config_hash": config_hash(self.config),
            "config": self.config,
        }

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        cols = ["p", "pressure_bar", "nu0", "b", "A", "converged", "n_traj", "nu0_se", "b_se", "quenched", "error"]
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "SweepResult":
        with open(path, newline="") as fh:
            lines = fh.read().splitlines()
        header = {}
        body = []
        for line in lines:
            if line.startswith("#"):
                try:
                    header = json.loads(line[1:])
                except json.JSONDecodeError:
                    pass
            elif line.strip():
                body.append(line)
        reader = csv.DictReader(body)
        required = {"p", "nu0", "b", "A", "converged", "n_traj"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"{path}: sweep CSV needs columns {sorted(required)}")
        rows = []
        for rec in reader:
            rows.append(
                SweepRow(
                    p=float(rec["p"]),
                    nu0=_num(rec["nu0"]),
                    b=_num(rec["b"]),
                    A=_num(rec["A"]),
                    converged=rec["converged"] == "true",
                    n_traj=int(rec["n_traj"]),
                    nu0_se=_num(rec.get("nu0_se", "")),
                    b_se=_num(rec.get("b_se", "")),
                    quenched=rec.get("quenched", "false") == "true",
                    pressure_bar=_num(rec.get("pressure_bar", "")),
                    error=rec.get("error") or None,
                )
            )
        return cls(
            rows=tuple(rows),
            model=header.get("model", "unknown"),
            config=header.get("config", {}),
            seed=int(header.get("seed", 0)),
            quantity=header.get("quantity", "modulus"),
            fit_range=tuple(header.get("fit_range", DEFAULT_FIT_RANGE)),
        )


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _num(s):
    return None if s in ("", None) else float(s)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _model_name(template) -> str:
    if isinstance(template, qdyn.QuantumModelConfig):
        return "quantum"
    return f"classical-{template.model}"


def _fit_row(p, spectra: list[Spectrum], fit_range, se_groups) -> SweepRow:
    avg = average_spectra(spectra)
    fit = fit_lineshape(avg, fit_range)
    nu0_se = b_se = None
    m = len(spectra)
    k = min(se_groups, m)
    if k >= 2:
        # Grouped jackknife over contiguous blocks of trajectories.
        blocks = np.array_split(np.arange(m), k)
        nus, bs = [], []
        for blk in blocks:
            keep = [spectra[i] for i in range(m) if i not in set(blk.tolist())]
            f = fit_lineshape(average_spectra(keep), fit_range)
            nus.append(f.nu0)
            bs.append(f.b)
        scale = (k - 1) / k
        nu0_se = float(math.sqrt(scale * np.sum((np.array(nus) - np.mean(nus)) ** 2)))
        b_se = float(math.sqrt(scale * np.sum((np.array(bs) - np.mean(bs)) ** 2)))
    return SweepRow(
        p=float(p),
        nu0=fit.nu0,
        b=fit.b,
        A=fit.A,
        converged=fit.converged,
        n_traj=avg.n_trajectories,
        nu0_se=nu0_se,
        b_se=b_se,
        quenched=fit.quenched,
    )


def run_sweep(
    template,
    p_grid: Sequence[float],
    ensemble_size: int = DEFAULT_ENSEMBLE,
    quantity: str = "modulus",
    fit_range: tuple[float, float] = DEFAULT_FIT_RANGE,
    threads: int = 1,
    se_groups: int = SE_GROUPS,
) -> SweepResult:
    """Fit the ensemble-averaged spectrum at every impact rate in ``p_grid``.

    A row whose simulation or fit raises is kept with its error message;
    the sweep carries on.
    """
    grid = [float(p) for p in p_grid]
    if not grid:
        raise ValueError("p_grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("p_grid must be strictly ascending")
    if ensemble_size < 1:
        raise ValueError("ensemble_size must be >= 1")
    rows = []
    for p in grid:
        try:
            spectra = ensemble_spectrum(template, p, ensemble_size, quantity, threads)
            rows.append(_fit_row(p, spectra, fit_range, se_groups))
        except ValueError as exc:
            rows.append(SweepRow(p, None, None, None, False, ensemble_size, error=str(exc)))
    return SweepResult(
        rows=tuple(rows),
        model=_model_name(template),
        config=template.to_dict(),
        seed=template.seed,
        quantity=quantity,
        fit_range=tuple(fit_range),
    )


def detect_quench(result: SweepResult, threshold: float = QUENCH_THRESHOLD) -> float | None:
    """Impact rate at which the fitted peak frequency first falls below ``threshold``.

    The crossing must be confirmed by the next grid point.  The returned
    value interpolates linearly between the bracketing rows.
    """
    rows = [r for r in result.rows if r.ok]
    for j in range(len(rows) - 1):
        if rows[j].nu0 < threshold and rows[j + 1].nu0 < threshold:
            if j == 0:
                return rows[0].p
            a, b = rows[j - 1], rows[j]
            frac = (a.nu0 - threshold) / (a.nu0 - b.nu0)
            return a.p + frac * (b.p - a.p)
    return None


def broadening_slope(result: SweepResult, p_max_for_fit: float = 2.0) -> float:
    """Slope of ``b`` against ``p`` through the origin for ``0 < p <= p_max_for_fit``."""
    rows = [r for r in result.rows if r.ok and 0 < r.p <= p_max_for_fit + 1e-12]
    if len(rows) < 3:
        raise ValueError(f"need >= 3 rows with p <= {p_max_for_fit}, got {len(rows)}")
    p = np.array([r.p for r in rows])
    b = np.array([r.b for r in rows])
    return float(p @ b / (p @ p))


@dataclass(frozen=True)
class PressureScaling:
    """Impacts per cycle corresponding to one bar."""

    p_per_bar: float
    label: str = ""

    def __post_init__(self):
        if not self.p_per_bar > 0:
            raise ValueError("p_per_bar must be positive")

    def to_pressure(self, p):
        return np.asarray(p, dtype=float) / self.p_per_bar

    def to_rate(self, pressure_bar):
        return np.asarray(pressure_bar, dtype=float) * self.p_per_bar


SCALINGS = {
    name: PressureScaling(params["p_per_bar"], name) for name, params in qdyn.PRESETS.items()
}


def map_pressure(result: SweepResult, scaling: PressureScaling) -> SweepResult:
    """Attach ``pressure_bar = p / p_per_bar`` to every row; fits are untouched."""
    rows = tuple(replace(r, pressure_bar=r.p / scaling.p_per_bar) for r in result.rows)
    return replace(result, rows=rows)


@dataclass(frozen=True)
class ExperimentalDataset:
    """Pressure-dependent peak frequency and width, normalised to the zero-pressure line."""

    pressure_bar: np.ndarray
    nu0_norm: np.ndarray
    b_norm: np.ndarray
    source: str = ""

    def __post_init__(self):
        for name in ("pressure_bar", "nu0_norm", "b_norm"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.pressure_bar.size
        if self.nu0_norm.size != n or self.b_norm.size != n:
            raise ValueError("dataset columns differ in length")
        if np.any(self.pressure_bar < 0):
            raise ValueError("pressures must be non-negative")
        if np.any((self.nu0_norm < 0) | (self.nu0_norm > 1.1)):
            raise ValueError("normalised nu0 must lie in [0, 1.1]")

    def __len__(self) -> int:
        return self.pressure_bar.size

    @classmethod
    def from_csv(cls, path) -> "ExperimentalDataset":
        source = []
        body = []
        with open(path, newline="") as fh:
            for line in fh:
                if line.startswith("#"):
                    source.append(line[1:].strip())
                elif line.strip():
                    body.append(line)
        reader = csv.DictReader(body)
        need = {"pressure_bar", "nu0_norm", "b_norm"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValueError(f"{path}: dataset CSV needs columns {sorted(need)}")
        recs = list(reader)
        return cls(
            [float(r["pressure_bar"]) for r in recs],
            [float(r["nu0_norm"]) for r in recs],
            [float(r["b_norm"]) for r in recs],
            " ".join(source),
        )


@dataclass
class ComparisonReport:
    pressure_bar: list
    nu0_data: list
    nu0_model: list
    nu0_residual: list
    b_data: list
    b_model: list
    b_residual: list
    nu0_rms: float
    b_rms: float
    quench_pressure_model: float | None
    broadening_ratio: float | None
    b_trend_above_quench_data: float | None
    b_trend_above_quench_model: float | None
    p_per_bar: float
    source: str = ""
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _trend(x, y):
    if len(x) < 2:
        return None
    return float(np.polyfit(x, y, 1)[0])


def compare_experiment(
    result: SweepResult,
    data: ExperimentalDataset,
    scaling: PressureScaling,
    quench_pressure: float | None = None,
) -> ComparisonReport:
    """Residuals of the data against model curves interpolated at the data pressures.

    ``broadening_ratio`` is the least-squares factor ``k`` in
    ``b_data ~ k * b_model`` below the quench pressure.  The trends above the
    quench are straight-line slopes of ``b`` against pressure.  The quench
    pressure defaults to the model's own, from :func:`detect_quench`.
    """
    if len(data) == 0:
        raise ValueError("experimental dataset is empty")
    mapped = map_pressure(result, scaling)
    rows = [r for r in mapped.rows if r.ok]
    if len(rows) < 2:
        raise ValueError("model sweep has fewer than two usable rows")
    mp = np.array([r.pressure_bar for r in rows])
    inside = (data.pressure_bar >= mp.min()) & (data.pressure_bar <= mp.max())
    if not inside.any():
        raise ValueError(
            f"no overlap: model covers {mp.min():g}-{mp.max():g} bar, data "
            f"{data.pressure_bar.min():g}-{data.pressure_bar.max():g} bar"
        )
    P = data.pressure_bar[inside]
    nu_d, b_d = data.nu0_norm[inside], data.b_norm[inside]
    nu_m = np.interp(P, mp, [r.nu0 for r in rows])
    b_m = np.interp(P, mp, [r.b for r in rows])

    notes = []
    if quench_pressure is None:
        p_star = detect_quench(result)
        quench_pressure = None if p_star is None else p_star / scaling.p_per_bar
    below = P <= quench_pressure if quench_pressure is not None else np.ones_like(P, bool)
    if quench_pressure is None:
        notes.append("model shows no quench in range; ratio uses all overlapping points")
    ratio = None
    if below.any() and np.any(b_m[below] > 0):
        ratio = float(b_d[below] @ b_m[below] / (b_m[below] @ b_m[below]))
    trend_d = trend_m = None
    if quench_pressure is not None:
        above = P > quench_pressure
        trend_d = _trend(P[above], b_d[above])
        trend_m = _trend(P[above], b_m[above])
        if trend_d is None:
            notes.append("fewer than two data points above the quench pressure")
    return ComparisonReport(
        pressure_bar=P.tolist(),
        nu0_data=nu_d.tolist(),
        nu0_model=nu_m.tolist(),
        nu0_residual=(nu_d - nu_m).tolist(),
        b_data=b_d.tolist(),
        b_model=b_m.tolist(),
        b_residual=(b_d - b_m).tolist(),
        nu0_rms=float(np.sqrt(np.mean((nu_d - nu_m) ** 2))),
        b_rms=float(np.sqrt(np.mean((b_d - b_m) ** 2))),
        quench_pressure_model=quench_pressure,
        broadening_ratio=ratio,
        b_trend_above_quench_data=trend_d,
        b_trend_above_quench_model=trend_m,
        p_per_bar=scaling.p_per_bar,
        source=data.source,
        notes=notes,
    )


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (inclusive of stop) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3:
            raise ValueError(f"grid {text!r} must be start:stop:step")
        start, stop, step = parts
        if step <= 0 or stop < start:
            raise ValueError(f"bad grid {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(n)]
    return [float(x) for x in text.split(",") if x.strip()]
