"""Decay-rate verdicts on recorded norm series.

Upper bounds: ordinary least squares of log(norm) against log(1+t) over a
fit window, compared with the dispersive targets -(d + 2k)/4 for the k-th
derivative seminorms.  Lower bounds: the compensated ratio
r(t) = norm * (1+t)^{(d+2k)/4} must stay flat and bounded away from zero.
Exponential channels (the chemical concentration) are fitted in linear time.

The default fit window starts at t = 10 (past the transient) and ends at
min(t_final, (L/2pi)^2 / 2): beyond that time the heat kernel width reaches
the box scale and the discrete spectrum departs from whole-space decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import spectral_core as sc

SERIES_SCHEMA = "chemodecay-series-v1"
MASS_FLOOR = 1e-13
DEFAULT_SLOPE_TOL = 0.1
DEFAULT_DRIFT_TOL = 0.1
DEFAULT_RATIO_FLOOR = 0.5
MIN_FIT_SAMPLES = 10


def target_slope(dim: int, k: int) -> float:
    """Whole-space L2 decay exponent for the k-th derivative, in log(1+t)."""
    return -(dim + 2 * k) / 4.0


class NormSeries:
    """Time series of recorded norms plus the run metadata needed to judge it."""

    def __init__(self, columns: dict[str, np.ndarray], metadata: dict[str, str]):
        if "t" not in columns:
            raise ValueError("series lacks a time column")
        self.columns = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
        self.metadata = dict(metadata)
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) != 1:
            raise ValueError("series columns have unequal lengths")

    @classmethod
    def from_trajectory(cls, trajectory) -> "NormSeries":
        names = trajectory.column_names()
        columns = {name: trajectory.column(name) for name in names}
        return cls(columns, {k: str(v) for k, v in trajectory.metadata.items()})

    @classmethod
    def from_csv(cls, path) -> "NormSeries":
        with open(path, "r", encoding="ascii") as fh:
            lines = [line.rstrip("\n") for line in fh]
        if not lines or lines[0].strip() != f"# {SERIES_SCHEMA}":
            raise ValueError(f"bad series schema line in {path}")
        metadata: dict[str, str] = {}
        body_start = 1
        for i, line in enumerate(lines[1:], start=1):
            if line.startswith("#"):
                text = line[1:].strip()
                if "=" in text:
                    key, _, value = text.partition("=")
                    metadata[key.strip()] = value.strip()
            else:
                body_start = i
                break
        header = lines[body_start].split(",")
        data_rows = [line.split(",") for line in lines[body_start + 1:] if line]
        if not data_rows:
            raise ValueError(f"no data rows in {path}")
        values = np.empty((len(data_rows), len(header)))
        for r, row in enumerate(data_rows):
            if len(row) != len(header):
                raise ValueError(
                    f"malformed CSV {path}: row {r + 1} has {len(row)} cells, "
                    f"expected {len(header)}"
                )
            for c, cell in enumerate(row):
                try:
                    values[r, c] = float(cell)
                except ValueError:
                    raise ValueError(
                        f"malformed CSV {path}: row {r + 1}, "
                        f"column {header[c]!r}: bad value {cell!r}"
                    ) from None
        columns = {name: values[:, i] for i, name in enumerate(header)}
        return cls(columns, metadata)

    @property
    def times(self) -> np.ndarray:
        return self.columns["t"]

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise KeyError(f"series has no column {name!r}")
        return self.columns[name]

    @property
    def dim(self) -> int:
        return int(self.metadata["dim"])

    @property
    def box_length(self) -> float:
        return float(self.metadata["box_length"])

    @property
    def epsilon(self) -> float:
        return float(self.metadata["epsilon"])

    @property
    def u_bar(self) -> float:
        return float(self.metadata["u_bar"])

    @property
    def n_max(self) -> int:
        return int(self.metadata["n_max"])

    @property
    def t_final(self) -> float:
        return float(self.metadata["t_final"])

    def initial_masses(self) -> tuple[float, list[float]]:
        m_n = float(self.metadata["initial_mass_n"])
        m_v = []
        ax = 0
        while f"initial_mass_v{ax}" in self.metadata:
            m_v.append(float(self.metadata[f"initial_mass_v{ax}"]))
            ax += 1
        return m_n, m_v


def default_window(series: NormSeries) -> tuple[float, float]:
    """Fit window [10, min(t_final, box horizon)], see module docstring."""
    horizon = 0.5 * (series.box_length / (2.0 * math.pi)) ** 2
    return 10.0, min(series.t_final, horizon)


def _window_mask(times: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    lo, hi = window
    if not hi > lo:
        raise ValueError(f"insufficient window: [{lo:g}, {hi:g}] is empty")
    return (times >= lo - 1e-12) & (times <= hi + 1e-12)


def _windowed(series: NormSeries, name: str, window):
    window = default_window(series) if window is None else tuple(window)
    mask = _window_mask(series.times, window)
    t = series.times[mask]
    y = series.column(name)[mask]
    if t.size < MIN_FIT_SAMPLES:
        raise ValueError(
            f"insufficient window: {t.size} samples of {name!r} in "
            f"[{window[0]:g}, {window[1]:g}], need {MIN_FIT_SAMPLES}"
        )
    return t, y, window


@dataclass(frozen=True)
class DecayFit:
    quantity: str
    k: int
    slope: float
    intercept: float
    target: float
    tolerance: float
    window: tuple[float, float]
    n_samples: int
    passed: bool

    @property
    def margin(self) -> float:
        return abs(self.slope - self.target)


def fit_decay(series: NormSeries, quantity: str = "n", k: int = 0,
              window: tuple[float, float] | None = None,
              tolerance: float = DEFAULT_SLOPE_TOL,
              target: float | None = None) -> DecayFit:
    """OLS slope of log(seminorm) vs log(1+t), judged against the target rate."""
    if quantity not in ("n", "v"):
        raise ValueError(f"quantity must be 'n' or 'v', got {quantity!r}")
    t, y, window = _windowed(series, f"{quantity}_k{k}", window)
    if np.any(y <= 0):
        raise ValueError(f"nonpositive {quantity}_k{k} values in fit window")
    slope, intercept = np.polyfit(np.log1p(t), np.log(y), 1)
    if target is None:
        target = target_slope(series.dim, k)
    passed = abs(slope - target) <= tolerance
    return DecayFit(quantity, k, float(slope), float(intercept), float(target),
                    tolerance, window, t.size, passed)


@dataclass(frozen=True)
class LowerBoundResult:
    quantity: str
    k: int
    ratio_min: float
    ratio_median: float
    drift_slope: float
    drift_tolerance: float
    ratio_floor: float
    window: tuple[float, float]
    n_samples: int
    passed: bool


def lower_bound_ratio(series: NormSeries, quantity: str = "n", k: int = 0,
                      window: tuple[float, float] | None = None,
                      drift_tolerance: float = DEFAULT_DRIFT_TOL,
                      ratio_floor: float = DEFAULT_RATIO_FLOOR) -> LowerBoundResult:
    """Compensated-ratio lower bound check for a mass-carrying channel.

    r(t) = norm * (1+t)^{(d+2k)/4} must satisfy min r >= ratio_floor * median r
    and the OLS drift of log r against log(1+t) must sit within the drift
    tolerance.  The floor is fed by the conserved box integrals, so the check
    only applies when some component carries nonzero initial mass; with all
    masses zero the solution genuinely decays faster and no floor exists.
    """
    if quantity not in ("n", "v"):
        raise ValueError(f"quantity must be 'n' or 'v', got {quantity!r}")
    m_n, m_v = series.initial_masses()
    mass_scale = max(abs(m_n), max((abs(m) for m in m_v), default=0.0))
    if mass_scale <= MASS_FLOOR:
        raise ValueError(
            "lower bound not applicable: all initial masses vanish "
            f"(|M| <= {MASS_FLOOR:g})"
        )
    t, y, window = _windowed(series, f"{quantity}_k{k}", window)
    if np.any(y <= 0):
        raise ValueError(f"nonpositive {quantity}_k{k} values in fit window")
    rate = -target_slope(series.dim, k)
    ratio = y * (1.0 + t) ** rate
    drift_slope = float(np.polyfit(np.log1p(t), np.log(ratio), 1)[0])
    ratio_min = float(np.min(ratio))
    ratio_median = float(np.median(ratio))
    passed = (ratio_min >= ratio_floor * ratio_median
              and abs(drift_slope) <= drift_tolerance)
    return LowerBoundResult(quantity, k, ratio_min, ratio_median, drift_slope,
                            drift_tolerance, ratio_floor, window, t.size, passed)


@dataclass(frozen=True)
class EnergyAudit:
    violations: dict[str, int]
    total_violations: int
    worst_relative_rise: float
    rel_tolerance: float

    @property
    def passed(self) -> bool:
        return self.total_violations == 0


def energy_audit(series: NormSeries, rel_tolerance: float = 1e-10) -> EnergyAudit:
    """Count upward steps of each recorded energy E_k beyond rel_tolerance."""
    violations: dict[str, int] = {}
    worst = -math.inf
    for k in range(series.n_max):
        name = f"E_{k}"
        e = series.column(name)
        prev, nxt = e[:-1], e[1:]
        scale = np.maximum(prev, 1e-300)
        rises = (nxt - prev) / scale
        worst = max(worst, float(np.max(rises, initial=-math.inf)))
        violations[name] = int(np.sum(nxt > prev * (1.0 + rel_tolerance)))
    return EnergyAudit(violations, sum(violations.values()), worst, rel_tolerance)


def fourier_split_arrays(grid: sc.Grid, hats, split_radius: float,
                         t: float) -> tuple[float, float]:
    """Exact low/high partition of the joint L2 energy at |xi|^2 <= R/(1+t)."""
    table = sc.wavenumbers(grid)
    mask = table.xi2 <= split_radius / (1.0 + t)
    inv_vol = 1.0 / grid.box_length**grid.dim
    low = 0.0
    high = 0.0
    for h in hats:
        energy = h.real**2 + h.imag**2
        low += float(np.sum(energy[mask]))
        high += float(np.sum(energy[~mask]))
    return inv_vol * low, inv_vol * high


@dataclass(frozen=True)
class SplitAudit:
    worst_defect: float
    rel_tolerance: float
    passed: bool


def split_audit(series: NormSeries, rel_tolerance: float = 1e-12) -> SplitAudit:
    """Check E_low + E_high recombines to the recorded L2 energy per row."""
    total = series.column("n_k0") ** 2 + series.column("v_k0") ** 2
    recombined = series.column("E_low") + series.column("E_high")
    defect = np.abs(recombined - total) / np.maximum(total, 1e-300)
    worst = float(np.max(defect, initial=0.0))
    return SplitAudit(worst, rel_tolerance, worst <= rel_tolerance)


@dataclass(frozen=True)
class MassDrift:
    drifts: dict[str, float]
    max_drift: float

    def passed(self, rel_tolerance: float = 1e-10) -> bool:
        return self.max_drift <= rel_tolerance


def mass_drift(series: NormSeries) -> MassDrift:
    """Largest relative excursion of each conserved box integral."""
    drifts: dict[str, float] = {}
    names = ["M_n"] + [f"M_v{ax}" for ax in range(series.dim)]
    for name in names:
        col = series.column(name)
        denom = max(abs(col[0]), 1e-30)
        drifts[name] = float(np.max(np.abs(col - col[0])) / denom)
    return MassDrift(drifts, max(drifts.values()))


@dataclass(frozen=True)
class CDecayResult:
    slope: float
    target: float
    rel_tolerance: float
    slope_ok: bool
    max_log_excess: float
    bound_slack: float
    bounded: bool
    window: tuple[float, float]
    n_samples: int

    @property
    def passed(self) -> bool:
        return self.slope_ok and self.bounded


def c_decay_check(series: NormSeries, window: tuple[float, float] | None = None,
                  rel_tolerance: float = 0.1,
                  bound_slack: float = 1.0) -> CDecayResult:
    """Exponential decay of sup c at rate u_bar: fit log(c_inf) against t.

    Also audits boundedness of exp(u_bar t) * c_inf over the whole run, not
    just the window: its log may not exceed the initial value by bound_slack.
    """
    c_all = series.column("c_inf")
    if not np.any(np.isfinite(c_all)):
        raise ValueError("concentration was not recorded on this run")
    if np.any(c_all <= 0):
        raise ValueError("nonpositive c_inf values recorded")
    t, c, window = _windowed(series, "c_inf", window)
    slope = float(np.polyfit(t, np.log(c), 1)[0])
    target = -series.u_bar
    slope_ok = abs(slope - target) <= rel_tolerance * abs(target)
    compensated = np.log(c_all) + series.u_bar * series.times
    max_log_excess = float(np.max(compensated - compensated[0]))
    bounded = max_log_excess <= bound_slack
    return CDecayResult(slope, target, rel_tolerance, slope_ok, max_log_excess,
                        bound_slack, bounded, window, t.size)


def linfty_decay_check(series: NormSeries,
                       window: tuple[float, float] | None = None,
                       tolerance: float = 0.15) -> DecayFit:
    """Sup-norm decay of the cell density perturbation, target -(d+2)/4."""
    t, y, window = _windowed(series, "n_inf", window)
    if np.any(y <= 0):
        raise ValueError("nonpositive n_inf values in fit window")
    slope, intercept = np.polyfit(np.log1p(t), np.log(y), 1)
    target = target_slope(series.dim, 1)
    passed = abs(slope - target) <= tolerance
    return DecayFit("n_inf", 1, float(slope), float(intercept), float(target),
                    tolerance, window, t.size, passed)


@dataclass(frozen=True)
class InterpolationAudit:
    violations: int
    worst_excess: float
    abs_tolerance: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def interpolation_audit(series: NormSeries,
                        abs_tolerance: float = 1e-12) -> InterpolationAudit:
    """Audit |grad n|^2 <= |n| |grad^2 n| + tol at every recorded time."""
    n0 = series.column("n_k0")
    n1 = series.column("n_k1")
    n2 = series.column("n_k2")
    excess = n1**2 - n0 * n2
    violations = int(np.sum(excess > abs_tolerance))
    worst = float(np.max(excess, initial=-math.inf))
    return InterpolationAudit(violations, worst, abs_tolerance)
