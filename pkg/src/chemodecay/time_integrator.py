"""Exponential time stepping driven by the exact per-mode propagator.

The variation-of-constants form U(t+dt) = G(dt)U(t) + int_0^dt G(dt-s) S(U) ds
is discretized with the linear part applied exactly per Fourier mode:

    etd1:      U+ = G(dt) (U + dt S(U))
    etd_trap:  U* = G(dt) (U + dt S(U))          (predictor)
               U+ = G(dt) U + dt/2 (G(dt) S(U) + S(U*))

The zero mode is exactly invariant in both schemes (the propagator is the
identity there and the fluxes are divergences, so their zero mode vanishes),
which conserves the box integrals of n and v to the bit.

Recorded trajectories carry, per output time: Sobolev seminorms of n and v
for k = 0..n_max, sup norms of n and of the reconstructed concentration,
the box integrals, the energies E_k = |grad^k n|^2 + |grad^{k+1} n|^2 +
|grad^k v|^2 + |grad^{k+1} v|^2, and the low/high spectral energy split at
the shrinking radius |xi|^2 <= split_radius/(1+t).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import chemotaxis_model as cm
from . import spectral_core as sc
from .decay_analysis import fourier_split_arrays
from .linear_semigroup import PropagatorTable, _apply_arrays, build_propagator

SCHEMES = ("etd1", "etd_trap")
SERIES_SCHEMA = "chemodecay-series-v1"
OUTPUTS_PER_DECADE = 40


def default_output_times(t_final: float, per_decade: int = OUTPUTS_PER_DECADE) -> np.ndarray:
    """Log-spaced output times: uniform in log10(1+t), endpoints included."""
    if t_final < 0:
        raise ValueError(f"t_final must be nonnegative, got {t_final}")
    decades = np.log10(1.0 + t_final)
    count = max(1, int(np.ceil(decades * per_decade)))
    times = 10 ** np.linspace(0.0, decades, count + 1) - 1.0
    times[0], times[-1] = 0.0, t_final
    return np.unique(times)


def default_dt(initial: cm.State) -> float:
    """Advective step heuristic: min(0.1, 0.25 dx / max(1, sup|v0| + sup|n0|)).

    The linear part is exact per mode, so no diffusive restriction applies.
    """
    speed = np.sqrt(sum(a**2 for a in initial.v.arrays))
    amplitude = float(np.max(speed)) + float(np.max(np.abs(initial.n.values)))
    return min(0.1, 0.25 * initial.grid.dx / max(1.0, amplitude))


@dataclass(frozen=True)
class IntegratorConfig:
    t_final: float
    dt: float | None = None
    scheme: str = "etd_trap"
    output_times: tuple[float, ...] | None = None
    n_max: int = 3
    split_radius: float = 8.0
    track_c: bool = True

    def __post_init__(self) -> None:
        if self.t_final < 0:
            raise ValueError(f"t_final must be nonnegative, got {self.t_final}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if self.split_radius <= 0:
            raise ValueError("split_radius must be positive")
        if self.output_times is not None:
            ts = np.asarray(self.output_times, dtype=float)
            if np.any(ts < 0) or np.any(ts > self.t_final) or np.any(np.diff(ts) <= 0):
                raise ValueError(
                    "output_times must be strictly increasing within [0, t_final]"
                )


@dataclass
class Trajectory:
    """Recorded run: one row of norms per output time, plus run metadata."""

    grid: sc.Grid
    params: cm.ModelParams
    config: IntegratorConfig
    rows: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    failed: bool = False
    failure_reason: str = ""
    final_state: cm.State | None = None

    def times(self) -> np.ndarray:
        return np.array([row["t"] for row in self.rows])

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])

    def column_names(self) -> list[str]:
        return _column_names(self.grid.dim, self.config.n_max)

    def write_csv(self, path) -> None:
        """Series CSV: '#'-prefixed metadata lines, header row, repr-format floats.

        Every value needed to re-run the analysis rides in the metadata lines,
        so verdicts are reproducible from the CSV alone.
        """
        names = self.column_names()
        lines = [f"# {SERIES_SCHEMA}"]
        for key in sorted(self.metadata):
            lines.append(f"# {key} = {self.metadata[key]}")
        lines.append(",".join(names))
        for row in self.rows:
            lines.append(",".join(repr(float(row[name])) for name in names))
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def _column_names(dim: int, n_max: int) -> list[str]:
    names = ["t"]
    for k in range(n_max + 1):
        names += [f"n_k{k}", f"v_k{k}"]
    names += ["n_inf", "c_inf"]
    names += ["M_n"] + [f"M_v{ax}" for ax in range(dim)]
    names += [f"E_{k}" for k in range(n_max)]
    names += ["E_low", "E_high"]
    return names


def _series_row(grid, table_xi2, n_hat, v_hats, n_inf, c_inf, t, n_max, split_radius):
    inv_vol = 1.0 / grid.box_length**grid.dim
    n_energy = n_hat.real**2 + n_hat.imag**2
    v_energy = np.zeros(grid.shape)
    for vh in v_hats:
        v_energy += vh.real**2 + vh.imag**2
    row = {"t": float(t)}
    n_norms, v_norms = [], []
    weight = np.ones(grid.shape)
    for k in range(n_max + 2):
        if k <= n_max:
            row[f"n_k{k}"] = float(np.sqrt(inv_vol * np.sum(weight * n_energy)))
            row[f"v_k{k}"] = float(np.sqrt(inv_vol * np.sum(weight * v_energy)))
        n_norms.append(float(np.sqrt(inv_vol * np.sum(weight * n_energy))))
        v_norms.append(float(np.sqrt(inv_vol * np.sum(weight * v_energy))))
        weight = weight * table_xi2
    row["n_inf"] = float(n_inf)
    row["c_inf"] = float(c_inf)
    row["M_n"] = float(n_hat.flat[0].real)
    for ax, vh in enumerate(v_hats):
        row[f"M_v{ax}"] = float(vh.flat[0].real)
    for k in range(n_max):
        row[f"E_{k}"] = (
            n_norms[k] ** 2 + n_norms[k + 1] ** 2 + v_norms[k] ** 2 + v_norms[k + 1] ** 2
        )
    low, high = fourier_split_arrays(grid, [n_hat, *v_hats], split_radius, t)
    row["E_low"], row["E_high"] = low, high
    return row


class _Stepper:
    """One ETD step on raw spectral arrays; owns scratch real-space fields."""

    def __init__(self, grid: sc.Grid, params: cm.ModelParams, table: PropagatorTable,
                 scheme: str, linear_only: bool):
        self.grid = grid
        self.params = params
        self.table = table
        self.scheme = scheme
        self.linear_only = linear_only
        self.inv_vol = 1.0 / grid.cell_volume

    def real_fields(self, n_hat, v_hats):
        n_vals = np.fft.ifftn(n_hat).real * self.inv_vol
        v_vals = [np.fft.ifftn(vh).real * self.inv_vol for vh in v_hats]
        return n_vals, v_vals

    def sources(self, n_vals, v_vals):
        return cm._nonlinear_hats(self.grid, n_vals, v_vals, self.params.epsilon)

    def step(self, n_hat, v_hats, n_vals, v_vals):
        """Advance one dt; returns (n_hat, v_hats, n_vals, v_vals) at t + dt."""
        table = self.table
        dt = table.dt
        if self.linear_only:
            n_new, v_new = _apply_arrays(table, n_hat, v_hats)
            n_vals_new, v_vals_new = self.real_fields(n_new, v_new)
            return n_new, v_new, n_vals_new, v_vals_new

        s1, s2 = self.sources(n_vals, v_vals)
        if self.scheme == "etd1":
            n_new, v_new = _apply_arrays(
                table, n_hat + dt * s1, [vh + dt * s for vh, s in zip(v_hats, s2)]
            )
        else:
            gn, gv = _apply_arrays(table, n_hat, v_hats)
            gs1, gs2 = _apply_arrays(table, s1, s2)
            pred_n = gn + dt * gs1
            pred_v = [a + dt * b for a, b in zip(gv, gs2)]
            pn_vals, pv_vals = self.real_fields(pred_n, pred_v)
            s1_star, s2_star = self.sources(pn_vals, pv_vals)
            n_new = gn + 0.5 * dt * (gs1 + s1_star)
            v_new = [a + 0.5 * dt * (b + c) for a, b, c in zip(gv, gs2, s2_star)]
        n_vals_new, v_vals_new = self.real_fields(n_new, v_new)
        return n_new, v_new, n_vals_new, v_vals_new


def step(state: cm.State, params: cm.ModelParams, table: PropagatorTable,
         scheme: str = "etd_trap") -> cm.State:
    """Advance a State by one step of the table's dt (convenience wrapper)."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if state.grid != table.grid:
        raise ValueError("state and table grids differ")
    state.check_finite()
    n_hat = sc.forward_dft(state.n).coeffs
    v_hats = [sc.forward_dft(c).coeffs for c in state.v.components]
    stepper = _Stepper(state.grid, params, table, scheme, linear_only=False)
    n_hat, v_hats, n_vals, v_vals = stepper.step(n_hat, v_hats, state.n.values,
                                                 state.v.arrays)
    if not np.isfinite(n_vals).all():
        raise FloatingPointError(
            f"non-finite state after step to t = {state.time + table.dt:.6g}"
        )
    return cm.State(
        sc.ScalarField(state.grid, n_vals),
        sc.vector_field(state.grid, v_vals),
        state.time + table.dt,
    )


def run(initial: cm.State, params: cm.ModelParams, config: IntegratorConfig,
        linear_only: bool = False, extra_metadata: dict | None = None) -> Trajectory:
    """Advance to t_final, recording norm rows at (snapped) output times.

    Output times are snapped up to the step grid t0 + j*dt.  On mid-run
    blowup the trajectory is returned truncated with ``failed`` set, so
    amplitude thresholds can be explored without losing the partial series.
    """
    initial.check_finite()
    grid = initial.grid
    norm_xi2 = sc.wavenumbers(grid).xi2
    dt = config.dt if config.dt is not None else default_dt(initial)
    t0 = initial.time
    span = config.t_final - t0
    if span < 0:
        raise ValueError(f"t_final = {config.t_final} precedes initial time {t0}")
    n_steps = int(np.ceil(span / dt - 1e-9)) if span > 0 else 0

    table = build_propagator(grid, params.epsilon, dt)
    stepper = _Stepper(grid, params, table, config.scheme, linear_only)

    requested = (np.asarray(config.output_times, dtype=float)
                 if config.output_times is not None
                 else default_output_times(span) + t0)
    out_steps = np.unique(np.clip(np.ceil((requested - t0) / dt - 1e-9), 0, n_steps)
                          .astype(int)) if n_steps > 0 else np.array([0])
    out_steps = np.union1d(out_steps, [0, n_steps])
    out_set = set(int(j) for j in out_steps)

    n_hat = sc.forward_dft(initial.n).coeffs
    v_hats = [sc.forward_dft(c).coeffs for c in initial.v.components]
    n_vals, v_vals = initial.n.values, initial.v.arrays

    c0 = None
    accumulator = None
    if config.track_c:
        ln_c0 = cm.reconstruct_ln_c(initial.v)
        c0 = sc.ScalarField(grid, np.exp(ln_c0.values))
        accumulator = cm.CIntegralAccumulator(grid, params)
        accumulator.start(t0, cm.log_c_integrand(initial, params))

    m_n0, m_v0 = cm.masses(initial)
    metadata = {
        "dim": grid.dim, "n": grid.n, "box_length": repr(grid.box_length),
        "epsilon": repr(params.epsilon), "u_bar": repr(params.u_bar),
        "scheme": config.scheme, "dt": repr(dt), "t_final": repr(config.t_final),
        "n_max": config.n_max, "split_radius": repr(config.split_radius),
        "linear_only": linear_only, "track_c": config.track_c,
        "initial_mass_n": repr(m_n0),
    }
    for ax in range(grid.dim):
        metadata[f"initial_mass_v{ax}"] = repr(float(m_v0[ax]))
    if extra_metadata:
        metadata.update(extra_metadata)

    trajectory = Trajectory(grid, params, config, metadata=metadata)

    def record(step_index: int) -> None:
        t = t0 + step_index * dt
        if config.track_c:
            c_field = cm.reconstruct_c(c0, accumulator, t)
            c_inf = float(np.max(c_field.values))
        else:
            c_inf = np.nan
        n_inf = float(np.max(np.abs(n_vals)))
        trajectory.rows.append(
            _series_row(grid, norm_xi2, n_hat, v_hats, n_inf, c_inf, t,
                        config.n_max, config.split_radius)
        )

    record(0)
    j_done = 0
    for j in range(1, n_steps + 1):
        n_hat, v_hats, n_vals, v_vals = stepper.step(n_hat, v_hats, n_vals, v_vals)
        if not np.all(np.isfinite(n_vals)):
            trajectory.failed = True
            trajectory.failure_reason = (
                f"non-finite solution at t = {t0 + j * dt:.6g} (step {j})"
            )
            break
        j_done = j
        if config.track_c:
            state_j = cm.State(
                sc.ScalarField(grid, n_vals), sc.vector_field(grid, v_vals), t0 + j * dt
            )
            accumulator.advance(t0 + j * dt, cm.log_c_integrand(state_j, params))
        if j in out_set:
            record(j)
    if not trajectory.failed:
        trajectory.final_state = cm.State(
            sc.ScalarField(grid, n_vals.copy()),
            sc.vector_field(grid, [a.copy() for a in v_vals]),
            t0 + j_done * dt,
        )
    return trajectory


def linear_evolve(initial: cm.State, params: cm.ModelParams, times,
                  n_max: int = 3, split_radius: float = 8.0,
                  extra_metadata: dict | None = None) -> Trajectory:
    """Evolve by direct per-mode propagator evaluation at each requested time.

    No time stepping: each row applies G(t - t0) to the initial spectrum, so
    the linear dynamics is exact to rounding.  Concentration tracking needs a
    path integral and is not available on this route (c_inf is NaN).
    """
    initial.check_finite()
    grid = initial.grid
    times = np.asarray(times, dtype=float)
    if times.size == 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be nonempty and strictly increasing")
    t0 = initial.time
    if times[0] < t0:
        raise ValueError("first output time precedes the initial time")

    n_hat0 = sc.forward_dft(initial.n).coeffs
    v_hats0 = [sc.forward_dft(c).coeffs for c in initial.v.components]
    inv_vol = 1.0 / grid.cell_volume

    m_n0, m_v0 = cm.masses(initial)
    metadata = {
        "dim": grid.dim, "n": grid.n, "box_length": repr(grid.box_length),
        "epsilon": repr(params.epsilon), "u_bar": repr(params.u_bar),
        "scheme": "exact_linear", "dt": repr(0.0), "t_final": repr(float(times[-1])),
        "n_max": n_max, "split_radius": repr(split_radius),
        "linear_only": True, "track_c": False,
        "initial_mass_n": repr(m_n0),
    }
    for ax in range(grid.dim):
        metadata[f"initial_mass_v{ax}"] = repr(float(m_v0[ax]))
    if extra_metadata:
        metadata.update(extra_metadata)

    config = IntegratorConfig(
        t_final=float(times[-1]), dt=None, scheme="etd_trap",
        output_times=None, n_max=n_max, split_radius=split_radius, track_c=False,
    )
    trajectory = Trajectory(grid, params, config, metadata=metadata)
    norm_xi2 = sc.wavenumbers(grid).xi2
    n_hat, v_hats = n_hat0, v_hats0
    for t in times:
        table = build_propagator(grid, params.epsilon, float(t - t0))
        n_hat, v_hats = _apply_arrays(table, n_hat0, v_hats0)
        n_inf = float(np.max(np.abs(np.fft.ifftn(n_hat).real))) * inv_vol
        trajectory.rows.append(
            _series_row(grid, norm_xi2, n_hat, v_hats, n_inf, np.nan, float(t),
                        n_max, split_radius)
        )
    trajectory.final_state = cm.State(
        sc.ScalarField(grid, np.fft.ifftn(n_hat).real * inv_vol),
        sc.vector_field(grid, [np.fft.ifftn(vh).real * inv_vol for vh in v_hats]),
        float(times[-1]),
    )
    return trajectory
