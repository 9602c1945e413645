"""Model layer: perturbation state, quadratic fluxes, Cole-Hopf maps,
concentration reconstruction, and initial-data generators.

The simulated unknowns are the cell-density perturbation n = u - u_bar and
the negative log-concentration gradient v = -grad(ln c).  In these variables
the evolution is

    n_t - lap(n) - div(v) = S1,     S1 = div(n v),
    v_t - eps lap(v) - grad(n) = S2, S2 = -eps grad(|v|^2),

and the concentration itself satisfies (ln c)_t = -u + eps(|v|^2 - div v),
which integrates to c(x, t) = c0(x) exp(-u_bar t + int_0^t g dtau) with the
mean-free integrand g = -n + eps(|v|^2 - div v).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import spectral_core as sc

INITIAL_KINDS = ("gaussian_bump", "mean_zero_dipole", "from_file")

# Relative curl tolerance below which a vector field counts as a gradient.
CURL_TOL = 1e-6


@dataclass(frozen=True)
class ModelParams:
    """Chemical diffusivity and background cell density."""

    epsilon: float
    u_bar: float = 1.0

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not (self.u_bar > 0):
            raise ValueError(f"u_bar must be positive, got {self.u_bar}")


@dataclass
class State:
    """Perturbation unknowns (n, v) at one time."""

    n: sc.ScalarField
    v: sc.VectorField
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.n.grid != self.v.grid:
            raise ValueError("n and v must share one grid")

    @property
    def grid(self) -> sc.Grid:
        return self.n.grid

    def check_finite(self) -> None:
        self.n.check_finite()
        self.v.check_finite()

    def curl_defect(self) -> float:
        return curl_defect(self.v)


@dataclass
class ChemState:
    """Physical unknowns (u, c) of the untransformed system."""

    u: sc.ScalarField
    c: sc.ScalarField
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.u.grid != self.c.grid:
            raise ValueError("u and c must share one grid")


@dataclass
class SourcePair:
    """Quadratic fluxes (S1, S2); both are exact divergences, hence mean-zero."""

    S1: sc.ScalarField
    S2: sc.VectorField


@dataclass(frozen=True)
class InitialDataSpec:
    """Recipe for initial data.

    amplitude and sigma default to the small-data regime (A = 0.01,
    sigma = L/40); center defaults to the box center.  ``path`` names a
    directory of snapshot files (n.snap, v0.snap, ...) for kind "from_file".
    ``seed`` is echoed into run metadata for reproducibility bookkeeping.
    """

    kind: str = "gaussian_bump"
    amplitude: float = 0.01
    sigma: float | None = None
    center: tuple[float, ...] | None = None
    seed: int = 0
    path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"unknown initial-data kind {self.kind!r}; "
                             f"expected one of {INITIAL_KINDS}")


def curl(v: sc.VectorField) -> list[sc.ScalarField]:
    """Spectral curl: one scalar in 2-d, three components in 3-d."""
    hats = [sc.forward_dft(c) for c in v.components]

    def d(i, j):  # partial_i of component j
        return sc.spectral_derivative(hats[j], i).coeffs

    grid = v.grid
    if grid.dim == 2:
        return [sc.inverse_dft(sc.SpectralScalar(grid, d(0, 1) - d(1, 0)), check_symmetry=False)]
    return [
        sc.inverse_dft(sc.SpectralScalar(grid, d(1, 2) - d(2, 1)), check_symmetry=False),
        sc.inverse_dft(sc.SpectralScalar(grid, d(2, 0) - d(0, 2)), check_symmetry=False),
        sc.inverse_dft(sc.SpectralScalar(grid, d(0, 1) - d(1, 0)), check_symmetry=False),
    ]


def curl_defect(v: sc.VectorField) -> float:
    """||curl v|| / ||grad v||; zero for gradient fields and for v = 0."""
    grad_norm = sc.sobolev_seminorm(v, 1)
    if grad_norm == 0.0:
        return 0.0
    curl_energy = sum(sc.sobolev_seminorm(w, 0) ** 2 for w in curl(v))
    return float(np.sqrt(curl_energy)) / grad_norm


def _nonlinear_hats(grid: sc.Grid, n_vals: np.ndarray, v_vals: list[np.ndarray],
                    epsilon: float):
    """Spectral (S1_hat, [S2_hat...]): products in real space, then dealiased."""
    table = sc.wavenumbers(grid)
    scale = grid.cell_volume
    s1_hat = np.zeros(grid.shape, dtype=np.complex128)
    for ax in range(grid.dim):
        w_hat = sc.dealias_array(grid, np.fft.fftn(n_vals * v_vals[ax]) * scale)
        s1_hat += (1j * table.xi_deriv_axes[ax]) * w_hat
    speed2 = np.zeros(grid.shape)
    for ax in range(grid.dim):
        speed2 += v_vals[ax] ** 2
    q_hat = sc.dealias_array(grid, np.fft.fftn(speed2) * scale)
    s2_hats = [
        -epsilon * (1j * table.xi_deriv_axes[ax]) * q_hat for ax in range(grid.dim)
    ]
    return s1_hat, s2_hats


def nonlinear_terms(state: State, params: ModelParams) -> SourcePair:
    """Quadratic fluxes S1 = div(n v), S2 = -eps grad(|v|^2), dealiased."""
    state.check_finite()
    grid = state.grid
    s1_hat, s2_hats = _nonlinear_hats(grid, state.n.values, state.v.arrays, params.epsilon)
    s1 = sc.inverse_dft(sc.SpectralScalar(grid, s1_hat), check_symmetry=False)
    s2 = sc.vector_field(
        grid,
        [sc.inverse_dft(sc.SpectralScalar(grid, h), check_symmetry=False).values
         for h in s2_hats],
    )
    return SourcePair(s1, s2)


def periodized_gaussian(grid: sc.Grid, center, sigma: float,
                        amplitude: float = 1.0) -> np.ndarray:
    """Gaussian bump with minimum-image distances.

    For sigma <= L/8 the wrap seam sits >= 4 sigma out, so the periodization
    error is below double precision and no image sum is needed.
    """
    L = grid.box_length
    r2 = np.zeros(grid.shape)
    for ax, x in enumerate(grid.coordinates()):
        delta = (x - center[ax] + L / 2.0) % L - L / 2.0
        r2 = r2 + delta**2
    return amplitude * np.exp(-r2 / (2.0 * sigma**2))


def make_initial(spec: InitialDataSpec, grid: sc.Grid, params: ModelParams) -> State:
    """Build compatible initial data (v0 an exact gradient) at t = 0.

    gaussian_bump: n0 is a single Gaussian (nonzero mass); mean_zero_dipole:
    n0 is a difference of two grid-aligned shifted Gaussians (zero mass to
    rounding).  Both kinds take v0 = -grad(g0) with g0 an independent Gaussian
    profile of width 1.5 sigma, so ln c0 = g0 exists by construction.
    """
    L = grid.box_length
    sigma = spec.sigma if spec.sigma is not None else L / 40.0
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    center = spec.center if spec.center is not None else (L / 2.0,) * grid.dim
    if len(center) != grid.dim:
        raise ValueError(f"center has {len(center)} components for dim {grid.dim}")
    A = spec.amplitude

    if spec.kind == "from_file":
        return _initial_from_files(spec, grid, params)
    if spec.kind == "gaussian_bump":
        n_vals = periodized_gaussian(grid, center, sigma, A)
    else:  # mean_zero_dipole
        offset = max(grid.dx, round(2.0 * sigma / grid.dx) * grid.dx)
        left = list(center)
        right = list(center)
        left[0] -= offset
        right[0] += offset
        n_vals = periodized_gaussian(grid, right, sigma, A) - periodized_gaussian(
            grid, left, sigma, A
        )

    g0 = periodized_gaussian(grid, center, 1.5 * sigma, A)
    g0_hat = sc.forward_dft(sc.ScalarField(grid, g0))
    v_vals = [
        -sc.inverse_dft(sc.spectral_derivative(g0_hat, ax), check_symmetry=False).values
        for ax in range(grid.dim)
    ]

    state = State(sc.ScalarField(grid, n_vals), sc.vector_field(grid, v_vals), 0.0)
    _check_positivity(state, params)
    return state


def _initial_from_files(spec: InitialDataSpec, grid: sc.Grid, params: ModelParams) -> State:
    if spec.path is None:
        raise ValueError("kind 'from_file' requires a path to a snapshot directory")
    base = Path(spec.path)
    n_field, _, t0 = sc.load_snapshot(base / "n.snap")
    if n_field.grid != grid:
        raise ValueError(
            f"snapshot grid {n_field.grid} does not match configured grid {grid}"
        )
    v_arrays = []
    for ax in range(grid.dim):
        comp, _, _ = sc.load_snapshot(base / f"v{ax}.snap")
        if comp.grid != grid:
            raise ValueError(f"snapshot v{ax} grid mismatch")
        v_arrays.append(comp.values)
    state = State(n_field, sc.vector_field(grid, v_arrays), t0)
    _check_positivity(state, params)
    defect = state.curl_defect()
    if defect > CURL_TOL:
        raise ValueError(
            f"loaded v0 is not a gradient field (relative curl {defect:.3e} "
            f"> {CURL_TOL:g}); ln c is not well-defined"
        )
    return state


def _check_positivity(state: State, params: ModelParams) -> None:
    u_min = params.u_bar + float(np.min(state.n.values))
    if not u_min > 0:
        raise ValueError(
            f"initial amplitude too large: min(u0) = {u_min:.6g} <= 0, the "
            "log-concentration change of variables needs u > 0"
        )


def cole_hopf_forward(chem: ChemState, params: ModelParams) -> State:
    """Map (u, c) to perturbation variables (n, v) = (u - u_bar, -grad ln c)."""
    c_min = float(np.min(chem.c.values))
    if not c_min > 0:
        raise ValueError(f"concentration must be positive pointwise; min = {c_min:.6g}")
    grid = chem.u.grid
    n = sc.ScalarField(grid, chem.u.values - params.u_bar)
    ln_c_hat = sc.forward_dft(sc.ScalarField(grid, np.log(chem.c.values)))
    v = sc.vector_field(
        grid,
        [-sc.inverse_dft(sc.spectral_derivative(ln_c_hat, ax), check_symmetry=False).values
         for ax in range(grid.dim)],
    )
    return State(n, v, chem.time)


def reconstruct_ln_c(v: sc.VectorField, tol: float = CURL_TOL) -> sc.ScalarField:
    """Invert v = -grad(phi) for the mean-zero potential phi = ln c + const.

    Solves grad(phi) = -v spectrally: phi_hat = i (xi . v_hat) / |xi|^2 with
    the zero mode set to 0.  Rejects fields whose curl defect exceeds ``tol``,
    since only gradient fields determine a potential.
    """
    defect = curl_defect(v)
    if defect > tol:
        raise ValueError(
            f"vector field is not a gradient (relative curl {defect:.3e} > {tol:g})"
        )
    grid = v.grid
    table = sc.wavenumbers(grid)
    xi_dot_v = np.zeros(grid.shape, dtype=np.complex128)
    for ax, comp in enumerate(v.components):
        xi_dot_v += table.xi_deriv_axes[ax] * sc.forward_dft(comp).coeffs
    xi2 = np.zeros(grid.shape)
    for ax in range(grid.dim):
        xi2 = xi2 + table.xi_deriv_axes[ax] ** 2
    phi_hat = np.zeros(grid.shape, dtype=np.complex128)
    np.divide(1j * xi_dot_v, xi2, out=phi_hat, where=xi2 > 0)
    return sc.inverse_dft(sc.SpectralScalar(grid, phi_hat), check_symmetry=False)


def log_c_integrand(state: State, params: ModelParams) -> np.ndarray:
    """Pointwise g = -n + eps(|v|^2 - div v), the mean-free part of (ln c)_t."""
    grid = state.grid
    v_hats = sc.spectral_vector(grid, [sc.forward_dft(c).coeffs for c in state.v.components])
    div_v = sc.inverse_dft(sc.divergence(v_hats), check_symmetry=False).values
    speed2 = np.zeros(grid.shape)
    for arr in state.v.arrays:
        speed2 += arr**2
    return -state.n.values + params.epsilon * (speed2 - div_v)


class CIntegralAccumulator:
    """Trapezoidal accumulator for int_0^t g(x, tau) dtau along a trajectory.

    Owned by the run loop (single writer): call start() with the initial
    integrand, then advance() once per accepted step, in time order.
    """

    def __init__(self, grid: sc.Grid, params: ModelParams):
        self.grid = grid
        self.params = params
        self.time: float | None = None
        self.integral = np.zeros(grid.shape)
        self._last = np.zeros(grid.shape)

    def start(self, time: float, integrand: np.ndarray) -> None:
        self.time = float(time)
        self.integral = np.zeros(self.grid.shape)
        self._last = np.array(integrand, dtype=np.float64, copy=True)

    def advance(self, time: float, integrand: np.ndarray) -> None:
        if self.time is None:
            raise ValueError("accumulator not started")
        dt = float(time) - self.time
        if dt < 0:
            raise ValueError(f"time went backwards: {self.time} -> {time}")
        self.integral = self.integral + 0.5 * dt * (self._last + integrand)
        self._last = np.array(integrand, dtype=np.float64, copy=True)
        self.time = float(time)


def reconstruct_c(c0: sc.ScalarField, accumulator: CIntegralAccumulator,
                  t: float) -> sc.ScalarField:
    """Concentration at time t: c = c0 * exp(-u_bar t + accumulated integral)."""
    if accumulator.time is None:
        raise ValueError("accumulator not started")
    if abs(accumulator.time - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(
            f"accumulator is at t = {accumulator.time}, requested t = {t}; "
            "the integral must be advanced in lockstep with the solution"
        )
    u_bar = accumulator.params.u_bar
    return sc.ScalarField(c0.grid, c0.values * np.exp(-u_bar * t + accumulator.integral))


def masses(state: State) -> tuple[float, np.ndarray]:
    """Box integrals (M_n, M_v): dx^d times the field sums (the zero Fourier modes)."""
    w = state.grid.cell_volume
    m_n = w * float(np.sum(state.n.values))
    m_v = np.array([w * float(np.sum(arr)) for arr in state.v.arrays])
    return m_n, m_v
