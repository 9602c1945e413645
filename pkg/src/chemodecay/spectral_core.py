"""Periodic-box spectral toolbox: grids, transforms, calculus, norms, field I/O.

The discrete Fourier transform is normalized so that coefficients approximate
the continuum Fourier integral: the forward transform multiplies the plain FFT
sum by dx^d.  Under this convention the discrete Parseval identity reads

    dx^d * sum_x |f(x)|^2  =  L^{-d} * sum_k |fhat_k|^2

and per-mode propagator formulas written for the continuum transform apply to
the coefficients without rescaling.  Modes are indexed by integer vectors
j in [-N/2, N/2)^d in standard FFT order, with wavevector xi_j = 2*pi*j/L.
Real-space arrays are C-ordered (row-major) over grid points x = j*dx.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

SNAPSHOT_SCHEMA = "chemodecay-snapshot-v1"

# Relative tolerance on conjugate symmetry before a spectrum is declared corrupt.
HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [0, L)^dim with N points per dimension."""

    dim: int
    n: int
    box_length: float

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"points per dimension must be even and >= 8, got {self.n}")
        if not (self.box_length > 0):
            raise ValueError(f"box length must be positive, got {self.box_length}")

    @property
    def dx(self) -> float:
        return self.box_length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    def coordinates(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays shaped for broadcasting against fields."""
        x = np.arange(self.n) * self.dx
        return [x.reshape(self._axis_shape(ax)) for ax in range(self.dim)]

    def _axis_shape(self, axis: int) -> tuple[int, ...]:
        shape = [1] * self.dim
        shape[axis] = self.n
        return tuple(shape)


@dataclass(frozen=True)
class WavenumberTable:
    """Per-mode wavevectors and |xi|^2 for a grid.

    ``xi_axes`` holds the exact FFT wavenumbers 2*pi*j/L per axis (broadcast
    shape), including the Nyquist entry j = -N/2.  ``xi_deriv_axes`` zeroes the
    Nyquist entry; odd-order derivatives of real fields must use it so the
    results stay real.  ``xi2`` is built from the full wavenumbers and vanishes
    only at the zero mode.
    """

    grid: Grid
    xi_axes: tuple[np.ndarray, ...]
    xi_deriv_axes: tuple[np.ndarray, ...]
    xi2: np.ndarray
    dealias_keep: np.ndarray

    def mode_index_axes(self) -> list[np.ndarray]:
        n = self.grid.n
        j = np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)
        return [j.reshape(self.grid._axis_shape(ax)) for ax in range(self.grid.dim)]


@functools.lru_cache(maxsize=16)
def wavenumbers(grid: Grid) -> WavenumberTable:
    """Build (and cache) the wavenumber table for a grid."""
    n, dim = grid.n, grid.dim
    xi_1d = 2.0 * np.pi * np.fft.fftfreq(n, d=grid.dx)
    xi_deriv_1d = xi_1d.copy()
    xi_deriv_1d[n // 2] = 0.0  # Nyquist sign is ambiguous; zero keeps real fields real
    xi_axes = tuple(xi_1d.reshape(grid._axis_shape(ax)) for ax in range(dim))
    xi_deriv_axes = tuple(xi_deriv_1d.reshape(grid._axis_shape(ax)) for ax in range(dim))
    xi2 = np.zeros(grid.shape)
    for ax in range(dim):
        xi2 = xi2 + xi_axes[ax] ** 2
    j_1d = np.fft.fftfreq(n, d=1.0 / n)
    keep = np.ones(grid.shape, dtype=bool)
    for ax in range(dim):
        keep &= np.abs(j_1d.reshape(grid._axis_shape(ax))) <= n / 3.0
    return WavenumberTable(grid, xi_axes, xi_deriv_axes, xi2, keep)


@dataclass
class ScalarField:
    """Real scalar field sampled on a grid, C-ordered over x = j*dx."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.values)):
            bad = int(np.size(self.values) - np.count_nonzero(np.isfinite(self.values)))
            raise ValueError(f"field contains {bad} non-finite values")


@dataclass
class VectorField:
    """dim-component vector field; all components share one grid."""

    grid: Grid
    components: tuple[ScalarField, ...]

    def __post_init__(self) -> None:
        if len(self.components) != self.grid.dim:
            raise ValueError("component count must equal grid dimension")
        for c in self.components:
            if c.grid != self.grid:
                raise ValueError("all components must share the vector field's grid")

    @property
    def arrays(self) -> list[np.ndarray]:
        return [c.values for c in self.components]

    def check_finite(self) -> None:
        for c in self.components:
            c.check_finite()


@dataclass
class SpectralScalar:
    """Fourier coefficients of a scalar field under the dx^d-weighted transform."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape != self.grid.shape:
            raise ValueError(
                f"spectrum shape {self.coeffs.shape} does not match grid shape {self.grid.shape}"
            )


@dataclass
class SpectralVector:
    grid: Grid
    components: tuple[SpectralScalar, ...]

    def __post_init__(self) -> None:
        if len(self.components) != self.grid.dim:
            raise ValueError("component count must equal grid dimension")

    @property
    def arrays(self) -> list[np.ndarray]:
        return [c.coeffs for c in self.components]


def vector_field(grid: Grid, arrays) -> VectorField:
    """Wrap raw per-component arrays as a VectorField."""
    return VectorField(grid, tuple(ScalarField(grid, a) for a in arrays))


def spectral_vector(grid: Grid, arrays) -> SpectralVector:
    return SpectralVector(grid, tuple(SpectralScalar(grid, a) for a in arrays))


def forward_dft(f: ScalarField) -> SpectralScalar:
    """Transform a real field to Fourier coefficients (continuum normalization)."""
    f.check_finite()
    return SpectralScalar(f.grid, np.fft.fftn(f.values) * f.grid.cell_volume)


def hermitian_defect(fh: SpectralScalar) -> float:
    """Max deviation from conjugate symmetry, relative to the largest coefficient."""
    c = fh.coeffs
    reflected = np.flip(c)
    reflected = np.roll(reflected, shift=(1,) * c.ndim, axis=tuple(range(c.ndim)))
    scale = float(np.max(np.abs(c)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(c - np.conj(reflected)))) / scale


def inverse_dft(fh: SpectralScalar, check_symmetry: bool = True) -> ScalarField:
    """Invert forward_dft, verifying the spectrum describes a real field."""
    if check_symmetry:
        defect = hermitian_defect(fh)
        if defect > HERMITIAN_TOL:
            raise ValueError(
                f"spectrum violates conjugate symmetry (relative defect {defect:.3e}); "
                "it does not represent a real field"
            )
    values = np.fft.ifftn(fh.coeffs).real / fh.grid.cell_volume
    return ScalarField(fh.grid, values)


def spectral_derivative(fh: SpectralScalar, axis: int) -> SpectralScalar:
    """Differentiate along one axis: multiply by i*xi_axis, Nyquist zeroed."""
    table = wavenumbers(fh.grid)
    if not 0 <= axis < fh.grid.dim:
        raise ValueError(f"axis {axis} out of range for dim {fh.grid.dim}")
    return SpectralScalar(fh.grid, fh.coeffs * (1j * table.xi_deriv_axes[axis]))


def gradient(fh: SpectralScalar) -> SpectralVector:
    return SpectralVector(
        fh.grid, tuple(spectral_derivative(fh, ax) for ax in range(fh.grid.dim))
    )


def divergence(vh: SpectralVector) -> SpectralScalar:
    table = wavenumbers(vh.grid)
    out = np.zeros(vh.grid.shape, dtype=np.complex128)
    for ax, comp in enumerate(vh.components):
        out += comp.coeffs * (1j * table.xi_deriv_axes[ax])
    return SpectralScalar(vh.grid, out)


def laplacian(fh: SpectralScalar) -> SpectralScalar:
    table = wavenumbers(fh.grid)
    return SpectralScalar(fh.grid, fh.coeffs * (-table.xi2))


def _spectrum_arrays(f) -> tuple[Grid, list[np.ndarray]]:
    """Coerce any field/spectrum type to (grid, list of coefficient arrays)."""
    if isinstance(f, ScalarField):
        return f.grid, [forward_dft(f).coeffs]
    if isinstance(f, VectorField):
        return f.grid, [forward_dft(c).coeffs for c in f.components]
    if isinstance(f, SpectralScalar):
        return f.grid, [f.coeffs]
    if isinstance(f, SpectralVector):
        return f.grid, [c.coeffs for c in f.components]
    raise TypeError(f"unsupported field type {type(f).__name__}")


def sobolev_seminorm(f, k: int) -> float:
    """L^2 norm of the k-th derivatives, via Parseval.

    Computes ( L^{-d} * sum_modes |xi|^{2k} |fhat|^2 )^{1/2}, summing over the
    components of vector fields.  k = 0 gives the plain L^2 norm.  Sums use
    numpy's pairwise reduction, so results do not depend on thread count.
    """
    if k < 0:
        raise ValueError("derivative order must be nonnegative")
    grid, spectra = _spectrum_arrays(f)
    table = wavenumbers(grid)
    weight = 1.0 if k == 0 else table.xi2**k
    total = 0.0
    for coeffs in spectra:
        total += float(np.sum(weight * (coeffs.real**2 + coeffs.imag**2)))
    return float(np.sqrt(total / grid.box_length**grid.dim))


def dealias(fh: SpectralScalar) -> SpectralScalar:
    """Zero every mode with any |j_axis| > N/3 (2/3-rule); idempotent."""
    table = wavenumbers(fh.grid)
    return SpectralScalar(fh.grid, np.where(table.dealias_keep, fh.coeffs, 0.0))


def dealias_array(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Raw-array dealias used in inner loops."""
    return np.where(wavenumbers(grid).dealias_keep, coeffs, 0.0)


# ---------------------------------------------------------------------------
# Snapshot I/O: ASCII header followed by a little-endian float64 payload in
# C (row-major) order.  One scalar field per file.
# ---------------------------------------------------------------------------

def save_snapshot(path, field: ScalarField, name: str, time: float) -> None:
    field.check_finite()
    if "\n" in name or "=" in name:
        raise ValueError("field name must not contain newlines or '='")
    header = (
        f"{SNAPSHOT_SCHEMA}\n"
        f"dim={field.grid.dim}\n"
        f"n={field.grid.n}\n"
        f"box_length={field.grid.box_length!r}\n"
        f"time={float(time)!r}\n"
        f"name={name}\n"
        "data\n"
    )
    payload = np.ascontiguousarray(field.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload.tobytes())


def load_snapshot(path) -> tuple[ScalarField, str, float]:
    """Read a snapshot file; returns (field, name, time)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    marker = b"\ndata\n"
    split = blob.find(marker)
    if split < 0:
        raise ValueError(f"{path}: missing 'data' marker; not a snapshot file")
    lines = blob[:split].decode("ascii").splitlines()
    if not lines or lines[0] != SNAPSHOT_SCHEMA:
        raise ValueError(f"{path}: unrecognized schema line {lines[:1]!r}")
    fields = dict(line.split("=", 1) for line in lines[1:])
    grid = Grid(int(fields["dim"]), int(fields["n"]), float(fields["box_length"]))
    payload = blob[split + len(marker):]
    expected = grid.n**grid.dim * 8
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload has {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype="<f8").reshape(grid.shape).copy()
    return ScalarField(grid, values), fields["name"], float(fields["time"])
