"""Exact per-mode propagator of the linearized density/gradient system.

Linearizing the coupled system for the cell-density perturbation n and the
log-chemical gradient v about the constant state gives, per Fourier mode xi,
the (d+1)x(d+1) generator acting on (n_hat, v_hat):

    A(xi) = [ -|xi|^2      i xi^T          ]
            [  i xi       -eps |xi|^2 I_d  ]

Its exponential G(t, xi) = e^{t A(xi)} is available in closed form.  The
transverse part of v decouples and decays with rate lambda0 = -eps|xi|^2; the
(n, longitudinal v) pair evolves by the quadratic eigenvalue pair

    lambda^2 + (1+eps)|xi|^2 lambda + (eps|xi|^4 + |xi|^2) = 0,

whose roots lambda+- = a +- b enter only through the symmetric combinations

    psi1 = (l+ e^{l- t} - l- e^{l+ t}) / (l+ - l-),
    psi2 = (e^{l+ t} - e^{l- t}) / (l+ - l-),

so the labeling of the two roots is immaterial.  All evaluation paths below
are overflow-safe: every exponent that appears is <= 0 for every mode and
every eps >= 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .spectral_core import Grid, SpectralScalar, SpectralVector, spectral_vector, wavenumbers

# A per-mode (d+1)x(d+1) complex matrix acting on (n_hat, v_hat); identity at
# t = 0 by construction.
ModeMatrix = np.ndarray

# Relative width of the discriminant band treated as a repeated root.
CRITICAL_BAND = 1e-12
# Below this |b*t| the sin/sinh quotients switch to a 3-term series.
SERIES_THRESHOLD = 1e-4
# Relative eigenvalue separation required before projectors are well-posed.
PROJECTOR_SEPARATION = 1e-8


class Regime(enum.Enum):
    OSCILLATORY = "oscillatory"
    CRITICAL = "critical"
    MONOTONE = "monotone"


class EigenvalueCollisionError(ValueError):
    """Raised when spectral projectors are requested at a (near-)repeated root."""


@dataclass(frozen=True)
class EigenTriple:
    """Eigenvalues of A(xi) for one mode.

    lambda0 = -eps|xi|^2 carries multiplicity d-1 (transverse directions).
    a = -(1+eps)|xi|^2/2 is the common real part of the quadratic pair and
    b >= 0 is half their separation: lambda+- = a +- i*b (oscillatory) or
    a +- b (monotone); b = 0 in the critical band.
    """

    lambda0: float
    lambda_plus: complex
    lambda_minus: complex
    a: float
    b: float
    regime: Regime


def _discriminant(xi2, epsilon):
    """Discriminant of the quadratic factor and a magnitude scale for it.

    disc = (1+eps)^2|xi|^4 - 4(eps|xi|^4 + |xi|^2) = (1-eps)^2|xi|^4 - 4|xi|^2.
    The scale adds the magnitudes of both contributions so the critical band
    is relative, not absolute.
    """
    disc = (1.0 - epsilon) ** 2 * xi2 * xi2 - 4.0 * xi2
    scale = (1.0 + epsilon) ** 2 * xi2 * xi2 + 4.0 * (epsilon * xi2 * xi2 + xi2)
    return disc, scale


def char_eigenvalues(xi2: float, epsilon: float) -> EigenTriple:
    """Roots of det(A(xi) - lambda I) = 0 as functions of |xi|^2."""
    if not (np.isfinite(xi2) and xi2 >= 0):
        raise ValueError(f"|xi|^2 must be finite and nonnegative, got {xi2}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    lambda0 = -epsilon * xi2
    a = -0.5 * (1.0 + epsilon) * xi2
    disc, scale = _discriminant(xi2, epsilon)
    if abs(disc) <= CRITICAL_BAND * scale:
        return EigenTriple(lambda0, complex(a), complex(a), a, 0.0, Regime.CRITICAL)
    if disc < 0:
        b = np.sqrt(-disc) / 2.0
        return EigenTriple(
            lambda0, complex(a, b), complex(a, -b), a, b, Regime.OSCILLATORY
        )
    b = np.sqrt(disc) / 2.0
    return EigenTriple(lambda0, complex(a + b), complex(a - b), a, b, Regime.MONOTONE)


def psi_tables(t: float, xi2: np.ndarray, epsilon: float):
    """Vectorized (psi1, psi2) over an array of |xi|^2 values.

    Branches are combined with masks; every branch is evaluated with
    arguments that cannot overflow (all exponents <= 0), and quotient
    denominators are replaced by 1 in lanes where another branch applies.
    """
    xi2 = np.asarray(xi2, dtype=np.float64)
    a = -0.5 * (1.0 + epsilon) * xi2
    disc, scale = _discriminant(xi2, epsilon)
    critical = np.abs(disc) <= CRITICAL_BAND * scale
    oscillatory = (disc < 0) & ~critical
    monotone = (disc > 0) & ~critical

    b = np.sqrt(np.abs(disc)) / 2.0
    safe_b = np.where(b == 0.0, 1.0, b)
    bt = b * t
    series = np.abs(bt) < SERIES_THRESHOLD
    eat = np.exp(a * t)

    # Critical / series fallback: psi2 -> t e^{at}, psi1 -> (1 - a t) e^{at}.
    psi2 = t * eat
    psi1 = (1.0 - a * t) * eat

    osc_quot = np.where(
        series, t * (1.0 - bt * bt / 6.0 + bt**4 / 120.0), np.sin(bt) / safe_b
    )
    psi2 = np.where(oscillatory, eat * osc_quot, psi2)
    psi1 = np.where(oscillatory, eat * np.cos(bt) - a * psi2, psi1)

    # Monotone: lambda+- = a +- b with both <= 0; expm1 avoids cancellation
    # and the factored e^{lambda+ t} keeps every exponent nonpositive.
    exp_plus = np.exp((a + b) * t)
    exp_minus = np.exp((a - b) * t)
    mono_psi2 = np.where(
        series,
        eat * t * (1.0 + bt * bt / 6.0 + bt**4 / 120.0),
        exp_plus * (-np.expm1(-2.0 * bt)) / (2.0 * safe_b),
    )
    psi2 = np.where(monotone, mono_psi2, psi2)
    psi1 = np.where(monotone, 0.5 * (exp_plus + exp_minus) - a * mono_psi2, psi1)
    return psi1, psi2


def psi_functions(t: float, xi2: float, epsilon: float) -> tuple[float, float]:
    """Scalar (psi1, psi2) for one mode; see psi_tables."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    psi1, psi2 = psi_tables(t, np.asarray([xi2]), epsilon)
    return float(psi1[0]), float(psi2[0])


def generator_matrix(xi, epsilon: float) -> ModeMatrix:
    """A(xi), the per-mode generator of the linearized system."""
    xi = np.asarray(xi, dtype=np.float64)
    d = xi.size
    xi2 = float(xi @ xi)
    A = np.zeros((d + 1, d + 1), dtype=np.complex128)
    A[0, 0] = -xi2
    A[0, 1:] = 1j * xi
    A[1:, 0] = 1j * xi
    A[1:, 1:] = -epsilon * xi2 * np.eye(d)
    return A


def _assemble_green(xi, xi2, psi1, psi2, elam0, epsilon) -> ModeMatrix:
    d = xi.size
    G = np.zeros((d + 1, d + 1), dtype=np.complex128)
    G[0, 0] = psi1 - xi2 * psi2
    G[0, 1:] = 1j * xi * psi2
    G[1:, 0] = 1j * xi * psi2
    longitudinal = np.outer(xi, xi) / xi2
    G[1:, 1:] = elam0 * (np.eye(d) - longitudinal) + longitudinal * (
        psi1 - epsilon * xi2 * psi2
    )
    return G


def green_hat(t: float, xi, epsilon: float) -> ModeMatrix:
    """Closed-form e^{t A(xi)}; identity at t = 0 and at xi = 0."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    xi = np.asarray(xi, dtype=np.float64)
    xi2 = float(xi @ xi)
    if xi2 == 0.0:
        return np.eye(xi.size + 1, dtype=np.complex128)
    psi1, psi2 = psi_functions(t, xi2, epsilon)
    elam0 = np.exp(-epsilon * xi2 * t)
    return _assemble_green(xi, xi2, psi1, psi2, elam0, epsilon)


def spectral_projectors(xi, epsilon: float) -> tuple[ModeMatrix, ModeMatrix, ModeMatrix]:
    """Projectors (P0, P+, P-) onto the eigenspaces of A(xi).

    Requires the three eigenvalue values to be pairwise separated by more
    than PROJECTOR_SEPARATION relative to their magnitudes; near a repeated
    root the formula divides by a vanishing gap and the caller should use
    green_hat, which is collision-safe.
    """
    xi = np.asarray(xi, dtype=np.float64)
    xi2 = float(xi @ xi)
    if xi2 == 0.0:
        raise ValueError("projectors are undefined at xi = 0 (A vanishes)")
    tri = char_eigenvalues(xi2, epsilon)
    lams = [complex(tri.lambda0), tri.lambda_plus, tri.lambda_minus]
    for i in range(3):
        for j in range(i + 1, 3):
            gap = abs(lams[i] - lams[j])
            denom = max(abs(lams[i]), abs(lams[j]), np.finfo(float).tiny)
            if gap <= PROJECTOR_SEPARATION * denom:
                raise EigenvalueCollisionError(
                    f"eigenvalues {lams[i]:.6g} and {lams[j]:.6g} are separated by "
                    f"{gap:.3e} (relative {gap / denom:.3e}); projectors are "
                    "ill-conditioned at (near-)repeated roots"
                )
    A = generator_matrix(xi, epsilon)
    eye = np.eye(A.shape[0], dtype=np.complex128)
    projectors = []
    for i in range(3):
        P = eye.copy()
        for j in range(3):
            if j != i:
                P = P @ (A - lams[j] * eye) / (lams[i] - lams[j])
        projectors.append(P)
    return tuple(projectors)


def matrix_exp_oracle(A, t: float) -> ModeMatrix:
    """Brute-force e^{A t} by scaling-and-squaring with a Taylor core.

    Independent of the closed-form path: no eigenvalue formulas are used.
    Accurate to ~1e-12 relative for ||A t|| <= 1e3 and degrades gracefully
    beyond; inputs with ||A t||_1 > 1e8 are rejected rather than silently
    squared into noise.
    """
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    B = A * t
    if not np.all(np.isfinite(B)):
        raise ValueError("matrix exponential of non-finite input")
    norm = float(np.linalg.norm(B, 1))
    if norm > 1e8:
        raise OverflowError(
            f"||A t||_1 = {norm:.3e} exceeds 1e8; repeated squaring would "
            "amplify rounding beyond any useful accuracy"
        )
    squarings = 0 if norm <= 0.5 else int(np.ceil(np.log2(norm / 0.5)))
    M = B / (2.0**squarings)
    eye = np.eye(A.shape[0], dtype=np.complex128)
    result = eye.copy()
    term = eye.copy()
    for k in range(1, 26):  # remainder < 0.5^26/26! at ||M|| <= 0.5
        term = term @ M / k
        result += term
    for _ in range(squarings):
        result = result @ result
    return result


@dataclass(frozen=True)
class PropagatorTable:
    """Precomputed per-mode propagator G(dt, xi) over a grid.

    Stored as flat psi1/psi2/e^{lambda0 dt} arrays plus the derivative
    wavevectors; the full (d+1)x(d+1) matrix action is applied algebraically
    through the longitudinal/transverse split, which is equivalent to
    left-multiplying each mode's (n_hat, v_hat) by its ModeMatrix.  The
    wavevectors are the Nyquist-zeroed derivative ones, so the table is exactly
    e^{dt A(xi)} mode by mode and the semigroup law holds to rounding.
    """

    grid: Grid
    epsilon: float
    dt: float
    psi1: np.ndarray
    psi2: np.ndarray
    elam0: np.ndarray
    xi2: np.ndarray
    inv_xi2: np.ndarray

    def matrix_at(self, mode_index: tuple[int, ...]) -> ModeMatrix:
        """Materialize the ModeMatrix for one mode (testing/inspection)."""
        table = wavenumbers(self.grid)
        xi = np.array(
            [float(table.xi_deriv_axes[ax].ravel()[mode_index[ax]])
             for ax in range(self.grid.dim)]
        )
        xi2 = float(self.xi2[mode_index])
        if xi2 == 0.0:
            return np.eye(self.grid.dim + 1, dtype=np.complex128)
        return _assemble_green(
            xi,
            xi2,
            float(self.psi1[mode_index]),
            float(self.psi2[mode_index]),
            float(self.elam0[mode_index]),
            self.epsilon,
        )


def build_propagator(grid: Grid, epsilon: float, dt: float) -> PropagatorTable:
    """Tabulate G(dt, xi) over every retained mode of the grid."""
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    table = wavenumbers(grid)
    xi2 = np.zeros(grid.shape)
    for ax in range(grid.dim):
        xi2 = xi2 + table.xi_deriv_axes[ax] ** 2
    psi1, psi2 = psi_tables(dt, xi2, epsilon)
    elam0 = np.exp(-epsilon * xi2 * dt)
    inv_xi2 = np.zeros_like(xi2)
    np.divide(1.0, xi2, out=inv_xi2, where=xi2 > 0)
    return PropagatorTable(grid, epsilon, dt, psi1, psi2, elam0, xi2, inv_xi2)


def _apply_arrays(table: PropagatorTable, n_hat: np.ndarray, v_hats: list[np.ndarray]):
    """Raw-array propagator action; returns (n_hat', [v_hat'...])."""
    axes = wavenumbers(table.grid).xi_deriv_axes
    xi_dot_v = np.zeros_like(n_hat)
    for ax, vh in enumerate(v_hats):
        xi_dot_v = xi_dot_v + axes[ax] * vh
    longitudinal = xi_dot_v * table.inv_xi2
    long_gain = table.psi1 - table.epsilon * table.xi2 * table.psi2
    n_out = (table.psi1 - table.xi2 * table.psi2) * n_hat + 1j * table.psi2 * xi_dot_v
    v_out = []
    for ax, vh in enumerate(v_hats):
        along = axes[ax] * longitudinal
        v_out.append(
            1j * axes[ax] * table.psi2 * n_hat + table.elam0 * (vh - along) + long_gain * along
        )
    return n_out, v_out


def apply_propagator(
    table: PropagatorTable, state_hat: tuple[SpectralScalar, SpectralVector]
) -> tuple[SpectralScalar, SpectralVector]:
    """Advance a spectral (n_hat, v_hat) state by one table application.

    The zero mode is left unchanged (G(t, 0) = I encodes mass conservation)
    and conjugate symmetry of real fields is preserved, since psi1/psi2 are
    even in xi and the coupling entries are odd multiples of i*xi.
    """
    n_hat, v_hat = state_hat
    if n_hat.grid != table.grid or v_hat.grid != table.grid:
        raise ValueError("state and propagator table live on different grids")
    n_out, v_out = _apply_arrays(table, n_hat.coeffs, [c.coeffs for c in v_hat.components])
    return SpectralScalar(table.grid, n_out), spectral_vector(table.grid, v_out)


def dump_green_csv(path, xi_magnitudes, epsilons, times, dim: int = 2) -> None:
    """Write sampled Green matrices to CSV for external inspection.

    Columns: |xi|, epsilon, t, then Re/Im of the (d+1)^2 entries in row-major
    order, G00_re, G00_im, G01_re, ...  The wavevector points along axis 0.
    """
    rows = []
    m = dim + 1
    header = ["xi", "epsilon", "t"]
    for i in range(m):
        for j in range(m):
            header += [f"G{i}{j}_re", f"G{i}{j}_im"]
    for eps in epsilons:
        for mag in xi_magnitudes:
            xi = np.zeros(dim)
            xi[0] = mag
            for t in times:
                G = green_hat(t, xi, eps)
                row = [repr(float(mag)), repr(float(eps)), repr(float(t))]
                for i in range(m):
                    for j in range(m):
                        row += [repr(G[i, j].real), repr(G[i, j].imag)]
                rows.append(",".join(row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# chemodecay-green-csv-v1\n")
        fh.write(",".join(header) + "\n")
        fh.write("\n".join(rows) + "\n")
