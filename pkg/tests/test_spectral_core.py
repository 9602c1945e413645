"""Tests for the periodic-box spectral toolbox.

Expected values come from closed-form single-mode transforms and from operator
compositions that must agree with each other (dual routes), not from stored
outputs of the code under test.
"""

import numpy as np
import pytest

from chemodecay import spectral_core as sc


def periodic_gaussian(grid, center, sigma, amplitude=1.0):
    """Gaussian bump evaluated with minimum-image distances (smooth on the torus)."""
    L = grid.box_length
    r2 = np.zeros(grid.shape)
    for ax, x in enumerate(grid.coordinates()):
        d = (x - center[ax] + L / 2) % L - L / 2
        r2 = r2 + d**2
    return sc.ScalarField(grid, amplitude * np.exp(-r2 / (2 * sigma**2)))


class TestGrid:
    def test_spacing_is_exact_quotient(self):
        g = sc.Grid(2, 32, 7.5)
        assert g.dx == 7.5 / 32
        assert g.shape == (32, 32)
        assert g.cell_volume == g.dx**2

    def test_rejects_bad_dimensions(self):
        with pytest.raises(ValueError, match="dim"):
            sc.Grid(1, 32, 1.0)
        with pytest.raises(ValueError, match="even"):
            sc.Grid(2, 31, 1.0)
        with pytest.raises(ValueError, match="even"):
            sc.Grid(2, 6, 1.0)
        with pytest.raises(ValueError, match="positive"):
            sc.Grid(2, 32, 0.0)

    def test_wavenumber_table_invariants(self):
        g = sc.Grid(3, 8, 2.0)
        table = sc.wavenumbers(g)
        assert np.all(table.xi2 >= 0)
        assert table.xi2[0, 0, 0] == 0.0
        flat = table.xi2.ravel()
        assert np.count_nonzero(flat == 0.0) == 1  # zero only at the zero mode
        # Nyquist column is zeroed in the derivative wavenumbers only.
        assert table.xi_axes[0].ravel()[4] != 0.0
        assert table.xi_deriv_axes[0].ravel()[4] == 0.0


class TestForwardDFT:
    def test_constant_field_has_only_dc_mode(self):
        g = sc.Grid(2, 16, 3.0)
        fh = sc.forward_dft(sc.ScalarField(g, np.ones(g.shape)))
        assert fh.coeffs[0, 0] == pytest.approx(g.box_length**2, rel=1e-14)
        rest = fh.coeffs.copy()
        rest[0, 0] = 0.0
        assert np.max(np.abs(rest)) <= 1e-12 * g.box_length**2

    def test_sine_transforms_to_conjugate_mode_pair(self):
        g = sc.Grid(2, 32, 7.5)
        x0 = g.coordinates()[0]
        f = sc.ScalarField(
            g, np.broadcast_to(np.sin(2 * np.pi * x0 / g.box_length), g.shape).copy()
        )
        fh = sc.forward_dft(f)
        expect = g.box_length**2 / 2
        assert fh.coeffs[1, 0] == pytest.approx(-1j * expect, abs=1e-12 * expect)
        assert fh.coeffs[-1, 0] == pytest.approx(+1j * expect, abs=1e-12 * expect)

    def test_roundtrip_identity(self):
        g = sc.Grid(2, 24, 5.0)
        rng = np.random.default_rng(7)
        f = sc.ScalarField(g, rng.standard_normal(g.shape))
        back = sc.inverse_dft(sc.forward_dft(f))
        assert np.max(np.abs(back.values - f.values)) <= 1e-12 * np.max(np.abs(f.values))

    def test_rejects_non_finite_input(self):
        g = sc.Grid(2, 16, 1.0)
        vals = np.zeros(g.shape)
        vals[3, 3] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            sc.forward_dft(sc.ScalarField(g, vals))

    def test_parseval_identity(self):
        g = sc.Grid(3, 12, 2.5)
        rng = np.random.default_rng(11)
        f = sc.ScalarField(g, rng.standard_normal(g.shape))
        fh = sc.forward_dft(f)
        real_side = g.cell_volume * np.sum(f.values**2)
        spectral_side = np.sum(np.abs(fh.coeffs) ** 2) / g.box_length**3
        assert abs(real_side - spectral_side) <= 1e-12 * real_side


class TestInverseDFT:
    def test_zero_spectrum_gives_zero_field(self):
        g = sc.Grid(2, 16, 1.0)
        f = sc.inverse_dft(sc.SpectralScalar(g, np.zeros(g.shape, dtype=complex)))
        assert np.all(f.values == 0.0)

    def test_single_hermitian_pair_gives_real_sinusoid(self):
        g = sc.Grid(2, 32, 4.0)
        coeffs = np.zeros(g.shape, dtype=complex)
        coeffs[1, 0] = -1j * g.box_length**2 / 2
        coeffs[-1, 0] = +1j * g.box_length**2 / 2
        f = sc.inverse_dft(sc.SpectralScalar(g, coeffs))
        x0 = g.coordinates()[0]
        expect = np.broadcast_to(np.sin(2 * np.pi * x0 / g.box_length), g.shape)
        assert np.max(np.abs(f.values - expect)) <= 1e-12

    def test_detects_corrupted_spectrum(self):
        g = sc.Grid(2, 16, 1.0)
        rng = np.random.default_rng(3)
        fh = sc.forward_dft(sc.ScalarField(g, rng.standard_normal(g.shape)))
        bad = fh.coeffs.copy()
        bad[2, 5] += 0.1 * np.max(np.abs(bad))
        with pytest.raises(ValueError, match="conjugate symmetry"):
            sc.inverse_dft(sc.SpectralScalar(g, bad))


class TestDerivatives:
    def test_derivative_of_constant_is_zero(self):
        g = sc.Grid(2, 16, 2.0)
        fh = sc.forward_dft(sc.ScalarField(g, np.full(g.shape, 4.2)))
        for ax in range(2):
            d = sc.spectral_derivative(fh, ax)
            assert np.max(np.abs(d.coeffs)) <= 1e-12 * g.box_length**2

    def test_single_mode_derivative(self):
        g = sc.Grid(2, 32, 7.5)
        k = 2 * np.pi / g.box_length
        x0 = g.coordinates()[0]
        f = sc.ScalarField(g, np.broadcast_to(np.sin(k * x0), g.shape).copy())
        d = sc.inverse_dft(sc.spectral_derivative(sc.forward_dft(f), 0))
        expect = k * np.cos(k * x0)
        assert np.max(np.abs(d.values - np.broadcast_to(expect, g.shape))) <= 1e-12

    def test_laplacian_equals_div_grad_on_gaussian(self):
        g = sc.Grid(2, 64, 10.0)
        bump = periodic_gaussian(g, (5.0, 5.0), g.box_length / 16)
        fh = sc.forward_dft(bump)
        lap = sc.inverse_dft(sc.laplacian(fh)).values
        divgrad = sc.inverse_dft(sc.divergence(sc.gradient(fh))).values
        assert np.max(np.abs(lap - divgrad)) <= 1e-11 * np.max(np.abs(lap))

    def test_mixed_partials_commute_to_last_ulp(self):
        # The two compositions round the multiplier product in different
        # orders, so agreement is to the last ulp rather than bit-equality.
        g = sc.Grid(2, 16, 3.0)
        rng = np.random.default_rng(5)
        fh = sc.forward_dft(sc.ScalarField(g, rng.standard_normal(g.shape)))
        d12 = sc.spectral_derivative(sc.spectral_derivative(fh, 0), 1)
        d21 = sc.spectral_derivative(sc.spectral_derivative(fh, 1), 0)
        scale = np.max(np.abs(d12.coeffs))
        assert np.max(np.abs(d12.coeffs - d21.coeffs)) <= 4 * np.finfo(float).eps * scale

    def test_repeated_evaluation_is_bit_identical(self):
        g = sc.Grid(2, 16, 3.0)
        rng = np.random.default_rng(5)
        f = sc.ScalarField(g, rng.standard_normal(g.shape))
        a = sc.spectral_derivative(sc.forward_dft(f), 0).coeffs
        b = sc.spectral_derivative(sc.forward_dft(f), 0).coeffs
        assert np.array_equal(a, b)

    def test_invalid_axis_rejected(self):
        g = sc.Grid(2, 16, 1.0)
        fh = sc.SpectralScalar(g, np.zeros(g.shape, dtype=complex))
        with pytest.raises(ValueError, match="axis"):
            sc.spectral_derivative(fh, 2)


class TestSobolevSeminorm:
    def test_constants_have_zero_seminorm_for_positive_k(self):
        g = sc.Grid(2, 16, 2.0)
        f = sc.ScalarField(g, np.full(g.shape, 3.0))
        assert sc.sobolev_seminorm(f, 1) <= 1e-13
        assert sc.sobolev_seminorm(f, 2) <= 1e-13

    def test_sine_norms_match_closed_form(self):
        g = sc.Grid(2, 32, 7.5)
        k = 2 * np.pi / g.box_length
        x0 = g.coordinates()[0]
        f = sc.ScalarField(g, np.broadcast_to(np.sin(k * x0), g.shape).copy())
        expect_l2 = g.box_length / np.sqrt(2)
        assert sc.sobolev_seminorm(f, 0) == pytest.approx(expect_l2, rel=1e-12)
        assert sc.sobolev_seminorm(f, 1) == pytest.approx(k * expect_l2, rel=1e-12)

    def test_k0_matches_real_space_l2(self):
        g = sc.Grid(3, 10, 1.5)
        rng = np.random.default_rng(13)
        f = sc.ScalarField(g, rng.standard_normal(g.shape))
        real_space = np.sqrt(g.cell_volume * np.sum(f.values**2))
        assert sc.sobolev_seminorm(f, 0) == pytest.approx(real_space, rel=1e-12)

    def test_vector_field_sums_component_energies(self):
        g = sc.Grid(2, 16, 2.0)
        rng = np.random.default_rng(17)
        comps = [rng.standard_normal(g.shape) for _ in range(2)]
        v = sc.vector_field(g, comps)
        total = np.sqrt(
            sum(sc.sobolev_seminorm(sc.ScalarField(g, c), 1) ** 2 for c in comps)
        )
        assert sc.sobolev_seminorm(v, 1) == pytest.approx(total, rel=1e-12)

    def test_interpolation_inequality_random_fields(self):
        # Cauchy-Schwarz in Fourier space: |grad f|^2 <= |f| * |grad^2 f|.
        g = sc.Grid(2, 24, 3.0)
        rng = np.random.default_rng(19)
        for _ in range(20):
            f = sc.ScalarField(g, rng.standard_normal(g.shape))
            h1 = sc.sobolev_seminorm(f, 1)
            assert h1**2 <= sc.sobolev_seminorm(f, 0) * sc.sobolev_seminorm(f, 2) + 1e-12


class TestDealias:
    def test_spectrum_inside_ball_unchanged(self):
        g = sc.Grid(2, 24, 2.0)
        coeffs = np.zeros(g.shape, dtype=complex)
        coeffs[3, 2] = 1.0 + 2.0j
        coeffs[-3, -2] = 1.0 - 2.0j
        out = sc.dealias(sc.SpectralScalar(g, coeffs))
        assert np.array_equal(out.coeffs, coeffs)

    def test_nyquist_mode_zeroed(self):
        g = sc.Grid(2, 16, 2.0)
        coeffs = np.zeros(g.shape, dtype=complex)
        coeffs[g.n // 2, 0] = 1.0
        out = sc.dealias(sc.SpectralScalar(g, coeffs))
        assert np.all(out.coeffs == 0.0)

    def test_idempotent_bit_exact(self):
        g = sc.Grid(2, 24, 2.0)
        rng = np.random.default_rng(23)
        fh = sc.forward_dft(sc.ScalarField(g, rng.standard_normal(g.shape)))
        once = sc.dealias(fh)
        twice = sc.dealias(once)
        assert np.array_equal(once.coeffs, twice.coeffs)

    def test_cutoff_boundary_modes_kept(self):
        # |j| <= N/3 survives; N = 24 keeps j = 8, kills j = 9.
        g = sc.Grid(2, 24, 2.0)
        coeffs = np.zeros(g.shape, dtype=complex)
        coeffs[8, 0] = 1.0
        coeffs[9, 1] = 1.0
        out = sc.dealias(sc.SpectralScalar(g, coeffs))
        assert out.coeffs[8, 0] == 1.0
        assert out.coeffs[9, 1] == 0.0


class TestSnapshotIO:
    def test_roundtrip_preserves_values_and_metadata(self, tmp_path):
        g = sc.Grid(2, 16, 3.25)
        rng = np.random.default_rng(29)
        f = sc.ScalarField(g, rng.standard_normal(g.shape))
        path = tmp_path / "field.snap"
        sc.save_snapshot(path, f, "n", 1.375)
        loaded, name, time = sc.load_snapshot(path)
        assert name == "n"
        assert time == 1.375
        assert loaded.grid == g
        assert np.array_equal(loaded.values, f.values)

    def test_header_is_readable_text(self, tmp_path):
        g = sc.Grid(2, 16, 1.0)
        path = tmp_path / "field.snap"
        sc.save_snapshot(path, sc.ScalarField(g, np.zeros(g.shape)), "v0", 0.0)
        head = path.read_bytes()[:200].split(b"\ndata\n")[0].decode("ascii")
        assert head.splitlines()[0] == sc.SNAPSHOT_SCHEMA
        assert "dim=2" in head and "n=16" in head and "name=v0" in head

    def test_truncated_payload_rejected(self, tmp_path):
        g = sc.Grid(2, 16, 1.0)
        path = tmp_path / "field.snap"
        sc.save_snapshot(path, sc.ScalarField(g, np.zeros(g.shape)), "n", 0.0)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(ValueError, match="payload"):
            sc.load_snapshot(path)

    def test_wrong_schema_rejected(self, tmp_path):
        path = tmp_path / "junk.snap"
        path.write_bytes(b"something-else\ndata\n")
        with pytest.raises(ValueError, match="schema"):
            sc.load_snapshot(path)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
