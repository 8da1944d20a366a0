import numpy as np
import pytest
from scipy.integrate import quad

import pwlab as pw
from pwlab.fields import (GridSpec, NODE_FLOOR_RATIO, grid_norm,
                          spectral_laplacian)


def smooth_random_field(grid, seed=0, scale=4.0):
    """Band-limited random field, strictly nonzero after an offset."""
    rng = np.random.default_rng(seed)
    spec = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    k2 = np.zeros(grid.shape)
    for i in range(grid.dims):
        k = grid.wavenumbers(i)
        sh = [1] * grid.dims
        sh[i] = len(k)
        k2 = k2 + k.reshape(sh) ** 2
    spec *= np.exp(-k2 / scale ** 2)
    vals = np.fft.ifftn(spec)
    vals = vals / np.max(np.abs(vals)) + 2.0
    return pw.ComplexField(grid, vals).normalize()


class TestGridSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            GridSpec.create(7, 1.0)        # odd
        with pytest.raises(ValueError):
            GridSpec.create(4, 1.0)        # too few
        with pytest.raises(ValueError):
            GridSpec.create(16, -1.0)
        with pytest.raises(ValueError):
            GridSpec.create((16, 16), (1.0,))
        g = GridSpec.create((16, 32), (2.0, 4.0))
        assert g.spacings == (0.125, 0.125)
        assert g.cell_volume == pytest.approx(0.125 ** 2)

    def test_wrap(self):
        g = GridSpec.create(16, 2.0)
        assert g.wrap(np.array([2.3]))[0] == pytest.approx(0.3)
        assert g.wrap(np.array([-0.25]))[0] == pytest.approx(1.75)


class TestSpectralDerivatives:
    def test_laplacian_eigenvalue_exact(self):
        # exp(i 2 pi k x / l) is an exact eigenfunction of the grid Laplacian
        g = GridSpec.create(64, 5.0)
        x = g.axis_coords(0)
        for k in (1, 3, 10, 31):
            f = np.exp(1j * 2 * np.pi * k * x / 5.0)
            lam = -(2 * np.pi * k / 5.0) ** 2
            got = spectral_laplacian(f, g)
            assert np.max(np.abs(got - lam * f)) < 1e-10 * abs(lam)

    def test_2d_laplacian(self):
        g = GridSpec.create((32, 32), (1.0, 2.0))
        X, Y = g.meshes()
        f = np.exp(1j * 2 * np.pi * (3 * X / 1.0 + 2 * Y / 2.0))
        lam = -(2 * np.pi * 3) ** 2 - (2 * np.pi * 2 / 2.0) ** 2
        got = spectral_laplacian(f, g)
        assert np.max(np.abs(got - lam * f)) < 1e-9 * abs(lam)


class TestPolarDecompose:
    def test_identity_case(self):
        g = GridSpec.create(32, 1.0)
        psi = pw.ComplexField(g, np.ones(32))
        pair = pw.polar_decompose(psi)
        assert np.allclose(pair.amplitude, 1.0)
        assert np.allclose(pair.phase, 0.0)
        assert pair.defined.all()

    def test_pure_phase(self):
        g = GridSpec.create(64, 3.0)
        x = g.axis_coords(0)
        psi = pw.ComplexField(g, np.exp(1j * 2 * np.pi * x / 3.0))
        pair = pw.polar_decompose(psi)
        assert np.allclose(pair.amplitude, 1.0, atol=1e-14)
        expected = g.hbar * np.angle(np.exp(1j * 2 * np.pi * x / 3.0))
        assert np.allclose(pair.phase, expected, atol=1e-14)

    def test_round_trip_random_smooth(self):
        g = GridSpec.create((32, 32), (1.0, 1.5))
        psi = smooth_random_field(g, seed=3)
        pair = pw.polar_decompose(psi)
        rec = pw.recompose(pair, g)
        err = np.abs(rec.values - psi.values)
        assert np.max(err[pair.defined]) < 1e-12

    def test_nodes_flagged_not_defined(self):
        g = GridSpec.create(32, 1.0)
        vals = np.ones(32, dtype=complex)
        vals[5] = 0.0
        pair = pw.polar_decompose(pw.ComplexField(g, vals))
        assert not pair.defined[5]
        assert pair.defined.sum() == 31

    def test_nonfinite_rejected(self):
        g = GridSpec.create(32, 1.0)
        vals = np.ones(32, dtype=complex)
        vals[3] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            pw.polar_decompose(pw.ComplexField(g, vals))


class TestQuantumPotential:
    def test_plane_wave_zero(self):
        g = GridSpec.create(64, 2 * np.pi)
        psi, _ = pw.stationary_eigenfield(g, 2)
        q = pw.quantum_potential(psi)
        assert np.nanmax(np.abs(q)) < 1e-10

    def test_harmonic_ground_state_identity(self):
        # Q + V is the constant zero-point energy hbar*omega/2
        g = GridSpec.create(256, 20.0)
        psi = pw.gaussian_packet(g, 10.0, np.sqrt(0.5))
        v = pw.PotentialSpec.harmonic(1.0, 10.0).evaluate(g)
        q = pw.quantum_potential(psi)
        r = np.abs(psi.values)
        sel = r > 1e-6 * r.max()
        assert np.max(np.abs(q[sel] + v[sel] - 0.5)) < 1e-6

    def test_gaussian_closed_form(self):
        # exp(-x^2 / 4 s^2): Q = h^2/(4 m s^2) - h^2 x^2/(8 m s^4)
        s = 1.7
        g = GridSpec.create(512, 40.0)
        x = g.axis_coords(0)
        psi = pw.gaussian_packet(g, 20.0, s)
        q = pw.quantum_potential(psi)
        expected = 1.0 / (4 * s ** 2) - (x - 20.0) ** 2 / (8 * s ** 4)
        r = np.abs(psi.values)
        sel = r > 1e-6 * r.max()
        assert np.max(np.abs(q[sel] - expected[sel])) < 1e-6

    def test_global_rescale_invariance(self):
        g = GridSpec.create(128, 12.0)
        psi = smooth_random_field(g, seed=9)
        q1 = pw.quantum_potential(psi)
        q2 = pw.quantum_potential(psi.with_values(psi.values * (2.3 - 1.1j)))
        r = np.abs(psi.values)
        sel = r > 1e-3 * r.max()      # away from the floor where roundoff amplifies
        assert np.max(np.abs(q1[sel] - q2[sel])) < 1e-8

    def test_all_zero_rejected(self):
        g = GridSpec.create(32, 1.0)
        with pytest.raises(ValueError, match="below floor everywhere"):
            pw.quantum_potential(pw.ComplexField(g, np.zeros(32)))


class TestRegionMeasure:
    def test_full_domain(self):
        g = GridSpec.create(64, 2 * np.pi)
        psi = pw.uniform_field(g)
        full = pw.Region.from_intervals([(0.0, 2 * np.pi)], g.lengths)
        assert pw.measure_of_region(psi, full) == pytest.approx(1.0, abs=1e-12)

    def test_half_circle_uniform(self):
        g = GridSpec.create(64, 2 * np.pi)
        psi = pw.uniform_field(g)
        half = pw.Region.from_intervals([(0.0, np.pi)], g.lengths)
        assert pw.measure_of_region(psi, half) == pytest.approx(0.5, abs=1e-12)

    def test_gaussian_against_quadrature(self):
        s = 1.3
        g = GridSpec.create(512, 30.0)
        psi = pw.gaussian_packet(g, 15.0, s)
        omega = pw.Region.from_intervals([(15.0 - s, 15.0 + s)], g.lengths)
        got = pw.measure_of_region(psi, omega)
        dens = lambda x: np.exp(-(x - 15.0) ** 2 / (2 * s ** 2)) / np.sqrt(2 * np.pi * s ** 2)
        expected, _ = quad(dens, 15.0 - s, 15.0 + s, epsabs=1e-12)
        assert got == pytest.approx(expected, abs=1e-6)

    def test_additive_and_monotone(self):
        g = GridSpec.create(128, 10.0)
        psi = smooth_random_field(g, seed=5)
        a = pw.Region.from_intervals([(1.0, 3.7)], g.lengths)
        b = pw.Region.from_intervals([(3.7, 6.2)], g.lengths)
        ab = pw.Region.from_intervals([(1.0, 6.2)], g.lengths)
        ma, mb, mab = (pw.measure_of_region(psi, r) for r in (a, b, ab))
        assert ma + mb == pytest.approx(mab, abs=1e-12)
        assert ma <= mab and mb <= mab

    def test_empty_region(self):
        g = GridSpec.create(64, 1.0)
        psi = pw.uniform_field(g)
        empty = pw.Region.from_intervals([(0.3, 0.3)], g.lengths)
        assert pw.measure_of_region(psi, empty) == 0.0

    def test_wraparound_interval(self):
        g = GridSpec.create(64, 2 * np.pi)
        psi = pw.uniform_field(g)
        wrap = pw.Region.from_intervals([(5.5, 1.0)], g.lengths)   # crosses 0
        expected = (2 * np.pi - 5.5 + 1.0) / (2 * np.pi)
        assert pw.measure_of_region(psi, wrap) == pytest.approx(expected, abs=1e-12)

    def test_contains_wraparound(self):
        r = pw.Region.from_intervals([(5.5, 1.0)], (2 * np.pi,))
        assert r.contains(np.array([6.0]))
        assert r.contains(np.array([0.5]))
        assert not r.contains(np.array([3.0]))


class TestPotentialSpec:
    def test_zero_and_harmonic(self):
        g = GridSpec.create(32, 4.0)
        assert np.all(pw.PotentialSpec.zero().evaluate(g) == 0.0)
        v = pw.PotentialSpec.harmonic(2.0, 2.0).evaluate(g)
        x = g.axis_coords(0)
        d = x - 2.0
        d -= 4.0 * np.round(d / 4.0)
        assert np.allclose(v, 0.5 * 4.0 * d ** 2)

    def test_barrier_with_apertures(self):
        g = GridSpec.create((32, 32), (8.0, 8.0))
        v = pw.PotentialSpec.barrier(0, 3.0, 4.0, 50.0, aperture_axis=1,
                                     apertures=[(2.0, 3.0)]).evaluate(g)
        X, Y = g.meshes()
        inside = (X >= 3.0) & (X <= 4.0)
        hole = inside & (Y >= 2.0) & (Y <= 3.0)
        assert np.all(v[hole] == 0.0)
        assert np.all(v[inside & ~hole] == 50.0)
        assert np.all(v[~inside] == 0.0)

    def test_tabulated_validation(self):
        g = GridSpec.create(32, 1.0)
        with pytest.raises(ValueError):
            pw.PotentialSpec.tabulated(np.ones(16)).evaluate(g)
        with pytest.raises(ValueError, match="bounded"):
            pw.PotentialSpec.tabulated(np.full(32, np.inf)).evaluate(g)


class TestFieldDump:
    def test_round_trip(self, tmp_path):
        g = GridSpec.create((16, 8), (1.0, 2.0))
        psi = smooth_random_field(g, seed=1)
        path = tmp_path / "field.pwf"
        pw.save_field(psi, path)
        header = path.read_text().splitlines()[0]
        assert header == "PWFIELD v1 dims=2 points=16,8 lengths=1.0,2.0"
        back = pw.load_field(path)
        assert back.grid.points_per_dim == (16, 8)
        assert np.array_equal(back.values, psi.values)

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "bad.pwf"
        path.write_text("PWFIELD v1 dims=1 points=16 lengths=1.0\n0.0,0.0\n")
        with pytest.raises(ValueError, match="truncated"):
            pw.load_field(path)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.pwf"
        path.write_text("NOTAFIELD\n")
        with pytest.raises(ValueError, match="PWFIELD"):
            pw.load_field(path)


class TestComplexField:
    def test_normalization_tolerance(self):
        g = GridSpec.create(64, 3.0)
        psi = smooth_random_field(g, seed=2)
        assert abs(psi.norm_sq() - 1.0) < 1e-12

    def test_immutable(self):
        g = GridSpec.create(32, 1.0)
        psi = pw.uniform_field(g)
        with pytest.raises((ValueError, AttributeError)):
            psi.values[0] = 5.0

    def test_value_count_checked(self):
        g = GridSpec.create(32, 1.0)
        with pytest.raises(ValueError, match="value count"):
            pw.ComplexField(g, np.ones(31))

    def test_grid_norm(self):
        g = GridSpec.create(64, 2.0)
        assert grid_norm(np.ones(64), g) == pytest.approx(np.sqrt(2.0))
