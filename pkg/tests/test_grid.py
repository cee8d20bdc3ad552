import numpy as np
import pytest

from ddot.grid import DensityVector, build_grid, discretize_gaussian, integrate


def test_build_grid_three_cells():
    g = build_grid(0, 3, 3)
    assert g.h == 1.0
    np.testing.assert_allclose(g.centers, [0.5, 1.5, 2.5])


def test_build_grid_reference_resolution():
    g = build_grid(0, 3, 150)
    assert g.h == pytest.approx(0.02)
    assert g.measure == pytest.approx(3.0)
    assert np.all(np.diff(g.centers) > 0)


def test_build_grid_two_cells():
    g = build_grid(0, 1, 2)
    np.testing.assert_allclose(g.centers, [0.25, 0.75])


@pytest.mark.parametrize("args", [
    (0, 3, 1),
    (3, 0, 10),
    (0, 0, 10),
    (np.nan, 1, 10),
    (0, np.inf, 10),
])
def test_build_grid_rejects_bad_input(args):
    with pytest.raises(ValueError):
        build_grid(*args)


def test_integrate_constant_measures_interval():
    g = build_grid(0, 3, 3)
    assert integrate(g, np.ones(3)) == pytest.approx(3.0)


def test_integrate_density_has_unit_mass():
    g = build_grid(0, 3, 150)
    rho = discretize_gaussian(g, 0.7, 0.03)
    assert integrate(g, rho.values) == pytest.approx(1.0, abs=1e-12)


def test_integrate_midpoint_exact_for_linear():
    g = build_grid(0, 1, 2)
    assert integrate(g, g.centers) == pytest.approx(0.5)


def test_integrate_exact_for_affine():
    g = build_grid(-2.0, 5.0, 37)
    rng = np.random.default_rng(0)
    for _ in range(5):
        a, b = rng.uniform(-3, 3, size=2)
        exact = a * g.measure + b * (g.x_max**2 - g.x_min**2) / 2
        assert integrate(g, a + b * g.centers) == pytest.approx(exact)


def test_integrate_length_mismatch():
    g = build_grid(0, 1, 4)
    with pytest.raises(ValueError):
        integrate(g, np.ones(5))


def test_gaussian_peaks_at_nearest_cell():
    g = build_grid(0, 3, 150)
    rho = discretize_gaussian(g, 0.7, 0.03)
    assert rho.mass == pytest.approx(1.0, abs=1e-12)
    peak = g.centers[np.argmax(rho.values)]
    assert abs(peak - 0.7) <= g.h / 2
    # unimodal: increasing up to the peak, decreasing afterwards
    i = int(np.argmax(rho.values))
    assert np.all(np.diff(rho.values[: i + 1]) >= 0)
    assert np.all(np.diff(rho.values[i:]) <= 0)


def test_gaussian_second_example_peak():
    g = build_grid(0, 3, 150)
    rho = discretize_gaussian(g, 2.1, 0.05)
    assert rho.mass == pytest.approx(1.0, abs=1e-12)
    assert abs(g.centers[np.argmax(rho.values)] - 2.1) <= g.h / 2


def test_gaussian_symmetric_grid():
    g = build_grid(-1, 1, 10)
    rho = discretize_gaussian(g, 0.0, 0.2)
    np.testing.assert_allclose(rho.values, rho.values[::-1], rtol=1e-14)


def test_gaussian_rejects_bad_variance():
    g = build_grid(0, 3, 10)
    with pytest.raises(ValueError):
        discretize_gaussian(g, 1.0, 0.0)
    with pytest.raises(ValueError):
        discretize_gaussian(g, 1.0, -0.5)


def test_gaussian_rejects_off_grid_mass():
    g = build_grid(0, 3, 10)
    with pytest.raises(ValueError):
        discretize_gaussian(g, 100.0, 0.01)


def test_gaussian_deterministic():
    g = build_grid(0, 3, 150)
    a = discretize_gaussian(g, 0.7, 0.03)
    b = discretize_gaussian(g, 0.7, 0.03)
    assert np.array_equal(a.values, b.values)


def test_gaussian_refinement_consistency():
    # total-variation distance between consecutive refinements shrinks
    tvs = []
    for M in (50, 100, 200):
        g = build_grid(0, 3, M)
        g2 = build_grid(0, 3, 2 * M)
        coarse = np.repeat(discretize_gaussian(g, 1.3, 0.04).values, 2)
        fine = discretize_gaussian(g2, 1.3, 0.04).values
        tvs.append(0.5 * g2.h * np.abs(coarse - fine).sum())
    assert tvs[0] > tvs[1] > tvs[2]


def test_density_vector_validation():
    g = build_grid(0, 1, 4)
    with pytest.raises(ValueError):
        DensityVector(grid=g, values=np.array([2.0, 1.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        DensityVector(grid=g, values=np.array([-1.0, 3.0, 1.0, 1.0]))
    DensityVector(grid=g, values=np.full(4, 1.0))  # mass 1 exactly
