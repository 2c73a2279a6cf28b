import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from ovhardy.field_core import GridSpec, SampledField, ScaleGrid, make_field
from ovhardy.kernels import (
    BESSEL_POISSON,
    DPOISSON,
    G_KERNEL,
    POISSON,
    DegenerateSymbolError,
    KernelSymbol,
    bessel_poisson_symbol,
    build_quadruple,
    convolve,
    cz_kernel_check,
    derivative_symbol,
    dpoisson_symbol,
    g_symbol,
    gaussian_laplacian,
    poisson_generator,
    poisson_kernel,
    poisson_symbol,
    quadruple_defect,
    riesz_poisson_symbol,
)

from conftest import random_field

radii = st.floats(min_value=0.0, max_value=20.0)
scales = st.floats(min_value=1e-3, max_value=1.0)


def periodized_poisson(x, eps, L):
    """Sum of the 1-D Poisson kernel over all translates by multiples of L, in closed form."""
    a = 2 * np.pi * eps / L
    return np.sinh(a) / (L * (np.cosh(a) - np.cos(2 * np.pi * x / L)))


def test_symbol_values():
    assert poisson_symbol(np.zeros(1), 1.0) == 1.0
    assert math.isclose(float(g_symbol(np.array([1.0]))), 0.5)
    assert math.isclose(float(g_symbol(np.array([0.6, 0.8]))), 0.5)
    xi = np.array([0.3, 0.4])
    assert math.isclose(float(riesz_poisson_symbol(xi, 0.2)), 0.5 * math.exp(-2 * math.pi * 0.2 * 0.5))
    assert math.isclose(float(bessel_poisson_symbol(xi, 1.0)), math.sqrt(1.25) * math.exp(-math.pi))


@given(radii, scales)
def test_dpoisson_squared_modulus(r, eps):
    value = float(dpoisson_symbol(np.array([r]), eps))
    assert math.isclose(value**2, 4 * math.pi**2 * r**2 * math.exp(-4 * math.pi * eps * r), rel_tol=1e-12, abs_tol=1e-300)


@given(radii, st.floats(min_value=0.01, max_value=0.9))
def test_dpoisson_is_scale_derivative(r, eps):
    delta = 1e-3
    xi = np.array([r])
    diff = (poisson_symbol(xi, eps + delta) - poisson_symbol(xi, eps - delta)) / (2 * delta)
    assert abs(float(diff) - float(dpoisson_symbol(xi, eps))) < 3 * delta**2 * max(1.0, (2 * math.pi * r) ** 3)


@given(radii, scales, scales)
def test_poisson_semigroup(r, e1, e2):
    xi = np.array([r, 0.0])
    product = poisson_symbol(xi, e1) * poisson_symbol(xi, e2)
    assert abs(float(product - poisson_symbol(xi, e1 + e2))) < 1e-10


@pytest.mark.parametrize("r", [0.0, 0.5, 1.0, 3.7])
def test_g_symbol_is_laplace_average_of_poisson(r):
    value, _ = integrate.quad(lambda e: 2 * math.pi * math.exp(-2 * math.pi * e) * math.exp(-2 * math.pi * e * r), 0, np.inf)
    assert abs(value - float(g_symbol(np.array([r])))) < 1e-8


@pytest.mark.parametrize("d", [1, 2])
def test_poisson_kernel_has_unit_mass(d):
    eps = 0.3
    if d == 1:
        mass, _ = integrate.quad(lambda x: float(poisson_kernel(np.array([x]), eps, 1)), -np.inf, np.inf)
    else:
        mass, _ = integrate.quad(lambda r: 2 * math.pi * r * float(poisson_kernel(np.array([r, 0.0]), eps, 2)), 0, np.inf)
    assert abs(mass - 1) < 1e-8


@pytest.mark.parametrize("xi", [0.25, 1.0, 2.0])
def test_poisson_kernel_transform_matches_symbol_in_2d(xi):
    eps = 0.5
    integrand = lambda r: 2 * math.pi * r * float(poisson_kernel(np.array([r, 0.0]), eps, 2)) * special.j0(2 * math.pi * xi * r)  # noqa: E731
    value, _ = integrate.quad(integrand, 0, 200, limit=2000)
    tail_bound = 1.0 / 200  # |P_eps| r integrated beyond 200
    assert abs(value - math.exp(-2 * math.pi * eps * xi)) < tail_bound


def test_periodized_kernel_matches_image_sum():
    x, eps, L = np.array([0.0, 1.3, 7.9]), 0.5, 16.0
    M = 20000
    images = sum(poisson_kernel((x + m * L)[:, None], eps, 1) for m in range(-M, M + 1))
    tail = 2 * eps / (np.pi * L**2) * (1 / M - 1 / (2 * M**2))  # sum over |m| > M of eps / (pi m^2 L^2)
    assert np.abs(images + tail - periodized_poisson(x, eps, L)).max() < 1e-11


# The Riemann sum of the periodized kernel is spectrally accurate once eps / h is large.
@pytest.mark.parametrize("eps", [0.25, 0.5, 1.0])
def test_poisson_convolution_matches_spatial_quadrature(eps):
    grid = GridSpec(1, 1, 32.0, 512)
    f = make_field({"kind": "scalar-function-lift", "function": "gaussian", "sigma": 1.0}, grid)
    x = grid.axis()
    kernel = periodized_poisson(x[:, None] - x[None, :], eps, grid.L)
    direct = kernel @ f.samples[:, 0, 0] * grid.h
    spectral = convolve(f, POISSON, eps).samples[:, 0, 0]
    assert np.abs(spectral - direct).max() < 1e-6 * np.abs(direct).max()


def test_convolution_of_constants():
    grid = GridSpec(2, 2, 8.0, 32)
    c = make_field({"kind": "constant", "matrix": [[1, 2j], [0, 3]]}, grid)
    assert np.allclose(convolve(c, POISSON, 0.3).samples, c.samples, atol=1e-13)
    assert np.abs(convolve(c, DPOISSON, 0.3).samples).max() < 1e-12


@given(st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
def test_convolution_is_linear(seed, a, b):
    grid = GridSpec(1, 2, 8.0, 64)
    f, g = random_field(grid, seed), random_field(grid, seed + 7)
    lhs = convolve(f * a + g * b, BESSEL_POISSON, 0.4).samples
    rhs = a * convolve(f, BESSEL_POISSON, 0.4).samples + b * convolve(g, BESSEL_POISSON, 0.4).samples
    assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(rhs).max())


def test_scalar_symbols_commute_with_matrix_coefficients():
    grid = GridSpec(1, 2, 8.0, 64)
    f = random_field(grid, 3)
    m = np.array([[2.0, 1j], [0.5, -1.0]])
    left = convolve(SampledField(grid, m @ f.samples), G_KERNEL).samples
    assert np.allclose(left, m @ convolve(f, G_KERNEL).samples, atol=1e-12)


def test_poisson_generator_average_is_one_quarter():
    quad = build_quadruple(poisson_generator(), "continuous")
    xi = np.array([[0.7]])
    # Psi = Phi / c with c = int_0^inf (2 pi u)^2 e^{-4 pi u} du / u = 1/4
    assert math.isclose(float(np.real(quad.Psi(xi) / quad.Phi(xi))[0]), 4.0, rel_tol=1e-9)


def test_poisson_quadruple_with_poisson_low_pass_has_closed_form_psi():
    quad = build_quadruple(poisson_generator(), "continuous", phi=POISSON)
    r = np.linspace(0, 3, 31)[:, None]
    expected = (1 + 4 * np.pi * r[:, 0]) * np.exp(-2 * np.pi * r[:, 0])
    assert np.abs(np.real(quad.psi(r)) - expected).max() < 1e-9


@pytest.mark.parametrize(
    "generator,variant,bound",
    [
        (poisson_generator, "continuous", 1e-9),
        (poisson_generator, "discrete", 1e-12),
        (gaussian_laplacian, "continuous", 1e-12),
        (gaussian_laplacian, "discrete", 1e-12),
    ],
)
def test_quadruple_defect_on_band(generator, variant, bound):
    grid = GridSpec(1, 1, 32.0, 1024)
    quad = build_quadruple(generator(), variant, grid=grid)
    xi = np.unique(grid.frequency_norms())[:, None]
    defect = np.abs(quadruple_defect(quad, xi)).max()
    assert defect < 1e-6
    assert defect < bound  # frozen from the first run of the adaptive-quadrature oracle
    assert quad.metadata["defect"] < 1e-6
    assert quad.metadata["sobolev_ok"]


def test_quadruple_at_origin_reduces_to_low_pass():
    quad = build_quadruple(gaussian_laplacian(), "continuous")
    zero = np.zeros((1, 1))
    value = complex((quad.phi(zero) * np.conj(quad.psi(zero)))[0])
    assert abs(value - 1) < 1e-12


def test_quadruple_in_two_dimensions():
    grid = GridSpec(2, 1, 8.0, 32)
    quad = build_quadruple(gaussian_laplacian(), "continuous", grid=grid)
    assert quad.metadata["defect"] < 1e-6
    table = quad.to_json_dict(grid)
    assert table["metadata"]["variant"] == "continuous"
    assert len(table["xi_grid"]) == 17


def test_degenerate_generator_is_rejected():
    def along_first_axis(xi, eps):
        scaled = xi if eps is None else eps * xi
        return (2 * np.pi * scaled[..., 0]) ** 2 * np.exp(-np.pi * np.sum(scaled**2, axis=-1))

    generator = KernelSymbol(along_first_axis, "axis", radial=False)
    with pytest.raises(DegenerateSymbolError, match="degenerate"):
        build_quadruple(generator, "continuous", grid=GridSpec(2, 1, 4.0, 16))
    with pytest.raises(ValueError):
        build_quadruple(POISSON, "continuous")


def test_derivative_symbol():
    base = gaussian_laplacian()
    d1 = derivative_symbol(base, (1,))
    xi = np.array([[0.5]])
    assert np.allclose(d1(xi, 0.5), 2j * np.pi * 0.25 * base(xi, 0.5))
    assert not d1.radial and derivative_symbol(base, (0,)).radial


def gaussian_laplacian_kernel(s, eps, d):
    r2 = np.sum((s / eps) ** 2, axis=-1)
    return (2 * np.pi * d - 4 * np.pi**2 * r2) * np.exp(-np.pi * r2) / eps**d


def test_cz_check_on_gaussian_laplacian_kernel():
    grid = GridSpec(1, 1, 32.0, 1024)
    scales = ScaleGrid.log_uniform(32, 4 * grid.h)
    coords = grid.coordinates()
    samples = np.stack([gaussian_laplacian_kernel(coords, e, 1) for e in scales.nodes], axis=-1)
    report = cz_kernel_check(samples, grid, h_weights=scales.weights)
    assert report.passed
    # sup_xi of (int |Phi^(eps xi)|^2 d eps / eps)^{1/2} is at most the full-line average
    c = integrate.quad(lambda u: ((2 * np.pi * u) ** 2 * np.exp(-np.pi * u**2)) ** 2 / u, 0, np.inf)[0]
    assert report.fourier_bound <= math.sqrt(c) * 1.05
    assert all(math.isfinite(v) for v in (report.size_constant, report.lipschitz_constant))


def test_cz_check_zero_and_slow_decay():
    grid = GridSpec(1, 1, 32.0, 256)
    zero = cz_kernel_check(np.zeros(grid.shape + (3,)), grid)
    assert (zero.fourier_bound, zero.size_constant, zero.lipschitz_constant) == (0.0, 0.0, 0.0)
    assert zero.passed
    radius = np.abs(grid.axis())
    slow = cz_kernel_check(((1 + radius) ** -0.5)[:, None], grid)
    assert slow.size_constant > slow.caps["size"]
    assert not slow.passed
    with pytest.raises(ValueError):
        cz_kernel_check(np.zeros((0,)), grid)
