"""Fourier symbols, spectral convolution, resolutions of unity and kernel condition checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.integrate import quad_vec

from .field_core import GridSpec, SampledField, SpectralField, forward_transform, inverse_transform

__all__ = [
    "KernelSymbol",
    "TestQuadruple",
    "ConditionReport",
    "DegenerateSymbolError",
    "ball_volume",
    "poisson_symbol",
    "dpoisson_symbol",
    "riesz_poisson_symbol",
    "bessel_poisson_symbol",
    "g_symbol",
    "POISSON",
    "DPOISSON",
    "RIESZ_POISSON",
    "BESSEL_POISSON",
    "G_KERNEL",
    "poisson_generator",
    "gaussian_laplacian",
    "derivative_symbol",
    "poisson_kernel",
    "convolve",
    "apply_symbol",
    "build_quadruple",
    "quadruple_defect",
    "cz_kernel_check",
]

Evaluator = Callable[[np.ndarray, "float | None"], np.ndarray]


def ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _radius(xi: Any) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        return np.abs(xi)
    return np.linalg.norm(xi, axis=-1)


def poisson_symbol(xi: Any, eps: float = 1.0) -> np.ndarray:
    return np.exp(-2 * np.pi * eps * _radius(xi))


def dpoisson_symbol(xi: Any, eps: float = 1.0) -> np.ndarray:
    """Symbol of the scale derivative of the Poisson semigroup."""
    r = _radius(xi)
    return -2 * np.pi * r * np.exp(-2 * np.pi * eps * r)


def riesz_poisson_symbol(xi: Any, eps: float = 1.0) -> np.ndarray:
    r = _radius(xi)
    return r * np.exp(-2 * np.pi * eps * r)


def bessel_poisson_symbol(xi: Any, eps: float = 1.0) -> np.ndarray:
    r = _radius(xi)
    return np.sqrt(1 + r**2) * np.exp(-2 * np.pi * eps * r)


def g_symbol(xi: Any, eps: float | None = None) -> np.ndarray:
    """``(1 + |xi|)^{-1}``, the Laplace transform of the Poisson symbol against ``2 pi e^{-2 pi eps}``."""
    return 1.0 / (1.0 + _radius(xi))


@dataclass(frozen=True)
class KernelSymbol:
    """Scalar Fourier multiplier ``(xi, eps) -> value``; ``xi`` has a trailing axis of length d.

    ``radial`` marks symbols depending on ``|xi|`` only, which enables
    tabulation over distinct radii.
    """

    evaluator: Evaluator
    label: str = "custom"
    radial: bool = False

    def __call__(self, xi: Any, eps: float | None = None) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(xi, dtype=float), eps))


def _with_default_eps(func: Callable[[Any, float], np.ndarray]) -> Evaluator:
    return lambda xi, eps: func(xi, 1.0 if eps is None else eps)


POISSON = KernelSymbol(_with_default_eps(poisson_symbol), "poisson", True)
DPOISSON = KernelSymbol(_with_default_eps(dpoisson_symbol), "dpoisson", True)
RIESZ_POISSON = KernelSymbol(_with_default_eps(riesz_poisson_symbol), "riesz-of-poisson", True)
BESSEL_POISSON = KernelSymbol(_with_default_eps(bessel_poisson_symbol), "bessel-of-poisson", True)
G_KERNEL = KernelSymbol(g_symbol, "G", True)


def dilated(base: Callable[[np.ndarray], np.ndarray], label: str, radial: bool) -> KernelSymbol:
    """Scale-free symbol evaluated as ``base(eps * xi)``."""

    def evaluator(xi: np.ndarray, eps: float | None) -> np.ndarray:
        return base(xi if eps is None else eps * xi)

    return KernelSymbol(evaluator, label, radial)


def poisson_generator() -> KernelSymbol:
    """``2 pi |xi| e^{-2 pi |xi|}``: minus ``eps`` times the Poisson scale derivative."""
    return dilated(lambda xi: -dpoisson_symbol(xi, 1.0), "poisson-generator", True)


def gaussian_laplacian() -> KernelSymbol:
    """``(2 pi |xi|)^2 e^{-pi |xi|^2}``, the symbol of minus the Laplacian of a Gaussian."""

    def base(xi: np.ndarray) -> np.ndarray:
        r = _radius(xi)
        return (2 * np.pi * r) ** 2 * np.exp(-np.pi * r**2)

    return dilated(base, "gaussian-laplacian", True)


def derivative_symbol(kernel: KernelSymbol, multi_index: tuple[int, ...]) -> KernelSymbol:
    """Symbol of ``D^m Phi`` for a scale-free ``Phi``: ``(2 pi i xi)^m Phi^(xi)``."""

    def evaluator(xi: np.ndarray, eps: float | None) -> np.ndarray:
        scaled = xi if eps is None else eps * xi
        factor = np.ones(scaled.shape[:-1], dtype=np.complex128)
        for axis, order in enumerate(multi_index):
            factor = factor * (2j * np.pi * scaled[..., axis]) ** order
        return factor * kernel(xi, eps)

    label = f"D{''.join(map(str, multi_index))}-{kernel.label}"
    return KernelSymbol(evaluator, label, radial=not any(multi_index) and kernel.radial)


def poisson_kernel(s: np.ndarray, eps: float, d: int) -> np.ndarray:
    """Space-domain Poisson kernel ``c eps / (|s|^2 + eps^2)^{(d+1)/2}`` with unit mass.

    ``s`` has a trailing axis of length ``d``.
    """
    const = math.gamma((d + 1) / 2) / math.pi ** ((d + 1) / 2)
    r2 = np.sum(np.asarray(s, dtype=float) ** 2, axis=-1)
    return const * eps / (r2 + eps**2) ** ((d + 1) / 2)


def evaluate_on_grid(kernel: KernelSymbol, grid: GridSpec, eps: float | None = None) -> np.ndarray:
    """Symbol values at the grid frequencies (FFT order), radial symbols tabulated by radius."""
    if kernel.radial:
        radius = grid.frequency_norms()
        unique, inverse = np.unique(radius, return_inverse=True)
        probe = np.zeros((unique.size, grid.d))
        probe[:, 0] = unique
        return np.asarray(kernel(probe, eps))[inverse].reshape(radius.shape)
    return np.asarray(kernel(grid.frequencies(), eps))


def apply_symbol(coefficients: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    """Multiply spectral coefficients (grid shape + matrix axes) by a scalar symbol."""
    return coefficients * symbol[..., None, None]


def convolve(f: SampledField, kernel: KernelSymbol, eps: float | None = None) -> SampledField:
    F = forward_transform(f)
    symbol = evaluate_on_grid(kernel, f.grid, eps)
    return inverse_transform(SpectralField(f.grid, apply_symbol(F.coefficients, symbol)))


# ----------------------------------------------------------------------------
# Resolutions of unity


class DegenerateSymbolError(ValueError):
    """The generator vanishes (in the averaged sense) at some frequency of the band."""


_LOG_NODES = 513  # odd, so eps = 1 is the middle node
_LOG_SPAN = math.log(1e6)
_DYADIC_RANGE = np.arange(-60, 61)


def _log_trapezoid() -> tuple[np.ndarray, np.ndarray]:
    u = np.linspace(-_LOG_SPAN, _LOG_SPAN, _LOG_NODES)
    w = np.full(_LOG_NODES, u[1] - u[0])
    w[[0, -1]] *= 0.5
    return np.exp(u), w


def _upper_gauss_legendre(panels: int = 96, order: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes for ``int_0^{log 1e6} du`` (``eps >= 1``)."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, _LOG_SPAN, panels + 1)
    half = np.diff(edges)[:, None] / 2
    mid = (edges[:-1] + edges[1:])[:, None] / 2
    return np.exp((mid + half * x).ravel()), (half * w).ravel()


def _directional_sum(
    kernel: KernelSymbol, xi: np.ndarray, scales: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """``sum_k weights_k |Phi^(scales_k xi)|^2`` for an array of frequency vectors."""
    total = np.zeros(xi.shape[:-1])
    for scale, weight in zip(scales, weights):
        total += weight * np.abs(kernel(scale * xi)) ** 2
    return total


def _tabulated(func: Callable[[np.ndarray], np.ndarray], radial: bool) -> Callable[[np.ndarray], np.ndarray]:
    """Evaluate ``func`` on distinct radii only when the symbol is radial."""
    if not radial:
        return func

    def wrapper(xi: np.ndarray) -> np.ndarray:
        radius = _radius(xi)
        unique, inverse = np.unique(radius, return_inverse=True)
        probe = np.zeros((unique.size, xi.shape[-1] if xi.ndim else 1))
        probe[:, 0] = unique
        return func(probe)[inverse].reshape(radius.shape)

    return wrapper


@dataclass(frozen=True)
class TestQuadruple:
    """Symbols ``(Phi, Psi, phi, psi)`` forming a resolution of unity.

    ``continuous``: ``phi psi* + int_0^1 Phi(eps xi) Psi(eps xi)* d eps/eps = 1``.
    ``discrete``: ``phi psi* + sum_{j>=1} Phi(2^-j xi) Psi(2^-j xi)* = 1``.
    """

    __test__ = False  # not a pytest test class

    Phi: KernelSymbol
    Psi: KernelSymbol
    phi: KernelSymbol
    psi: KernelSymbol
    variant: str
    beta: float
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_json_dict(self, grid: GridSpec) -> dict[str, Any]:
        """Sampled symbol tables along the first frequency axis."""
        xi = np.zeros((grid.N // 2 + 1, grid.d))
        xi[:, 0] = np.arange(grid.N // 2 + 1) / grid.L
        table = {
            name: [[float(v.real), float(v.imag)] for v in np.asarray(sym(xi), dtype=complex)]
            for name, sym in (("Phi", self.Phi), ("Psi", self.Psi), ("phi", self.phi), ("psi", self.psi))
        }
        return {
            "xi_grid": xi[:, 0].tolist(),
            "values": table,
            "metadata": {"variant": self.variant, "beta": self.beta, "generator": self.Phi.label, **self.metadata},
        }


def build_quadruple(
    Phi: KernelSymbol,
    variant: str = "continuous",
    grid: GridSpec | None = None,
    beta: float | None = None,
    phi: KernelSymbol | None = None,
    sobolev_cap: float = 1e12,
) -> TestQuadruple:
    """Complete a vanishing-mean generator ``Phi`` into a resolution of unity.

    ``Psi = Phi / c`` where ``c`` averages ``|Phi|^2`` over all dilations, the
    remainder ``m = 1 - int_0^1 Phi Psi*`` is computed as the complementary
    integral over ``eps >= 1`` to avoid cancellation, and ``psi = m / phi*``.
    ``phi`` defaults to ``(1 + |xi|^2)^{-beta}`` with ``beta = 2(d+1)``.
    When ``grid`` is given, degeneracy is checked on its frequencies and the
    defect and a Sobolev surrogate norm of ``psi`` are recorded in ``metadata``.
    """
    if variant not in ("continuous", "discrete"):
        raise ValueError(f"unknown quadruple variant {variant!r}")
    d = grid.d if grid is not None else 1
    if abs(complex(np.asarray(Phi(np.zeros(d))))) > 1e-14:
        raise ValueError("generator must vanish at the origin")
    beta = float(2 * (d + 1) if beta is None else beta)

    if variant == "continuous":
        trap_scales, trap_weights = _log_trapezoid()
        up_scales, up_weights = _upper_gauss_legendre()

        if Phi.radial:
            # dilation invariance makes the average constant off the origin
            probe = np.zeros((1, d))
            probe[0, 0] = 1.0
            constant = float(_directional_sum(Phi, probe, trap_scales, trap_weights)[0])

            def averaged(xi: np.ndarray) -> np.ndarray:
                return np.where(_radius(xi) > 0, constant, 0.0)

        else:

            def averaged(xi: np.ndarray) -> np.ndarray:
                return _directional_sum(Phi, _unit(xi), trap_scales, trap_weights)

        def tail(xi: np.ndarray) -> np.ndarray:
            return _directional_sum(Phi, xi, up_scales, up_weights)

    else:
        dyadic = 2.0 ** _DYADIC_RANGE.astype(float)
        upper = dyadic[_DYADIC_RANGE >= 0]

        def averaged(xi: np.ndarray) -> np.ndarray:
            return _directional_sum(Phi, xi, dyadic, np.ones_like(dyadic))

        def tail(xi: np.ndarray) -> np.ndarray:
            return _directional_sum(Phi, xi, upper, np.ones_like(upper))

    if variant == "discrete":
        averaged = _tabulated(averaged, Phi.radial)
    tail = _tabulated(tail, Phi.radial)

    def psi_big(xi: np.ndarray, eps: float | None) -> np.ndarray:
        scaled = xi if eps is None else eps * xi
        c = averaged(scaled)
        value = np.asarray(Phi(scaled), dtype=np.complex128)
        return np.divide(value, c, out=np.zeros_like(value), where=c > 0)

    def remainder(xi: np.ndarray) -> np.ndarray:
        c = averaged(xi)
        t = tail(xi)
        return np.divide(t, c, out=np.ones_like(t), where=c > 0)

    if phi is None:
        phi = dilated(lambda xi: (1 + _radius(xi) ** 2) ** -beta, "bessel-decay", True)
    phi_symbol = phi

    def psi_small(xi: np.ndarray, eps: float | None) -> np.ndarray:
        scaled = xi if eps is None else eps * xi
        low = np.conj(np.asarray(phi_symbol(scaled), dtype=np.complex128))
        return remainder(scaled) / low

    radial = Phi.radial and phi.radial
    quad = TestQuadruple(
        Phi=Phi,
        Psi=KernelSymbol(psi_big, f"Psi[{Phi.label}]", Phi.radial),
        phi=phi,
        psi=KernelSymbol(psi_small, f"psi[{Phi.label}]", radial),
        variant=variant,
        beta=beta,
    )
    if grid is not None:
        xi = grid.frequencies().reshape(-1, grid.d)
        nonzero = np.linalg.norm(xi, axis=-1) > 0
        c = averaged(xi[nonzero])
        if np.any(c < 1e-10):
            bad = xi[nonzero][int(np.argmin(c))]
            raise DegenerateSymbolError(f"generator is degenerate at xi = {bad.tolist()} (c = {c.min():.3e})")
        sigma = d / 2 + 0.5
        psi_values = quad.psi(xi)
        surrogate = float(
            np.sum((1 + np.sum(xi**2, axis=-1)) ** sigma * np.abs(psi_values) ** 2) / grid.L**d
        )
        quad.metadata.update(
            {
                "defect": float(np.max(np.abs(quadruple_defect(quad, xi)))),
                "sobolev_surrogate": surrogate,
                "sobolev_cap": sobolev_cap,
                "sobolev_ok": bool(surrogate < sobolev_cap),
            }
        )
    return quad


def _unit(xi: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(xi, axis=-1, keepdims=True)
    return np.divide(xi, norm, out=np.zeros_like(xi), where=norm > 0)


def quadruple_defect(quad: TestQuadruple, xi: np.ndarray) -> np.ndarray:
    """``1 - (phi psi* + partial reproducing integral)`` by an independent adaptive quadrature.

    ``xi`` has shape ``(M, d)``.  The continuous variant integrates in
    ``u = log eps`` over ``[-60, 0]`` with ``scipy.integrate.quad_vec``; the
    discrete variant sums dyadic terms until they underflow.
    """
    xi = np.asarray(xi, dtype=float).reshape(-1, np.shape(xi)[-1])
    radial = quad.Phi.radial and quad.Psi.radial
    if radial:
        radius = np.linalg.norm(xi, axis=-1)
        unique, inverse = np.unique(radius, return_inverse=True)
        points = np.zeros((unique.size, xi.shape[1]))
        points[:, 0] = unique
    else:
        points, inverse = xi, np.arange(xi.shape[0])

    def integrand(u: float) -> np.ndarray:
        eps = math.exp(u)
        return np.real(quad.Phi(points, eps) * np.conj(quad.Psi(points, eps)))

    if quad.variant == "continuous":
        partial, _ = quad_vec(integrand, -60.0, 0.0, epsabs=1e-14, epsrel=1e-12, limit=2000)
    else:
        partial = np.zeros(points.shape[0])
        for j in range(1, 200):
            term = np.real(quad.Phi(points, 2.0**-j) * np.conj(quad.Psi(points, 2.0**-j)))
            partial += term
            if j > 60 and np.all(np.abs(term) < 1e-300):
                break
    low = np.real(quad.phi(points) * np.conj(quad.psi(points)))
    return (1.0 - (low + partial))[inverse]


# ----------------------------------------------------------------------------
# Calderon-Zygmund kernel conditions


@dataclass(frozen=True)
class ConditionReport:
    """Empirical constants of the three kernel conditions against their caps."""

    fourier_bound: float
    size_constant: float
    lipschitz_constant: float
    rho: float
    gamma: float
    caps: dict[str, float]

    @property
    def passed(self) -> bool:
        return (
            self.fourier_bound <= self.caps["fourier"]
            and self.size_constant <= self.caps["size"]
            and self.lipschitz_constant <= self.caps["lipschitz"]
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "fourier_bound": self.fourier_bound,
            "size_constant": self.size_constant,
            "lipschitz_constant": self.lipschitz_constant,
            "rho": self.rho,
            "gamma": self.gamma,
            "caps": dict(self.caps),
            "passed": self.passed,
        }


def cz_kernel_check(
    samples: np.ndarray,
    grid: GridSpec,
    h_weights: np.ndarray | None = None,
    rho: float = 0.5,
    gamma: float = 0.5,
    caps: dict[str, float] | None = None,
    max_shift: int = 8,
) -> ConditionReport:
    """Check the kernel conditions for an ``H``-valued kernel sampled on a grid.

    ``samples`` has shape ``grid.shape + (J,)``: the ``H``-coordinates of ``k(s)``,
    with ``||v||_H^2 = sum_j h_weights[j] |v_j|^2`` (unit weights by default).
    Reported constants:

    * ``sup_xi ||k^(xi)||_H`` from the discrete transform of the samples,
    * ``sup_{|s| >= 1} |s|^{d+rho} ||k(s)||_H``,
    * ``sup |s|^{d+gamma} ||k(s-t) - k(s)||_H / |t|^gamma`` over ``|s| > 2|t|``,
      ``t`` ranging over grid offsets up to ``max_shift`` steps per axis.
    """
    samples = np.asarray(samples)
    if samples.size == 0 or samples.shape[: grid.d] != grid.shape:
        raise ValueError("kernel samples must be non-empty with shape grid.shape + (J,)")
    weights = np.ones(samples.shape[-1]) if h_weights is None else np.asarray(h_weights, dtype=float)
    caps = {"fourier": 10.0, "size": 10.0, "lipschitz": 100.0, **(caps or {})}

    def h_norm(values: np.ndarray) -> np.ndarray:
        return np.sqrt(np.sum(weights * np.abs(values) ** 2, axis=-1))

    axes = tuple(range(grid.d))
    spectrum = np.fft.fftn(samples, axes=axes) * grid.cell_volume
    fourier_bound = float(h_norm(spectrum).max())

    coords = grid.coordinates()
    radius = np.linalg.norm(coords, axis=-1)
    norms = h_norm(samples)
    far = radius >= 1
    size_constant = float(np.max(radius[far] ** (grid.d + rho) * norms[far], initial=0.0))

    lipschitz = 0.0
    shifts = range(-max_shift, max_shift + 1)
    offsets = np.array(np.meshgrid(*([shifts] * grid.d), indexing="ij")).reshape(grid.d, -1).T
    for offset in offsets:
        if not np.any(offset):
            continue
        t = offset * grid.h
        t_norm = float(np.linalg.norm(t))
        shifted = np.roll(samples, shift=tuple(int(o) for o in offset), axis=axes)  # k(s - t)
        inside = (coords - t >= -grid.L / 2) & (coords - t < grid.L / 2)
        valid = (radius > 2 * t_norm) & np.all(inside, axis=-1)
        if not np.any(valid):
            continue
        diff = h_norm(shifted - samples)[valid]
        ratio = radius[valid] ** (grid.d + gamma) * diff / t_norm**gamma
        lipschitz = max(lipschitz, float(ratio.max()))
    return ConditionReport(fourier_bound, size_constant, lipschitz, rho, gamma, caps)
