"""Conic, radial, discrete and truncated square functions and the embedding/retraction pair.

A :class:`ConeProfile` stores a strip field ``u(s, eps_j)`` on the grid for
every scale node.  Cone integrals over ``|t| < eps`` are never stored: they are
evaluated as periodic convolutions of ``|u(., eps_j)|^2`` with discrete ball
weights.

The kernel label fixes the scale measure.  Profiles of the Poisson scale
derivative (label ``dpoisson``) use ``eps d eps`` radially and
``dt d eps / eps^{d-1}`` on cones; all other labels use ``d eps / eps`` and
``dt d eps / eps^{d+1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np

from .field_core import (
    GridSpec,
    SampledField,
    ScaleGrid,
    SpectralField,
    forward_transform,
    inverse_transform,
    psd_lp_norm,
    psd_sqrt,
)
from .kernels import (
    DPOISSON,
    POISSON,
    RIESZ_POISSON,
    KernelSymbol,
    TestQuadruple,
    apply_symbol,
    ball_volume,
    evaluate_on_grid,
)

__all__ = [
    "ConfigurationError",
    "ConeProfile",
    "SquareField",
    "scale_power",
    "ball_weights",
    "cone_profile",
    "radial_square",
    "conic_square",
    "discrete_squares",
    "dyadic_levels",
    "two_variable_squares",
    "embed_E",
    "retract_F",
    "nonlocal_scales",
]

BallMode = Literal["overlap", "strict"]


class ConfigurationError(ValueError):
    """Inconsistent combination of kernel label, measure or scale grid."""


def scale_power(label: str) -> int:
    """Extra power of ``eps`` multiplying ``d eps / eps`` for a kernel label."""
    return 2 if label == "dpoisson" else 0


def _measure_name(label: str) -> str:
    return "poisson" if label == "dpoisson" else "general"


@dataclass(frozen=True, eq=False)
class ConeProfile:
    """Strip field ``values[j] = u(., eps_j)`` with shape ``(J,) + grid.field_shape``."""

    grid: GridSpec
    scales: ScaleGrid
    values: np.ndarray
    kernel_label: str

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != (len(self.scales),) + self.grid.field_shape:
            raise ValueError(f"profile values have shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("profile values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def squared(self) -> np.ndarray:
        """``|u|^2 = u* u`` per scale and grid point."""
        return np.conj(np.swapaxes(self.values, -1, -2)) @ self.values

    def scaled(self, factor: complex) -> "ConeProfile":
        return ConeProfile(self.grid, self.scales, self.values * factor, self.kernel_label)


@dataclass(frozen=True, eq=False)
class SquareField:
    """PSD field ``S(s)`` (the square function squared) with lazily computed root."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.complex128)
        values = 0.5 * (values + np.conj(np.swapaxes(values, -1, -2)))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def root(self) -> np.ndarray:
        cached = self.__dict__.get("_root")
        if cached is None:
            cached = psd_sqrt(self.values)
            object.__setattr__(self, "_root", cached)
        return cached

    def root_field(self) -> SampledField:
        return SampledField(self.grid, self.root)

    def traces(self) -> np.ndarray:
        return np.real(np.trace(self.values, axis1=-2, axis2=-1))

    def lp_norm(self, p: float) -> float:
        """L_p norm of the square function ``S^{1/2}``."""
        return psd_lp_norm(self.values, self.grid, p)


# ----------------------------------------------------------------------------
# Discrete balls


def _interval_overlap(lo: np.ndarray, hi: np.ndarray, radius: float) -> np.ndarray:
    return np.clip(np.minimum(hi, radius) - np.maximum(lo, -radius), 0.0, None)


def _disk_cell_area(x0: float, x1: float, y0: float, y1: float, radius: float) -> float:
    """Exact area of ``[x0,x1] x [y0,y1]`` inside the disk of the given radius."""
    r2 = radius * radius
    cuts = {x0, x1}
    for y in (y0, y1):
        if abs(y) < radius:
            root = math.sqrt(r2 - y * y)
            cuts.update((root, -root))
    cuts.update((radius, -radius))
    points = sorted(c for c in cuts if x0 <= c <= x1)

    def chord(x: float) -> float:
        return math.sqrt(max(r2 - x * x, 0.0))

    def primitive(x: float) -> float:
        x = min(max(x, -radius), radius)
        return 0.5 * (x * chord(x) + r2 * math.asin(x / radius))

    area = 0.0
    for a, b in zip(points[:-1], points[1:]):
        mid = 0.5 * (a + b)
        if abs(mid) >= radius:
            continue
        s = chord(mid)
        # upper = clip(s, y0, y1), lower = clip(-s, y0, y1) on this piece
        if s <= y0:
            upper = y0 * (b - a)
        elif s >= y1:
            upper = y1 * (b - a)
        else:
            upper = primitive(b) - primitive(a)
        if -s <= y0:
            lower = y0 * (b - a)
        elif -s >= y1:
            lower = y1 * (b - a)
        else:
            lower = -(primitive(b) - primitive(a))
        area += max(upper - lower, 0.0)
    return area


@lru_cache(maxsize=4096)
def ball_weights(d: int, h: float, radius: float, mode: BallMode = "overlap") -> tuple[np.ndarray, np.ndarray]:
    """Integer offsets and weights representing ``int_{|t| < radius} dt`` on the grid.

    ``overlap`` weights are the exact volumes of grid cells inside the ball, so
    they sum to ``c_d radius^d``; below one cell the centre carries the whole
    ball.  ``strict`` weights give ``h^d`` to every grid point with ``|t| < radius``.
    """
    if radius <= 0:
        return np.zeros((1, d), dtype=int), np.zeros(1)
    reach = int(math.ceil(radius / h + 0.5))
    index = np.arange(-reach, reach + 1)
    if d == 1:
        offsets = index[:, None]
        if mode == "strict":
            weights = np.where(np.abs(index) * h < radius, h, 0.0)
        else:
            weights = _interval_overlap((index - 0.5) * h, (index + 0.5) * h, radius)
    else:
        ii, jj = np.meshgrid(index, index, indexing="ij")
        offsets = np.stack([ii.ravel(), jj.ravel()], axis=-1)
        if mode == "strict":
            weights = np.where(np.hypot(ii, jj).ravel() * h < radius, h * h, 0.0)
        else:
            weights = np.zeros(offsets.shape[0])
            near = np.maximum(np.abs(offsets) - 0.5, 0.0) * h
            far = (np.abs(offsets) + 0.5) * h
            inside = np.hypot(far[:, 0], far[:, 1]) <= radius
            touching = np.hypot(near[:, 0], near[:, 1]) < radius
            weights[inside] = h * h
            for k in np.flatnonzero(touching & ~inside):
                i, j = offsets[k]
                weights[k] = _disk_cell_area((i - 0.5) * h, (i + 0.5) * h, (j - 0.5) * h, (j + 0.5) * h, radius)
    keep = weights > 0
    offsets, weights = offsets[keep], weights[keep]
    if offsets.size == 0:
        offsets, weights = np.zeros((1, d), dtype=int), np.array([0.0])
    if mode == "overlap" and radius < h / 2:
        offsets, weights = np.zeros((1, d), dtype=int), np.array([ball_volume(d) * radius**d])
    offsets.setflags(write=False)
    weights.setflags(write=False)
    return offsets, weights


@lru_cache(maxsize=1024)
def _ball_spectrum(grid: GridSpec, radius: float, mode: BallMode) -> np.ndarray:
    if grid.d == 2 and radius > grid.L / 2:
        raise ConfigurationError("cone radius exceeds half the box in two dimensions")
    offsets, weights = ball_weights(grid.d, grid.h, radius, mode)
    kernel = np.zeros(grid.shape)
    np.add.at(kernel, tuple((offsets % grid.N).T), weights)
    spectrum = np.fft.fftn(kernel)
    spectrum.setflags(write=False)
    return spectrum


def _ball_sum(field_values: np.ndarray, grid: GridSpec, radius: float, mode: BallMode) -> np.ndarray:
    """``sum_t w_t F(s + t)`` over the discrete ball (periodic)."""
    axes = tuple(range(grid.d))
    spectrum = np.conj(_ball_spectrum(grid, radius, mode))
    transformed = np.fft.fftn(field_values, axes=axes) * spectrum[..., None, None]
    return np.fft.ifftn(transformed, axes=axes)


# ----------------------------------------------------------------------------
# Square functions


def cone_profile(
    f: SampledField, kernel: KernelSymbol, scales: ScaleGrid, label: str | None = None
) -> ConeProfile:
    """``values[j] = k_{eps_j} * f`` for every scale node."""
    F = forward_transform(f).coefficients
    axes = tuple(range(f.grid.d))
    values = np.empty((len(scales),) + f.grid.field_shape, dtype=np.complex128)
    for j, eps in enumerate(scales.nodes):
        symbol = evaluate_on_grid(kernel, f.grid, float(eps))
        values[j] = _inverse(apply_symbol(F, symbol), f.grid, axes)
    return ConeProfile(f.grid, scales, values, kernel.label if label is None else label)


def _inverse(coeffs: np.ndarray, grid: GridSpec, axes: tuple[int, ...]) -> np.ndarray:
    return inverse_transform(SpectralField(grid, coeffs)).samples


def _check_measure(profile: ConeProfile, measure: str | None) -> None:
    if measure is not None and measure != _measure_name(profile.kernel_label):
        raise ConfigurationError(
            f"measure {measure!r} is inconsistent with kernel label {profile.kernel_label!r}"
        )


def radial_square(profile: ConeProfile, measure: str | None = None) -> SquareField:
    """``sum_j w_j eps_j^k |u(s, eps_j)|^2`` with ``k`` set by the kernel label."""
    _check_measure(profile, measure)
    power = scale_power(profile.kernel_label)
    factors = profile.scales.weights * profile.scales.nodes**power
    values = np.tensordot(factors, profile.squared(), axes=(0, 0))
    return SquareField(profile.grid, values)


def conic_square(
    profile: ConeProfile,
    aperture: Literal["local", "nonlocal"] = "local",
    ball: BallMode = "overlap",
    measure: str | None = None,
) -> SquareField:
    """Cone integral ``int int_{|t| < eps} |u(s + t, eps)|^2 dt mu(d eps)``.

    ``local`` keeps scale nodes below 1 (the truncated cone); ``nonlocal`` uses
    every node of the profile's scale grid.
    """
    _check_measure(profile, measure)
    grid = profile.grid
    power = scale_power(profile.kernel_label)
    squared = profile.squared()
    total = np.zeros(grid.field_shape, dtype=np.complex128)
    for j, eps in enumerate(profile.scales.nodes):
        if aperture == "local" and eps >= 1:
            continue
        factor = profile.scales.weights[j] * eps ** (power - grid.d)
        total += factor * _ball_sum(squared[j], grid, float(eps), ball)
    return SquareField(grid, total)


def nonlocal_scales(grid: GridSpec, count: int = 96) -> ScaleGrid:
    """Log-uniform scales on ``[h/16, L/2]`` for the non-truncated square functions."""
    return ScaleGrid.log_uniform(count, grid.h / 16, grid.L / 2)


def dyadic_levels(grid: GridSpec) -> int:
    """Number of dyadic levels ``j >= 1`` with ``2^-j >= h``."""
    return max(1, int(math.floor(math.log2(1.0 / grid.h) + 1e-12)))


def discrete_squares(
    f: SampledField, quad: TestQuadruple, levels: int | None = None, ball: BallMode = "overlap"
) -> tuple[SquareField, SquareField]:
    """Dyadic conic and radial square functions ``(s^D, g^D)`` of ``f`` for the generator ``quad.Phi``."""
    levels = dyadic_levels(f.grid) if levels is None else levels
    profile = cone_profile(f, quad.Phi, ScaleGrid.dyadic(levels), label="dyadic")
    return conic_square(profile, ball=ball), radial_square(profile)


def two_variable_squares(
    profile: ConeProfile,
    eps: float,
    family: Literal["s", "s_bar", "g_tilde"] = "s",
    point: tuple[int, ...] | None = None,
    ball: BallMode = "overlap",
) -> np.ndarray:
    """Square functions truncated below at height ``eps``.

    * ``s``: ``int_eps^1 int_{|t| < r - eps/2} |u(s+t, r)|^2 dt dr / r^{d-1}``
    * ``s_bar``: the same with balls of radius ``r/2``
    * ``g_tilde``: ``int_eps^{2/3} |u(s, r)|^2 r dr``

    ``profile`` must hold the Poisson scale derivative.  Returns the PSD field
    (or the matrix at grid index ``point``).  Scales enter by node.
    """
    if profile.kernel_label != "dpoisson":
        raise ConfigurationError("two-variable squares need a Poisson-derivative profile")
    if not 0 <= eps <= 1:
        raise ValueError(f"truncation height must lie in [0, 1], got {eps}")
    grid = profile.grid
    squared = profile.squared()
    nodes, weights = profile.scales.nodes, profile.scales.weights
    total = np.zeros(grid.field_shape, dtype=np.complex128)
    for j, r in enumerate(nodes):
        if r < eps or r >= 1:
            continue
        if family == "g_tilde":
            if r <= 2.0 / 3.0:
                total += weights[j] * r**2 * squared[j]
            continue
        radius = r - eps / 2 if family == "s" else r / 2
        total += weights[j] * r ** (2 - grid.d) * _ball_sum(squared[j], grid, float(radius), ball)
    total = 0.5 * (total + np.conj(np.swapaxes(total, -1, -2)))
    return total if point is None else total[point]


# ----------------------------------------------------------------------------
# Embedding into the strip and retraction


def embed_E(f: SampledField, scales: ScaleGrid) -> tuple[ConeProfile, SampledField]:
    """``f -> (eps * d/d eps P_eps f, P * f)``; the cone translation is applied lazily."""
    F = forward_transform(f).coefficients
    axes = tuple(range(f.grid.d))
    values = np.empty((len(scales),) + f.grid.field_shape, dtype=np.complex128)
    for j, eps in enumerate(scales.nodes):
        symbol = eps * evaluate_on_grid(DPOISSON, f.grid, float(eps))
        values[j] = _inverse(apply_symbol(F, symbol), f.grid, axes)
    smooth = _inverse(apply_symbol(F, evaluate_on_grid(POISSON, f.grid)), f.grid, axes)
    return ConeProfile(f.grid, scales, values, "eps-dpoisson"), SampledField(f.grid, smooth)


def retract_F(h: tuple[ConeProfile, SampledField], ball: BallMode = "overlap") -> SampledField:
    """Left inverse of :func:`embed_E`.

    ``(4/c_d) int int_{cone} h'(s + t, eps) d/d eps P_eps(s + t - u) dt d eps / eps^d``
    plus ``(P + 4 pi I(P)) * h''``, with the cone volume taken from the same
    discrete balls as the square functions.
    """
    profile, low = h
    grid = profile.grid
    if low.grid != grid:
        raise ValueError(f"grid mismatch: {low.grid} vs {grid}")
    axes = tuple(range(grid.d))
    c_d = ball_volume(grid.d)
    total = np.zeros(grid.field_shape, dtype=np.complex128)
    spectra = np.fft.fftn(profile.values, axes=tuple(a + 1 for a in axes))
    for j, eps in enumerate(profile.scales.nodes):
        volume = float(np.sum(ball_weights(grid.d, grid.h, float(eps), ball)[1]))
        factor = (4 / c_d) * profile.scales.weights[j] * eps ** (1 - grid.d) * volume
        symbol = np.conj(evaluate_on_grid(DPOISSON, grid, float(eps)))
        total += factor * spectra[j] * symbol[..., None, None]
    low_symbol = evaluate_on_grid(POISSON, grid) + 4 * np.pi * evaluate_on_grid(RIESZ_POISSON, grid)
    total += np.fft.fftn(low.samples, axes=axes) * np.conj(low_symbol)[..., None, None]
    return SampledField(grid, np.fft.ifftn(total, axes=axes))
