"""Local Hardy and BMO type norms of matrix fields over finite cube families."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Literal

import numpy as np

from .field_core import GridSpec, SampledField, ScaleGrid, adjoint_field, lp_norm, psd_lp_norm
from .kernels import DPOISSON, POISSON, TestQuadruple, convolve
from .square_functions import (
    BallMode,
    cone_profile,
    conic_square,
    discrete_squares,
    radial_square,
)

__all__ = [
    "Cube",
    "CubeFamily",
    "NormReport",
    "BmoQBounds",
    "box_mean",
    "mean_oscillation",
    "hp_c_norm",
    "hp_c_norm_radial",
    "hp_c_norm_via",
    "bmo_c_norm",
    "BMO_c_norm",
    "large_cube_average_sup",
    "linf_Rd_norm",
    "bmo_q_bounds",
    "oscillation_majorant",
    "mixture_and_row_norms",
    "HP_VARIANTS",
]

HP_VARIANTS = ("conic", "radial", "discrete-conic", "discrete-radial")


@dataclass(frozen=True)
class Cube:
    """Axis-parallel cube ``[c - l/2, c + l/2)^d``."""

    center: tuple[float, ...]
    side: float

    @property
    def volume(self) -> float:
        return self.side ** len(self.center)

    def grid_window(self, grid: GridSpec) -> tuple[tuple[int, ...], int]:
        """Start indices and points per axis of the grid points inside the cube."""
        points = self.side / grid.h
        m = int(round(points))
        if m < 1 or abs(points - m) > 1e-9:
            raise ValueError(f"cube side {self.side} is not a multiple of the grid step {grid.h}")
        start = tuple(
            int(math.ceil((c - self.side / 2 + grid.L / 2) / grid.h - 1e-9)) for c in self.center
        )
        return start, m

    def mask(self, grid: GridSpec) -> np.ndarray:
        """Boolean mask of grid points inside the cube (periodic indexing)."""
        start, m = self.grid_window(grid)
        mask = np.zeros(grid.shape, dtype=bool)
        index = np.ix_(*[(np.arange(m) + s) % grid.N for s in start])
        mask[index] = True
        return mask


@dataclass(frozen=True)
class CubeFamily:
    """Grid-snapped cubes: every side in ``sides`` at start indices on a stride grid.

    ``kind`` is ``small`` (sides below 1), ``unit`` (side 1) or ``all``.  Unit
    cubes are always scanned at every grid position.
    """

    grid: GridSpec
    sides: tuple[float, ...]
    kind: Literal["small", "unit", "all"] = "all"
    stride: int = 4

    @classmethod
    def default(
        cls, grid: GridSpec, kind: Literal["small", "unit", "all"] = "all", stride: int = 4, max_side: float | None = None
    ) -> "CubeFamily":
        """Dyadic sides ``2^-k`` down to two grid steps, unit cubes, and (for ``all``) sides up to ``max_side``."""
        unit_points = 1.0 / grid.h
        if abs(unit_points - round(unit_points)) > 1e-9:
            raise ValueError("unit cubes need 1/h to be an integer")
        k_max = min(int(math.log2(grid.N / 8)), int(math.floor(math.log2(1.0 / (2 * grid.h)) + 1e-12)))
        small = tuple(2.0**-k for k in range(1, max(k_max, 0) + 1))
        if kind == "small":
            sides = small
        elif kind == "unit":
            sides = (1.0,)
        else:
            top = grid.L / 4 if max_side is None else max_side
            large = []
            side = 2.0
            while side <= top + 1e-12:
                large.append(side)
                side *= 2
            sides = small + (1.0,) + tuple(large)
        return cls(grid, sides, kind, stride)

    def refined(self) -> "CubeFamily":
        """Double the density of cube positions."""
        return CubeFamily(self.grid, self.sides, self.kind, max(1, self.stride // 2))

    def stride_for(self, side: float) -> int:
        return 1 if abs(side - 1.0) < 1e-12 else self.stride

    @property
    def cubes(self) -> Iterator[Cube]:
        grid = self.grid
        for side in self.sides:
            starts = range(0, grid.N, self.stride_for(side))
            for index in np.ndindex(*([len(starts)] * grid.d)):
                corner = [-grid.L / 2 + starts[i] * grid.h for i in index]
                yield Cube(tuple(c + side / 2 for c in corner), side)


# ----------------------------------------------------------------------------
# Windowed statistics


def _axis_box_sum(values: np.ndarray, m: int, axis: int) -> np.ndarray:
    n = values.shape[axis]
    if m > n:
        raise ValueError("window longer than the periodic axis")
    head = np.take(values, np.arange(m), axis=axis)
    extended = np.concatenate([values, head], axis=axis)
    cumulative = np.cumsum(extended, axis=axis)
    zero = np.zeros_like(np.take(cumulative, [0], axis=axis))
    cumulative = np.concatenate([zero, cumulative], axis=axis)
    upper = np.take(cumulative, np.arange(m, m + n), axis=axis)
    lower = np.take(cumulative, np.arange(n), axis=axis)
    return upper - lower


def box_mean(values: np.ndarray, m: int, d: int) -> np.ndarray:
    """Mean over the periodic window of ``m^d`` points starting at each index."""
    for axis in range(d):
        values = _axis_box_sum(values, m, axis)
    return values / m**d


def mean_oscillation(f: SampledField, m: int) -> np.ndarray:
    """``(1/|Q|) int_Q |f - f_Q|^2`` for every window of ``m`` points per axis."""
    d = f.grid.d
    centered = f.samples - np.mean(f.samples, axis=tuple(range(d)))
    first = box_mean(centered, m, d)
    second = box_mean(np.conj(np.swapaxes(centered, -1, -2)) @ centered, m, d)
    osc = second - np.conj(np.swapaxes(first, -1, -2)) @ first
    return 0.5 * (osc + np.conj(np.swapaxes(osc, -1, -2)))


def _size_average(f: SampledField, m: int) -> np.ndarray:
    """``(1/|Q|) int_Q |f|^2`` for every window."""
    return box_mean(np.conj(np.swapaxes(f.samples, -1, -2)) @ f.samples, m, f.grid.d)


def _lambda_max(stack: np.ndarray) -> np.ndarray:
    stack = 0.5 * (stack + np.conj(np.swapaxes(stack, -1, -2)))
    return np.clip(np.linalg.eigvalsh(stack)[..., -1], 0.0, None)


def _strided(values: np.ndarray, stride: int, d: int) -> np.ndarray:
    index = tuple(slice(None, None, stride) for _ in range(d))
    return values[index]


def _points(grid: GridSpec, side: float) -> int:
    return int(round(side / grid.h))


def _sup_over(f: SampledField, family: CubeFamily, sides: tuple[float, ...], form: str) -> float:
    best = 0.0
    for side in sides:
        m = _points(f.grid, side)
        if m < 1:
            continue
        stack = mean_oscillation(f, m) if form == "oscillation" else _size_average(f, m)
        stack = _strided(stack, family.stride_for(side), f.grid.d)
        best = max(best, float(_lambda_max(stack).max()))
    return best


# ----------------------------------------------------------------------------
# Norms


def hp_c_norm(
    f: SampledField, p: float, scales: ScaleGrid | None = None, ball: BallMode = "overlap"
) -> float:
    """Conic Poisson characterization ``||s^c(f)||_p + ||P * f||_p``."""
    scales = ScaleGrid.default(f.grid) if scales is None else scales
    square = conic_square(cone_profile(f, DPOISSON, scales), ball=ball)
    return square.lp_norm(p) + lp_norm(convolve(f, POISSON), p)


def hp_c_norm_radial(f: SampledField, p: float, scales: ScaleGrid | None = None) -> float:
    """Radial Poisson characterization ``||g^c(f)||_p + ||P * f||_p``."""
    scales = ScaleGrid.default(f.grid) if scales is None else scales
    square = radial_square(cone_profile(f, DPOISSON, scales))
    return square.lp_norm(p) + lp_norm(convolve(f, POISSON), p)


def hp_c_norm_via(
    f: SampledField,
    p: float,
    quad: TestQuadruple,
    variant: str = "conic",
    scales: ScaleGrid | None = None,
    ball: BallMode = "overlap",
) -> float:
    """``||square function of f for quad.Phi||_p + ||phi * f||_p``."""
    if variant not in HP_VARIANTS:
        raise ValueError(f"unknown characterization variant {variant!r}")
    if variant.startswith("discrete"):
        conic, radial = discrete_squares(f, quad, ball=ball)
        square = conic if variant == "discrete-conic" else radial
    else:
        scales = ScaleGrid.default(f.grid) if scales is None else scales
        profile = cone_profile(f, quad.Phi, scales)
        square = conic_square(profile, ball=ball) if variant == "conic" else radial_square(profile)
    return square.lp_norm(p) + lp_norm(convolve(f, quad.phi), p)


def bmo_c_norm(f: SampledField, family: CubeFamily | None = None) -> float:
    """Small-cube mean oscillation and unit-cube size, both in operator norm."""
    family = CubeFamily.default(f.grid, "all") if family is None else family
    small = tuple(s for s in family.sides if s < 1)
    oscillation = _sup_over(f, family, small, "oscillation")
    size = _sup_over(f, family, (1.0,), "size")
    return math.sqrt(max(oscillation, size))


def BMO_c_norm(f: SampledField, family: CubeFamily | None = None) -> float:
    """Mean oscillation over every cube of the family."""
    family = CubeFamily.default(f.grid, "all") if family is None else family
    return math.sqrt(_sup_over(f, family, family.sides, "oscillation"))


def large_cube_average_sup(f: SampledField, sides: tuple[float, ...]) -> float:
    """``sup ||(1/|Q|) int_Q |f|^2||^{1/2}`` over all grid positions of cubes with the given sides."""
    family = CubeFamily(f.grid, sides, "all", stride=1)
    return math.sqrt(_sup_over(f, family, sides, "size"))


def linf_Rd_norm(f: SampledField) -> float:
    """``||int |f(t)|^2 dt / (1 + |t|^{d+1})||^{1/2}``."""
    grid = f.grid
    radius = np.linalg.norm(grid.coordinates(), axis=-1)
    weight = grid.cell_volume / (1 + radius ** (grid.d + 1))
    gram = np.conj(np.swapaxes(f.samples, -1, -2)) @ f.samples
    total = np.tensordot(weight, gram, axes=(tuple(range(grid.d)), tuple(range(grid.d))))
    return math.sqrt(float(_lambda_max(total)))


@dataclass(frozen=True, eq=False)
class BmoQBounds:
    """Certified bracket for the dyadic-scale ``bmo_q`` expression."""

    lower: float
    upper: float
    q: float
    majorant: np.ndarray
    unit_term: np.ndarray

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def __iter__(self):
        yield self.lower
        yield self.upper


def _centered_windows(stack: np.ndarray, m: int, d: int) -> np.ndarray:
    """Re-index window statistics so that index ``s`` means the window centred at ``s``."""
    return np.roll(stack, shift=(m // 2,) * d, axis=tuple(range(d)))


def _dyadic_point_counts(grid: GridSpec) -> list[int]:
    counts = []
    k = 1
    while 2.0**-k / grid.h >= 2 - 1e-12:
        counts.append(_points(grid, 2.0**-k))
        k += 1
    return counts


def _pointwise_majorant(stacks: list[np.ndarray], p: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-point PSD majorant of a family and the pointwise max of top eigenvalues.

    At each point the cheaper (in ``tr(.)^p``) of ``sum_k x_k`` and
    ``max_k lambda_max(x_k) I`` is kept; both dominate every ``x_k``.
    """
    top = np.max(np.stack([_lambda_max(x) for x in stacks]), axis=0)
    total = np.sum(stacks, axis=0)
    n = total.shape[-1]
    sum_cost = np.sum(np.clip(np.linalg.eigvalsh(total), 0, None) ** p, axis=-1)
    scalar_cost = n * top**p
    use_scalar = scalar_cost <= sum_cost
    majorant = np.where(use_scalar[..., None, None], top[..., None, None] * np.eye(n), total)
    return majorant, top


def bmo_q_bounds(f: SampledField, q: float) -> BmoQBounds:
    """Lower and upper bounds of ``(||sup+_k f_k#||_{q/2}^{q/2} + ||f#||_{q/2}^{q/2})^{1/q}``.

    ``f_k#(s)`` is the mean oscillation over the cube of side ``2^-k`` centred at
    ``s`` and ``f#(s)`` the mean of ``|f|^2`` over the unit cube centred at ``s``.
    The lower bound evaluates the dual formula at two explicit positive
    families (top eigenprojections and normalized identities on the maximizing
    cube); the upper bound is the L_{q/2} norm of a pointwise operator majorant.
    """
    if not (q > 2 and math.isfinite(q)):
        raise ValueError(f"q must be finite and greater than 2, got {q}")
    grid = f.grid
    d, n, p = grid.d, grid.n, q / 2
    stacks = [_centered_windows(mean_oscillation(f, m), m, d) for m in _dyadic_point_counts(grid)]
    m0 = _points(grid, 1.0)
    unit = _centered_windows(_size_average(f, m0), m0, d)
    unit_term = psd_lp_norm(unit, grid, q) ** 2  # ||f#||_{q/2}
    if not stacks:
        zero = np.zeros(grid.field_shape, dtype=np.complex128)
        value = unit_term ** (p / q)
        return BmoQBounds(value, value, q, zero, unit)

    majorant, top = _pointwise_majorant(stacks, p)
    upper_small = psd_lp_norm(majorant, grid, q) ** 2
    traces = np.max(np.stack([np.real(np.trace(x, axis1=-2, axis2=-1)) for x in stacks]), axis=0)
    eig_candidate = float(np.sum(top**p) * grid.cell_volume) ** (1 / p)
    r = p / (p - 1)
    trace_candidate = float(np.sum(np.clip(traces, 0, None) ** p) * grid.cell_volume) ** (1 / p) / n ** (1 / r)
    lower_small = max(eig_candidate, trace_candidate)
    lower = (lower_small**p + unit_term**p) ** (1 / q)
    upper = (upper_small**p + unit_term**p) ** (1 / q)
    return BmoQBounds(lower, max(upper, lower), q, majorant, unit)


def oscillation_majorant(f: SampledField, p: float = 2.0) -> np.ndarray:
    """PSD field dominating every centred-cube average around each point.

    Covers mean oscillations on dyadic cubes below unit size and averages of
    ``|f|^2`` on cubes of side ``1, 2, 4, ...`` up to the whole box.
    """
    grid = f.grid
    d = grid.d
    stacks = [_centered_windows(mean_oscillation(f, m), m, d) for m in _dyadic_point_counts(grid)]
    side = 1.0
    while side <= grid.L + 1e-12:
        m = _points(grid, side)
        stacks.append(_centered_windows(_size_average(f, m), m, d))
        side *= 2
    majorant, _ = _pointwise_majorant(stacks, p)
    return majorant


def mixture_and_row_norms(f: SampledField, p: float) -> dict[str, float]:
    """Column, row and mixture norms built from the conic characterization."""
    column = hp_c_norm(f, p)
    row = hp_c_norm(adjoint_field(f), p)
    report = {"p": float(p), "column": column, "row": row}
    if p > 2:
        report["mixture"] = max(column, row)
    else:
        report["mixture_upper"] = min(column, row)
    return report


# ----------------------------------------------------------------------------
# Reports


@dataclass
class NormReport:
    """Per-characterization values over a field family, ratios and constants."""

    values: dict[str, list[float]]
    ratios: dict[str, dict[str, float]] = field(default_factory=dict)
    constants: dict[str, float] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)
    skipped: int = 0

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "values": self.values,
            "ratios": self.ratios,
            "constants": self.constants,
            "metadata": self.metadata,
            "skipped": self.skipped,
        }

    def ratio_csv(self) -> str:
        names = sorted(self.ratios)
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["characterization"] + names)
        for a in names:
            writer.writerow([a] + [repr(self.ratios[a].get(b, float("nan"))) for b in names])
        return buffer.getvalue()
