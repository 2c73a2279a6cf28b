"""Shifted dyadic filtrations, cube covering, conditional expectations and h1 atoms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Literal, Sequence

import numpy as np

from .field_core import GridSpec, SampledField, psd_sqrt
from .norms_spaces import Cube, box_mean

__all__ = [
    "DyadicFiltration",
    "CoverResult",
    "RangeExhaustedError",
    "SupportViolationError",
    "Atom",
    "AtomReport",
    "base_shift",
    "shift_modulus",
    "filtrations",
    "cover_cube",
    "conditional_expectation",
    "validate_atom",
    "make_random_atom",
    "atomic_decompose",
    "mean_function_ratio",
]


ShiftRule = Literal["scaled", "thirds"]


def shift_modulus(d: int) -> int:
    """Smallest odd integer ``>= d + 2``: room for ``d + 1`` distinct nonzero residues."""
    return d + 2 if d % 2 == 1 else d + 3


def base_shift(i: int, d: int, rule: ShiftRule = "scaled") -> float:
    """Default ``alpha^i``: ``(i + 1)/M`` for the scaled rule, ``(i + 1/2)/(d + 2)`` for the thirds rule."""
    if rule == "scaled":
        return (i + 1) / shift_modulus(d)
    return (i + 0.5) / (d + 2)


@dataclass(frozen=True)
class DyadicFiltration:
    """Dyadic system ``i``: level-``j`` cubes ``prod (a_j + m_k 2^-j, a_j + (m_k + 1) 2^-j]``.

    ``rule="thirds"`` uses ``a_j = alpha`` for ``j >= 0`` and
    ``alpha + (2^-j - 1)/3`` (``-j`` even) or ``alpha - (2^-j + 1)/3`` (``-j`` odd)
    below.  That offset is common to all systems, so at coarse levels the
    systems drift together and large cubes can need arbitrarily coarse covers.

    ``rule="scaled"`` needs ``alpha = r/M`` with ``M`` odd and sets
    ``a_j = 2^-j (r 2^j mod M)/M`` for ``j < 0``.  The relative offset of a
    system within its level-``j`` cells is then a nonzero multiple of ``1/M``
    at every level, levels stay nested, and ``j >= 0`` agrees with the thirds rule.
    """

    index: int
    d: int
    j_min: int = -5
    j_max: int = 10
    alpha: float | None = None
    rule: ShiftRule = "scaled"

    def __post_init__(self) -> None:
        if self.rule not in ("scaled", "thirds"):
            raise ValueError(f"unknown shift rule {self.rule!r}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", base_shift(self.index, self.d, self.rule))
        if not 0 < self.alpha < 1:
            raise ValueError("base shift must lie in (0, 1)")
        if self.j_min > self.j_max:
            raise ValueError("empty level range")
        if self.rule == "scaled":
            self._residue()

    def _residue(self) -> tuple[int, int]:
        for modulus in range(3, 1 << 12, 2):
            r = round(self.alpha * modulus)
            if abs(self.alpha * modulus - r) < 1e-12:
                return r, modulus
        raise ValueError("the scaled rule needs a base shift r/M with M odd")

    def shift(self, j: int) -> float:
        """Per-level offset keeping the levels nested."""
        if j >= 0:
            return self.alpha
        k = -j
        if self.rule == "scaled":
            r, modulus = self._residue()
            return 2.0**k * ((r * pow(2, -k, modulus)) % modulus) / modulus
        if k % 2 == 0:
            return self.alpha + (2.0**k - 1) / 3
        return self.alpha - (2.0**k + 1) / 3

    def side(self, j: int) -> float:
        return 2.0**-j

    def cell_index(self, x: np.ndarray, j: int) -> np.ndarray:
        """Index ``m`` with ``x`` in ``(a_j + m s, a_j + (m+1) s]``."""
        s = self.side(j)
        return np.ceil((np.asarray(x, dtype=float) - self.shift(j)) / s).astype(np.int64) - 1

    def cube(self, j: int, m: Sequence[int]) -> Cube:
        s = self.side(j)
        a = self.shift(j)
        return Cube(tuple(a + (mk + 0.5) * s for mk in m), s)

    @classmethod
    def for_grid(cls, index: int, grid: GridSpec, rule: ShiftRule = "scaled") -> "DyadicFiltration":
        """Levels from one cube covering the box down to single grid cells."""
        top = math.log2(grid.L)
        bottom = math.log2(1.0 / grid.h)
        if abs(top - round(top)) > 1e-12 or abs(bottom - round(bottom)) > 1e-12:
            raise ValueError("periodized filtrations need L and 1/h to be powers of two")
        return cls(index, grid.d, -int(round(top)), int(round(bottom)), rule=rule)


def filtrations(
    d: int, j_min: int = -5, j_max: int = 10, rule: ShiftRule = "scaled"
) -> list[DyadicFiltration]:
    return [DyadicFiltration(i, d, j_min, j_max, rule=rule) for i in range(d + 1)]


class RangeExhaustedError(ValueError):
    """No dyadic cube within the level range contains the query cube."""


class SupportViolationError(ValueError):
    """Field support incompatible with the decomposition."""


@dataclass(frozen=True)
class CoverResult:
    index: int
    level: int
    position: tuple[int, ...]
    ratio: float


def _contains(system: DyadicFiltration, j: int, lo: np.ndarray, hi: np.ndarray) -> tuple[int, ...] | None:
    s = system.side(j)
    a = system.shift(j)
    m = np.floor((lo - a) / s).astype(np.int64)
    if np.all(hi <= a + (m + 1) * s):
        return tuple(int(v) for v in m)
    return None


def cover_cube(Q: Cube, systems: Iterable[DyadicFiltration]) -> CoverResult:
    """Smallest dyadic cube (over all systems) containing ``Q``.

    The search starts at the smallest dyadic side ``>= l(Q)`` and climbs one
    level at a time; ties between systems go to the lowest index.
    """
    systems = list(systems)
    center = np.asarray(Q.center, dtype=float)
    lo, hi = center - Q.side / 2, center + Q.side / 2
    start = -int(math.ceil(math.log2(Q.side) - 1e-12))
    j_min = min(s.j_min for s in systems)
    for j in range(min(start, max(s.j_max for s in systems)), j_min - 1, -1):
        for system in systems:
            if not system.j_min <= j <= system.j_max:
                continue
            position = _contains(system, j, lo, hi)
            if position is not None:
                ratio = (system.side(j) / Q.side) ** len(Q.center)
                return CoverResult(system.index, j, position, ratio)
    raise RangeExhaustedError(f"no dyadic cube down to level {j_min} contains {Q}")


def _cell_labels(grid: GridSpec, system: DyadicFiltration, j: int) -> np.ndarray:
    """Flat periodic cell label of every grid point at level ``j``."""
    s = system.side(j)
    cells = grid.L / s
    if abs(cells - round(cells)) > 1e-9 or s < grid.h - 1e-12:
        raise ValueError(f"level {j} is incompatible with the grid")
    cells = int(round(cells))
    index = system.cell_index(grid.axis(), j) % cells
    labels = np.zeros(grid.shape, dtype=np.int64)
    for axis in range(grid.d):
        shape = [1] * grid.d
        shape[axis] = grid.N
        labels = labels * cells + index.reshape(shape)
    return labels


def conditional_expectation(f: SampledField, system: DyadicFiltration, j: int) -> SampledField:
    """Average of ``f`` over the level-``j`` cube containing each grid point."""
    grid = f.grid
    labels = _cell_labels(grid, system, j).ravel()
    flat = f.samples.reshape(labels.size, -1)
    counts = np.bincount(labels)
    sums = np.zeros((counts.size, flat.shape[1]), dtype=np.complex128)
    np.add.at(sums, labels, flat)
    means = sums / np.maximum(counts, 1)[:, None]
    return SampledField(grid, means[labels].reshape(grid.field_shape))


# ----------------------------------------------------------------------------
# Atoms


@dataclass(frozen=True, eq=False)
class Atom:
    a: SampledField
    cube: Cube
    kind: Literal["unit", "small"]


@dataclass(frozen=True)
class AtomReport:
    support_leak: float
    size_ratio: float
    mean_norm: float
    kind: str
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return (
            self.support_leak < 1e-12
            and self.size_ratio <= 1 + self.tolerance
            and (self.kind == "unit" or self.mean_norm < 1e-10)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "support_leak": self.support_leak,
            "size_ratio": self.size_ratio,
            "mean_norm": self.mean_norm,
            "kind": self.kind,
            "passed": self.passed,
        }


def _kind(Q: Cube) -> Literal["unit", "small"]:
    if Q.volume > 1 + 1e-12:
        raise ValueError(f"atom cubes need volume at most 1, got {Q.volume}")
    return "unit" if abs(Q.volume - 1) < 1e-12 else "small"


def _trace_root_mass(samples: np.ndarray, cell_volume: float) -> float:
    """``tr((h^d sum |a|^2)^{1/2})``."""
    flat = samples.reshape(-1, samples.shape[-2], samples.shape[-1])
    gram = np.einsum("kai,kaj->ij", np.conj(flat), flat) * cell_volume
    return float(np.real(np.trace(psd_sqrt(gram))))


def validate_atom(a: SampledField, Q: Cube) -> AtomReport:
    """Check support, size ``tr((int_Q |a|^2)^{1/2}) <= |Q|^{-1/2}`` and, for ``|Q| < 1``, mean zero."""
    kind = _kind(Q)
    grid = a.grid
    mask = Q.mask(grid)
    outside = a.samples[~mask]
    leak = float(np.abs(outside).max()) if outside.size else 0.0
    inside = a.samples[mask]
    size = _trace_root_mass(inside, grid.cell_volume) * math.sqrt(Q.volume)
    mean = float(np.linalg.norm(inside.sum(axis=0) * grid.cell_volume, 2))
    return AtomReport(leak, size, mean, kind)


def make_random_atom(Q: Cube, seed: int, grid: GridSpec, modes: int = 3) -> Atom:
    """Smooth random atom on ``Q``, defined by a continuous formula so it is grid-independent.

    ``a(s) = w(s) sum_k C_k cos(pi k.(s - lo)/l)`` with ``w`` a product of
    ``sin^2`` bumps vanishing on the cube boundary and seeded random matrices
    ``C_k``; small atoms have ``w`` times their mean subtracted, then the size
    condition is saturated.
    """
    kind = _kind(Q)
    rng = np.random.default_rng(seed)
    n = grid.n
    mask = Q.mask(grid)
    lo = np.asarray(Q.center) - Q.side / 2
    coords = grid.coordinates()
    rel = (coords - lo + grid.L / 2) % grid.L - grid.L / 2
    rel = np.where(mask[..., None], rel, 0.0) / Q.side
    window = np.where(mask, np.prod(np.sin(np.pi * rel) ** 2, axis=-1), 0.0)
    samples = np.zeros(grid.field_shape, dtype=np.complex128)
    for k in np.ndindex(*([modes] * grid.d)):
        coeff = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        basis = np.prod(np.cos(np.pi * np.asarray(k) * rel), axis=-1)
        samples += (window * basis)[..., None, None] * coeff / (1 + sum(k))
    if kind == "small":
        shift = samples.sum(axis=tuple(range(grid.d))) / window.sum()
        samples -= window[..., None, None] * shift
    mass = _trace_root_mass(samples[mask], grid.cell_volume)
    if mass == 0:
        raise ValueError(f"cube side {Q.side} resolves too few grid points for a nonzero atom")
    samples *= Q.volume**-0.5 / mass
    return Atom(SampledField(grid, samples), Q, kind)


def _seam_cells(grid: GridSpec, system: DyadicFiltration) -> np.ndarray:
    """Mask of grid points whose unit cube of ``system`` wraps around the box."""
    index = system.cell_index(grid.axis(), 0)
    wraps = index[0] % int(round(grid.L)) == index[-1] % int(round(grid.L)) and index[0] != index[-1]
    axis_mask = np.zeros(grid.N, dtype=bool)
    if wraps:
        axis_mask = (index == index[0]) | (index == index[-1])
    mask = np.zeros(grid.shape, dtype=bool)
    for axis in range(grid.d):
        shape = [1] * grid.d
        shape[axis] = grid.N
        mask |= np.broadcast_to(axis_mask.reshape(shape), grid.shape)
    return mask


def _cell_atoms(
    piece: np.ndarray, labels: np.ndarray, grid: GridSpec, system: DyadicFiltration, j: int, floor: float
) -> list[tuple[float, Atom]]:
    """Split ``piece`` into normalized atoms on the level-``j`` cells."""
    result = []
    s = system.side(j)
    flat_labels = labels.ravel()
    flat = piece.reshape(flat_labels.size, grid.n, grid.n)
    coords = grid.coordinates().reshape(-1, grid.d)
    order = np.argsort(flat_labels, kind="stable")
    bounds = np.flatnonzero(np.diff(flat_labels[order])) + 1
    for members in np.split(order, bounds):
        values = flat[members]
        if np.abs(values).max() <= floor:
            continue
        mass = _trace_root_mass(values, grid.cell_volume)
        if mass <= floor:
            continue
        first = coords[members[0]]
        m = tuple(int(v) for v in system.cell_index(first, j))
        cube = system.cube(j, m)
        lam = mass * math.sqrt(cube.volume)
        samples = np.zeros((flat_labels.size, grid.n, grid.n), dtype=np.complex128)
        samples[members] = values / lam
        atom = Atom(SampledField(grid, samples.reshape(grid.field_shape)), cube, _kind(cube))
        result.append((lam, atom))
    return result


def atomic_decompose(
    f: SampledField, system: DyadicFiltration | None = None, finest: int | None = None
) -> list[tuple[float, Atom]]:
    """Constructive decomposition ``f = sum_j lambda_j a_j`` from martingale differences.

    Pieces: ``E_0 f`` on unit cells, ``E_j f - E_{j-1} f`` on level ``j-1`` cells
    and ``f - E_K f`` on level-``K`` cells with ``2^-K = 4h``.  Each piece
    restricted to a cell is a multiple of an atom.  A field that is already a
    multiple of an atom on a single cell of the system is returned as one term.
    """
    grid = f.grid
    system = DyadicFiltration.for_grid(0, grid) if system is None else system
    scale = float(np.abs(f.samples).max())
    if scale == 0:
        return []
    floor = 1e-13 * scale
    if np.abs(f.samples[_seam_cells(grid, system)]).max(initial=0.0) > 1e-12 * scale:
        raise SupportViolationError("field charges a unit cell that wraps around the box")
    finest = int(round(math.log2(1.0 / (4 * grid.h)))) if finest is None else finest

    support = np.abs(f.samples).max(axis=(-2, -1)) > floor
    for j in range(finest, -1, -1):
        labels = _cell_labels(grid, system, j)
        touched = np.unique(labels[support])
        if touched.size != 1:
            continue
        mean = np.linalg.norm(f.samples.sum(axis=tuple(range(grid.d))) * grid.cell_volume, 2)
        if j == 0 or mean < 1e-10 * max(1.0, scale):
            return _cell_atoms(f.samples, labels, grid, system, j, floor)

    terms: list[tuple[float, Atom]] = []
    previous = conditional_expectation(f, system, 0).samples
    terms += _cell_atoms(previous, _cell_labels(grid, system, 0), grid, system, 0, floor)
    for j in range(1, finest + 1):
        current = conditional_expectation(f, system, j).samples
        terms += _cell_atoms(current - previous, _cell_labels(grid, system, j - 1), grid, system, j - 1, floor)
        previous = current
    terms += _cell_atoms(f.samples - previous, _cell_labels(grid, system, finest), grid, system, finest, floor)
    return terms


def mean_function_ratio(fields: Sequence[np.ndarray], sides: Sequence[float], grid: GridSpec, p: float) -> float:
    """``||sum_k f_k^{Q^k}||_p / ||sum_k f_k||_p`` for positive scalar fields and centred cubes ``Q^k``.

    ``f^Q(t)`` is the average of ``f`` over ``t + Q``.
    """
    if len(fields) != len(sides):
        raise ValueError("one cube side per field")
    averaged = np.zeros(grid.shape)
    total = np.zeros(grid.shape)
    for values, side in zip(fields, sides):
        values = np.asarray(values, dtype=float)
        if np.any(values < 0):
            raise ValueError("mean-function bound needs positive fields")
        m = max(1, int(round(side / grid.h)))
        window = box_mean(values, m, grid.d)
        averaged += np.roll(window, shift=(m // 2,) * grid.d, axis=tuple(range(grid.d)))
        total += values
    norm = lambda x: float(np.sum(x**p) * grid.cell_volume) ** (1 / p)  # noqa: E731
    denominator = norm(total)
    return norm(averaged) / denominator if denominator > 0 else 0.0
