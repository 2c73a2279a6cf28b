import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ovhardy.dyadic_atoms import (
    DyadicFiltration,
    RangeExhaustedError,
    SupportViolationError,
    atomic_decompose,
    base_shift,
    conditional_expectation,
    cover_cube,
    filtrations,
    make_random_atom,
    mean_function_ratio,
    shift_modulus,
    validate_atom,
)
from ovhardy.field_core import GridSpec, SampledField, make_field
from ovhardy.norms_spaces import Cube

GRID = GridSpec(1, 2, 8.0, 256)
GRID2 = GridSpec(2, 2, 4.0, 64)


def brute_cover_ratio(Q, systems):
    """Smallest |D|/|Q| by testing every candidate cell exactly in rational arithmetic."""
    centre = [Fraction(c) for c in Q.center]
    half = Fraction(Q.side) / 2
    best = math.inf
    for system in systems:
        for j in range(system.j_min, system.j_max + 1):
            side, shift = Fraction(system.side(j)), Fraction(system.shift(j))
            if side < Fraction(Q.side):
                continue
            ok = True
            for c in centre:
                lo, hi = c - half, c + half
                m = math.floor((lo - shift) / side)
                ok &= shift + m * side <= lo and hi <= shift + (m + 1) * side
            if ok:
                best = min(best, float(side / Fraction(Q.side)) ** len(centre))
    return best


def test_shift_modulus_and_base_shift():
    assert [shift_modulus(d) for d in (1, 2, 3, 4)] == [3, 5, 5, 7]
    assert [base_shift(i, 1) for i in range(2)] == [1 / 3, 2 / 3]
    assert base_shift(0, 2, "thirds") == 0.5 / 4
    with pytest.raises(ValueError):
        DyadicFiltration(0, 1, rule="other")
    with pytest.raises(ValueError):
        DyadicFiltration(0, 1, alpha=0.25)
    with pytest.raises(ValueError):
        DyadicFiltration(0, 1, j_min=3, j_max=2)


@pytest.mark.parametrize("rule", ["scaled", "thirds"])
@pytest.mark.parametrize("d", [1, 2])
def test_levels_are_nested(rule, d):
    for system in filtrations(d, -10, 10, rule):
        for j in range(-10, 10):
            offset = (system.shift(j) - system.shift(j + 1)) / system.side(j + 1)
            assert abs(offset - round(offset)) < 1e-9


@pytest.mark.parametrize("d", [1, 2, 3])
def test_scaled_rule_separates_systems_at_every_level(d):
    M = shift_modulus(d)
    systems = filtrations(d, -12, 4)
    for j in range(-12, 5):
        relative = [(s.shift(j) / s.side(j)) % 1 for s in systems]
        points = relative + [0.0]
        for a in range(len(points)):
            for b in range(a + 1, len(points)):
                gap = abs(points[a] - points[b])
                assert min(gap, 1 - gap) >= 1 / M - 1e-9


@given(st.integers(-128, 128), st.integers(0, 5), st.sampled_from([1, 2]))
def test_cover_matches_exhaustive_search(centre_units, k, d):
    side = 2.0 ** (k - 2)
    centre = (centre_units / 8,) * d if d == 1 else (centre_units / 8, -centre_units / 16)
    Q = Cube(centre, side)
    systems = filtrations(d, -12, 12)
    result = cover_cube(Q, systems)
    assert result.ratio == brute_cover_ratio(Q, systems)
    assert result.ratio <= (2 * shift_modulus(d)) ** d
    cell = systems[result.index].cube(result.level, result.position)
    lo, hi = np.asarray(Q.center) - side / 2, np.asarray(Q.center) + side / 2
    cell_lo = np.asarray(cell.center) - cell.side / 2
    assert np.all(cell_lo <= lo + 1e-12) and np.all(hi <= cell_lo + cell.side + 1e-12)


def test_unit_cube_can_need_side_four():
    # Side-2 cells of the two systems start at 4/3 and 2/3 modulo 2, so a unit
    # cube starting at 1/2 fits in neither.
    Q = Cube((1.0,), 1.0)
    result = cover_cube(Q, filtrations(1, -8, 8))
    assert result.ratio == 4.0 == brute_cover_ratio(Q, filtrations(1, -8, 8))


def test_thirds_rule_loses_the_covering_bound_for_distant_cubes():
    Q = Cube((21.03125,), 1.0)
    assert cover_cube(Q, filtrations(1, -12, 14, "thirds")).ratio == 128.0
    assert cover_cube(Q, filtrations(1, -12, 14, "scaled")).ratio == 4.0


def test_cover_ties_go_to_lowest_index_and_range_errors():
    systems = [DyadicFiltration(0, 1, -2, 4, alpha=1 / 3), DyadicFiltration(1, 1, -2, 4, alpha=1 / 3)]
    assert cover_cube(Cube((1 / 3 + 0.25,), 0.5), systems).index == 0
    with pytest.raises(RangeExhaustedError):
        cover_cube(Cube((0.5,), 1.0), filtrations(1, 0, 4))


def test_for_grid_levels():
    system = DyadicFiltration.for_grid(1, GRID)
    assert (system.j_min, system.j_max) == (-3, 5)
    with pytest.raises(ValueError):
        DyadicFiltration.for_grid(0, GridSpec(1, 1, 6.0, 64))


@pytest.mark.parametrize("grid", [GRID, GRID2])
def test_conditional_expectation(grid):
    f = make_field({"kind": "band-limited-random", "kmax": 4}, grid, seed=1)
    system = DyadicFiltration.for_grid(1, grid)
    for j in (0, 2):
        e = conditional_expectation(f, system, j)
        assert np.allclose(conditional_expectation(e, system, j).samples, e.samples)
        assert np.allclose(e.samples.sum(axis=tuple(range(grid.d))), f.samples.sum(axis=tuple(range(grid.d))))
        coarse = conditional_expectation(conditional_expectation(f, system, j + 1), system, j)
        assert np.allclose(coarse.samples, e.samples)
    # brute-force average over one level-0 cell
    e = conditional_expectation(f, system, 0)
    point = (grid.N // 2,) * grid.d
    m = system.cell_index(grid.axis()[grid.N // 2], 0)
    members = system.cell_index(grid.axis(), 0) % int(grid.L) == m % int(grid.L)
    index = np.ix_(*([np.flatnonzero(members)] * grid.d))
    assert np.allclose(e.samples[point], f.samples[index].mean(axis=tuple(range(grid.d))))
    with pytest.raises(ValueError):
        conditional_expectation(f, system, 20)


@pytest.mark.parametrize("grid", [GRID, GRID2])
@pytest.mark.parametrize("side", [1.0, 0.5, 0.25])
def test_random_atoms_are_valid(grid, side):
    Q = Cube((0.25 + side / 2,) * grid.d, side)
    atom = make_random_atom(Q, 3, grid)
    report = validate_atom(atom.a, Q)
    assert report.passed
    assert abs(report.size_ratio - 1) < 1e-12
    assert atom.kind == ("unit" if side == 1 else "small")
    assert report.to_dict()["passed"]


def test_unresolved_atom_cube_is_rejected():
    with pytest.raises(ValueError, match="too few grid points"):
        make_random_atom(Cube((0.3125, 0.3125), 0.125), 0, GRID2)


def test_validation_detects_violations():
    Q = Cube((0.5,), 0.5)
    atom = make_random_atom(Q, 1, GRID)
    leaky = atom.a.samples.copy()
    leaky[0] = np.eye(2)
    assert validate_atom(SampledField(GRID, leaky), Q).support_leak > 0
    assert not validate_atom(atom.a * 2, Q).passed
    mask = Q.mask(GRID)
    shifted = atom.a.samples + np.where(mask[:, None, None], 0.1 * np.eye(2), 0)
    assert validate_atom(SampledField(GRID, shifted), Q).mean_norm > 1e-3
    with pytest.raises(ValueError):
        validate_atom(atom.a, Cube((0.0,), 2.0))


@pytest.mark.parametrize("grid", [GRID, GRID2])
def test_decomposition_reconstructs_field(grid):
    f = make_field({"kind": "gaussian-bump", "sigma": 0.25}, grid)
    system = DyadicFiltration.for_grid(0, grid)
    # keep the seam cell empty
    seam = system.cell_index(grid.axis(), 0) % int(grid.L) == system.cell_index(grid.axis()[0], 0) % int(grid.L)
    mask = np.zeros(grid.shape, dtype=bool)
    for axis in range(grid.d):
        shape = [1] * grid.d
        shape[axis] = grid.N
        mask |= np.broadcast_to(seam.reshape(shape), grid.shape)
    f = SampledField(grid, np.where(mask[..., None, None], 0, f.samples))
    terms = atomic_decompose(f, system)
    total = sum(lam * atom.a.samples for lam, atom in terms)
    assert np.abs(total - f.samples).max() < 1e-10 * np.abs(f.samples).max()
    assert all(validate_atom(atom.a, atom.cube).passed for _, atom in terms)
    assert all(lam > 0 for lam, _ in terms)


def test_single_atom_and_seam_rejection():
    Q = Cube((1 / 3 + 0.125,), 0.25)
    atom = make_random_atom(Q, 5, GRID)
    terms = atomic_decompose(atom.a * 2.5)
    assert len(terms) == 1 and math.isclose(terms[0][0], 2.5, rel_tol=1e-9)
    assert atomic_decompose(SampledField.zeros(GRID)) == []
    with pytest.raises(SupportViolationError):
        atomic_decompose(make_field({"kind": "constant", "matrix": [[1, 0], [0, 1]]}, GRID))


@given(st.integers(0, 1000), st.lists(st.sampled_from([0.125, 0.5, 1.0, 2.0]), min_size=1, max_size=4))
def test_mean_function_ratio_in_l1_is_one(seed, sides):
    rng = np.random.default_rng(seed)
    fields = [rng.random(GRID.shape) for _ in sides]
    assert math.isclose(mean_function_ratio(fields, sides, GRID, 1.0), 1.0, rel_tol=1e-12)
    assert mean_function_ratio(fields, sides, GRID, 4.0) <= 1 + 1e-12


def test_mean_function_ratio_validation():
    with pytest.raises(ValueError):
        mean_function_ratio([np.ones(GRID.shape)], [0.5, 1.0], GRID, 2)
    with pytest.raises(ValueError):
        mean_function_ratio([-np.ones(GRID.shape)], [0.5], GRID, 2)
    assert mean_function_ratio([np.zeros(GRID.shape)], [0.5], GRID, 2) == 0.0
