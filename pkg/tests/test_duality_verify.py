import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ovhardy.dyadic_atoms import cover_cube
from ovhardy.field_core import GridSpec, SampledField, ScaleGrid, make_field
from ovhardy.duality_verify import (
    BAND_LIMITED_FAMILY,
    Check,
    L2Identity,
    SuiteConfig,
    _check,
    atom_suite,
    bmo_facts_suite,
    build_family,
    carleson_bmo_suite,
    covering_cubes,
    covering_suite,
    covering_systems,
    derivative_domination,
    domination_suite,
    duality_bound_suite,
    equivalence_suite,
    exhaustive_cover_ratio,
    fe_residual,
    gtilde_domination,
    identity_suite,
    l2_identity,
    l2_weight_range,
    pairing,
    plancherel_residual,
    polarization_residual,
    spectral_polarization_residual,
)

from conftest import random_field

GRID = GridSpec(1, 2, 8.0, 256)
SMALL = SuiteConfig(grid=GRID, family_size=3, pairs=2, atoms=4, cubes=200, refine=False)


@given(st.integers(0, 10_000))
def test_pairing_is_exactly_conjugate_symmetric(seed):
    f, g = random_field(GRID, seed), random_field(GRID, seed + 1)
    assert pairing(f, g) == pairing(g, f).conjugate()


def test_pairing_grid_mismatch():
    with pytest.raises(ValueError):
        pairing(random_field(GRID), random_field(GridSpec(1, 2, 8.0, 128)))
    with pytest.raises(ValueError):
        polarization_residual(random_field(GRID), random_field(GridSpec(1, 2, 8.0, 128)))


def test_constant_is_orthogonal_to_mean_zero_fields():
    f = make_field({"kind": "band-limited-random", "kmax": 8}, GRID, seed=2)
    f = SampledField(GRID, f.samples - f.samples.mean(axis=0))
    g = make_field({"kind": "constant", "matrix": [[1, 2], [3, 4j]]}, GRID)
    assert abs(pairing(f, g)) < 1e-12


def test_identities_on_a_band_limited_pair():
    f, g = build_family(BAND_LIMITED_FAMILY, 2, GRID, 9)
    assert plancherel_residual(f) < 1e-12
    assert spectral_polarization_residual(f, g) < 1e-10
    assert polarization_residual(f, g) < 0.01
    assert l2_identity(f).relative < 0.02
    assert fe_residual(f) < 1e-3
    assert fe_residual(SampledField.zeros(GRID)) == 0.0


def test_l2_identity_relative_error_definition():
    assert L2Identity(1.1, 1.0).relative == pytest.approx(0.1)
    assert L2Identity(0.5, 0.0).relative == 0.5


def test_l2_weight_range_is_exact_bracket():
    low, high = l2_weight_range(GRID)
    assert low == pytest.approx(1 - 1 / math.e, abs=1e-9)
    assert low >= 1 - 1 / math.e - 1e-15 and high == 1.0


def test_dominations_are_finite():
    f = make_field({"kind": "gaussian-bump", "sigma": 0.5}, GRID)
    scales = ScaleGrid.default(GRID)
    assert 0 < gtilde_domination(f, (0.1, 0.4), scales) < math.inf
    assert 0 < derivative_domination(f, scales) < math.inf
    assert gtilde_domination(SampledField.zeros(GRID), (0.1,), scales) == 0.0


def test_check_semantics():
    assert _check("s", "c", 1.0, 1.0, "m", "o", strict=False).passed
    assert not _check("s", "c", 1.0, 1.0, "m", "o").passed
    assert not _check("s", "c", math.nan, 1.0, "m", "o").passed
    assert not _check("s", "c", math.inf, math.inf, "m", "o", strict=False).passed
    record = Check("s", "c", 0.5, 1.0, True, "m", "o", p=2.0).to_dict()
    assert record["p"] == 2.0 and record["module"] == "m"


def test_exhaustive_oracle_agrees_with_cover():
    config = SuiteConfig(cubes=300)
    for d in (1, 2):
        systems = covering_systems(d)
        for Q in covering_cubes(config, d):
            assert cover_cube(Q, systems).ratio == exhaustive_cover_ratio(Q, systems)


def test_suite_config_validation():
    with pytest.raises(ValueError):
        SuiteConfig(p_values=(0.5,))
    with pytest.raises(ValueError):
        SuiteConfig(family=())
    assert SuiteConfig.conjugate(1) == math.inf and SuiteConfig.conjugate(4) == pytest.approx(4 / 3)
    assert len(SuiteConfig().grids()) == 2 and SuiteConfig().grids()[1].N == 2048
    assert SuiteConfig().to_dict()["caps_version"] == 1


def test_build_family_is_deterministic():
    a = build_family(BAND_LIMITED_FAMILY, 3, GRID, 4)
    b = build_family(BAND_LIMITED_FAMILY, 3, GRID, 4)
    assert all(np.array_equal(x.samples, y.samples) for x, y in zip(a, b))
    assert not np.array_equal(a[0].samples, a[1].samples)


def all_passed(checks):
    return all(c.passed for c in checks)


def test_small_identity_suite():
    result = identity_suite(SMALL)
    names = {c.check for c in result["checks"]}
    assert {"plancherel", "l2-identity", "polarization", "polarization-spectral", "fe-identity"} <= names
    assert all_passed(result["checks"])


def test_small_equivalence_suite_has_unit_diagonal():
    report = equivalence_suite(SMALL)
    for name, row in report.ratios.items():
        assert row[name] == 1.0
        for other, value in row.items():
            assert value >= 1.0 and report.ratios[other][name] == pytest.approx(value, rel=1e-14)
    assert all_passed(report.metadata["checks"])


def test_small_duality_and_carleson_suites():
    duality = duality_bound_suite(SMALL)
    assert duality.metadata["pairs"] == 9 and duality.skipped == 0
    assert all_passed(duality.metadata["checks"])
    carleson = carleson_bmo_suite(SMALL)
    assert 0 < carleson.constants["upper"] < math.inf and 0 < carleson.constants["lower"] < math.inf


def test_duality_suite_skips_degenerate_pairs():
    zero = SuiteConfig(grid=GRID, family=({"kind": "constant", "matrix": [[0, 0], [0, 0]]},), family_size=2, refine=False)
    report = duality_bound_suite(zero)
    assert report.skipped == 8
    assert report.constants == {"poisson": 0.0, "gauss": 0.0}


def test_small_remaining_suites():
    for result in (domination_suite(SMALL), bmo_facts_suite(SMALL), atom_suite(SMALL), covering_suite(SMALL)):
        assert all_passed(result["checks"])
        assert all(math.isfinite(v) for v in result["constants"].values())


def test_threads_do_not_change_results():
    threaded = SuiteConfig(grid=GRID, family_size=3, pairs=2, refine=False, threads=3)
    assert domination_suite(threaded)["values"] == domination_suite(SMALL)["values"]
