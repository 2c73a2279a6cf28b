"""Acceptance criteria at their required tolerances; each prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py``; the lines appear even when
output capture is on.
"""

import math
import time

import pytest

from ovhardy.duality_verify import (
    Check,
    SuiteConfig,
    _check,
    atom_suite,
    bmo_facts_suite,
    carleson_bmo_suite,
    covering_cubes,
    covering_suite,
    covering_systems,
    domination_suite,
    duality_bound_suite,
    equivalence_suite,
    fe_identity_suite,
    l2_identity_checks,
    plancherel_checks,
    polarization_checks,
    quadruple_checks,
)
from ovhardy.dyadic_atoms import cover_cube
from ovhardy.field_core import GridSpec

CONFIG = SuiteConfig()


@pytest.fixture
def verdict(capsys):
    def report(number, title, checks, elapsed=None, budget=None):
        checks = list(checks)
        if budget is not None:
            checks.append(_check("runtime", f"criterion-{number}", elapsed, budget, "tests", "wall-clock"))
        failed = [c for c in checks if not c.passed]
        summary = "; ".join(f"{c.check}{_tag(c)} {c.observed:.3g} vs {c.limit:.3g}" for c in (failed or checks))
        line = f"criterion {number:2d} {'PASS' if not failed else 'FAIL'} {title}: {summary}"
        with capsys.disabled():
            print("\n" + line)
        assert not failed, line

    return report


def _tag(check: Check) -> str:
    parts = [f"p={check.p:g}" if check.p is not None else "", check.variant or ""]
    label = ",".join(p for p in parts if p)
    return f"[{label}]" if label else ""


def timed(func, *args):
    start = time.perf_counter()
    result = func(*args)
    return result, time.perf_counter() - start


def test_criterion_01_plancherel(verdict):
    config = SuiteConfig(grid=GridSpec(1, 2, 32.0, 1024), family_size=20)
    (_, checks), elapsed = timed(plancherel_checks, config)
    verdict(1, "Plancherel identity", checks, elapsed, 5.0)


def test_criterion_02_l2_identity(verdict):
    (_, checks), elapsed = timed(l2_identity_checks, CONFIG)
    verdict(2, "L2 identity and weight bracket", checks, elapsed, 60.0)


def test_criterion_03_polarization(verdict):
    assert CONFIG.pairs == 10
    _, checks = polarization_checks(CONFIG)
    verdict(3, "polarized identity", checks)


def test_criterion_04_fe_identity(verdict):
    verdict(4, "F(E(f)) = f", fe_identity_suite(CONFIG)["checks"])


def test_criterion_05_resolution_of_unity(verdict):
    _, checks = quadruple_checks(CONFIG)
    assert {c.check for c in checks} == {"quadruple-defect-poisson", "quadruple-defect-gaussian-laplacian"}
    verdict(5, "resolution of unity", checks)


def test_criterion_06_dyadic_covering(verdict):
    assert CONFIG.cubes == 10_000
    result = covering_suite(CONFIG, dims=(1, 2), oracle=True)
    elapsed = 0.0
    for d in (1, 2):
        systems = covering_systems(d)
        cubes = covering_cubes(CONFIG, d)
        start = time.perf_counter()
        for Q in cubes:
            cover_cube(Q, systems)
        elapsed += time.perf_counter() - start
    verdict(6, "dyadic covering", result["checks"], elapsed, 10.0)


def test_criterion_07_atoms(verdict):
    assert CONFIG.atoms == 100 and CONFIG.refine
    result = atom_suite(CONFIG)
    assert {"unit", "small"} <= set(result["values"]["kind"])
    assert math.isfinite(result["constants"]["max_h1"])
    verdict(7, "atom boundedness", result["checks"])


def test_criterion_08_carleson_bmo(verdict):
    assert CONFIG.family_size == 20 and CONFIG.refine
    report = carleson_bmo_suite(CONFIG)
    verdict(8, "Carleson versus bmo bracket", report.metadata["checks"])


def test_criterion_09_dominations(verdict):
    result = domination_suite(CONFIG)
    verdict(9, "pointwise dominations", result["checks"])


def test_criterion_10_equivalences(verdict):
    assert CONFIG.p_values == (1.0, 2.0, 4.0) and CONFIG.refine
    report, elapsed = timed(equivalence_suite, CONFIG)
    verdict(10, "characterization equivalence", report.metadata["checks"], elapsed, 600.0)


def test_criterion_11_duality(verdict):
    report = duality_bound_suite(CONFIG)
    assert report.metadata["pairs"] == 400
    verdict(11, "duality bound", report.metadata["checks"])


def test_criterion_12_bmo_facts(verdict):
    result = bmo_facts_suite(CONFIG)
    verdict(12, "bmo facts", result["checks"])
