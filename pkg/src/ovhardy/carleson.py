"""Tent integrals, Carleson functionals, q-Carleson majorant checks and tent-space norms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .field_core import CLAMP_RTOL, SampledField, ScaleGrid
from .kernels import DPOISSON
from .norms_spaces import Cube, CubeFamily, box_mean
from .square_functions import ConeProfile, ConfigurationError, _measure_name, cone_profile, conic_square, scale_power

__all__ = [
    "Tent",
    "tent_density",
    "tent_integral",
    "carleson_functional",
    "q_carleson_majorant_check",
    "MajorantReport",
    "tent_norms",
    "tent_pairing",
]


@dataclass(frozen=True)
class Tent:
    """``T(Q) = Q x (0, l(Q)]`` restricted to the scale nodes of a profile."""

    cube: Cube

    @property
    def height(self) -> float:
        return self.cube.side


def _power(profile: ConeProfile, measure: str | None) -> int:
    if measure is not None and measure != _measure_name(profile.kernel_label):
        raise ConfigurationError(
            f"measure {measure!r} is inconsistent with kernel label {profile.kernel_label!r}"
        )
    return scale_power(profile.kernel_label)


def tent_density(profile: ConeProfile, height: float, power: int | None = None) -> np.ndarray:
    """``sum_{eps_j <= height} w_j eps_j^k |u(s, eps_j)|^2``: the tent measure integrated in scale."""
    power = scale_power(profile.kernel_label) if power is None else power
    keep = profile.scales.nodes <= height
    factors = profile.scales.weights[keep] * profile.scales.nodes[keep] ** power
    squared = profile.squared()[keep]
    return np.tensordot(factors, squared, axes=(0, 0))


def tent_integral(profile: ConeProfile, cube: Cube, measure: str | None = None) -> np.ndarray:
    """Un-normalized ``int_{T(Q)} d lambda`` by direct summation over the cube's grid points."""
    power = _power(profile, measure)
    density = tent_density(profile, cube.side, power)
    mask = cube.mask(profile.grid)
    return density[mask].sum(axis=0) * profile.grid.cell_volume


def _lambda_max(stack: np.ndarray) -> np.ndarray:
    stack = 0.5 * (stack + np.conj(np.swapaxes(stack, -1, -2)))
    return np.clip(np.linalg.eigvalsh(stack)[..., -1], 0.0, None)


def _normalized_tents(profile: ConeProfile, side: float, power: int) -> np.ndarray:
    grid = profile.grid
    m = int(round(side / grid.h))
    return box_mean(tent_density(profile, side, power), m, grid.d)


def carleson_functional(
    profile: ConeProfile,
    family: CubeFamily | None = None,
    measure: str | None = None,
    include_unit: bool = False,
) -> float:
    """``sup_Q (1/|Q|) ||int_{T(Q)} d lambda||`` over cubes with ``|Q| < 1`` (or ``<= 1``)."""
    power = _power(profile, measure)
    grid = profile.grid
    family = CubeFamily.default(grid, "small") if family is None else family
    sides = [s for s in family.sides if s < 1 or (include_unit and abs(s - 1) < 1e-12)]
    if include_unit and 1.0 not in sides:
        sides.append(1.0)
    best = 0.0
    for side in sides:
        stack = _normalized_tents(profile, side, power)
        stride = family.stride_for(side)
        stack = stack[tuple(slice(None, None, stride) for _ in range(grid.d))]
        best = max(best, float(_lambda_max(stack).max()))
    return best


@dataclass(frozen=True)
class MajorantReport:
    """Outcome of checking ``(1/|Q|) int_{T(Q)} lambda_g <= C a(s)`` for ``s`` in ``Q``."""

    constant: float
    violation: float
    cap: float | None
    checked: int

    @property
    def passed(self) -> bool:
        if self.cap is None:
            return math.isfinite(self.constant)
        return self.constant <= self.cap

    def to_dict(self) -> dict[str, Any]:
        return {
            "constant": self.constant,
            "violation": self.violation,
            "cap": self.cap,
            "checked": self.checked,
            "passed": self.passed,
        }


def _inverse_root(a: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Pseudo-inverse square root of PSD ``a`` and the projector onto its kernel."""
    values, vectors = np.linalg.eigh(0.5 * (a + np.conj(np.swapaxes(a, -1, -2))))
    positive = values > tol
    inv = np.where(positive, 1.0 / np.sqrt(np.where(positive, values, 1.0)), 0.0)
    adj = np.conj(np.swapaxes(vectors, -1, -2))
    inv_root = (vectors * inv[..., None, :]) @ adj
    kernel = (vectors * (~positive)[..., None, :]) @ adj
    return inv_root, kernel


def q_carleson_majorant_check(
    g: SampledField,
    q: float,
    a: np.ndarray | SampledField,
    scales: ScaleGrid | None = None,
    family: CubeFamily | None = None,
    cap: float | None = None,
) -> MajorantReport:
    """Smallest ``C`` with ``(1/|Q|) int_{T(Q)} |d/d eps P_eps g|^2 eps <= C a(s)`` for all ``s`` in ``Q``.

    ``Q`` ranges over the small cubes of ``family``.  ``C`` is infinite when a
    tent average charges the kernel of ``a(s)``.  ``violation`` is the largest
    eigenvalue of ``T_Q - cap a(s)`` (of ``T_Q`` when no cap is given).
    """
    if not q > 2:
        raise ValueError(f"q must exceed 2, got {q}")
    grid = g.grid
    a = a.samples if isinstance(a, SampledField) else np.asarray(a, dtype=np.complex128)
    if a.shape != grid.field_shape:
        raise ValueError("majorant must have the field shape of g")
    eig = np.linalg.eigvalsh(0.5 * (a + np.conj(np.swapaxes(a, -1, -2))))
    scale = max(float(np.abs(eig).max()), 1e-300)
    if eig.min() < -1e-10 * scale:
        raise ValueError("majorant must be positive semidefinite")
    scales = ScaleGrid.default(grid) if scales is None else scales
    family = CubeFamily.default(grid, "small") if family is None else family
    profile = cone_profile(g, DPOISSON, scales)
    inv_root, kernel = _inverse_root(a, CLAMP_RTOL * scale)

    constant, violation, checked = 0.0, -math.inf, 0
    tents = {side: _normalized_tents(profile, side, 2) for side in family.sides if side < 1}
    t_scale = max((float(_lambda_max(t).max()) for t in tents.values()), default=0.0)
    for side, stack in tents.items():
        m = int(round(side / grid.h))
        stride = family.stride_for(side)
        starts = stack[tuple(slice(None, None, stride) for _ in range(grid.d))]
        for offset in np.ndindex(*([m] * grid.d)):
            # a(s) for s = start + offset, sampled at the same strided starts
            shift = tuple(-o for o in offset)
            axes = tuple(range(grid.d))
            view = tuple(slice(None, None, stride) for _ in range(grid.d))
            root = np.roll(inv_root, shift, axis=axes)[view]
            null = np.roll(kernel, shift, axis=axes)[view]
            local = _lambda_max(root @ starts @ root)
            charged = _lambda_max(null @ starts @ null)
            if np.any(charged > 1e-12 * max(t_scale, 1e-300)):
                constant = math.inf
            constant = max(constant, float(local.max(initial=0.0)))
            a_view = np.roll(a, shift, axis=axes)[view]
            reference = starts if cap is None else starts - cap * a_view
            violation = max(violation, float(np.linalg.eigvalsh(reference)[..., -1].max()))
            checked += local.size
    return MajorantReport(constant, violation, cap, checked)


def tent_norms(
    h: ConeProfile, p: float, family: CubeFamily | None = None, ball: str = "overlap"
) -> float:
    """Column tent-space norm with the measure ``ds d eps / eps`` on the strip.

    ``p < inf``: ``||A(h)||_p`` with ``A(h)(s)^2 = int int_{|t| < eps} |h(s+t, eps)|^2 dt d eps / eps^{d+1}``.
    ``p = inf``: ``sup_{|Q| <= 1} ||(1/|Q|) int_{T(Q)} |h|^2 ds d eps / eps||^{1/2}``.
    """
    general = ConeProfile(h.grid, h.scales, h.values, "tent")
    if math.isinf(p):
        return math.sqrt(carleson_functional(general, family, include_unit=True))
    return conic_square(general, ball=ball).lp_norm(p)


def tent_pairing(h: ConeProfile, k: ConeProfile) -> complex:
    """``int int tr(h k*) ds d eps / eps``."""
    if h.grid != k.grid or len(h.scales) != len(k.scales):
        raise ValueError("tent pairing needs profiles on the same grid and scales")
    weights = h.scales.weights
    inner = np.sum(h.values * np.conj(k.values), axis=tuple(range(1, h.values.ndim)))
    return complex(np.sum(weights * inner) * h.grid.cell_volume)
