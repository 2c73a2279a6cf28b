"""Matrix-valued fields on a periodic box: grids, transforms, traces and L_p norms.

A field is an n x n complex matrix attached to every point of the grid
``[-L/2, L/2)^d`` with ``N`` samples per axis.  The trace on the ambient
algebra is the Riemann sum ``h^d * sum_s tr(.)`` and spectral coefficients are
normalized so that Plancherel holds with frequency weight ``(1/L)^d``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

__all__ = [
    "CLAMP_RTOL",
    "GridSpec",
    "SampledField",
    "SpectralField",
    "ScaleGrid",
    "FieldDecodeError",
    "MalformedHeaderError",
    "LengthMismatchError",
    "VersionMismatchError",
    "make_field",
    "forward_transform",
    "inverse_transform",
    "matrix_abs",
    "psd_power",
    "psd_sqrt",
    "lp_norm",
    "psd_lp_norm",
    "adjoint_field",
    "serialize",
    "deserialize",
    "spectral_l2_squared",
    "total_trace",
]

CLAMP_RTOL = 1e-14
"""Eigenvalues of a PSD matrix below ``CLAMP_RTOL * ||A||`` are treated as zero."""

_MAGIC = b"OVHARDYFIELD"
_FORMAT_VERSION = 1


def _is_power_of_two(value: int) -> bool:
    return value > 0 and (value & (value - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[-L/2, L/2)^d`` carrying n x n matrices."""

    d: int
    n: int
    L: float
    N: int

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise ValueError(f"dimension d must be 1 or 2, got {self.d}")
        if self.n < 1:
            raise ValueError(f"matrix size n must be positive, got {self.n}")
        if not self.L > 0 or not math.isfinite(self.L):
            raise ValueError(f"box side L must be positive and finite, got {self.L}")
        if not _is_power_of_two(int(self.N)) or int(self.N) != self.N:
            raise ValueError(f"samples per axis N must be a power of two, got {self.N}")
        if self.N ** self.d * self.n * self.n > 2**28:
            raise ValueError("grid exceeds the memory budget of 2^28 matrix entries")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def field_shape(self) -> tuple[int, ...]:
        return self.shape + (self.n, self.n)

    def axis(self) -> np.ndarray:
        """Sample coordinates along one axis."""
        return -self.L / 2 + self.h * np.arange(self.N)

    def coordinates(self) -> np.ndarray:
        """Array of shape ``grid.shape + (d,)`` with the sample positions."""
        axes = np.meshgrid(*([self.axis()] * self.d), indexing="ij")
        return np.stack(axes, axis=-1)

    def frequency_axis(self) -> np.ndarray:
        """Frequencies ``k/L`` along one axis, in FFT order."""
        return np.fft.fftfreq(self.N, d=self.h)

    def frequencies(self) -> np.ndarray:
        """Array of shape ``grid.shape + (d,)`` with the frequency vectors in FFT order."""
        axes = np.meshgrid(*([self.frequency_axis()] * self.d), indexing="ij")
        return np.stack(axes, axis=-1)

    def frequency_norms(self) -> np.ndarray:
        return np.linalg.norm(self.frequencies(), axis=-1)

    def refined(self, factor: int = 2) -> "GridSpec":
        """Same box with ``factor`` times more samples per axis."""
        return GridSpec(self.d, self.n, self.L, self.N * factor)

    def with_matrix_size(self, n: int) -> "GridSpec":
        return GridSpec(self.d, n, self.L, self.N)

    def to_dict(self) -> dict[str, Any]:
        return {"d": self.d, "n": self.n, "L": self.L, "N": self.N}


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SampledField:
    """Matrix samples on a grid; ``samples`` has shape ``grid.field_shape``."""

    grid: GridSpec
    samples: np.ndarray

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=np.complex128, copy=True)
        if samples.shape != self.grid.field_shape:
            raise ValueError(f"samples have shape {samples.shape}, expected {self.grid.field_shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("field samples must be finite")
        object.__setattr__(self, "samples", _frozen(samples))

    def __add__(self, other: "SampledField") -> "SampledField":
        _check_same_grid(self.grid, other.grid)
        return SampledField(self.grid, self.samples + other.samples)

    def __sub__(self, other: "SampledField") -> "SampledField":
        _check_same_grid(self.grid, other.grid)
        return SampledField(self.grid, self.samples - other.samples)

    def __mul__(self, scalar: complex) -> "SampledField":
        return SampledField(self.grid, self.samples * scalar)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SampledField":
        return cls(grid, np.zeros(grid.field_shape, dtype=np.complex128))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients ``h^d * sum_s f(s) exp(-2 pi i xi.s)`` in FFT order."""

    grid: GridSpec
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        coefficients = np.array(self.coefficients, dtype=np.complex128, copy=True)
        if coefficients.shape != self.grid.field_shape:
            raise ValueError(
                f"coefficients have shape {coefficients.shape}, expected {self.grid.field_shape}"
            )
        object.__setattr__(self, "coefficients", _frozen(coefficients))


@dataclass(frozen=True, eq=False)
class ScaleGrid:
    """Quadrature nodes and weights in the scale variable.

    ``weights`` integrate against ``d eps / eps``.  In ``dyadic`` mode the nodes
    are ``2^-j`` and the weights are 1, so integrals become dyadic sums.
    """

    nodes: np.ndarray
    weights: np.ndarray
    mode: str = "log-uniform"
    upper: float = 1.0

    def __post_init__(self) -> None:
        nodes = np.array(self.nodes, dtype=float, copy=True)
        weights = np.array(self.weights, dtype=float, copy=True)
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.size == 0:
            raise ValueError("nodes and weights must be non-empty 1-D arrays of equal length")
        if np.any(np.diff(nodes) >= 0):
            raise ValueError("scale nodes must be strictly decreasing")
        if nodes[-1] <= 0 or nodes[0] > self.upper:
            raise ValueError(f"scale nodes must lie in (0, {self.upper}]")
        if np.any(weights <= 0):
            raise ValueError("scale weights must be positive")
        if self.mode not in ("log-uniform", "dyadic"):
            raise ValueError(f"unknown scale mode {self.mode!r}")
        object.__setattr__(self, "nodes", _frozen(nodes))
        object.__setattr__(self, "weights", _frozen(weights))

    def __len__(self) -> int:
        return self.nodes.size

    @classmethod
    def log_uniform(cls, count: int, eps_min: float, eps_max: float = 1.0) -> "ScaleGrid":
        """Midpoint rule in ``log eps`` on ``[eps_min, eps_max]``."""
        if count < 1 or not 0 < eps_min < eps_max:
            raise ValueError("need count >= 1 and 0 < eps_min < eps_max")
        step = math.log(eps_max / eps_min) / count
        nodes = eps_max * np.exp(-(np.arange(count) + 0.5) * step)
        return cls(nodes, np.full(count, step), "log-uniform", max(1.0, eps_max))

    @classmethod
    def dyadic(cls, levels: int) -> "ScaleGrid":
        """Nodes ``2^-j`` for ``j = 1..levels`` with unit weights."""
        if levels < 1:
            raise ValueError("need at least one dyadic level")
        nodes = 2.0 ** -np.arange(1, levels + 1)
        return cls(nodes, np.ones(levels), "dyadic")

    @classmethod
    def default(cls, grid: GridSpec, count: int = 64) -> "ScaleGrid":
        """Default local grid: ``count`` nodes on ``[h/16, 1]``."""
        return cls.log_uniform(count, grid.h / 16)

    def truncated(self, upper: float) -> "ScaleGrid":
        """Keep only nodes strictly below ``upper``."""
        keep = self.nodes < upper
        if not np.any(keep):
            raise ValueError(f"no scale nodes below {upper}")
        return ScaleGrid(self.nodes[keep], self.weights[keep], self.mode, self.upper)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "count": len(self),
            "eps_min": float(self.nodes[-1]),
            "eps_max": float(self.nodes[0]),
        }


def _check_same_grid(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


def _spatial_axes(grid: GridSpec) -> tuple[int, ...]:
    return tuple(range(grid.d))


def _phase(grid: GridSpec) -> np.ndarray:
    """Factor ``exp(i pi k)`` accounting for the box starting at ``-L/2``."""
    k = np.fft.fftfreq(grid.N, d=1.0 / grid.N)
    sign = np.cos(np.pi * k)
    phase = sign
    for _ in range(grid.d - 1):
        phase = np.multiply.outer(phase, sign)
    return phase


def forward_transform(f: SampledField) -> SpectralField:
    grid = f.grid
    coeffs = np.fft.fftn(f.samples, axes=_spatial_axes(grid))
    coeffs *= grid.cell_volume * _phase(grid)[(...,) + (None, None)]
    return SpectralField(grid, coeffs)


def inverse_transform(F: SpectralField) -> SampledField:
    grid = F.grid
    coeffs = F.coefficients * (_phase(grid)[(...,) + (None, None)] / grid.cell_volume)
    return SampledField(grid, np.fft.ifftn(coeffs, axes=_spatial_axes(grid)))


def spectral_l2_squared(F: SpectralField) -> float:
    """``(1/L)^d * sum_k tr|F(xi_k)|^2``, the frequency side of Plancherel."""
    return float(np.sum(np.abs(F.coefficients) ** 2)) / F.grid.L**F.grid.d


def total_trace(f: SampledField) -> complex:
    """``h^d * sum_s tr f(s)``."""
    return complex(np.sum(np.trace(f.samples, axis1=-2, axis2=-1))) * f.grid.cell_volume


def _hermitian_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))
    return np.linalg.eigh(a)


def psd_power(a: np.ndarray, power: float) -> np.ndarray:
    """Fractional power of (stacks of) PSD matrices with eigenvalue clamping."""
    a = np.asarray(a, dtype=np.complex128)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    values, vectors = _hermitian_eig(a)
    scale = np.max(np.abs(values), axis=-1, keepdims=True)
    values = np.where(values < CLAMP_RTOL * scale, 0.0, values)
    powered = values**power
    return (vectors * powered[..., None, :]) @ np.conj(np.swapaxes(vectors, -1, -2))


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    return psd_power(a, 0.5)


def matrix_abs(a: np.ndarray) -> np.ndarray:
    """``(A* A)^{1/2}`` for a matrix or a stack of matrices."""
    a = np.asarray(a, dtype=np.complex128)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return psd_sqrt(np.conj(np.swapaxes(a, -1, -2)) @ a)


def _clamped_eigvalsh(a: np.ndarray) -> np.ndarray:
    a = 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))
    values = np.linalg.eigvalsh(a)
    scale = np.max(np.abs(values), axis=-1, keepdims=True)
    return np.where(values < CLAMP_RTOL * scale, 0.0, values)


def _check_p(p: float) -> None:
    if not p >= 1:
        raise ValueError(f"exponent p must be at least 1, got {p}")


def lp_norm(f: SampledField, p: float) -> float:
    """``(h^d * sum_s tr|f(s)|^p)^{1/p}``; for ``p = inf`` the max operator norm."""
    _check_p(p)
    singular = np.linalg.svd(f.samples, compute_uv=False)
    if math.isinf(p):
        return float(singular.max()) if singular.size else 0.0
    return float(np.sum(singular.ravel() ** p) * f.grid.cell_volume) ** (1.0 / p)


def psd_lp_norm(square: np.ndarray, grid: GridSpec, p: float) -> float:
    """L_p norm of ``S^{1/2}`` for a PSD field ``S`` given as a raw array."""
    _check_p(p)
    values = _clamped_eigvalsh(square)
    if math.isinf(p):
        return float(np.sqrt(values.max())) if values.size else 0.0
    return float(np.sum(values.ravel() ** (p / 2)) * grid.cell_volume) ** (1.0 / p)


def adjoint_field(f: SampledField) -> SampledField:
    return SampledField(f.grid, np.conj(np.swapaxes(f.samples, -1, -2)))


# ----------------------------------------------------------------------------
# Test-field factory


def _random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (a + a.conj().T) / 2


_SCALAR_FUNCTIONS: dict[str, Callable[[np.ndarray, Mapping[str, Any]], np.ndarray]] = {
    "gaussian": lambda r2, p: np.exp(-r2 / (2 * p.get("sigma", 1.0) ** 2)),
    "cauchy": lambda r2, p: 1.0 / (1.0 + r2 / p.get("sigma", 1.0) ** 2),
}


def make_field(descriptor: Mapping[str, Any], grid: GridSpec, seed: int = 0) -> SampledField:
    """Build a deterministic test field.

    Descriptor kinds:

    * ``{"kind": "gaussian-bump", "sigma": s, "center": c}`` times a random Hermitian matrix.
    * ``{"kind": "band-limited-random", "kmax": k}`` with random coefficients for ``|k| <= kmax``
      (frequency index units, ``xi = k/L``); optional ``"hermitian": true``.
    * ``{"kind": "scalar-function-lift", "function": name or callable, "matrix": M}``.
    * ``{"kind": "constant", "matrix": M}`` (default identity).
    """
    kind = descriptor.get("kind")
    rng = np.random.default_rng(seed)
    n = grid.n
    if kind == "constant":
        matrix = np.asarray(descriptor.get("matrix", np.eye(n)), dtype=np.complex128)
        return SampledField(grid, np.broadcast_to(matrix, grid.field_shape))
    if kind == "gaussian-bump":
        sigma = float(descriptor.get("sigma", grid.L / 16))
        center = np.asarray(descriptor.get("center", np.zeros(grid.d)), dtype=float)
        edge = grid.L / 2 - np.max(np.abs(center))
        boundary_value = math.exp(-(edge**2) / (2 * sigma**2))
        if boundary_value > 1e-12:
            raise ValueError(
                f"gaussian bump too wide for the box: boundary value {boundary_value:.3e} > 1e-12"
            )
        r2 = np.sum((grid.coordinates() - center) ** 2, axis=-1)
        matrix = descriptor.get("matrix")
        matrix = _random_hermitian(rng, n) if matrix is None else np.asarray(matrix)
        return SampledField(grid, np.exp(-r2 / (2 * sigma**2))[..., None, None] * matrix)
    if kind == "band-limited-random":
        kmax = float(descriptor["kmax"])
        reach = int(math.floor(kmax))
        if reach >= grid.N // 2:
            raise ValueError(f"kmax {kmax} does not fit below the Nyquist index {grid.N // 2}")
        # draw on the frequency lattice itself so the field does not depend on N
        lattice = np.stack(
            np.meshgrid(*([np.arange(-reach, reach + 1)] * grid.d), indexing="ij"), axis=-1
        ).reshape(-1, grid.d)
        lattice = lattice[np.linalg.norm(lattice, axis=-1) <= kmax]
        draws = rng.standard_normal((len(lattice), n, n)) + 1j * rng.standard_normal((len(lattice), n, n))
        coeffs = np.zeros(grid.field_shape, dtype=np.complex128)
        coeffs[tuple((lattice % grid.N).T)] = draws
        samples = inverse_transform(SpectralField(grid, coeffs)).samples
        if descriptor.get("hermitian", False):
            samples = (samples + np.conj(np.swapaxes(samples, -1, -2))) / 2
        rms = math.sqrt(float(np.mean(np.abs(samples) ** 2)) * n)
        return SampledField(grid, samples / rms if rms > 0 else samples)
    if kind == "scalar-function-lift":
        function = descriptor.get("function", "gaussian")
        r2 = np.sum(grid.coordinates() ** 2, axis=-1)
        if callable(function):
            values = np.asarray(function(grid.coordinates()), dtype=np.complex128)
        else:
            values = _SCALAR_FUNCTIONS[function](r2, descriptor)
        matrix = np.asarray(descriptor.get("matrix", np.eye(n)), dtype=np.complex128)
        return SampledField(grid, values[..., None, None] * matrix)
    raise ValueError(f"unknown field descriptor kind {kind!r}")


# ----------------------------------------------------------------------------
# OVF1 serialization


class FieldDecodeError(ValueError):
    """Base class for OVF1 decoding failures."""


class MalformedHeaderError(FieldDecodeError):
    pass


class LengthMismatchError(FieldDecodeError):
    pass


class VersionMismatchError(FieldDecodeError):
    pass


def _encode(grid: GridSpec, samples: np.ndarray) -> bytes:
    header = json.dumps(
        {"d": grid.d, "n": grid.n, "L": grid.L, "N": grid.N, "dtype": "c128"},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    payload = np.ascontiguousarray(samples, dtype="<c16").tobytes()
    return _MAGIC + struct.pack(">I", _FORMAT_VERSION) + struct.pack("<Q", len(header)) + header + payload


def serialize(f: SampledField) -> bytes:
    return _encode(f.grid, f.samples)


def deserialize(data: bytes) -> SampledField:
    grid, samples = _decode(data)
    return SampledField(grid, samples)


def _decode(data: bytes) -> tuple[GridSpec, np.ndarray]:
    if len(data) < 24 or data[: len(_MAGIC)] != _MAGIC:
        raise MalformedHeaderError("missing OVF1 magic")
    (version,) = struct.unpack(">I", data[12:16])
    if version != _FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported OVF version tag {version}")
    (header_length,) = struct.unpack("<Q", data[16:24])
    if 24 + header_length > len(data):
        raise LengthMismatchError("stream shorter than declared header")
    try:
        header = json.loads(data[24 : 24 + header_length].decode("utf-8"))
        if header.get("dtype") != "c128":
            raise MalformedHeaderError(f"unsupported dtype {header.get('dtype')!r}")
        grid = GridSpec(int(header["d"]), int(header["n"]), float(header["L"]), int(header["N"]))
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FieldDecodeError):
            raise
        raise MalformedHeaderError(f"bad OVF1 header: {exc}") from exc
    payload = data[24 + header_length :]
    expected = int(np.prod(grid.field_shape)) * 16
    if len(payload) != expected:
        raise LengthMismatchError(f"payload has {len(payload)} bytes, expected {expected}")
    samples = np.frombuffer(payload, dtype="<c16").reshape(grid.field_shape).astype(np.complex128)
    return grid, samples
