"""Command-line entry point: configuration, suite orchestration and report emission.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for a bad
configuration.  Each run writes ``report.json`` and ``summary.csv`` to the
output directory.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import jsonschema
import numpy as np

from .carleson import carleson_functional
from .duality_verify import (
    CAPS_VERSION,
    DEFAULT_CAPS,
    DEFAULT_FAMILY,
    DEFAULT_TOLERANCES,
    Check,
    SuiteConfig,
    atom_suite,
    bmo_facts_suite,
    carleson_bmo_suite,
    covering_suite,
    domination_suite,
    duality_bound_suite,
    equivalence_suite,
    identity_suite,
)
from .dyadic_atoms import cover_cube, filtrations
from .field_core import GridSpec, ScaleGrid, make_field, serialize
from .kernels import DPOISSON
from .norms_spaces import Cube, NormReport, bmo_c_norm
from .square_functions import cone_profile, conic_square

__all__ = ["main", "run", "CONFIG_SCHEMA", "SUMMARY_COLUMNS", "SUMMARY_SCHEMA_VERSION", "load_config"]

REPORT_SCHEMA_VERSION = 1
SUMMARY_SCHEMA_VERSION = 1
SUMMARY_COLUMNS = ("schema_version", "suite", "check", "p", "variant", "observed", "limit", "passed")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

_NUMBER_MAP = {"type": "object", "additionalProperties": {"type": "number"}}

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "d": {"type": "integer", "minimum": 1, "maximum": 3},
                "n": {"type": "integer", "minimum": 1},
                "L": {"type": "number", "exclusiveMinimum": 0},
                "N": {"type": "integer", "minimum": 8},
            },
        },
        "family": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "object", "required": ["kind"], "properties": {"kind": {"type": "string"}}},
        },
        "family_size": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "p_values": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 1}},
        "scale_count": {"type": "integer", "minimum": 16},
        "pairs": {"type": "integer", "minimum": 1},
        "atoms": {"type": "integer", "minimum": 1},
        "cubes": {"type": "integer", "minimum": 1},
        "refine": {"type": "boolean"},
        "threads": {"type": "integer", "minimum": 1},
        "tolerances": _NUMBER_MAP,
        "caps": _NUMBER_MAP,
        "caps_version": {"type": "integer"},
        "field": {"type": "object", "required": ["kind"]},
    },
}


class ConfigError(ValueError):
    """Configuration rejected before any suite runs."""


def load_config(path: str | None) -> dict[str, Any]:
    """Parse and schema-validate a JSON config file (empty config when ``path`` is None)."""
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        lines = [f"  {'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("config does not match the schema:\n" + "\n".join(lines))
    return raw


def _threads(flag: int | None, raw: Mapping[str, Any]) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("OVHARDY_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"OVHARDY_THREADS must be an integer, got {env!r}") from exc
        if value < 1:
            raise ConfigError("OVHARDY_THREADS must be positive")
        return value
    return int(raw.get("threads", 1))


def resolve_config(raw: Mapping[str, Any], args: argparse.Namespace) -> SuiteConfig:
    """Merge defaults, the config file and command-line overrides."""
    if raw.get("caps_version", CAPS_VERSION) != CAPS_VERSION:
        raise ConfigError(f"config targets caps version {raw['caps_version']}, this build uses {CAPS_VERSION}")
    defaults = SuiteConfig()
    grid = dict(defaults.grid.to_dict(), **raw.get("grid", {}))
    if args.grid is not None:
        grid["N"] = args.grid
    if args.box is not None:
        grid["L"] = args.box
    if args.matrix_size is not None:
        grid["n"] = args.matrix_size
    tolerances = dict(DEFAULT_TOLERANCES, **raw.get("tolerances", {}))
    caps = dict(DEFAULT_CAPS, **raw.get("caps", {}))
    try:
        return SuiteConfig(
            grid=GridSpec(int(grid["d"]), int(grid["n"]), float(grid["L"]), int(grid["N"])),
            family=tuple(dict(d) for d in raw.get("family", DEFAULT_FAMILY)),
            family_size=int(raw.get("family_size", defaults.family_size)),
            seed=int(args.seed if args.seed is not None else raw.get("seed", defaults.seed)),
            p_values=tuple(float(p) for p in raw.get("p_values", defaults.p_values)),
            scale_count=int(raw.get("scale_count", defaults.scale_count)),
            pairs=int(raw.get("pairs", defaults.pairs)),
            atoms=int(raw.get("atoms", defaults.atoms)),
            cubes=int(raw.get("cubes", defaults.cubes)),
            refine=bool(args.refine or raw.get("refine", False)),
            threads=_threads(args.threads, raw),
            tolerances=tolerances,
            caps=caps,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# ----------------------------------------------------------------------------
# Commands


def _jsonable(value: Any) -> Any:
    if isinstance(value, Check):
        return value.to_dict()
    if isinstance(value, NormReport):
        return _jsonable(value.to_json_dict())
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def _suite_checks(result: Any) -> list[Check]:
    if isinstance(result, NormReport):
        return list(result.metadata.get("checks", []))
    return list(result.get("checks", []))


SUITES: dict[str, tuple[Callable[[SuiteConfig], Any], ...]] = {
    "verify-identities": (identity_suite,),
    "verify-equivalences": (equivalence_suite,),
    "verify-atoms": (atom_suite,),
    "verify-carleson": (carleson_bmo_suite, bmo_facts_suite),
    "verify-duality": (duality_bound_suite, domination_suite),
    "verify-dyadic": (covering_suite,),
}


def _bench(config: SuiteConfig) -> dict[str, Any]:
    """Wall-clock timings of the core operations on the configured grid."""
    grid = config.grid
    f = make_field({"kind": "band-limited-random", "kmax": min(16, grid.N // 4)}, grid, config.seed)
    scales = ScaleGrid.default(grid, config.scale_count)
    timings: dict[str, float] = {}

    def timed(name: str, func: Callable[[], Any]) -> Any:
        start = time.perf_counter()
        out = func()
        timings[name] = time.perf_counter() - start
        return out

    profile = timed("cone_profile", lambda: cone_profile(f, DPOISSON, scales))
    timed("conic_square", lambda: conic_square(profile))
    timed("carleson_functional", lambda: carleson_functional(profile))
    timed("bmo_c_norm", lambda: bmo_c_norm(f))
    systems = filtrations(grid.d)
    rng = np.random.default_rng(config.seed)
    cubes = [Cube(tuple(rng.uniform(-4, 4, grid.d)), float(10 ** rng.uniform(-3, 0))) for _ in range(1000)]
    timed("cover_cube_x1000", lambda: [cover_cube(Q, systems) for Q in cubes])
    # timings vary run to run, so they are reported but never checked
    return {"values": {"grid": grid.to_dict()}, "timings": timings, "checks": []}


def _export_field(config: SuiteConfig, raw: Mapping[str, Any], out: Path) -> dict[str, Any]:
    descriptor = dict(raw.get("field", {"kind": "band-limited-random", "kmax": 8}))
    try:
        f = make_field(descriptor, config.grid, config.seed)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot build field {descriptor}: {exc}") from exc
    data = serialize(f)
    path = out / "field.ovf"
    path.write_bytes(data)
    return {
        "values": {"path": path.name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest(),
                   "descriptor": descriptor},
        "checks": [],
    }


def _summary_csv(checks: Sequence[Check]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for c in checks:
        writer.writerow([
            SUMMARY_SCHEMA_VERSION, c.suite, c.check, "" if c.p is None else repr(c.p),
            c.variant or "", repr(c.observed), repr(c.limit), str(c.passed).lower(),
        ])
    return buffer.getvalue()


def _content_hash(command: str, resolved: Mapping[str, Any], raw: Mapping[str, Any]) -> str:
    payload = json.dumps({"command": command, "config": resolved, "field": raw.get("field")},
                         sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ovhardy", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted([*SUITES, "bench", "export-field"]))
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", default="ovhardy-out", help="output directory")
    parser.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    parser.add_argument("--grid", type=int, help="points per axis N")
    parser.add_argument("--box", type=float, help="box length L")
    parser.add_argument("--matrix-size", type=int, help="matrix size n")
    parser.add_argument("--threads", type=int, help="worker threads (fallback: OVHARDY_THREADS)")
    parser.add_argument("--refine", action="store_true", help="rerun on the doubled grid for stability checks")
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        raw = load_config(args.config)
        config = resolve_config(raw, args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "export-field":
            results = {"export-field": _export_field(config, raw, out)}
        elif args.command == "bench":
            results = {"bench": _bench(config)}
        else:
            results = {suite.__name__: suite(config) for suite in SUITES[args.command]}
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    checks = [c for result in results.values() for c in _suite_checks(result)]
    failures = [c for c in checks if not c.passed]
    resolved = config.to_dict()
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": args.command,
        "config": resolved,
        "caps_version": CAPS_VERSION,
        "content_hash": _content_hash(args.command, resolved, raw),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "results": _jsonable(results),
        "checks": [c.to_dict() for c in checks],
        "passed": not failures,
        "failures": [c.to_dict() for c in failures],
    }
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    (out / "summary.csv").write_text(_summary_csv(checks))
    for c in failures:
        print(
            f"FAILED {c.suite}/{c.check}: {c.module}.{c.operation} observed {c.observed!r} vs limit {c.limit!r}"
            + (f" (p={c.p:g})" if c.p is not None else "")
            + (f" [{c.variant}]" if c.variant else ""),
            file=sys.stderr,
        )
    print(f"{args.command}: {len(checks) - len(failures)}/{len(checks)} checks passed; report in {out}")
    return EXIT_FAILED if failures else EXIT_OK


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv))
