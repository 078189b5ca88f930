"""Named experiments, key=value configuration files and on-disk output."""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .fem import frobenius_norm_field
from .mesh import TriMesh
from .model import ModelParams, SimRecord, SimState

# alpha, c2, d2, eps, gamma, r, t_final
PRESETS: dict[str, tuple[float, ...]] = {
    "Test-A1": (0.75, 1.0, 1e-1, 1e-1, 1.25, 1e-1, 1.0),
    "Test-A2": (0.75, 1.0, 1e-1, 1e-1, 0.75, 1e-1, 1.0),
    "Test-A3": (0.75, 1.0, 1e-4, 1e-1, 0.75, 1e-1, 1.0),
    "Test-Al1": (1.5, 25.0, 1e-3, 1e-3, 0.75, 1e-3, 10.0),
    "Test-Al2": (1.5, 25.0, 5e-4, 1e-3, 0.75, 1e-3, 10.0),
    "Test-DD1": (0.75, 25.0, 2e-3, 1e-3, 0.75, 1e-3, 10.0),
    "Test-DD2": (0.75, 25.0, 1e-3, 1e-3, 0.75, 1e-3, 10.0),
    "Test-DD3": (0.75, 25.0, 5e-4, 1e-3, 0.75, 1e-3, 10.0),
    "Test-r1": (0.75, 25.0, 1e-3, 1e-3, 0.75, 1e-1, 10.0),
    "Test-r2": (0.75, 25.0, 1e-3, 1e-3, 0.75, 1e-2, 10.0),
}
MODEL_KEYS = ("alpha", "c2", "d2", "eps", "gamma", "r", "t_final")
FORMATS = ("vtk", "csv")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    params: ModelParams
    out_dir: Optional[Path] = None
    snapshot_every: int = 100
    formats: tuple[str, ...] = FORMATS
    steady_tol: float = 1e-8
    solver_tol: float = 1e-10

    def with_overrides(self, **changes) -> "ExperimentConfig":
        """Replace experiment fields and/or ``ModelParams`` fields by name."""
        own = {f.name for f in fields(self)}
        mine = {k: v for k, v in changes.items() if k in own and v is not None}
        model = {k: v for k, v in changes.items() if k not in own and v is not None}
        try:
            params = replace(self.params, **model) if model else self.params
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return replace(self, params=params, **mine)


def preset_names() -> list[str]:
    return list(PRESETS)


def lookup_preset(name: str) -> Optional[str]:
    for key in PRESETS:
        if key.lower() == name.strip().lower():
            return key
    return None


def preset_params(name: str) -> ModelParams:
    key = lookup_preset(name)
    if key is None:
        raise ConfigError(f"unknown preset {name!r}; known presets: {', '.join(PRESETS)}")
    return ModelParams(**dict(zip(MODEL_KEYS, PRESETS[key])))


_ALIASES = {"t": "t_final", "T": "t_final", "preset": "name", "c^2": "c2", "d^2": "d2"}


def _parse_pairs(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _positive(key: str, value: str) -> float:
    try:
        v = float(value)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {value!r}") from None
    if not v > 0 or not np.isfinite(v):
        raise ConfigError(f"{key} must be positive, got {value!r}")
    return v


def _from_pairs(pairs: dict[str, str], origin: str) -> ExperimentConfig:
    pairs = dict(pairs)
    name = pairs.pop("name", "custom")
    if name.lower() == "custom":
        missing = [k for k in MODEL_KEYS if k not in pairs]
        if missing:
            raise ConfigError(f"{origin}: custom configuration lacks {', '.join(missing)}")
        base = None
        name = "custom"
    else:
        base = preset_params(name)
        name = lookup_preset(name)

    model: dict = {}
    for key in MODEL_KEYS + ("sigma", "dt"):
        if key in pairs:
            model[key] = _positive(key, pairs.pop(key))
    if "x0" in pairs:
        try:
            xy = tuple(float(s) for s in pairs.pop("x0").replace(";", ",").split(","))
        except ValueError:
            raise ConfigError(f"{origin}: x0 must be two numbers") from None
        if len(xy) != 2:
            raise ConfigError(f"{origin}: x0 must be two numbers")
        model["x0"] = xy
    if "n_div" in pairs:
        model["n_div"] = _integer("n_div", pairs.pop("n_div"), minimum=1)
    if "h" in pairs:
        h = pairs.pop("h")
        inv = 1.0 / _positive("h", _fraction(h))
        if abs(inv - round(inv)) > 1e-9 * inv:
            raise ConfigError(f"h = {h} is not 1/n for an integer n")
        model.setdefault("n_div", int(round(inv)))

    extra: dict = {}
    if "out_dir" in pairs:
        extra["out_dir"] = Path(pairs.pop("out_dir"))
    if "snapshot_every" in pairs:
        extra["snapshot_every"] = _integer("snapshot_every", pairs.pop("snapshot_every"), minimum=0)
    if "formats" in pairs:
        extra["formats"] = parse_formats(pairs.pop("formats"))
    if "steady_tol" in pairs:
        extra["steady_tol"] = float(pairs.pop("steady_tol"))
    if "solver_tol" in pairs:
        extra["solver_tol"] = _positive("solver_tol", pairs.pop("solver_tol"))
    if pairs:
        raise ConfigError(f"{origin}: unknown keys {', '.join(sorted(pairs))}")

    try:
        params = ModelParams(**model) if base is None else replace(base, **model)
    except ValueError as exc:
        raise ConfigError(f"{origin}: {exc}") from exc
    return ExperimentConfig(name, params, **extra)


def _fraction(text: str) -> str:
    """``'1/600'`` -> ``'0.0016666...'``; other strings pass through."""
    if "/" in text:
        num, den = text.split("/", 1)
        try:
            return repr(float(num) / float(den))
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"bad fraction {text!r}") from None
    return text


def _integer(key: str, value: str, minimum: int) -> int:
    try:
        v = int(value)
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {value!r}") from None
    if v < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {v}")
    return v


def parse_formats(text: Union[str, Sequence[str]]) -> tuple[str, ...]:
    items = text.split(",") if isinstance(text, str) else list(text)
    out = tuple(dict.fromkeys(s.strip().lower() for s in items if s.strip()))
    bad = [f for f in out if f not in FORMATS]
    if bad:
        raise ConfigError(f"unknown output formats {bad}; choose from {FORMATS}")
    return out


def load_config(source: Union[str, Path]) -> ExperimentConfig:
    """Resolve a preset name or a ``key = value`` configuration file.

    Presets use the source and discretisation defaults of
    :class:`ModelParams` (sigma = 500, x0 = (0.25, 0.25), n_div = 600,
    dt = 0.01).
    """
    text = str(source)
    key = lookup_preset(text)
    if key is not None:
        return ExperimentConfig(key, preset_params(key))
    path = Path(source)
    if path.is_file():
        return _from_pairs(_parse_pairs(path.read_text()), str(path))
    raise ConfigError(f"{text!r} is neither a known preset ({', '.join(PRESETS)}) nor a readable file")


def _fmt(values: Iterable[float]) -> str:
    return " ".join(repr(float(v)) for v in values)


def write_fields_vtk(mesh: TriMesh, state: SimState, path) -> None:
    """Legacy ASCII VTK unstructured grid with nodal pressure and conductivity."""
    C = state.conductivity
    arrays = {
        "pressure": state.pressure,
        "c11": C.c11,
        "c12": C.c12,
        "c22": C.c22,
        "c_norm": frobenius_norm_field(C),
    }
    ne = mesh.n_elements
    lines = [
        "# vtk DataFile Version 3.0",
        f"bionet step={state.step_index} time={state.time!r}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.nodes.tolist()]
    lines.append(f"CELLS {ne} {4 * ne}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.elements.tolist()]
    lines.append(f"CELL_TYPES {ne}")
    lines += ["5"] * ne
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    for name, values in arrays.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(v) for v in np.asarray(values, dtype=float).tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def write_fields_csv(mesh: TriMesh, state: SimState, path) -> None:
    C = state.conductivity
    cols = np.column_stack([mesh.nodes, state.pressure, C.c11, C.c12, C.c22, frobenius_norm_field(C)])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "pressure", "c11", "c12", "c22", "c_norm"])
        w.writerows([[repr(v) for v in row] for row in cols.tolist()])


def write_energy_csv(records: Sequence[SimRecord], path) -> None:
    """One ``time,energy,increment_norm`` row per record, shortest round-trip reprs."""
    if not records:
        raise ValueError("no records to write")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "energy", "increment_norm"])
        for rec in records:
            w.writerow([repr(float(rec.time)), repr(float(rec.energy)), repr(float(rec.increment_norm))])


def read_energy_csv(path) -> list[tuple[float, float, float]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["time", "energy", "increment_norm"]:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    return [tuple(float(v) for v in row) for row in rows[1:]]
