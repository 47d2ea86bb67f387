"""Case configuration: TOML parsing, validation, serialization.

One file per case, organized as [case] / [grid] / [fluid] / [boundaries] /
[body] / [run] tables.  parse -> serialize -> parse is an identity on the
CaseConfig value.  The writer emits only the subset of TOML this module
reads (scalars, homogeneous arrays, flat tables), which keeps the
round-trip exact without an external emitter dependency.
"""

import os
from dataclasses import dataclass, fields

try:
    import tomllib as _toml
except ModuleNotFoundError:        # Python 3.10
    import tomli as _toml

from .errors import ConfigError

CASE_IDS = (
    "straight-line-analysis",
    "taylor-green",
    "cylinder-2d",
    "sphere-3d",
    "oscillating-body",
    "immersed-channel",
)
BODY_KINDS = ("none", "sphere", "stl", "circle", "wall-pair")


@dataclass(frozen=True)
class CaseConfig:
    case: str
    output_dir: str = "out"
    # grid
    dims: tuple = None
    h: float = None
    origin: tuple = None
    periodic: tuple = None
    # fluid
    nu: float = 0.01
    cfl: float = 0.2
    viscous: str = "explicit"
    u_ref: float = 1.0
    dt_max: float = None
    # boundaries: one (lo, hi) kind pair per axis
    bc: tuple = None
    inflow_velocity: tuple = None
    body_force: tuple = None
    # body
    body_kind: str = "none"
    stl_path: str = None
    diameter: float = 1.0
    center: tuple = None
    edge_factor: float = 0.7          # target mean marker edge, in units of h
    amplitude: tuple = None           # oscillation amplitude vector
    omega: float = 0.0
    scheme: str = "corrected"
    alpha: float = 2.0 / 3.0
    basis: str = "linear"
    markers_per_cell: int = 2         # wall-pair / line bodies
    wall_offsets: tuple = None        # wall-pair: wall y intercepts at x=0
    wall_slope: float = 0.0           # wall-pair: dy/dx of both walls
    # run
    steps: int = None
    t_end: float = None
    report_every: int = 1
    seed: int = 0
    save_checkpoint: bool = True

    def validate(self):
        if self.case not in CASE_IDS:
            raise ConfigError(f"unknown case {self.case!r}; expected one of "
                              f"{', '.join(CASE_IDS)}")
        if self.body_kind not in BODY_KINDS:
            raise ConfigError(f"unknown body kind {self.body_kind!r}")
        if not 0 < self.alpha <= 2:
            raise ConfigError(f"alpha must lie in (0, 2], got {self.alpha}")
        if self.basis not in ("constant", "linear"):
            raise ConfigError(f"basis must be constant|linear, got {self.basis!r}")
        if self.body_kind == "stl":
            if not self.stl_path:
                raise ConfigError("body kind 'stl' needs stl_path")
            if not os.path.exists(self.stl_path):
                raise ConfigError(f"STL file not found: {self.stl_path}")
        if self.dims is not None and any(d < 4 for d in self.dims):
            raise ConfigError("grid dims must be >= 4 cells per axis")
        if self.steps is None and self.t_end is None:
            raise ConfigError("set steps and/or t_end")
        if self.markers_per_cell < 1:
            raise ConfigError("markers_per_cell must be >= 1")
        return self


_SECTIONS = {
    "case": ("case", "output_dir"),
    "grid": ("dims", "h", "origin", "periodic"),
    "fluid": ("nu", "cfl", "viscous", "u_ref", "dt_max"),
    "boundaries": ("bc", "inflow_velocity", "body_force"),
    "body": ("body_kind", "stl_path", "diameter", "center", "edge_factor",
             "amplitude", "omega", "scheme", "alpha", "basis",
             "markers_per_cell", "wall_offsets", "wall_slope"),
    "run": ("steps", "t_end", "report_every", "seed", "save_checkpoint"),
}
_KEY_TO_SECTION = {k: s for s, keys in _SECTIONS.items() for k in keys}
_FLOAT_KEYS = {"h", "nu", "cfl", "u_ref", "dt_max", "diameter", "edge_factor",
               "omega", "alpha", "t_end", "wall_slope"}
_TUPLE_KEYS = {"dims", "origin", "periodic", "bc", "inflow_velocity",
               "body_force", "center", "amplitude", "wall_offsets"}


def _to_tuple(v):
    if v is None:
        return None
    return tuple(_to_tuple(x) if isinstance(x, list) else x for x in v)


def config_from_dict(data):
    known = {f.name for f in fields(CaseConfig)}
    kwargs = {}
    for section, table in data.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config table [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"top-level key {section!r} must be a table")
        for key, value in table.items():
            if key not in known or _KEY_TO_SECTION.get(key) != section:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            if key in _FLOAT_KEYS and value is not None:
                value = float(value)
            if key in _TUPLE_KEYS:
                if not isinstance(value, list):
                    raise ConfigError(f"{key} must be an array")
                value = _to_tuple(value)
            kwargs[key] = value
    if "case" not in kwargs:
        raise ConfigError("missing [case] table with a 'case' id")
    return CaseConfig(**kwargs)


def config_to_dict(cfg):
    out = {}
    for section, keys in _SECTIONS.items():
        table = {}
        for key in keys:
            v = getattr(cfg, key)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            table[key] = v
        if table:
            out[section] = table
    return out


def parse_config(path_or_text, from_string=False):
    if from_string:
        text = path_or_text
    else:
        try:
            with open(path_or_text, "rb") as fh:
                return config_from_dict(_toml.load(fh))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path_or_text}") from exc
        except _toml.TOMLDecodeError as exc:
            raise ConfigError(f"bad TOML in {path_or_text}: {exc}") from exc
    try:
        return config_from_dict(_toml.loads(text))
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML: {exc}") from exc


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize {type(v).__name__} to TOML")


def serialize_config(cfg):
    lines = []
    for section, table in config_to_dict(cfg).items():
        lines.append(f"[{section}]")
        for key, value in table.items():
            lines.append(f"{key} = {_fmt_value(value)}")
        lines.append("")
    return "\n".join(lines)


def write_config(cfg, path):
    with open(path, "w") as fh:
        fh.write(serialize_config(cfg))
