"""Strict YAML run configuration.

Every key is checked against a fixed schema before any computation.
Unknown keys, missing blocks and ill-typed values raise errors that name
the offending key and its line.  Physical parameters (``nu``, ``s``,
``lambda``, the potential name) have no defaults; numerical policy keys do,
and the fully resolved tree can be written back out with :func:`dump_config`.
"""
from __future__ import annotations

import copy
import inspect
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigTypeError, MissingBlock, UnknownKey

__all__ = ["RunConfig", "parse_config", "load_config_text", "dump_config", "SCHEMA", "REQUIRED_BLOCKS"]

REQUIRED = object()


def _num(path, v, line, positive=False, nonneg=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigTypeError(path, f"expected a number, got {type(v).__name__}", line)
    v = float(v)
    if not math.isfinite(v):
        raise ConfigTypeError(path, f"expected a finite number, got {v}", line)
    if positive and not v > 0:
        raise ConfigTypeError(path, f"must be > 0, got {v}", line)
    if nonneg and v < 0:
        raise ConfigTypeError(path, f"must be >= 0, got {v}", line)
    return v


def _int(path, v, line, minimum=None, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigTypeError(path, f"expected an integer, got {type(v).__name__}", line)
    if minimum is not None and v < minimum:
        raise ConfigTypeError(path, f"must be >= {minimum}, got {v}", line)
    return int(v)


def _bool(path, v, line):
    if not isinstance(v, bool):
        raise ConfigTypeError(path, f"expected true/false, got {v!r}", line)
    return v


def _str(choices=None):
    def check(path, v, line):
        if not isinstance(v, str):
            raise ConfigTypeError(path, f"expected a string, got {type(v).__name__}", line)
        if choices and v not in choices:
            raise ConfigTypeError(path, f"must be one of {sorted(choices)}, got {v!r}", line)
        return v
    return check


def _list(item):
    def check(path, v, line):
        if not isinstance(v, list) or not v:
            raise ConfigTypeError(path, "expected a nonempty list", line)
        return [item(f"{path}[{i}]", x, line) for i, x in enumerate(v)]
    return check


def _height(path, v, line):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if isinstance(v, dict):
        allowed = {"constant", "mean", "cos", "sin"}
        for k in v:
            if k not in allowed:
                raise UnknownKey(f"{path}.{k}", line)
        out = {}
        for k, x in v.items():
            if k in ("cos", "sin"):
                out[k] = _list(lambda p, y, ln: _num(p, y, ln))(f"{path}.{k}", x, line)
            else:
                out[k] = _num(f"{path}.{k}", x, line)
        return out
    raise ConfigTypeError(path, "expected a number or a mapping with constant/mean/cos/sin", line)


def _v0(path, v, line):
    if v == "zero":
        return v
    if isinstance(v, list):
        return _list(lambda p, y, ln: _num(p, y, ln))(path, v, line)
    if not isinstance(v, dict) or len(v) != 1:
        raise ConfigTypeError(path, "expected 'zero', a coefficient list, or one of "
                                    "random_H_ball/eigenmode", line)
    (name, args), = v.items()
    args = args or {}
    if not isinstance(args, dict):
        raise ConfigTypeError(f"{path}.{name}", "expected a mapping", line)
    if name == "random_H_ball":
        allowed = {"r", "factor", "seed"}
        for k in args:
            if k not in allowed:
                raise UnknownKey(f"{path}.{name}.{k}", line)
        if ("r" in args) == ("factor" in args):
            raise ConfigTypeError(f"{path}.{name}", "give exactly one of 'r' and 'factor'", line)
        out = {k: _num(f"{path}.{name}.{k}", args[k], line, nonneg=True) for k in ("r", "factor") if k in args}
        if "seed" in args:
            out["seed"] = _int(f"{path}.{name}.seed", args["seed"], line, minimum=0)
        return {name: out}
    if name == "eigenmode":
        for k in args:
            if k not in {"k", "amp"}:
                raise UnknownKey(f"{path}.{name}.{k}", line)
        if "k" not in args:
            raise ConfigTypeError(f"{path}.{name}.k", "required", line)
        return {name: {"k": _int(f"{path}.{name}.k", args["k"], line, minimum=0),
                       "amp": _num(f"{path}.{name}.amp", args.get("amp", 1.0), line)}}
    raise UnknownKey(f"{path}.{name}", line)


def _mapping(path, v, line):
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ConfigTypeError(path, "expected a mapping", line)
    return v


def _pos(path, v, line):
    return _num(path, v, line, positive=True)


def _real(path, v, line):
    return _num(path, v, line)


def _nonneg(path, v, line):
    return _num(path, v, line, nonneg=True)


def _opt_pos(path, v, line):
    return _num(path, v, line, positive=True, allow_none=True)


def _posint(path, v, line):
    return _int(path, v, line, minimum=1)


def _nonnegint(path, v, line):
    return _int(path, v, line, minimum=0)


def _opt_posint(path, v, line):
    return _int(path, v, line, minimum=1, allow_none=True)


def _opt_str(path, v, line):
    return None if v is None else _str()(path, v, line)


# block -> key -> (checker, default); nested dicts are sub-blocks
SCHEMA = {
    "geometry": {
        "L": (_pos, REQUIRED),
        "h": (_height, 1.0),
        "quadrature": {
            "nx": (_opt_posint, None),
            "neta": (_opt_posint, None),
            "oversample": (_pos, 2.0),
        },
    },
    "basis": {
        "K": (_nonnegint, REQUIRED),
        "M": (_posint, REQUIRED),
        "rotate": (_bool, True),
    },
    "physics": {
        "nu": (_pos, REQUIRED),
        "s": (_real, REQUIRED),
        "lambda": (_pos, REQUIRED),
    },
    "potential": {
        "name": (_str({"quadratic", "pressure_drop", "gaussian_well", "piecewise"}), REQUIRED),
        "params": (_mapping, {}),
        "n_mollify": (_posint, 32),
        "scan": {
            "lo": (_real, -50.0),
            "hi": (_real, 50.0),
            "points": (_posint, 20001),
        },
        "margin": (_pos, 0.9),
        "stability_n": (_list(_posint), [4, 8, 16, 32, 64, 128, 256]),
        "drift_threshold": (_pos, 0.1),
    },
    "integration": {
        "dt": (_pos, REQUIRED),
        "t_end": (_nonneg, REQUIRED),
        "scheme": (_str({"etd1", "etd2", "imex_euler"}), "etd1"),
        "v0": (_v0, "zero"),
        "convection": (_bool, True),
        "boundary": (_bool, True),
        "checkpoint_every": (_nonnegint, 0),
        "seed": (_nonnegint, 0),
        "energy_c_tol": (_pos, 10.0),
    },
    "attractor": {
        "dh": (_opt_pos, None),
        "count": (_posint, 8),
        "t_section": (_nonneg, 8.0),
        "n_points": (_posint, 3),
        "spacing": (_pos, 1.0),
        "gronwall_tol": (_pos, 0.01),
        "workers": (_opt_posint, None),
    },
    "output": {
        "directory": (_opt_str, None),
        "formats": (_list(_str({"csv", "json", "npz"})), ["csv", "json"]),
        "plot": (_bool, False),
        "cache_dir": (_opt_str, None),
    },
}
REQUIRED_BLOCKS = ("geometry", "basis", "physics", "potential", "integration")


def _line_map(text: str) -> dict:
    """Map key paths (tuples) to 1-based line numbers."""
    lines: dict = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                lines[p] = k.start_mark.line + 1
                walk(v, p)

    root = yaml.compose(text)
    if root is not None:
        walk(root, ())
    return lines


def _resolve(schema: dict, data, path: tuple, lines: dict) -> dict:
    where = ".".join(path)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigTypeError(where, "expected a mapping", lines.get(path))
    for k in data:
        if k not in schema:
            raise UnknownKey(".".join(path + (str(k),)), lines.get(path + (k,)))
    out = {}
    for k, spec in schema.items():
        p = path + (k,)
        if isinstance(spec, dict):
            out[k] = _resolve(spec, data.get(k), p, lines)
            continue
        check, default = spec
        if k in data:
            out[k] = check(".".join(p), data[k], lines.get(p))
        elif default is REQUIRED:
            raise ConfigTypeError(".".join(p), "required key is missing", lines.get(path))
        else:
            out[k] = copy.deepcopy(default)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration tree (plain dicts, defaults injected)."""

    data: dict
    source: str | None = None

    def __getitem__(self, block: str) -> dict:
        return self.data[block]

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.data == other.data

    def __hash__(self):
        return hash(dump_config(self))

    def with_seed(self, seed: int) -> "RunConfig":
        data = copy.deepcopy(self.data)
        data["integration"]["seed"] = int(seed)
        return RunConfig(data, self.source)

    def with_overrides(self, **blocks) -> "RunConfig":
        """Return a copy with ``{block: {key: value}}`` overrides merged in (and revalidated)."""
        data = copy.deepcopy(self.data)
        for block, values in blocks.items():
            data[block].update(values)
        return load_config_text(dump_config(RunConfig(data)), self.source)

    def potential_spec(self) -> dict:
        p = self.data["potential"]
        return {"name": p["name"], **p["params"]}


def load_config_text(text: str, source: str | None = None) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigTypeError("<document>", f"invalid YAML: {exc}", mark.line + 1 if mark else None) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigTypeError("<document>", "top level must be a mapping", 1)
    lines = _line_map(text)
    for k in raw:
        if k not in SCHEMA:
            raise UnknownKey(str(k), lines.get((k,)))
    for b in REQUIRED_BLOCKS:
        if b not in raw:
            raise MissingBlock(b)
    data = {b: _resolve(SCHEMA[b], raw.get(b), (b,), lines) for b in SCHEMA}
    params = data["potential"]["params"]
    allowed = _potential_params(data["potential"]["name"])
    for k in params:
        if k not in allowed:
            raise UnknownKey(f"potential.params.{k}", lines.get(("potential", "params", k)))
    return RunConfig(data, source)


def _potential_params(name: str) -> set:
    from . import potential

    if name == "piecewise":
        return {"breakpoints", "coefficients"}
    return set(inspect.signature(getattr(potential, name)).parameters)


def parse_config(path) -> RunConfig:
    """Read and validate a YAML configuration file (UTF-8)."""
    path = Path(path)
    return load_config_text(path.read_text(encoding="utf-8"), str(path))


def dump_config(cfg: RunConfig) -> str:
    """YAML text of the resolved configuration; ``parse`` of it gives back ``cfg``."""
    return yaml.safe_dump(cfg.data, sort_keys=False, default_flow_style=False)
