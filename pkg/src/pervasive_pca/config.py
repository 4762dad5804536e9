"""YAML run configurations.

Configs are nested key-value YAML documents. Problems are reported as
``ConfigError`` with the file name, the dotted field path and, where the field
exists in the file, its line number.

Model section (``model:``)::

    kind: spike | block
    # spike
    sigma2: [12, 8]        # spike strengths, strictly decreasing
    tau2: 1.0              # average non-spike eigenvalue
    p: 1000                # optional where a p-grid is given instead
    n: 50
    basis: blocks | random # optional, default blocks
    basis_seed: 0          # optional
    tail: flat | decaying  # optional, default flat
    # block
    sigma2: 1.0
    blocks: [[0.3, 0.9], [0.3, 0.6]]   # (fraction, correlation) pairs
    p: 100
    n: 50

Score section (``scores:``, optional)::

    kind: normal | t
    df: 5                  # t only, > 4
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

from .model import BlockSpec, SpikeSpec
from .simulate import ScoreDistribution


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


def bundled_configs() -> list[str]:
    root = resources.files("pervasive_pca") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith((".yaml", ".csv")))


def resolve_path(name: str) -> Path:
    """A filesystem path, or the name of a bundled config (with or without ``.yaml``)."""
    path = Path(name)
    if path.exists():
        return path
    root = resources.files("pervasive_pca") / "configs"
    for candidate in (name, f"{name}.yaml"):
        res = root / candidate
        if res.is_file():
            return Path(str(res))
    raise ConfigError(f"{name}: no such file or bundled config (bundled: {', '.join(bundled_configs())})")


def _line_index(node, prefix: str = "", out: Optional[dict] = None) -> dict:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            out[path] = key.start_mark.line + 1
            _line_index(value, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for idx, value in enumerate(node.value):
            path = f"{prefix}[{idx}]"
            out[path] = value.start_mark.line + 1
            _line_index(value, path, out)
    return out


class Config:
    """Parsed YAML document (or a section of one) with error-reporting lookups."""

    def __init__(self, data: dict, source: str = "<config>", lines: Optional[dict] = None, prefix: str = ""):
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: top level must be a mapping")
        self.data = data
        self.source = source
        self.lines = lines or {}
        self.prefix = prefix

    @classmethod
    def load(cls, name: str) -> "Config":
        path = resolve_path(name)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
        try:
            node = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" line {mark.line + 1}, column {mark.column + 1}:" if mark else ""
            raise ConfigError(f"{path}:{where} YAML syntax error: {getattr(exc, 'problem', exc)}") from None
        if data is None:
            raise ConfigError(f"{path}: empty config")
        return cls(data, str(path), _line_index(node))

    def _full(self, path: str) -> str:
        return f"{self.prefix}.{path}" if self.prefix else path

    def error(self, path: str, message: str) -> ConfigError:
        full = self._full(path)
        line = self.lines.get(full)
        where = f" line {line}:" if line else ""
        return ConfigError(f"{self.source}:{where} field '{full}': {message}")

    def _lookup(self, path: str):
        cur: Any = self.data
        for part in path.split("."):
            if not isinstance(cur, dict) or part not in cur:
                raise KeyError(path)
            cur = cur[part]
        return cur

    def has(self, path: str) -> bool:
        try:
            self._lookup(path)
            return True
        except KeyError:
            return False

    def get(self, path: str, kind=None, default=..., check=None, hint: str = ""):
        try:
            value = self._lookup(path)
        except KeyError:
            if default is ...:
                full = self._full(path)
                parent = full.rsplit(".", 1)[0] if "." in full else ""
                line = self.lines.get(parent)
                where = f" (section '{parent}' at line {line})" if line else ""
                raise ConfigError(f"{self.source}: missing required field '{full}'{where}") from None
            return default
        if kind is not None:
            try:
                value = _coerce(value, kind)
            except (TypeError, ValueError):
                raise self.error(path, f"expected {hint or getattr(kind, '__name__', kind)}, got {value!r}") from None
        if check is not None and not check(value):
            raise self.error(path, f"invalid value {value!r}{': ' + hint if hint else ''}")
        return value

    def section(self, path: str) -> "Config":
        value = self.get(path)
        if not isinstance(value, dict):
            raise self.error(path, "expected a mapping")
        return Config(value, self.source, self.lines, self._full(path))


def _coerce(value, kind):
    if kind is int:
        if isinstance(value, bool) or not float(value).is_integer():
            raise ValueError
        return int(value)
    if kind is float:
        if isinstance(value, bool):
            raise ValueError
        return float(value)
    if kind == "floats":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return [float(value)]
        return [_coerce(v, float) for v in value]
    if kind == "ints":
        return [_coerce(v, int) for v in value]
    if kind is bool:
        if not isinstance(value, bool):
            raise ValueError
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ValueError
        return value
    if kind == "band":
        lo, hi = (_coerce(v, float) for v in value)
        if lo > hi:
            raise ValueError
        return lo, hi
    raise TypeError(kind)


def model_from(cfg: Config, require_p: bool = True):
    """Build a ``SpikeSpec`` or ``BlockSpec`` from a ``model`` section.

    When ``require_p`` is false and ``p`` is absent, ``p`` is set to a placeholder
    that callers replace through ``with_p``.
    """
    kind = cfg.get("kind", str, default="spike", check=lambda k: k in ("spike", "block"), hint="spike or block")
    n = cfg.get("n", int, default=None, check=lambda v: v is None or v >= 1, hint="positive integer")
    if require_p:
        p = cfg.get("p", int, check=lambda v: v >= 1, hint="positive integer")
    else:
        p = cfg.get("p", int, default=None, check=lambda v: v is None or v >= 1, hint="positive integer")
    try:
        if kind == "block":
            sigma2 = cfg.get("sigma2", float, check=lambda v: v > 0, hint="positive number")
            blocks = cfg.get("blocks")
            if not isinstance(blocks, list) or not all(isinstance(b, list) and len(b) == 2 for b in blocks):
                raise cfg.error("blocks", "expected a list of [fraction, correlation] pairs")
            spec = BlockSpec(sigma2, tuple(tuple(b) for b in blocks), p if p else 1000)
        else:
            sigma2 = cfg.get("sigma2", "floats", hint="list of numbers")
            tau2 = cfg.get("tau2", float, check=lambda v: v >= 0, hint="nonnegative number")
            if n is None:
                cfg.get("n", int)
            spec = SpikeSpec(
                tuple(sigma2), tau2, p if p else max(len(sigma2), 1), n,
                basis=cfg.get("basis", str, default="blocks"),
                basis_seed=cfg.get("basis_seed", int, default=0),
                tail=cfg.get("tail", str, default="flat"),
            )
    except ConfigError:
        raise
    except ValueError as exc:
        raise cfg.error("kind", f"invalid {kind} model: {exc}") from None
    return spec, n


def scores_from(cfg: Config) -> ScoreDistribution:
    if not cfg.has("scores"):
        return ScoreDistribution()
    sec = cfg.section("scores")
    kind = sec.get("kind", str, default="normal")
    df = sec.get("df", int, default=None)
    try:
        return ScoreDistribution(kind, df)
    except ValueError as exc:
        raise sec.error("kind", str(exc)) from None


def spec_to_dict(spec) -> dict:
    if isinstance(spec, BlockSpec):
        return {"kind": "block", "sigma2": spec.sigma2, "blocks": [list(b) for b in spec.blocks], "p": spec.p}
    return {
        "kind": "spike", "sigma2": list(spec.sigma2), "tau2": spec.tau2, "p": spec.p, "n": spec.n,
        "basis": spec.basis, "basis_seed": spec.basis_seed, "tail": spec.tail,
    }
