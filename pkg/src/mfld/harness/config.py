"""Run configuration: a line-oriented ``key = value`` format with sections.

::

    # comment
    [model]
    model = linear_quadratic
    [dynamics]
    lambda = 1.0
    eta = 0.01
    N = 1000
    K = 5000

Sections are ``[model]``, ``[dynamics]``, ``[estimator]``, ``[output]``.
Unknown keys, keys in the wrong section, bad values and missing required
keys are errors carrying the line number. A repeated key keeps the last
value and emits a warning.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

SECTIONS = ("model", "dynamics", "estimator", "output")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class DuplicateKeyWarning(UserWarning):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _float_list(text: str) -> list[float]:
    vals = [float(tok) for tok in text.replace(",", " ").split()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _threads(text: str):
    t = text.strip().lower()
    if t == "auto":
        return "auto"
    v = int(t)
    if v < 1:
        raise ValueError("threads must be >= 1 or 'auto'")
    return v


def _choice(*options):
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t

    return parse


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


@dataclass(frozen=True)
class Key:
    section: str
    parse: Callable[[str], Any]
    default: Any = None
    check: Callable[[Any], bool] | None = None
    check_msg: str = ""
    required: bool = False


MODEL_KINDS = ("linear_quadratic", "linear_finite_sum", "two_layer_net", "mmd", "ksd")

SCHEMA: dict[str, Key] = {
    # [model]
    "model": Key("model", _choice(*MODEL_KINDS), required=True),
    "dim": Key("model", int, None, lambda v: v >= 1, "must be >= 1"),
    "reg_weight": Key("model", float, 0.0, _nonneg, "must be >= 0"),
    "curvature": Key("model", float, 1.0),
    "shift": Key("model", float, 0.0),
    "n_terms": Key("model", int, 1024, lambda v: v >= 1, "must be >= 1"),
    "center_std": Key("model", float, 1.0, _nonneg, "must be >= 0"),
    "curvature_min": Key("model", float, 0.5, _pos, "must be > 0"),
    "curvature_max": Key("model", float, 1.5, _pos, "must be > 0"),
    "data": Key("model", str, None),
    "dataset": Key("model", _choice("xor", "two_gaussians"), None),
    "n_data": Key("model", int, 256, lambda v: v >= 1, "must be >= 1"),
    "data_seed": Key("model", int, 12345),
    "label_scale": Key("model", float, 0.5, _pos, "must be > 0"),
    "neuron": Key("model", _choice("tanh_dot", "bounded_amp"), "tanh_dot"),
    "loss": Key("model", _choice("squared", "logistic"), "squared"),
    "bandwidth": Key("model", float, 1.0, _pos, "must be > 0"),
    "parameterization": Key("model", _choice("dirac", "gaussian_mixture"), "dirac"),
    "mixture_std": Key("model", float, 0.5, _pos, "must be > 0"),
    "target_mean": Key("model", float, 0.0),
    "target_std": Key("model", float, 1.0, _pos, "must be > 0"),
    # [dynamics]
    "lambda": Key("dynamics", float, None, _pos, "must be > 0", required=True),
    "eta": Key("dynamics", float, None, _pos, "must be > 0"),
    "eta_sequence": Key("dynamics", _float_list, None, lambda v: all(e > 0 for e in v), "entries must be > 0"),
    "N": Key("dynamics", int, None, lambda v: v >= 1, "must be >= 1", required=True),
    "K": Key("dynamics", int, None, _nonneg, "must be >= 0", required=True),
    "seed": Key("dynamics", int, 0),
    "init_mean": Key("dynamics", float, 0.0),
    "init_std": Key("dynamics", float, 1.0, _nonneg, "must be >= 0"),
    "init_file": Key("dynamics", str, None),
    # [estimator]
    "kind": Key("estimator", _choice("full", "sgd", "svrg"), "full"),
    "batch_size": Key("estimator", int, 1, lambda v: v >= 1, "must be >= 1"),
    "refresh_period": Key("estimator", int, 1, lambda v: v >= 1, "must be >= 1"),
    # [output]
    "out_dir": Key("output", str, "out"),
    "log_every": Key("output", int, 100, lambda v: v >= 1, "must be >= 1"),
    "threads": Key("output", _threads, "auto"),
    "entropy": Key("output", _bool, True),
    "sigma_v_probe": Key("output", _bool, False),
    "probe_trials": Key("output", int, 8, lambda v: v >= 2, "must be >= 2"),
    "wall_time": Key("output", _bool, False),
    "delta0": Key("output", float, None),
}


@dataclass
class RunConfig:
    """Validated configuration; index with the key name (``cfg["lambda"]``)."""

    values: dict[str, Any]
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key: str, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        vals = dict(self.values)
        for key, raw in overrides.items():
            vals[key] = _convert(key, raw, None) if isinstance(raw, str) else raw
        _check_required(vals)
        return RunConfig(vals, self.base_dir)

    def resolve_path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def to_text(self) -> str:
        """Canonical config text; parsing it back gives an equal config."""
        out = []
        for section in SECTIONS:
            out.append(f"[{section}]")
            for key, spec in SCHEMA.items():
                if spec.section != section:
                    continue
                v = self.values.get(key)
                if v is None:
                    continue
                out.append(f"{key} = {_format(v)}")
        return "\n".join(out) + "\n"


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def _convert(key: str, raw: str, line: int | None):
    spec = SCHEMA.get(key)
    if spec is None:
        raise ConfigError(f"unknown key {key!r}", line, key)
    try:
        val = spec.parse(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}", line, key) from None
    if isinstance(val, float) and not math.isfinite(val):
        raise ConfigError(f"{key!r} must be finite", line, key)
    if spec.check is not None and not spec.check(val):
        raise ConfigError(f"{key!r} {spec.check_msg} (got {raw.strip()})", line, key)
    return val


def _check_required(vals: dict) -> None:
    for key, spec in SCHEMA.items():
        if spec.required and vals.get(key) is None:
            raise ConfigError(f"missing required key {key!r} in [{spec.section}]", key=key)
    if vals.get("eta") is None and vals.get("eta_sequence") is None:
        raise ConfigError("missing required key 'eta' (or 'eta_sequence') in [dynamics]", key="eta")
    seq = vals.get("eta_sequence")
    if seq is not None and len(seq) < vals["K"]:
        raise ConfigError(f"eta_sequence has {len(seq)} entries but K = {vals['K']}", key="eta_sequence")
    if vals.get("curvature_min", 0.5) > vals.get("curvature_max", 1.5):
        raise ConfigError("curvature_min exceeds curvature_max", key="curvature_min")


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    vals: dict[str, Any] = {}
    seen: dict[str, int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        spec = SCHEMA.get(key)
        if spec is None:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if section is None:
            raise ConfigError(f"key {key!r} appears before any section header", lineno, key)
        if spec.section != section:
            raise ConfigError(f"key {key!r} belongs in [{spec.section}], not [{section}]", lineno, key)
        if key in seen:
            warnings.warn(
                f"line {lineno}: duplicate key {key!r} (first on line {seen[key]}); keeping the last value",
                DuplicateKeyWarning,
                stacklevel=2,
            )
        seen[key] = lineno
        vals[key] = _convert(key, value, lineno)
    for key, spec in SCHEMA.items():
        vals.setdefault(key, spec.default)
    _check_required(vals)
    return RunConfig(vals, base_dir or Path.cwd())


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent.resolve())


PRESETS = ("gaussian-ld", "nn-xor", "mmd-1d", "ksd-gauss", "svrg-sum")


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return resources.files("mfld.harness").joinpath("presets", f"{name}.cfg").read_text(encoding="utf-8")


def load_preset(name: str, overrides: dict[str, str] | None = None) -> RunConfig:
    cfg = parse_config(preset_text(name))
    return cfg.with_overrides(overrides) if overrides else cfg
