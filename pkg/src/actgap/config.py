"""Flat ``key = value`` experiment config files.

Keys before the first ``[section]`` header are shared defaults; each section
declares one arm and may override any key. A file without sections describes
a single arm. ``sweep.n`` / ``sweep.h`` expand an arm into one arm per listed
value (only for augmentations that use that parameter).

Example::

    env = pendulum
    seeds = 0,1,2,3,4,5,6,7,8,9
    budget = 40000

    [baseline]
    arm = baseline

    [oracle]
    arm = oracle
    augmentation = duplicate
    sweep.n = 5,15,50
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from .augmentation import AugmentationSpec
from .harness import ExperimentConfig


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "<config>", line: Optional[int] = None,
                 key: Optional[str] = None):
        where = source if line is None else f"{source}:{line}"
        what = f" [{key}]" if key else ""
        super().__init__(f"{where}{what}: {message}")
        self.source = source
        self.line = line
        self.key = key


def _int(v: str) -> int:
    return int(v)


def _opt_int(v: str) -> Optional[int]:
    return None if v.lower() in ("", "default") else int(v)


def _opt_float(v: str) -> Optional[float]:
    return None if v.lower() in ("", "default") else float(v)


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _int_tuple(v: str) -> Tuple[int, ...]:
    return tuple(int(x) for x in v.split(",") if x.strip())


def _seeds(v: str) -> Tuple[int, ...]:
    # accepts "0,1,2" or a range "0-9"
    if "-" in v and "," not in v:
        lo, hi = (int(x) for x in v.split("-"))
        return tuple(range(lo, hi + 1))
    return _int_tuple(v)


def _str(v: str) -> str:
    return v


# key -> (parser, documented default)
KEYS: Dict[str, Tuple[Callable, str]] = {
    "env": (_str, "(mandatory: cartpole, pendulum or chain)"),
    "agent": (_str, "dqn"),
    "arm": (_str, "unmodified"),
    "augmentation": (_str, "none"),
    "n": (_int, "1"),
    "h": (float, "1.0"),
    "random_k": (_str, "clique"),
    "seeds": (_seeds, "0-9"),
    "budget": (_opt_int, "default (cartpole 100000, pendulum 40000, chain 5000)"),
    "chain_n": (_int, "5"),
    "alpha": (_opt_float, "default (0.1 tabular, 0.0005 dqn)"),
    "gamma": (float, "0.99"),
    "epsilon_start": (float, "1.0"),
    "epsilon_end": (float, "0.05"),
    "epsilon_decay_fraction": (_opt_float, "default (0.5 tabular, 0.1 dqn)"),
    "batch_size": (_int, "64"),
    "replay_capacity": (_int, "50000"),
    "learning_starts": (_int, "1000"),
    "target_sync_interval": (_int, "500"),
    "train_interval": (_int, "1"),
    "hidden": (_int_tuple, "128,128"),
    "grad_clip": (float, "10.0"),
    "normalize_by_clique": (_bool, "false"),
    "dtype": (_str, "float32"),
    "threshold": (_opt_float, "default (environment solve threshold)"),
    "window": (_int, "20"),
    "sweep.n": (_int_tuple, "(none)"),
    "sweep.h": (lambda v: tuple(float(x) for x in v.split(",") if x.strip()), "(none)"),
}

_AUG_KEYS = ("augmentation", "n", "h", "random_k")


def _parse_lines(text: str, source: str):
    """Yield (section or None, key, raw value, line number) and section headers."""
    section = None
    sections: List[str] = []
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header {raw.strip()!r}", source, lineno)
            section = line[1:-1].strip()
            if section in sections:
                raise ConfigError(f"duplicate section [{section}]", source, lineno)
            sections.append(section)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", source, lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", source, lineno, key)
        entries.append((section, key, value, lineno))
    return sections, entries


def _build(values: Dict[str, Tuple[object, int]], name: str, source: str) -> ExperimentConfig:
    if "env" not in values:
        raise ConfigError(f"missing mandatory key 'env' for arm [{name}]", source, None, "env")
    aug_kwargs = {}
    for key, field_name in (("augmentation", "kind"), ("n", "n"), ("h", "h"),
                            ("random_k", "random_k")):
        if key in values:
            aug_kwargs[field_name] = values[key][0]
    try:
        aug = AugmentationSpec(**aug_kwargs)
    except ValueError as exc:
        line = max((values[k][1] for k in _AUG_KEYS if k in values), default=None)
        raise ConfigError(str(exc), source, line, "augmentation") from None
    kwargs = {k: v for k, (v, _) in values.items()
              if k not in _AUG_KEYS and not k.startswith("sweep.")}
    try:
        return ExperimentConfig(name=name, augmentation=aug, **kwargs)
    except ValueError as exc:
        line = max((ln for _, ln in values.values()), default=None)
        raise ConfigError(str(exc), source, line) from None


def parse_config_text(text: str, source: str = "<config>") -> List[ExperimentConfig]:
    """Every arm described by ``text``, sweeps expanded, fully validated."""
    sections, entries = _parse_lines(text, source)
    shared: Dict[str, Tuple[object, int]] = {}
    per_section: Dict[str, Dict[str, Tuple[object, int]]] = {s: {} for s in sections}
    for section, key, raw, lineno in entries:
        parser = KEYS[key][0]
        try:
            value = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value {raw!r}: {exc}", source, lineno, key) from None
        if key == "h" and not 0.0 <= value <= 1.0:
            raise ConfigError(f"h must lie in [0, 1], got {value}", source, lineno, key)
        if key == "sweep.h" and any(not 0.0 <= x <= 1.0 for x in value):
            raise ConfigError(f"sweep.h values must lie in [0, 1], got {raw}", source, lineno, key)
        target = shared if section is None else per_section[section]
        if key in target:
            raise ConfigError(f"key {key!r} set twice", source, lineno, key)
        target[key] = (value, lineno)

    arms = [(s, {**shared, **per_section[s]}) for s in sections] if sections else \
        [(None, dict(shared))]
    configs: List[ExperimentConfig] = []
    for section, values in arms:
        name = section or str(values.get("arm", ("unmodified", 0))[0])
        kind = values.get("augmentation", ("none", 0))[0]
        sweep_n = values.get("sweep.n")
        sweep_h = values.get("sweep.h")
        if sweep_n and sweep_h:
            raise ConfigError("sweep.n and sweep.h cannot be combined", source, sweep_h[1])
        if sweep_n and kind in ("duplicate", "noop"):
            for v in sweep_n[0]:
                configs.append(_build({**values, "n": (v, sweep_n[1])}, f"{name}_n{v}", source))
        elif sweep_h and kind == "semi_duplicate":
            for v in sweep_h[0]:
                configs.append(_build({**values, "h": (v, sweep_h[1])}, f"{name}_h{v:g}", source))
        else:
            configs.append(_build(values, name, source))
    names = [c.name for c in configs]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise ConfigError(f"duplicate arm names after sweep expansion: {sorted(dupes)}", source)
    return configs


def parse_config(path) -> List[ExperimentConfig]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config_text(text, str(path))


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_text(cfg: ExperimentConfig) -> str:
    """One-section config text that parses back to ``cfg``."""
    lines = [f"[{cfg.name}]"]
    aug = cfg.augmentation
    lines += [f"augmentation = {aug.kind}", f"n = {aug.n}", f"h = {aug.h!r}",
              f"random_k = {aug.random_k}"]
    for f in dataclasses.fields(cfg):
        if f.name in ("name", "augmentation"):
            continue
        value = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'default' if value is None else _format(value)}")
    return "\n".join(lines) + "\n"


def describe_keys() -> str:
    width = max(len(k) for k in KEYS)
    return "\n".join(f"{k.ljust(width)}  default: {d}" for k, (_, d) in KEYS.items()) + "\n"
