"""Run configuration: built-in defaults, overlaid by a JSON config file,
overlaid by command-line overrides.

File layout (every key optional)::

    {"seed": 0, "workers": 1, "adapter_timeout_s": 30.0,
     "sim": {"p_common": 0.25, "editor_p_fix": 0.8, ...},
     "correction": {"max_iter": 2, "wer_gate": 0.0, "quality_gate": 6.0,
                    "margin": "uniform", "margin_s": 0.0, "cost": "default"}}
"""
from __future__ import annotations

import copy
import dataclasses
import json
import os

from .alignment import DEFAULT_COST, UNIT_COST
from .correction import CorrectionConfig, MarginPolicy
from .sim import SimConfig

ENV_VAR = "TTSFIX_CONFIG"

_SIM_DEFAULTS = {f.name: getattr(SimConfig(), f.name) for f in dataclasses.fields(SimConfig) if f.name != "seed"}
_SIM_DEFAULTS = {k: list(v) if isinstance(v, tuple) else v for k, v in _SIM_DEFAULTS.items()}
# the library leaves injection off; command-line runs inject each issue 10% of the time
_SIM_DEFAULTS.update(p_common=0.1, p_repeated=0.1, p_punctuation=0.1, p_abnormal=0.1)

DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "adapter_timeout_s": 30.0,
    "sim": _SIM_DEFAULTS,
    "correction": {"max_iter": 2, "wer_gate": 0.0, "quality_gate": 6.0, "margin": "uniform",
                   "margin_s": 0.0, "cost": "default", "full_mask_fallback": True},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, extra: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if key not in out:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key!r} must be an object")
            out[key] = _merge(out[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def resolve(path: str | None = None, overrides: dict | None = None) -> dict:
    """Defaults <- config file (``path`` or ``$TTSFIX_CONFIG``) <- overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    path = path or os.environ.get(ENV_VAR)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = _merge(cfg, data)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = cfg
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node[p]
        node[leaf] = value
    # validate eagerly so bad values surface as config errors
    if not isinstance(cfg["workers"], int) or cfg["workers"] < 1:
        raise ConfigError("workers must be a positive integer")
    if not float(cfg["adapter_timeout_s"]) > 0:
        raise ConfigError("adapter_timeout_s must be positive")
    try:
        sim_config(cfg)
        correction_config(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def sim_config(cfg: dict) -> SimConfig:
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in cfg["sim"].items()}
    return SimConfig(seed=int(cfg["seed"]), **kw)


def correction_config(cfg: dict) -> CorrectionConfig:
    c = cfg["correction"]
    if c["margin"] == "uniform":
        margin = MarginPolicy.uniform()
    elif c["margin"] == "fixed":
        margin = MarginPolicy.fixed(float(c["margin_s"]))
    else:
        raise ValueError(f"unknown margin policy {c['margin']!r}")
    costs = {"default": DEFAULT_COST, "unit": UNIT_COST}
    if c["cost"] not in costs:
        raise ValueError(f"unknown cost {c['cost']!r}")
    if not isinstance(c["max_iter"], int) or isinstance(c["max_iter"], bool):
        raise ValueError("max_iter must be an integer")
    return CorrectionConfig(max_iter=c["max_iter"], wer_gate=float(c["wer_gate"]),
                            quality_gate=float(c["quality_gate"]), margin=margin, cost=costs[c["cost"]],
                            full_mask_fallback=bool(c["full_mask_fallback"]))
