"""Campaign configuration: a flat key/value document shared by CLI and service."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np
import yaml

from steerbo import testbed

SURROGATE_KINDS = ("gp", "laplace_mlp")
KERNEL_KINDS = ("matern52", "tanimoto")
SELECTORS = ("random", "bald", "sdiff", "ldiff")
EXPERT_KINDS = ("hint", "constraint", "none", "human")
MODES = ("sim", "live")


class ConfigError(ValueError):
    """Raised for unknown keys, bad ranges, or invariant violations."""


@dataclass(frozen=True)
class CampaignConfig:
    problem_name: str
    d: int = 0  # 0 = infer from the problem (or fingerprint file)
    lb: float = 0.0
    ub: float = 1.0
    surrogate_kind: str = "gp"
    kernel_kind: str = "matern52"
    n_init: int = 10
    horizon: int = 100
    pool_size: int = 1024
    gamma0: float = 1.0
    gamma_decay: float = 1.0
    p_fb: float = 0.1
    pairs_per_event: int = 3
    selector: str = "random"
    expert_kind: str = "none"
    constraint_c: Optional[float] = None
    seed: int = 0
    mode: str = "sim"

    @property
    def is_fingerprint_campaign(self) -> bool:
        return self.problem_name.endswith(".csv")


_FIELD_TYPES = {
    "problem_name": str,
    "d": int,
    "lb": float,
    "ub": float,
    "surrogate_kind": str,
    "kernel_kind": str,
    "n_init": int,
    "horizon": int,
    "pool_size": int,
    "gamma0": float,
    "gamma_decay": float,
    "p_fb": float,
    "pairs_per_event": int,
    "selector": str,
    "expert_kind": str,
    "constraint_c": float,
    "seed": int,
    "mode": str,
}


def _check_enum(key: str, value: str, allowed: tuple[str, ...]) -> None:
    if value not in allowed:
        raise ConfigError(f"{key}: expected one of {', '.join(allowed)}, got {value!r}")


def validate_config(cfg: CampaignConfig) -> CampaignConfig:
    """Resolve problem-derived defaults and enforce every config invariant."""
    _check_enum("surrogate_kind", cfg.surrogate_kind, SURROGATE_KINDS)
    _check_enum("kernel_kind", cfg.kernel_kind, KERNEL_KINDS)
    _check_enum("selector", cfg.selector, SELECTORS)
    _check_enum("expert_kind", cfg.expert_kind, EXPERT_KINDS)
    _check_enum("mode", cfg.mode, MODES)

    if cfg.is_fingerprint_campaign:
        if cfg.d < 0:
            raise ConfigError("d: must be non-negative")
    else:
        problem = testbed.make_problem(cfg.problem_name)  # raises on unknown name
        if cfg.d == 0:
            cfg = replace(cfg, d=problem.d, lb=problem.lb, ub=problem.ub)
        elif cfg.d != problem.d:
            raise ConfigError(
                f"d: {cfg.problem_name} is {problem.d}-dimensional, got d={cfg.d}"
            )

    if not cfg.is_fingerprint_campaign and not cfg.lb < cfg.ub:
        raise ConfigError(f"lb: bounds must satisfy lb < ub, got [{cfg.lb}, {cfg.ub}]")
    if cfg.n_init < 2:
        raise ConfigError(f"n_init: must be at least 2, got {cfg.n_init}")
    if cfg.horizon < 1:
        raise ConfigError(f"horizon: must be at least 1, got {cfg.horizon}")
    if cfg.pool_size < 2:
        raise ConfigError(f"pool_size: must be at least 2, got {cfg.pool_size}")
    if cfg.pairs_per_event < 1:
        raise ConfigError(f"pairs_per_event: must be at least 1, got {cfg.pairs_per_event}")
    if cfg.gamma0 < 0:
        raise ConfigError(f"gamma0: must be non-negative, got {cfg.gamma0}")
    if not 0.0 < cfg.gamma_decay <= 1.0:
        raise ConfigError(f"gamma_decay: must be in (0, 1], got {cfg.gamma_decay}")
    if not 0.0 <= cfg.p_fb <= 1.0:
        raise ConfigError(f"p_fb: must be in [0, 1], got {cfg.p_fb}")
    if cfg.constraint_c is not None and cfg.constraint_c < 0:
        raise ConfigError(f"constraint_c: must be non-negative, got {cfg.constraint_c}")
    if (cfg.expert_kind == "human") != (cfg.mode == "live"):
        raise ConfigError(
            "expert_kind: human feedback and live mode imply each other "
            f"(got expert_kind={cfg.expert_kind}, mode={cfg.mode})"
        )
    return cfg


def config_from_mapping(raw: dict) -> CampaignConfig:
    if "problem_name" not in raw:
        raise ConfigError("problem_name: required key is missing")
    kwargs = {}
    for key, value in raw.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{key}: unknown configuration key")
        if value is None:
            if key == "constraint_c":
                kwargs[key] = None
                continue
            raise ConfigError(f"{key}: value must not be null")
        caster = _FIELD_TYPES[key]
        try:
            if caster is int:
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError
                kwargs[key] = int(value)
            elif caster is float:
                kwargs[key] = float(value)
            else:
                kwargs[key] = str(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: cannot interpret {value!r} as {caster.__name__}") from None
    return validate_config(CampaignConfig(**kwargs))


def parse_config(text: str) -> CampaignConfig:
    """Parse the flat key/value config document (YAML mapping of scalars)."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config document is not well-formed: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a flat key/value mapping")
    for key, value in raw.items():
        if isinstance(value, (dict, list)):
            raise ConfigError(f"{key}: nested values are not allowed")
    return config_from_mapping(raw)


def load_config(path) -> CampaignConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg: CampaignConfig) -> str:
    """Emit a document that parses back to an equal config."""
    return yaml.safe_dump(asdict(cfg), sort_keys=True, default_flow_style=False)


def thread_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (BO-thread, feedback-thread) RNG streams for one campaign."""
    bo_seq, fb_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(bo_seq), np.random.default_rng(fb_seq)
