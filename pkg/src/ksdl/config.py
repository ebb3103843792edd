"""Strict JSON configuration for experiment campaigns."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

__all__ = ["ConfigError", "InstanceConfig", "PhaseConfig", "LemmaConfig", "ExperimentConfig"]


class ConfigError(ValueError):
    """Malformed configuration document."""


def _strict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = _NESTED.get((cls, key))
        kwargs[key] = sub.from_dict(value, f"{where}.{key}") if sub else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class InstanceConfig:
    """Either the shipped fixture (``source="fixture"``) or a seeded random instance."""

    source: str = "fixture"
    path: str | None = None
    m: list | None = None
    p: list | None = None
    s: list | None = None
    x_min: float | None = None
    x_max: float | None = None
    noise_bound: float | None = None
    lam: float | None = None
    spread: float | None = None
    eps: list | None = None

    @classmethod
    def from_dict(cls, data, where="instance"):
        cfg = _strict(cls, data, where)
        cfg.validate(where)
        return cfg

    def validate(self, where="instance"):
        if self.source not in ("fixture", "random"):
            raise ConfigError(f"{where}.source must be 'fixture' or 'random'")
        if self.source == "random":
            missing = [k for k in ("m", "p", "s", "x_min", "x_max", "noise_bound", "lam", "eps")
                       if getattr(self, k) is None]
            if missing:
                raise ConfigError(f"{where}: random instances need {', '.join(missing)}")
            if not len(self.m) == len(self.p) == len(self.s) == len(self.eps):
                raise ConfigError(f"{where}: m, p, s and eps need one entry per mode")
        if self.eps is not None:
            for e, p in zip(self.eps, self.p or [float("inf")] * len(self.eps)):
                if not 0 < e <= 2 * p ** 0.5:
                    raise ConfigError(f"{where}: radius {e} outside (0, 2 sqrt(p_k)]")


@dataclass(frozen=True)
class PhaseConfig:
    n_grid: list = field(default_factory=lambda: [256, 512, 1024, 2048, 4096, 8192])
    trials: int = 5
    iters: int = 50
    tol: float = 1e-9
    init_fraction: float = 0.5

    @classmethod
    def from_dict(cls, data, where="phase"):
        cfg = _strict(cls, data, where)
        if cfg.trials < 1 or cfg.iters < 1 or not cfg.n_grid or min(cfg.n_grid) < 1:
            raise ConfigError(f"{where}: counts must be positive")
        if not 0 < cfg.init_fraction <= 1:
            raise ConfigError(f"{where}.init_fraction must be in (0, 1]")
        return cfg


@dataclass(frozen=True)
class LemmaConfig:
    structural: int = 100
    closed_form: int = 200
    certificate: int = 500
    coherence: int = 1000
    rip: int = 500
    perturbed_coherence: int = 1000
    operator: int = 500
    lipschitz: int = 1000

    @classmethod
    def from_dict(cls, data, where="lemmas"):
        cfg = _strict(cls, data, where)
        if any(getattr(cfg, f.name) < 1 for f in dataclasses.fields(cfg)):
            raise ConfigError(f"{where}: trial counts must be positive")
        return cfg


@dataclass(frozen=True)
class ExperimentConfig:
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    dict_samples: int = 64
    n_samples: int = 1000
    reps: int = 16
    n_grid: list = field(default_factory=lambda: [2 ** k for k in range(8, 15)])
    radius_fractions: list = field(default_factory=lambda: [1.0])
    xi: float = 9.0
    gap_mode: str = "auto"
    mc_samples: int = 100_000
    support_cap: int = 10_000
    lasso_tol: float = 1e-12
    bootstrap: int = 2000
    workers: int = 1
    phase: PhaseConfig = field(default_factory=PhaseConfig)
    lemmas: LemmaConfig = field(default_factory=LemmaConfig)

    @classmethod
    def from_dict(cls, data: dict, where: str = "config") -> "ExperimentConfig":
        cfg = _strict(cls, data, where)
        for name in ("dict_samples", "n_samples", "reps", "mc_samples", "bootstrap", "support_cap",
                     "workers"):
            if getattr(cfg, name) < 1:
                raise ConfigError(f"{where}.{name} must be positive")
        if not cfg.n_grid or min(cfg.n_grid) < 1:
            raise ConfigError(f"{where}.n_grid must hold positive sizes")
        if not cfg.radius_fractions or min(cfg.radius_fractions) <= 0:
            raise ConfigError(f"{where}.radius_fractions must be positive")
        if cfg.gap_mode not in ("auto", "enumerate", "monte_carlo"):
            raise ConfigError(f"{where}.gap_mode must be auto, enumerate or monte_carlo")
        if cfg.xi <= 0:
            raise ConfigError(f"{where}.xi must be positive")
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON of the resolved configuration."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


_NESTED = {
    (ExperimentConfig, "instance"): InstanceConfig,
    (ExperimentConfig, "phase"): PhaseConfig,
    (ExperimentConfig, "lemmas"): LemmaConfig,
}
