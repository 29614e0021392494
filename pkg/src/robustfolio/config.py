"""Run configuration shared by the command-line entry points."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass


class ConfigError(ValueError):
    """Rejected configuration value or malformed config file."""


@dataclass
class RunConfig:
    """Every knob of a backtest run, with the documented defaults.

    ``horizon``/``holding`` define the rolling schedule; ``n_points`` the
    frontier grid size; ``beta`` the model-level CVaR confidence while
    ``betas`` are the reporting levels; the ``bootstrap_*`` group sizes the
    joint moment ball; ``z``/``chi_*`` size the box and ellipsoid sets.
    """

    horizon: int = 250
    holding: int = 63
    n_points: int = 20
    seed: int = 0
    tau: float = 0.0
    beta: float = 0.95
    betas: tuple[float, ...] = (0.90, 0.95, 0.99)
    rf: float = 0.0
    long_only: bool = True
    gamma_step: float = 0.05
    lambda_min: float = 1e-3
    lambda_max: float = 1e3
    eta_min: float = 0.05
    eta_max: float = 0.95
    z: float = 1.96
    chi_level: float = 0.95
    chi_df: int | None = None
    bootstrap_draws: int = 1000
    bootstrap_pct: float = 0.95
    bootstrap_c: float = 1.0
    bootstrap_block: int = 63
    mixture_components: int = 4
    held_threshold: float = 1e-4

    def validate(self) -> "RunConfig":
        if self.horizon < 2:
            raise ConfigError(f"horizon must be >= 2, got {self.horizon}")
        if self.holding < 1:
            raise ConfigError(f"holding must be >= 1, got {self.holding}")
        if self.n_points < 1:
            raise ConfigError(f"n_points must be >= 1, got {self.n_points}")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError(f"beta must lie in (0, 1), got {self.beta}")
        for b in self.betas:
            if not 0.0 < b < 1.0:
                raise ConfigError(f"reporting beta must lie in (0, 1), got {b}")
        if not 0.0 < self.gamma_step <= 1.0:
            raise ConfigError(f"gamma_step must lie in (0, 1], got {self.gamma_step}")
        if self.lambda_min <= 0 or self.lambda_max < self.lambda_min:
            raise ConfigError(
                f"need 0 < lambda_min <= lambda_max, got [{self.lambda_min}, {self.lambda_max}]"
            )
        if not 0.0 < self.eta_min <= self.eta_max < 1.0:
            raise ConfigError(
                f"need 0 < eta_min <= eta_max < 1, got [{self.eta_min}, {self.eta_max}]"
            )
        if self.z <= 0:
            raise ConfigError(f"z must be positive, got {self.z}")
        if not 0.0 < self.chi_level < 1.0:
            raise ConfigError(f"chi_level must lie in (0, 1), got {self.chi_level}")
        if self.chi_df is not None and self.chi_df < 1:
            raise ConfigError(f"chi_df must be >= 1, got {self.chi_df}")
        if self.bootstrap_draws < 1:
            raise ConfigError(f"bootstrap_draws must be >= 1, got {self.bootstrap_draws}")
        if not 0.0 < self.bootstrap_pct <= 1.0:
            raise ConfigError(f"bootstrap_pct must lie in (0, 1], got {self.bootstrap_pct}")
        if self.bootstrap_c < 0:
            raise ConfigError(f"bootstrap_c must be >= 0, got {self.bootstrap_c}")
        if self.bootstrap_block < 2:
            raise ConfigError(f"bootstrap_block must be >= 2, got {self.bootstrap_block}")
        if self.mixture_components < 1:
            raise ConfigError(
                f"mixture_components must be >= 1, got {self.mixture_components}"
            )
        if self.held_threshold < 0:
            raise ConfigError(f"held_threshold must be >= 0, got {self.held_threshold}")
        return self

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["betas"] = list(self.betas)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "betas" in data and data["betas"] is not None:
            data = dict(data)
            data["betas"] = tuple(float(b) for b in data["betas"])
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.validate()

    @classmethod
    def from_json_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must contain a JSON object")
        return cls.from_dict(data)
