"""Run configuration: one validated home for every pipeline knob."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from .metric import MetricConfig, NeighborhoodRule
from .simulate import TrialSpec


class ConfigError(ValueError):
    """Invalid or unknown configuration; CLI maps this to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    estimator: str = "partial"  # local-effect estimator for the estimates
    weight_estimator: str = "moments"  # functional driving the feature weights
    min_cohort: int = 25
    sigma0: float | None = None
    sigma_weighted: float | None = None
    tau: float = 0.0
    dim: int = 5
    time: float = 1.0
    weight_alpha: float = 1.0
    weight_lam: float | None = None
    k_bins: int = 3
    branching: int = 2
    min_folder: int | None = None
    tree_method: str = "topdown"
    bottomup_eps: float | None = None
    knn: int | None = None
    radius: float | None = None
    balance_threshold: float = 0.8
    c_threshold: float = 0.5
    tol: float = 1e-3
    max_iters: int = 10
    repeats: int = 20
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.estimator not in ("moments", "partial"):
            raise ConfigError(f"estimator must be moments|partial, got {self.estimator!r}")
        if self.weight_estimator not in ("moments", "partial"):
            raise ConfigError(
                f"weight_estimator must be moments|partial, got {self.weight_estimator!r}"
            )
        if self.min_cohort < 2:
            raise ConfigError("min_cohort must be at least 2")
        for name in ("sigma0", "sigma_weighted", "radius", "weight_lam", "bottomup_eps"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive when given, got {v}")
        if self.tau < 0:
            raise ConfigError(f"tau must be nonnegative, got {self.tau}")
        if self.dim < 1 or self.time <= 0:
            raise ConfigError("dim must be >= 1 and time positive")
        if self.k_bins < 1 or self.branching < 2:
            raise ConfigError("k_bins must be >= 1 and branching >= 2")
        if self.min_folder is not None and self.min_folder < 1:
            raise ConfigError("min_folder must be >= 1 when given")
        if self.tree_method not in ("topdown", "bottomup"):
            raise ConfigError(f"tree_method must be topdown|bottomup, got {self.tree_method!r}")
        if self.knn is not None and self.knn < 1:
            raise ConfigError("knn must be >= 1 when given")
        if not 0.5 <= self.balance_threshold < 1.0:
            raise ConfigError("balance_threshold must be in [0.5, 1)")
        if self.c_threshold < 0:
            raise ConfigError("c_threshold must be nonnegative")
        if self.tol <= 0 or self.max_iters < 1:
            raise ConfigError("tol must be positive and max_iters >= 1")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")

    def metric_config(self) -> MetricConfig:
        neighborhood = None
        if self.radius is not None:
            neighborhood = NeighborhoodRule("radius", eps=self.radius)
        elif self.knn is not None:
            neighborhood = NeighborhoodRule("knn", k=self.knn)
        return MetricConfig(
            sigma0=self.sigma0,
            sigma_weighted=self.sigma_weighted,
            tau=self.tau,
            dim=self.dim,
            time=self.time,
            alpha=self.weight_alpha,
            lam=self.weight_lam,
            k_bins=self.k_bins,
            branching=self.branching,
            min_folder=self.min_folder,
            tree_method=self.tree_method,
            bottomup_eps=self.bottomup_eps,
            neighborhood=neighborhood,
            tol=self.tol,
            max_iters=self.max_iters,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **kw) -> "RunConfig":
        d = self.to_dict()
        d.update(kw)
        return RunConfig(**d)


def load_config(path) -> tuple[RunConfig, TrialSpec | None]:
    """Parse a JSON config file into (RunConfig, optional TrialSpec).

    Unknown keys are rejected; the trial spec lives under the "trial" key.
    """
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    trial = None
    if "trial" in raw:
        try:
            trial = TrialSpec.from_dict(raw.pop("trial"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid trial spec: {exc}") from exc
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return RunConfig(**raw), trial
    except TypeError as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
