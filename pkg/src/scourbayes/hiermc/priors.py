"""Gamma hyper-priors for the population-level parameters."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import stats

PARAMS = ("E_mu", "V_mu", "E_sigma", "V_sigma", "gamma")


@dataclass(frozen=True)
class GammaPrior:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("gamma shape and rate must be positive")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def sd(self) -> float:
        return self.shape**0.5 / self.rate

    @classmethod
    def from_mean_sd(cls, mean: float, sd: float) -> "GammaPrior":
        shape = (mean / sd) ** 2
        return cls(shape, shape / mean)

    def dist(self):
        return stats.gamma(a=self.shape, scale=1.0 / self.rate)


@dataclass(frozen=True)
class HyperPriorConfig:
    """Shape/rate pairs for E_mu, V_mu, E_sigma, V_sigma and the noise sd gamma.

    Stiffness means are in N/m^2, variances in (N/m^2)^2 and gamma in Hz.
    """

    E_mu: GammaPrior
    V_mu: GammaPrior
    E_sigma: GammaPrior
    V_sigma: GammaPrior
    gamma: GammaPrior

    def __iter__(self):
        return (getattr(self, p) for p in PARAMS)

    @property
    def shapes(self) -> np.ndarray:
        return np.array([p.shape for p in self])

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self])

    def to_dict(self) -> dict:
        out = {}
        for i, p in enumerate(PARAMS):
            g = getattr(self, p)
            out[f"alpha_{i}"] = g.shape
            out[f"beta_{i}"] = g.rate
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "HyperPriorConfig":
        d = {k: v for k, v in d.items() if not k.startswith("_")}
        return cls(*(GammaPrior(d[f"alpha_{i}"], d[f"beta_{i}"]) for i in range(len(PARAMS))))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "HyperPriorConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_priors(template: str = "nrel5mw") -> HyperPriorConfig:
    """Shipped hyper-prior constants for a built-in template."""
    text = resources.files("scourbayes.data").joinpath(f"hyperpriors_{template}.json").read_text()
    return HyperPriorConfig.from_dict(json.loads(text))
