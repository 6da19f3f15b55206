"""Polynomial surrogate of first bending frequency against foundation stiffness."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from numpy.polynomial import Polynomial

from .beam_fem import FoundationModel, StructureTemplate, first_frequency


class FitError(ValueError):
    """The samples cannot support a well-posed, monotone fit."""


class DomainError(ValueError):
    """Evaluation requested outside the fitted stiffness interval."""


@dataclass(frozen=True)
class Surrogate:
    """Degree-``n`` polynomial in the normalised stiffness ``(s - center) / half_width``.

    Coefficients are in ascending order. ``max_rel_residual`` is the largest
    relative residual over the training samples.
    """

    coefficients: tuple[float, ...]
    domain: tuple[float, float]
    center: float
    half_width: float
    max_abs_residual: float = 0.0
    max_rel_residual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def _poly(self) -> Polynomial:
        return Polynomial(self.coefficients)

    def in_domain(self, s) -> np.ndarray | bool:
        lo, hi = self.domain
        return (s >= lo) & (s <= hi)

    def _x(self, s):
        s_arr = np.asarray(s, dtype=float)
        if not np.all(self.in_domain(s_arr)):
            raise DomainError(f"stiffness outside surrogate domain {self.domain}")
        return (s_arr - self.center) / self.half_width

    def eval(self, s):
        """Frequency in Hz; scalar in, scalar out."""
        out = self._poly(self._x(s))
        return float(out) if np.ndim(out) == 0 else out

    __call__ = eval

    def eval_grad(self, s):
        """Derivative of frequency with respect to stiffness, Hz per N/m^2."""
        out = self._poly.deriv()(self._x(s)) / self.half_width
        return float(out) if np.ndim(out) == 0 else out

    def eval_unchecked(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Value and derivative without the domain check (caller guarantees it)."""
        x = (s - self.center) / self.half_width
        c = self.coefficients
        val = np.full_like(x, c[-1])
        der = np.zeros_like(x)
        for a in c[-2::-1]:
            der = der * x + val
            val = val * x + a
        return val, der / self.half_width

    @property
    def range(self) -> tuple[float, float]:
        return self.eval(self.domain[0]), self.eval(self.domain[1])

    def inverse(self, freq, clip: bool = True):
        """Stiffness giving ``freq``; frequencies outside the range clip to the domain ends.

        Uses bisection, so it relies on the fit being monotone.
        """
        f = np.atleast_1d(np.asarray(freq, dtype=float))
        flo, fhi = self.range
        if not clip and (np.any(f < flo) or np.any(f > fhi)):
            raise DomainError("frequency outside surrogate range")
        lo = np.full_like(f, self.domain[0])
        hi = np.full_like(f, self.domain[1])
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self.eval_unchecked(mid)[0] < f
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = 0.5 * (lo + hi)
        return float(out[0]) if np.ndim(freq) == 0 else out

    def raw_coefficients(self) -> np.ndarray:
        """Ascending coefficients in the un-normalised stiffness."""
        p = Polynomial(self.coefficients,
                       domain=[self.center - self.half_width, self.center + self.half_width])
        return p.convert().coef

    def to_dict(self) -> dict:
        return {
            "coefficients": list(self.coefficients),
            "domain": list(self.domain),
            "center": self.center,
            "half_width": self.half_width,
            "max_abs_residual": self.max_abs_residual,
            "max_rel_residual": self.max_rel_residual,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Surrogate":
        d = {k: v for k, v in d.items() if not k.startswith("_")}
        d["coefficients"] = tuple(d["coefficients"])
        d["domain"] = tuple(d["domain"])
        return cls(**d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "Surrogate":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit(samples: Iterable[tuple[float, float]], degree: int = 5,
        check_points: int = 1000) -> Surrogate:
    """Least-squares polynomial fit in the normalised input.

    Raises FitError for too few distinct stiffnesses, a rank-deficient design
    matrix, or a fit whose derivative is not strictly positive on the domain.
    """
    data = np.asarray(list(samples), dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise FitError("samples must be (stiffness, frequency) pairs")
    s, f = data[:, 0], data[:, 1]
    if not np.all(np.isfinite(data)):
        raise FitError("samples must be finite")
    if len(np.unique(s)) < degree + 1:
        raise FitError(f"need at least {degree + 1} distinct stiffness values")

    lo, hi = float(s.min()), float(s.max())
    center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    x = (s - center) / half
    vander = np.polynomial.polynomial.polyvander(x, degree)
    coef, _, rank, _ = np.linalg.lstsq(vander, f, rcond=None)
    if rank < degree + 1:
        raise FitError("rank-deficient design matrix")

    resid = vander @ coef - f
    grid = np.linspace(-1.0, 1.0, check_points)
    slope = Polynomial(coef).deriv()(grid)
    if not np.all(slope > 0):
        raise FitError("fitted polynomial is not strictly increasing on its domain")
    return Surrogate(tuple(coef), (lo, hi), center, half,
                     float(np.max(np.abs(resid))),
                     float(np.max(np.abs(resid / f))))


# Stiffness domains (N/m^2) over which the built-in templates' quintic fits are
# monotone and accurate to better than 0.1 %.
DEFAULT_DOMAINS = {"nrel5mw": (2.0e6, 8.0e6), "wavetank": (4.0e5, 2.0e6)}


def stiffness_grid(domain: tuple[float, float], n_points: int = 30) -> np.ndarray:
    """Log-uniform training stiffnesses including both ends."""
    return np.geomspace(domain[0], domain[1], n_points)


def fe_model(template: StructureTemplate, n_elements: int = 100, scour_depth: float = 0.0,
             base_condition: str = "axial_pin", **build_kwargs) -> Callable[[float], float]:
    """Stiffness-to-frequency function backed by the FE model."""
    def model(s: float) -> float:
        foundation = FoundationModel(float(s), scour_depth, base_condition)
        return first_frequency(template, foundation, n_elements, **build_kwargs)
    return model


def fit_fe(template: StructureTemplate, domain: tuple[float, float], n_points: int = 30,
           degree: int = 5, **model_kwargs) -> Surrogate:
    model = fe_model(template, **model_kwargs)
    grid = stiffness_grid(domain, n_points)
    return fit([(s, model(s)) for s in grid], degree)


def holdout_error(surrogate: Surrogate, model: Callable[[float], float],
                  n_points: int = 10) -> float:
    """Max relative error against ``model`` on points between the training nodes."""
    lo, hi = surrogate.domain
    u = (np.arange(n_points) + 0.5) / n_points
    pts = np.exp(np.log(lo) + u * (np.log(hi) - np.log(lo)))
    return max(abs(surrogate.eval(p) / model(p) - 1.0) for p in pts)


class NotBracketedError(ValueError):
    pass


def tune_stiffness(template: StructureTemplate, target_freq: float,
                   bracket: tuple[float, float], tol: float = 1e-4,
                   max_iter: int = 200, **model_kwargs) -> float:
    """Bisect the FE model for the stiffness whose first frequency is ``target_freq``.

    Returns once ``|f(s) - target| < tol`` (Hz). Midpoints are geometric when
    the bracket is strictly positive.
    """
    model = fe_model(template, **model_kwargs)
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 <= lo < hi:
        raise ValueError("bracket must satisfy 0 <= lo < hi")
    f_lo, f_hi = model(lo), model(hi)
    if abs(f_lo - target_freq) < tol:
        return lo
    if abs(f_hi - target_freq) < tol:
        return hi
    if not f_lo < target_freq < f_hi:
        raise NotBracketedError(
            f"target {target_freq} Hz not inside [{f_lo:.6f}, {f_hi:.6f}] Hz")
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
        f_mid = model(mid)
        if abs(f_mid - target_freq) < tol:
            return mid
        if f_mid < target_freq:
            lo = mid
        else:
            hi = mid
    raise RuntimeError("bisection did not converge")

