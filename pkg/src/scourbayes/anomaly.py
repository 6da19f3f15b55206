"""Posterior-predictive frequency distributions and left-tail anomaly scores."""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .hiermc.chains import PosteriorChains
from .popgen import Observation
from .surrogate import Surrogate

REGIMES = ("partial", "nopool")
TABLE_COLUMNS = ("obs", "scour_depth_mm", "nat_freq_hz", "prob_no_pooling", "prob_partial_pooled")


class AnomalyError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class PredictiveDistribution:
    structure_id: str
    samples: np.ndarray  # Hz, one per post-warm-up draw
    regime: str

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.size == 0:
            raise AnomalyError("empty predictive distribution")
        if not np.all(np.isfinite(self.samples) & (self.samples > 0)):
            raise AnomalyError("predictive draws must be finite and positive")

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    @property
    def sd(self) -> float:
        return float(self.samples.std(ddof=1))


@dataclass(frozen=True)
class AnomalyScore:
    observation: float  # Hz
    scour_depth: float | None  # mm, carried along but unused in scoring
    p_no_pooling: float
    p_partial_pooled: float
    flag: bool  # partially-pooled probability below the threshold

    @property
    def ratio(self) -> float:
        """Partially-pooled over no-pooling probability (nan when both are 0)."""
        if self.p_no_pooling == 0:
            return math.nan if self.p_partial_pooled == 0 else math.inf
        return self.p_partial_pooled / self.p_no_pooling


def _truncated_normal(rng, mean, sd, lo, hi):
    """Vectorised draws from Normal(mean, sd^2) restricted to [lo, hi]."""
    out = np.clip(mean, lo, hi).astype(float)
    pos = sd > 0
    if np.any(pos):
        m, s = mean[pos], sd[pos]
        a, b = (lo - m) / s, (hi - m) / s
        out[pos] = stats.truncnorm.rvs(a, b, loc=m, scale=s, random_state=rng)
    return out


def posterior_predictive(chains: PosteriorChains, surrogate: Surrogate, structure_id: str,
                         seed: int = 0) -> PredictiveDistribution:
    """Push every post-warm-up draw through the generative model.

    For each draw ``s* ~ Normal(E_s, V_s)`` restricted to the surrogate domain
    and ``omega* ~ Normal(f(s*), gamma^2)``.
    """
    sid = str(structure_id)
    e_name, v_name = f"E_s[{sid}]", f"V_s[{sid}]"
    if e_name not in chains.names:
        raise AnomalyError(f"structure {sid!r} is not in the chains")
    try:
        rhat = chains.max_rhat([e_name, v_name, "gamma"])
    except ValueError:
        rhat = math.nan
    if not rhat < 1.05:
        warnings.warn(f"R-hat {rhat:.3f} for structure {sid}: chains may not have converged",
                      ConvergenceWarning, stacklevel=2)
    E = chains.flat(e_name)
    V = chains.flat(v_name)
    g = chains.flat("gamma")
    rng = np.random.default_rng(seed)
    lo, hi = surrogate.domain
    s = _truncated_normal(rng, E, np.sqrt(np.maximum(V, 0.0)), lo, hi)
    omega = surrogate.eval(s) + g * rng.standard_normal(len(s))
    regime = chains.metadata.get("regime", "partial")
    return PredictiveDistribution(sid, omega, regime)


def tail_probability(pred: PredictiveDistribution, omega_obs: float) -> float:
    """Monte Carlo estimate of P(omega* <= omega_obs)."""
    return float(np.count_nonzero(pred.samples <= omega_obs) / pred.samples.size)


def _as_observation(o) -> Observation:
    if isinstance(o, Observation):
        return o
    if isinstance(o, (tuple, list)):
        return Observation("", float(o[0]), None, None if len(o) < 2 else o[1])
    return Observation("", float(o))


def compare_pooling(chains_partial: PosteriorChains, chains_nopool: PosteriorChains,
                    surrogate: Surrogate, observations: Sequence, structure_id: str | None = None,
                    threshold: float = 0.05, seed: int = 0,
                    check_regimes: bool = True) -> list[AnomalyScore]:
    """Score ``observations`` against both regimes' predictive distributions.

    Observations may be :class:`Observation` objects, bare frequencies or
    ``(frequency, scour_mm)`` pairs. ``structure_id`` defaults to the
    structure of the no-pooling chains. An observation is flagged when its
    partially-pooled probability falls strictly below ``threshold``.
    """
    if check_regimes:
        got = (chains_partial.metadata.get("regime"), chains_nopool.metadata.get("regime"))
        if got != REGIMES:
            raise AnomalyError(f"expected regimes {REGIMES}, got {got}")
    if structure_id is None:
        ids = chains_nopool.metadata.get("structure_ids") or []
        if len(ids) != 1:
            raise AnomalyError("structure_id is required when the no-pooling chains "
                               "cover several structures")
        structure_id = ids[0]
    pred_p = posterior_predictive(chains_partial, surrogate, structure_id, seed)
    pred_n = posterior_predictive(chains_nopool, surrogate, structure_id, seed)
    out = []
    for o in map(_as_observation, observations):
        pp = tail_probability(pred_p, o.frequency_hz)
        pn = tail_probability(pred_n, o.frequency_hz)
        out.append(AnomalyScore(o.frequency_hz, o.scour_mm, pn, pp, pp < threshold))
    return out


def scores_to_csv(scores: Sequence[AnomalyScore], path: str | Path | None = None,
                  header: Sequence[str] = ()) -> str:
    """Table of scores with one row per observation, numbered from 1."""
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for i, sc in enumerate(scores, start=1):
        w.writerow([i, "" if sc.scour_depth is None else repr(float(sc.scour_depth)),
                    repr(sc.observation), repr(sc.p_no_pooling), repr(sc.p_partial_pooled)])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
