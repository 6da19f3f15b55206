"""Convergence diagnostics: rank-normalised split R-hat and bulk ESS."""
from __future__ import annotations

import numpy as np
from scipy import stats


class DiagnosticError(ValueError):
    pass


def _check(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise DiagnosticError("expected draws shaped (chains, iterations)")
    if x.shape[1] < 4:
        raise DiagnosticError("need at least 4 draws per chain")
    if not np.all(np.isfinite(x)):
        raise DiagnosticError("draws contain non-finite values")
    return x


def _split(x: np.ndarray) -> np.ndarray:
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, -half:]], axis=0)


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    r = stats.rankdata(x, method="average").reshape(x.shape)
    return stats.norm.ppf((r - 0.375) / (x.size + 0.25))


def _rhat_basic(x: np.ndarray) -> float:
    m, n = x.shape
    w = x.var(axis=1, ddof=1).mean()
    b = n * x.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * w + b / n
    return float(np.sqrt(var_plus / w))


def split_rhat(x) -> float:
    """Rank-normalised split R-hat, the larger of the bulk and folded versions.

    ``x`` is shaped ``(chains, iterations)``. Raises :class:`DiagnosticError`
    when a chain is constant, since the statistic is undefined there.
    """
    x = _check(x)
    if np.any(np.ptp(x, axis=1) == 0):
        raise DiagnosticError("R-hat is undefined for a constant chain")
    s = _split(x)
    bulk = _rhat_basic(_rank_normalize(s))
    folded = np.abs(s - np.median(s))
    tail = _rhat_basic(_rank_normalize(folded))
    return max(bulk, tail)


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    n_fft = 1 << (2 * n - 1).bit_length()
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, n_fft, axis=-1)
    ac = np.fft.irfft(f * np.conj(f), n_fft, axis=-1)[..., :n]
    return ac / n


def ess(x) -> float:
    """Bulk effective sample size (rank-normalised, split chains, Geyer truncation)."""
    x = _check(x)
    if np.any(np.ptp(x, axis=1) == 0):
        raise DiagnosticError("ESS is undefined for a constant chain")
    z = _rank_normalize(_split(x))
    m, n = z.shape
    acov = _autocov(z)
    chain_var = acov[:, 0] * n / (n - 1)
    w = chain_var.mean()
    var_plus = w * (n - 1) / n
    if m > 1:
        var_plus += z.mean(axis=1).var(ddof=1)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer initial monotone positive sequence over pairs
    t = 0
    pair_prev = np.inf
    total = 0.0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, pair_prev)
        total += pair
        pair_prev = pair
        t += 2
    tau = -1.0 + 2.0 * total
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def summarize(draws: np.ndarray, names: list[str]) -> list[dict]:
    """Mean, sd, R-hat and ESS for every parameter in ``draws[chains, iters, params]``."""
    out = []
    for j, name in enumerate(names):
        x = draws[:, :, j]
        try:
            rh, es = split_rhat(x), ess(x)
        except DiagnosticError:
            rh, es = float("nan"), float("nan")
        out.append({"name": name, "mean": float(x.mean()), "sd": float(x.std(ddof=1)),
                    "q05": float(np.quantile(x, 0.05)), "q95": float(np.quantile(x, 0.95)),
                    "rhat": rh, "ess": es})
    return out
