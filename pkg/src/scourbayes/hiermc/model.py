"""Log posterior and gradient of the partially-pooled and no-pooling models.

Every ``Normal(m, v)`` here takes a variance as its second argument, except
the likelihood, whose noise parameter ``gamma`` is a standard deviation
(variance ``gamma**2``).

Sampling happens in an unconstrained space: positive parameters are
log-transformed; the structure means ``E_s`` (real-valued under their Normal
prior) are divided by a fixed reference stiffness so that all coordinates
have comparable scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, log_ndtr

from ..surrogate import Surrogate
from .priors import HyperPriorConfig

LOG_2PI = math.log(2.0 * math.pi)
VARIANCE_PRIORS = ("truncated_normal", "lognormal")


@dataclass
class ParameterVector:
    """Constrained parameter values (``E_mu`` ... ``gamma`` are ``None`` under no pooling)."""

    E_s: np.ndarray
    V_s: np.ndarray
    s: np.ndarray
    gamma: float
    E_mu: float | None = None
    V_mu: float | None = None
    E_sigma: float | None = None
    V_sigma: float | None = None


def _gamma_block(x_log, shapes, rates):
    """Gamma log densities of exp(x_log) plus the log-Jacobian, and their gradient."""
    x = np.exp(x_log)
    lp = np.sum(shapes * np.log(rates) - gammaln(shapes) + shapes * x_log - rates * x)
    return lp, shapes - rates * x


def _mills(z):
    """phi(z) / Phi(z), stable for large negative z."""
    return np.exp(-0.5 * z * z - 0.5 * LOG_2PI - log_ndtr(z))


class _ObservationBlock:
    """Latent stiffness realisations and the Gaussian likelihood, shared by both models."""

    def __init__(self, obs, group, K, surrogate: Surrogate):
        self.obs = np.asarray(obs, dtype=float)
        self.group = np.asarray(group, dtype=int)
        self.K = int(K)
        self.N = len(self.obs)
        if self.N and (self.group.min() < 0 or self.group.max() >= self.K):
            raise ValueError("group index out of range")
        self.counts = np.bincount(self.group, minlength=self.K).astype(float)
        self.surrogate = surrogate
        self.lo, self.hi = surrogate.domain

    def __call__(self, log_s, E_s, V_s, gamma):
        """Return (lp, d/dlog_s, d/dE_s, d/dV_s, d/dgamma) or None if out of domain."""
        s = np.exp(log_s)
        if self.N and (s.min() < self.lo or s.max() > self.hi):
            return None
        g = self.group
        r = s - E_s[g]
        Vg = V_s[g]
        lp = -0.5 * np.sum(np.log(Vg) + LOG_2PI + r * r / Vg) + np.sum(log_s)
        d_s = -r / Vg
        d_E = np.bincount(g, weights=r / Vg, minlength=self.K)
        d_V = np.bincount(g, weights=0.5 * (r * r / Vg - 1.0) / Vg, minlength=self.K)

        f, fp = self.surrogate.eval_unchecked(s)
        e = self.obs - f
        inv_g2 = 1.0 / (gamma * gamma)
        lp += -self.N * (math.log(gamma) + 0.5 * LOG_2PI) - 0.5 * inv_g2 * np.dot(e, e)
        d_s = d_s + e * fp * inv_g2
        d_gamma = -self.N / gamma + np.dot(e, e) * inv_g2 / gamma
        return lp, s * d_s + 1.0, d_E, d_V, d_gamma


class HierarchicalModel:
    """Partially-pooled model over K structures.

    Unconstrained layout::

        [log E_mu, log V_mu, log E_sigma, log V_sigma, log gamma,
         E_s / s_ref (K), log V_s (K), log s (N)]
    """

    regime = "partial"

    def __init__(self, obs, group, K, surrogate: Surrogate, priors: HyperPriorConfig,
                 structure_ids=None, variance_prior: str = "truncated_normal"):
        if variance_prior not in VARIANCE_PRIORS:
            raise ValueError(f"variance_prior must be one of {VARIANCE_PRIORS}")
        self.block = _ObservationBlock(obs, group, K, surrogate)
        self.K, self.N = self.block.K, self.block.N
        self.surrogate = surrogate
        self.priors = priors
        self.variance_prior = variance_prior
        self.s_ref = surrogate.center
        self.structure_ids = [str(i + 1) for i in range(K)] if structure_ids is None \
            else [str(s) for s in structure_ids]
        self._shapes = priors.shapes
        self._rates = priors.rates
        self.dim = 5 + 2 * self.K + self.N

    @classmethod
    def from_dataset(cls, data, surrogate, priors, **kwargs):
        return cls(data.obs, data.group, data.K, surrogate, priors,
                   structure_ids=data.structure_ids, **kwargs)

    @property
    def names(self) -> list[str]:
        ids = self.structure_ids
        s_names = [f"s[{ids[k]},{i}]" for k, i in self._obs_index()]
        return ["E_mu", "V_mu", "E_sigma", "V_sigma", "gamma",
                *[f"E_s[{i}]" for i in ids], *[f"V_s[{i}]" for i in ids], *s_names]

    def _obs_index(self):
        seen = [0] * self.K
        out = []
        for k in self.block.group:
            seen[k] += 1
            out.append((k, seen[k]))
        return out

    def _split(self, q):
        K = self.K
        return q[:5], q[5:5 + K], q[5 + K:5 + 2 * K], q[5 + 2 * K:]

    def constrain(self, q) -> np.ndarray:
        """Unconstrained vector to constrained values in :attr:`names` order."""
        pop, u, lv, ls = self._split(np.asarray(q, dtype=float))
        return np.concatenate([np.exp(pop), u * self.s_ref, np.exp(lv), np.exp(ls)])

    def unconstrain(self, x) -> np.ndarray:
        pop, E_s, V_s, s = self._split(np.asarray(x, dtype=float))
        return np.concatenate([np.log(pop), E_s / self.s_ref, np.log(V_s), np.log(s)])

    def to_parameters(self, q) -> ParameterVector:
        x = self.constrain(q)
        pop, E_s, V_s, s = self._split(x)
        return ParameterVector(E_s, V_s, s, pop[4], *pop[:4])

    def from_parameters(self, p: ParameterVector) -> np.ndarray:
        x = np.concatenate([[p.E_mu, p.V_mu, p.E_sigma, p.V_sigma, p.gamma],
                            p.E_s, p.V_s, p.s])
        return self.unconstrain(x)

    def _variance_prior(self, V_s, E_sig, V_sig):
        """Log density of V_s given (E_sigma, V_sigma) and its gradients."""
        K = self.K
        if self.variance_prior == "truncated_normal":
            r = V_s - E_sig
            z = E_sig / math.sqrt(V_sig)
            lam = float(_mills(z))
            lp = -0.5 * np.sum(math.log(V_sig) + LOG_2PI + r * r / V_sig) - K * float(log_ndtr(z))
            d_V = -r / V_sig
            d_E = np.sum(r) / V_sig - K * lam / math.sqrt(V_sig)
            d_Vsig = 0.5 * np.sum(r * r / V_sig - 1.0) / V_sig + K * lam * z / (2.0 * V_sig)
            return lp, d_V, d_E, d_Vsig
        # moment-matched log-normal: mean E_sigma, variance V_sigma
        s2 = math.log1p(V_sig / E_sig**2)
        mu = math.log(E_sig) - 0.5 * s2
        lv = np.log(V_s)
        r = lv - mu
        lp = -np.sum(lv) - 0.5 * K * (math.log(s2) + LOG_2PI) - 0.5 * np.sum(r * r) / s2
        d_V = (-1.0 - r / s2) / V_s
        d_mu = np.sum(r) / s2
        d_s2 = -0.5 * K / s2 + 0.5 * np.sum(r * r) / s2**2
        ds2_dV = 1.0 / (E_sig**2 + V_sig)
        ds2_dE = -2.0 * V_sig / (E_sig * (E_sig**2 + V_sig))
        d_E = d_mu * (1.0 / E_sig - 0.5 * ds2_dE) + d_s2 * ds2_dE
        d_Vsig = d_mu * (-0.5 * ds2_dV) + d_s2 * ds2_dV
        return lp, d_V, d_E, d_Vsig

    def log_density(self, q) -> tuple[float, np.ndarray]:
        """Log posterior (up to a constant) and its gradient in unconstrained space.

        Returns ``(-inf, zeros)`` if any latent stiffness leaves the surrogate
        domain or a parameter overflows.
        """
        q = np.asarray(q, dtype=float)
        grad = np.zeros(self.dim)
        pop_log, u, lv, ls = self._split(q)
        K = self.K
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            pop = np.exp(pop_log)
            V_s = np.exp(lv)
            if not (np.all(np.isfinite(pop)) and np.all(pop > 0)
                    and np.all(np.isfinite(V_s)) and np.all(V_s > 0)):
                return -math.inf, grad
            E_mu, V_mu, E_sig, V_sig, gamma = pop
            E_s = u * self.s_ref

            lp, g_pop = _gamma_block(pop_log, self._shapes, self._rates)

            r = E_s - E_mu
            lp += -0.5 * np.sum(math.log(V_mu) + LOG_2PI + r * r / V_mu)
            g_E = -r / V_mu
            g_pop[0] += E_mu * np.sum(r) / V_mu
            g_pop[1] += V_mu * 0.5 * np.sum(r * r / V_mu - 1.0) / V_mu

            lp_v, d_V, d_Esig, d_Vsig = self._variance_prior(V_s, E_sig, V_sig)
            lp += lp_v + np.sum(lv)
            g_V = d_V
            g_pop[2] += E_sig * d_Esig
            g_pop[3] += V_sig * d_Vsig

            obs = self.block(ls, E_s, V_s, gamma)
            if obs is None:
                return -math.inf, grad
            lp_o, g_ls, dE_o, dV_o, dgam = obs
            lp += lp_o
            g_E = g_E + dE_o
            g_V = g_V + dV_o
            g_pop[4] += gamma * dgam

        if not math.isfinite(lp):
            return -math.inf, grad
        grad[:5] = g_pop
        grad[5:5 + K] = g_E * self.s_ref
        grad[5 + K:5 + 2 * K] = V_s * g_V + 1.0
        grad[5 + 2 * K:] = g_ls
        return float(lp), grad

    def initial_point(self, rng: np.random.Generator, jitter: float = 0.1) -> np.ndarray:
        """Hyper-prior means for the population level, ``E_s`` at the prior mean of
        ``E_mu``, ``V_s`` at the prior mean of ``E_sigma`` and each ``s`` at the
        surrogate inverse of its observation, all jittered."""
        means = np.array([p.mean for p in self.priors])
        pop = np.log(means) + rng.uniform(-jitter, jitter, 5)
        u = np.full(self.K, means[0] / self.s_ref) * np.exp(rng.uniform(-jitter, jitter, self.K) * 0.1)
        lv = np.full(self.K, math.log(means[2])) + rng.uniform(-jitter, jitter, self.K)
        ls = _initial_log_s(self.block, rng, jitter)
        return np.concatenate([pop, u, lv, ls])


class NoPoolingModel:
    """Independent model for one structure.

    ``E_s`` and ``V_s`` take the gamma hyper-priors of ``E_mu`` and
    ``E_sigma`` directly. Unconstrained layout::

        [log E_s, log V_s, log gamma, log s (N)]
    """

    regime = "nopool"

    def __init__(self, obs, surrogate: Surrogate, priors: HyperPriorConfig,
                 structure_id: str = "1"):
        self.block = _ObservationBlock(obs, np.zeros(len(obs), dtype=int), 1, surrogate)
        self.N = self.block.N
        self.surrogate = surrogate
        self.priors = priors
        self.structure_id = str(structure_id)
        self.structure_ids = [self.structure_id]
        self.K = 1
        self._shapes = np.array([priors.E_mu.shape, priors.E_sigma.shape, priors.gamma.shape])
        self._rates = np.array([priors.E_mu.rate, priors.E_sigma.rate, priors.gamma.rate])
        self.dim = 3 + self.N

    @property
    def names(self) -> list[str]:
        sid = self.structure_id
        return [f"E_s[{sid}]", f"V_s[{sid}]", "gamma",
                *[f"s[{sid},{i + 1}]" for i in range(self.N)]]

    def constrain(self, q) -> np.ndarray:
        return np.exp(np.asarray(q, dtype=float))

    def unconstrain(self, x) -> np.ndarray:
        return np.log(np.asarray(x, dtype=float))

    def to_parameters(self, q) -> ParameterVector:
        x = self.constrain(q)
        return ParameterVector(x[:1], x[1:2], x[3:], x[2])

    def from_parameters(self, p: ParameterVector) -> np.ndarray:
        return self.unconstrain(np.concatenate([p.E_s, p.V_s, [p.gamma], p.s]))

    def log_density(self, q) -> tuple[float, np.ndarray]:
        q = np.asarray(q, dtype=float)
        grad = np.zeros(self.dim)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            x = np.exp(q[:3])
            if not (np.all(np.isfinite(x)) and np.all(x > 0)):
                return -math.inf, grad
            lp, g = _gamma_block(q[:3], self._shapes, self._rates)
            obs = self.block(q[3:], x[:1], x[1:2], x[2])
            if obs is None:
                return -math.inf, grad
            lp_o, g_ls, dE, dV, dgam = obs
            lp += lp_o
        if not math.isfinite(lp):
            return -math.inf, grad
        grad[0] = g[0] + x[0] * dE[0]
        grad[1] = g[1] + x[1] * dV[0]
        grad[2] = g[2] + x[2] * dgam
        grad[3:] = g_ls
        return float(lp), grad

    def initial_point(self, rng: np.random.Generator, jitter: float = 0.1) -> np.ndarray:
        head = np.log([self.priors.E_mu.mean, self.priors.E_sigma.mean, self.priors.gamma.mean])
        head = head + rng.uniform(-jitter, jitter, 3) * np.array([0.1, 1.0, 1.0])
        return np.concatenate([head, _initial_log_s(self.block, rng, jitter)])


def _initial_log_s(block: _ObservationBlock, rng, jitter):
    s0 = block.surrogate.inverse(block.obs) if block.N else np.zeros(0)
    lo, hi = block.lo, block.hi
    width = hi - lo
    s0 = np.clip(s0 * np.exp(rng.uniform(-jitter, jitter, block.N) * 1e-3),
                 lo + 1e-6 * width, hi - 1e-6 * width)
    return np.log(s0)


def log_posterior(theta: ParameterVector, data, surrogate: Surrogate,
                  priors: HyperPriorConfig, **model_kwargs) -> tuple[float, np.ndarray]:
    """Partially-pooled log posterior at constrained ``theta``.

    The gradient is with respect to the unconstrained coordinates (see
    :class:`HierarchicalModel`), log-Jacobians included.
    """
    model = HierarchicalModel.from_dataset(data, surrogate, priors, **model_kwargs)
    return model.log_density(model.from_parameters(theta))
