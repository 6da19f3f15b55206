"""Multinomial No-U-Turn sampler with windowed warm-up adaptation.

The transition follows the multinomial variant of NUTS: trajectories are
doubled in a random direction, states are drawn with probability
proportional to exp(-H) (biased progressive sampling across doublings,
uniform within a subtree), and expansion stops on the generalised U-turn
criterion, including checks across the two halves of every merged tree.

Warm-up adapts the step size by dual averaging and a diagonal inverse metric
from regularised windowed variance estimates (75-iteration initial buffer,
windows doubling from 25, 50-iteration final buffer).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

LogDensity = Callable[[np.ndarray], tuple[float, np.ndarray]]

MAX_DELTA_H = 1000.0


@dataclass
class _End:
    q: np.ndarray
    p: np.ndarray
    grad: np.ndarray
    p_sharp: np.ndarray


@dataclass
class _Tree:
    minus: _End  # earliest state in integration time
    plus: _End  # latest state
    rho: np.ndarray
    log_w: float
    q_sample: np.ndarray
    lp_sample: float
    grad_sample: np.ndarray
    p_sample: np.ndarray


def _uturn(p_sharp_minus, p_sharp_plus, rho) -> bool:
    return not (np.dot(p_sharp_plus, rho) > 0 and np.dot(p_sharp_minus, rho) > 0)


class DualAveraging:
    """Step-size adaptation targeting a mean acceptance statistic ``delta``."""

    def __init__(self, step_size: float, delta: float = 0.8, gamma: float = 0.05,
                 t0: float = 10.0, kappa: float = 0.75):
        self.delta, self.gamma, self.t0, self.kappa = delta, gamma, t0, kappa
        self.restart(step_size)

    def restart(self, step_size: float) -> None:
        self.mu = math.log(10.0 * step_size)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def update(self, accept_stat: float) -> float:
        self.counter += 1
        accept_stat = min(1.0, accept_stat)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - accept_stat)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        x_eta = self.counter ** (-self.kappa)
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x
        return math.exp(x)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.x_bar)


class WindowedVariance:
    """Stan-style warm-up schedule for the diagonal metric."""

    def __init__(self, n_warmup: int, init_buffer: int = 75, term_buffer: int = 50,
                 base_window: int = 25):
        if init_buffer + term_buffer + base_window > n_warmup:
            init_buffer = int(0.15 * n_warmup)
            term_buffer = int(0.1 * n_warmup)
            base_window = n_warmup - init_buffer - term_buffer
        self.n_warmup = n_warmup
        self.init_buffer = init_buffer
        self.term_buffer = term_buffer
        self.window = base_window
        self.window_end = init_buffer + base_window
        self._reset()

    def _reset(self):
        self.n = 0
        self.mean = None
        self.m2 = None

    def _add(self, q):
        self.n += 1
        if self.mean is None:
            self.mean = np.zeros_like(q)
            self.m2 = np.zeros_like(q)
        d = q - self.mean
        self.mean += d / self.n
        self.m2 += d * (q - self.mean)

    def observe(self, iteration: int, q: np.ndarray) -> np.ndarray | None:
        """Record warm-up draw ``iteration`` (0-based); return a new metric at window ends."""
        if self.n_warmup < 20:
            return None
        last_adapt = self.n_warmup - self.term_buffer
        if not self.init_buffer <= iteration < last_adapt:
            return None
        self._add(q)
        if iteration + 1 != self.window_end:
            return None
        n = self.n
        var = self.m2 / (n - 1) if n > 1 else np.ones_like(q)
        metric = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
        self._reset()
        self.window *= 2
        next_end = self.window_end + self.window
        if next_end + 2 * self.window > last_adapt:
            next_end = last_adapt
        self.window_end = next_end
        return metric


@dataclass
class ChainResult:
    draws: np.ndarray  # (iterations, dim) unconstrained
    lp: np.ndarray
    stats: dict = field(default_factory=dict)
    step_size: float = 0.0
    inv_metric: np.ndarray | None = None


class NUTS:
    """NUTS sampler for a log density returning ``(logp, grad)``."""

    def __init__(self, log_density: LogDensity, dim: int, max_depth: int = 10,
                 target_accept: float = 0.8):
        self.log_density = log_density
        self.dim = dim
        self.max_depth = max_depth
        self.target_accept = target_accept

    # -- integration ---------------------------------------------------------
    def _leapfrog(self, q, p, grad, eps, inv_m):
        p = p + 0.5 * eps * grad
        q = q + eps * inv_m * p
        lp, grad = self.log_density(q)
        p = p + 0.5 * eps * grad
        return q, p, lp, grad

    def _build(self, edge: _End, depth: int, direction: int, eps: float, inv_m, H0, rng):
        """Build a subtree of 2**depth states continuing from ``edge``; None if invalid."""
        if depth == 0:
            q, p, lp, grad = self._leapfrog(edge.q, edge.p, edge.grad, direction * eps, inv_m)
            self._n_leapfrog += 1
            H = -lp + 0.5 * np.dot(p, inv_m * p) if math.isfinite(lp) else math.inf
            if not math.isfinite(H):
                H = math.inf
            accept = math.exp(min(0.0, H0 - H)) if math.isfinite(H) else 0.0
            if H - H0 > MAX_DELTA_H:
                self._divergent = True
                self._sum_accept += accept
                return None
            self._sum_accept += accept
            end = _End(q, p, grad, inv_m * p)
            return _Tree(end, end, p.copy(), H0 - H, q, lp, grad, p)

        first = self._build(edge, depth - 1, direction, eps, inv_m, H0, rng)
        if first is None:
            return None
        next_edge = first.plus if direction > 0 else first.minus
        second = self._build(next_edge, depth - 1, direction, eps, inv_m, H0, rng)
        if second is None:
            return None
        early, late = (first, second) if direction > 0 else (second, first)
        rho = early.rho + late.rho
        if _uturn(early.minus.p_sharp, late.plus.p_sharp, rho):
            return None
        if _uturn(early.minus.p_sharp, late.minus.p_sharp, early.rho + late.minus.p):
            return None
        if _uturn(early.plus.p_sharp, late.plus.p_sharp, late.rho + early.plus.p):
            return None
        log_w = np.logaddexp(first.log_w, second.log_w)
        if math.log(rng.random()) < second.log_w - log_w:
            sample = second
        else:
            sample = first
        return _Tree(early.minus, late.plus, rho, log_w,
                     sample.q_sample, sample.lp_sample, sample.grad_sample, sample.p_sample)

    def transition(self, q, lp, grad, eps, inv_m, rng):
        """One NUTS transition; returns the new state and sampler statistics."""
        p = rng.standard_normal(self.dim) / np.sqrt(inv_m)
        H0 = -lp + 0.5 * np.dot(p, inv_m * p)
        end = _End(q, p, grad, inv_m * p)
        tree = _Tree(end, end, p.copy(), 0.0, q, lp, grad, p)
        self._n_leapfrog = 0
        self._sum_accept = 0.0
        self._divergent = False
        depth = 0
        while depth < self.max_depth:
            direction = 1 if rng.random() < 0.5 else -1
            edge = tree.plus if direction > 0 else tree.minus
            sub = self._build(edge, depth, direction, eps, inv_m, H0, rng)
            depth += 1
            if sub is None:
                break
            if math.log(rng.random()) < sub.log_w - tree.log_w:
                chosen = sub
            else:
                chosen = tree
            early, late = (tree, sub) if direction > 0 else (sub, tree)
            rho = early.rho + late.rho
            stop = (_uturn(early.minus.p_sharp, late.plus.p_sharp, rho)
                    or _uturn(early.minus.p_sharp, late.minus.p_sharp, early.rho + late.minus.p)
                    or _uturn(early.plus.p_sharp, late.plus.p_sharp, late.rho + early.plus.p))
            tree = _Tree(early.minus, late.plus, rho, np.logaddexp(tree.log_w, sub.log_w),
                         chosen.q_sample, chosen.lp_sample, chosen.grad_sample, chosen.p_sample)
            if stop:
                break
        n = max(self._n_leapfrog, 1)
        p_s = tree.p_sample
        stats = {
            "accept_stat": self._sum_accept / n,
            "tree_depth": depth,
            "n_leapfrog": self._n_leapfrog,
            "divergent": int(self._divergent),
            "energy": -tree.lp_sample + 0.5 * float(np.dot(p_s, inv_m * p_s)),
        }
        return tree.q_sample, tree.lp_sample, tree.grad_sample, stats

    # -- adaptation ----------------------------------------------------------
    def _initial_step_size(self, q, lp, grad, inv_m, rng, eps=1.0):
        p = rng.standard_normal(self.dim) / np.sqrt(inv_m)
        H0 = -lp + 0.5 * np.dot(p, inv_m * p)

        def delta_h(e):
            _, p1, lp1, _ = self._leapfrog(q, p, grad, e, inv_m)
            if not math.isfinite(lp1):
                return -math.inf
            return H0 - (-lp1 + 0.5 * np.dot(p1, inv_m * p1))

        direction = 1 if delta_h(eps) > math.log(0.8) else -1
        for _ in range(100):
            eps = eps * 2.0 if direction > 0 else eps * 0.5
            dh = delta_h(eps)
            if direction > 0 and not dh > math.log(0.8):
                break
            if direction < 0 and dh > math.log(0.8):
                break
        return eps

    def sample(self, q0: np.ndarray, n_warmup: int, n_draws: int,
               rng: np.random.Generator, inv_metric: np.ndarray | None = None) -> ChainResult:
        q = np.asarray(q0, dtype=float).copy()
        lp, grad = self.log_density(q)
        if not math.isfinite(lp):
            raise ValueError("initial point has zero density")
        inv_m = np.ones(self.dim) if inv_metric is None else np.asarray(inv_metric, float).copy()
        eps = self._initial_step_size(q, lp, grad, inv_m, rng)
        da = DualAveraging(eps, self.target_accept)
        windows = WindowedVariance(n_warmup)

        total = n_warmup + n_draws
        draws = np.empty((total, self.dim))
        lps = np.empty(total)
        keys = ("accept_stat", "tree_depth", "n_leapfrog", "divergent", "energy", "step_size")
        stats = {k: np.empty(total) for k in keys}
        for it in range(total):
            q, lp, grad, st = self.transition(q, lp, grad, eps, inv_m, rng)
            st["step_size"] = eps
            draws[it] = q
            lps[it] = lp
            for k in keys:
                stats[k][it] = st[k]
            if it < n_warmup:
                eps = da.update(st["accept_stat"])
                metric = windows.observe(it, q)
                if metric is not None:
                    inv_m = metric
                    eps = self._initial_step_size(q, lp, grad, inv_m, rng, eps)
                    da.restart(eps)
                if it == n_warmup - 1:
                    eps = da.final_step_size
        stats["tree_depth"] = stats["tree_depth"].astype(int)
        stats["n_leapfrog"] = stats["n_leapfrog"].astype(int)
        stats["divergent"] = stats["divergent"].astype(int)
        return ChainResult(draws, lps, stats, eps, inv_m)
