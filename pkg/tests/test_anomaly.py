import math

import numpy as np
import pytest

from scourbayes import anomaly as an
from scourbayes.anomaly import AnomalyError, PredictiveDistribution
from scourbayes.hiermc import PosteriorChains
from scourbayes.popgen import Observation


def fake_chains(E, V, gamma, regime="partial", sid="1", n=(2, 500)):
    rng = np.random.default_rng(0)
    shape = n
    names = [f"E_s[{sid}]", f"V_s[{sid}]", "gamma"]
    cols = [np.full(shape, E) + 0 * rng.random(shape), np.full(shape, V), np.full(shape, gamma)]
    draws = np.stack(cols, axis=-1)
    stats = {"divergent": np.zeros(shape)}
    return PosteriorChains(names, draws, 0, stats, {"regime": regime, "structure_ids": [sid]})


def jittered_chains(surrogate, regime, sd_scale, seed=0, sid="1"):
    """Well-mixed chains around a fixed structure mean."""
    rng = np.random.default_rng(seed)
    shape = (4, 1000)
    E = 4e6 + 2e4 * rng.standard_normal(shape)
    V = (sd_scale * 1e5) ** 2 * np.exp(0.1 * rng.standard_normal(shape))
    g = 1e-4 * np.exp(0.05 * rng.standard_normal(shape))
    draws = np.stack([E, V, g], axis=-1)
    return PosteriorChains([f"E_s[{sid}]", f"V_s[{sid}]", "gamma"], draws, 0,
                           {"divergent": np.zeros(shape)},
                           {"regime": regime, "structure_ids": [sid]})


class TestPredictive:
    def test_degenerate_collapses_to_f(self, nrel_surrogate):
        ch = fake_chains(4e6, 0.0, 0.0)
        with pytest.warns(an.ConvergenceWarning):
            pred = an.posterior_predictive(ch, nrel_surrogate, "1")
        assert np.allclose(pred.samples, nrel_surrogate.eval(4e6), rtol=1e-14)
        assert pred.samples.size == 1000

    def test_draws_respect_domain(self, nrel_surrogate):
        ch = jittered_chains(nrel_surrogate, "partial", 30.0)
        pred = an.posterior_predictive(ch, nrel_surrogate, "1")
        lo, hi = nrel_surrogate.range
        assert pred.samples.min() > lo - 1e-3 and pred.samples.max() < hi + 1e-3

    def test_deterministic(self, nrel_surrogate):
        ch = jittered_chains(nrel_surrogate, "partial", 1.0)
        a = an.posterior_predictive(ch, nrel_surrogate, "1", seed=4)
        b = an.posterior_predictive(ch, nrel_surrogate, "1", seed=4)
        assert np.array_equal(a.samples, b.samples)

    def test_unknown_structure(self, nrel_surrogate):
        with pytest.raises(AnomalyError):
            an.posterior_predictive(jittered_chains(nrel_surrogate, "partial", 1.0),
                                    nrel_surrogate, "9")

    def test_chainwise_means_agree(self, nrel_surrogate):
        ch = jittered_chains(nrel_surrogate, "partial", 1.0)
        pred = an.posterior_predictive(ch, nrel_surrogate, "1")
        per_chain = pred.samples.reshape(4, -1).mean(axis=1)
        se = pred.sd / math.sqrt(1000)
        assert np.all(np.abs(per_chain - pred.mean) < 4 * se)

    def test_predictive_matches_generated_structure(self, nrel_surrogate, nrel_priors):
        from scourbayes import popgen
        from scourbayes.hiermc import sample_nuts
        truth = popgen.GroundTruth(4e6, (4e5) ** 2, (1.5e5) ** 2, (6e9) ** 2)
        data = popgen.generate(truth, 2, [20, 20], nrel_surrogate, 5)
        ch = sample_nuts(data, nrel_surrogate, nrel_priors, chains=2, warmup=300, draws=300,
                         seed=2)
        pred = an.posterior_predictive(ch, nrel_surrogate, "1")
        obs = data.frequencies("1")
        se = math.sqrt(pred.sd**2 / pred.samples.size + obs.var(ddof=1) / obs.size)
        assert abs(pred.mean - obs.mean()) < 3 * se


class TestTailProbability:
    def test_extremes(self):
        pred = PredictiveDistribution("1", np.linspace(1.0, 2.0, 101), "partial")
        assert an.tail_probability(pred, 0.5) == 0.0
        assert an.tail_probability(pred, 2.5) == 1.0

    def test_median(self):
        x = np.random.default_rng(0).normal(1.45, 0.02, 8000)
        pred = PredictiveDistribution("1", x, "partial")
        assert abs(an.tail_probability(pred, np.median(x)) - 0.5) <= 2 / math.sqrt(x.size)

    def test_monotone(self):
        x = np.random.default_rng(1).normal(1.45, 0.02, 2000)
        pred = PredictiveDistribution("1", x, "partial")
        p = [an.tail_probability(pred, w) for w in np.linspace(1.3, 1.6, 50)]
        assert np.all(np.diff(p) >= 0)

    def test_invalid_draws(self):
        with pytest.raises(AnomalyError):
            PredictiveDistribution("1", [], "partial")
        with pytest.raises(AnomalyError):
            PredictiveDistribution("1", [1.0, -1.0], "partial")


class TestCompare:
    def test_identical_chains_identical_scores(self, nrel_surrogate):
        ch = jittered_chains(nrel_surrogate, "partial", 1.0)
        scores = an.compare_pooling(ch, ch, nrel_surrogate, [0.155, 0.156], "1",
                                    check_regimes=False)
        assert all(s.p_no_pooling == s.p_partial_pooled for s in scores)

    def test_threshold_zero_no_flags(self, nrel_surrogate):
        cp = jittered_chains(nrel_surrogate, "partial", 1.0, seed=1)
        cn = jittered_chains(nrel_surrogate, "nopool", 2.0, seed=2)
        scores = an.compare_pooling(cp, cn, nrel_surrogate, [0.10, 0.15, 0.2], threshold=0.0)
        assert not any(s.flag for s in scores)

    def test_regime_mismatch(self, nrel_surrogate):
        cp = jittered_chains(nrel_surrogate, "partial", 1.0)
        with pytest.raises(AnomalyError):
            an.compare_pooling(cp, cp, nrel_surrogate, [0.15], "1")

    def test_narrower_predictive_gives_smaller_tail(self, nrel_surrogate):
        cp = jittered_chains(nrel_surrogate, "partial", 1.0, seed=1)
        cn = jittered_chains(nrel_surrogate, "nopool", 2.0, seed=2)
        sp = an.posterior_predictive(cp, nrel_surrogate, "1").sd
        sn = an.posterior_predictive(cn, nrel_surrogate, "1").sd
        assert sp < sn
        f0 = float(nrel_surrogate.eval(4e6))
        (score,) = an.compare_pooling(cp, cn, nrel_surrogate, [f0 - 4 * sn])
        assert score.p_partial_pooled <= score.p_no_pooling
        assert score.flag

    def test_csv(self, tmp_path, nrel_surrogate):
        cp = jittered_chains(nrel_surrogate, "partial", 1.0, seed=1)
        cn = jittered_chains(nrel_surrogate, "nopool", 2.0, seed=2)
        obs = [Observation("1", 0.1550, None, 15.0), Observation("1", 0.1540, None, 25.0)]
        scores = an.compare_pooling(cp, cn, nrel_surrogate, obs)
        text = an.scores_to_csv(scores, tmp_path / "t.csv", header=["x"])
        lines = text.splitlines()
        assert lines[0] == "# x"
        assert lines[1] == "obs,scour_depth_mm,nat_freq_hz,prob_no_pooling,prob_partial_pooled"
        assert lines[2].startswith("1,15.0,0.155,")
        assert len(lines) == 4
