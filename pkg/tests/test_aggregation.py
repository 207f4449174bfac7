import warnings

import numpy as np
import pytest

from bpcauth.aggregation import (
    ChannelDecision, ChannelPair, LinearClassifier, aggregate, authenticate, best_k_sweep, build_plan,
    decision_vector, evaluate_scores, hinge_loss, input_matrix, per_channel_decision, sweep_matrices,
    train_linear_classifier,
)
from bpcauth.patterns import probe_features
from bpcauth.sim import default_codebooks, mixed_codebooks
from bpcauth.stats import channel_profiles, optimal_threshold
from bpcauth.types import ChannelObservations, Codebook, ModelConfig, ProbeFeatures


def one_channel(config, w, D, L):
    Dv = np.zeros(config.M, dtype=int)
    Lv = np.zeros(config.M, dtype=int)
    Dv[w], Lv[w] = D, L
    return ChannelObservations(config, Dv, Lv)


def draw(c, n, L, rng):
    return [ChannelObservations(c.config, rng.binomial(L, c.p), np.full(c.config.M, L)) for _ in range(n)]


@pytest.fixture
def pair_01_04(config):
    c0 = Codebook.from_probabilities(config, np.full(config.M, 0.1))
    c1 = Codebook.from_probabilities(config, np.full(config.M, 0.4))
    return c0, c1


def test_decisions_straddle_gamma_crit(config, pair_01_04):
    c0, c1 = pair_01_04
    assert per_channel_decision(one_channel(config, 7, 22, 100), c0, c1) == [ChannelDecision(7, 0)]
    assert per_channel_decision(one_channel(config, 7, 23, 100), c0, c1) == [ChannelDecision(7, 1)]
    assert per_channel_decision(one_channel(config, 7, 0, 100), c0, c1)[0].delta == 0
    assert per_channel_decision(one_channel(config, 7, 100, 100), c0, c1)[0].delta == 1


def test_decisions_reverse_and_skip(config, pair_01_04):
    c0, c1 = pair_01_04
    # reversed laws flip the inequality
    assert per_channel_decision(one_channel(config, 3, 0, 100), c1, c0)[0].delta == 1
    # identical laws are never decided
    assert per_channel_decision(one_channel(config, 3, 10, 100), c0, c0) == []


def test_gamma_opt_rule_matches_search(config, pair_01_04):
    c0, c1 = pair_01_04
    cut = optimal_threshold(100, 0.1, 0.4).cut
    assert per_channel_decision(one_channel(config, 1, cut, 100), c0, c1, "gamma_opt")[0].delta == 0
    assert per_channel_decision(one_channel(config, 1, cut + 1, 100), c0, c1, "gamma_opt")[0].delta == 1


def test_plan_weights(config):
    rng = np.random.default_rng(0)
    p = rng.uniform(0.01, 0.2, config.M)
    p[:5] = 1e-6
    q = p + 0.1
    q[10:20] = p[10:20]
    c0, c1 = Codebook.from_probabilities(config, p), Codebook.from_probabilities(config, q)
    informative = p != q
    s1 = build_plan("s1", "ad", c0, c1)
    assert np.array_equal(s1.weights, informative.astype(float))
    s2 = build_plan("s2", "da", c0, c1, mu=0.0)
    assert set(np.flatnonzero(s2.weights)) == set(range(5))
    prof = channel_profiles(c0, c1, 100)
    s3 = build_plan("s3", "ad", c0, c1, prof, nu=0.5)
    assert np.array_equal(s3.weights, informative.astype(float))
    assert list(s3.ranking) == sorted(s3.ranking, key=lambda w: (prof[w].p_err, w))
    assert list(build_plan("s2", "ad", c0, c1).ranking) == sorted(np.flatnonzero(informative), key=lambda w: (p[w], w))


def test_plan_errors(config, pair_01_04):
    c0, c1 = pair_01_04
    with pytest.raises(ValueError):
        build_plan("s2", "ad", c0, c1, mu=1.5)
    with pytest.raises(ValueError):
        build_plan("s3", "ad", c0, c1, channel_profiles(c0, c1, 10), nu=-0.1)
    with pytest.raises(ValueError):
        build_plan("s4", "ad", c0, c1)
    with pytest.raises(ValueError):
        build_plan("s3", "ad", c0, c1)
    with pytest.raises(ValueError):
        build_plan("s5", "ad", c0, c1)


def test_restrict_warns(config, pair_01_04):
    plan = build_plan("s1", "ad", *pair_01_04)
    with pytest.warns(UserWarning):
        plan.restrict(config.M + 1)
    assert plan.restrict(3).weights.sum() == 3


def test_aggregate_examples(config, pair_01_04):
    c0, c1 = pair_01_04
    plan_ad = build_plan("s1", "ad", c0, c1)
    zero = ProbeFeatures(config, np.zeros(config.M), np.ones(config.M))
    assert aggregate(zero, plan_ad) == 0.0
    plan_da = plan_ad.with_ordering("da")
    votes = [ChannelDecision(w, 1) for w in range(0, config.M, 2)]
    assert aggregate(votes, plan_da) == len(votes)
    p_hat = np.full(config.M, np.nan)
    p_hat[9] = 0.07
    single = plan_ad.restrict(0)
    w = np.zeros(config.M)
    w[9] = 1.0
    from dataclasses import replace
    single = replace(single, weights=w)
    assert aggregate(ProbeFeatures(config, p_hat, np.ones(config.M)), single) == 0.07
    with pytest.raises(ValueError):
        aggregate(votes, plan_ad)
    with pytest.raises(ValueError):
        aggregate(zero, plan_da)


def test_evaluate_scores_examples():
    ev = evaluate_scores([0.1, 0.2], [0.15, 0.3])
    assert ev.p_err == 0.25
    assert ev.higher_is_fake
    assert evaluate_scores([1, 2, 3], [4, 5]).p_err == 0.0
    assert evaluate_scores([5, 6], [1, 2]).p_err == 0.0
    same = evaluate_scores([1.0, 2.0, 2.0], [2.0, 1.0, 2.0])
    assert same.p_err == 0.5
    assert same.threshold == -np.inf and not same.higher_is_fake
    with pytest.raises(ValueError):
        evaluate_scores([], [1.0])


def test_evaluate_scores_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(30):
        o = rng.integers(0, 6, rng.integers(1, 8)).astype(float)
        f = rng.integers(0, 6, rng.integers(1, 8)).astype(float)
        best = 1.0
        for t in np.arange(-1, 7, 0.5):
            for sign in (1, -1):
                miss = np.mean(sign * o > sign * t)
                fa = np.mean(sign * f <= sign * t)
                best = min(best, 0.5 * (miss + fa))
        assert evaluate_scores(o, f).p_err == pytest.approx(best)


def test_classifier_separable_toy():
    cfg = ModelConfig(h=1)
    mk = lambda v: ProbeFeatures(cfg, np.array([v, 0.5]), np.ones(2))
    orig = [mk(0.0), mk(0.1)]
    fake = [mk(0.9), mk(1.0)]
    clf = train_linear_classifier(orig, fake, reg=1e-3, epochs=500)
    X = np.array([[0.0, 0.5], [0.1, 0.5], [0.9, 0.5], [1.0, 0.5]])
    y = np.array([-1, -1, 1, 1])
    assert np.all(np.sign(clf.decision_function(X)) == y)
    assert hinge_loss(clf, X, y) < 0.05
    assert clf.weights[0] > 0


def test_classifier_deterministic_and_json(config):
    rng = np.random.default_rng(1)
    mk = lambda m: ProbeFeatures(config, rng.uniform(0, m, config.M), np.ones(config.M))
    orig = [mk(0.2) for _ in range(10)]
    fake = [mk(0.4) for _ in range(10)]
    a = train_linear_classifier(orig, fake, seed=4, epochs=20)
    b = train_linear_classifier(orig, fake, seed=4, epochs=20)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias
    c = LinearClassifier.from_json(a.to_json())
    assert np.array_equal(c.weights, a.weights) and np.array_equal(c.std, a.std) and c.bias == a.bias
    import json
    d = json.loads(a.to_json())
    assert set(d) == {"weights", "bias", "standardization"}
    assert set(d["standardization"]) == {"mean", "std"}
    with pytest.raises(ValueError):
        train_linear_classifier(orig[:1], fake)


def test_sweep_k0_and_all(config):
    c0, c1 = default_codebooks(config, 2)
    rng = np.random.default_rng(2)
    o, f = draw(c0, 40, 30, rng), draw(c1, 40, 30, rng)
    pair = ChannelPair(c0, c1)
    plan = build_plan("s1", "ad", c0, c1)
    pts = best_k_sweep(plan, [0, config.M], o, f, pair)
    assert pts[0].p_err == 0.5
    mean_scores = lambda obs: [np.mean(probe_features(x).filled(0.0)) for x in obs]
    assert pts[1].p_err == evaluate_scores(mean_scores(o), mean_scores(f)).p_err


def test_s4_ranking_invariant_to_scale(config):
    c0, c1 = mixed_codebooks(config, 5)
    rng = np.random.default_rng(5)
    o, f = draw(c0, 30, 50, rng), draw(c1, 30, 50, rng)
    clf = train_linear_classifier([probe_features(x) for x in o], [probe_features(x) for x in f], epochs=30)
    scaled = LinearClassifier(clf.weights * 3.5, clf.bias * 3.5, clf.mean, clf.std)
    pa = build_plan("s4", "ad", c0, c1, classifier=clf)
    pb = build_plan("s4", "ad", c0, c1, classifier=scaled)
    assert np.array_equal(pa.ranking, pb.ranking)
    pair = ChannelPair(c0, c1)
    X0, X1 = input_matrix(o, pair, "ad"), input_matrix(f, pair, "ad")
    for k in (1, 5, 50):
        a = sweep_matrices(pa, [k], X0, X1)[0]
        b = sweep_matrices(pb, [k], X0, X1)[0]
        assert a.p_err == b.p_err


def test_da_single_channel_matches_hamming_test(config, pair_01_04):
    c0, c1 = pair_01_04
    plan = build_plan("s1", "da", c0, c1, k=1)
    pair = ChannelPair(c0, c1)
    w = plan.ranking[0]
    for D in range(0, 101):
        rep = authenticate(one_channel(config, w, D, 100), plan, pair, threshold=0.5)
        assert (rep.verdict == "fake") == (D > pair.gamma_crit[w] * 100)


def test_s3_beats_s1_at_small_k(config):
    c0, c1 = mixed_codebooks(config, 11)
    rng = np.random.default_rng(11)
    o, f = draw(c0, 200, 100, rng), draw(c1, 200, 100, rng)
    pair = ChannelPair(c0, c1)
    prof = channel_profiles(c0, c1, 100)
    s1 = build_plan("s1", "da", c0, c1)
    s3 = build_plan("s3", "da", c0, c1, prof)
    X0, X1 = input_matrix(o, pair, "da"), input_matrix(f, pair, "da")
    for k in (1, 2, 4, 8):
        assert sweep_matrices(s3, [k], X0, X1)[0].p_err <= sweep_matrices(s1, [k], X0, X1)[0].p_err
    curve = [pt.p_err for pt in sweep_matrices(s3, [1, 2, 4, 8, 16, 32], X0, X1)]
    assert min(curve) <= curve[0]


def test_s4_held_out_beats_s1(config):
    c0, c1 = mixed_codebooks(config, 8)
    rng = np.random.default_rng(8)
    tr_o, tr_f = draw(c0, 500, 100, rng), draw(c1, 500, 100, rng)
    te_o, te_f = draw(c0, 500, 100, rng), draw(c1, 500, 100, rng)
    clf = train_linear_classifier([probe_features(x) for x in tr_o], [probe_features(x) for x in tr_f])
    pair = ChannelPair(c0, c1)
    ks = [1, 2, 4, 8, 16, 32, 64, 128, 256, 512]
    X0, X1 = input_matrix(te_o, pair, "ad"), input_matrix(te_f, pair, "ad")
    s4 = min(pt.p_err for pt in sweep_matrices(build_plan("s4", "ad", c0, c1, classifier=clf), ks, X0, X1))
    s1 = min(pt.p_err for pt in sweep_matrices(build_plan("s1", "ad", c0, c1), ks, X0, X1))
    assert s4 <= s1


def test_authenticate_report(config, pair_01_04):
    c0, c1 = pair_01_04
    pair = ChannelPair(c0, c1)
    plan = build_plan("s1", "ad", c0, c1)
    obs = ChannelObservations(config, np.full(config.M, 5), np.full(config.M, 100))
    rep = authenticate(obs, plan, pair, threshold=0.2 * config.M)
    assert rep.verdict == "original"
    assert rep.score == pytest.approx(0.05 * config.M)
    assert len(rep.per_channel) == config.M
    d = rep.to_dict()
    assert d["verdict"] == "original" and len(d["per_channel"]) == config.M
