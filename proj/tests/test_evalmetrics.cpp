#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cnpe/evalmetrics.hpp"
#include "test_support.hpp"

using cnpe::Decision;
using cnpe::Error;
using cnpe::errc;

namespace {

std::vector<Decision> to_decisions(const std::vector<int>& v) {
  std::vector<Decision> out;
  for (int x : v) out.push_back(x ? Decision::accept : Decision::reject);
  return out;
}

std::pair<std::vector<int>, std::vector<int>> confusion_vectors(int tp, int fn, int fp, int tn) {
  std::vector<int> truth, pred;
  auto push = [&](int t, int p, int count) {
    for (int k = 0; k < count; ++k) {
      truth.push_back(t);
      pred.push_back(p);
    }
  };
  push(1, 1, tp);
  push(1, 0, fn);
  push(0, 1, fp);
  push(0, 0, tn);
  return {truth, pred};
}

}  // namespace

TEST_CASE("decision metrics on the worked confusion matrix", "[evalmetrics]") {
  const auto [truth01, pred01] = confusion_vectors(/*tp=*/40, /*fn=*/10, /*fp=*/20, /*tn=*/30);
  const auto truth = to_decisions(truth01);
  const auto pred = to_decisions(pred01);
  const auto m = cnpe::decision_metrics(pred, truth);
  CHECK(m.accuracy == Catch::Approx(0.7));
  CHECK(m.kappa == Catch::Approx(0.4));

  testsupport::Confusion c{40, 20, 10, 30};
  CHECK(m.f1 == Catch::Approx(testsupport::o_f1_for(c, true)));
  CHECK(m.f1_weighted == Catch::Approx(testsupport::o_f1_weighted(c)));
  CHECK(m.jaccard == Catch::Approx(testsupport::o_jaccard(c)));
}

TEST_CASE("perfect and degenerate predictors", "[evalmetrics]") {
  SECTION("perfect predictions score 1 everywhere") {
    const auto truth = to_decisions({1, 1, 0, 0, 1, 0});
    const auto m = cnpe::decision_metrics(truth, truth);
    CHECK(m.accuracy == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.f1_weighted == 1.0);
    CHECK(m.kappa == 1.0);
    CHECK(m.jaccard == 1.0);
    CHECK(m.auc == 1.0);
  }
  SECTION("all-accept against balanced truth") {
    const auto truth = to_decisions({1, 1, 0, 0});
    const auto pred = to_decisions({1, 1, 1, 1});
    const auto m = cnpe::decision_metrics(pred, truth);
    CHECK(m.jaccard == Catch::Approx(0.5));
    CHECK(m.kappa == Catch::Approx(0.0));
    CHECK(m.auc == Catch::Approx(0.5));  // constant score, all ties
  }
  SECTION("single-class truth is an error") {
    const auto truth = to_decisions({1, 1, 1});
    const auto pred = to_decisions({1, 0, 1});
    CHECK_THROWS_AS(cnpe::decision_metrics(pred, truth), Error);
  }
  SECTION("length mismatch") {
    const auto truth = to_decisions({1, 0});
    const auto pred = to_decisions({1, 0, 1});
    try {
      cnpe::decision_metrics(pred, truth);
      FAIL("expected length-mismatch");
    } catch (const Error& e) {
      CHECK(e.code() == errc::length_mismatch);
    }
  }
}

TEST_CASE("auc_from_scores worked examples", "[evalmetrics]") {
  CHECK(cnpe::auc_from_scores(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
  CHECK(cnpe::auc_from_scores(std::vector<double>{0.4, 0.4, 0.4}, std::vector<int>{1, 0, 1}) ==
        0.5);
  CHECK(cnpe::auc_from_scores(std::vector<double>{0.9, 0.5, 0.1}, std::vector<int>{1, 0, 1}) ==
        Catch::Approx(0.5));
}

TEST_CASE("ranking metrics on identity and reversal", "[evalmetrics]") {
  const std::vector<double> scores{9, 7, 5, 3, 1};
  const std::vector<int> relevant{1, 1, 0, 0, 0};
  const std::vector<int> ks{2, 5};

  SECTION("identity") {
    const std::vector<int> order{0, 1, 2, 3, 4};
    const auto m = cnpe::ranking_metrics(order, scores, relevant, ks);
    CHECK(m.spearman_rho == Catch::Approx(1.0));
    CHECK(m.kendall_tau == Catch::Approx(1.0));
    CHECK(m.pairwise_accuracy == Catch::Approx(1.0));
    CHECK(m.map_at.at(2) == Catch::Approx(1.0));
    CHECK(m.ndcg_at.at(2) == Catch::Approx(1.0));
    CHECK(m.ndcg_at.at(5) == Catch::Approx(1.0));
  }
  SECTION("exact reversal") {
    const std::vector<int> order{4, 3, 2, 1, 0};
    const auto m = cnpe::ranking_metrics(order, scores, relevant, ks);
    CHECK(m.spearman_rho == Catch::Approx(-1.0));
    CHECK(m.kendall_tau == Catch::Approx(-1.0));
    CHECK(m.pairwise_accuracy == Catch::Approx(0.0));
  }
}

TEST_CASE("MAP and NDCG match the worked example", "[evalmetrics]") {
  // n=5, relevant = {0, 1}, predicted order [0, 2, 1, 3, 4], k = 3
  const std::vector<int> order{0, 2, 1, 3, 4};
  const std::vector<double> scores{9, 8, 5, 3, 1};
  const std::vector<int> relevant{1, 1, 0, 0, 0};
  const auto m = cnpe::ranking_metrics(order, scores, relevant, std::vector<int>{3});
  CHECK(m.map_at.at(3) == Catch::Approx(5.0 / 6.0));
  const double expected_ndcg =
      (1.0 + 1.0 / std::log2(4.0)) / (1.0 + 1.0 / std::log2(3.0));
  CHECK(m.ndcg_at.at(3) == Catch::Approx(expected_ndcg));
}

TEST_CASE("empty relevance set is an error", "[evalmetrics]") {
  const std::vector<int> order{0, 1, 2};
  const std::vector<double> scores{3, 2, 1};
  const std::vector<int> relevant{0, 0, 0};
  try {
    cnpe::ranking_metrics(order, scores, relevant, std::vector<int>{2});
    FAIL("expected empty-relevant");
  } catch (const Error& e) {
    CHECK(e.code() == errc::empty_relevant);
  }
}

TEST_CASE("Mann-Whitney U worked examples", "[evalmetrics]") {
  SECTION("fully separated groups, exact enumeration") {
    const std::vector<double> a{1, 2, 3};
    const std::vector<double> b{4, 5, 6};
    const auto r = cnpe::mann_whitney_u(a, b);
    CHECK(r.u == 0.0);
    CHECK(r.p_value == Catch::Approx(0.1));
    CHECK(r.medians.first == 2.0);
    CHECK(r.medians.second == 5.0);
    CHECK(r.diff == 3.0);
    CHECK(r.z < 0.0);
  }
  SECTION("identical groups") {
    const std::vector<double> a{3, 3, 5, 5, 7, 7, 9, 9, 11};
    const auto r = cnpe::mann_whitney_u(a, a);
    CHECK(std::abs(r.z) < 0.1);
    CHECK(r.p_value > 0.9);
    CHECK(r.diff == 0.0);
  }
  SECTION("empty group is an error") {
    CHECK_THROWS_AS(cnpe::mann_whitney_u(std::vector<double>{}, std::vector<double>{1.0}), Error);
  }
}

TEST_CASE("positional bias diagnostic", "[evalmetrics]") {
  std::vector<cnpe::PreferenceRecord> records;
  SECTION("always-first comparator has rate 1") {
    for (int k = 0; k < 100; ++k) {
      cnpe::PreferenceRecord r;
      r.pair = cnpe::make_pair(k % 7, (k % 7) + 1, cnpe::PairOrigin::random);
      r.presented_first = (k % 2 == 0) ? r.pair.i : r.pair.j;
      r.chosen = r.presented_first;
      r.y_hat = r.chosen == r.pair.i;
      records.push_back(r);
    }
    CHECK(cnpe::positional_bias_diagnostic(records).first_win_rate == 1.0);
  }
  SECTION("order-invariant oracle with randomized order sits near one half") {
    const auto corpus = testsupport::make_synthetic_corpus(40, 3);
    cnpe::OracleConfig cfg;
    cfg.beta = 1.0;
    cnpe::OracleComparator oracle(cfg);
    std::vector<cnpe::PaperPair> pairs;
    cnpe::SplitMix64 rng(5);
    for (int k = 0; k < 10000; ++k) {
      const int a = static_cast<int>(rng.next_below(40));
      int b = static_cast<int>(rng.next_below(39));
      if (b >= a) ++b;
      pairs.push_back(cnpe::make_pair(a, b, cnpe::PairOrigin::random));
    }
    const auto recs = cnpe::run_judgments(pairs, corpus, oracle, 4, 99);
    const auto bias = cnpe::positional_bias_diagnostic(recs);
    CHECK(std::abs(bias.first_win_rate - 0.5) < 0.02);
  }
}

TEST_CASE("cost estimate reproduces the published ratios", "[evalmetrics]") {
  const auto c = cnpe::cost_estimate(634, 0.05, 1111.9, 22973.8);
  CHECK(c.token_ratio == Catch::Approx(1.53).margin(0.01));
  CHECK(c.compute_ratio == Catch::Approx(0.074).margin(0.001));

  const auto unit = cnpe::cost_estimate(10, 0.1, 500.0, 500.0);
  CHECK(unit.token_ratio == Catch::Approx(1.0));
  CHECK(unit.compute_ratio == Catch::Approx(1.0));

  const auto base = cnpe::cost_estimate(100, 0.05, 800.0, 20000.0);
  const auto doubled = cnpe::cost_estimate(100, 0.05, 1600.0, 20000.0);
  CHECK(doubled.token_ratio == Catch::Approx(2.0 * base.token_ratio));
  CHECK(doubled.compute_ratio == Catch::Approx(4.0 * base.compute_ratio));
}

TEST_CASE("metrics agree with brute-force oracles on random instances", "[evalmetrics]") {
  cnpe::SplitMix64 rng(314);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 4 + static_cast<int>(rng.next_below(9));  // 4..12
    std::vector<int> truth01(n), pred01(n), relevant(n);
    std::vector<double> scores(n), true_scores(n);
    bool has_pos = false, has_neg = false, has_rel = false;
    for (int i = 0; i < n; ++i) {
      truth01[i] = rng.next_bool();
      pred01[i] = rng.next_bool();
      relevant[i] = rng.next_bool();
      scores[i] = std::round(rng.next_double() * 8) / 8.0;  // force ties
      true_scores[i] = std::round(rng.next_double() * 6) / 2.0;
      has_pos = has_pos || truth01[i] == 1;
      has_neg = has_neg || truth01[i] == 0;
      has_rel = has_rel || relevant[i] == 1;
    }
    if (!has_pos || !has_neg) continue;

    const auto dm = cnpe::decision_metrics(to_decisions(pred01), to_decisions(truth01), scores);
    const auto c = testsupport::confusion(pred01, truth01);
    CHECK(dm.accuracy == Catch::Approx(testsupport::o_accuracy(pred01, truth01)).margin(1e-9));
    CHECK(dm.f1 == Catch::Approx(testsupport::o_f1_for(c, true)).margin(1e-9));
    CHECK(dm.f1_weighted == Catch::Approx(testsupport::o_f1_weighted(c)).margin(1e-9));
    CHECK(dm.kappa == Catch::Approx(testsupport::o_kappa(c)).margin(1e-9));
    CHECK(dm.jaccard == Catch::Approx(testsupport::o_jaccard(c)).margin(1e-9));
    CHECK(dm.auc == Catch::Approx(testsupport::o_auc(scores, truth01)).margin(1e-9));

    // random permutation as the predicted order
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[rng.next_below(static_cast<std::uint64_t>(i) + 1)]);

    if (has_rel) {
      const int k = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
      const auto rm =
          cnpe::ranking_metrics(order, true_scores, relevant, std::vector<int>{k});
      CHECK(rm.spearman_rho ==
            Catch::Approx(testsupport::o_spearman(order, true_scores)).margin(1e-9));
      const auto tau = testsupport::o_kendall(order, true_scores);
      CHECK(rm.kendall_tau == Catch::Approx(tau.tau).margin(1e-9));
      CHECK(rm.pairwise_accuracy == Catch::Approx(tau.pairwise).margin(1e-9));
      CHECK(rm.map_at.at(k) ==
            Catch::Approx(testsupport::o_map_at(order, relevant, k)).margin(1e-9));
      CHECK(rm.ndcg_at.at(k) ==
            Catch::Approx(testsupport::o_ndcg_at(order, relevant, k)).margin(1e-9));
    }

    // small-group U test against exact enumeration
    const int na = 2 + static_cast<int>(rng.next_below(6));
    const int nb = 2 + static_cast<int>(rng.next_below(6));
    std::vector<double> ga, gb;
    for (int i = 0; i < na; ++i) ga.push_back(std::round(rng.next_double() * 10) / 2.0);
    for (int i = 0; i < nb; ++i) gb.push_back(std::round(rng.next_double() * 10) / 2.0);
    const auto ut = cnpe::mann_whitney_u(ga, gb);
    CHECK(ut.p_value == Catch::Approx(testsupport::o_mann_whitney_exact_p(ga, gb)).margin(0.02));
  }
}

TEST_CASE("rank metrics are invariant to monotone transforms of scores", "[evalmetrics]") {
  cnpe::SplitMix64 rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6;
    std::vector<double> scores(n);
    std::vector<int> relevant(n, 0);
    relevant[0] = 1;
    for (int i = 0; i < n; ++i) scores[i] = rng.next_double() * 4;
    std::vector<int> order{3, 1, 5, 0, 2, 4};

    const auto base = cnpe::ranking_metrics(order, scores, relevant, std::vector<int>{3});
    std::vector<double> transformed(n);
    for (int i = 0; i < n; ++i) transformed[i] = std::exp(2.0 * scores[i]) + 1.0;
    const auto moved = cnpe::ranking_metrics(order, transformed, relevant, std::vector<int>{3});
    CHECK(base.spearman_rho == Catch::Approx(moved.spearman_rho).margin(1e-12));
    CHECK(base.kendall_tau == Catch::Approx(moved.kendall_tau).margin(1e-12));
    CHECK(base.pairwise_accuracy == Catch::Approx(moved.pairwise_accuracy).margin(1e-12));
  }
}

TEST_CASE("moving a relevant item up never hurts MAP or NDCG", "[evalmetrics]") {
  const std::vector<double> scores{5, 4, 3, 2, 1, 0};
  const std::vector<int> relevant{1, 1, 0, 0, 0, 0};
  std::vector<int> order{2, 3, 0, 4, 1, 5};
  const int k = 4;

  auto metrics_at = [&](const std::vector<int>& o) {
    return cnpe::ranking_metrics(o, scores, relevant, std::vector<int>{k});
  };
  const auto before = metrics_at(order);
  std::swap(order[2], order[1]);  // relevant item 0 moves from rank 2 to rank 1
  const auto after = metrics_at(order);
  CHECK(after.map_at.at(k) >= before.map_at.at(k));
  CHECK(after.ndcg_at.at(k) >= before.ndcg_at.at(k));
}

TEST_CASE("kappa endpoints", "[evalmetrics]") {
  // constant predictor -> kappa 0; equality -> kappa 1
  const auto truth = to_decisions({1, 0, 1, 0, 1, 0});
  CHECK(cnpe::decision_metrics(to_decisions({1, 1, 1, 1, 1, 1}), truth).kappa ==
        Catch::Approx(0.0).margin(1e-12));
  CHECK(cnpe::decision_metrics(truth, truth).kappa == Catch::Approx(1.0));
}

TEST_CASE("metric functions are pure", "[evalmetrics]") {
  const std::vector<double> a{1, 5, 3, 3, 8};
  const std::vector<double> b{2, 2, 9, 4};
  const auto r1 = cnpe::mann_whitney_u(a, b);
  const auto r2 = cnpe::mann_whitney_u(a, b);
  CHECK(r1.u == r2.u);
  CHECK(r1.z == r2.z);
  CHECK(r1.p_value == r2.p_value);

  const auto c1 = cnpe::cost_estimate(634, 0.05, 1111.9, 22973.8);
  const auto c2 = cnpe::cost_estimate(634, 0.05, 1111.9, 22973.8);
  CHECK(c1.token_ratio == c2.token_ratio);
  CHECK(c1.compute_ratio == c2.compute_ratio);
}
