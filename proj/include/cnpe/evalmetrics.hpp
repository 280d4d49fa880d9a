#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cnpe/aggregate.hpp"
#include "cnpe/corpus.hpp"
#include "cnpe/error.hpp"
#include "cnpe/judge.hpp"

namespace cnpe {

struct DecisionMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  double f1_weighted = 0.0;
  double auc = 0.0;
  double kappa = 0.0;
  double jaccard = 0.0;
};

struct RankingMetrics {
  double spearman_rho = 0.0;
  double kendall_tau = 0.0;
  double pairwise_accuracy = 0.0;
  std::map<int, double> map_at;
  std::map<int, double> ndcg_at;
};

struct UTestResult {
  double u = 0.0;        // U statistic of group_a
  double z = 0.0;        // normal approximation with tie + continuity correction
  double p_value = 1.0;  // two-sided; exact enumeration when both groups <= 8
  std::pair<double, double> medians{0.0, 0.0};
  double diff = 0.0;  // median_b - median_a
};

struct PositionalBias {
  double first_win_rate = 0.0;
  std::optional<double> rho_position_outcome;
};

struct CostEstimate {
  double token_ratio = 0.0;
  double compute_ratio = 0.0;
};

namespace detail {

/// Average ranks (1-based), ties sharing the mean rank. `descending` ranks
/// the largest value 1.
inline std::vector<double> average_ranks(std::span<const double> values, bool descending) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? values[a] > values[b] : values[a] < values[b];
  });
  std::vector<double> ranks(n, 0.0);
  std::size_t k = 0;
  while (k < n) {
    std::size_t end = k + 1;
    while (end < n && values[idx[end]] == values[idx[k]]) ++end;
    const double avg = (static_cast<double>(k) + static_cast<double>(end - 1)) / 2.0 + 1.0;
    for (std::size_t p = k; p < end; ++p) ranks[idx[p]] = avg;
    k = end;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - mx, dy = y[k] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

inline double median_of(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Tie-aware Spearman correlation between two score vectors.
inline double spearman_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(errc::length_mismatch, "spearman inputs differ in length");
  if (a.size() < 2) throw Error(errc::invalid_argument, "spearman needs at least 2 items");
  const std::vector<double> ra = detail::average_ranks(a, false);
  const std::vector<double> rb = detail::average_ranks(b, false);
  return detail::pearson(ra, rb);
}

/// Rank-statistic AUC: the fraction of (positive, negative) pairs scored in
/// the right order, ties worth half.
inline double auc_from_scores(std::span<const double> scores, std::span<const int> truth) {
  if (scores.size() != truth.size()) throw Error(errc::length_mismatch, "auc inputs differ in length");
  const std::vector<double> ranks = detail::average_ranks(scores, false);
  double positives = 0.0, rank_sum = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k] == 1) {
      positives += 1.0;
      rank_sum += ranks[k];
    }
  }
  const double negatives = static_cast<double>(truth.size()) - positives;
  if (positives == 0.0 || negatives == 0.0)
    throw Error(errc::single_class_truth, "auc needs both classes");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

/// Binary decision metrics; accept is the positive class. AUC is rank-based
/// on the optional scores, else on the hard predictions with ties at 0.5.
inline DecisionMetrics decision_metrics(std::span<const Decision> pred,
                                        std::span<const Decision> truth,
                                        std::span<const double> scores = {}) {
  if (pred.size() != truth.size())
    throw Error(errc::length_mismatch, "pred and truth differ in length");
  if (pred.size() < 2) throw Error(errc::invalid_argument, "need at least 2 decisions");
  if (!scores.empty() && scores.size() != truth.size())
    throw Error(errc::length_mismatch, "scores and truth differ in length");

  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const bool p = pred[k] == Decision::accept;
    const bool t = truth[k] == Decision::accept;
    if (p && t) ++tp;
    else if (p && !t) ++fp;
    else if (!p && t) ++fn;
    else ++tn;
  }
  const double n = static_cast<double>(pred.size());
  if (tp + fn == 0.0 || fp + tn == 0.0)
    throw Error(errc::single_class_truth, "truth contains a single class");

  DecisionMetrics m;
  m.accuracy = (tp + tn) / n;

  auto f1_of = [](double tp_, double fp_, double fn_) {
    const double denom = 2.0 * tp_ + fp_ + fn_;
    return denom == 0.0 ? 0.0 : 2.0 * tp_ / denom;
  };
  m.f1 = f1_of(tp, fp, fn);
  const double f1_reject = f1_of(tn, fn, fp);
  m.f1_weighted = ((tp + fn) * m.f1 + (fp + tn) * f1_reject) / n;

  const double p_o = m.accuracy;
  const double p_e =
      ((tp + fp) / n) * ((tp + fn) / n) + ((fn + tn) / n) * ((fp + tn) / n);
  m.kappa = p_e == 1.0 ? 0.0 : (p_o - p_e) / (1.0 - p_e);

  m.jaccard = (tp + fp + fn) == 0.0 ? 1.0 : tp / (tp + fp + fn);

  std::vector<int> truth01(truth.size());
  for (std::size_t k = 0; k < truth.size(); ++k)
    truth01[k] = truth[k] == Decision::accept ? 1 : 0;
  if (!scores.empty()) {
    m.auc = auc_from_scores(scores, truth01);
  } else {
    std::vector<double> hard(pred.size());
    for (std::size_t k = 0; k < pred.size(); ++k)
      hard[k] = pred[k] == Decision::accept ? 1.0 : 0.0;
    m.auc = auc_from_scores(hard, truth01);
  }
  return m;
}

/// Ranking quality of a predicted order against ground-truth scores.
/// Pairs with tied true scores are excluded from the tau and pairwise
/// accuracy denominators; MAP/NDCG use binary relevance (or graded gains =
/// true scores behind the flag).
inline RankingMetrics ranking_metrics(std::span<const int> pred_order,
                                      std::span<const double> true_scores,
                                      std::span<const int> relevant,
                                      std::span<const int> ks,
                                      bool graded_ndcg = false) {
  const std::size_t n = pred_order.size();
  if (true_scores.size() != n || relevant.size() != n)
    throw Error(errc::length_mismatch, "ranking_metrics inputs differ in length");
  if (n < 2) throw Error(errc::invalid_argument, "need at least 2 items");
  for (int k : ks)
    if (k < 1 || static_cast<std::size_t>(k) > n)
      throw Error(errc::invalid_argument, "k must be in [1, n]");

  RankingMetrics m;

  // predicted rank per item (1 = best); the prediction is a strict order
  std::vector<double> pred_rank(n, 0.0);
  {
    std::vector<char> seen(n, 0);
    for (std::size_t pos = 0; pos < n; ++pos) {
      const int item = pred_order[pos];
      if (item < 0 || static_cast<std::size_t>(item) >= n || seen[static_cast<std::size_t>(item)])
        throw Error(errc::invalid_argument, "pred_order is not a permutation");
      seen[static_cast<std::size_t>(item)] = 1;
      pred_rank[static_cast<std::size_t>(item)] = static_cast<double>(pos) + 1.0;
    }
  }
  const std::vector<double> true_rank = detail::average_ranks(true_scores, true);
  m.spearman_rho = detail::pearson(pred_rank, true_rank);

  long long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (true_scores[i] == true_scores[j]) continue;
      const double dt = true_scores[i] - true_scores[j];
      const double dp = pred_rank[j] - pred_rank[i];  // smaller rank = better
      if (dt * dp > 0.0) ++concordant;
      else ++discordant;
    }
  }
  const long long decided = concordant + discordant;
  m.kendall_tau = decided == 0 ? 0.0
                               : static_cast<double>(concordant - discordant) /
                                     static_cast<double>(decided);
  m.pairwise_accuracy = decided == 0 ? 0.5
                                     : static_cast<double>(concordant) /
                                           static_cast<double>(decided);

  double total_relevant = 0.0;
  for (int r : relevant) total_relevant += r != 0 ? 1.0 : 0.0;
  if (total_relevant == 0.0)
    throw Error(errc::empty_relevant, "map/ndcg need at least one relevant item");

  for (int k : ks) {
    double hits = 0.0, ap = 0.0, dcg = 0.0;
    for (int pos = 0; pos < k; ++pos) {
      const int item = pred_order[static_cast<std::size_t>(pos)];
      const bool rel = relevant[static_cast<std::size_t>(item)] != 0;
      const double gain = graded_ndcg ? true_scores[static_cast<std::size_t>(item)]
                                      : (rel ? 1.0 : 0.0);
      dcg += gain / std::log2(static_cast<double>(pos) + 2.0);
      if (rel) {
        hits += 1.0;
        ap += hits / (static_cast<double>(pos) + 1.0);
      }
    }
    m.map_at[k] = ap / std::min(total_relevant, static_cast<double>(k));

    std::vector<double> ideal;
    ideal.reserve(n);
    if (graded_ndcg) {
      ideal.assign(true_scores.begin(), true_scores.end());
      std::sort(ideal.begin(), ideal.end(), std::greater<>());
    } else {
      for (int r : relevant) ideal.push_back(r != 0 ? 1.0 : 0.0);
      std::sort(ideal.begin(), ideal.end(), std::greater<>());
    }
    double idcg = 0.0;
    for (int pos = 0; pos < k; ++pos)
      idcg += ideal[static_cast<std::size_t>(pos)] / std::log2(static_cast<double>(pos) + 2.0);
    m.ndcg_at[k] = idcg == 0.0 ? 0.0 : dcg / idcg;
  }
  return m;
}

namespace detail {

/// Exact two-sided p by enumerating every assignment of pooled ranks to
/// group a. Feasible for group sizes <= 8.
inline double mann_whitney_exact_p(std::span<const double> pooled_ranks,
                                   std::size_t n_a, double u_obs) {
  const std::size_t n = pooled_ranks.size();
  std::vector<std::size_t> pick(n_a);
  std::iota(pick.begin(), pick.end(), 0);
  long long total = 0, le = 0, ge = 0;
  while (true) {
    double rank_sum = 0.0;
    for (std::size_t idx : pick) rank_sum += pooled_ranks[idx];
    const double u = rank_sum - static_cast<double>(n_a) * (static_cast<double>(n_a) + 1.0) / 2.0;
    ++total;
    if (u <= u_obs + 1e-9) ++le;
    if (u >= u_obs - 1e-9) ++ge;
    // next combination
    std::size_t k = n_a;
    while (k > 0 && pick[k - 1] == n - n_a + (k - 1)) --k;
    if (k == 0) break;
    ++pick[k - 1];
    for (std::size_t j = k; j < n_a; ++j) pick[j] = pick[j - 1] + 1;
  }
  const double p = 2.0 * std::min(static_cast<double>(le), static_cast<double>(ge)) /
                   static_cast<double>(total);
  return std::min(1.0, p);
}

}  // namespace detail

/// Mann-Whitney U with average ranks for ties. z always comes from the
/// normal approximation (tie + continuity corrected); the p-value is exact by
/// enumeration when both groups have at most 8 observations.
inline UTestResult mann_whitney_u(std::span<const double> group_a,
                                  std::span<const double> group_b) {
  if (group_a.empty() || group_b.empty())
    throw Error(errc::empty_group, "both groups must be nonempty");

  const std::size_t n_a = group_a.size(), n_b = group_b.size();
  std::vector<double> pooled(group_a.begin(), group_a.end());
  pooled.insert(pooled.end(), group_b.begin(), group_b.end());
  const std::vector<double> ranks = detail::average_ranks(pooled, false);

  double rank_sum_a = 0.0;
  for (std::size_t k = 0; k < n_a; ++k) rank_sum_a += ranks[k];
  const double u_a = rank_sum_a - static_cast<double>(n_a) * (static_cast<double>(n_a) + 1.0) / 2.0;

  UTestResult r;
  r.u = u_a;
  r.medians = {detail::median_of(group_a), detail::median_of(group_b)};
  r.diff = r.medians.second - r.medians.first;

  const double na = static_cast<double>(n_a), nb = static_cast<double>(n_b);
  const double nn = na + nb;
  const double mu = na * nb / 2.0;

  double tie_term = 0.0;
  {
    std::vector<double> sorted(pooled);
    std::sort(sorted.begin(), sorted.end());
    std::size_t k = 0;
    while (k < sorted.size()) {
      std::size_t end = k + 1;
      while (end < sorted.size() && sorted[end] == sorted[k]) ++end;
      const double t = static_cast<double>(end - k);
      tie_term += t * t * t - t;
      k = end;
    }
  }
  const double var =
      na * nb / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (var > 0.0) {
    const double cc = u_a > mu ? -0.5 : (u_a < mu ? 0.5 : 0.0);
    r.z = (u_a - mu + cc) / std::sqrt(var);
  } else {
    r.z = 0.0;
  }

  if (n_a <= 8 && n_b <= 8) {
    r.p_value = detail::mann_whitney_exact_p(ranks, n_a, u_a);
  } else {
    r.p_value = std::clamp(2.0 * (1.0 - detail::norm_cdf(std::abs(r.z))), 0.0, 1.0);
  }
  return r;
}

/// How often the first-presented paper won, plus (when a ranking is given)
/// the Spearman correlation between item index and final percentile.
inline PositionalBias positional_bias_diagnostic(std::span<const PreferenceRecord> records,
                                                 const RankingResult* ranking = nullptr) {
  if (records.empty()) throw Error(errc::invalid_argument, "no records");
  double judged = 0.0, first_wins = 0.0;
  for (const PreferenceRecord& r : records) {
    if (r.failed) continue;
    judged += 1.0;
    if (r.chosen == r.presented_first) first_wins += 1.0;
  }
  if (judged == 0.0) throw Error(errc::invalid_argument, "all records failed");

  PositionalBias out;
  out.first_win_rate = first_wins / judged;
  if (ranking != nullptr && ranking->order.size() >= 2) {
    const std::vector<double> pct = ranking->percentile_by_item();
    std::vector<double> index(pct.size());
    std::iota(index.begin(), index.end(), 0.0);
    out.rho_position_outcome = spearman_correlation(index, pct);
  }
  return out;
}

/// Token and compute cost of pairwise evaluation relative to a pointwise
/// baseline: alpha*n^2 calls of length L_pair against n calls of length
/// L_point, with compute scaling quadratically in length.
inline CostEstimate cost_estimate(int n, double alpha, double l_pair, double l_point) {
  if (n <= 0 || alpha <= 0.0 || l_pair <= 0.0 || l_point <= 0.0)
    throw Error(errc::invalid_argument, "cost_estimate inputs must be positive");
  CostEstimate c;
  const double nn = static_cast<double>(n);
  c.token_ratio = (alpha * nn * nn * l_pair) / (nn * l_point);
  c.compute_ratio = (alpha * nn * nn * l_pair * l_pair) / (nn * l_point * l_point);
  return c;
}

}  // namespace cnpe
