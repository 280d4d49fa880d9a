// Shared fixtures and independent oracles for the test suites. Everything in
// here recomputes results from first principles (quadratic scans, exhaustive
// enumeration, fixed-point iteration) so library results can be checked
// against a second, unrelated code path.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cnpe/corpus.hpp"
#include "cnpe/providers.hpp"
#include "cnpe/rng.hpp"
#include "cnpe/simgraph.hpp"

namespace testsupport {

// --- synthetic corpora -------------------------------------------------------

struct SyntheticOptions {
  int clusters = 1;
  double score_lo = 3.0;
  double score_hi = 8.0;
  int abstract_tokens = 30;
  double cluster_token_share = 0.8;
};

/// Papers with cluster-specific vocabularies (cluster of paper i is
/// i % clusters) and iid uniform mean scores.
inline cnpe::Corpus make_synthetic_corpus(int n, std::uint64_t seed,
                                          SyntheticOptions opt = {}) {
  cnpe::SplitMix64 rng(seed);
  cnpe::Corpus corpus;
  for (int i = 0; i < n; ++i) {
    const int cluster = i % opt.clusters;
    cnpe::Paper p;
    p.id = "p" + std::to_string(10000 + i);
    std::string title = "study";
    for (int t = 0; t < 4; ++t)
      title += " topic" + std::to_string(cluster) + "kw" +
               std::to_string(rng.next_below(12));
    p.title = title;
    std::string abs;
    for (int t = 0; t < opt.abstract_tokens; ++t) {
      if (!abs.empty()) abs += ' ';
      if (rng.next_double() < opt.cluster_token_share)
        abs += "topic" + std::to_string(cluster) + "term" +
               std::to_string(rng.next_below(40));
      else
        abs += "shared" + std::to_string(rng.next_below(20));
    }
    p.abstract = abs;
    p.mean_score = opt.score_lo + (opt.score_hi - opt.score_lo) * rng.next_double();
    corpus.add(std::move(p));
  }
  return corpus;
}

// --- decision metric oracles ---------------------------------------------------

struct Confusion {
  double tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion confusion(const std::vector<int>& pred, const std::vector<int>& truth) {
  Confusion c;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (pred[k] == 1 && truth[k] == 1) c.tp += 1;
    if (pred[k] == 1 && truth[k] == 0) c.fp += 1;
    if (pred[k] == 0 && truth[k] == 1) c.fn += 1;
    if (pred[k] == 0 && truth[k] == 0) c.tn += 1;
  }
  return c;
}

inline double o_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  double hit = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) hit += pred[k] == truth[k];
  return hit / static_cast<double>(pred.size());
}

inline double o_f1_for(const Confusion& c, bool positive_is_accept) {
  const double tp = positive_is_accept ? c.tp : c.tn;
  const double fp = positive_is_accept ? c.fp : c.fn;
  const double fn = positive_is_accept ? c.fn : c.fp;
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

inline double o_f1_weighted(const Confusion& c) {
  const double n = c.tp + c.fp + c.fn + c.tn;
  const double n_accept = c.tp + c.fn;
  const double n_reject = c.fp + c.tn;
  return (n_accept * o_f1_for(c, true) + n_reject * o_f1_for(c, false)) / n;
}

inline double o_kappa(const Confusion& c) {
  const double n = c.tp + c.fp + c.fn + c.tn;
  const double po = (c.tp + c.tn) / n;
  const double pe = ((c.tp + c.fp) / n) * ((c.tp + c.fn) / n) +
                    ((c.fn + c.tn) / n) * ((c.fp + c.tn) / n);
  return pe == 1.0 ? 0.0 : (po - pe) / (1.0 - pe);
}

inline double o_jaccard(const Confusion& c) {
  const double denom = c.tp + c.fp + c.fn;
  return denom == 0 ? 1.0 : c.tp / denom;
}

inline double o_auc(const std::vector<double>& scores, const std::vector<int>& truth) {
  double pairs = 0, credit = 0;
  for (std::size_t a = 0; a < truth.size(); ++a) {
    if (truth[a] != 1) continue;
    for (std::size_t b = 0; b < truth.size(); ++b) {
      if (truth[b] != 0) continue;
      pairs += 1;
      if (scores[a] > scores[b]) credit += 1;
      else if (scores[a] == scores[b]) credit += 0.5;
    }
  }
  return credit / pairs;
}

// --- ranking metric oracles ----------------------------------------------------

/// Average ranks by pairwise counting, independent of any sort.
inline std::vector<double> o_average_ranks_desc(const std::vector<double>& values) {
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    double better = 0, equal = 0;
    for (std::size_t j = 0; j < values.size(); ++j) {
      if (values[j] > values[i]) better += 1;
      if (values[j] == values[i]) equal += 1;
    }
    ranks[i] = better + (equal - 1.0) / 2.0 + 1.0;
  }
  return ranks;
}

inline double o_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    syy += y[k] * y[k];
    sxy += x[k] * y[k];
  }
  const double cov = sxy - sx * sy / n;
  const double vx = sxx - sx * sx / n;
  const double vy = syy - sy * sy / n;
  if (vx <= 0 || vy <= 0) return 0.0;
  return cov / std::sqrt(vx * vy);
}

inline double o_spearman(const std::vector<int>& pred_order,
                         const std::vector<double>& true_scores) {
  const std::size_t n = pred_order.size();
  std::vector<double> pred_rank(n);
  for (std::size_t pos = 0; pos < n; ++pos)
    pred_rank[static_cast<std::size_t>(pred_order[pos])] = static_cast<double>(pos) + 1.0;
  return o_pearson(pred_rank, o_average_ranks_desc(true_scores));
}

struct TauOracle {
  double tau = 0.0;
  double pairwise = 0.5;
};

inline TauOracle o_kendall(const std::vector<int>& pred_order,
                           const std::vector<double>& true_scores) {
  const std::size_t n = pred_order.size();
  std::vector<double> pos(n);
  for (std::size_t p = 0; p < n; ++p)
    pos[static_cast<std::size_t>(pred_order[p])] = static_cast<double>(p);
  double c = 0, d = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (true_scores[i] == true_scores[j]) continue;
      const bool truth_i_better = true_scores[i] > true_scores[j];
      const bool pred_i_better = pos[i] < pos[j];
      if (truth_i_better == pred_i_better) c += 1;
      else d += 1;
    }
  TauOracle out;
  if (c + d > 0) {
    out.tau = (c - d) / (c + d);
    out.pairwise = c / (c + d);
  }
  return out;
}

inline double o_map_at(const std::vector<int>& pred_order, const std::vector<int>& relevant,
                       int k) {
  double total_relevant = 0;
  for (int r : relevant) total_relevant += r != 0;
  double hits = 0, ap = 0;
  for (int pos = 0; pos < k; ++pos) {
    if (relevant[static_cast<std::size_t>(pred_order[static_cast<std::size_t>(pos)])] != 0) {
      hits += 1;
      ap += hits / (pos + 1.0);
    }
  }
  return ap / std::min(total_relevant, static_cast<double>(k));
}

inline double o_ndcg_at(const std::vector<int>& pred_order, const std::vector<int>& relevant,
                        int k) {
  double dcg = 0;
  for (int pos = 0; pos < k; ++pos)
    if (relevant[static_cast<std::size_t>(pred_order[static_cast<std::size_t>(pos)])] != 0)
      dcg += 1.0 / std::log2(pos + 2.0);
  double total_relevant = 0;
  for (int r : relevant) total_relevant += r != 0;
  double idcg = 0;
  for (int pos = 0; pos < k && pos < total_relevant; ++pos)
    idcg += 1.0 / std::log2(pos + 2.0);
  return idcg == 0 ? 0.0 : dcg / idcg;
}

// --- Mann-Whitney exact oracle ---------------------------------------------------

inline void o_u_distribution(const std::vector<double>& ranks, std::size_t n_a,
                             std::size_t next, std::vector<std::size_t>& picked,
                             double rank_sum, std::vector<double>& out) {
  if (picked.size() == n_a) {
    out.push_back(rank_sum - static_cast<double>(n_a * (n_a + 1)) / 2.0);
    return;
  }
  if (next >= ranks.size()) return;
  if (ranks.size() - next < n_a - picked.size()) return;
  picked.push_back(next);
  o_u_distribution(ranks, n_a, next + 1, picked, rank_sum + ranks[next], out);
  picked.pop_back();
  o_u_distribution(ranks, n_a, next + 1, picked, rank_sum, out);
}

/// Exact two-sided p for the U statistic by recursive enumeration.
inline double o_mann_whitney_exact_p(const std::vector<double>& a,
                                     const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<double> ranks(pooled.size());
  {
    std::vector<double> vals = pooled;
    const std::vector<double> avg = o_average_ranks_desc(vals);
    // o_average_ranks_desc ranks the largest 1; flip to ascending ranks
    for (std::size_t k = 0; k < vals.size(); ++k)
      ranks[k] = static_cast<double>(vals.size()) + 1.0 - avg[k];
  }
  double rank_sum_a = 0;
  for (std::size_t k = 0; k < a.size(); ++k) rank_sum_a += ranks[k];
  const double u_obs = rank_sum_a - static_cast<double>(a.size() * (a.size() + 1)) / 2.0;

  std::vector<double> dist;
  std::vector<std::size_t> picked;
  o_u_distribution(ranks, a.size(), 0, picked, 0.0, dist);
  double le = 0, ge = 0;
  for (double u : dist) {
    if (u <= u_obs + 1e-9) le += 1;
    if (u >= u_obs - 1e-9) ge += 1;
  }
  return std::min(1.0, 2.0 * std::min(le, ge) / static_cast<double>(dist.size()));
}

// --- Bradley-Terry fixed-point oracle --------------------------------------------

/// Classic Hunter fixed-point iteration in pi-space (no penalty), run to a
/// tight tolerance. Returns centered log-strengths.
inline std::vector<double> o_bt_fixed_point(int n,
                                            const std::map<std::pair<int, int>, long long>& wins,
                                            double tol = 1e-10, int max_iter = 500000) {
  std::vector<double> win_count(static_cast<std::size_t>(n), 0.0);
  std::map<std::pair<int, int>, double> games;  // unordered totals
  for (const auto& [key, c] : wins) {
    win_count[static_cast<std::size_t>(key.first)] += static_cast<double>(c);
    const auto uk = std::minmax(key.first, key.second);
    games[{uk.first, uk.second}] += static_cast<double>(c);
  }
  std::vector<double> pi(static_cast<std::size_t>(n), 1.0);
  for (int it = 0; it < max_iter; ++it) {
    std::vector<double> denom(static_cast<std::size_t>(n), 0.0);
    for (const auto& [pair, g] : games) {
      const double s = pi[static_cast<std::size_t>(pair.first)] +
                       pi[static_cast<std::size_t>(pair.second)];
      denom[static_cast<std::size_t>(pair.first)] += g / s;
      denom[static_cast<std::size_t>(pair.second)] += g / s;
    }
    double delta = 0.0;
    std::vector<double> next(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      next[static_cast<std::size_t>(i)] =
          win_count[static_cast<std::size_t>(i)] / denom[static_cast<std::size_t>(i)];
    }
    // normalize geometric mean to 1
    double log_sum = 0.0;
    for (double v : next) log_sum += std::log(v);
    const double scale = std::exp(log_sum / n);
    for (double& v : next) v /= scale;
    for (int i = 0; i < n; ++i)
      delta = std::max(delta, std::abs(next[static_cast<std::size_t>(i)] -
                                       pi[static_cast<std::size_t>(i)]));
    pi = std::move(next);
    if (delta < tol) break;
  }
  std::vector<double> theta(static_cast<std::size_t>(n));
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += (theta[static_cast<std::size_t>(i)] = std::log(pi[static_cast<std::size_t>(i)]));
  mean /= n;
  for (double& t : theta) t -= mean;
  return theta;
}

/// Standard normal quantile by bisection on the CDF; oracle-grade, not fast.
inline double o_norm_quantile(double p) {
  double lo = -10.0, hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / std::numbers::sqrt2) < p) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// --- quadratic graph recomputation ------------------------------------------------

struct OracleGraph {
  std::map<std::pair<int, int>, double> weights;
};

/// Recomputes the whole bidirectional-retrieval weight table from the raw
/// embedding vectors with full sorts, no shortcuts.
inline OracleGraph o_recompute_graph(const cnpe::EmbeddingSet& emb, int k_e, int k_r) {
  const int n = emb.size();
  std::vector<std::vector<double>> cos(static_cast<std::size_t>(n),
                                       std::vector<double>(static_cast<std::size_t>(n), 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j)
        cos[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            cnpe::cosine_similarity(emb.vectors[static_cast<std::size_t>(i)],
                                    emb.vectors[static_cast<std::size_t>(j)]);

  std::map<std::pair<int, int>, int> rank;  // (i, j) -> 0-based rerank rank
  for (int i = 0; i < n; ++i) {
    std::vector<int> others;
    for (int j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    std::sort(others.begin(), others.end(), [&](int a, int b) {
      const double ca = cos[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)];
      const double cb = cos[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)];
      if (ca != cb) return ca > cb;
      return a < b;
    });
    others.resize(static_cast<std::size_t>(k_e));
    // mock reranker reuses cosine, so the reranked order is this prefix
    for (int r = 0; r < k_r; ++r) rank[{i, others[static_cast<std::size_t>(r)]}] = r;
  }

  OracleGraph g;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const auto rij = rank.find({i, j});
      const auto rji = rank.find({j, i});
      if (rij == rank.end() && rji == rank.end()) continue;
      const int a = rij == rank.end() ? k_r : rij->second;
      const int b = rji == rank.end() ? k_r : rji->second;
      const double w = static_cast<double>(2 * k_r - a - b);
      if (w > 0) g.weights[{i, j}] = w;
    }
  }
  return g;
}

}  // namespace testsupport
