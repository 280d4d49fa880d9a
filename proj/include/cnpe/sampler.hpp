#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cnpe/corpus.hpp"
#include "cnpe/error.hpp"
#include "cnpe/rng.hpp"
#include "cnpe/simgraph.hpp"

namespace cnpe {

enum class PairOrigin { similarity, random };

inline const char* pair_origin_name(PairOrigin o) {
  return o == PairOrigin::similarity ? "similarity" : "random";
}

/// An unordered comparison candidate, stored canonically as i < j.
/// Presentation order is decided later, by the judge module.
struct PaperPair {
  int i = 0;
  int j = 0;
  PairOrigin origin = PairOrigin::similarity;
  std::optional<double> weight;  // graph weight when origin == similarity

  std::pair<int, int> key() const { return {i, j}; }
};

inline PaperPair make_pair(int a, int b, PairOrigin origin,
                           std::optional<double> weight = std::nullopt) {
  if (a == b) throw Error(errc::invalid_argument, "self-pair");
  PaperPair p;
  p.i = std::min(a, b);
  p.j = std::max(a, b);
  p.origin = origin;
  p.weight = weight;
  return p;
}

/// Training-pair constraints: minimum ground-truth score gap and a cap on
/// how often any one paper may appear.
struct TrainFilterConfig {
  double d_min = 1.5;
  int c_max = 1;

  void validate() const {
    if (d_min < 0.0) throw Error(errc::invalid_argument, "d_min must be >= 0");
    if (c_max < 1) throw Error(errc::invalid_argument, "c_max must be >= 1");
  }
};

/// Inference pair budget: a fraction alpha of the n(n-1)/2 theoretical pairs,
/// mixed between similarity-ranked and random pairs.
struct InferenceFilterConfig {
  double alpha = 0.05;
  double mix = 0.5;  // similarity share
  std::uint64_t seed = 0;

  void validate() const {
    if (alpha <= 0.0 || alpha > 1.0) throw Error(errc::invalid_argument, "alpha must be in (0, 1]");
    if (mix < 0.0 || mix > 1.0) throw Error(errc::invalid_argument, "mix must be in [0, 1]");
  }
};

/// The top-weighted graph edges, up to budget.
inline std::vector<PaperPair> sample_similarity_pairs(const SimilarityGraph& graph,
                                                      std::size_t budget) {
  std::vector<PaperPair> out;
  const std::vector<GraphEdge> ranked = sorted_pairs(graph);
  const std::size_t take = std::min(budget, ranked.size());
  out.reserve(take);
  for (std::size_t k = 0; k < take; ++k)
    out.push_back(make_pair(ranked[k].i, ranked[k].j, PairOrigin::similarity, ranked[k].w));
  return out;
}

/// Distinct unordered pairs drawn uniformly, none from exclude. Deterministic
/// for a given seed. Greedy rejection of duplicates; falls back to full
/// enumeration when the pair space is small or the budget is dense.
inline std::vector<PaperPair> sample_random_pairs(
    int n, std::size_t budget, std::uint64_t seed,
    const std::set<std::pair<int, int>>& exclude = {}) {
  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  std::uint64_t excluded = 0;
  for (const auto& [a, b] : exclude)
    if (a >= 0 && b > a && b < n) ++excluded;
  if (budget > total - excluded)
    throw Error(errc::budget_infeasible,
                "budget " + std::to_string(budget) + " exceeds " +
                    std::to_string(total - excluded) + " available pairs");

  SplitMix64 rng(seed);
  std::vector<PaperPair> out;
  out.reserve(budget);

  const bool enumerate = total <= 2'000'000 || budget * 2 > total - excluded;
  if (enumerate) {
    std::vector<std::pair<int, int>> pool;
    pool.reserve(static_cast<std::size_t>(total - excluded));
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (!exclude.count({a, b})) pool.emplace_back(a, b);
    // Partial Fisher-Yates: only the first `budget` slots are needed.
    for (std::size_t k = 0; k < budget; ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(rng.next_below(pool.size() - k));
      std::swap(pool[k], pool[pick]);
      out.push_back(make_pair(pool[k].first, pool[k].second, PairOrigin::random));
    }
  } else {
    std::set<std::pair<int, int>> seen;
    while (out.size() < budget) {
      const int a = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
      int b = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n) - 1));
      if (b >= a) ++b;
      const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
      if (exclude.count(key) || !seen.insert(key).second) continue;
      out.push_back(make_pair(key.first, key.second, PairOrigin::random));
    }
  }
  return out;
}

inline std::vector<PaperPair> sample_random_pairs(
    const Corpus& corpus, std::size_t budget, std::uint64_t seed,
    const std::set<std::pair<int, int>>& exclude = {}) {
  return sample_random_pairs(corpus.size(), budget, seed, exclude);
}

/// Greedy scan in input order: keep a pair only when the score gap reaches
/// d_min and neither endpoint has hit its occurrence cap yet.
inline std::vector<PaperPair> filter_training_pairs(std::span<const PaperPair> pairs,
                                                    const Corpus& corpus,
                                                    const TrainFilterConfig& config) {
  config.validate();
  std::vector<int> count(static_cast<std::size_t>(corpus.size()), 0);
  std::vector<PaperPair> out;
  for (const PaperPair& p : pairs) {
    const Paper& pi = corpus.at(p.i);
    const Paper& pj = corpus.at(p.j);
    if (!pi.mean_score) throw Error(errc::missing_score, pi.id);
    if (!pj.mean_score) throw Error(errc::missing_score, pj.id);
    if (std::abs(*pi.mean_score - *pj.mean_score) < config.d_min) continue;
    if (count[static_cast<std::size_t>(p.i)] >= config.c_max) continue;
    if (count[static_cast<std::size_t>(p.j)] >= config.c_max) continue;
    ++count[static_cast<std::size_t>(p.i)];
    ++count[static_cast<std::size_t>(p.j)];
    out.push_back(p);
  }
  return out;
}

namespace detail {

/// Swap-based coverage repair: each uncovered paper gets its best incident
/// graph edge (or a random pair at mix == 0), displacing the least valuable
/// chosen pair whose removal keeps everyone else covered when possible.
class CoveragePatcher {
 public:
  CoveragePatcher(const SimilarityGraph& graph, int n, bool graph_patches,
                  std::uint64_t seed)
      : n_(n), graph_patches_(graph_patches), rng_(seed) {
    best_edge_.assign(static_cast<std::size_t>(n), {-1, -1.0});
    for (const GraphEdge& e : graph.edges) {
      consider(e.i, e.j, e.w);
      consider(e.j, e.i, e.w);
    }
  }

  void run(std::vector<PaperPair>& chosen) {
    std::vector<int> cover(static_cast<std::size_t>(n_), 0);
    std::set<std::pair<int, int>> used;
    for (const PaperPair& p : chosen) {
      ++cover[static_cast<std::size_t>(p.i)];
      ++cover[static_cast<std::size_t>(p.j)];
      used.insert(p.key());
    }
    std::set<int> uncovered;
    for (int v = 0; v < n_; ++v)
      if (cover[static_cast<std::size_t>(v)] == 0) uncovered.insert(v);

    int attempts = 0;
    const int max_attempts = 4 * n_ + 16;
    while (!uncovered.empty()) {
      if (++attempts > max_attempts)
        throw Error(errc::coverage_infeasible,
                    "coverage patching did not converge; " +
                        std::to_string(uncovered.size()) + " papers uncovered");
      const int u = *uncovered.begin();
      const PaperPair add = pick_addition(u, uncovered, used);
      const std::size_t victim = pick_removal(chosen, cover, add);

      const PaperPair removed = chosen[victim];
      used.erase(removed.key());
      --cover[static_cast<std::size_t>(removed.i)];
      --cover[static_cast<std::size_t>(removed.j)];
      chosen.erase(chosen.begin() + static_cast<std::ptrdiff_t>(victim));

      used.insert(add.key());
      ++cover[static_cast<std::size_t>(add.i)];
      ++cover[static_cast<std::size_t>(add.j)];
      chosen.push_back(add);

      uncovered.erase(add.i);
      uncovered.erase(add.j);
      if (cover[static_cast<std::size_t>(removed.i)] == 0) uncovered.insert(removed.i);
      if (cover[static_cast<std::size_t>(removed.j)] == 0) uncovered.insert(removed.j);
    }
  }

 private:
  void consider(int from, int to, double w) {
    auto& best = best_edge_[static_cast<std::size_t>(from)];
    if (w > best.second || (w == best.second && to < best.first) || best.first < 0)
      best = {to, w};
  }

  PaperPair pick_addition(int u, const std::set<int>& uncovered,
                          const std::set<std::pair<int, int>>& used) const {
    if (graph_patches_) {
      const auto& [v, w] = best_edge_[static_cast<std::size_t>(u)];
      if (v >= 0 && !used.count({std::min(u, v), std::max(u, v)}))
        return make_pair(u, v, PairOrigin::similarity, w);
    }
    // random-origin patch: prefer pairing two uncovered papers
    for (int v : uncovered)
      if (v != u && !used.count({std::min(u, v), std::max(u, v)}))
        return make_pair(u, v, PairOrigin::random);
    for (int step = 0; step < 4 * n_; ++step) {
      int v = static_cast<int>(rng_.next_below(static_cast<std::uint64_t>(n_)));
      if (v != u && !used.count({std::min(u, v), std::max(u, v)}))
        return make_pair(u, v, PairOrigin::random);
    }
    for (int v = 0; v < n_; ++v)
      if (v != u && !used.count({std::min(u, v), std::max(u, v)}))
        return make_pair(u, v, PairOrigin::random);
    throw Error(errc::coverage_infeasible, "no available pair for paper " + std::to_string(u));
  }

  /// Removal preference: lowest-weight similarity pair first, then random
  /// pairs in insertion order, minimizing the number of endpoints that the
  /// removal would leave uncovered.
  std::size_t pick_removal(const std::vector<PaperPair>& chosen,
                           const std::vector<int>& cover, const PaperPair& add) const {
    auto damage = [&](const PaperPair& p) {
      int cnt_i = cover[static_cast<std::size_t>(p.i)] + (p.i == add.i || p.i == add.j ? 1 : 0);
      int cnt_j = cover[static_cast<std::size_t>(p.j)] + (p.j == add.i || p.j == add.j ? 1 : 0);
      return (cnt_i <= 1 ? 1 : 0) + (cnt_j <= 1 ? 1 : 0);
    };
    std::size_t best = chosen.size();
    int best_damage = 3;
    int best_class = 2;  // 0 = similarity, 1 = random
    double best_weight = 0.0;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      const PaperPair& p = chosen[k];
      if (p.key() == add.key()) continue;
      const int d = damage(p);
      const int cls = p.origin == PairOrigin::similarity ? 0 : 1;
      const double w = p.weight.value_or(0.0);
      bool take = false;
      if (d != best_damage) take = d < best_damage;
      else if (cls != best_class) take = cls < best_class;
      else if (cls == 0 && w != best_weight) take = w < best_weight;
      else take = false;
      if (best == chosen.size()) take = true;
      if (take) {
        best = k;
        best_damage = d;
        best_class = cls;
        best_weight = w;
      }
    }
    if (best == chosen.size())
      throw Error(errc::coverage_infeasible, "no removable pair during coverage patching");
    return best;
  }

  int n_;
  bool graph_patches_;
  mutable SplitMix64 rng_;
  std::vector<std::pair<int, double>> best_edge_;  // per paper: (partner, weight)
};

}  // namespace detail

/// Inference pair set: ceil(alpha * n(n-1)/2) pairs, a mix of top-weighted
/// graph edges and random pairs, then repaired so every paper appears in at
/// least one pair. At mix == 1 the set stays purely similarity-based (and may
/// shrink to the edge count); at mix == 0 it stays purely random.
inline std::vector<PaperPair> build_inference_pairset(const SimilarityGraph& graph,
                                                      const Corpus& corpus,
                                                      const InferenceFilterConfig& config) {
  config.validate();
  const int n = corpus.size();
  if (n != graph.n) throw Error(errc::length_mismatch, "graph and corpus sizes differ");
  const std::uint64_t theoretical = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  std::size_t total = static_cast<std::size_t>(
      std::ceil(config.alpha * static_cast<double>(theoretical)));
  total = std::min<std::size_t>(total, theoretical);
  const std::size_t min_cover = static_cast<std::size_t>((n + 1) / 2);
  if (total < min_cover)
    throw Error(errc::coverage_infeasible,
                "budget " + std::to_string(total) + " below coverage minimum " +
                    std::to_string(min_cover));

  const bool pure_similarity = config.mix >= 1.0;
  const bool pure_random = config.mix <= 0.0;

  std::size_t sim_share = static_cast<std::size_t>(
      std::ceil(config.mix * static_cast<double>(total)));
  sim_share = std::min(sim_share, total);

  std::vector<PaperPair> chosen = sample_similarity_pairs(graph, sim_share);
  if (pure_similarity) {
    total = std::min(total, chosen.size());
    chosen.resize(total);
  } else {
    std::set<std::pair<int, int>> exclude;
    for (const PaperPair& p : chosen) exclude.insert(p.key());
    const std::size_t random_share = total - chosen.size();
    std::vector<PaperPair> randoms =
        sample_random_pairs(n, random_share, config.seed, exclude);
    chosen.insert(chosen.end(), randoms.begin(), randoms.end());
  }

  detail::CoveragePatcher patcher(graph, n, /*graph_patches=*/!pure_random,
                                  derive_stream_seed(config.seed, 0x636f76));
  patcher.run(chosen);
  return chosen;
}

}  // namespace cnpe
