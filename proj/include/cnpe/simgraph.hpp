#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cnpe/corpus.hpp"
#include "cnpe/error.hpp"
#include "cnpe/providers.hpp"

namespace cnpe {

/// Top-k retrieval/rerank settings. When the resulting graph is
/// disconnected, both k values are escalated and the build repeats.
struct RetrievalConfig {
  int k_e = 50;
  int k_r = 25;
  double escalation_factor = 2.0;
  int max_rounds = 6;

  void validate(int n) const {
    if (k_e <= 0 || k_r <= 0) throw Error(errc::invalid_argument, "k_e and k_r must be positive");
    if (k_r > k_e) throw Error(errc::invalid_argument, "k_r must not exceed k_e");
    if (k_e >= n) throw Error(errc::invalid_argument, "k_e must be below the corpus size");
    if (escalation_factor <= 1.0) throw Error(errc::invalid_argument, "escalation_factor must exceed 1");
    if (max_rounds <= 0) throw Error(errc::invalid_argument, "max_rounds must be positive");
  }
};

struct EmbeddingSet {
  int dimension = 0;
  std::vector<std::vector<double>> vectors;  // one per paper position

  int size() const { return static_cast<int>(vectors.size()); }
};

/// r(i, j) = 0-based rank of j in i's reranked candidate list. Pairs outside
/// the reranked top-k are simply absent (the "infinite rank" initialization).
struct RankTable {
  int n = 0;
  std::unordered_map<std::int64_t, int> ranks;

  void set(int i, int j, int rank) { ranks[key(i, j)] = rank; }

  std::optional<int> get(int i, int j) const {
    auto it = ranks.find(key(i, j));
    if (it == ranks.end()) return std::nullopt;
    return it->second;
  }

  std::int64_t key(int i, int j) const {
    return static_cast<std::int64_t>(i) * n + j;
  }
};

struct GraphEdge {
  int i = 0;  // canonical i < j
  int j = 0;
  double w = 0.0;
};

struct SimilarityGraph {
  int n = 0;
  std::vector<GraphEdge> edges;      // sorted by (i, j), no duplicates
  RetrievalConfig config_used;       // effective values after any escalation
};

struct ConnectivityReport {
  bool connected = false;
  std::vector<std::vector<int>> components;  // each sorted; partition of nodes
};

inline EmbeddingSet embed_corpus(const Corpus& corpus, EmbeddingProvider& embedder) {
  std::vector<EmbeddingRequest> requests;
  requests.reserve(corpus.papers.size());
  for (const Paper& p : corpus.papers)
    requests.push_back({p.id, p.title + "\n" + p.abstract});

  EmbeddingSet set;
  set.dimension = embedder.dimension();
  set.vectors = embedder.embed(requests);
  if (static_cast<int>(set.vectors.size()) != corpus.size())
    throw Error(errc::provider_failure, "embedder returned wrong vector count");
  for (int i = 0; i < corpus.size(); ++i) {
    const auto& v = set.vectors[static_cast<std::size_t>(i)];
    if (static_cast<int>(v.size()) != set.dimension)
      throw Error(errc::dimension_mismatch, corpus.at(i).id);
    for (double x : v)
      if (!std::isfinite(x)) throw Error(errc::provider_failure, corpus.at(i).id);
  }
  return set;
}

/// The k_e nearest papers to i by cosine similarity, excluding i itself,
/// descending; ties broken by ascending position.
inline std::vector<int> retrieve_candidates(int i, const EmbeddingSet& embeddings, int k_e) {
  const int n = embeddings.size();
  if (k_e >= n) throw Error(errc::invalid_argument, "k_e must be below n");
  const auto& query = embeddings.vectors[static_cast<std::size_t>(i)];

  std::vector<std::pair<double, int>> scored;
  scored.reserve(static_cast<std::size_t>(n) - 1);
  for (int j = 0; j < n; ++j) {
    if (j == i) continue;
    scored.emplace_back(cosine_similarity(query, embeddings.vectors[static_cast<std::size_t>(j)]), j);
  }
  auto better = [](const std::pair<double, int>& a, const std::pair<double, int>& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  };
  const auto k = static_cast<std::ptrdiff_t>(k_e);
  std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), better);

  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k_e));
  for (std::ptrdiff_t t = 0; t < k; ++t) out.push_back(scored[static_cast<std::size_t>(t)].second);
  return out;
}

/// Reranks i's candidates and returns (candidate position, 0-based rank) for
/// the top k_r; everything below the cut stays unranked.
inline std::vector<std::pair<int, int>> rerank_candidates(
    int i, std::span<const int> candidates, const Corpus& corpus,
    RerankProvider& reranker, int k_r) {
  if (k_r > static_cast<int>(candidates.size()))
    throw Error(errc::invalid_argument, "k_r exceeds candidate count");
  const Paper& query = corpus.at(i);
  std::vector<std::string> texts;
  texts.reserve(candidates.size());
  for (int j : candidates) texts.push_back(corpus.at(j).title + "\n" + corpus.at(j).abstract);

  const std::vector<double> scores =
      reranker.score(query.title + "\n" + query.abstract, texts);
  if (scores.size() != candidates.size())
    throw Error(errc::provider_failure, "reranker returned wrong score count");
  for (double s : scores)
    if (!std::isfinite(s)) throw Error(errc::provider_failure, query.id);

  std::vector<int> idx(candidates.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    return candidates[static_cast<std::size_t>(a)] < candidates[static_cast<std::size_t>(b)];
  });

  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(k_r));
  for (int rank = 0; rank < k_r; ++rank)
    out.emplace_back(candidates[static_cast<std::size_t>(idx[static_cast<std::size_t>(rank)])], rank);
  return out;
}

/// Bidirectional edge weight: absent ranks count as k_r, so a pair must be
/// in at least one reranked list to get positive weight, and weights stay
/// within (0, 2*k_r].
inline double edge_weight(std::optional<int> r_ij, std::optional<int> r_ji, int k_r) {
  if (!r_ij && !r_ji) return 0.0;
  const int a = r_ij ? *r_ij : k_r;
  const int b = r_ji ? *r_ji : k_r;
  return static_cast<double>(2 * k_r - a - b);
}

inline ConnectivityReport check_connectivity(const SimilarityGraph& graph) {
  const int n = graph.n;
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (const GraphEdge& e : graph.edges) {
    const int a = find(e.i), b = find(e.j);
    if (a != b) parent[static_cast<std::size_t>(a)] = b;
  }
  std::map<int, std::vector<int>> groups;
  for (int v = 0; v < n; ++v) groups[find(v)].push_back(v);

  ConnectivityReport report;
  for (auto& [root, members] : groups) report.components.push_back(std::move(members));
  report.connected = report.components.size() <= 1;
  return report;
}

namespace detail {

inline SimilarityGraph build_graph_once(const Corpus& corpus,
                                        const EmbeddingSet& embeddings,
                                        RerankProvider& reranker,
                                        int k_e, int k_r) {
  const int n = corpus.size();
  RankTable table;
  table.n = n;
  std::vector<std::vector<int>> ranked_partners(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::vector<int> candidates = retrieve_candidates(i, embeddings, k_e);
    for (auto [j, rank] : rerank_candidates(i, candidates, corpus, reranker, k_r)) {
      table.set(i, j, rank);
      ranked_partners[static_cast<std::size_t>(i)].push_back(j);
    }
  }

  std::map<std::pair<int, int>, double> weights;
  for (int i = 0; i < n; ++i) {
    for (int j : ranked_partners[static_cast<std::size_t>(i)]) {
      const int a = std::min(i, j), b = std::max(i, j);
      if (weights.count({a, b})) continue;
      const double w = edge_weight(table.get(a, b), table.get(b, a), k_r);
      if (w > 0.0) weights[{a, b}] = w;
    }
  }

  SimilarityGraph graph;
  graph.n = n;
  graph.edges.reserve(weights.size());
  for (const auto& [pair, w] : weights) graph.edges.push_back({pair.first, pair.second, w});
  return graph;
}

}  // namespace detail

/// Builds the bidirectional-retrieval similarity graph. Embeddings are
/// computed once; retrieval and reranking repeat with escalated k values
/// until the graph is connected or max_rounds is exhausted.
inline SimilarityGraph build_similarity_graph(const Corpus& corpus,
                                              EmbeddingProvider& embedder,
                                              RerankProvider& reranker,
                                              const RetrievalConfig& config) {
  const int n = corpus.size();
  if (n < 2) throw Error(errc::invalid_argument, "graph needs at least 2 papers");
  config.validate(n);

  const EmbeddingSet embeddings = embed_corpus(corpus, embedder);

  int k_e = config.k_e;
  int k_r = config.k_r;
  for (int round = 0; round < config.max_rounds; ++round) {
    SimilarityGraph graph = detail::build_graph_once(corpus, embeddings, reranker, k_e, k_r);
    if (check_connectivity(graph).connected) {
      graph.config_used = config;
      graph.config_used.k_e = k_e;
      graph.config_used.k_r = k_r;
      return graph;
    }
    k_e = std::min(n - 1, static_cast<int>(std::ceil(k_e * config.escalation_factor)));
    k_r = std::min(k_e, static_cast<int>(std::ceil(k_r * config.escalation_factor)));
  }
  throw Error(errc::connectivity_unreachable,
              "graph still disconnected after " + std::to_string(config.max_rounds) + " rounds");
}

/// Pairs descending by weight; ties broken by (i, j) ascending.
inline std::vector<GraphEdge> sorted_pairs(const SimilarityGraph& graph) {
  std::vector<GraphEdge> out = graph.edges;
  std::sort(out.begin(), out.end(), [](const GraphEdge& a, const GraphEdge& b) {
    if (a.w != b.w) return a.w > b.w;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  return out;
}

}  // namespace cnpe
