#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cnpe/aggregate.hpp"
#include "cnpe/corpus.hpp"
#include "cnpe/error.hpp"
#include "cnpe/judge.hpp"
#include "cnpe/sampler.hpp"
#include "cnpe/simgraph.hpp"

namespace cnpe {

/// Line-delimited artifacts: first line is a schema header object, every
/// following line one record. Papers are referenced by string id so files
/// stay meaningful without the corpus loaded.
inline constexpr int kSchemaVersion = 1;

namespace detail {

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(errc::io_failure, "cannot write " + path);
  return out;
}

inline std::vector<ordered_json> read_jsonl(const std::string& path,
                                            const std::string& expected_schema) {
  std::ifstream in(path);
  if (!in) throw Error(errc::missing_artifact, path);
  std::vector<ordered_json> lines;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error(errc::parse_failure, path + " line " + std::to_string(line_no));
    lines.push_back(std::move(j));
  }
  if (lines.empty() || !lines.front().contains("_schema") ||
      lines.front()["_schema"] != expected_schema)
    throw Error(errc::parse_failure, path + ": expected schema " + expected_schema);
  return lines;
}

inline ordered_json retrieval_config_json(const RetrievalConfig& c) {
  return {{"k_e", c.k_e},
          {"k_r", c.k_r},
          {"escalation_factor", c.escalation_factor},
          {"max_rounds", c.max_rounds}};
}

}  // namespace detail

// --- graph -------------------------------------------------------------------

inline void write_graph(const SimilarityGraph& graph, const Corpus& corpus,
                        const std::string& path) {
  std::ofstream out = detail::open_for_write(path);
  ordered_json header = {{"_schema", "cnpe.graph"},
                         {"_version", kSchemaVersion},
                         {"n", graph.n},
                         {"config", detail::retrieval_config_json(graph.config_used)}};
  out << header.dump() << '\n';
  for (const GraphEdge& e : graph.edges) {
    ordered_json rec = {{"i", corpus.at(e.i).id}, {"j", corpus.at(e.j).id}, {"w", e.w}};
    out << rec.dump() << '\n';
  }
}

inline SimilarityGraph read_graph(const std::string& path, const Corpus& corpus) {
  const std::vector<ordered_json> lines = detail::read_jsonl(path, "cnpe.graph");
  const ordered_json& header = lines.front();
  SimilarityGraph graph;
  graph.n = header.at("n").get<int>();
  if (graph.n != corpus.size())
    throw Error(errc::length_mismatch, "graph node count differs from corpus size");
  const ordered_json& cfg = header.at("config");
  graph.config_used.k_e = cfg.at("k_e").get<int>();
  graph.config_used.k_r = cfg.at("k_r").get<int>();
  graph.config_used.escalation_factor = cfg.at("escalation_factor").get<double>();
  graph.config_used.max_rounds = cfg.at("max_rounds").get<int>();
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const ordered_json& rec = lines[k];
    const int i = corpus.position_of(rec.at("i").get<std::string>());
    const int j = corpus.position_of(rec.at("j").get<std::string>());
    graph.edges.push_back({std::min(i, j), std::max(i, j), rec.at("w").get<double>()});
  }
  return graph;
}

// --- pair sets ---------------------------------------------------------------

inline void write_pairs(std::span<const PaperPair> pairs, const Corpus& corpus,
                        const std::string& kind, const ordered_json& config,
                        const std::string& path) {
  std::ofstream out = detail::open_for_write(path);
  ordered_json header = {{"_schema", "cnpe.pairs"},
                         {"_version", kSchemaVersion},
                         {"kind", kind},
                         {"config", config}};
  out << header.dump() << '\n';
  for (const PaperPair& p : pairs) {
    ordered_json rec = {{"i", corpus.at(p.i).id},
                        {"j", corpus.at(p.j).id},
                        {"origin", pair_origin_name(p.origin)}};
    if (p.weight) rec["w"] = *p.weight;
    out << rec.dump() << '\n';
  }
}

inline std::vector<PaperPair> read_pairs(const std::string& path, const Corpus& corpus) {
  const std::vector<ordered_json> lines = detail::read_jsonl(path, "cnpe.pairs");
  std::vector<PaperPair> pairs;
  pairs.reserve(lines.size() - 1);
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const ordered_json& rec = lines[k];
    const int i = corpus.position_of(rec.at("i").get<std::string>());
    const int j = corpus.position_of(rec.at("j").get<std::string>());
    const std::string origin = rec.at("origin").get<std::string>();
    std::optional<double> w;
    if (rec.contains("w")) w = rec.at("w").get<double>();
    pairs.push_back(make_pair(i, j,
                              origin == "similarity" ? PairOrigin::similarity
                                                     : PairOrigin::random,
                              w));
  }
  return pairs;
}

// --- preference records --------------------------------------------------------

inline void write_records(std::span<const PreferenceRecord> records, const Corpus& corpus,
                          const ordered_json& config, const std::string& path) {
  std::ofstream out = detail::open_for_write(path);
  ordered_json header = {{"_schema", "cnpe.records"},
                         {"_version", kSchemaVersion},
                         {"config", config}};
  out << header.dump() << '\n';
  for (const PreferenceRecord& r : records) {
    ordered_json rec = {{"i", corpus.at(r.pair.i).id},
                        {"j", corpus.at(r.pair.j).id},
                        {"origin", pair_origin_name(r.pair.origin)}};
    if (r.pair.weight) rec["w"] = *r.pair.weight;
    rec["failed"] = r.failed;
    if (r.failed) {
      rec["error"] = r.error;
    } else {
      rec["presented_first"] = corpus.at(r.presented_first).id;
      rec["chosen"] = corpus.at(r.chosen).id;
      rec["y_hat"] = r.y_hat;
      if (r.raw_output) rec["raw_output"] = *r.raw_output;
      if (r.review_i) rec["review_i"] = *r.review_i;
      if (r.review_j) rec["review_j"] = *r.review_j;
      if (r.latency_ms) rec["latency_ms"] = *r.latency_ms;
    }
    out << rec.dump() << '\n';
  }
}

inline std::vector<PreferenceRecord> read_records(const std::string& path,
                                                  const Corpus& corpus) {
  const std::vector<ordered_json> lines = detail::read_jsonl(path, "cnpe.records");
  std::vector<PreferenceRecord> records;
  records.reserve(lines.size() - 1);
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const ordered_json& rec = lines[k];
    PreferenceRecord r;
    const int i = corpus.position_of(rec.at("i").get<std::string>());
    const int j = corpus.position_of(rec.at("j").get<std::string>());
    std::optional<double> w;
    if (rec.contains("w")) w = rec.at("w").get<double>();
    const std::string origin = rec.at("origin").get<std::string>();
    r.pair = make_pair(i, j,
                       origin == "similarity" ? PairOrigin::similarity : PairOrigin::random,
                       w);
    r.failed = rec.at("failed").get<bool>();
    if (r.failed) {
      r.error = rec.value("error", "");
    } else {
      r.presented_first = corpus.position_of(rec.at("presented_first").get<std::string>());
      r.chosen = corpus.position_of(rec.at("chosen").get<std::string>());
      r.y_hat = rec.at("y_hat").get<int>();
      if (rec.contains("raw_output")) r.raw_output = rec.at("raw_output").get<std::string>();
      if (rec.contains("review_i")) r.review_i = rec.at("review_i").get<std::string>();
      if (rec.contains("review_j")) r.review_j = rec.at("review_j").get<std::string>();
      if (rec.contains("latency_ms")) r.latency_ms = rec.at("latency_ms").get<long long>();
    }
    records.push_back(std::move(r));
  }
  return records;
}

// --- rankings ------------------------------------------------------------------

struct RankingArtifact {
  std::string method;
  std::vector<std::string> ids;       // rank order, best first
  std::vector<double> theta;          // aligned with ids
  std::vector<double> percentile;     // aligned with ids
  std::vector<std::optional<Decision>> decisions;  // aligned with ids
  ordered_json diagnostics;
};

inline void write_ranking(const LatentScores& scores, const RankingResult& ranking,
                          const Corpus& corpus, double acceptance_rate,
                          const std::string& path) {
  std::ofstream out = detail::open_for_write(path);
  ordered_json diag = {{"iterations", scores.diagnostics.iterations},
                       {"converged", scores.diagnostics.converged},
                       {"final_objective", scores.diagnostics.final_objective},
                       {"warnings", scores.diagnostics.warnings}};
  if (scores.diagnostics.acceptance_rate >= 0.0)
    diag["mcmc_acceptance_rate"] = scores.diagnostics.acceptance_rate;
  ordered_json header = {{"_schema", "cnpe.ranking"},
                         {"_version", kSchemaVersion},
                         {"method", aggregation_method_name(scores.method)},
                         {"acceptance_rate", acceptance_rate},
                         {"diagnostics", diag}};
  out << header.dump() << '\n';
  for (std::size_t k = 0; k < ranking.order.size(); ++k) {
    const int item = ranking.order[k];
    ordered_json rec = {{"id", corpus.at(item).id},
                        {"theta", scores.theta[static_cast<std::size_t>(item)]},
                        {"rank", static_cast<int>(k)},
                        {"percentile", ranking.percentile[k]}};
    if (ranking.decisions)
      rec["decision"] = decision_name((*ranking.decisions)[k]);
    out << rec.dump() << '\n';
  }
}

inline RankingArtifact read_ranking(const std::string& path) {
  const std::vector<ordered_json> lines = detail::read_jsonl(path, "cnpe.ranking");
  RankingArtifact art;
  art.method = lines.front().at("method").get<std::string>();
  art.diagnostics = lines.front().value("diagnostics", ordered_json::object());
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const ordered_json& rec = lines[k];
    art.ids.push_back(rec.at("id").get<std::string>());
    art.theta.push_back(rec.at("theta").get<double>());
    art.percentile.push_back(rec.at("percentile").get<double>());
    if (rec.contains("decision"))
      art.decisions.push_back(rec.at("decision").get<std::string>() == "accept"
                                  ? Decision::accept
                                  : Decision::reject);
    else
      art.decisions.push_back(std::nullopt);
  }
  return art;
}

}  // namespace cnpe
