#pragma once

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cnpe/artifacts.hpp"
#include "cnpe/corpus.hpp"
#include "cnpe/error.hpp"
#include "cnpe/evalmetrics.hpp"
#include "cnpe/judge.hpp"
#include "cnpe/remote_judge.hpp"
#include "cnpe/sampler.hpp"
#include "cnpe/simgraph.hpp"

namespace cnpe {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kManifestFile = "run_manifest";

/// Full run configuration. Defaults are the published pipeline settings:
/// k_e/k_r = 50/25, d_min = 1.5, c_max = 1, alpha = 0.05, gamma = 5,
/// acceptance rate = 31.4%, PageRank damping 0.85, Katz attenuation 0.1.
struct PipelineConfig {
  std::string corpus_path;
  std::optional<std::string> split_path;

  int embed_dim = 256;  // mock provider dimension
  RetrievalConfig retrieval;
  TrainFilterConfig train_filter;
  InferenceFilterConfig inference;

  std::string comparator_kind = "oracle";  // oracle | remote
  OracleConfig oracle;
  RemoteJudgeConfig remote;
  std::uint64_t judge_seed = 0;  // presentation order + oracle draws
  OrderPolicy order_policy = OrderPolicy::randomized;
  int parallelism = 4;
  RewardConfig reward;

  std::string aggregation_method = "bt_mle";
  double bt_reg = 1e-4;
  double bt_tol = 1e-8;
  int bt_max_iter = 10000;
  double prior_sd = 2.0;
  int mcmc_samples = 4000;
  int mcmc_burn_in = 1000;
  std::uint64_t aggregation_seed = 1;
  CentralityConfig centrality;

  double acceptance_rate = 0.314;
  std::vector<int> metric_ks = {10, 20, 50, 0};  // 0 means "all"
  bool graded_ndcg = false;

  std::string output_dir = "out";

  static PipelineConfig from_json(const ordered_json& j);
  static PipelineConfig from_file(const std::string& path);
  ordered_json to_json() const;
};

inline PipelineConfig PipelineConfig::from_json(const ordered_json& j) {
  PipelineConfig c;
  try {
    c.corpus_path = j.at("corpus").get<std::string>();
    if (j.contains("split") && !j["split"].is_null())
      c.split_path = j["split"].get<std::string>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("embed_dim")) c.embed_dim = j["embed_dim"].get<int>();

    if (j.contains("retrieval")) {
      const auto& r = j["retrieval"];
      if (r.contains("k_e")) c.retrieval.k_e = r["k_e"].get<int>();
      if (r.contains("k_r")) c.retrieval.k_r = r["k_r"].get<int>();
      if (r.contains("escalation_factor"))
        c.retrieval.escalation_factor = r["escalation_factor"].get<double>();
      if (r.contains("max_rounds")) c.retrieval.max_rounds = r["max_rounds"].get<int>();
    }
    if (j.contains("train_filter")) {
      const auto& t = j["train_filter"];
      if (t.contains("d_min")) c.train_filter.d_min = t["d_min"].get<double>();
      if (t.contains("c_max")) c.train_filter.c_max = t["c_max"].get<int>();
    }
    if (j.contains("inference_filter")) {
      const auto& f = j["inference_filter"];
      if (f.contains("alpha")) c.inference.alpha = f["alpha"].get<double>();
      if (f.contains("mix")) c.inference.mix = f["mix"].get<double>();
      if (f.contains("seed")) c.inference.seed = f["seed"].get<std::uint64_t>();
    }
    if (j.contains("comparator")) {
      const auto& cmp = j["comparator"];
      c.comparator_kind = cmp.value("kind", std::string("oracle"));
      if (c.comparator_kind == "oracle") {
        if (cmp.contains("beta")) c.oracle.beta = cmp["beta"].get<double>();
        if (cmp.contains("position_bias"))
          c.oracle.position_bias = cmp["position_bias"].get<double>();
        if (cmp.contains("seed")) c.judge_seed = cmp["seed"].get<std::uint64_t>();
        c.oracle.seed = c.judge_seed;
      } else if (c.comparator_kind == "remote") {
        c.remote.endpoint = cmp.value("endpoint", std::string());
        c.remote.model = cmp.value("model", std::string());
        if (cmp.contains("path")) c.remote.path = cmp["path"].get<std::string>();
        if (cmp.contains("timeout_ms")) c.remote.timeout_ms = cmp["timeout_ms"].get<int>();
        if (cmp.contains("retries")) c.remote.retries = cmp["retries"].get<int>();
        if (cmp.contains("temperature")) c.remote.temperature = cmp["temperature"].get<double>();
        if (cmp.contains("max_tokens")) c.remote.max_tokens = cmp["max_tokens"].get<int>();
        if (cmp.contains("seed")) c.judge_seed = cmp["seed"].get<std::uint64_t>();
      } else {
        throw Error(errc::config_error, "comparator.kind must be oracle or remote");
      }
    }
    if (j.contains("order_policy")) {
      const std::string p = j["order_policy"].get<std::string>();
      if (p == "randomized") c.order_policy = OrderPolicy::randomized;
      else if (p == "canonical") c.order_policy = OrderPolicy::canonical;
      else throw Error(errc::config_error, "order_policy must be randomized or canonical");
    }
    if (j.contains("parallelism")) c.parallelism = j["parallelism"].get<int>();
    if (j.contains("gamma")) c.reward.gamma = j["gamma"].get<double>();

    if (j.contains("aggregation")) {
      const auto& a = j["aggregation"];
      if (a.contains("method")) c.aggregation_method = a["method"].get<std::string>();
      if (a.contains("reg")) c.bt_reg = a["reg"].get<double>();
      if (a.contains("tol")) c.bt_tol = a["tol"].get<double>();
      if (a.contains("max_iter")) c.bt_max_iter = a["max_iter"].get<int>();
      if (a.contains("prior_sd")) c.prior_sd = a["prior_sd"].get<double>();
      if (a.contains("n_samples")) c.mcmc_samples = a["n_samples"].get<int>();
      if (a.contains("burn_in")) c.mcmc_burn_in = a["burn_in"].get<int>();
      if (a.contains("seed")) c.aggregation_seed = a["seed"].get<std::uint64_t>();
      if (a.contains("damping")) c.centrality.damping = a["damping"].get<double>();
      if (a.contains("attenuation")) c.centrality.attenuation = a["attenuation"].get<double>();
    }
    if (j.contains("acceptance_rate")) c.acceptance_rate = j["acceptance_rate"].get<double>();
    if (j.contains("metric_ks")) c.metric_ks = j["metric_ks"].get<std::vector<int>>();
    if (j.contains("graded_ndcg")) c.graded_ndcg = j["graded_ndcg"].get<bool>();
  } catch (const ordered_json::exception& e) {
    throw Error(errc::config_error, e.what());
  }
  aggregation_method_from_name(c.aggregation_method);  // validate early
  return c;
}

inline PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::config_error, "cannot open config " + path);
  ordered_json j = ordered_json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(errc::config_error, "invalid JSON in " + path);
  return from_json(j);
}

inline ordered_json PipelineConfig::to_json() const {
  ordered_json cmp;
  if (comparator_kind == "oracle") {
    cmp = {{"kind", "oracle"},
           {"beta", oracle.beta},
           {"position_bias", oracle.position_bias},
           {"seed", judge_seed}};
  } else {
    // auth token deliberately omitted: secrets never land in artifacts
    cmp = {{"kind", "remote"},   {"endpoint", remote.endpoint},
           {"model", remote.model}, {"path", remote.path},
           {"timeout_ms", remote.timeout_ms}, {"retries", remote.retries},
           {"temperature", remote.temperature}, {"max_tokens", remote.max_tokens},
           {"seed", judge_seed}};
  }
  ordered_json j = {
      {"corpus", corpus_path},
      {"split", split_path ? ordered_json(*split_path) : ordered_json(nullptr)},
      {"output_dir", output_dir},
      {"embed_dim", embed_dim},
      {"retrieval", detail::retrieval_config_json(retrieval)},
      {"train_filter", {{"d_min", train_filter.d_min}, {"c_max", train_filter.c_max}}},
      {"inference_filter",
       {{"alpha", inference.alpha}, {"mix", inference.mix}, {"seed", inference.seed}}},
      {"comparator", cmp},
      {"order_policy", order_policy == OrderPolicy::randomized ? "randomized" : "canonical"},
      {"parallelism", parallelism},
      {"gamma", reward.gamma},
      {"aggregation",
       {{"method", aggregation_method},
        {"reg", bt_reg},
        {"tol", bt_tol},
        {"max_iter", bt_max_iter},
        {"prior_sd", prior_sd},
        {"n_samples", mcmc_samples},
        {"burn_in", mcmc_burn_in},
        {"seed", aggregation_seed},
        {"damping", centrality.damping},
        {"attenuation", centrality.attenuation}}},
      {"acceptance_rate", acceptance_rate},
      {"metric_ks", metric_ks},
      {"graded_ndcg", graded_ndcg},
  };
  return j;
}

/// Artifact names inside the output directory.
struct PipelinePaths {
  std::filesystem::path out;

  explicit PipelinePaths(const std::string& output_dir) : out(output_dir) {}

  std::string corpus() const { return (out / "corpus.jsonl").string(); }
  std::string train_corpus() const { return (out / "train_corpus.jsonl").string(); }
  std::string validation() const { return (out / "validation.json").string(); }
  std::string graph() const { return (out / "graph.jsonl").string(); }
  std::string train_graph() const { return (out / "train_graph.jsonl").string(); }
  std::string pairs() const { return (out / "pairs.jsonl").string(); }
  std::string train_pairs() const { return (out / "train_pairs.jsonl").string(); }
  std::string records() const { return (out / "records.jsonl").string(); }
  std::string ranking(const std::string& method) const {
    return (out / ("ranking_" + method + ".jsonl")).string();
  }
  std::string metrics() const { return (out / "metrics.json").string(); }
  std::string report_json() const { return (out / "report.json").string(); }
  std::string report_md() const { return (out / "report.md").string(); }
  std::string manifest() const { return (out / kManifestFile).string(); }
};

struct RunManifest {
  ordered_json config;
  ordered_json artifacts = ordered_json::object();
  std::string started;
  std::string finished;
  ordered_json seeds = ordered_json::object();
  ordered_json versions = ordered_json::object();

  ordered_json to_json() const {
    return {{"config", config},
            {"artifacts", artifacts},
            {"timestamps", {{"started", started}, {"finished", finished}}},
            {"seeds", seeds},
            {"versions", versions}};
  }
};

namespace detail {

inline std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

inline void write_json_file(const ordered_json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(errc::io_failure, "cannot write " + path);
  out << j.dump(2) << '\n';
}

inline ordered_json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::missing_artifact, path);
  ordered_json j = ordered_json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(errc::parse_failure, path);
  return j;
}

/// Shrinks the configured k values so toy corpora work with paper defaults.
inline RetrievalConfig effective_retrieval(const RetrievalConfig& wanted, int n) {
  RetrievalConfig c = wanted;
  c.k_e = std::min(c.k_e, n - 1);
  c.k_r = std::min(c.k_r, c.k_e);
  return c;
}

[[noreturn]] inline void stage_fail(const std::string& stage, const std::exception& cause) {
  throw Error(errc::stage_failure, stage + ": " + cause.what());
}

}  // namespace detail

// --- stages -------------------------------------------------------------------

inline void stage_ingest(const PipelineConfig& cfg) {
  try {
    const PipelinePaths paths(cfg.output_dir);
    std::filesystem::create_directories(paths.out);
    Corpus full = load_corpus(cfg.corpus_path);
    Corpus inference;
    std::optional<Corpus> train;
    if (cfg.split_path) {
      auto [tr, te] = split_corpus(full, *cfg.split_path);
      train = std::move(tr);
      inference = std::move(te);
    } else {
      inference = std::move(full);
    }

    const ValidationReport report = validate_corpus(inference, /*require_scores=*/false);
    ordered_json vj = {{"score_coverage", report.score_coverage},
                       {"errors", ordered_json::array()},
                       {"warnings", ordered_json::array()}};
    for (const ValidationIssue& e : report.errors)
      vj["errors"].push_back({{"id", e.id}, {"message", e.message}});
    for (const ValidationIssue& w : report.warnings)
      vj["warnings"].push_back({{"id", w.id}, {"message", w.message}});
    detail::write_json_file(vj, paths.validation());
    if (!report.usable())
      throw Error(errc::invalid_argument,
                  "corpus failed validation with " + std::to_string(report.errors.size()) +
                      " errors (see validation.json)");

    save_corpus(inference, paths.corpus());
    if (train) save_corpus(*train, paths.train_corpus());
  } catch (const Error& e) {
    if (e.code() == errc::stage_failure) throw;
    detail::stage_fail("ingest", e);
  } catch (const std::exception& e) {
    detail::stage_fail("ingest", e);
  }
}

inline void stage_graph(const PipelineConfig& cfg) {
  try {
    const PipelinePaths paths(cfg.output_dir);
    const Corpus corpus = load_corpus(paths.corpus());
    HashedBagEmbedder embedder(cfg.embed_dim);
    EmbeddingCosineReranker reranker(cfg.embed_dim);
    const SimilarityGraph graph = build_similarity_graph(
        corpus, embedder, reranker, detail::effective_retrieval(cfg.retrieval, corpus.size()));
    write_graph(graph, corpus, paths.graph());

    if (std::filesystem::exists(paths.train_corpus())) {
      const Corpus train = load_corpus(paths.train_corpus());
      const SimilarityGraph tg = build_similarity_graph(
          train, embedder, reranker, detail::effective_retrieval(cfg.retrieval, train.size()));
      write_graph(tg, train, paths.train_graph());
    }
  } catch (const Error& e) {
    if (e.code() == errc::stage_failure) throw;
    detail::stage_fail("graph", e);
  } catch (const std::exception& e) {
    detail::stage_fail("graph", e);
  }
}

inline void stage_sample(const PipelineConfig& cfg) {
  try {
    const PipelinePaths paths(cfg.output_dir);
    const Corpus corpus = load_corpus(paths.corpus());
    const SimilarityGraph graph = read_graph(paths.graph(), corpus);
    const std::vector<PaperPair> pairs = build_inference_pairset(graph, corpus, cfg.inference);
    ordered_json pair_cfg = {{"alpha", cfg.inference.alpha},
                             {"mix", cfg.inference.mix},
                             {"seed", cfg.inference.seed}};
    write_pairs(pairs, corpus, "inference", pair_cfg, paths.pairs());

    // Training pair set: every graph edge by descending weight, matched by an
    // equal number of random pairs, then the score-gap/occurrence filter.
    if (std::filesystem::exists(paths.train_corpus())) {
      const Corpus train = load_corpus(paths.train_corpus());
      const SimilarityGraph tg = read_graph(paths.train_graph(), train);
      std::vector<PaperPair> candidates = sample_similarity_pairs(tg, tg.edges.size());
      std::set<std::pair<int, int>> exclude;
      for (const PaperPair& p : candidates) exclude.insert(p.key());
      const std::uint64_t total =
          static_cast<std::uint64_t>(train.size()) * (train.size() - 1) / 2;
      const std::size_t random_budget =
          std::min<std::uint64_t>(candidates.size(), total - exclude.size());
      const std::vector<PaperPair> randoms = sample_random_pairs(
          train, random_budget, derive_stream_seed(cfg.inference.seed, 0x7261), exclude);
      candidates.insert(candidates.end(), randoms.begin(), randoms.end());
      const std::vector<PaperPair> filtered =
          filter_training_pairs(candidates, train, cfg.train_filter);
      ordered_json train_cfg = {{"d_min", cfg.train_filter.d_min},
                                {"c_max", cfg.train_filter.c_max},
                                {"seed", cfg.inference.seed}};
      write_pairs(filtered, train, "train", train_cfg, paths.train_pairs());
    }
  } catch (const Error& e) {
    if (e.code() == errc::stage_failure) throw;
    detail::stage_fail("sample", e);
  } catch (const std::exception& e) {
    detail::stage_fail("sample", e);
  }
}

inline std::unique_ptr<Comparator> make_comparator(const PipelineConfig& cfg) {
  if (cfg.comparator_kind == "oracle") {
    OracleConfig oc = cfg.oracle;
    oc.seed = cfg.judge_seed;
    return std::make_unique<OracleComparator>(oc);
  }
  return std::make_unique<RemoteComparator>(cfg.remote);
}

inline void stage_judge(const PipelineConfig& cfg) {
  try {
    const PipelinePaths paths(cfg.output_dir);
    const Corpus corpus = load_corpus(paths.corpus());
    const std::vector<PaperPair> pairs = read_pairs(paths.pairs(), corpus);
    std::unique_ptr<Comparator> comparator = make_comparator(cfg);
    const std::vector<PreferenceRecord> records = run_judgments(
        pairs, corpus, *comparator, cfg.parallelism, cfg.judge_seed, cfg.order_policy);
    ordered_json judge_cfg = {
        {"comparator", cfg.comparator_kind},
        {"order_policy", cfg.order_policy == OrderPolicy::randomized ? "randomized" : "canonical"},
        {"seed", cfg.judge_seed},
        {"parallelism", cfg.parallelism}};
    write_records(records, corpus, judge_cfg, paths.records());
  } catch (const Error& e) {
    if (e.code() == errc::stage_failure) throw;
    detail::stage_fail("judge", e);
  } catch (const std::exception& e) {
    detail::stage_fail("judge", e);
  }
}

inline LatentScores fit_scores(const PipelineConfig& cfg, const WinMatrix& w,
                               AggregationMethod method) {
  switch (method) {
    case AggregationMethod::bt_mle:
      return fit_bradley_terry_mle(w, cfg.bt_reg, cfg.bt_tol, cfg.bt_max_iter);
    case AggregationMethod::bt_map:
      return fit_bradley_terry_map(w, cfg.prior_sd, cfg.bt_tol, cfg.bt_max_iter);
    case AggregationMethod::bt_mcmc:
      return fit_bradley_terry_mcmc(w, cfg.prior_sd, cfg.mcmc_samples, cfg.mcmc_burn_in,
                                    cfg.aggregation_seed);
    case AggregationMethod::thurstone:
      return fit_thurstone_mosteller(w, cfg.bt_reg, cfg.bt_tol, cfg.bt_max_iter);
    default:
      return rank_by_centrality(w, method, cfg.centrality);
  }
}

inline void stage_aggregate(const PipelineConfig& cfg, const std::string& method_name) {
  try {
    const PipelinePaths paths(cfg.output_dir);
    const AggregationMethod method = aggregation_method_from_name(method_name);
    const Corpus corpus = load_corpus(paths.corpus());
    const std::vector<PreferenceRecord> records = read_records(paths.records(), corpus);
    const WinMatrix w = build_win_matrix(records, corpus.size());
    const LatentScores scores = fit_scores(cfg, w, method);
    const RankingResult ranking =
        apply_decision_threshold(rank_papers(scores), cfg.acceptance_rate);
    write_ranking(scores, ranking, corpus, cfg.acceptance_rate, paths.ranking(method_name));
  } catch (const Error& e) {
    if (e.code() == errc::stage_failure) throw;
    detail::stage_fail("aggregate", e);
  } catch (const std::exception& e) {
    detail::stage_fail("aggregate", e);
  }
}

namespace detail {

/// Ground-truth decisions: explicit labels when every paper has one, else a
/// threshold cut of the mean scores at the configured acceptance rate.
inline std::vector<Decision> truth_decisions(const Corpus& corpus, double acceptance_rate) {
  const int n = corpus.size();
  const bool all_labeled = std::all_of(corpus.papers.begin(), corpus.papers.end(),
                                       [](const Paper& p) { return p.decision.has_value(); });
  std::vector<Decision> truth(static_cast<std::size_t>(n), Decision::reject);
  if (all_labeled) {
    for (int k = 0; k < n; ++k) truth[static_cast<std::size_t>(k)] = *corpus.at(k).decision;
    return truth;
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double sa = corpus.at(a).mean_score.value();
    const double sb = corpus.at(b).mean_score.value();
    if (sa != sb) return sa > sb;
    return a < b;
  });
  const int accepts = std::clamp(
      static_cast<int>(std::floor(acceptance_rate * static_cast<double>(n) + 0.5)), 0, n);
  for (int k = 0; k < accepts; ++k)
    truth[static_cast<std::size_t>(order[k])] = Decision::accept;
  return truth;
}

inline ordered_json decision_metrics_json(const DecisionMetrics& m) {
  return {{"accuracy", m.accuracy}, {"f1", m.f1},         {"f1_weighted", m.f1_weighted},
          {"auc", m.auc},           {"kappa", m.kappa},   {"jaccard", m.jaccard}};
}

inline ordered_json ranking_metrics_json(const RankingMetrics& m) {
  ordered_json map_at = ordered_json::object(), ndcg_at = ordered_json::object();
  for (const auto& [k, v] : m.map_at) map_at[std::to_string(k)] = v;
  for (const auto& [k, v] : m.ndcg_at) ndcg_at[std::to_string(k)] = v;
  return {{"spearman_rho", m.spearman_rho},
          {"kendall_tau", m.kendall_tau},
          {"pairwise_accuracy", m.pairwise_accuracy},
          {"map_at", map_at},
          {"ndcg_at", ndcg_at}};
}

}  // namespace detail

/// Metrics for one ranking artifact against corpus ground truth.
inline ordered_json evaluate_ranking(const PipelineConfig& cfg, const Corpus& corpus,
                                     const RankingArtifact& art) {
  const int n = corpus.size();
  if (static_cast<int>(art.ids.size()) != n)
    throw Error(errc::length_mismatch, "ranking artifact size differs from corpus");
  const ValidationReport vr = validate_corpus(corpus, /*require_scores=*/true);
  if (!vr.usable())
    throw Error(errc::missing_score, "evaluation needs mean_score on every paper");

  std::vector<int> pred_order;
  pred_order.reserve(art.ids.size());
  std::vector<Decision> pred_by_item(static_cast<std::size_t>(n), Decision::reject);
  std::vector<double> theta_by_item(static_cast<std::size_t>(n), 0.0);
  for (std::size_t k = 0; k < art.ids.size(); ++k) {
    const int item = corpus.position_of(art.ids[k]);
    pred_order.push_back(item);
    theta_by_item[static_cast<std::size_t>(item)] = art.theta[k];
    if (art.decisions[k]) pred_by_item[static_cast<std::size_t>(item)] = *art.decisions[k];
  }

  const std::vector<Decision> truth = detail::truth_decisions(corpus, cfg.acceptance_rate);
  std::vector<double> true_scores(static_cast<std::size_t>(n));
  std::vector<int> relevant(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    true_scores[static_cast<std::size_t>(k)] = corpus.at(k).mean_score.value();
    relevant[static_cast<std::size_t>(k)] = truth[static_cast<std::size_t>(k)] == Decision::accept;
  }

  std::set<int> ks;
  for (int k : cfg.metric_ks) ks.insert(k == 0 ? n : std::min(k, n));
  const std::vector<int> ks_vec(ks.begin(), ks.end());

  const DecisionMetrics dm = decision_metrics(pred_by_item, truth, theta_by_item);
  const RankingMetrics rm =
      ranking_metrics(pred_order, true_scores, relevant, ks_vec, cfg.graded_ndcg);

  return {{"decision", detail::decision_metrics_json(dm)},
          {"ranking", detail::ranking_metrics_json(rm)},
          {"diagnostics", art.diagnostics}};
}

inline void stage_evaluate(const PipelineConfig& cfg,
                           std::vector<std::string> ranking_paths = {}) {
  try {
    const PipelinePaths paths(cfg.output_dir);
    const Corpus corpus = load_corpus(paths.corpus());

    if (ranking_paths.empty()) {
      for (const auto& entry : std::filesystem::directory_iterator(paths.out)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("ranking_", 0) == 0 && name.size() > 14 &&
            name.substr(name.size() - 6) == ".jsonl")
          ranking_paths.push_back(entry.path().string());
      }
      std::sort(ranking_paths.begin(), ranking_paths.end());
      if (ranking_paths.empty())
        throw Error(errc::missing_artifact, "no ranking artifacts in " + paths.out.string());
    }

    ordered_json methods = ordered_json::object();
    const RankingArtifact* primary = nullptr;
    std::vector<RankingArtifact> artifacts;
    artifacts.reserve(ranking_paths.size());
    for (const std::string& path : ranking_paths) artifacts.push_back(read_ranking(path));
    for (const RankingArtifact& art : artifacts) {
      methods[art.method] = evaluate_ranking(cfg, corpus, art);
      if (art.method == cfg.aggregation_method) primary = &art;
    }
    if (primary == nullptr) primary = &artifacts.front();

    ordered_json out = {{"n", corpus.size()},
                        {"acceptance_rate", cfg.acceptance_rate},
                        {"methods", methods}};

    // positional bias needs the judged records plus the primary ranking
    const std::vector<PreferenceRecord> records =
        read_records(paths.records(), corpus);
    RankingResult primary_ranking;
    primary_ranking.order.reserve(primary->ids.size());
    primary_ranking.percentile = primary->percentile;
    for (const std::string& id : primary->ids)
      primary_ranking.order.push_back(corpus.position_of(id));
    const PositionalBias bias = positional_bias_diagnostic(records, &primary_ranking);
    ordered_json bias_json = {{"first_win_rate", bias.first_win_rate}};
    if (bias.rho_position_outcome)
      bias_json["rho_position_outcome"] = *bias.rho_position_outcome;
    out["positional_bias"] = bias_json;

    // group-wise Mann-Whitney U tests on percentiles, when groups exist
    std::map<std::string, std::vector<double>> groups;
    const std::vector<double> pct = primary_ranking.percentile_by_item();
    for (int k = 0; k < corpus.size(); ++k)
      if (corpus.at(k).group) groups[*corpus.at(k).group].push_back(pct[static_cast<std::size_t>(k)]);
    ordered_json utests = ordered_json::array();
    for (auto it_a = groups.begin(); it_a != groups.end(); ++it_a) {
      for (auto it_b = std::next(it_a); it_b != groups.end(); ++it_b) {
        const UTestResult u = mann_whitney_u(it_a->second, it_b->second);
        utests.push_back({{"group1", it_a->first},
                          {"group2", it_b->first},
                          {"median1", u.medians.first},
                          {"median2", u.medians.second},
                          {"diff", u.diff},
                          {"u", u.u},
                          {"z", u.z},
                          {"p_value", u.p_value}});
      }
    }
    if (!utests.empty()) out["utests"] = utests;

    detail::write_json_file(out, paths.metrics());
  } catch (const Error& e) {
    if (e.code() == errc::stage_failure) throw;
    detail::stage_fail("evaluate", e);
  } catch (const std::exception& e) {
    detail::stage_fail("evaluate", e);
  }
}

namespace detail {

inline std::string format_double(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline void stage_report(const PipelineConfig& cfg) {
  try {
    const PipelinePaths paths(cfg.output_dir);
    const Corpus corpus = load_corpus(paths.corpus());
    const ordered_json metrics = detail::read_json_file(paths.metrics());
    const std::vector<PreferenceRecord> records = read_records(paths.records(), corpus);
    const RankingArtifact primary = read_ranking(paths.ranking(cfg.aggregation_method));

    // per-paper win statistics over judged pairs
    std::vector<int> wins(static_cast<std::size_t>(corpus.size()), 0);
    std::vector<int> judged(static_cast<std::size_t>(corpus.size()), 0);
    for (const PreferenceRecord& r : records) {
      if (r.failed) continue;
      ++judged[static_cast<std::size_t>(r.pair.i)];
      ++judged[static_cast<std::size_t>(r.pair.j)];
      ++wins[static_cast<std::size_t>(r.chosen)];
    }

    ordered_json papers = ordered_json::array();
    for (std::size_t k = 0; k < primary.ids.size(); ++k) {
      const int item = corpus.position_of(primary.ids[k]);
      const int g = judged[static_cast<std::size_t>(item)];
      ordered_json row = {{"id", primary.ids[k]},
                          {"rank", static_cast<int>(k)},
                          {"percentile", primary.percentile[k]},
                          {"theta", primary.theta[k]},
                          {"judged_pairs", g},
                          {"wins", wins[static_cast<std::size_t>(item)]},
                          {"win_rate", g > 0 ? static_cast<double>(wins[static_cast<std::size_t>(item)]) / g
                                             : 0.0}};
      if (primary.decisions[k]) row["decision"] = decision_name(*primary.decisions[k]);
      papers.push_back(row);
    }

    ordered_json report = {{"method", primary.method},
                           {"metrics", metrics},
                           {"papers", papers}};
    detail::write_json_file(report, paths.report_json());

    // human-readable tables
    std::ofstream md(paths.report_md(), std::ios::binary);
    if (!md) throw Error(errc::io_failure, "cannot write " + paths.report_md());
    md << "# Ranking report\n\n";
    md << "- papers: " << corpus.size() << "\n";
    md << "- primary aggregation method: " << primary.method << "\n";
    md << "- acceptance rate: " << cfg.acceptance_rate << "\n\n";

    const ordered_json& methods = metrics.at("methods");
    md << "## Metric summary\n\n";
    md << "| Method | Accuracy | F1 | F1w | AUC | Kappa | Jaccard | Spearman | Kendall | Pairwise |\n";
    md << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& [name, m] : methods.items()) {
      const ordered_json& d = m.at("decision");
      const ordered_json& r = m.at("ranking");
      md << "| " << name;
      for (const char* key : {"accuracy", "f1", "f1_weighted", "auc", "kappa", "jaccard"})
        md << " | " << detail::format_double(d.at(key).get<double>());
      for (const char* key : {"spearman_rho", "kendall_tau", "pairwise_accuracy"})
        md << " | " << detail::format_double(r.at(key).get<double>());
      md << " |\n";
    }
    md << "\n";

    if (methods.size() > 1) {
      md << "## Aggregator comparison (MAP@k / NDCG@k)\n\n";
      md << "| Method |";
      const ordered_json& first_map = methods.begin().value().at("ranking").at("map_at");
      for (const auto& [k, v] : first_map.items()) md << " MAP@" << k << " |";
      for (const auto& [k, v] : first_map.items()) md << " NDCG@" << k << " |";
      md << "\n|---|";
      for (std::size_t c = 0; c < 2 * first_map.size(); ++c) md << "---|";
      md << "\n";
      for (const auto& [name, m] : methods.items()) {
        md << "| " << name << " |";
        for (const auto& [k, v] : m.at("ranking").at("map_at").items())
          md << " " << detail::format_double(v.get<double>()) << " |";
        for (const auto& [k, v] : m.at("ranking").at("ndcg_at").items())
          md << " " << detail::format_double(v.get<double>()) << " |";
        md << "\n";
      }
      md << "\n";
    }

    if (metrics.contains("utests")) {
      md << "## Group comparisons (Mann-Whitney U)\n\n";
      md << "| Group1 | Group2 | Median1 | Median2 | Diff. | U | Z | p-value |\n";
      md << "|---|---|---|---|---|---|---|---|\n";
      for (const ordered_json& u : metrics.at("utests")) {
        md << "| " << u.at("group1").get<std::string>() << " | "
           << u.at("group2").get<std::string>() << " | "
           << detail::format_double(u.at("median1").get<double>(), 1) << " | "
           << detail::format_double(u.at("median2").get<double>(), 1) << " | "
           << detail::format_double(u.at("diff").get<double>(), 1) << " | "
           << detail::format_double(u.at("u").get<double>(), 1) << " | "
           << detail::format_double(u.at("z").get<double>(), 3) << " | "
           << detail::format_double(u.at("p_value").get<double>(), 3) << " |\n";
      }
      md << "\n";
    }

    md << "## Per-paper statistics\n\n";
    md << "| Rank | ID | Percentile | Theta | Decision | Judged | Wins | Win rate |\n";
    md << "|---|---|---|---|---|---|---|---|\n";
    for (const ordered_json& row : papers) {
      md << "| " << row.at("rank").get<int>() << " | " << row.at("id").get<std::string>()
         << " | " << detail::format_double(row.at("percentile").get<double>(), 1) << " | "
         << detail::format_double(row.at("theta").get<double>()) << " | "
         << row.value("decision", std::string("-")) << " | "
         << row.at("judged_pairs").get<int>() << " | " << row.at("wins").get<int>() << " | "
         << detail::format_double(row.at("win_rate").get<double>(), 3) << " |\n";
    }
  } catch (const Error& e) {
    if (e.code() == errc::stage_failure) throw;
    detail::stage_fail("report", e);
  } catch (const std::exception& e) {
    detail::stage_fail("report", e);
  }
}

/// End-to-end run. With resume, stages up to and including judge are skipped
/// when their artifacts already exist; the deterministic downstream stages
/// (aggregate, evaluate, report) are always recomputed.
inline RunManifest run_pipeline(const PipelineConfig& cfg, bool resume = false) {
  const PipelinePaths paths(cfg.output_dir);
  RunManifest manifest;
  manifest.config = cfg.to_json();
  manifest.started = detail::iso_timestamp();

  auto exists = [](const std::string& p) { return std::filesystem::exists(p); };

  if (!(resume && exists(paths.corpus()))) stage_ingest(cfg);
  if (!(resume && exists(paths.graph()))) stage_graph(cfg);
  if (!(resume && exists(paths.pairs()))) stage_sample(cfg);
  if (!(resume && exists(paths.records()))) stage_judge(cfg);
  stage_aggregate(cfg, cfg.aggregation_method);
  stage_evaluate(cfg);
  stage_report(cfg);

  manifest.finished = detail::iso_timestamp();
  manifest.artifacts["corpus"] = "corpus.jsonl";
  manifest.artifacts["validation"] = "validation.json";
  if (exists(paths.train_corpus())) manifest.artifacts["train_corpus"] = "train_corpus.jsonl";
  manifest.artifacts["graph"] = "graph.jsonl";
  if (exists(paths.train_graph())) manifest.artifacts["train_graph"] = "train_graph.jsonl";
  manifest.artifacts["pairs"] = "pairs.jsonl";
  if (exists(paths.train_pairs())) manifest.artifacts["train_pairs"] = "train_pairs.jsonl";
  manifest.artifacts["records"] = "records.jsonl";
  manifest.artifacts["ranking"] = "ranking_" + cfg.aggregation_method + ".jsonl";
  manifest.artifacts["metrics"] = "metrics.json";
  manifest.artifacts["report_json"] = "report.json";
  manifest.artifacts["report_md"] = "report.md";
  manifest.seeds = {{"inference", cfg.inference.seed},
                    {"judge", cfg.judge_seed},
                    {"aggregation", cfg.aggregation_seed}};
  manifest.versions = {{"cnpe", kToolVersion}, {"schema", kSchemaVersion}};
  detail::write_json_file(manifest.to_json(), paths.manifest());
  return manifest;
}

}  // namespace cnpe
