// cnpe: comparison-native paper evaluation pipeline.
// Stages: ingest -> graph -> sample -> judge -> aggregate -> evaluate -> report,
// each resumable from its persisted artifacts.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cnpe/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<double> alpha;
  std::optional<std::string> method;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  std::optional<std::string> output_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "pipeline config file (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--alpha", args.alpha, "override inference pair fraction");
  cmd->add_option("--method", args.method, "override aggregation method");
  cmd->add_option("--seed", args.seed, "override the comparator/order seed");
  cmd->add_option("--parallelism", args.parallelism, "override judge worker count");
  cmd->add_option("--output-dir", args.output_dir, "override output directory");
}

cnpe::PipelineConfig load_config(const CommonArgs& args) {
  cnpe::PipelineConfig cfg = cnpe::PipelineConfig::from_file(args.config_path);
  if (args.alpha) cfg.inference.alpha = *args.alpha;
  if (args.method) cfg.aggregation_method = *args.method;
  if (args.seed) cfg.judge_seed = *args.seed;
  if (args.parallelism) cfg.parallelism = *args.parallelism;
  if (args.output_dir) cfg.output_dir = *args.output_dir;
  cnpe::aggregation_method_from_name(cfg.aggregation_method);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cnpe: pairwise comparison ranking pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  bool resume = false;
  std::vector<std::string> ranking_files;

  CLI::App* run = app.add_subcommand("run", "run the whole pipeline");
  add_common(run, args);
  run->add_flag("--resume", resume, "reuse existing ingest/graph/sample/judge artifacts");

  CLI::App* ingest = app.add_subcommand("ingest", "load, validate and persist the corpus");
  add_common(ingest, args);
  CLI::App* graph = app.add_subcommand("graph", "build the similarity graph");
  add_common(graph, args);
  CLI::App* sample = app.add_subcommand("sample", "build inference (and training) pair sets");
  add_common(sample, args);
  CLI::App* judge = app.add_subcommand("judge", "judge pairs with the configured comparator");
  add_common(judge, args);
  CLI::App* aggregate = app.add_subcommand("aggregate", "fit latent scores and rank");
  add_common(aggregate, args);
  CLI::App* evaluate = app.add_subcommand("evaluate", "compute metrics against ground truth");
  add_common(evaluate, args);
  evaluate->add_option("--rankings", ranking_files,
                       "specific ranking artifacts to evaluate (default: all present)");
  CLI::App* report = app.add_subcommand("report", "emit the static report bundle");
  add_common(report, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors exit 1, --help exits 0
  }

  try {
    const cnpe::PipelineConfig cfg = load_config(args);
    if (run->parsed()) {
      const cnpe::RunManifest manifest = cnpe::run_pipeline(cfg, resume);
      std::cout << "run complete; manifest at "
                << cnpe::PipelinePaths(cfg.output_dir).manifest() << "\n";
      (void)manifest;
    } else if (ingest->parsed()) {
      cnpe::stage_ingest(cfg);
    } else if (graph->parsed()) {
      cnpe::stage_graph(cfg);
    } else if (sample->parsed()) {
      cnpe::stage_sample(cfg);
    } else if (judge->parsed()) {
      cnpe::stage_judge(cfg);
    } else if (aggregate->parsed()) {
      cnpe::stage_aggregate(cfg, cfg.aggregation_method);
    } else if (evaluate->parsed()) {
      cnpe::stage_evaluate(cfg, ranking_files);
    } else if (report->parsed()) {
      cnpe::stage_report(cfg);
    }
  } catch (const cnpe::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == cnpe::errc::config_error ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
