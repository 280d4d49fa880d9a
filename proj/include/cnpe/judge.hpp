#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cnpe/corpus.hpp"
#include "cnpe/error.hpp"
#include "cnpe/rng.hpp"
#include "cnpe/sampler.hpp"

namespace cnpe {

/// One judged comparison. chosen/presented_first are paper positions;
/// y_hat = 1 iff the canonical i of the pair was chosen, regardless of
/// presentation order.
struct PreferenceRecord {
  PaperPair pair;
  int presented_first = -1;
  int chosen = -1;
  int y_hat = -1;
  std::optional<std::string> raw_output;
  std::optional<std::string> review_i;
  std::optional<std::string> review_j;
  std::optional<long long> latency_ms;
  bool failed = false;
  std::string error;
};

/// Simulated comparator: picks the first-presented paper with probability
/// sigmoid(beta * (s_first - s_second) + position_bias).
struct OracleConfig {
  double beta = 1.0;
  double position_bias = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (beta < 0.0) throw Error(errc::invalid_argument, "beta must be >= 0");
  }
};

struct RewardConfig {
  double gamma = 5.0;

  void validate() const {
    if (gamma <= 0.0) throw Error(errc::invalid_argument, "gamma must be positive");
  }
};

enum class OrderPolicy { randomized, canonical };

enum class PromptChoice { paper_1, paper_2 };

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline constexpr std::string_view kJudgePromptTemplate =
    R"(Your response must be about 200 words in length.
Please act as an impartial judge and evaluate the quality of the following two papers. As the area chair for a top ML conference, you can only select one paper. Start with a brief meta-review / reasoning of the pros and cons for each paper (two sentences), and then provide your choice in a binary format. Start with a brief meta-review / reasoning of the pros and cons for each paper, focusing on novelty, significance, clarity, methodology, and practical implications. Be very critical and do not be biased by what the author claimed. Finally, provide your choice in a binary format.

Please provide your analysis in JSON format.

### Paper 1:
Submission Title: {title_1}
```
Abstract: {abstract_1}
```

### Paper 2:
Submission Title: {title_2}
```
Abstract: {abstract_2}
```

Your JSON output should look like this:
{
  "paper_1_review": "Your meta-review and reasoning for paper 1",
  "paper_2_review": "Your meta-review and reasoning for paper 2",
  "chosen_paper": "paper_1 or paper_2"
}
)";

inline std::string render_prompt(const Paper& first, const Paper& second) {
  for (const Paper* p : {&first, &second}) {
    if (p->title.empty()) throw Error(errc::missing_field, p->id + ": title");
    if (p->abstract.empty()) throw Error(errc::missing_field, p->id + ": abstract");
  }
  std::string prompt(kJudgePromptTemplate);
  auto fill = [&prompt](std::string_view placeholder, const std::string& value) {
    const std::size_t pos = prompt.find(placeholder);
    prompt.replace(pos, placeholder.size(), value);
  };
  fill("{title_1}", first.title);
  fill("{abstract_1}", first.abstract);
  fill("{title_2}", second.title);
  fill("{abstract_2}", second.abstract);
  return prompt;
}

inline std::string render_prompt(const PaperPair& pair, const Corpus& corpus,
                                 bool canonical_i_first) {
  const Paper& first = corpus.at(canonical_i_first ? pair.i : pair.j);
  const Paper& second = corpus.at(canonical_i_first ? pair.j : pair.i);
  return render_prompt(first, second);
}

struct ParsedJudgment {
  PromptChoice choice = PromptChoice::paper_1;
  std::optional<std::string> review_1;
  std::optional<std::string> review_2;
};

namespace detail {

/// Byte range of the first balanced {...} block starting at `from`,
/// respecting string literals and escapes.
inline std::optional<std::pair<std::size_t, std::size_t>> find_json_object(
    std::string_view text, std::size_t from) {
  const std::size_t open = text.find('{', from);
  if (open == std::string_view::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  for (std::size_t k = open; k < text.size(); ++k) {
    const char c = text[k];
    if (in_string) {
      if (c == '\\') ++k;
      else if (c == '"') in_string = false;
    } else if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return std::make_pair(open, k + 1);
    }
  }
  return std::nullopt;
}

inline std::string normalize_choice(std::string value) {
  std::string out;
  for (char c : value) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty() && out.back() != '_') out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

}  // namespace detail

/// Extracts the chosen_paper value from the first well-formed JSON object in
/// the raw judge output, tolerating surrounding prose and code fences.
inline ParsedJudgment parse_judgment_full(std::string_view raw) {
  std::size_t from = 0;
  while (true) {
    const auto range = detail::find_json_object(raw, from);
    if (!range) throw Error(errc::unparseable_judgment, "no JSON object in judge output");
    const std::string_view candidate = raw.substr(range->first, range->second - range->first);
    const ordered_json j = ordered_json::parse(candidate, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("chosen_paper")) {
      from = range->first + 1;
      continue;
    }
    if (!j["chosen_paper"].is_string())
      throw Error(errc::unparseable_judgment, "chosen_paper is not a string");
    const std::string value = detail::normalize_choice(j["chosen_paper"].get<std::string>());
    ParsedJudgment parsed;
    if (value == "paper_1") parsed.choice = PromptChoice::paper_1;
    else if (value == "paper_2") parsed.choice = PromptChoice::paper_2;
    else throw Error(errc::unparseable_judgment, "invalid chosen_paper value \"" + value + "\"");
    if (j.contains("paper_1_review") && j["paper_1_review"].is_string())
      parsed.review_1 = j["paper_1_review"].get<std::string>();
    if (j.contains("paper_2_review") && j["paper_2_review"].is_string())
      parsed.review_2 = j["paper_2_review"].get<std::string>();
    return parsed;
  }
}

inline PromptChoice parse_judgment(std::string_view raw) {
  return parse_judgment_full(raw).choice;
}

/// Returns true when the first-presented paper is chosen.
inline bool simulate_judgment(const Paper& first, const Paper& second,
                              const OracleConfig& config, SplitMix64& rng) {
  if (!first.mean_score) throw Error(errc::missing_score, first.id);
  if (!second.mean_score) throw Error(errc::missing_score, second.id);
  const double p = sigmoid(config.beta * (*first.mean_score - *second.mean_score) +
                           config.position_bias);
  return rng.next_double() < p;
}

inline bool simulate_judgment(const PaperPair& pair, const Corpus& corpus,
                              bool canonical_i_first, const OracleConfig& config,
                              SplitMix64& rng) {
  const Paper& first = corpus.at(canonical_i_first ? pair.i : pair.j);
  const Paper& second = corpus.at(canonical_i_first ? pair.j : pair.i);
  return simulate_judgment(first, second, config, rng);
}

struct JudgeOutcome {
  bool first_chosen = false;
  std::optional<std::string> raw_output;
  std::optional<std::string> review_first;
  std::optional<std::string> review_second;
  std::optional<long long> latency_ms;
};

/// Pluggable pairwise judge. Implementations may throw comparator-failure /
/// unparseable-judgment; compare() retries up to retry_budget() times.
class Comparator {
 public:
  virtual ~Comparator() = default;
  virtual JudgeOutcome judge(const Paper& first, const Paper& second,
                             SplitMix64& rng) = 0;
  virtual int retry_budget() const { return 0; }
  virtual int backoff_ms(int attempt) const { (void)attempt; return 0; }
};

class OracleComparator : public Comparator {
 public:
  explicit OracleComparator(OracleConfig config) : config_(config) {
    config_.validate();
  }

  JudgeOutcome judge(const Paper& first, const Paper& second,
                     SplitMix64& rng) override {
    JudgeOutcome out;
    out.first_chosen = simulate_judgment(first, second, config_, rng);
    return out;
  }

  const OracleConfig& config() const { return config_; }

 private:
  OracleConfig config_;
};

/// Judges one pair. Presentation order is drawn first (so retries keep the
/// same order), then the comparator's choice is mapped back to canonical
/// y_hat.
inline PreferenceRecord compare(const PaperPair& pair, const Corpus& corpus,
                                Comparator& comparator, OrderPolicy order_policy,
                                SplitMix64& rng) {
  PreferenceRecord record;
  record.pair = pair;
  const bool i_first =
      order_policy == OrderPolicy::canonical ? true : !rng.next_bool();
  record.presented_first = i_first ? pair.i : pair.j;
  const Paper& first = corpus.at(i_first ? pair.i : pair.j);
  const Paper& second = corpus.at(i_first ? pair.j : pair.i);

  const int attempts = 1 + comparator.retry_budget();
  for (int attempt = 0; attempt < attempts; ++attempt) {
    try {
      const JudgeOutcome outcome = comparator.judge(first, second, rng);
      record.chosen = outcome.first_chosen ? record.presented_first
                                           : (i_first ? pair.j : pair.i);
      record.y_hat = record.chosen == pair.i ? 1 : 0;
      record.raw_output = outcome.raw_output;
      record.review_i = i_first ? outcome.review_first : outcome.review_second;
      record.review_j = i_first ? outcome.review_second : outcome.review_first;
      record.latency_ms = outcome.latency_ms;
      return record;
    } catch (const Error&) {
      if (attempt + 1 >= attempts) throw;
      const int wait = comparator.backoff_ms(attempt);
      if (wait > 0) std::this_thread::sleep_for(std::chrono::milliseconds(wait));
    }
  }
  throw Error(errc::comparator_failure, "unreachable");
}

/// Judges every pair with bounded parallelism. Each pair gets its own random
/// stream derived from (seed, index), so output is byte-identical across
/// worker counts. Failed pairs keep their slot with a failure marker.
inline std::vector<PreferenceRecord> run_judgments(std::span<const PaperPair> pairs,
                                                   const Corpus& corpus,
                                                   Comparator& comparator,
                                                   int parallelism,
                                                   std::uint64_t seed,
                                                   OrderPolicy order_policy = OrderPolicy::randomized) {
  if (pairs.empty()) throw Error(errc::invalid_argument, "no pairs to judge");
  if (parallelism < 1) throw Error(errc::invalid_argument, "parallelism must be >= 1");

  std::vector<PreferenceRecord> records(pairs.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t k = cursor.fetch_add(1);
      if (k >= pairs.size()) return;
      SplitMix64 rng(derive_stream_seed(seed, k));
      try {
        records[k] = compare(pairs[k], corpus, comparator, order_policy, rng);
      } catch (const Error& e) {
        records[k].pair = pairs[k];
        records[k].failed = true;
        records[k].error = e.what();
      }
    }
  };

  const int workers = std::min<int>(parallelism, static_cast<int>(pairs.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }
  return records;
}

/// y = 1 iff s_i > s_j; undefined at equal scores.
inline int ground_truth_label(const PaperPair& pair, const Corpus& corpus) {
  const Paper& pi = corpus.at(pair.i);
  const Paper& pj = corpus.at(pair.j);
  if (!pi.mean_score) throw Error(errc::missing_score, pi.id);
  if (!pj.mean_score) throw Error(errc::missing_score, pj.id);
  if (*pi.mean_score == *pj.mean_score)
    throw Error(errc::tied_scores, pi.id + " vs " + pj.id);
  return *pi.mean_score > *pj.mean_score ? 1 : 0;
}

/// gamma on a correct comparison, zero otherwise.
inline double compute_reward(int y, int y_hat, const RewardConfig& config) {
  config.validate();
  return y == y_hat ? config.gamma : 0.0;
}

/// Per-rollout advantage: reward minus the group mean, with no
/// standard-deviation normalization.
inline std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.empty()) throw Error(errc::empty_group, "no rewards");
  const double mean =
      std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back(r - mean);
  return out;
}

}  // namespace cnpe
