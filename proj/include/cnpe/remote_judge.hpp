#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cnpe/error.hpp"
#include "cnpe/judge.hpp"

namespace cnpe {

/// OpenAI-compatible chat endpoint. The auth token is never written to any
/// artifact; it comes from config or the CNPE_JUDGE_TOKEN environment
/// variable.
struct RemoteJudgeConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:8080
  std::string path = "/v1/chat/completions";
  std::string model;
  int timeout_ms = 30000;
  int retries = 2;
  double temperature = 0.0;
  int max_tokens = 512;
  std::string api_token;  // falls back to CNPE_JUDGE_TOKEN

  void validate() const {
    if (endpoint.empty()) throw Error(errc::config_error, "remote judge endpoint is empty");
    if (retries < 0) throw Error(errc::config_error, "retries must be >= 0");
    if (timeout_ms <= 0) throw Error(errc::config_error, "timeout_ms must be positive");
  }
};

class RemoteComparator : public Comparator {
 public:
  explicit RemoteComparator(RemoteJudgeConfig config) : config_(std::move(config)) {
    config_.validate();
    if (config_.api_token.empty()) {
      if (const char* env = std::getenv("CNPE_JUDGE_TOKEN")) config_.api_token = env;
    }
  }

  JudgeOutcome judge(const Paper& first, const Paper& second, SplitMix64& rng) override {
    (void)rng;  // remote judges are not driven by the local stream
    const std::string prompt = render_prompt(first, second);

    nlohmann::json payload = {
        {"model", config_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", config_.temperature},
        {"max_tokens", config_.max_tokens},
    };

    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(0, config_.timeout_ms * 1000);
    client.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
    httplib::Headers headers;
    if (!config_.api_token.empty())
      headers.emplace("Authorization", "Bearer " + config_.api_token);

    const auto started = std::chrono::steady_clock::now();
    const httplib::Result res =
        client.Post(config_.path, headers, payload.dump(), "application/json");
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - started)
                             .count();

    if (!res)
      throw Error(errc::comparator_failure,
                  "transport error: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error(errc::comparator_failure,
                  "judge endpoint returned HTTP " + std::to_string(res->status));

    const nlohmann::json body = nlohmann::json::parse(res->body, nullptr, false);
    if (body.is_discarded())
      throw Error(errc::comparator_failure, "judge endpoint returned invalid JSON");
    std::string text;
    try {
      text = body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw Error(errc::comparator_failure, "judge response missing choices[0].message.content");
    }

    const ParsedJudgment parsed = parse_judgment_full(text);
    JudgeOutcome out;
    out.first_chosen = parsed.choice == PromptChoice::paper_1;
    out.raw_output = text;
    out.review_first = parsed.review_1;
    out.review_second = parsed.review_2;
    out.latency_ms = elapsed;
    return out;
  }

  int retry_budget() const override { return config_.retries; }

  int backoff_ms(int attempt) const override { return 250 * (1 << attempt); }

 private:
  RemoteJudgeConfig config_;
};

}  // namespace cnpe
