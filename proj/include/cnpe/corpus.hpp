#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cnpe/error.hpp"

namespace cnpe {

using ordered_json = nlohmann::ordered_json;

enum class Decision { accept, reject };

inline const char* decision_name(Decision d) {
  return d == Decision::accept ? "accept" : "reject";
}

/// One ranked item. Only titles and abstracts feed the comparison pipeline;
/// mean_score / decision / group are ground truth for training and evaluation.
struct Paper {
  std::string id;
  std::string title;
  std::string abstract;
  std::optional<std::string> venue;
  std::optional<int> year;
  std::optional<double> mean_score;
  std::optional<Decision> decision;
  std::optional<std::string> group;
  // Unknown input fields, preserved verbatim so records survive round-trips.
  ordered_json extra = ordered_json::object();
};

struct Corpus {
  std::vector<Paper> papers;
  std::unordered_map<std::string, int> index;  // id -> dense position

  int size() const { return static_cast<int>(papers.size()); }

  const Paper& at(int pos) const { return papers.at(static_cast<std::size_t>(pos)); }

  int position_of(const std::string& id) const {
    auto it = index.find(id);
    if (it == index.end()) throw Error(errc::unknown_id, id);
    return it->second;
  }

  void add(Paper p) {
    if (index.count(p.id)) throw Error(errc::duplicate_id, p.id);
    index.emplace(p.id, static_cast<int>(papers.size()));
    papers.push_back(std::move(p));
  }
};

struct ValidationIssue {
  std::string id;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;
  double score_coverage = 0.0;

  bool usable() const { return errors.empty(); }
};

enum class CorpusFormat { jsonl };

namespace detail {

inline Paper paper_from_json(const ordered_json& j, int line_no) {
  auto fail = [&](const std::string& msg) -> Error {
    return Error(errc::parse_failure,
                 "line " + std::to_string(line_no) + ": " + msg);
  };
  if (!j.is_object()) throw fail("record is not an object");

  Paper p;
  for (const auto& [key, value] : j.items()) {
    if (key == "id") {
      if (!value.is_string()) throw fail("id must be a string");
      p.id = value.get<std::string>();
    } else if (key == "title") {
      if (!value.is_string()) throw fail("title must be a string");
      p.title = value.get<std::string>();
    } else if (key == "abstract") {
      if (!value.is_string()) throw fail("abstract must be a string");
      p.abstract = value.get<std::string>();
    } else if (key == "venue") {
      if (value.is_null()) continue;
      if (!value.is_string()) throw fail("venue must be a string");
      p.venue = value.get<std::string>();
    } else if (key == "year") {
      if (value.is_null()) continue;
      if (!value.is_number_integer()) throw fail("year must be an integer");
      p.year = value.get<int>();
    } else if (key == "mean_score") {
      if (value.is_null()) continue;
      if (!value.is_number()) throw fail("mean_score must be a number");
      const double s = value.get<double>();
      if (!std::isfinite(s)) throw fail("mean_score must be finite");
      p.mean_score = s;
    } else if (key == "decision") {
      if (value.is_null()) continue;
      if (!value.is_string()) throw fail("decision must be a string");
      const std::string d = value.get<std::string>();
      if (d == "accept") p.decision = Decision::accept;
      else if (d == "reject") p.decision = Decision::reject;
      else throw fail("decision must be accept or reject, got \"" + d + "\"");
    } else if (key == "group") {
      if (value.is_null()) continue;
      if (!value.is_string()) throw fail("group must be a string");
      p.group = value.get<std::string>();
    } else {
      p.extra[key] = value;
    }
  }
  if (!j.contains("id")) throw fail("missing required key id");
  if (p.id.empty()) throw fail("id must be nonempty");
  if (!j.contains("title")) throw fail("missing required key title");
  if (!j.contains("abstract")) throw fail("missing required key abstract");
  return p;
}

}  // namespace detail

inline ordered_json paper_to_json(const Paper& p) {
  ordered_json j;
  j["id"] = p.id;
  j["title"] = p.title;
  j["abstract"] = p.abstract;
  if (p.venue) j["venue"] = *p.venue;
  if (p.year) j["year"] = *p.year;
  if (p.mean_score) j["mean_score"] = *p.mean_score;
  if (p.decision) j["decision"] = decision_name(*p.decision);
  if (p.group) j["group"] = *p.group;
  for (const auto& [key, value] : p.extra.items()) j[key] = value;
  return j;
}

inline Corpus load_corpus_stream(std::istream& in) {
  Corpus corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error(errc::parse_failure,
                  "line " + std::to_string(line_no) + ": invalid record");
    corpus.add(detail::paper_from_json(j, line_no));
  }
  return corpus;
}

/// Loads one record per line. File order is preserved; duplicate ids reject
/// the whole file.
inline Corpus load_corpus(const std::string& path,
                          CorpusFormat format = CorpusFormat::jsonl) {
  (void)format;  // jsonl is the only wire format
  std::ifstream in(path);
  if (!in) throw Error(errc::io_failure, "cannot open " + path);
  return load_corpus_stream(in);
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(errc::io_failure, "cannot write " + path);
  for (const Paper& p : corpus.papers) out << paper_to_json(p).dump() << '\n';
}

inline std::string serialize_corpus(const Corpus& corpus) {
  std::ostringstream out;
  for (const Paper& p : corpus.papers) out << paper_to_json(p).dump() << '\n';
  return out.str();
}

/// Pure report; never throws. Missing scores are errors only when
/// require_scores is set, empty titles/abstracts always are.
inline ValidationReport validate_corpus(const Corpus& corpus, bool require_scores) {
  ValidationReport report;
  if (corpus.size() < 2)
    report.errors.push_back({"", "corpus needs at least 2 papers, has " +
                                     std::to_string(corpus.size())});
  int scored = 0;
  for (const Paper& p : corpus.papers) {
    if (p.title.empty()) report.errors.push_back({p.id, "empty title"});
    if (p.abstract.empty()) report.errors.push_back({p.id, "empty abstract"});
    if (p.mean_score) {
      ++scored;
    } else if (require_scores) {
      report.errors.push_back({p.id, "missing mean_score"});
    } else {
      report.warnings.push_back({p.id, "missing mean_score"});
    }
  }
  report.score_coverage =
      corpus.size() > 0 ? static_cast<double>(scored) / corpus.size() : 0.0;
  return report;
}

/// Split file: one record per line with keys id and partition in {train,test}.
/// Every corpus id must appear; listing an id under two partitions is an error.
inline std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus,
                                              const std::string& split_path) {
  std::ifstream in(split_path);
  if (!in) throw Error(errc::io_failure, "cannot open " + split_path);

  std::unordered_map<std::string, std::string> partition;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") ||
        !j.contains("partition") || !j["id"].is_string() ||
        !j["partition"].is_string())
      throw Error(errc::parse_failure,
                  "split line " + std::to_string(line_no) + ": invalid record");
    const std::string id = j["id"].get<std::string>();
    const std::string part = j["partition"].get<std::string>();
    if (part != "train" && part != "test")
      throw Error(errc::parse_failure, "split line " + std::to_string(line_no) +
                                           ": partition must be train or test");
    if (!corpus.index.count(id)) throw Error(errc::unknown_id, id);
    auto [it, inserted] = partition.emplace(id, part);
    if (!inserted && it->second != part) throw Error(errc::conflicting_label, id);
  }

  Corpus train, test;
  for (const Paper& p : corpus.papers) {
    auto it = partition.find(p.id);
    if (it == partition.end()) throw Error(errc::missing_id, p.id);
    (it->second == "train" ? train : test).add(p);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace cnpe
