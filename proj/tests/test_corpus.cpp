#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "cnpe/corpus.hpp"
#include "cnpe/rng.hpp"

using cnpe::Corpus;
using cnpe::Error;
using cnpe::errc;

namespace {

struct TempFile {
  std::filesystem::path path;

  explicit TempFile(const std::string& content) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("cnpe_corpus_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".jsonl");
    std::ofstream out(path, std::ios::binary);
    out << content;
  }
  ~TempFile() { std::filesystem::remove(path); }
};

const std::string kTwoLines =
    R"({"id":"p1","title":"Alpha","abstract":"first text","mean_score":6.0}
{"id":"p2","title":"Beta","abstract":"second text","mean_score":4.5}
)";

}  // namespace

TEST_CASE("load_corpus accepts a minimal well-formed file", "[corpus]") {
  TempFile f(kTwoLines);
  const Corpus c = cnpe::load_corpus(f.path.string());
  REQUIRE(c.size() == 2);
  REQUIRE(c.index.size() == 2);
  REQUIRE(c.position_of("p1") == 0);
  REQUIRE(c.position_of("p2") == 1);
  REQUIRE(c.at(0).mean_score == 6.0);
}

TEST_CASE("load_corpus rejects duplicate ids", "[corpus]") {
  TempFile f(
      R"({"id":"p1","title":"a","abstract":"x"}
{"id":"p2","title":"b","abstract":"y"}
{"id":"p1","title":"c","abstract":"z"}
)");
  try {
    cnpe::load_corpus(f.path.string());
    FAIL("expected duplicate-id");
  } catch (const Error& e) {
    CHECK(e.code() == errc::duplicate_id);
    CHECK(std::string(e.what()).find("p1") != std::string::npos);
  }
}

TEST_CASE("load_corpus reports parse failures with the line number", "[corpus]") {
  TempFile f("{\"id\":\"p1\",\"title\":\"a\",\"abstract\":\"x\"}\nnot json\n");
  try {
    cnpe::load_corpus(f.path.string());
    FAIL("expected parse-failure");
  } catch (const Error& e) {
    CHECK(e.code() == errc::parse_failure);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(cnpe::load_corpus("/nonexistent/corpus.jsonl"), Error);
}

TEST_CASE("load_corpus handles a 634-record file", "[corpus]") {
  std::string content;
  for (int i = 0; i < 634; ++i)
    content += "{\"id\":\"p" + std::to_string(i) + "\",\"title\":\"t" + std::to_string(i) +
               "\",\"abstract\":\"text\",\"mean_score\":" + std::to_string(1 + i % 9) + "}\n";
  TempFile f(content);
  REQUIRE(cnpe::load_corpus(f.path.string()).size() == 634);
}

TEST_CASE("unknown fields survive a round-trip", "[corpus]") {
  TempFile f(
      R"({"id":"p1","title":"a","abstract":"x","openreview_url":"https://example.org/1","keywords":["nlp","ranking"],"mean_score":5.25}
{"id":"p2","title":"b","abstract":"y","year":2025,"venue":"ICLR","decision":"accept","group":"Poster"}
)");
  const Corpus c = cnpe::load_corpus(f.path.string());
  REQUIRE(c.at(0).extra.contains("openreview_url"));
  REQUIRE(c.at(0).extra["keywords"].size() == 2);
  REQUIRE(c.at(1).decision == cnpe::Decision::accept);
  REQUIRE(c.at(1).group == "Poster");

  // every field survives serialize -> reload at full precision
  const std::string serialized = cnpe::serialize_corpus(c);
  std::istringstream in(serialized);
  const Corpus again = cnpe::load_corpus_stream(in);
  REQUIRE(again.size() == c.size());
  for (int k = 0; k < c.size(); ++k)
    CHECK(cnpe::paper_to_json(again.at(k)) == cnpe::paper_to_json(c.at(k)));
  // and a second serialization is byte-identical
  CHECK(cnpe::serialize_corpus(again) == serialized);
}

TEST_CASE("validate_corpus counts coverage and flags problems", "[corpus]") {
  Corpus c;
  for (int i = 0; i < 4; ++i) {
    cnpe::Paper p;
    p.id = "p" + std::to_string(i);
    p.title = "t";
    p.abstract = "a";
    if (i != 3) p.mean_score = 5.0;
    c.add(std::move(p));
  }

  SECTION("all scored, require_scores") {
    c.papers[3].mean_score = 6.0;
    const auto report = cnpe::validate_corpus(c, true);
    CHECK(report.errors.empty());
    CHECK(report.score_coverage == 1.0);
  }
  SECTION("one unscored without requirement is a warning") {
    const auto report = cnpe::validate_corpus(c, false);
    CHECK(report.errors.empty());
    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].id == "p3");
    CHECK(report.score_coverage == 0.75);
  }
  SECTION("one unscored with requirement is an error") {
    const auto report = cnpe::validate_corpus(c, true);
    REQUIRE(report.errors.size() == 1);
    CHECK(report.errors[0].id == "p3");
  }
  SECTION("empty abstract is always an error") {
    c.papers[1].abstract.clear();
    const auto report = cnpe::validate_corpus(c, false);
    REQUIRE(report.errors.size() == 1);
    CHECK(report.errors[0].id == "p1");
  }
  SECTION("validation is pure") {
    c.papers[0].abstract.clear();
    const auto r1 = cnpe::validate_corpus(c, true);
    const auto r2 = cnpe::validate_corpus(c, true);
    REQUIRE(r1.errors.size() == r2.errors.size());
    REQUIRE(r1.warnings.size() == r2.warnings.size());
    CHECK(r1.score_coverage == r2.score_coverage);
  }
}

namespace {

Corpus four_papers() {
  Corpus c;
  for (int i = 0; i < 4; ++i) {
    cnpe::Paper p;
    p.id = "p" + std::to_string(i);
    p.title = "t";
    p.abstract = "a";
    c.add(std::move(p));
  }
  return c;
}

}  // namespace

TEST_CASE("split_corpus partitions by the split file", "[corpus]") {
  const Corpus c = four_papers();

  SECTION("2/2 split") {
    TempFile split(
        R"({"id":"p0","partition":"train"}
{"id":"p1","partition":"test"}
{"id":"p2","partition":"train"}
{"id":"p3","partition":"test"}
)");
    const auto [train, test] = cnpe::split_corpus(c, split.path.string());
    REQUIRE(train.size() == 2);
    REQUIRE(test.size() == 2);
    CHECK(train.at(0).id == "p0");
    CHECK(test.at(1).id == "p3");
  }
  SECTION("missing id") {
    TempFile split(
        R"({"id":"p0","partition":"train"}
{"id":"p1","partition":"test"}
{"id":"p2","partition":"train"}
)");
    try {
      cnpe::split_corpus(c, split.path.string());
      FAIL("expected missing-id");
    } catch (const Error& e) {
      CHECK(e.code() == errc::missing_id);
    }
  }
  SECTION("conflicting label") {
    TempFile split(
        R"({"id":"p0","partition":"train"}
{"id":"p0","partition":"test"}
{"id":"p1","partition":"test"}
{"id":"p2","partition":"train"}
{"id":"p3","partition":"test"}
)");
    try {
      cnpe::split_corpus(c, split.path.string());
      FAIL("expected conflicting-label");
    } catch (const Error& e) {
      CHECK(e.code() == errc::conflicting_label);
    }
  }
  SECTION("unknown id") {
    TempFile split(R"({"id":"zz","partition":"train"}
)");
    try {
      cnpe::split_corpus(c, split.path.string());
      FAIL("expected unknown-id");
    } catch (const Error& e) {
      CHECK(e.code() == errc::unknown_id);
    }
  }
}

TEST_CASE("split outputs always partition the corpus", "[corpus]") {
  cnpe::SplitMix64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_below(10));
    Corpus c;
    std::string split_content;
    int expected_train = 0;
    for (int i = 0; i < n; ++i) {
      cnpe::Paper p;
      p.id = "q" + std::to_string(i);
      p.title = "t";
      p.abstract = "a";
      c.add(std::move(p));
      const bool train = rng.next_bool();
      expected_train += train;
      split_content += "{\"id\":\"q" + std::to_string(i) + "\",\"partition\":\"" +
                       (train ? "train" : "test") + "\"}\n";
    }
    TempFile split(split_content);
    const auto [train, test] = cnpe::split_corpus(c, split.path.string());
    REQUIRE(train.size() + test.size() == n);
    REQUIRE(train.size() == expected_train);
    for (const auto& p : train.papers) CHECK(test.index.count(p.id) == 0);
  }
}
