#include "geoevolver/memory_bank.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

using namespace geoevolver;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<const TextEncoder> encoder() {
  static auto enc = std::make_shared<HashedEncoder>(64);
  return enc;
}

MemoryItem make_item(const std::string& source, const std::string& title,
                     PatternType type = PatternType::analysis_pattern,
                     const std::string& cues = "") {
  MemoryItem item;
  item.source_id = source;
  item.pattern_type = type;
  item.title = title;
  item.description = "description of " + title;
  item.content = "content of " + title;
  item.action_items = {"do the thing"};
  if (!cues.empty()) item.detection_cues = {cues};
  if (type == PatternType::error_attribution) item.failure_cause = "root cause";
  item.embedding = encoder()->encode(indexing_text(item));
  return item;
}

fs::path temp_file(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("geoevolver_test_" + name);
  fs::remove(p);
  return p;
}

}  // namespace

TEST_CASE("insert dedups by canonical key") {
  MemoryBank bank(encoder());
  const auto item = make_item("q1", "ASTER chain");
  CHECK(bank.insert({item}) == 1);
  CHECK(bank.insert({item}) == 0);
  CHECK(bank.size() == 1);

  // same title, different pattern type -> distinct key
  CHECK(bank.insert({make_item("q1", "ASTER chain", PatternType::error_attribution)}) == 1);
  CHECK(bank.size() == 2);

  // title normalization: case and whitespace runs collapse
  CHECK(bank.insert({make_item("q2", "ASTER TIR  LST")}) == 1);
  CHECK(bank.insert({make_item("q2", "aster tir lst")}) == 0);
}

TEST_CASE("dedup is idempotent over random batches") {
  std::mt19937 rng(11);
  MemoryBank bank(encoder());
  for (int round = 0; round < 20; ++round) {
    std::vector<MemoryItem> batch;
    const int n = 1 + static_cast<int>(rng() % 10);
    for (int i = 0; i < n; ++i) {
      batch.push_back(make_item("q" + std::to_string(rng() % 5),
                                "title " + std::to_string(rng() % 12)));
    }
    bank.insert(batch);
    const size_t size_after_first = bank.size();
    CHECK(bank.insert(batch) == 0);
    CHECK(bank.size() == size_after_first);
  }
}

TEST_CASE("retrieval ranks by similarity with sequence tie-break") {
  MemoryBank bank(encoder());
  bank.insert({make_item("q1", "turbidity per unit area ranking", PatternType::analysis_pattern,
                         "turbidity per unit area"),
               make_item("q2", "cloud masking order", PatternType::analysis_pattern,
                         "cloud mask before statistics")});
  const auto top = bank.retrieve_top_k(
      indexing_text(make_item("q1", "turbidity per unit area ranking",
                              PatternType::analysis_pattern, "turbidity per unit area")),
      1);
  REQUIRE(top.size() == 1);
  CHECK(top[0].title == "turbidity per unit area ranking");

  // k larger than the bank returns everything, ranked
  CHECK(bank.retrieve_top_k("anything", 10).size() == 2);
  CHECK(MemoryBank(encoder()).retrieve_top_k("anything", 3).empty());
}

TEST_CASE("self-match retrieval has similarity 1") {
  MemoryBank bank(encoder());
  const auto item = make_item("q1", "exact match target");
  bank.insert({item});
  const auto top = bank.retrieve_top_k(indexing_text(item), 1);
  REQUIRE(top.size() == 1);
  CHECK(std::abs(similarity(encoder()->encode(indexing_text(item)), top[0].embedding) - 1.0) <
        1e-9);
}

TEST_CASE("retrieval matches a brute-force oracle") {
  std::mt19937 rng(5);
  MemoryBank bank(encoder());
  std::vector<MemoryItem> all;
  const std::vector<std::string> vocab = {"aster", "tir",     "lst",   "turbidity", "cloud",
                                          "mask",  "reproject", "band", "area",     "sum"};
  for (int i = 0; i < 100; ++i) {
    std::string title;
    for (int w = 0; w < 4; ++w) title += vocab[rng() % vocab.size()] + " ";
    title += std::to_string(i);
    all.push_back(make_item("q" + std::to_string(i), title));
  }
  bank.insert(all);

  const std::string query = "aster tir lst band area";
  const auto got = bank.retrieve_top_k(query, 5);

  // independent full sort
  const auto q = encoder()->encode(query);
  auto oracle = bank.items_snapshot();
  std::stable_sort(oracle.begin(), oracle.end(), [&](const MemoryItem& a, const MemoryItem& b) {
    const double sa = similarity(q, a.embedding), sb = similarity(q, b.embedding);
    if (sa != sb) return sa > sb;
    return a.sequence < b.sequence;
  });
  REQUIRE(got.size() == 5);
  for (size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].sequence == oracle[i].sequence);
  }
}

TEST_CASE("leakage check") {
  MemoryItem item = make_item("q1", "leaky");
  item.content = "...the spread is 8497.79 between dates...";
  item.embedding = encoder()->encode(indexing_text(item));
  CHECK(leakage_check(item, "8497.79"));
  CHECK_FALSE(leakage_check(item, "12.46"));

  MemoryItem band = make_item("q2", "band note");
  band.content = "Check Band A alignment before separating.";
  CHECK_FALSE(leakage_check(band, "A"));  // short gold: structured patterns only

  MemoryItem answer = make_item("q3", "answer note");
  answer.content = "the run ended with ANSWER: A committed";
  CHECK(leakage_check(answer, "A"));
  MemoryItem tagged = make_item("q4", "tagged note");
  tagged.action_items = {"emit <Answer>A</Answer> at the end"};
  CHECK(leakage_check(tagged, "A"));

  // normalization: case/whitespace-insensitive for long golds
  MemoryItem spaced = make_item("q5", "spaced");
  spaced.content = "The LAKE   Urmia record";
  CHECK(leakage_check(spaced, "lake urmia"));
}

TEST_CASE("leakage-filtered retrieval never returns a leaking item") {
  std::mt19937 rng(9);
  MemoryBank bank(encoder());
  const std::string gold = "8497.79";
  std::vector<long> leaky_sequences;
  for (int i = 0; i < 40; ++i) {
    MemoryItem item = make_item("q" + std::to_string(i), "item " + std::to_string(i));
    if (i % 3 == 0) {
      item.content = "numbers " + gold + " inside";
      item.embedding = encoder()->encode(indexing_text(item));
    }
    bank.insert({item});
  }
  for (const auto& item : bank.items_snapshot()) {
    if (leakage_check(item, gold)) leaky_sequences.push_back(item.sequence);
  }
  REQUIRE_FALSE(leaky_sequences.empty());
  const auto got = bank.retrieve_top_k("item numbers inside", 40, gold);
  for (const auto& item : got) {
    CHECK(std::find(leaky_sequences.begin(), leaky_sequences.end(), item.sequence) ==
          leaky_sequences.end());
  }
}

TEST_CASE("aggregate_context renders rank order deterministically") {
  CHECK(aggregate_context({}).rendered.empty());
  CHECK(aggregate_context({}).item_keys.empty());

  const auto one = make_item("q1", "Single Title Here");
  const auto ctx1 = aggregate_context({one});
  CHECK(ctx1.rendered.find("Single Title Here") != std::string::npos);
  CHECK(ctx1.item_keys.size() == 1);

  const auto two = make_item("q2", "Second Entry");
  const auto ctx2 = aggregate_context({one, two});
  CHECK(ctx2.rendered.find("Single Title Here") < ctx2.rendered.find("Second Entry"));
  CHECK(ctx2.rendered == aggregate_context({one, two}).rendered);

  MemoryItem attributed = make_item("q3", "Broken", PatternType::error_attribution);
  const auto ctx3 = aggregate_context({attributed});
  CHECK(ctx3.rendered.find("failure cause: root cause") != std::string::npos);
}

TEST_CASE("persist/load round trip") {
  const auto path = temp_file("bank_roundtrip.jsonl");
  MemoryBank bank(encoder());
  bank.insert({make_item("q1", "first"), make_item("q2", "second"),
               make_item("q3", "third", PatternType::error_attribution)});
  bank.persist(path);

  const MemoryBank loaded = MemoryBank::load(path, encoder());
  REQUIRE(loaded.size() == 3);
  const auto a = bank.items_snapshot();
  const auto b = loaded.items_snapshot();
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sequence == b[i].sequence);
    CHECK(a[i].title == b[i].title);
    CHECK(a[i].embedding == b[i].embedding);
    CHECK(a[i].failure_cause == b[i].failure_cause);
  }
  // sequences continue after a reload, never reused
  MemoryBank resumed = MemoryBank::load(path, encoder());
  resumed.insert({make_item("q9", "fresh")});
  CHECK(resumed.items_snapshot().back().sequence == 4);
  fs::remove(path);
}

TEST_CASE("load of an empty file yields an empty bank") {
  const auto path = temp_file("bank_empty.jsonl");
  std::ofstream(path).flush();
  CHECK(MemoryBank::load(path, encoder()).size() == 0);
  fs::remove(path);
}

TEST_CASE("load names the malformed line") {
  const auto path = temp_file("bank_truncated.jsonl");
  {
    MemoryBank bank(encoder());
    bank.insert({make_item("q1", "first"), make_item("q2", "second")});
    bank.persist(path);
    std::ifstream in(path);
    std::string l1, l2;
    std::getline(in, l1);
    std::getline(in, l2);
    std::ofstream out(path, std::ios::trunc);
    out << l1 << "\n" << l2.substr(0, l2.size() / 2) << "\n";
  }
  try {
    MemoryBank::load(path, encoder());
    FAIL("expected load error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("insert appends to the attached file") {
  const auto path = temp_file("bank_attached.jsonl");
  std::ofstream(path).flush();
  MemoryBank bank(encoder());
  bank.attach(path);
  bank.insert({make_item("q1", "first")});
  bank.insert({make_item("q2", "second")});
  const MemoryBank loaded = MemoryBank::load(path, encoder());
  CHECK(loaded.size() == 2);
  CHECK(loaded.items_snapshot()[1].sequence == 2);
  fs::remove(path);
}
