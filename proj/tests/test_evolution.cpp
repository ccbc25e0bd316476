#include "geoevolver/evolution.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace geoevolver;

namespace {

json extractor_stop(const std::string& tag, int turn, const json& memories) {
  return {{"role_tag", tag},
          {"turn", turn},
          {"response", {{"text", json{{"memories", memories}}.dump()}, {"finish", "stop"}}}};
}

json prose_stop(const std::string& tag, int turn) {
  return {{"role_tag", tag},
          {"turn", turn},
          {"response", {{"text", "I think the key insight is..."}, {"finish", "stop"}}}};
}

Query q() {
  Query query;
  query.id = "q27";
  query.text = "delta LST?";
  return query;
}

CandidateSolution make_candidate(int index, bool success) {
  CandidateSolution c;
  c.variant_index = index;
  c.outcome.success = success;
  c.s = success ? 1 : 0;
  Trajectory traj;
  traj.steps.push_back(
      {ToolAction{"glob", {{"pattern", "*BT*"}}, 1}, Observation{ObsStatus::ok, "[]", "glob"}});
  traj.steps.push_back({ToolAction{"temperature_emissivity_separation",
                                   {{"tir_band_paths", {"/a", "/b"}}, {"output_path", "/o"}},
                                   1},
                        Observation{success ? ObsStatus::ok : ObsStatus::error,
                                    success ? std::string(600, 'y') : "list index out of range",
                                    "temperature_emissivity_separation"}});
  c.trajectories.push_back(std::move(traj));
  c.parsed_answer = success ? std::optional<std::string>("A") : std::nullopt;
  return c;
}

json valid_item(const std::string& title, const std::string& type,
                const std::string& failure_cause = "") {
  json j = {{"title", title},
            {"description", "desc"},
            {"content", "tool A -> tool B"},
            {"pattern_type", type},
            {"action_items", {"step 1"}},
            {"detection_cues", {"cue"}}};
  if (!failure_cause.empty()) j["failure_cause"] = failure_cause;
  return j;
}

}  // namespace

TEST_CASE("digest keeps error messages whole and clips ok payloads") {
  const auto good = make_candidate(1, true);
  const std::string digest = render_digest_block(good);
  CHECK(digest.find("=== Variant 1 (SUCCESS) ===") != std::string::npos);
  CHECK(digest.find("glob(pattern)") != std::string::npos);
  CHECK(digest.find(std::string(400, 'y')) != std::string::npos);
  CHECK(digest.find(std::string(401, 'y')) == std::string::npos);  // clipped at 400

  const auto bad = make_candidate(2, false);
  const std::string bad_digest = render_digest_block(bad);
  CHECK(bad_digest.find("list index out of range") != std::string::npos);
  CHECK(bad_digest.find("(FAILURE)") != std::string::npos);
  // argument keys render in nlohmann's (alphabetical) object order
  CHECK(bad_digest.find("output_path, tir_band_paths") != std::string::npos);

  const std::string block = render_contrastive_block({good, bad});
  CHECK(block.find("Variant 1") < block.find("Variant 2"));
}

TEST_CASE("extract_single keeps one item, stamps source, forces the type") {
  HashedEncoder encoder(64);
  json script = {{"strict", true},
                 {"entries",
                  {extractor_stop("extractor.single", 0,
                                  json::array({valid_item("chain A", "analysis_pattern"),
                                               valid_item("chain B", "analysis_pattern")}))}}};
  ScriptedProvider provider(Script::from_json(script));
  const auto items = extract_single(provider, q(), make_candidate(1, true), encoder);
  REQUIRE(items.size() == 1);
  CHECK(items[0].title == "chain A");
  CHECK(items[0].source_id == "q27");
  CHECK(items[0].pattern_type == PatternType::analysis_pattern);
  CHECK(std::abs(items[0].embedding.norm() - 1.0) < 1e-9);
}

TEST_CASE("extract_single overrides a mislabeled entry from a failed solution") {
  HashedEncoder encoder(64);
  json script = {
      {"strict", true},
      {"entries",
       {extractor_stop("extractor.single", 0,
                       json::array({valid_item("mislabeled", "analysis_pattern",
                                               "root cause: bad band list")}))}}};
  ScriptedProvider provider(Script::from_json(script));
  const auto items = extract_single(provider, q(), make_candidate(2, false), encoder);
  REQUIRE(items.size() == 1);
  CHECK(items[0].pattern_type == PatternType::error_attribution);
  CHECK(items[0].failure_cause == "root cause: bad band list");
}

TEST_CASE("extract_single returns nothing after two malformed turns") {
  HashedEncoder encoder(64);
  json script = {{"strict", true},
                 {"entries",
                  {prose_stop("extractor.single", 0), prose_stop("extractor.single", 1)}}};
  ScriptedProvider provider(Script::from_json(script));
  std::vector<std::string> events;
  const auto items = extract_single(provider, q(), make_candidate(1, true), encoder, &events);
  CHECK(items.empty());
  REQUIRE(events.size() == 1);
  CHECK(provider.captured().size() == 2);  // exactly one re-ask
}

TEST_CASE("distill_contrastive clamps to four and enforces the schema") {
  HashedEncoder encoder(64);
  json memories = json::array();
  for (int i = 0; i < 6; ++i) {
    memories.push_back(valid_item("pattern " + std::to_string(i), "analysis_pattern"));
  }
  json script = {{"strict", true},
                 {"entries", {extractor_stop("extractor.contrastive", 0, memories)}}};
  ScriptedProvider provider(Script::from_json(script));
  const auto items =
      distill_contrastive(provider, q(), {make_candidate(1, true)}, encoder);
  CHECK(items.size() == 4);
}

TEST_CASE("attributions without a failure cause are dropped, others kept") {
  HashedEncoder encoder(64);
  json memories = json::array({
      valid_item("good pattern", "analysis_pattern"),
      valid_item("broken attribution", "error_attribution"),  // no failure_cause
      valid_item("good attribution", "error_attribution", "quoted 'list index out of range'"),
  });
  json script = {{"strict", true},
                 {"entries", {extractor_stop("extractor.contrastive", 0, memories)}}};
  ScriptedProvider provider(Script::from_json(script));
  std::vector<std::string> events;
  const auto items = distill_contrastive(
      provider, q(), {make_candidate(1, true), make_candidate(2, false)}, encoder, &events);
  REQUIRE(items.size() == 2);
  CHECK(items[0].pattern_type == PatternType::analysis_pattern);
  CHECK_FALSE(items[0].failure_cause.has_value());
  CHECK(items[1].pattern_type == PatternType::error_attribution);
  CHECK(items[1].failure_cause->find("list index out of range") != std::string::npos);
  CHECK_FALSE(events.empty());
}

TEST_CASE("distill_contrastive yields nothing on malformed output") {
  HashedEncoder encoder(64);
  json script = {{"strict", true}, {"entries", {prose_stop("extractor.contrastive", 0)}}};
  ScriptedProvider provider(Script::from_json(script));
  std::vector<std::string> events;
  CHECK(distill_contrastive(provider, q(), {make_candidate(1, true)}, encoder, &events)
            .empty());
  CHECK_FALSE(events.empty());
}

TEST_CASE("consolidate dedups the union of single and contrastive items") {
  auto encoder = std::make_shared<HashedEncoder>(64);
  MemoryBank bank(encoder);

  MemoryItem star;
  star.source_id = "q27";
  star.title = "ASTER TIR LST TTM Processing Chain";
  star.content = "chain";
  star.embedding = encoder->encode(indexing_text(star));

  MemoryItem dup = star;  // same canonical key arriving from the contrastive pass
  MemoryItem fresh = star;
  fresh.title = "Different insight";
  fresh.embedding = encoder->encode(indexing_text(fresh));

  CHECK(consolidate(bank, {star, dup, fresh}) == 2);
  CHECK(bank.size() == 2);
  CHECK(consolidate(bank, {}) == 0);
  CHECK(bank.size() == 2);

  MemoryItem third;
  third.source_id = "q99";
  third.title = "Aged experience";
  third.embedding = encoder->encode(indexing_text(third));
  CHECK(consolidate(bank, {third}) == 1);
  CHECK(bank.size() == 3);
}

TEST_CASE("bank growth per episode is bounded by the extraction budgets") {
  // 1 single + 4 contrastive is the hard ceiling
  HashedEncoder encoder(64);
  json memories = json::array();
  for (int i = 0; i < 9; ++i) {
    memories.push_back(valid_item("burst " + std::to_string(i), "analysis_pattern"));
  }
  json script = {{"strict", true},
                 {"entries",
                  {extractor_stop("extractor.single", 0, memories),
                   extractor_stop("extractor.contrastive", 0, memories)}}};
  ScriptedProvider provider(Script::from_json(script));
  auto enc = std::make_shared<HashedEncoder>(64);
  MemoryBank bank(enc);
  auto single = extract_single(provider, q(), make_candidate(1, true), *enc);
  auto contrast = distill_contrastive(provider, q(), {make_candidate(1, true)}, *enc);
  single.insert(single.end(), contrast.begin(), contrast.end());
  CHECK(single.size() <= 5);
  consolidate(bank, single);
  CHECK(bank.size() <= 5);
}
