#include "geoevolver/pipeline.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace geoevolver;

namespace {

json stop_entry(const std::string& tag, int turn, const std::string& text) {
  return {{"role_tag", tag}, {"turn", turn}, {"response", {{"text", text}, {"finish", "stop"}}}};
}

json call_entry(const std::string& tag, int turn, const std::string& tool, json args) {
  return {{"role_tag", tag},
          {"turn", turn},
          {"response",
           {{"text", ""},
            {"tool_calls", {{{"id", "c"}, {"tool_name", tool}, {"arguments", args}}}},
            {"finish", "tool_calls"}}}};
}

SimulatedWorkspace tiny_workspace() {
  json j = {{"root", "/data/q"},
            {"files",
             {{"/data/q/in.tif",
               {{"date_tag", "d"}, {"kind", "scene"}, {"scalars", {{"area", 5.0}}}}}}},
            {"derivations",
             {{"calculate_water_turbidity_ntu",
               {{"/data/q/in.tif",
                 {{"date_tag", "d"}, {"kind", "turbidity"}, {"scalars", {{"sum", 9.0}}}}}}}}}};
  return SimulatedWorkspace::from_json(j);
}

Query tiny_query() {
  Query q;
  q.id = "t1";
  q.text = "which option?";
  q.choices = {{"A", "first"}, {"B", "second"}};
  q.gold_answer = "A";
  return q;
}

}  // namespace

TEST_CASE("working memory keeps the last L raw steps") {
  WorkingMemory wm;
  wm.tail_limit = 3;
  std::vector<StepNote> steps;
  for (int i = 1; i <= 5; ++i) {
    steps.push_back({"tool" + std::to_string(i), "ok", "payload " + std::to_string(i)});
  }
  wm = update_working_memory(std::move(wm), steps);
  REQUIRE(wm.recent.size() == 3);
  CHECK(wm.recent[0].tool_name == "tool3");
  CHECK(wm.recent[2].tool_name == "tool5");
  CHECK(wm.summary.find("tool1") != std::string::npos);
  CHECK(wm.summary.find("tool2") != std::string::npos);
  CHECK(wm.summary.find("tool3") == std::string::npos);
}

TEST_CASE("working memory is unchanged by an empty push") {
  WorkingMemory wm;
  wm.tail_limit = 2;
  wm = update_working_memory(std::move(wm), {{{"t", "ok", "p"}}});
  const std::string before = wm.render();
  wm = update_working_memory(std::move(wm), {});
  CHECK(wm.render() == before);
}

TEST_CASE("fallback summary emits one line per evicted step") {
  WorkingMemory wm;
  wm.tail_limit = 2;
  std::vector<StepNote> steps;
  for (int i = 0; i < 10; ++i) {
    steps.push_back({"t" + std::to_string(i), "ok", std::string(200, 'x')});
  }
  wm = update_working_memory(std::move(wm), steps);
  int lines = 1;
  for (char c : wm.summary) lines += c == '\n';
  CHECK(lines == 8);  // 10 pushed - 2 retained
  // payload clipped to 80 chars per line
  CHECK(wm.summary.find(std::string(81, 'x')) == std::string::npos);
  CHECK(wm.summary.find(std::string(80, 'x')) != std::string::npos);
}

TEST_CASE("throwing summarizer falls back silently") {
  WorkingMemory wm;
  wm.tail_limit = 1;
  const Summarizer broken = [](const std::vector<StepNote>&) -> std::string {
    throw Error("summarizer offline");
  };
  wm = update_working_memory(std::move(wm), {{"a", "ok", "1"}, {"b", "ok", "2"}}, broken);
  CHECK(wm.summary == "a -> ok: 1");
  CHECK(wm.recent.size() == 1);
}

TEST_CASE("recent window never exceeds L under random push sequences") {
  std::mt19937 rng(17);
  for (int round = 0; round < 30; ++round) {
    WorkingMemory wm;
    wm.tail_limit = 1 + rng() % 5;
    for (int op = 0; op < 20; ++op) {
      std::vector<StepNote> batch;
      const int n = rng() % 4;
      for (int i = 0; i < n; ++i) batch.push_back({"t", "ok", "p"});
      wm = update_working_memory(std::move(wm), batch);
      CHECK(wm.recent.size() <= wm.tail_limit);
    }
  }
}

TEST_CASE("conjunction law over segment outcomes") {
  CHECK(all_segments_success({true, true, true}));
  CHECK_FALSE(all_segments_success({true, false, true}));
  std::mt19937 rng(3);
  for (int round = 0; round < 50; ++round) {
    std::vector<bool> ys;
    bool expected = true;
    const int n = 1 + rng() % 6;
    for (int i = 0; i < n; ++i) {
      ys.push_back(rng() % 2 == 0);
      expected = expected && ys.back();
    }
    CHECK(all_segments_success(ys) == expected);
    // flipping any true segment to false flips a fully successful aggregate
    if (expected) {
      for (int i = 0; i < n; ++i) {
        auto flipped = ys;
        flipped[i] = false;
        CHECK_FALSE(all_segments_success(flipped));
      }
    }
  }
}

TEST_CASE("parse_plan reads the fenced block") {
  const std::string text = R"(narrative...
```plan
1. list the files
inputs: /data/q
outputs: file_inventory
success: all listed
2. derive turbidity
inputs: file_inventory
outputs: /data/q/turbidity.tif, /data/q/turbidity2.tif
success: rasters exist; sums recorded
```
)";
  const auto plan = parse_plan(text);
  REQUIRE(plan.has_value());
  REQUIRE(plan->size() == 2);
  CHECK((*plan)[0].instruction == "list the files");
  CHECK((*plan)[1].contract.outputs.size() == 2);
  CHECK((*plan)[1].contract.success_criteria.size() == 2);

  CHECK_FALSE(parse_plan("no block at all").has_value());
  CHECK_FALSE(parse_plan("```plan\n1. goal without outputs\n```").has_value());
}

TEST_CASE("clamp folds overflow goals into the last kept instruction") {
  std::vector<SubGoal> goals;
  for (int i = 1; i <= 3; ++i) {
    SubGoal g;
    g.index = i;
    g.instruction = "goal " + std::to_string(i);
    g.contract.outputs = {"out" + std::to_string(i)};
    goals.push_back(g);
  }
  const auto clamped = clamp_plan(goals, 2);
  REQUIRE(clamped.size() == 2);
  CHECK(clamped[1].instruction == "goal 2; also: goal 3");
  CHECK(clamp_plan(goals, 3).size() == 3);
}

TEST_CASE("orchestrate degenerates to a wrapper goal after two bad turns") {
  json script = {{"strict", true},
                 {"entries",
                  {stop_entry("variant-1.orchestrator", 0, "no plan here"),
                   stop_entry("variant-1.orchestrator", 1, "still no plan")}}};
  ScriptedProvider provider(Script::from_json(script));
  const auto plan = orchestrate(provider, tiny_query(), {}, "", 3, "variant-1.orchestrator", {});
  REQUIRE(plan.size() == 1);
  CHECK(plan[0].contract.outputs == std::vector<std::string>{"final_answer"});
  CHECK(plan[0].instruction.find("which option?") != std::string::npos);
}

TEST_CASE("execute_subgoal with a zero retry budget fails on the first error") {
  json script = {{"strict", true},
                 {"entries",
                  {call_entry("executor-1", 0, "calculate_water_turbidity_ntu",
                              {{"input_path", "/data/q/in.tif"},
                               {"output_path", "/data/q/t.tif"}})}}};
  ScriptedProvider provider(Script::from_json(script));
  auto ws = tiny_workspace();
  ws.faults.push_back(FaultRule{"calculate_water_turbidity_ntu", json::object(), "boom", 1, 1});

  SubGoal goal{1, "derive turbidity", {{}, {"/data/q/t.tif"}, {}}};
  WorkingMemory wm;
  ExecuteOptions opts;
  opts.retry_budget = 0;
  const auto registry = make_default_registry();
  const auto result = execute_subgoal(provider, registry, ws, goal, wm, opts);
  CHECK_FALSE(result.success);
  REQUIRE(result.trajectory.steps.size() == 1);
  CHECK(result.trajectory.steps[0].observation.status == ObsStatus::error);
}

TEST_CASE("execute_subgoal retries once within budget and succeeds") {
  json script = {{"strict", true},
                 {"entries",
                  {call_entry("executor-1", 0, "calculate_water_turbidity_ntu",
                              {{"input_path", "/data/q/in.tif"},
                               {"output_path", "/data/q/t.tif"}}),
                   call_entry("executor-1", 1, "calculate_water_turbidity_ntu",
                              {{"input_path", "/data/q/in.tif"},
                               {"output_path", "/data/q/t.tif"}}),
                   stop_entry("executor-1", 2, "done\nSUBGOAL COMPLETE: raster exists")}}};
  ScriptedProvider provider(Script::from_json(script));
  auto ws = tiny_workspace();
  ws.faults.push_back(FaultRule{"calculate_water_turbidity_ntu", json::object(), "boom", 1, 1});

  SubGoal goal{1, "derive turbidity", {{}, {"/data/q/t.tif"}, {}}};
  WorkingMemory wm;
  ExecuteOptions opts;
  opts.retry_budget = 1;
  const auto registry = make_default_registry();
  const auto result = execute_subgoal(provider, registry, ws, goal, wm, opts);
  CHECK(result.success);
  REQUIRE(result.trajectory.steps.size() == 2);
  CHECK(result.trajectory.steps[0].observation.status == ObsStatus::error);
  CHECK(result.trajectory.steps[1].observation.status == ObsStatus::ok);
}

TEST_CASE("success claim without the contract artifact is not believed") {
  json script = {{"strict", true},
                 {"entries",
                  {stop_entry("executor-1", 0,
                              "all good\nSUBGOAL COMPLETE: pretend the raster exists")}}};
  ScriptedProvider provider(Script::from_json(script));
  auto ws = tiny_workspace();
  SubGoal goal{1, "derive turbidity", {{}, {"/data/q/never_made.tif"}, {}}};
  WorkingMemory wm;
  const auto registry = make_default_registry();
  const auto result = execute_subgoal(provider, registry, ws, goal, wm, ExecuteOptions{});
  CHECK_FALSE(result.success);
}

TEST_CASE("executor messages stay isolated per sub-goal") {
  json script = {{"strict", true},
                 {"entries",
                  {stop_entry("executor-1", 0, "SUBGOAL COMPLETE: a"),
                   stop_entry("executor-2", 0, "SUBGOAL COMPLETE: b")}}};
  ScriptedProvider provider(Script::from_json(script));
  auto ws = tiny_workspace();
  const auto registry = make_default_registry();

  SubGoal g1{1, "first secret instruction", {{}, {"alpha"}, {}}};
  SubGoal g2{2, "second isolated instruction", {{}, {"beta"}, {}}};
  WorkingMemory wm1, wm2;
  ExecuteOptions o1, o2;
  o1.role_tag = "executor-1";
  o2.role_tag = "executor-2";
  o2.executor_index = 2;
  execute_subgoal(provider, registry, ws, g1, wm1, o1);
  execute_subgoal(provider, registry, ws, g2, wm2, o2);

  for (const auto& req : provider.captured()) {
    std::string all;
    for (const auto& m : req.messages) all += m.content + "\n";
    if (req.role_tag == "executor-1") {
      CHECK(all.find("first secret instruction") != std::string::npos);
      CHECK(all.find("second isolated instruction") == std::string::npos);
    } else if (req.role_tag == "executor-2") {
      CHECK(all.find("second isolated instruction") != std::string::npos);
      CHECK(all.find("first secret instruction") == std::string::npos);
    }
  }
}

TEST_CASE("judge skips the provider when the answer tag is missing") {
  // strict script with NO judge entries: any provider call would throw
  json script = {{"strict", true}, {"entries", json::array()}};
  ScriptedProvider provider(Script::from_json(script));
  Trajectory traj;
  traj.steps.push_back({ToolAction{"glob", json::object(), 1},
                        Observation{ObsStatus::ok, "[]", "glob"}});
  const Outcome outcome = judge(provider, tiny_query(), {traj}, "no tag in sight", "", {},
                                "judge", {});
  CHECK_FALSE(outcome.success);
  CHECK_FALSE(outcome.validity.format_compliant);
  CHECK(outcome.validity.step_count == 1);
  CHECK(provider.captured().empty());
}

TEST_CASE("judge parses plain and fenced verdicts") {
  json script = {
      {"strict", true},
      {"entries",
       {stop_entry("judge", 0,
                   "```json\n{\"decision\": \"SUCCESS\", \"confidence\": 0.9, "
                   "\"justification\": \"consistent\"}\n```")}}};
  ScriptedProvider provider(Script::from_json(script));
  const Outcome outcome =
      judge(provider, tiny_query(), {}, "<Answer>A</Answer>", "reasoning", {}, "judge", {});
  CHECK(outcome.success);
  CHECK(outcome.validity.confidence == 0.9);
  CHECK(outcome.validity.format_compliant);
}

TEST_CASE("unparseable verdicts get one re-ask then fail closed") {
  json script = {{"strict", true},
                 {"entries",
                  {stop_entry("judge", 0, "not json"),
                   stop_entry("judge", 1, "still not json")}}};
  ScriptedProvider provider(Script::from_json(script));
  const Outcome outcome =
      judge(provider, tiny_query(), {}, "<Answer>A</Answer>", "", {}, "judge", {});
  CHECK_FALSE(outcome.success);
  CHECK(outcome.validity.confidence == 0.0);
  CHECK(outcome.validity.justification == "judge parse failure");
  CHECK(provider.captured().size() == 2);
}

TEST_CASE("verdict confidence clamps into [0,1]") {
  const auto v = parse_verdict(R"({"decision": "SUCCESS", "confidence": 1.7})");
  REQUIRE(v.has_value());
  CHECK(v->confidence == 1.0);
  CHECK_FALSE(parse_verdict(R"({"decision": "MAYBE"})").has_value());
}

TEST_CASE("retrieve aggregates the top-k bank items") {
  auto encoder = std::make_shared<HashedEncoder>(64);
  MemoryBank bank(encoder);
  CHECK(retrieve(tiny_query(), bank, 1, std::nullopt).empty());

  MemoryItem item;
  item.source_id = "q0";
  item.title = "ASTER TIR LST TTM Processing Chain";
  item.description = "which option aster tir";
  item.detection_cues = {"which option"};
  item.content = "chain";
  item.embedding = encoder->encode(indexing_text(item));
  bank.insert({item});
  const auto ctx = retrieve(tiny_query(), bank, 1, std::nullopt);
  CHECK(ctx.rendered.find("ASTER TIR LST TTM Processing Chain") != std::string::npos);
  REQUIRE(ctx.item_keys.size() == 1);
}
