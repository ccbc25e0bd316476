#pragma once

#include "geoevolver/core.hpp"
#include "geoevolver/memory_bank.hpp"
#include "geoevolver/prompts.hpp"
#include "geoevolver/provider.hpp"
#include "geoevolver/tools.hpp"

#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

namespace geoevolver {

// ---------------------------------------------------------------------------
// Sub-goals
// ---------------------------------------------------------------------------

struct SubGoalContract {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;  // nonempty; path-like entries are checked
  std::vector<std::string> success_criteria;
};

struct SubGoal {
  int index = 1;  // 1-based plan position
  std::string instruction;
  SubGoalContract contract;
};

// ---------------------------------------------------------------------------
// Working memory (episode-local)
// ---------------------------------------------------------------------------

struct StepNote {
  std::string tool_name;
  std::string status;  // "ok" | "error"
  std::string payload;

  std::string render() const { return tool_name + " -> " + status + ": " + payload; }
};

/// Summarizes evicted steps into a compact progress description. Receives the
/// steps in eviction order and returns text appended to the summary.
using Summarizer = std::function<std::string(const std::vector<StepNote>&)>;

/// One line per evicted step, payload clipped to 80 characters.
inline std::string fallback_summary(const std::vector<StepNote>& evicted) {
  std::ostringstream out;
  for (size_t i = 0; i < evicted.size(); ++i) {
    if (i > 0) out << "\n";
    out << evicted[i].tool_name << " -> " << evicted[i].status << ": "
        << evicted[i].payload.substr(0, 80);
  }
  return out.str();
}

struct WorkingMemory {
  std::string summary;
  std::deque<StepNote> recent;
  size_t tail_limit = 6;  // L

  std::string render() const {
    std::ostringstream out;
    out << "Progress summary:\n" << (summary.empty() ? "(none)" : summary) << "\n";
    out << "Recent steps:\n";
    if (recent.empty()) {
      out << "(none)\n";
    } else {
      for (const auto& note : recent) out << note.render() << "\n";
    }
    return out.str();
  }
};

/// Appends steps to the tail; steps pushed past L are folded into the summary
/// through the summarizer, falling back to the deterministic one-liner format
/// if the summarizer fails.
inline WorkingMemory update_working_memory(WorkingMemory wm,
                                           const std::vector<StepNote>& new_steps,
                                           const Summarizer& summarizer = nullptr) {
  std::vector<StepNote> evicted;
  for (const auto& note : new_steps) {
    wm.recent.push_back(note);
    while (wm.recent.size() > wm.tail_limit) {
      evicted.push_back(wm.recent.front());
      wm.recent.pop_front();
    }
  }
  if (!evicted.empty()) {
    std::string folded;
    if (summarizer) {
      try {
        folded = summarizer(evicted);
      } catch (const std::exception&) {
        folded = fallback_summary(evicted);
      }
    } else {
      folded = fallback_summary(evicted);
    }
    if (!wm.summary.empty() && !folded.empty()) wm.summary += "\n";
    wm.summary += folded;
  }
  return wm;
}

// ---------------------------------------------------------------------------
// Judge verdict
// ---------------------------------------------------------------------------

struct JudgeVerdict {
  std::string decision;  // SUCCESS | FAILURE
  double confidence = 0.0;
  std::string justification;
};

/// Accepts bare JSON or a fenced ```...``` block.
inline std::optional<JudgeVerdict> parse_verdict(const std::string& text) {
  std::string body = trim(text);
  if (body.rfind("```", 0) == 0) {
    const size_t first_nl = body.find('\n');
    const size_t last_fence = body.rfind("```");
    if (first_nl == std::string::npos || last_fence <= first_nl) return std::nullopt;
    body = trim(body.substr(first_nl + 1, last_fence - first_nl - 1));
  }
  json j;
  try {
    j = json::parse(body);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (!j.is_object() || !j.contains("decision")) return std::nullopt;
  JudgeVerdict v;
  v.decision = j.at("decision").get<std::string>();
  if (v.decision != "SUCCESS" && v.decision != "FAILURE") return std::nullopt;
  v.confidence = std::clamp(j.value("confidence", 0.0), 0.0, 1.0);
  v.justification = j.value("justification", "");
  return v;
}

// ---------------------------------------------------------------------------
// Success conjunction
// ---------------------------------------------------------------------------

inline bool all_segments_success(const std::vector<bool>& segment_outcomes) {
  for (bool y : segment_outcomes) {
    if (!y) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Rendering helpers
// ---------------------------------------------------------------------------

inline std::string render_query(const Query& query) {
  std::ostringstream out;
  out << query.text;
  if (!query.choices.empty()) {
    out << "\nChoices:";
    for (const auto& [label, body] : query.choices) out << "\n" << label << ". " << body;
  }
  return out.str();
}

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::string render_tool_trace(const std::vector<Trajectory>& trajectories,
                                     size_t payload_clip = 400) {
  std::ostringstream out;
  int step = 0;
  for (const auto& traj : trajectories) {
    for (const auto& s : traj.steps) {
      out << "[" << ++step << "] " << s.action.tool_name << "(" << s.action.arguments.dump()
          << ") -> " << (s.observation.status == ObsStatus::ok ? "ok" : "error") << ": ";
      if (s.observation.status == ObsStatus::error) {
        out << s.observation.payload;  // error messages kept whole
      } else {
        out << s.observation.payload.substr(0, payload_clip);
      }
      out << "\n";
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Plan parsing
// ---------------------------------------------------------------------------

inline std::optional<std::vector<SubGoal>> parse_plan(const std::string& text) {
  const size_t open = text.find("```plan");
  if (open == std::string::npos) return std::nullopt;
  const size_t body_start = text.find('\n', open);
  if (body_start == std::string::npos) return std::nullopt;
  const size_t close = text.find("```", body_start);
  if (close == std::string::npos) return std::nullopt;

  auto split_list = [](const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
      const std::string t = trim(item);
      if (!t.empty() && t != "-") out.push_back(t);
    }
    return out;
  };

  std::vector<SubGoal> goals;
  for (const auto& raw : split_lines(text.substr(body_start + 1, close - body_start - 1))) {
    const std::string line = trim(raw);
    if (line.empty()) continue;
    size_t digits = 0;
    while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) {
      ++digits;
    }
    if (digits > 0 && digits < line.size() && line[digits] == '.') {
      SubGoal goal;
      goal.index = static_cast<int>(goals.size() + 1);
      goal.instruction = trim(std::string_view(line).substr(digits + 1));
      goals.push_back(std::move(goal));
      continue;
    }
    if (goals.empty()) return std::nullopt;
    const std::string lower = to_lower(line);
    if (lower.rfind("inputs:", 0) == 0) {
      goals.back().contract.inputs = split_list(line.substr(7), ',');
    } else if (lower.rfind("outputs:", 0) == 0) {
      goals.back().contract.outputs = split_list(line.substr(8), ',');
    } else if (lower.rfind("success:", 0) == 0) {
      goals.back().contract.success_criteria = split_list(line.substr(8), ';');
    }
  }
  if (goals.empty()) return std::nullopt;
  for (const auto& g : goals) {
    if (g.instruction.empty() || g.contract.outputs.empty()) return std::nullopt;
  }
  return goals;
}

/// Keeps the first n_max goals; instructions of the overflow goals are folded
/// into the last kept goal.
inline std::vector<SubGoal> clamp_plan(std::vector<SubGoal> goals, int n_max) {
  if (static_cast<int>(goals.size()) <= n_max) return goals;
  std::string folded = goals[n_max - 1].instruction;
  for (size_t i = n_max; i < goals.size(); ++i) {
    folded += "; also: " + goals[i].instruction;
  }
  goals.resize(n_max);
  goals.back().instruction = std::move(folded);
  return goals;
}

// ---------------------------------------------------------------------------
// Pipeline operations
// ---------------------------------------------------------------------------

/// Retrieval stage of the loop: top-k similar memories aggregated into the
/// strategy context.
inline StrategyContext retrieve(const Query& query, const MemoryBank& bank, int k,
                                const std::optional<std::string>& leakage_context) {
  return aggregate_context(bank.retrieve_top_k(query.text, k, leakage_context));
}

/// Prompts the orchestrator for a delegation plan and parses it; one re-ask on
/// a malformed plan, then a single wrapper sub-goal covering the whole query.
inline std::vector<SubGoal> orchestrate(Provider& provider, const Query& query,
                                        const StrategyContext& context,
                                        const std::string& diversity_hint, int n_max,
                                        const std::string& role_tag,
                                        const SamplingParams& sampling,
                                        std::string* plan_text_out = nullptr) {
  if (n_max < 1) throw Error("orchestrate requires n_max >= 1");
  const std::string memory_block =
      context.rendered.empty() ? std::string("(no strategy memories retrieved)")
                               : "Strategy memories:\n" + context.rendered;
  const std::string user =
      prompts::interpolate(prompts::kVariantsActTemplate,
                           {{"memory_block", memory_block},
                            {"diversity_hint",
                             diversity_hint.empty() ? "" : diversity_hint + "\n"},
                            {"query", render_query(query)}}) +
      "\n" + prompts::kPlanFormatInstruction;

  std::vector<ChatMessage> messages{{Role::system, prompts::kOrchestratorSystem},
                                    {Role::user, user}};
  ProviderResponse response = provider.complete(role_tag, messages, {}, sampling);
  if (plan_text_out) *plan_text_out = response.text;
  auto plan = parse_plan(response.text);
  if (!plan) {
    messages.push_back({Role::assistant, response.text});
    messages.push_back(
        {Role::user, "The plan was unparseable. Re-emit it as the fenced ```plan``` block."});
    response = provider.complete(role_tag, messages, {}, sampling);
    if (plan_text_out) *plan_text_out += "\n" + response.text;
    plan = parse_plan(response.text);
  }
  if (!plan) {
    SubGoal wrapper;
    wrapper.index = 1;
    wrapper.instruction = "Answer the query end-to-end: " + query.text;
    wrapper.contract.outputs = {"final_answer"};
    wrapper.contract.success_criteria = {"question answered"};
    return {wrapper};
  }
  return clamp_plan(std::move(*plan), n_max);
}

struct ExecuteOptions {
  std::string role_tag = "executor-1";
  int executor_index = 1;
  int retry_budget = 1;  // A: corrective retries per distinct failing step
  int max_steps = 200;   // S_max
  SamplingParams sampling;
  Summarizer summarizer;                 // null -> deterministic fallback
  std::vector<LogRecord>* log = nullptr; // appended as steps happen
  int* step_counter = nullptr;
  std::mutex* workspace_mutex = nullptr; // set when sub-goals run in parallel
};

struct SubGoalResult {
  Trajectory trajectory;
  bool success = false;  // Y_n
  std::string completion_text;
};

/// Tool-calling loop for one sub-goal. Each iteration sends only the executor
/// system prompt, this sub-goal and the rendered working memory, so executors
/// stay isolated from each other. Y_n requires the path-like contract outputs
/// to exist in the workspace and the completion to assert success.
inline SubGoalResult execute_subgoal(Provider& provider, const ToolRegistry& registry,
                                     SimulatedWorkspace& workspace, const SubGoal& subgoal,
                                     WorkingMemory& wm, const ExecuteOptions& opts) {
  SubGoalResult result;
  json scratch = json::object();
  std::map<std::string, int> errors_per_tool;
  bool aborted = false;
  bool asserted = false;

  const auto tool_specs = registry.specs();
  int local_steps = 0;
  auto next_step = [&]() -> int {
    return opts.step_counter ? ++*opts.step_counter : ++local_steps;
  };

  while (true) {
    const std::string user = prompts::interpolate(
        prompts::kExecutorUserTemplate,
        {{"index", std::to_string(subgoal.index)},
         {"instruction", subgoal.instruction},
         {"inputs", subgoal.contract.inputs.empty() ? "(none)"
                                                    : join(subgoal.contract.inputs, ", ")},
         {"outputs", join(subgoal.contract.outputs, ", ")},
         {"success_criteria", subgoal.contract.success_criteria.empty()
                                  ? "(none)"
                                  : join(subgoal.contract.success_criteria, "; ")},
         {"working_memory", wm.render()}});
    std::vector<ChatMessage> messages{{Role::system, prompts::kExecutorSystem},
                                      {Role::user, user}};

    ProviderResponse response;
    try {
      response = provider.complete(opts.role_tag, messages, tool_specs, opts.sampling);
    } catch (const std::exception&) {
      aborted = true;  // trace preserved for attribution
      break;
    }

    if (response.tool_calls.empty()) {
      result.completion_text = response.text;
      for (const auto& raw : split_lines(response.text)) {
        if (trim(raw).rfind("SUBGOAL COMPLETE", 0) == 0) {
          asserted = true;
          break;
        }
      }
      break;
    }

    std::vector<StepNote> notes;
    bool budget_blown = false;
    for (const auto& call : response.tool_calls) {
      if (static_cast<int>(result.trajectory.steps.size()) >= opts.max_steps) {
        budget_blown = true;
        break;
      }
      ToolAction action{call.tool_name, call.arguments, opts.executor_index};
      Observation obs;
      if (opts.workspace_mutex) {
        std::lock_guard<std::mutex> lock(*opts.workspace_mutex);
        obs = registry.invoke(workspace, action, scratch);
      } else {
        obs = registry.invoke(workspace, action, scratch);
      }
      result.trajectory.steps.push_back({action, obs});
      if (opts.log) {
        ordered_json call_payload;
        call_payload["tool_name"] = action.tool_name;
        call_payload["arguments"] = action.arguments;
        opts.log->push_back(
            {next_step(), LogKind::tool_call, opts.executor_index, call_payload});
        opts.log->push_back({next_step(), LogKind::tool_result, opts.executor_index,
                             observation_to_json(obs)});
      }
      notes.push_back({obs.tool_name,
                       obs.status == ObsStatus::ok ? "ok" : "error", obs.payload});
      if (obs.status == ObsStatus::error) {
        const int seen = ++errors_per_tool[call.tool_name];
        if (seen > opts.retry_budget) {
          budget_blown = true;
          break;
        }
      }
    }
    wm = update_working_memory(std::move(wm), notes, opts.summarizer);
    if (budget_blown ||
        static_cast<int>(result.trajectory.steps.size()) >= opts.max_steps) {
      aborted = true;
      break;
    }
  }

  bool outputs_ok = true;
  for (const auto& artifact : subgoal.contract.outputs) {
    if (artifact.rfind('/', 0) == 0 && !workspace.files.count(artifact)) {
      outputs_ok = false;
      break;
    }
  }
  result.success = !aborted && asserted && outputs_ok;
  return result;
}

struct FinalReport {
  std::string final_text;
  std::string reasoning_text;
  std::optional<Diagnostics> diagnostics;
};

/// Closes the loop: the orchestrator receives each segment outcome and emits
/// the diagnostics block plus the final answer tag.
inline FinalReport finalize(Provider& provider, const Query& query,
                            const std::vector<SubGoal>& plan,
                            const std::vector<SubGoalResult>& results,
                            const std::string& plan_text, const std::string& role_tag,
                            const SamplingParams& sampling) {
  std::ostringstream report;
  report << "All sub-goals have finished. Segment results:\n";
  for (size_t i = 0; i < plan.size(); ++i) {
    report << plan[i].index << ". " << plan[i].instruction << " -> "
           << (i < results.size() && results[i].success ? "success" : "failure") << "\n";
    if (i < results.size() && !results[i].trajectory.steps.empty()) {
      const auto& last = results[i].trajectory.steps.back().observation;
      report << "   last observation (" << last.tool_name << ", "
             << (last.status == ObsStatus::ok ? "ok" : "error")
             << "): " << last.payload.substr(0, 200) << "\n";
    }
  }
  report << "\nProduce the <Diag> block and the final <Answer> tag now.";

  std::vector<ChatMessage> messages{{Role::system, prompts::kOrchestratorSystem},
                                    {Role::user, report.str()}};
  const ProviderResponse response = provider.complete(role_tag, messages, {}, sampling);

  FinalReport out;
  out.final_text = response.text;
  out.reasoning_text = plan_text;
  out.diagnostics = parse_diagnostics(response.text);
  return out;
}

/// The gold-blind judge. A missing answer tag is an immediate format failure
/// with no provider call; an unparseable verdict gets one re-ask.
inline Outcome judge(Provider& provider, const Query& query,
                     const std::vector<Trajectory>& trajectories,
                     const std::string& final_text, const std::string& reasoning_text,
                     const std::optional<Diagnostics>& diagnostics,
                     const std::string& role_tag, const SamplingParams& sampling) {
  Outcome outcome;
  int step_count = 0;
  for (const auto& traj : trajectories) step_count += trajectory_length(traj);
  outcome.validity.step_count = step_count;

  if (!parse_answer(final_text)) {
    outcome.success = false;
    outcome.validity.format_compliant = false;
    outcome.validity.confidence = 0.0;
    outcome.validity.justification = "missing final answer tag";
    return outcome;
  }

  std::string diag_text = "N/A";
  if (diagnostics) {
    std::ostringstream d;
    d << "Tool summary:\n";
    for (const auto& line : diagnostics->tool_summary) d << "- " << line << "\n";
    d << "Failure reason: " << diagnostics->failure_reason;
    diag_text = d.str();
  }
  const std::string user = prompts::interpolate(
      prompts::kJudgeUserTemplate, {{"query_text", render_query(query)},
                                    {"final_text", final_text},
                                    {"reasoning_text", reasoning_text},
                                    {"tool_trace", render_tool_trace(trajectories)},
                                    {"diag_text", diag_text}});
  std::vector<ChatMessage> messages{{Role::system, prompts::kJudgeSystem},
                                    {Role::user, user}};

  ProviderResponse response = provider.complete(role_tag, messages, {}, sampling);
  auto verdict = parse_verdict(response.text);
  if (!verdict) {
    messages.push_back({Role::assistant, response.text});
    messages.push_back({Role::user, "Respond with ONLY the JSON verdict object."});
    response = provider.complete(role_tag, messages, {}, sampling);
    verdict = parse_verdict(response.text);
  }
  outcome.validity.format_compliant = true;
  if (!verdict) {
    outcome.success = false;
    outcome.validity.confidence = 0.0;
    outcome.validity.justification = "judge parse failure";
    return outcome;
  }
  outcome.success = verdict->decision == "SUCCESS";
  outcome.validity.confidence = verdict->confidence;
  outcome.validity.justification = verdict->justification;
  return outcome;
}

}  // namespace geoevolver
