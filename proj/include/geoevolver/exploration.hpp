#pragma once

#include "geoevolver/pipeline.hpp"

#include <future>
#include <string>
#include <vector>

namespace geoevolver {

enum class RunMode { evolve, inference };

inline std::string to_string(RunMode m) {
  return m == RunMode::evolve ? "evolve" : "inference";
}

inline RunMode run_mode_from_string(const std::string& s) {
  if (s == "evolve") return RunMode::evolve;
  if (s == "inference") return RunMode::inference;
  throw Error("unknown run mode: " + s);
}

/// Reward weights: success must dominate confidence, lengths only penalize.
struct RewardWeights {
  double alpha = 1.0;
  double beta = 0.1;
  double lambda = 0.001;

  void validate() const {
    if (!(alpha > beta) || beta < 0.0 || lambda < 0.0) {
      throw Error("reward weights require alpha > beta >= 0 and lambda >= 0");
    }
  }
};

inline double reward(const RewardWeights& w, int s, double gamma, int length) {
  return w.alpha * s + w.beta * gamma - w.lambda * length;
}

struct VariantConfig {
  int index = 1;
  std::string diversity_hint;
  long seed = 0;
  double temperature = 0.0;
  int retry_budget = 1;
};

struct ExplorationParams {
  int k_variants = 2;
  int n_executors_max = 3;
  int default_retries = 1;              // A
  std::vector<int> retries_per_variant; // optional per-variant override of A
  int top_k = 1;
  size_t tail_limit = 6;                // L
  RewardWeights weights;
  int max_steps = 200;                  // S_max per sub-goal
  long base_seed = 0;
  double base_temperature = 0.2;
  double temperature_step = 0.2;
  RunMode mode = RunMode::evolve;
  bool parallel_subgoals = false;
  bool parallel_variants = true;
  Summarizer summarizer;  // null -> deterministic fallback
};

/// Fixed rotation of strategy-orientation hints for variants beyond the first.
inline const std::vector<std::string>& diversity_rotation() {
  static const std::vector<std::string> kHints = {
      "Strategy orientation: prefer batch tools over per-file calls where available.",
      "Strategy orientation: verify intermediate artifacts with ls/glob before aggregating.",
      "Strategy orientation: validate parameter names and units before each tool call.",
      "Strategy orientation: re-check temporal filters and path constraints before computing.",
  };
  return kHints;
}

/// Deterministic in (query, i): variant 1 is the baseline, later variants get
/// rotated hints, stepped temperature and shifted seeds.
inline VariantConfig diversify(const Query&, int i, const ExplorationParams& params) {
  if (i < 1 || i > params.k_variants) throw Error("variant index out of range");
  VariantConfig vc;
  vc.index = i;
  vc.retry_budget = params.default_retries;
  if (!params.retries_per_variant.empty()) {
    if (static_cast<int>(params.retries_per_variant.size()) < params.k_variants) {
      throw Error("retries_per_variant must cover every variant");
    }
    vc.retry_budget = params.retries_per_variant[i - 1];
  }
  if (i == 1) {
    vc.seed = params.base_seed;
    vc.temperature = params.base_temperature;
    return vc;
  }
  const auto& rotation = diversity_rotation();
  vc.diversity_hint = rotation[(i - 2) % rotation.size()];
  vc.seed = params.base_seed + i;
  vc.temperature = params.base_temperature + (i - 1) * params.temperature_step;
  return vc;
}

struct CandidateSolution {
  int variant_index = 1;
  std::vector<Trajectory> trajectories;   // one per sub-goal
  std::vector<bool> segment_success;      // Y_n
  std::string final_text;
  std::string reasoning_text;
  std::optional<Diagnostics> diagnostics;
  std::optional<std::string> parsed_answer;  // y-hat
  Outcome outcome;                           // judge (Y, v)
  int s = 0;                                 // success label s_i
  double gamma = 0.0;
  double reward_value = 0.0;
  bool aborted = false;  // pipeline exception; partial trajectory retained
  std::vector<LogRecord> log;

  int total_steps() const {
    int n = 0;
    for (const auto& t : trajectories) n += trajectory_length(t);
    return n;
  }
};

/// Ordered selection key: verified success first, then reward, confidence,
/// fewer steps, lower variant index.
inline const CandidateSolution& select_best(const std::vector<CandidateSolution>& candidates) {
  if (candidates.empty()) throw Error("select_best: no candidates");
  const CandidateSolution* best = &candidates.front();
  auto key = [](const CandidateSolution& c) {
    return std::make_tuple(c.outcome.success ? 1 : 0, c.reward_value, c.gamma,
                           -c.total_steps(), -c.variant_index);
  };
  for (const auto& c : candidates) {
    if (key(c) > key(*best)) best = &c;
  }
  return *best;
}

struct ExplorationResult {
  std::vector<CandidateSolution> candidates;  // variant order
  int best_index = 1;                         // variant index of the winner
  StrategyContext context;
  std::vector<int> success_set;  // T+ variant indices (by s_i)
  std::vector<int> failure_set;  // T-

  const CandidateSolution& best() const {
    for (const auto& c : candidates) {
      if (c.variant_index == best_index) return c;
    }
    throw Error("exploration result lost its best candidate");
  }
};

namespace detail {

inline CandidateSolution run_variant(const Query& query, const StrategyContext& context,
                                     const ToolRegistry& registry,
                                     const SimulatedWorkspace& base_workspace,
                                     Provider& provider, const ExplorationParams& params,
                                     const VariantConfig& vc) {
  CandidateSolution candidate;
  candidate.variant_index = vc.index;
  const std::string prefix = "variant-" + std::to_string(vc.index);
  const SamplingParams sampling{vc.seed, vc.temperature};
  int step_counter = 0;

  try {
    SimulatedWorkspace workspace = base_workspace;  // variant-owned clone
    std::string plan_text;
    const std::vector<SubGoal> plan =
        orchestrate(provider, query, context, vc.diversity_hint, params.n_executors_max,
                    prefix + ".orchestrator", sampling, &plan_text);

    std::vector<SubGoalResult> results(plan.size());
    auto run_goal = [&](size_t g, std::vector<LogRecord>* log, int* counter,
                        std::mutex* ws_mutex) {
      WorkingMemory wm;
      wm.tail_limit = params.tail_limit;
      ExecuteOptions opts;
      opts.role_tag = prefix + ".executor-" + std::to_string(g + 1);
      opts.executor_index = static_cast<int>(g + 1);
      opts.retry_budget = vc.retry_budget;
      opts.max_steps = params.max_steps;
      opts.sampling = sampling;
      opts.summarizer = params.summarizer;
      opts.log = log;
      opts.step_counter = counter;
      opts.workspace_mutex = ws_mutex;
      results[g] = execute_subgoal(provider, registry, workspace, plan[g], wm, opts);
    };

    if (params.parallel_subgoals && plan.size() > 1) {
      std::mutex ws_mutex;
      std::vector<std::vector<LogRecord>> logs(plan.size());
      std::vector<int> counters(plan.size(), 0);
      std::vector<std::future<void>> futures;
      for (size_t g = 0; g < plan.size(); ++g) {
        futures.push_back(std::async(std::launch::async, run_goal, g, &logs[g],
                                     &counters[g], &ws_mutex));
      }
      for (auto& f : futures) f.get();
      // Renumber per-goal logs into one deterministic stream, goal order.
      for (auto& goal_log : logs) {
        for (auto& record : goal_log) {
          record.step = ++step_counter;
          candidate.log.push_back(std::move(record));
        }
      }
    } else {
      for (size_t g = 0; g < plan.size(); ++g) {
        run_goal(g, &candidate.log, &step_counter, nullptr);
      }
    }

    for (const auto& r : results) {
      candidate.trajectories.push_back(r.trajectory);
      candidate.segment_success.push_back(r.success);
    }

    const FinalReport report = finalize(provider, query, plan, results, plan_text,
                                        prefix + ".orchestrator", sampling);
    candidate.final_text = report.final_text;
    candidate.reasoning_text = report.reasoning_text;
    candidate.diagnostics = report.diagnostics;
    candidate.parsed_answer = parse_answer(report.final_text);

    if (candidate.diagnostics) {
      candidate.log.push_back({++step_counter, LogKind::diagnostics, 0,
                               diagnostics_to_json(*candidate.diagnostics)});
    }

    candidate.outcome =
        judge(provider, query, candidate.trajectories, candidate.final_text,
              candidate.reasoning_text, candidate.diagnostics, prefix + ".judge", sampling);
  } catch (const std::exception& e) {
    candidate.aborted = true;
    candidate.outcome.success = false;
    candidate.outcome.validity.confidence = 0.0;
    candidate.outcome.validity.step_count = candidate.total_steps();
    candidate.outcome.validity.justification = std::string("variant aborted: ") + e.what();
  }

  if (params.mode == RunMode::evolve && query.gold_answer) {
    candidate.s = candidate.parsed_answer &&
                          answers_match(*candidate.parsed_answer, *query.gold_answer,
                                        query.has_choices())
                      ? 1
                      : 0;
  } else {
    candidate.s = candidate.outcome.success ? 1 : 0;
  }
  candidate.gamma = candidate.outcome.validity.confidence;
  candidate.reward_value =
      reward(params.weights, candidate.s, candidate.gamma, candidate.total_steps());

  ordered_json final_payload;
  final_payload["final_text"] = candidate.final_text;
  if (candidate.parsed_answer) {
    final_payload["answer"] = *candidate.parsed_answer;
  } else {
    final_payload["answer"] = nullptr;
  }
  candidate.log.push_back({++step_counter, LogKind::final_answer, 0, final_payload});
  return candidate;
}

}  // namespace detail

/// Full episode exploration: retrieve once, then run K diversified variants of
/// the retrieve-plan-execute-judge pipeline and select the best candidate.
/// A variant that aborts becomes a failed candidate; only an episode where all
/// variants abort is an error.
inline ExplorationResult run_exploration(const Query& query, const MemoryBank& bank,
                                         const ToolRegistry& registry,
                                         const SimulatedWorkspace& workspace,
                                         Provider& provider,
                                         const ExplorationParams& params) {
  if (params.k_variants < 1) throw Error("exploration requires k_variants >= 1");
  params.weights.validate();

  ExplorationResult result;
  const std::optional<std::string> leakage_context = query.gold_answer;
  result.context = retrieve(query, bank, params.top_k, leakage_context);

  auto run_one = [&](int i) {
    return detail::run_variant(query, result.context, registry, workspace, provider, params,
                               diversify(query, i, params));
  };

  if (params.parallel_variants && params.k_variants > 1) {
    std::vector<std::future<CandidateSolution>> futures;
    for (int i = 1; i <= params.k_variants; ++i) {
      futures.push_back(std::async(std::launch::async, run_one, i));
    }
    for (auto& f : futures) result.candidates.push_back(f.get());
  } else {
    for (int i = 1; i <= params.k_variants; ++i) result.candidates.push_back(run_one(i));
  }

  bool any_completed = false;
  for (const auto& c : result.candidates) {
    if (!c.aborted) any_completed = true;
    (c.s == 1 ? result.success_set : result.failure_set).push_back(c.variant_index);
  }
  if (!any_completed) {
    throw Error("all exploration variants aborted for query " + query.id);
  }
  result.best_index = select_best(result.candidates).variant_index;
  return result;
}

}  // namespace geoevolver
