#pragma once

#include "geoevolver/core.hpp"
#include "geoevolver/embedding.hpp"
#include "geoevolver/evolution.hpp"
#include "geoevolver/exploration.hpp"
#include "geoevolver/memory_bank.hpp"
#include "geoevolver/metrics.hpp"
#include "geoevolver/provider.hpp"
#include "geoevolver/tools.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace geoevolver {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class ProviderKind { scripted, remote };
enum class EncoderKind { hashed_local, remote };

struct Config {
  int k_variants = 2;
  int n_executors_max = 3;
  int retries_A = 1;
  std::vector<int> retries_per_variant;
  int top_k = 1;
  int tail_L = 6;
  RewardWeights weights;
  int s_max_steps = 200;
  ProviderKind provider = ProviderKind::scripted;
  RemoteConfig remote;
  EncoderKind encoder = EncoderKind::hashed_local;
  int encoder_dim = 256;
  RunMode mode = RunMode::evolve;
  long seed = 0;
  std::string memory_path;
  std::string output_dir = "runs";
  std::string run_id;  // empty -> "run-<seed>"
  bool core_tools_only = false;
  double base_temperature = 0.2;
  double temperature_step = 0.2;
  bool parallel_subgoals = false;
  bool parallel_variants = true;

  std::string effective_run_id() const {
    return run_id.empty() ? "run-" + std::to_string(seed) : run_id;
  }

  void validate() const {
    if (k_variants < 1 || n_executors_max < 1 || top_k < 1 || tail_L < 1 || s_max_steps < 1) {
      throw Error("config counts must be >= 1");
    }
    if (retries_A < 0) throw Error("retries_A must be >= 0");
    for (int r : retries_per_variant) {
      if (r < 0) throw Error("retries_per_variant entries must be >= 0");
    }
    if (encoder_dim < 8) throw Error("encoder_dim must be >= 8");
    weights.validate();
  }

  void apply_kv(const std::string& key, const std::string& value);

  /// Flat key/value text: one `key = value` per line, '#' comments.
  static Config from_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file: " + path.string());
    Config config;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string stripped = trim(line);
      if (stripped.empty() || stripped[0] == '#') continue;
      const size_t eq = stripped.find('=');
      if (eq == std::string::npos) {
        throw Error("config " + path.string() + ": line " + std::to_string(line_no) +
                    ": expected key = value");
      }
      try {
        config.apply_kv(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
      } catch (const std::exception& e) {
        throw Error("config " + path.string() + ": line " + std::to_string(line_no) + ": " +
                    e.what());
      }
    }
    return config;
  }
};

inline void Config::apply_kv(const std::string& key, const std::string& value) {
  auto as_bool = [&]() {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw Error("expected boolean for " + key + ", got '" + value + "'");
  };
  if (key == "k_variants") k_variants = std::stoi(value);
  else if (key == "n_executors_max") n_executors_max = std::stoi(value);
  else if (key == "retries_A") retries_A = std::stoi(value);
  else if (key == "retries_per_variant") {
    retries_per_variant.clear();
    std::istringstream in(value);
    std::string part;
    while (std::getline(in, part, ',')) retries_per_variant.push_back(std::stoi(trim(part)));
  }
  else if (key == "top_k") top_k = std::stoi(value);
  else if (key == "tail_L") tail_L = std::stoi(value);
  else if (key == "alpha") weights.alpha = std::stod(value);
  else if (key == "beta") weights.beta = std::stod(value);
  else if (key == "lambda") weights.lambda = std::stod(value);
  else if (key == "s_max_steps") s_max_steps = std::stoi(value);
  else if (key == "provider") {
    if (value == "scripted") provider = ProviderKind::scripted;
    else if (value == "remote") provider = ProviderKind::remote;
    else throw Error("unknown provider kind: " + value);
  }
  else if (key == "remote_endpoint") remote.endpoint = value;
  else if (key == "remote_model") remote.model = value;
  else if (key == "remote_embedding_model") remote.embedding_model = value;
  else if (key == "remote_key_env") remote.api_key_env = value;
  else if (key == "encoder") {
    if (value == "hashed_local") encoder = EncoderKind::hashed_local;
    else if (value == "remote") encoder = EncoderKind::remote;
    else throw Error("unknown encoder kind: " + value);
  }
  else if (key == "encoder_dim") encoder_dim = std::stoi(value);
  else if (key == "mode") mode = run_mode_from_string(value);
  else if (key == "seed") seed = std::stol(value);
  else if (key == "memory_path") memory_path = value;
  else if (key == "output_dir") output_dir = value;
  else if (key == "run_id") run_id = value;
  else if (key == "core_tools_only") core_tools_only = as_bool();
  else if (key == "base_temperature") base_temperature = std::stod(value);
  else if (key == "temperature_step") temperature_step = std::stod(value);
  else if (key == "parallel_subgoals") parallel_subgoals = as_bool();
  else if (key == "parallel_variants") parallel_variants = as_bool();
  else throw Error("unknown config key: " + key);
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// One benchmark record plus the fixture bundle that makes it runnable.
struct DatasetRecord {
  Query query;
  fs::path fixture_dir;  // holds workspace.json and script.json
};

inline Query query_from_json(const json& j) {
  Query q;
  q.id = j.at("id").get<std::string>();
  q.text = j.at("text").get<std::string>();
  if (q.id.empty()) throw Error("query id must be nonempty");
  if (j.contains("choices")) {
    std::set<std::string> labels;
    for (const auto& c : j.at("choices")) {
      const std::string label = c.at(0).get<std::string>();
      if (!labels.insert(label).second) {
        throw Error("duplicate choice label '" + label + "' in query " + q.id);
      }
      q.choices.emplace_back(label, c.at(1).get<std::string>());
    }
  }
  if (j.contains("gold_answer") && !j.at("gold_answer").is_null()) {
    q.gold_answer = j.at("gold_answer").get<std::string>();
    if (q.has_choices()) {
      bool found = false;
      for (const auto& [label, _] : q.choices) found = found || label == *q.gold_answer;
      if (!found) {
        throw Error("gold answer '" + *q.gold_answer + "' is not a choice label in query " +
                    q.id);
      }
    }
  }
  if (j.contains("gold_tool_sequence") && !j.at("gold_tool_sequence").is_null()) {
    q.gold_tool_sequence = j.at("gold_tool_sequence").get<std::vector<std::string>>();
  }
  if (j.contains("fixture_ref") && !j.at("fixture_ref").is_null()) {
    q.fixture_ref = j.at("fixture_ref").get<std::string>();
  }
  return q;
}

/// One JSON record per line; fixture bundles live in a sibling fixtures/
/// directory keyed by fixture_ref (default: the query id).
inline std::vector<DatasetRecord> load_dataset(const fs::path& dataset_path) {
  std::ifstream in(dataset_path);
  if (!in) throw Error("cannot open dataset: " + dataset_path.string());
  const fs::path fixtures_root = dataset_path.parent_path() / "fixtures";
  std::vector<DatasetRecord> records;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    DatasetRecord record;
    try {
      record.query = query_from_json(json::parse(line));
    } catch (const std::exception& e) {
      throw Error("dataset " + dataset_path.string() + ": line " + std::to_string(line_no) +
                  ": " + e.what());
    }
    if (!ids.insert(record.query.id).second) {
      throw Error("duplicate query id in dataset: " + record.query.id);
    }
    record.fixture_dir = fixtures_root / record.query.fixture_ref.value_or(record.query.id);
    if (!fs::exists(record.fixture_dir / "workspace.json")) {
      throw Error("fixture bundle missing for query " + record.query.id + ": " +
                  (record.fixture_dir / "workspace.json").string());
    }
    records.push_back(std::move(record));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Episode manifest
// ---------------------------------------------------------------------------

struct VariantSummary {
  int index = 1;
  int s = 0;
  double gamma = 0.0;
  double reward = 0.0;
  bool judge_success = false;  // Y
  std::optional<std::string> answer;
  int steps = 0;
  std::vector<bool> segment_success;
  bool all_segments_success = false;
  std::string log_file;
};

struct EpisodeManifest {
  std::string query_id;
  int selected_variant = 1;
  std::vector<VariantSummary> variants;
  std::vector<std::string> retrieved_keys;
  std::string retrieved_context;
  std::vector<std::string> inserted_keys;
  std::optional<std::string> final_answer;
  std::optional<bool> numeric_match;
  json metrics;  // per-episode metric values, null fields when gold missing
  std::vector<std::string> events;
  bool failed = false;
  std::string error;
};

inline ordered_json manifest_to_json(const EpisodeManifest& m) {
  ordered_json j;
  j["query_id"] = m.query_id;
  j["failed"] = m.failed;
  if (m.failed) j["error"] = m.error;
  j["selected_variant"] = m.selected_variant;
  ordered_json variants = ordered_json::array();
  for (const auto& v : m.variants) {
    ordered_json vj;
    vj["index"] = v.index;
    vj["s"] = v.s;
    vj["gamma"] = v.gamma;
    vj["reward"] = v.reward;
    vj["judge_success"] = v.judge_success;
    if (v.answer) vj["answer"] = *v.answer; else vj["answer"] = nullptr;
    vj["steps"] = v.steps;
    vj["segment_success"] = v.segment_success;
    vj["all_segments_success"] = v.all_segments_success;
    vj["log_file"] = v.log_file;
    variants.push_back(vj);
  }
  j["variants"] = variants;
  j["retrieved_keys"] = m.retrieved_keys;
  j["retrieved_context"] = m.retrieved_context;
  j["inserted_keys"] = m.inserted_keys;
  if (m.final_answer) j["final_answer"] = *m.final_answer; else j["final_answer"] = nullptr;
  if (m.numeric_match) j["numeric_match"] = *m.numeric_match;
  else j["numeric_match"] = nullptr;
  j["metrics"] = m.metrics;
  j["events"] = m.events;
  return j;
}

inline EpisodeManifest manifest_from_json(const json& j) {
  EpisodeManifest m;
  m.query_id = j.at("query_id").get<std::string>();
  m.failed = j.value("failed", false);
  m.error = j.value("error", "");
  m.selected_variant = j.value("selected_variant", 1);
  if (j.contains("variants")) {
    for (const auto& vj : j.at("variants")) {
      VariantSummary v;
      v.index = vj.at("index").get<int>();
      v.s = vj.value("s", 0);
      v.gamma = vj.value("gamma", 0.0);
      v.reward = vj.value("reward", 0.0);
      v.judge_success = vj.value("judge_success", false);
      if (vj.contains("answer") && !vj.at("answer").is_null()) {
        v.answer = vj.at("answer").get<std::string>();
      }
      v.steps = vj.value("steps", 0);
      if (vj.contains("segment_success")) {
        v.segment_success = vj.at("segment_success").get<std::vector<bool>>();
      }
      v.all_segments_success = vj.value("all_segments_success", false);
      v.log_file = vj.value("log_file", "");
      m.variants.push_back(std::move(v));
    }
  }
  if (j.contains("retrieved_keys")) {
    m.retrieved_keys = j.at("retrieved_keys").get<std::vector<std::string>>();
  }
  m.retrieved_context = j.value("retrieved_context", "");
  if (j.contains("inserted_keys")) {
    m.inserted_keys = j.at("inserted_keys").get<std::vector<std::string>>();
  }
  if (j.contains("final_answer") && !j.at("final_answer").is_null()) {
    m.final_answer = j.at("final_answer").get<std::string>();
  }
  if (j.contains("numeric_match") && !j.at("numeric_match").is_null()) {
    m.numeric_match = j.at("numeric_match").get<bool>();
  }
  if (j.contains("metrics")) m.metrics = j.at("metrics");
  if (j.contains("events")) m.events = j.at("events").get<std::vector<std::string>>();
  return m;
}

// ---------------------------------------------------------------------------
// Benchmark runner
// ---------------------------------------------------------------------------

namespace detail {

inline std::optional<double> parse_number(const std::string& s) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

inline std::vector<std::string> predicted_tool_sequence(const CandidateSolution& candidate,
                                                        const std::set<std::string>& aux,
                                                        bool core_only) {
  std::vector<std::string> seq;
  for (const auto& traj : candidate.trajectories) {
    const auto part = core_only ? tool_sequence(traj, aux) : tool_sequence(traj);
    seq.insert(seq.end(), part.begin(), part.end());
  }
  return seq;
}

inline json episode_metrics_json(const Query& query, const CandidateSolution& best,
                                 const std::set<std::string>& aux, bool core_only) {
  ordered_json metrics;
  metrics["accuracy"] = nullptr;
  metrics["efficiency"] = nullptr;
  metrics["tao"] = nullptr;
  metrics["tio"] = nullptr;
  metrics["tem"] = nullptr;
  metrics["m"] = nullptr;
  metrics["n"] = nullptr;
  if (query.gold_answer && best.parsed_answer) {
    metrics["accuracy"] =
        accuracy(*best.parsed_answer, *query.gold_answer, query.has_choices());
  } else if (query.gold_answer) {
    metrics["accuracy"] = 0;
  }
  if (query.gold_tool_sequence && !query.gold_tool_sequence->empty()) {
    const auto pred = predicted_tool_sequence(best, aux, core_only);
    const auto& gold = *query.gold_tool_sequence;
    metrics["efficiency"] =
        efficiency(static_cast<int>(pred.size()), static_cast<int>(gold.size()));
    metrics["tao"] = tool_any_order(gold, pred);
    metrics["tio"] = tool_in_order(gold, pred);
    metrics["tem"] = tool_exact_match(gold, pred);
    metrics["m"] = gold.size();
    metrics["n"] = pred.size();
  }
  return metrics;
}

}  // namespace detail

class BenchmarkRunner {
 public:
  BenchmarkRunner(Config config, std::shared_ptr<Provider> remote_provider = nullptr)
      : config_(std::move(config)), remote_provider_(std::move(remote_provider)) {
    config_.validate();
    encoder_ = make_encoder();
  }

  /// Algorithm outer loop: per query, retrieve -> explore -> select ->
  /// extract/distill -> consolidate -> persist. The bank carries across
  /// queries; per-query failures yield failed manifests and the run continues.
  std::vector<EpisodeManifest> run(const std::vector<DatasetRecord>& dataset) {
    if (dataset.empty()) throw Error("dataset is empty");
    const fs::path run_dir = fs::path(config_.output_dir) / config_.effective_run_id();
    fs::create_directories(run_dir);

    const fs::path bank_path = config_.memory_path.empty()
                                   ? run_dir / "bank.jsonl"
                                   : fs::path(config_.memory_path);
    MemoryBank bank = fs::exists(bank_path) ? MemoryBank::load(bank_path, encoder_)
                                            : MemoryBank(encoder_);
    bank.attach(bank_path);
    if (!fs::exists(bank_path)) std::ofstream(bank_path).flush();

    const ToolRegistry registry = make_default_registry();
    std::vector<EpisodeManifest> manifests;
    for (const auto& record : dataset) {
      EpisodeManifest manifest;
      manifest.query_id = record.query.id;
      const fs::path episode_dir = run_dir / record.query.id;
      fs::create_directories(episode_dir);
      try {
        run_episode(record, registry, bank, episode_dir, manifest);
      } catch (const std::exception& e) {
        manifest.failed = true;
        manifest.error = e.what();
      }
      std::ofstream out(episode_dir / "manifest.json");
      out << manifest_to_json(manifest).dump(2) << "\n";
      bank.persist(episode_dir / "bank.jsonl");
      manifests.push_back(std::move(manifest));
    }
    bank.persist(run_dir / "bank.final.jsonl");
    return manifests;
  }

  const Config& config() const { return config_; }

 private:
  std::shared_ptr<const TextEncoder> make_encoder() const {
    if (config_.encoder == EncoderKind::hashed_local) {
      return std::make_shared<HashedEncoder>(config_.encoder_dim);
    }
    if (!remote_provider_) {
      throw Error("remote encoder configured without a remote provider");
    }
    return std::make_shared<RemoteEncoder>(remote_provider_, config_.encoder_dim);
  }

  std::shared_ptr<Provider> make_provider(const DatasetRecord& record) const {
    if (config_.provider == ProviderKind::remote) {
      if (!remote_provider_) throw Error("remote provider not constructed");
      return remote_provider_;
    }
    const fs::path script_path = record.fixture_dir / "script.json";
    if (!fs::exists(script_path)) {
      throw Error("script fixture missing for query " + record.query.id + ": " +
                  script_path.string());
    }
    return std::make_shared<ScriptedProvider>(Script::load(script_path));
  }

  ExplorationParams exploration_params() const {
    ExplorationParams params;
    params.k_variants = config_.k_variants;
    params.n_executors_max = config_.n_executors_max;
    params.default_retries = config_.retries_A;
    params.retries_per_variant = config_.retries_per_variant;
    params.top_k = config_.top_k;
    params.tail_limit = static_cast<size_t>(config_.tail_L);
    params.weights = config_.weights;
    params.max_steps = config_.s_max_steps;
    params.base_seed = config_.seed;
    params.base_temperature = config_.base_temperature;
    params.temperature_step = config_.temperature_step;
    params.mode = config_.mode;
    params.parallel_subgoals = config_.parallel_subgoals;
    params.parallel_variants = config_.parallel_variants;
    return params;
  }

  void run_episode(const DatasetRecord& record, const ToolRegistry& registry,
                   MemoryBank& bank, const fs::path& episode_dir,
                   EpisodeManifest& manifest) {
    const SimulatedWorkspace workspace =
        SimulatedWorkspace::load(record.fixture_dir / "workspace.json");
    const std::shared_ptr<Provider> provider = make_provider(record);
    const EnvironmentState env{workspace.root, registry.tool_names(), config_.seed};
    if (env.tool_names != registry.tool_names()) {
      throw Error("environment tool set diverged from the registry");
    }
    validate_workspace_tools(workspace, registry);

    const ExplorationResult result = run_exploration(
        record.query, bank, registry, workspace, *provider, exploration_params());

    for (const auto& key : result.context.item_keys) {
      manifest.retrieved_keys.push_back(key.display());
    }
    manifest.retrieved_context = result.context.rendered;
    manifest.selected_variant = result.best_index;

    for (const auto& candidate : result.candidates) {
      const std::string log_name = "variant-" + std::to_string(candidate.variant_index) + ".log";
      std::ofstream log_out(episode_dir / log_name);
      for (const auto& rec : candidate.log) log_out << to_log_line(rec) << "\n";

      VariantSummary summary;
      summary.index = candidate.variant_index;
      summary.s = candidate.s;
      summary.gamma = candidate.gamma;
      summary.reward = candidate.reward_value;
      summary.judge_success = candidate.outcome.success;
      summary.answer = candidate.parsed_answer;
      summary.steps = candidate.total_steps();
      summary.segment_success = candidate.segment_success;
      summary.all_segments_success = all_segments_success(candidate.segment_success);
      summary.log_file = log_name;
      manifest.variants.push_back(std::move(summary));
    }

    const CandidateSolution& best = result.best();
    manifest.final_answer = best.parsed_answer;
    if (record.query.gold_answer && best.parsed_answer) {
      const auto gold_num = detail::parse_number(*record.query.gold_answer);
      const auto pred_num = detail::parse_number(normalize_answer(*best.parsed_answer));
      if (gold_num && pred_num) {
        manifest.numeric_match = std::abs(*gold_num - *pred_num) <=
                                 1e-9 * std::max(1.0, std::abs(*gold_num));
      }
    }

    // Phase 3: distill experience and consolidate into the bank.
    std::vector<MemoryItem> items =
        extract_single(*provider, record.query, best, *encoder_, &manifest.events);
    std::vector<MemoryItem> contrastive = distill_contrastive(
        *provider, record.query, result.candidates, *encoder_, &manifest.events);
    items.insert(items.end(), contrastive.begin(), contrastive.end());
    const long first_new_sequence = bank.next_sequence();
    consolidate(bank, items);
    for (const auto& item : bank.items_snapshot()) {
      if (item.sequence >= first_new_sequence) {
        manifest.inserted_keys.push_back(CanonicalKey::of(item).display());
      }
    }

    const auto aux = registry.auxiliary_names();
    manifest.metrics =
        detail::episode_metrics_json(record.query, best, aux, config_.core_tools_only);
  }

  Config config_;
  std::shared_ptr<const TextEncoder> encoder_;
  std::shared_ptr<Provider> remote_provider_;
};

// ---------------------------------------------------------------------------
// Log evaluation
// ---------------------------------------------------------------------------

inline std::vector<LogRecord> load_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open log file: " + path.string());
  std::vector<LogRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(parse_log_line(line));
    } catch (const std::exception& e) {
      throw Error(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

inline std::vector<std::string> log_tool_sequence(const std::vector<LogRecord>& records,
                                                  const std::set<std::string>& exclude) {
  std::vector<std::string> seq;
  for (const auto& r : records) {
    if (r.kind != LogKind::tool_call) continue;
    const std::string tool = r.payload.at("tool_name").get<std::string>();
    if (!exclude.count(tool)) seq.push_back(tool);
  }
  return seq;
}

inline std::optional<std::string> log_final_answer(const std::vector<LogRecord>& records) {
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    if (it->kind == LogKind::final_answer) {
      if (it->payload.contains("answer") && !it->payload.at("answer").is_null()) {
        return it->payload.at("answer").get<std::string>();
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

/// Recomputes the metric table from the persisted run artifacts. Episodes
/// without a gold trajectory keep accuracy but have absent trajectory metrics.
inline MetricReport evaluate_logs(const std::vector<DatasetRecord>& dataset,
                                  const fs::path& run_dir, bool core_tools_only) {
  const std::set<std::string> aux = make_default_registry().auxiliary_names();
  std::vector<EpisodeMetrics> episodes;
  for (const auto& record : dataset) {
    const fs::path episode_dir = run_dir / record.query.id;
    const fs::path manifest_path = episode_dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
      throw Error("missing manifest for query " + record.query.id + ": " +
                  manifest_path.string());
    }
    std::ifstream in(manifest_path);
    json mj;
    in >> mj;
    const EpisodeManifest manifest = manifest_from_json(mj);

    EpisodeMetrics em;
    em.query_id = record.query.id;
    std::optional<std::string> answer;
    std::vector<std::string> pred_seq;
    if (!manifest.failed && !manifest.variants.empty()) {
      for (const auto& v : manifest.variants) {
        if (v.index != manifest.selected_variant) continue;
        const auto records = load_log(episode_dir / v.log_file);
        answer = log_final_answer(records);
        pred_seq = log_tool_sequence(records,
                                     core_tools_only ? aux : std::set<std::string>{});
      }
    }
    if (record.query.gold_answer) {
      em.accuracy = answer ? accuracy(*answer, *record.query.gold_answer,
                                      record.query.has_choices())
                           : 0;
    }
    if (record.query.gold_tool_sequence && !record.query.gold_tool_sequence->empty()) {
      const auto& gold = *record.query.gold_tool_sequence;
      em.m = static_cast<int>(gold.size());
      em.n = static_cast<int>(pred_seq.size());
      em.efficiency = efficiency(*em.n, *em.m);
      em.tao = tool_any_order(gold, pred_seq);
      em.tio = tool_in_order(gold, pred_seq);
      em.tem = tool_exact_match(gold, pred_seq);
    }
    episodes.push_back(std::move(em));
  }
  return aggregate_metrics(std::move(episodes));
}

/// Table 1 style rendering: percentages for the tool metrics and accuracy,
/// raw ratio for efficiency.
inline std::string render_metric_table(const MetricReport& report) {
  std::ostringstream out;
  auto pct = [](const std::optional<double>& v) -> std::string {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
    return buf;
  };
  auto ratio = [](const std::optional<double>& v) -> std::string {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *v);
    return buf;
  };
  out << std::left << std::setw(16) << "Query" << std::right << std::setw(10) << "Tool-A-O"
      << std::setw(10) << "Tool-I-O" << std::setw(10) << "Tool-E-M" << std::setw(12)
      << "Efficiency" << std::setw(10) << "Accuracy" << "\n";
  for (const auto& e : report.episodes) {
    out << std::left << std::setw(16) << e.query_id << std::right << std::setw(10)
        << pct(e.tao) << std::setw(10) << pct(e.tio) << std::setw(10) << pct(e.tem)
        << std::setw(12) << ratio(e.efficiency) << std::setw(10) << pct(e.accuracy) << "\n";
  }
  out << std::left << std::setw(16) << "mean" << std::right << std::setw(10)
      << pct(report.mean_tao) << std::setw(10) << pct(report.mean_tio) << std::setw(10)
      << pct(report.mean_tem) << std::setw(12) << ratio(report.mean_efficiency)
      << std::setw(10) << pct(report.mean_accuracy) << "\n";
  return out.str();
}

inline ordered_json metric_report_to_json(const MetricReport& report) {
  ordered_json j;
  ordered_json rows = ordered_json::array();
  auto put = [](ordered_json& obj, const char* key, const std::optional<double>& v) {
    if (v) obj[key] = *v; else obj[key] = nullptr;
  };
  for (const auto& e : report.episodes) {
    ordered_json row;
    row["query_id"] = e.query_id;
    put(row, "accuracy", e.accuracy);
    put(row, "efficiency", e.efficiency);
    put(row, "tao", e.tao);
    put(row, "tio", e.tio);
    put(row, "tem", e.tem);
    if (e.m) row["m"] = *e.m; else row["m"] = nullptr;
    if (e.n) row["n"] = *e.n; else row["n"] = nullptr;
    rows.push_back(row);
  }
  j["episodes"] = rows;
  ordered_json means;
  put(means, "accuracy", report.mean_accuracy);
  put(means, "efficiency", report.mean_efficiency);
  put(means, "tao", report.mean_tao);
  put(means, "tio", report.mean_tio);
  put(means, "tem", report.mean_tem);
  j["means"] = means;
  return j;
}

// ---------------------------------------------------------------------------
// Memory CLI views
// ---------------------------------------------------------------------------

/// Card layout used by `memory show` and `memory export`.
inline std::string render_memory_card(const MemoryItem& item) {
  std::ostringstream out;
  out << "Title: " << item.title << "\n";
  out << "Pattern Type: "
      << (item.pattern_type == PatternType::analysis_pattern ? "Analysis Pattern"
                                                             : "Error Attribution")
      << " | Source Problem ID: " << item.source_id << " | Success: "
      << (item.pattern_type == PatternType::analysis_pattern ? "True" : "False") << "\n";
  out << "Description: " << item.description << "\n";
  out << "Content: " << item.content << "\n";
  if (!item.action_items.empty()) {
    out << "Action Items:\n";
    for (size_t i = 0; i < item.action_items.size(); ++i) {
      out << "  " << (i + 1) << ". " << item.action_items[i] << "\n";
    }
  }
  if (!item.detection_cues.empty()) {
    out << "Detection Cues:\n";
    for (const auto& cue : item.detection_cues) out << "  - " << cue << "\n";
  }
  out << "Failure Cause: "
      << (item.failure_cause ? *item.failure_cause : "None (successful pattern).") << "\n";
  return out.str();
}

inline std::string memory_ls(const MemoryBank& bank) {
  const auto items = bank.items_snapshot();
  std::ostringstream out;
  out << items.size() << " items\n";
  for (const auto& item : items) {
    out << "[" << item.sequence << "] " << CanonicalKey::of(item).display() << "\n";
  }
  return out.str();
}

inline std::string memory_show(const MemoryBank& bank, const std::string& key) {
  for (const auto& item : bank.items_snapshot()) {
    if (CanonicalKey::of(item).display() == key ||
        std::to_string(item.sequence) == key) {
      return render_memory_card(item);
    }
  }
  throw Error("unknown memory key: " + key);
}

inline std::string memory_export(const MemoryBank& bank) {
  std::ostringstream out;
  const auto items = bank.items_snapshot();
  for (size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out << "\n";
    out << render_memory_card(items[i]);
  }
  return out.str();
}

inline ordered_json memory_stats_json(const MemoryBank& bank) {
  size_t analysis = 0, attribution = 0;
  for (const auto& item : bank.items_snapshot()) {
    (item.pattern_type == PatternType::analysis_pattern ? analysis : attribution)++;
  }
  ordered_json j;
  j["analysis_pattern"] = analysis;
  j["error_attribution"] = attribution;
  j["total"] = analysis + attribution;
  return j;
}

inline std::string memory_stats(const MemoryBank& bank) {
  size_t analysis = 0, attribution = 0;
  for (const auto& item : bank.items_snapshot()) {
    (item.pattern_type == PatternType::analysis_pattern ? analysis : attribution)++;
  }
  std::ostringstream out;
  out << "analysis_pattern: " << analysis << "\n";
  out << "error_attribution: " << attribution << "\n";
  out << "total: " << (analysis + attribution) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

/// Re-renders an episode from its persisted manifest and logs, verifying that
/// every log line round-trips bit-exactly.
inline std::string replay_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot open manifest: " + manifest_path.string());
  json mj;
  in >> mj;
  const EpisodeManifest manifest = manifest_from_json(mj);
  const fs::path episode_dir = manifest_path.parent_path();

  std::ostringstream out;
  out << "Episode " << manifest.query_id << (manifest.failed ? " (FAILED)" : "") << "\n";
  if (manifest.failed) out << "error: " << manifest.error << "\n";
  out << "selected variant: " << manifest.selected_variant << "\n";
  if (!manifest.retrieved_keys.empty()) {
    out << "retrieved:\n";
    for (const auto& key : manifest.retrieved_keys) out << "  " << key << "\n";
  }
  for (const auto& v : manifest.variants) {
    out << "variant " << v.index << ": s=" << v.s << " gamma=" << v.gamma
        << " reward=" << v.reward << " steps=" << v.steps
        << " judge=" << (v.judge_success ? "SUCCESS" : "FAILURE") << "\n";
    const fs::path log_path = episode_dir / v.log_file;
    std::ifstream log_in(log_path);
    if (!log_in) throw Error("cannot open log file: " + log_path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(log_in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const LogRecord record = parse_log_line(line);
      if (to_log_line(record) != line) {
        throw Error(log_path.string() + ": line " + std::to_string(line_no) +
                    ": log line does not round-trip");
      }
      if (record.kind == LogKind::tool_call) {
        out << "  [" << record.step << "] call " << record.payload.at("tool_name").get<std::string>()
            << " (executor " << record.executor << ")\n";
      } else if (record.kind == LogKind::tool_result) {
        const std::string payload = record.payload.at("payload").get<std::string>();
        out << "  [" << record.step << "] " << record.payload.at("status").get<std::string>()
            << " " << payload.substr(0, 100) << "\n";
      } else if (record.kind == LogKind::diagnostics) {
        out << "  [" << record.step << "] diagnostics, failure reason: "
            << record.payload.at("failure_reason").get<std::string>() << "\n";
      } else if (record.kind == LogKind::final_answer) {
        out << "  [" << record.step << "] final answer: "
            << (record.payload.at("answer").is_null()
                    ? "(none)"
                    : record.payload.at("answer").get<std::string>())
            << "\n";
      }
    }
  }
  if (manifest.final_answer) out << "final answer: " << *manifest.final_answer << "\n";
  out << "metrics: " << manifest.metrics.dump() << "\n";
  return out.str();
}

}  // namespace geoevolver
