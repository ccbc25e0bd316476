#include "geoevolver/geoevolver.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <memory>

namespace {

using namespace geoevolver;

int cmd_run(const std::string& config_path, const std::string& dataset_path,
            const std::string& mode, bool core_tools_only, const std::string& bank_path,
            const std::string& output_dir, const std::string& run_id, long seed,
            bool has_seed, bool parallel_subgoals) {
  Config config = config_path.empty() ? Config{} : Config::from_file(config_path);
  if (!mode.empty()) config.mode = run_mode_from_string(mode);
  if (core_tools_only) config.core_tools_only = true;
  if (!bank_path.empty()) config.memory_path = bank_path;
  if (!output_dir.empty()) config.output_dir = output_dir;
  if (!run_id.empty()) config.run_id = run_id;
  if (has_seed) config.seed = seed;
  if (parallel_subgoals) config.parallel_subgoals = true;

  const auto dataset = load_dataset(dataset_path);
  std::shared_ptr<Provider> remote;
  if (config.provider == ProviderKind::remote) {
    remote = std::make_shared<RemoteProvider>(config.remote);
  }
  BenchmarkRunner runner(config, remote);
  const auto manifests = runner.run(dataset);

  const auto run_dir =
      std::filesystem::path(config.output_dir) / config.effective_run_id();
  int failed = 0;
  for (const auto& m : manifests) {
    if (m.failed) ++failed;
    std::cout << m.query_id << ": "
              << (m.failed ? "FAILED (" + m.error + ")"
                           : "variant " + std::to_string(m.selected_variant) + ", answer " +
                                 m.final_answer.value_or("(none)"))
              << "\n";
  }
  std::cout << "run artifacts: " << run_dir.string() << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_eval(const std::string& dataset_path, const std::string& logs_dir,
             bool core_tools_only) {
  const auto dataset = load_dataset(dataset_path);
  const MetricReport report = evaluate_logs(dataset, logs_dir, core_tools_only);
  std::cout << render_metric_table(report);
  const auto report_path = std::filesystem::path(logs_dir) / "report.json";
  std::ofstream out(report_path);
  out << metric_report_to_json(report).dump(2) << "\n";
  std::cout << "report written to " << report_path.string() << "\n";
  return 0;
}

MemoryBank open_bank(const std::string& bank_path) {
  return MemoryBank::load(bank_path, std::make_shared<HashedEncoder>());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GeoEvolver: experience-driven multi-agent tool-use engine and benchmark harness"};
  app.require_subcommand(1);

  // run
  std::string config_path, dataset_path, mode, bank_path, output_dir, run_id;
  long seed = 0;
  bool core_tools_only = false;
  auto* run = app.add_subcommand("run", "Run the benchmark loop over a dataset");
  run->add_option("--config", config_path, "Flat key/value config file");
  run->add_option("--dataset", dataset_path, "Dataset jsonl file")->required();
  run->add_option("--mode", mode, "evolve|inference");
  run->add_flag("--core-tools-only", core_tools_only,
                "Filter auxiliary bookkeeping tools from metric views");
  run->add_option("--bank", bank_path, "Initial/live memory bank file");
  run->add_option("--output-dir", output_dir, "Run output directory");
  run->add_option("--run-id", run_id, "Run identifier (default run-<seed>)");
  auto* seed_opt = run->add_option("--seed", seed, "Base RNG seed");
  bool parallel_subgoals = false;
  run->add_flag("--parallel-subgoals", parallel_subgoals,
                "Run sub-goals of a plan concurrently (independent mode)");

  // eval
  std::string eval_dataset, eval_logs;
  bool eval_core_only = false;
  auto* eval = app.add_subcommand("eval", "Compute trajectory metrics from run logs");
  eval->add_option("--dataset", eval_dataset, "Dataset jsonl file")->required();
  eval->add_option("--logs", eval_logs, "Run directory with per-query logs")->required();
  eval->add_flag("--core-tools-only", eval_core_only,
                 "Filter auxiliary bookkeeping tools before matching");

  // memory
  std::string mem_bank, mem_key, export_path;
  auto* memory = app.add_subcommand("memory", "Inspect a memory bank file");
  memory->require_subcommand(1);
  auto* mem_ls = memory->add_subcommand("ls", "List item keys");
  mem_ls->add_option("--bank", mem_bank, "Bank file")->required();
  auto* mem_show = memory->add_subcommand("show", "Render one item as a card");
  mem_show->add_option("--bank", mem_bank, "Bank file")->required();
  mem_show->add_option("--key", mem_key, "sequence number or source|type|title key")
      ->required();
  auto* mem_export = memory->add_subcommand("export", "Render every item as a card");
  mem_export->add_option("--bank", mem_bank, "Bank file")->required();
  mem_export->add_option("--out", export_path, "Also copy the bank to this file");
  auto* mem_stats = memory->add_subcommand("stats", "Counts by pattern type");
  mem_stats->add_option("--bank", mem_bank, "Bank file")->required();
  bool stats_json = false;
  mem_stats->add_flag("--json", stats_json, "Emit the counts as JSON");

  // replay
  std::string manifest_path;
  auto* replay = app.add_subcommand("replay", "Re-render an episode from its manifest");
  replay->add_option("--manifest", manifest_path, "manifest.json path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return cmd_run(config_path, dataset_path, mode, core_tools_only, bank_path, output_dir,
                     run_id, seed, seed_opt->count() > 0, parallel_subgoals);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_dataset, eval_logs, eval_core_only);
    }
    if (memory->parsed()) {
      const MemoryBank bank = open_bank(mem_bank);
      if (mem_ls->parsed()) {
        std::cout << memory_ls(bank);
      } else if (mem_show->parsed()) {
        std::cout << memory_show(bank, mem_key);
      } else if (mem_export->parsed()) {
        std::cout << memory_export(bank);
        if (!export_path.empty()) bank.persist(export_path);
      } else if (mem_stats->parsed()) {
        std::cout << (stats_json ? memory_stats_json(bank).dump(2) + "\n" : memory_stats(bank));
      }
      return 0;
    }
    if (replay->parsed()) {
      std::cout << replay_manifest(manifest_path);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
