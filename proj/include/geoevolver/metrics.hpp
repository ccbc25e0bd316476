#pragma once

#include "geoevolver/core.hpp"

#include <set>
#include <string>
#include <vector>

namespace geoevolver {

/// Indicator 1{y = y*} under the shared answer normalization.
inline int accuracy(const std::string& predicted, const std::string& gold, bool label_mode) {
  if (gold.empty()) throw Error("accuracy requires a nonempty gold answer");
  return answers_match(predicted, gold, label_mode) ? 1 : 0;
}

/// Eff = |tau| / |tau*|, lower is better. Empty predictions score 0.
inline double efficiency(int pred_len, int gold_len) {
  if (gold_len < 1) throw Error("efficiency: invalid ground truth (|tau*| must be >= 1)");
  return static_cast<double>(pred_len) / static_cast<double>(gold_len);
}

/// TAO = |Set(t*) n Set(t)| / |Set(t*)|.
inline double tool_any_order(const std::vector<std::string>& t_star,
                             const std::vector<std::string>& t) {
  if (t_star.empty()) throw Error("tool_any_order: invalid ground truth (empty sequence)");
  const std::set<std::string> gold(t_star.begin(), t_star.end());
  const std::set<std::string> pred(t.begin(), t.end());
  size_t hits = 0;
  for (const auto& g : gold) {
    if (pred.count(g)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

/// TIO = k*/m where k* is the longest prefix of t* realizable as a subsequence
/// of t. Greedy left-to-right matching computes k* exactly.
inline double tool_in_order(const std::vector<std::string>& t_star,
                            const std::vector<std::string>& t) {
  if (t_star.empty()) throw Error("tool_in_order: invalid ground truth (empty sequence)");
  size_t k = 0;
  for (const auto& tool : t) {
    if (k < t_star.size() && tool == t_star[k]) ++k;
  }
  return static_cast<double>(k) / static_cast<double>(t_star.size());
}

/// TEM = lcp(t, t*) / m.
inline double tool_exact_match(const std::vector<std::string>& t_star,
                               const std::vector<std::string>& t) {
  if (t_star.empty()) throw Error("tool_exact_match: invalid ground truth (empty sequence)");
  size_t lcp = 0;
  while (lcp < t_star.size() && lcp < t.size() && t_star[lcp] == t[lcp]) ++lcp;
  return static_cast<double>(lcp) / static_cast<double>(t_star.size());
}

struct EpisodeMetrics {
  std::string query_id;
  std::optional<double> accuracy;    // 0 or 1 per episode
  std::optional<double> efficiency;
  std::optional<double> tao;
  std::optional<double> tio;
  std::optional<double> tem;
  std::optional<int> m;  // gold trajectory length
  std::optional<int> n;  // predicted trajectory length
};

struct MetricReport {
  std::vector<EpisodeMetrics> episodes;
  std::optional<double> mean_accuracy;
  std::optional<double> mean_efficiency;
  std::optional<double> mean_tao;
  std::optional<double> mean_tio;
  std::optional<double> mean_tem;
};

inline MetricReport aggregate_metrics(std::vector<EpisodeMetrics> episodes) {
  MetricReport report;
  auto mean_of = [&](auto field) -> std::optional<double> {
    double acc = 0.0;
    int count = 0;
    for (const auto& e : episodes) {
      if (e.*field) {
        acc += *(e.*field);
        ++count;
      }
    }
    if (count == 0) return std::nullopt;
    return acc / count;
  };
  report.mean_accuracy = mean_of(&EpisodeMetrics::accuracy);
  report.mean_efficiency = mean_of(&EpisodeMetrics::efficiency);
  report.mean_tao = mean_of(&EpisodeMetrics::tao);
  report.mean_tio = mean_of(&EpisodeMetrics::tio);
  report.mean_tem = mean_of(&EpisodeMetrics::tem);
  report.episodes = std::move(episodes);
  return report;
}

}  // namespace geoevolver
