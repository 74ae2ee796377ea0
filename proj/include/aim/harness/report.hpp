#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "aim/harness/experiment.hpp"

namespace aim::harness {

/// One metrics CSV row: a checkpoint of one (method, env, seed) run.
struct MetricRow {
  std::string method;
  std::string env;
  std::uint64_t seed = 0;
  CheckpointMetrics m;
};

inline constexpr const char* kMetricsHeader =
    "method,env,seed,total_steps,expert_steps,expert_involved_steps,phase,success_rate,episodic_return,"
    "route_completion,crash_rate,n_rollouts,deviation_ratio,probes";

inline std::vector<MetricRow> metric_rows(const MethodRun& run) {
  std::vector<MetricRow> rows;
  for (const auto& c : run.checkpoints) rows.push_back({run.method, std::string(worlds::to_string(run.env)), run.seed, c});
  return rows;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    const auto& m = r.m;
    os << fmt::format("{},{},{},{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{},{},{}\n", r.method, r.env, r.seed,
                      m.total_steps, m.expert_steps, m.expert_involved_steps, to_string(m.phase),
                      m.eval.success_rate, m.eval.episodic_return, m.eval.route_completion, m.eval.crash_rate,
                      m.eval.n_rollouts,
                      std::isfinite(m.deviation_ratio) ? fmt::format("{:.17g}", m.deviation_ratio) : std::string(),
                      m.probes);
  }
}

inline std::vector<MetricRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) throw InvalidArgument("not a metrics CSV");
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() == 13) f.emplace_back();  // trailing empty cell
    if (f.size() != 14) throw InvalidArgument("bad metrics row: " + line);
    MetricRow r;
    r.method = f[0];
    r.env = f[1];
    r.seed = std::stoull(f[2]);
    r.m.total_steps = std::stol(f[3]);
    r.m.expert_steps = std::stol(f[4]);
    r.m.expert_involved_steps = std::stol(f[5]);
    r.m.phase = phase_from_string(f[6]);
    r.m.eval.success_rate = std::stod(f[7]);
    r.m.eval.episodic_return = std::stod(f[8]);
    r.m.eval.route_completion = std::stod(f[9]);
    r.m.eval.crash_rate = std::stod(f[10]);
    r.m.eval.n_rollouts = std::stoi(f[11]);
    r.m.deviation_ratio = f[12].empty() ? std::nan("") : std::stod(f[12]);
    r.m.probes = f[13].empty() ? 0 : std::stol(f[13]);
    rows.push_back(std::move(r));
  }
  return rows;
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single seed
};

inline MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) throw EmptySource("no values to summarise");
  MeanStd out;
  for (double x : v) out.mean += x;
  out.mean /= double(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.stddev = std::sqrt(ss / double(v.size() - 1));
  }
  return out;
}

struct SummaryRow {
  std::string method;
  std::string env;
  int seeds = 0;
  MeanStd success;
  MeanStd episodic_return;
  MeanStd route_completion;
  MeanStd expert_data_usage;
  MeanStd total_data_usage;
  MeanStd intervention_rate;
};

/// Best checkpoint per seed (max success, earliest on ties), averaged over seeds per
/// (method, env). Rows are ordered by method then env name.
inline std::vector<SummaryRow> summarize(const std::vector<MetricRow>& rows) {
  std::map<std::pair<std::string, std::string>, std::map<std::uint64_t, std::vector<CheckpointMetrics>>> groups;
  for (const auto& r : rows) groups[{r.method, r.env}][r.seed].push_back(r.m);
  std::vector<SummaryRow> out;
  for (const auto& [key, seeds] : groups) {
    std::vector<double> succ, ret, rc, usage, total, rate;
    for (const auto& [seed, cps] : seeds) {
      const auto& b = best_checkpoint(cps);
      succ.push_back(b.eval.success_rate);
      ret.push_back(b.eval.episodic_return);
      rc.push_back(b.eval.route_completion);
      usage.push_back(double(b.expert_steps));
      total.push_back(double(b.total_steps));
      rate.push_back(b.total_steps > 0 ? double(b.expert_steps) / double(b.total_steps) : 0.0);
    }
    out.push_back({key.first, key.second, static_cast<int>(seeds.size()), mean_std(succ), mean_std(ret), mean_std(rc),
                   mean_std(usage), mean_std(total), mean_std(rate)});
  }
  return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "method,env,seeds,success_mean,success_std,return_mean,return_std,route_completion_mean,"
        "route_completion_std,expert_data_usage_mean,expert_data_usage_std,total_data_usage_mean,"
        "total_data_usage_std,intervention_rate_mean,intervention_rate_std\n";
  for (const auto& r : rows) {
    os << fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.1f},{:.1f},{:.1f},{:.1f},{:.6f},{:.6f}\n",
                      r.method, r.env, r.seeds, r.success.mean, r.success.stddev, r.episodic_return.mean,
                      r.episodic_return.stddev, r.route_completion.mean, r.route_completion.stddev,
                      r.expert_data_usage.mean, r.expert_data_usage.stddev, r.total_data_usage.mean,
                      r.total_data_usage.stddev, r.intervention_rate.mean, r.intervention_rate.stddev);
  }
}

/// Writes runlog_<method>_<env>_<seed>.jsonl for one run.
inline std::filesystem::path save_run_log(const MethodRun& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / fmt::format("runlog_{}_{}_{}.jsonl", run.method, worlds::to_string(run.env), run.seed);
  run.result.log.save(path.string());
  return path;
}

}  // namespace aim::harness
