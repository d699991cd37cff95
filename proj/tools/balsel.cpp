#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "balsel/io.hpp"
#include "balsel/metrics.hpp"
#include "balsel/scenario.hpp"
#include "balsel/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace balsel;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

// One writer per output directory. The lock vanishes with the process scope;
// a leftover file from a killed run must be removed by hand.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".balsel.lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw ConfigError("output directory is locked by " + path_.string() +
                        "; remove the lockfile if no other run is active");
    }
  }
  ~OutputLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      fs::remove(path_);
    }
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::string format_double(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.10g", v);
  return buffer;
}

fs::path output_root() {
  if (const char* env = std::getenv("BALSEL_OUT")) return fs::path(env);
  return fs::path(".");
}

struct RunSettings {
  std::string config_path;
  std::string out_dir;
  std::string strategy = "cbda";
  std::string heuristic = "entropy";
  double budget = -1.0;        // <0: keep config value
  std::int32_t iterations = 0; // 0: keep config value
  std::int64_t seed = -1;      // <0: keep config value
  std::int32_t bins = 0;       // 0: keep config value
  std::int32_t radius = 2;
  std::string count_mode = "truth";
  std::string imbalance_on = "truth";
  bool binary_labels = false;
};

// Applies CLI overrides and fills defaulted sections (noise ramp, goal).
RunConfig effective_config(const RunSettings& settings) {
  RunConfig config = load_config(settings.config_path);
  if (settings.budget >= 0.0) config.schedule.budget_fraction = settings.budget;
  if (settings.seed >= 0) config.scenario.seed = static_cast<std::uint64_t>(settings.seed);
  if (settings.iterations > 0) {
    if (config.explicit_noise_schedule &&
        static_cast<std::int32_t>(config.scenario.noise_schedule.size()) !=
            settings.iterations) {
      throw ConfigError(
          "--iterations conflicts with the config's explicit scenario.noise_schedule; "
          "drop one of them");
    }
    config.schedule.num_al_iterations = settings.iterations;
  }
  if (settings.bins > 0) config.histogram_bins = settings.bins;
  if (!config.explicit_noise_schedule) {
    config.scenario.noise_schedule = default_noise_schedule(config.schedule.num_al_iterations);
  }
  if (!config.explicit_goal) {
    config.schedule.goal_distribution = uniform_goal(config.scenario.shape.num_classes);
  }
  return config;
}

json schedule_json(const BudgetSchedule& sched) {
  json j;
  j["budget_fraction"] = sched.budget_fraction;
  j["num_al_iterations"] = sched.num_al_iterations;
  j["goal_distribution"] = sched.goal_distribution;
  j["epsilon"] = sched.epsilon;
  return j;
}

struct Manifest {
  json body;
  std::uint64_t hash = 0;
};

Manifest finalize_manifest(json body) {
  Manifest manifest;
  manifest.hash = fnv1a64(body.dump());
  body["manifest_hash"] = hash_hex(manifest.hash);
  manifest.body = std::move(body);
  return manifest;
}

json base_manifest(const char* command, const RunConfig& config) {
  json m;
  m["format"] = "balsel-manifest";
  m["format_version"] = kFormatVersion;
  m["tool_version"] = std::string(kToolVersion);
  m["command"] = command;
  m["config_hash"] = hash_hex(fnv1a64(canonical_config(config)));
  m["scenario_hash"] = hash_hex(fnv1a64(canonical_ground_truth_identity(config.scenario)));
  m["seed"] = config.scenario.seed;
  m["scenario"] = json::parse(canonical_scenario(config.scenario));
  m["schedule"] = schedule_json(config.schedule);
  return m;
}

int cmd_generate(const std::string& config_path, std::string out_dir, std::int64_t seed) {
  RunSettings settings;
  settings.config_path = config_path;
  settings.seed = seed;
  const RunConfig config = effective_config(settings);
  config.scenario.validate();

  const std::string scenario_hash =
      hash_hex(fnv1a64(canonical_ground_truth_identity(config.scenario)));
  if (out_dir.empty()) {
    out_dir = (output_root() / ("scenario-" + scenario_hash.substr(0, 8))).string();
  }
  OutputLock lock{fs::path(out_dir)};

  json body = base_manifest("generate", config);
  body["artifacts"] = {{"ground_truth", "ground_truth.bin"}};
  const Manifest manifest = finalize_manifest(std::move(body));

  const GroundTruth gt = generate_ground_truth(config.scenario);
  write_ground_truth(fs::path(out_dir) / "ground_truth.bin", gt, config.scenario.shape,
                     manifest.hash);
  write_text_file(fs::path(out_dir) / "manifest.json", manifest.body.dump(2) + "\n");

  std::cout << "wrote ground truth for " << config.scenario.shape.num_images << " images to "
            << out_dir << "\n";
  return kExitOk;
}

void write_csv(const fs::path& path, std::uint64_t manifest_hash, const std::string& header,
               const std::vector<std::string>& rows) {
  std::string out = "# manifest=" + hash_hex(manifest_hash) + "\n" + header + "\n";
  for (const std::string& row : rows) {
    out += row;
    out += '\n';
  }
  write_text_file(path, out);
}

json report_iterations_json(const LoopReport& report) {
  json iterations = json::array();
  for (const IterationRecord& rec : report.iterations) {
    json r;
    r["iteration"] = rec.iteration;
    r["lambda"] = rec.lambda;
    r["budget_requested"] = rec.budget_requested;
    r["budget_used"] = rec.budget_used;
    r["cumulative_selected"] = rec.cumulative_selected;
    r["cumulative_class_counts"] = rec.cumulative_class_counts;
    r["weights"] = rec.weights;
    if (std::isnan(rec.imbalance)) {
      r["imbalance_score"] = nullptr;
    } else {
      r["imbalance_score"] = rec.imbalance;
    }
    r["histogram"] = rec.histogram;
    iterations.push_back(std::move(r));
  }
  return iterations;
}

int cmd_run(const RunSettings& settings) {
  const auto strategy = strategy_from_name(settings.strategy);
  if (!strategy) {
    throw ConfigError("unknown strategy '" + settings.strategy +
                      "' (valid: " + std::string(strategy_names_joined()) + ")");
  }
  const auto heuristic = heuristic_from_name(settings.heuristic);
  if (!heuristic) {
    throw ConfigError("unknown heuristic '" + settings.heuristic +
                      "' (valid: " + std::string(heuristic_names_joined()) + ")");
  }
  if (settings.count_mode != "truth" && settings.count_mode != "pseudo") {
    throw ConfigError("--count-mode must be 'truth' or 'pseudo'");
  }
  if (settings.imbalance_on != "truth" && settings.imbalance_on != "pseudo") {
    throw ConfigError("--imbalance-on must be 'truth' or 'pseudo'");
  }

  const RunConfig config = effective_config(settings);
  config.scenario.validate();
  const std::int32_t C = config.scenario.shape.num_classes;

  std::string out_dir = settings.out_dir;
  const std::string config_hash = hash_hex(fnv1a64(canonical_config(config)));
  if (out_dir.empty()) {
    out_dir = (output_root() /
               (settings.strategy + "-" + settings.heuristic + "-s" +
                std::to_string(config.scenario.seed) + "-" + config_hash.substr(0, 8)))
                  .string();
  }
  OutputLock lock{fs::path(out_dir)};

  LoopOptions options;
  options.count_mode =
      settings.count_mode == "pseudo" ? CountMode::kPseudo : CountMode::kGroundTruth;
  options.imbalance_on_pseudo = settings.imbalance_on == "pseudo";
  options.histogram_bins = config.histogram_bins;

  HeuristicSpec heuristic_spec;
  heuristic_spec.kind = *heuristic;
  heuristic_spec.impurity_radius = settings.radius;

  const std::string labels_name = settings.binary_labels ? "active_labels.bin"
                                                         : "active_labels.tsv";
  json body = base_manifest("run", config);
  body["strategy"] = settings.strategy;
  body["heuristic"] = settings.heuristic;
  body["impurity_radius"] = settings.radius;
  body["count_mode"] = settings.count_mode;
  body["imbalance_on"] = settings.imbalance_on;
  body["histogram_bins"] = config.histogram_bins;
  body["artifacts"] = {{"active_labels", labels_name},
                       {"iterations_csv", "iterations.csv"},
                       {"class_counts_csv", "class_counts.csv"},
                       {"histogram_csv", "histogram.csv"},
                       {"summary", "summary.json"}};
  const Manifest manifest = finalize_manifest(std::move(body));

  // A zero budget is a legal degenerate run: empty label file, no metrics.
  LoopResult result;
  if (config.schedule.budget_fraction == 0.0) {
    if (static_cast<std::int32_t>(config.scenario.noise_schedule.size()) !=
        config.schedule.num_al_iterations) {
      throw ConfigError("noise_schedule: length must equal num_al_iterations");
    }
    result.store = ActiveLabelStore(config.scenario.shape);
    result.report.final_imbalance = std::nan("");
    result.report.final_kl_to_uniform = std::nan("");
    result.report.final_class_counts.assign(static_cast<std::size_t>(C), 0);
  } else {
    result = run_loop(config.scenario, config.schedule, *strategy, heuristic_spec, options);
  }

  if (settings.binary_labels) {
    write_active_labels_binary(fs::path(out_dir) / labels_name, result.store, manifest.hash);
  } else {
    write_active_labels_text(fs::path(out_dir) / labels_name, result.store, manifest.hash);
  }

  // iterations.csv: one row per AL iteration, wide columns per class
  {
    std::string header = "iteration,lambda,budget_requested,budget_used,cumulative_selected,"
                         "imbalance_score";
    for (std::int32_t c = 0; c < C; ++c) header += ",count_c" + std::to_string(c);
    for (std::int32_t c = 0; c < C; ++c) header += ",weight_c" + std::to_string(c);
    std::vector<std::string> rows;
    for (const IterationRecord& rec : result.report.iterations) {
      std::string row = std::to_string(rec.iteration) + "," + format_double(rec.lambda) + "," +
                        std::to_string(rec.budget_requested) + "," +
                        std::to_string(rec.budget_used) + "," +
                        std::to_string(rec.cumulative_selected) + "," +
                        (std::isnan(rec.imbalance) ? "" : format_double(rec.imbalance));
      for (std::int64_t count : rec.cumulative_class_counts) {
        row += "," + std::to_string(count);
      }
      for (double w : rec.weights) row += "," + format_double(w);
      rows.push_back(std::move(row));
    }
    write_csv(fs::path(out_dir) / "iterations.csv", manifest.hash, header, rows);
  }

  // class_counts.csv: one row per class, final state
  {
    const std::int64_t total = result.report.total_selected;
    std::vector<std::string> rows;
    for (std::int32_t c = 0; c < C; ++c) {
      const std::int64_t count = result.report.final_class_counts[static_cast<std::size_t>(c)];
      const std::string proportion =
          total > 0 ? format_double(static_cast<double>(count) / static_cast<double>(total))
                    : "";
      rows.push_back(std::to_string(c) + "," + std::to_string(count) + "," + proportion);
    }
    write_csv(fs::path(out_dir) / "class_counts.csv", manifest.hash,
              "class_id,count,proportion", rows);
  }

  // histogram.csv: one row per bin, final state
  {
    const SelectionHistogram hist =
        selection_histogram(result.store, config.scenario.shape, config.histogram_bins);
    std::vector<std::string> rows;
    for (std::int32_t b = 0; b < hist.num_bins; ++b) {
      rows.push_back(std::to_string(b) + "," + format_double(hist.bin_lower(b)) + "," +
                     format_double(hist.bin_upper(b)) + "," +
                     std::to_string(hist.counts[static_cast<std::size_t>(b)]));
    }
    write_csv(fs::path(out_dir) / "histogram.csv", manifest.hash, "bin_index,lower,upper,count",
              rows);
  }

  // summary.json: the machine-readable rollup
  {
    json summary;
    summary["manifest_hash"] = hash_hex(manifest.hash);
    summary["scenario_hash"] = manifest.body["scenario_hash"];
    summary["strategy"] = settings.strategy;
    summary["heuristic"] = settings.heuristic;
    summary["budget_fraction"] = config.schedule.budget_fraction;
    summary["num_al_iterations"] = config.schedule.num_al_iterations;
    summary["seed"] = config.scenario.seed;
    summary["count_mode"] = settings.count_mode;
    summary["imbalance_on"] = settings.imbalance_on;
    summary["noise_schedule"] = config.scenario.noise_schedule;
    summary["total_selected"] = result.report.total_selected;
    summary["per_class_counts"] = result.report.final_class_counts;
    if (std::isnan(result.report.final_imbalance)) {
      summary["imbalance_score"] = nullptr;
      summary["kl_to_uniform"] = nullptr;
    } else {
      summary["imbalance_score"] = result.report.final_imbalance;
      summary["kl_to_uniform"] = result.report.final_kl_to_uniform;
    }
    const auto [min_it, max_it] = std::minmax_element(
        result.report.final_class_counts.begin(), result.report.final_class_counts.end());
    summary["min_class_count"] = *min_it;
    summary["max_class_count"] = *max_it;
    if (*min_it > 0) {
      summary["max_min_ratio"] = static_cast<double>(*max_it) / static_cast<double>(*min_it);
    } else {
      summary["max_min_ratio"] = nullptr;
    }
    summary["iterations"] = report_iterations_json(result.report);
    write_text_file(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
  }

  write_text_file(fs::path(out_dir) / "manifest.json", manifest.body.dump(2) + "\n");

  std::cout << "strategy=" << settings.strategy << " heuristic=" << settings.heuristic
            << " selected=" << result.report.total_selected;
  if (!std::isnan(result.report.final_imbalance)) {
    std::cout << " imbalance=" << format_double(result.report.final_imbalance);
  }
  std::cout << "\nwrote " << out_dir << "\n";
  return kExitOk;
}

struct RunRow {
  std::string dir;
  std::string strategy;
  std::string heuristic;
  double budget_fraction = 0.0;
  double imbalance = std::nan("");
  std::int64_t min_class_count = 0;
  double max_min_ratio = std::nan("");
  std::string scenario_hash;
};

RunRow load_run_row(const fs::path& dir) {
  json manifest;
  json summary;
  try {
    manifest = json::parse(read_text_file(dir / "manifest.json"));
    summary = json::parse(read_text_file(dir / "summary.json"));
  } catch (const json::exception& e) {
    throw IoError(dir.string() + ": malformed run artifacts: " + e.what());
  }
  RunRow row;
  row.dir = dir.string();
  row.scenario_hash = manifest.at("scenario_hash").get<std::string>();
  row.strategy = summary.at("strategy").get<std::string>();
  row.heuristic = summary.at("heuristic").get<std::string>();
  row.budget_fraction = summary.at("budget_fraction").get<double>();
  if (!summary.at("imbalance_score").is_null()) {
    row.imbalance = summary["imbalance_score"].get<double>();
  }
  row.min_class_count = summary.at("min_class_count").get<std::int64_t>();
  if (!summary.at("max_min_ratio").is_null()) {
    row.max_min_ratio = summary["max_min_ratio"].get<double>();
  }
  return row;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out_csv) {
  if (dirs.size() < 2) {
    throw ConfigError("compare needs at least two run directories");
  }
  std::vector<RunRow> rows;
  for (const std::string& dir : dirs) rows.push_back(load_run_row(dir));
  for (const RunRow& row : rows) {
    if (row.scenario_hash != rows.front().scenario_hash) {
      throw ConfigError("scenario hash mismatch between " + rows.front().dir + " and " +
                        row.dir + "; runs over different ground truths are not comparable");
    }
  }

  std::printf("%-8s %-16s %8s %16s %16s %14s\n", "strategy", "heuristic", "budget",
              "imbalance_score", "min_class_count", "max_min_ratio");
  for (const RunRow& row : rows) {
    std::printf("%-8s %-16s %8s %16s %16lld %14s\n", row.strategy.c_str(),
                row.heuristic.c_str(), format_double(row.budget_fraction).c_str(),
                std::isnan(row.imbalance) ? "-" : format_double(row.imbalance).c_str(),
                static_cast<long long>(row.min_class_count),
                std::isnan(row.max_min_ratio) ? "inf" : format_double(row.max_min_ratio).c_str());
  }

  const std::string header =
      "run_dir,strategy,heuristic,budget_fraction,imbalance_score,min_class_count,max_min_ratio";
  std::vector<std::string> csv_rows;
  for (const RunRow& row : rows) {
    csv_rows.push_back(row.dir + "," + row.strategy + "," + row.heuristic + "," +
                       format_double(row.budget_fraction) + "," +
                       (std::isnan(row.imbalance) ? "" : format_double(row.imbalance)) + "," +
                       std::to_string(row.min_class_count) + "," +
                       (std::isnan(row.max_min_ratio) ? "inf"
                                                      : format_double(row.max_min_ratio)));
  }
  if (out_csv.empty()) {
    std::printf("%s\n", header.c_str());
    for (const std::string& row : csv_rows) std::printf("%s\n", row.c_str());
  } else {
    std::string out = header + "\n";
    for (const std::string& row : csv_rows) out += row + "\n";
    write_text_file(out_csv, out);
    std::cout << "wrote " << out_csv << "\n";
  }
  return kExitOk;
}

int cmd_metrics(const std::string& labels_path, std::int32_t bins) {
  const ActiveLabelsFile file = read_active_labels(labels_path);
  if (file.store.size() == 0) {
    throw EmptySelectionError("label file holds no selections; nothing to measure");
  }
  const ImbalanceReport report = imbalance_report(file.store);
  const SelectionHistogram hist = selection_histogram(file.store, file.store.shape(), bins);

  std::cout << "selected=" << file.store.size()
            << " imbalance_score=" << format_double(report.imbalance_score)
            << " kl_to_uniform=" << format_double(report.kl_to_uniform) << "\n";
  std::cout << "class_id,count,proportion\n";
  for (std::size_t c = 0; c < report.per_class_counts.size(); ++c) {
    std::cout << c << "," << report.per_class_counts[c] << ","
              << format_double(static_cast<double>(report.per_class_counts[c]) /
                               static_cast<double>(file.store.size()))
              << "\n";
  }
  std::cout << "bin_index,lower,upper,count\n";
  for (std::int32_t b = 0; b < hist.num_bins; ++b) {
    std::cout << b << "," << format_double(hist.bin_lower(b)) << ","
              << format_double(hist.bin_upper(b)) << ","
              << hist.counts[static_cast<std::size_t>(b)] << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"class-balanced, budget-constrained pixel selection for active learning"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;

  CLI::App* generate = app.add_subcommand("generate", "write scenario ground truth to disk");
  generate->add_option("config", config_path, "scenario config file (JSON)")->required();
  generate->add_option("--out", out_dir, "output directory (default: $BALSEL_OUT or cwd)");
  generate->add_option("--seed", seed, "override scenario.seed");

  RunSettings run_settings;
  CLI::App* run = app.add_subcommand("run", "run the acquisition loop and write reports");
  run->add_option("config", run_settings.config_path, "scenario config file (JSON)")->required();
  run->add_option("--strategy", run_settings.strategy,
                  "acquisition strategy: image, ra, da, cbra, cbda (default cbda)");
  run->add_option("--heuristic", run_settings.heuristic,
                  "scoring heuristic: entropy, margin, region-impurity, random");
  run->add_option("--budget", run_settings.budget, "override schedule.budget_fraction");
  run->add_option("--iterations", run_settings.iterations,
                  "override schedule.num_al_iterations");
  run->add_option("--seed", run_settings.seed, "override scenario.seed");
  run->add_option("--out", run_settings.out_dir, "output directory");
  run->add_option("--bins", run_settings.bins, "histogram bins (default 20)");
  run->add_option("--radius", run_settings.radius, "region-impurity window radius (default 2)");
  run->add_option("--count-mode", run_settings.count_mode,
                  "class statistics source: truth or pseudo (default truth)");
  run->add_option("--imbalance-on", run_settings.imbalance_on,
                  "imbalance metric source: truth or pseudo (default truth)");
  run->add_flag("--binary", run_settings.binary_labels,
                "write the active-label file in the binary format");

  std::vector<std::string> compare_dirs;
  std::string compare_out;
  CLI::App* compare = app.add_subcommand("compare", "tabulate completed runs side by side");
  compare->add_option("dirs", compare_dirs, "completed run directories")->expected(-1);
  compare->add_option("--out", compare_out, "write the CSV here instead of stdout");

  std::string labels_path;
  std::int32_t metric_bins = 20;
  CLI::App* metrics = app.add_subcommand("metrics", "recompute metrics from a label file");
  metrics->add_option("labels", labels_path, "active-label file")->required();
  metrics->add_option("--bins", metric_bins, "histogram bins (default 20)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(config_path, out_dir, seed);
    if (run->parsed()) return cmd_run(run_settings);
    if (compare->parsed()) return cmd_compare(compare_dirs, compare_out);
    if (metrics->parsed()) return cmd_metrics(labels_path, metric_bins);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
