#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "balsel/core.hpp"
#include "balsel/heuristics.hpp"
#include "balsel/metrics.hpp"
#include "balsel/selection.hpp"

namespace balsel {

// Desk-scale stand-in for a segmentation training pipeline: a seeded
// generator of imbalanced ground truth plus a surrogate predictor whose
// probability maps sharpen across acquisition rounds.
struct ScenarioConfig {
  DatasetShape shape;
  // Size num_classes, sums to 1; expected share of each class in the ground
  // truth.
  std::vector<double> class_frequencies;
  // Side length of the square tiles that share one class; gives the maps
  // spatial coherence for neighborhood heuristics to detect.
  std::int32_t spatial_granularity = 1;
  // One corruption level per AL iteration, in [0,1], non-increasing: the
  // surrogate predictor's distance from the truth when that round's scores
  // are computed. Stands in for the model converging between rounds.
  std::vector<double> noise_schedule;
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic in the seed. Tiles of side spatial_granularity are assigned
// classes by sampling class_frequencies, row-major per image.
GroundTruth generate_ground_truth(const ScenarioConfig& cfg);

// Per pixel: (1 - lambda) * onehot(true class) + lambda * d, with d a seeded
// uniform simplex sample. lambda 0 reproduces the truth exactly; lambda 1 is
// uninformative.
ProbabilityMap surrogate_probabilities(const Grid<ClassId>& truth, std::int32_t image_id,
                                       std::int32_t num_classes, double lambda,
                                       std::uint64_t seed);

enum class Strategy { kImageWise, kRegion, kDynamic, kCbRegion, kCbDynamic };

std::optional<Strategy> strategy_from_name(std::string_view name);
std::string_view strategy_name(Strategy strategy);
// "image | ra | da | cbra | cbda", for diagnostics.
std::string_view strategy_names_joined();

struct HeuristicSpec {
  Heuristic kind = Heuristic::kEntropy;
  std::int32_t impurity_radius = 2;
};

struct LoopOptions {
  CountMode count_mode = CountMode::kGroundTruth;
  // Report imbalance against current pseudo classes instead of ground truth.
  bool imbalance_on_pseudo = false;
  std::int32_t histogram_bins = 20;
  // Degenerate mode: run the class-balanced path with every weight pinned
  // to 1.
  bool unit_weights = false;
};

struct IterationRecord {
  std::int32_t iteration = 0;
  double lambda = 0.0;
  // Pixels the schedule granted this round (whole images for the image-wise
  // strategy are still counted in pixels here).
  std::int64_t budget_requested = 0;
  std::int64_t budget_used = 0;
  std::int64_t cumulative_selected = 0;
  std::vector<std::int64_t> cumulative_class_counts;
  std::vector<double> weights;
  // NaN while the store is still empty.
  double imbalance = 0.0;
  std::vector<std::int64_t> histogram;
};

struct LoopReport {
  std::vector<IterationRecord> iterations;
  std::vector<std::int64_t> final_class_counts;
  double final_imbalance = 0.0;
  double final_kl_to_uniform = 0.0;
  std::int64_t total_selected = 0;
};

struct LoopResult {
  GroundTruth ground_truth;
  ActiveLabelStore store;
  LoopReport report;
};

// Runs the full multi-round acquisition loop: per round, regenerate surrogate
// probabilities at that round's noise level, score with the chosen heuristic,
// select with the chosen strategy (weighting first for the class-balanced
// ones), reveal the picked pixels' true classes, and record metrics.
LoopResult run_loop(const ScenarioConfig& cfg, const BudgetSchedule& sched, Strategy strategy,
                    const HeuristicSpec& heuristic, const LoopOptions& options = {});

}  // namespace balsel
