#pragma once

#include <compare>
#include <cstdint>
#include <vector>

#include "balsel/core.hpp"

namespace balsel {

struct PixelRef {
  std::int32_t image_index = 0;
  std::int32_t row = 0;
  std::int32_t col = 0;

  friend auto operator<=>(const PixelRef&, const PixelRef&) = default;
};

struct SelectionResult {
  // For pixel-wise strategies: ranked best-first (score descending, ties by
  // ascending (image_index, row, col)). For the per-image strategies the
  // pixels are grouped by image in ascending image order.
  std::vector<PixelRef> picked;
  std::int64_t iteration_budget_used = 0;
  std::vector<std::int64_t> per_image_counts;

  friend bool operator==(const SelectionResult&, const SelectionResult&) = default;
};

// The whole target set's score matrices with their pseudo labels, one pair
// per image. Position in the stack is the image_index used everywhere else.
struct ScoreStack {
  std::vector<ScoreMatrix> scores;
  std::vector<PseudoLabelMap> pseudo;

  std::int64_t num_images() const { return static_cast<std::int64_t>(scores.size()); }
  // All matrices share H and W, pseudo maps pair up with score matrices by
  // image id, and ids are unique.
  void validate(const DatasetShape& shape) const;
};

// Pixels the cumulative linear budget ramp grants iteration `iteration`,
// given how many are already labeled:
//   floor(total_pixels * budget_fraction * iteration / num_iterations) - already_selected
// clamped at zero. Cumulative targets, rather than a fixed per-iteration
// split, keep rounding drift at most one pixel.
std::int64_t iteration_budget(const DatasetShape& shape, const BudgetSchedule& sched,
                              std::int32_t iteration, std::int64_t already_selected);

// Ranks images by mean acquisition score and labels every not-yet-selected
// pixel of the top `budget_images` images. Ties go to the lower image index.
SelectionResult select_image_wise(const ScoreStack& stack, std::int64_t budget_images,
                                  ActiveLabelStore& store, const GroundTruth& ground_truth,
                                  std::int32_t al_iteration);

// Picks each image's top `per_image_budget` eligible pixels independently.
// Images without enough eligible pixels contribute what they have; the
// shortfall shows up in per_image_counts rather than raising.
SelectionResult select_region(const ScoreStack& stack, std::int64_t per_image_budget,
                              ActiveLabelStore& store, const GroundTruth& ground_truth,
                              std::int32_t al_iteration);

// Picks the globally best `budget` eligible pixels across the whole stack:
// exactly the first `budget` entries of the full descending sort under the
// deterministic tie-break. Uses bounded per-image candidate buffers merged in
// image order, so the stacked tensor is never copied; output is identical
// for any worker count.
SelectionResult select_dynamic(const ScoreStack& stack, std::int64_t budget,
                               ActiveLabelStore& store, const GroundTruth& ground_truth,
                               std::int32_t al_iteration);

enum class CbStrategy { kRegion, kDynamic };

// Whether cumulative class statistics count the ground-truth class of each
// selected pixel (default) or its current pseudo class.
enum class CountMode { kGroundTruth, kPseudo };

struct CbOptions {
  CountMode count_mode = CountMode::kGroundTruth;
  // Degenerate mode for equivalence checks: skip weighting entirely.
  bool unit_weights = false;
};

struct CbIterationResult {
  SelectionResult selection;
  // The per-class weights that multiplied the scores this iteration.
  std::vector<double> weights;
};

// One class-balanced acquisition round, phases in order: recount the store's
// class statistics (validating them against `stats`), derive per-class
// weights from the cumulative budgets, reweight all score matrices, then
// select with the requested strategy. Picks are appended to the store and
// `stats` is updated to match.
CbIterationResult run_cbda_iteration(const ScoreStack& stack, const DatasetShape& shape,
                                     const BudgetSchedule& sched, std::int32_t iteration,
                                     ClassStats& stats, ActiveLabelStore& store,
                                     const GroundTruth& ground_truth, CbStrategy strategy,
                                     const CbOptions& options = {});

// Class counts of the store's pixels under the stack's current pseudo labels.
std::vector<std::int64_t> pseudo_class_counts(const ActiveLabelStore& store,
                                              const ScoreStack& stack);

}  // namespace balsel
