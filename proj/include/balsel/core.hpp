#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "balsel/errors.hpp"
#include "balsel/grid.hpp"

namespace balsel {

using ClassId = std::uint16_t;

// Extent of the unlabeled target set: how many images, their resolution, and
// the number of semantic classes.
struct DatasetShape {
  std::int64_t num_images = 0;
  std::int32_t height = 0;
  std::int32_t width = 0;
  std::int32_t num_classes = 0;

  std::int64_t pixels_per_image() const {
    return static_cast<std::int64_t>(height) * static_cast<std::int64_t>(width);
  }
  // num_images * height * width; validated to stay within 2^53 so it is also
  // exact as a double.
  std::int64_t total_pixels() const;
  void validate() const;

  friend bool operator==(const DatasetShape&, const DatasetShape&) = default;
};

// Labeling budget for the whole active-learning run: the fraction of all
// pixels that may ever be labeled, how many acquisition rounds spread it out,
// and the class proportions the accumulated label should approach.
struct BudgetSchedule {
  double budget_fraction = 0.0;
  std::int32_t num_al_iterations = 0;
  // Size num_classes, non-negative, sums to 1. Uniform is the default target;
  // use uniform_goal() to build it.
  std::vector<double> goal_distribution;
  // Lower clamp for class weights, strictly positive. Keeps relative score
  // order among pixels of a class whose budget is exhausted.
  double epsilon = 1e-6;

  void validate(std::int32_t num_classes) const;
};

std::vector<double> uniform_goal(std::int32_t num_classes);

// Per-image acquisition scores. Scores must be finite and non-negative:
// multiplicative downweighting by a factor in (0,1] only ever lowers a
// non-negative score's rank against unweighted peers.
struct ScoreMatrix {
  std::int32_t image_id = 0;
  Grid<double> scores;

  void validate() const;

  friend bool operator==(const ScoreMatrix&, const ScoreMatrix&) = default;
};

// Per-image predicted class ids (argmax of the model's class probabilities).
struct PseudoLabelMap {
  std::int32_t image_id = 0;
  Grid<ClassId> labels;

  void validate(std::int32_t num_classes) const;

  friend bool operator==(const PseudoLabelMap&, const PseudoLabelMap&) = default;
};

// Per-image true class ids, indexed by image position.
struct GroundTruth {
  std::vector<Grid<ClassId>> labels;
};

// Cumulative per-class selected-label counts across all completed AL
// iterations. iteration_index is the most recently completed iteration
// (0 before the first).
struct ClassStats {
  std::vector<std::int64_t> cumulative_counts;
  std::int32_t iteration_index = 0;

  static ClassStats zeros(std::int32_t num_classes);
  std::int64_t total() const;

  friend bool operator==(const ClassStats&, const ClassStats&) = default;
};

struct ActiveLabelEntry {
  std::int32_t image_index = 0;
  std::int32_t row = 0;
  std::int32_t col = 0;
  ClassId true_class = 0;
  std::int32_t al_iteration = 0;

  friend bool operator==(const ActiveLabelEntry&, const ActiveLabelEntry&) = default;
};

// Sparse, append-only record of every pixel whose ground-truth class has been
// revealed. A per-image bitmask gives O(1) membership tests during selection;
// duplicates are rejected, never silently dropped.
class ActiveLabelStore {
 public:
  ActiveLabelStore() = default;
  explicit ActiveLabelStore(const DatasetShape& shape);

  const DatasetShape& shape() const { return shape_; }

  bool selected(std::int32_t image, std::int32_t row, std::int32_t col) const {
    return (mask_[static_cast<std::size_t>(image)][bit_word(row, col)] >>
            bit_offset(row, col)) & 1u;
  }

  // True class must come from the ground-truth map, never the pseudo label.
  void add(std::int32_t image, std::int32_t row, std::int32_t col, ClassId true_class,
           std::int32_t al_iteration);

  std::int64_t size() const { return static_cast<std::int64_t>(entries_.size()); }
  std::int64_t count_in_image(std::int32_t image) const {
    return per_image_counts_[static_cast<std::size_t>(image)];
  }

  // Entries in append order (selection order within and across iterations).
  std::span<const ActiveLabelEntry> entries() const { return entries_; }
  // Entries ordered by (image_index, row, col); the persistence order.
  std::vector<ActiveLabelEntry> sorted_entries() const;

  // Ground-truth class counts of everything selected so far; size num_classes.
  std::vector<std::int64_t> class_counts() const { return class_counts_; }

  // Equality means identical shape and identical labeled pixels, regardless
  // of the order they were appended in.
  bool operator==(const ActiveLabelStore& other) const;

 private:
  std::size_t bit_word(std::int32_t row, std::int32_t col) const {
    return (static_cast<std::size_t>(row) * static_cast<std::size_t>(shape_.width) +
            static_cast<std::size_t>(col)) / 64;
  }
  unsigned bit_offset(std::int32_t row, std::int32_t col) const {
    return static_cast<unsigned>(
        (static_cast<std::size_t>(row) * static_cast<std::size_t>(shape_.width) +
         static_cast<std::size_t>(col)) % 64);
  }

  DatasetShape shape_;
  std::vector<ActiveLabelEntry> entries_;
  std::vector<std::vector<std::uint64_t>> mask_;
  std::vector<std::int64_t> per_image_counts_;
  std::vector<std::int64_t> class_counts_;
};

// Ideal cumulative class budget after `iteration` rounds, in pixels:
//   total_pixels * budget_fraction * goal[class_id] * iteration / num_iterations.
// Returned as a real, not truncated; class_weight divides by it.
double class_budget(const DatasetShape& shape, const BudgetSchedule& sched,
                    std::int32_t iteration, std::int32_t class_id);

// max(1 - cumulative_count / budget, epsilon), extended continuously to
// epsilon when budget is zero (a class with no goal mass is never favored).
double class_weight(double cumulative_count, double budget, double epsilon);

// One weight per class for the given iteration, from cumulative counts.
std::vector<double> class_weights(std::span<const std::int64_t> cumulative_counts,
                                  const DatasetShape& shape, const BudgetSchedule& sched,
                                  std::int32_t iteration);

// Elementwise score reweighting: out[r,c] = scores[r,c] * weights[pseudo[r,c]].
// Weights must lie in (0, 1].
ScoreMatrix apply_weights(const ScoreMatrix& scores, const PseudoLabelMap& pseudo,
                          std::span<const double> weights);

}  // namespace balsel
