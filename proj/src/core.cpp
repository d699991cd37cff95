#include "balsel/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace balsel {

namespace {

constexpr std::int64_t kMaxTotalPixels = std::int64_t{1} << 53;

std::string field_msg(const char* field, const std::string& detail) {
  return std::string(field) + ": " + detail;
}

}  // namespace

std::int64_t DatasetShape::total_pixels() const {
  validate();
  return num_images * pixels_per_image();
}

void DatasetShape::validate() const {
  if (num_images <= 0) throw ShapeError("num_images must be strictly positive");
  if (height <= 0) throw ShapeError("height must be strictly positive");
  if (width <= 0) throw ShapeError("width must be strictly positive");
  if (num_classes <= 0) throw ShapeError("num_classes must be strictly positive");
  const __int128 total = static_cast<__int128>(num_images) * height * width;
  if (total > kMaxTotalPixels) {
    throw ShapeError("total pixel count exceeds 2^53 and is no longer exactly representable");
  }
}

void BudgetSchedule::validate(std::int32_t num_classes) const {
  if (!(budget_fraction > 0.0) || budget_fraction > 1.0) {
    throw ConfigError(field_msg("budget_fraction", "must be in (0, 1]"));
  }
  if (num_al_iterations < 1) {
    throw ConfigError(field_msg("num_al_iterations", "must be at least 1"));
  }
  if (!(epsilon > 0.0) || epsilon >= 1.0) {
    throw ConfigError(field_msg("epsilon", "must be strictly between 0 and 1"));
  }
  if (static_cast<std::int64_t>(goal_distribution.size()) != num_classes) {
    throw ConfigError(field_msg("goal_distribution", "must have one entry per class"));
  }
  double sum = 0.0;
  for (double g : goal_distribution) {
    if (!(g >= 0.0)) throw ConfigError(field_msg("goal_distribution", "entries must be >= 0"));
    sum += g;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError(field_msg("goal_distribution",
                                "must sum to 1 (got " + std::to_string(sum) + ")"));
  }
}

std::vector<double> uniform_goal(std::int32_t num_classes) {
  if (num_classes <= 0) throw ClassError("num_classes must be strictly positive");
  return std::vector<double>(static_cast<std::size_t>(num_classes), 1.0 / num_classes);
}

void ScoreMatrix::validate() const {
  for (double s : scores.flat()) {
    if (!std::isfinite(s) || s < 0.0) {
      throw ValueError("acquisition scores must be finite and non-negative");
    }
  }
}

void PseudoLabelMap::validate(std::int32_t num_classes) const {
  for (ClassId c : labels.flat()) {
    if (c >= num_classes) throw ClassError("pseudo label class id out of range");
  }
}

ClassStats ClassStats::zeros(std::int32_t num_classes) {
  ClassStats stats;
  stats.cumulative_counts.assign(static_cast<std::size_t>(num_classes), 0);
  return stats;
}

std::int64_t ClassStats::total() const {
  std::int64_t sum = 0;
  for (std::int64_t c : cumulative_counts) sum += c;
  return sum;
}

ActiveLabelStore::ActiveLabelStore(const DatasetShape& shape) : shape_(shape) {
  shape_.validate();
  const std::size_t words =
      (static_cast<std::size_t>(shape_.pixels_per_image()) + 63) / 64;
  mask_.assign(static_cast<std::size_t>(shape_.num_images),
               std::vector<std::uint64_t>(words, 0));
  per_image_counts_.assign(static_cast<std::size_t>(shape_.num_images), 0);
  class_counts_.assign(static_cast<std::size_t>(shape_.num_classes), 0);
}

void ActiveLabelStore::add(std::int32_t image, std::int32_t row, std::int32_t col,
                           ClassId true_class, std::int32_t al_iteration) {
  if (image < 0 || image >= shape_.num_images || row < 0 || row >= shape_.height || col < 0 ||
      col >= shape_.width) {
    throw ShapeError("pixel reference out of dataset bounds");
  }
  if (true_class >= shape_.num_classes) throw ClassError("true class id out of range");
  if (selected(image, row, col)) {
    throw ConsistencyError("pixel (" + std::to_string(image) + "," + std::to_string(row) + "," +
                           std::to_string(col) + ") is already selected");
  }
  mask_[static_cast<std::size_t>(image)][bit_word(row, col)] |= std::uint64_t{1}
                                                                << bit_offset(row, col);
  entries_.push_back({image, row, col, true_class, al_iteration});
  ++per_image_counts_[static_cast<std::size_t>(image)];
  ++class_counts_[true_class];
}

std::vector<ActiveLabelEntry> ActiveLabelStore::sorted_entries() const {
  std::vector<ActiveLabelEntry> sorted(entries_.begin(), entries_.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ActiveLabelEntry& a, const ActiveLabelEntry& b) {
              if (a.image_index != b.image_index) return a.image_index < b.image_index;
              if (a.row != b.row) return a.row < b.row;
              return a.col < b.col;
            });
  return sorted;
}

bool ActiveLabelStore::operator==(const ActiveLabelStore& other) const {
  return shape_ == other.shape_ && sorted_entries() == other.sorted_entries();
}

double class_budget(const DatasetShape& shape, const BudgetSchedule& sched,
                    std::int32_t iteration, std::int32_t class_id) {
  shape.validate();
  sched.validate(shape.num_classes);
  if (iteration < 1 || iteration > sched.num_al_iterations) {
    throw ScheduleError("iteration " + std::to_string(iteration) + " outside schedule [1, " +
                        std::to_string(sched.num_al_iterations) + "]");
  }
  if (class_id < 0 || class_id >= shape.num_classes) {
    throw ClassError("class id " + std::to_string(class_id) + " out of range");
  }
  return static_cast<double>(shape.total_pixels()) * sched.budget_fraction *
         sched.goal_distribution[static_cast<std::size_t>(class_id)] *
         (static_cast<double>(iteration) / static_cast<double>(sched.num_al_iterations));
}

double class_weight(double cumulative_count, double budget, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be strictly positive");
  if (budget < 0.0) throw BudgetError("class budget must be non-negative");
  // budget 0 with any history means the class is over target; the limit of
  // the formula is -inf, clamped to epsilon.
  if (budget == 0.0) return epsilon;
  return std::max(1.0 - cumulative_count / budget, epsilon);
}

std::vector<double> class_weights(std::span<const std::int64_t> cumulative_counts,
                                  const DatasetShape& shape, const BudgetSchedule& sched,
                                  std::int32_t iteration) {
  if (static_cast<std::int64_t>(cumulative_counts.size()) != shape.num_classes) {
    throw ClassError("cumulative count vector must have one entry per class");
  }
  std::vector<double> weights(cumulative_counts.size());
  for (std::int32_t c = 0; c < shape.num_classes; ++c) {
    const double budget = class_budget(shape, sched, iteration, c);
    weights[static_cast<std::size_t>(c)] =
        class_weight(static_cast<double>(cumulative_counts[static_cast<std::size_t>(c)]), budget,
                     sched.epsilon);
  }
  return weights;
}

ScoreMatrix apply_weights(const ScoreMatrix& scores, const PseudoLabelMap& pseudo,
                          std::span<const double> weights) {
  if (scores.image_id != pseudo.image_id) {
    throw ShapeError("score matrix and pseudo label map belong to different images");
  }
  if (!scores.scores.same_shape(pseudo.labels)) {
    throw ShapeError("score matrix and pseudo label map dimensions differ");
  }
  for (double w : weights) {
    if (!(w > 0.0) || w > 1.0) throw ValueError("class weights must lie in (0, 1]");
  }

  const auto labels = pseudo.labels.flat();
  for (ClassId c : labels) {
    if (c >= weights.size()) throw ClassError("pseudo label class id exceeds weight vector");
  }

  ScoreMatrix out;
  out.image_id = scores.image_id;
  out.scores = Grid<double>(scores.scores.height(), scores.scores.width());
  const auto in = scores.scores.flat();
  const auto result = out.scores.flat();
  const std::int64_t n = scores.scores.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    result[static_cast<std::size_t>(i)] =
        in[static_cast<std::size_t>(i)] * weights[labels[static_cast<std::size_t>(i)]];
  }
  return out;
}

}  // namespace balsel
