#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "balsel/core.hpp"
#include "balsel/selection.hpp"

namespace balsel {

// Normalized class proportions of a non-empty selection.
struct ClassDistribution {
  std::vector<double> proportions;

  void validate() const;
};

struct ImbalanceReport {
  double imbalance_score = 0.0;
  std::vector<std::int64_t> per_class_counts;
  double kl_to_uniform = 0.0;  // nats
};

// Ground-truth class proportions of everything selected so far.
ClassDistribution class_distribution(const ActiveLabelStore& store);

// Variant measured against the stack's current pseudo labels instead of the
// revealed ground truth.
ClassDistribution class_distribution_pseudo(const ActiveLabelStore& store,
                                            const ScoreStack& stack);

// KL(dist || uniform) / ln C, in [0, 1]: 0 iff uniform, 1 iff one-hot.
// Zero proportions contribute nothing (0 ln 0 := 0). The uniform reference is
// used even when a non-uniform goal is configured.
double imbalance_score(const ClassDistribution& dist);

ImbalanceReport imbalance_report(const ActiveLabelStore& store);

// Histogram of per-image selected-pixel fractions. Bins are right-closed:
// bin b covers (b/num_bins, (b+1)/num_bins], except bin 0 which also includes
// zero. Bin counts always sum to num_images.
struct SelectionHistogram {
  std::int32_t num_bins = 0;
  std::vector<std::int64_t> counts;

  double bin_lower(std::int32_t bin) const { return static_cast<double>(bin) / num_bins; }
  double bin_upper(std::int32_t bin) const { return static_cast<double>(bin + 1) / num_bins; }
};

SelectionHistogram selection_histogram(const ActiveLabelStore& store, const DatasetShape& shape,
                                       std::int32_t num_bins);

// Fraction of each image's pixels that are selected; input to the histogram
// and to spread comparisons between acquisition strategies.
std::vector<double> per_image_selected_fractions(const ActiveLabelStore& store,
                                                 const DatasetShape& shape);

}  // namespace balsel
