#include "balsel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace balsel {

void ClassDistribution::validate() const {
  if (proportions.empty()) throw ClassError("class distribution must not be empty");
  double sum = 0.0;
  for (double p : proportions) {
    if (!(p >= 0.0)) throw ValueError("class proportions must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValueError("class proportions must sum to 1 (got " + std::to_string(sum) + ")");
  }
}

namespace {

ClassDistribution normalize_counts(const std::vector<std::int64_t>& counts) {
  std::int64_t total = 0;
  for (std::int64_t c : counts) total += c;
  if (total == 0) throw EmptySelectionError("no pixels selected yet; class metrics undefined");
  ClassDistribution dist;
  dist.proportions.resize(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    dist.proportions[c] = static_cast<double>(counts[c]) / static_cast<double>(total);
  }
  return dist;
}

}  // namespace

ClassDistribution class_distribution(const ActiveLabelStore& store) {
  return normalize_counts(store.class_counts());
}

ClassDistribution class_distribution_pseudo(const ActiveLabelStore& store,
                                            const ScoreStack& stack) {
  return normalize_counts(pseudo_class_counts(store, stack));
}

double imbalance_score(const ClassDistribution& dist) {
  dist.validate();
  const std::size_t C = dist.proportions.size();
  if (C < 2) throw ClassError("imbalance score needs at least two classes");
  double kl = 0.0;
  for (double q : dist.proportions) {
    if (q > 0.0) kl += q * std::log(q * static_cast<double>(C));
  }
  // the one-hot maximum; clamp float residue into [0, 1]
  const double max_kl = std::log(static_cast<double>(C));
  return std::clamp(kl / max_kl, 0.0, 1.0);
}

ImbalanceReport imbalance_report(const ActiveLabelStore& store) {
  ImbalanceReport report;
  report.per_class_counts = store.class_counts();
  const ClassDistribution dist = normalize_counts(report.per_class_counts);
  const std::size_t C = dist.proportions.size();
  double kl = 0.0;
  for (double q : dist.proportions) {
    if (q > 0.0) kl += q * std::log(q * static_cast<double>(C));
  }
  report.kl_to_uniform = kl;
  report.imbalance_score = imbalance_score(dist);
  return report;
}

std::vector<double> per_image_selected_fractions(const ActiveLabelStore& store,
                                                 const DatasetShape& shape) {
  shape.validate();
  const std::int64_t pixels = shape.pixels_per_image();
  std::vector<double> fractions(static_cast<std::size_t>(shape.num_images));
  for (std::int64_t i = 0; i < shape.num_images; ++i) {
    fractions[static_cast<std::size_t>(i)] =
        static_cast<double>(store.count_in_image(static_cast<std::int32_t>(i))) /
        static_cast<double>(pixels);
  }
  return fractions;
}

SelectionHistogram selection_histogram(const ActiveLabelStore& store, const DatasetShape& shape,
                                       std::int32_t num_bins) {
  shape.validate();
  if (num_bins < 1) throw ConfigError("num_bins must be at least 1");
  SelectionHistogram hist;
  hist.num_bins = num_bins;
  hist.counts.assign(static_cast<std::size_t>(num_bins), 0);
  const std::int64_t pixels = shape.pixels_per_image();
  for (std::int64_t i = 0; i < shape.num_images; ++i) {
    const std::int64_t selected = store.count_in_image(static_cast<std::int32_t>(i));
    // right-closed bins: smallest b with selected/pixels <= (b+1)/num_bins,
    // computed in integers to dodge rounding
    std::int64_t bin = 0;
    if (selected > 0) {
      bin = (selected * num_bins + pixels - 1) / pixels - 1;
      bin = std::clamp<std::int64_t>(bin, 0, num_bins - 1);
    }
    ++hist.counts[static_cast<std::size_t>(bin)];
  }
  return hist;
}

}  // namespace balsel
