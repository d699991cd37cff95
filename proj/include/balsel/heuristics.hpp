#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "balsel/core.hpp"

namespace balsel {

// Per-pixel class probabilities, pixel-major: probs[(row*W + col)*C + cls].
struct ProbabilityMap {
  std::int32_t image_id = 0;
  std::int32_t height = 0;
  std::int32_t width = 0;
  std::int32_t num_classes = 0;
  std::vector<double> probs;

  double at(std::int32_t row, std::int32_t col, std::int32_t cls) const {
    return probs[(static_cast<std::size_t>(row) * width + col) * num_classes + cls];
  }

  // Every pixel's values must be >= 0 and sum to 1 within 1e-6.
  void validate() const;
};

// Per-pixel argmax over classes; ties break toward the lowest class id.
PseudoLabelMap pseudo_label(const ProbabilityMap& probs);

// Shannon entropy -sum(p ln p) per pixel, with 0 ln 0 := 0. Natural log, so
// values are directly comparable with the KL-based imbalance metric.
ScoreMatrix score_entropy(const ProbabilityMap& probs);

// 1 - (p_top1 - p_top2) per pixel, in [0, 1]; higher means more uncertain.
// Requires at least two classes.
ScoreMatrix score_margin(const ProbabilityMap& probs);

// Entropy of the pseudo-class histogram over the (2*radius+1)^2 neighborhood
// of each pixel. Windows are clipped at the borders and the histogram is
// taken over the pixels actually present; padding would inject a phantom
// class.
ScoreMatrix score_region_impurity(const PseudoLabelMap& pseudo, std::int32_t radius);

// Seeded uniform scores in [0, 1); the null baseline.
ScoreMatrix score_random(std::int32_t image_id, std::int32_t height, std::int32_t width,
                         std::uint64_t seed);

enum class Heuristic { kEntropy, kMargin, kRegionImpurity, kRandom };

std::optional<Heuristic> heuristic_from_name(std::string_view name);
std::string_view heuristic_name(Heuristic heuristic);
// "entropy | margin | region-impurity | random", for diagnostics.
std::string_view heuristic_names_joined();

}  // namespace balsel
