#pragma once

#include <cstdint>
#include <vector>

#include "balsel/core.hpp"
#include "balsel/heuristics.hpp"
#include "balsel/selection.hpp"

// Serial reference implementations. These materialize every eligible pixel
// and run a full sort, encoding the selection contract as directly as
// possible. They share no code with the production engine; tests compare the
// two paths and the benchmark measures the gap.
namespace balsel::reference {

// Globally best `budget` eligible pixels: full descending sort of every
// (score, image, row, col) tuple, score first, then ascending coordinates.
std::vector<PixelRef> top_k_global(const ScoreStack& stack, std::int64_t budget,
                                   const ActiveLabelStore& store);

// Per-image top `per_image_budget`, same ordering rule within each image.
std::vector<PixelRef> top_k_per_image(const ScoreStack& stack, std::int64_t per_image_budget,
                                      const ActiveLabelStore& store);

// Straightforward per-pixel entropy loop, no parallelism.
ScoreMatrix entropy_scores(const ProbabilityMap& probs);

// Straightforward elementwise reweighting loop.
ScoreMatrix weighted_scores(const ScoreMatrix& scores, const PseudoLabelMap& pseudo,
                            const std::vector<double>& weights);

}  // namespace balsel::reference
