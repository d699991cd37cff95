#include "balsel/reference.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace balsel::reference {

namespace {

struct Entry {
  double score;
  std::int32_t image;
  std::int32_t row;
  std::int32_t col;
};

bool ranks_before(const Entry& a, const Entry& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.image, a.row, a.col) < std::tie(b.image, b.row, b.col);
}

std::vector<Entry> eligible_entries(const ScoreStack& stack, const ActiveLabelStore& store,
                                    std::int64_t image) {
  const auto& grid = stack.scores[static_cast<std::size_t>(image)].scores;
  std::vector<Entry> entries;
  for (std::int32_t r = 0; r < grid.height(); ++r) {
    for (std::int32_t c = 0; c < grid.width(); ++c) {
      if (store.selected(static_cast<std::int32_t>(image), r, c)) continue;
      entries.push_back({grid(r, c), static_cast<std::int32_t>(image), r, c});
    }
  }
  return entries;
}

std::vector<PixelRef> take_first(std::vector<Entry> entries, std::int64_t k) {
  std::sort(entries.begin(), entries.end(), ranks_before);
  if (static_cast<std::int64_t>(entries.size()) > k) {
    entries.resize(static_cast<std::size_t>(k));
  }
  std::vector<PixelRef> refs;
  refs.reserve(entries.size());
  for (const Entry& e : entries) refs.push_back({e.image, e.row, e.col});
  return refs;
}

}  // namespace

std::vector<PixelRef> top_k_global(const ScoreStack& stack, std::int64_t budget,
                                   const ActiveLabelStore& store) {
  std::vector<Entry> all;
  for (std::int64_t img = 0; img < stack.num_images(); ++img) {
    auto entries = eligible_entries(stack, store, img);
    all.insert(all.end(), entries.begin(), entries.end());
  }
  return take_first(std::move(all), budget);
}

std::vector<PixelRef> top_k_per_image(const ScoreStack& stack, std::int64_t per_image_budget,
                                      const ActiveLabelStore& store) {
  std::vector<PixelRef> refs;
  for (std::int64_t img = 0; img < stack.num_images(); ++img) {
    auto picked = take_first(eligible_entries(stack, store, img), per_image_budget);
    refs.insert(refs.end(), picked.begin(), picked.end());
  }
  return refs;
}

ScoreMatrix entropy_scores(const ProbabilityMap& probs) {
  ScoreMatrix out;
  out.image_id = probs.image_id;
  out.scores = Grid<double>(probs.height, probs.width);
  for (std::int32_t r = 0; r < probs.height; ++r) {
    for (std::int32_t c = 0; c < probs.width; ++c) {
      double h = 0.0;
      for (std::int32_t k = 0; k < probs.num_classes; ++k) {
        const double p = probs.at(r, c, k);
        if (p > 0.0) h -= p * std::log(p);
      }
      out.scores(r, c) = std::max(h, 0.0);
    }
  }
  return out;
}

ScoreMatrix weighted_scores(const ScoreMatrix& scores, const PseudoLabelMap& pseudo,
                            const std::vector<double>& weights) {
  ScoreMatrix out;
  out.image_id = scores.image_id;
  out.scores = Grid<double>(scores.scores.height(), scores.scores.width());
  for (std::int32_t r = 0; r < scores.scores.height(); ++r) {
    for (std::int32_t c = 0; c < scores.scores.width(); ++c) {
      out.scores(r, c) = scores.scores(r, c) * weights.at(pseudo.labels(r, c));
    }
  }
  return out;
}

}  // namespace balsel::reference
