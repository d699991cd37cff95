#include "balsel/heuristics.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "balsel/rng.hpp"

namespace balsel {

void ProbabilityMap::validate() const {
  if (height <= 0 || width <= 0 || num_classes <= 0) {
    throw ShapeError("probability map dimensions must be strictly positive");
  }
  const std::size_t expected = static_cast<std::size_t>(height) * width * num_classes;
  if (probs.size() != expected) {
    throw ShapeError("probability buffer size does not match H*W*C");
  }
  for (std::int64_t px = 0; px < static_cast<std::int64_t>(height) * width; ++px) {
    double sum = 0.0;
    for (std::int32_t c = 0; c < num_classes; ++c) {
      const double p = probs[static_cast<std::size_t>(px) * num_classes + c];
      if (!(p >= 0.0)) throw ValueError("class probabilities must be non-negative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ValueError("class probabilities must sum to 1 per pixel (got " +
                       std::to_string(sum) + ")");
    }
  }
}

PseudoLabelMap pseudo_label(const ProbabilityMap& probs) {
  PseudoLabelMap out;
  out.image_id = probs.image_id;
  out.labels = Grid<ClassId>(probs.height, probs.width);
  const std::int64_t pixels = static_cast<std::int64_t>(probs.height) * probs.width;
  const std::int32_t C = probs.num_classes;
  const auto labels = out.labels.flat();
#pragma omp parallel for schedule(static)
  for (std::int64_t px = 0; px < pixels; ++px) {
    const double* p = probs.probs.data() + static_cast<std::size_t>(px) * C;
    std::int32_t best = 0;
    // strict > keeps the lowest class id on ties
    for (std::int32_t c = 1; c < C; ++c) {
      if (p[c] > p[best]) best = c;
    }
    labels[static_cast<std::size_t>(px)] = static_cast<ClassId>(best);
  }
  return out;
}

ScoreMatrix score_entropy(const ProbabilityMap& probs) {
  ScoreMatrix out;
  out.image_id = probs.image_id;
  out.scores = Grid<double>(probs.height, probs.width);
  const std::int64_t pixels = static_cast<std::int64_t>(probs.height) * probs.width;
  const std::int32_t C = probs.num_classes;
  const auto scores = out.scores.flat();
#pragma omp parallel for schedule(static)
  for (std::int64_t px = 0; px < pixels; ++px) {
    const double* p = probs.probs.data() + static_cast<std::size_t>(px) * C;
    double h = 0.0;
    for (std::int32_t c = 0; c < C; ++c) {
      if (p[c] > 0.0) h -= p[c] * std::log(p[c]);
    }
    // a lone probability epsilon above 1 would land us at -1e-7 or so;
    // scores must stay non-negative
    scores[static_cast<std::size_t>(px)] = std::max(h, 0.0);
  }
  return out;
}

ScoreMatrix score_margin(const ProbabilityMap& probs) {
  if (probs.num_classes < 2) throw ClassError("margin scoring needs at least two classes");
  ScoreMatrix out;
  out.image_id = probs.image_id;
  out.scores = Grid<double>(probs.height, probs.width);
  const std::int64_t pixels = static_cast<std::int64_t>(probs.height) * probs.width;
  const std::int32_t C = probs.num_classes;
  const auto scores = out.scores.flat();
#pragma omp parallel for schedule(static)
  for (std::int64_t px = 0; px < pixels; ++px) {
    const double* p = probs.probs.data() + static_cast<std::size_t>(px) * C;
    double top1 = p[0] >= p[1] ? p[0] : p[1];
    double top2 = p[0] >= p[1] ? p[1] : p[0];
    for (std::int32_t c = 2; c < C; ++c) {
      if (p[c] > top1) {
        top2 = top1;
        top1 = p[c];
      } else if (p[c] > top2) {
        top2 = p[c];
      }
    }
    scores[static_cast<std::size_t>(px)] = std::min(std::max(1.0 - (top1 - top2), 0.0), 1.0);
  }
  return out;
}

ScoreMatrix score_region_impurity(const PseudoLabelMap& pseudo, std::int32_t radius) {
  if (radius < 1) throw ValueError("impurity radius must be at least 1");
  std::int32_t max_class = 0;
  for (ClassId c : pseudo.labels.flat()) max_class = std::max<std::int32_t>(max_class, c);

  ScoreMatrix out;
  out.image_id = pseudo.image_id;
  const std::int32_t H = pseudo.labels.height();
  const std::int32_t W = pseudo.labels.width();
  out.scores = Grid<double>(H, W);
#pragma omp parallel
  {
    std::vector<std::int32_t> histogram(static_cast<std::size_t>(max_class) + 1);
#pragma omp for schedule(static)
    for (std::int32_t r = 0; r < H; ++r) {
      const std::int32_t r0 = std::max(r - radius, 0);
      const std::int32_t r1 = std::min(r + radius, H - 1);
      for (std::int32_t c = 0; c < W; ++c) {
        const std::int32_t c0 = std::max(c - radius, 0);
        const std::int32_t c1 = std::min(c + radius, W - 1);
        std::fill(histogram.begin(), histogram.end(), 0);
        for (std::int32_t rr = r0; rr <= r1; ++rr) {
          for (std::int32_t cc = c0; cc <= c1; ++cc) {
            ++histogram[pseudo.labels(rr, cc)];
          }
        }
        const double total = static_cast<double>((r1 - r0 + 1) * (c1 - c0 + 1));
        double h = 0.0;
        for (std::int32_t n : histogram) {
          if (n > 0) {
            const double q = n / total;
            h -= q * std::log(q);
          }
        }
        out.scores(r, c) = std::max(h, 0.0);
      }
    }
  }
  return out;
}

ScoreMatrix score_random(std::int32_t image_id, std::int32_t height, std::int32_t width,
                         std::uint64_t seed) {
  ScoreMatrix out;
  out.image_id = image_id;
  out.scores = Grid<double>(height, width);
  Rng rng(seed);
  for (double& s : out.scores.flat()) s = rng.next_double();
  return out;
}

std::optional<Heuristic> heuristic_from_name(std::string_view name) {
  if (name == "entropy") return Heuristic::kEntropy;
  if (name == "margin") return Heuristic::kMargin;
  if (name == "region-impurity") return Heuristic::kRegionImpurity;
  if (name == "random") return Heuristic::kRandom;
  return std::nullopt;
}

std::string_view heuristic_name(Heuristic heuristic) {
  switch (heuristic) {
    case Heuristic::kEntropy: return "entropy";
    case Heuristic::kMargin: return "margin";
    case Heuristic::kRegionImpurity: return "region-impurity";
    case Heuristic::kRandom: return "random";
  }
  return "unknown";
}

std::string_view heuristic_names_joined() { return "entropy, margin, region-impurity, random"; }

}  // namespace balsel
