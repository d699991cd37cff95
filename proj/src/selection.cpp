#include "balsel/selection.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace balsel {

namespace {

struct Candidate {
  double score;
  std::int32_t image;
  std::int32_t row;
  std::int32_t col;
};

// Strict total order: higher score first, ties broken by ascending
// (image, row, col). Every candidate has distinct coordinates, so no two
// compare equal and the top-k set is unique.
inline bool candidate_better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.image != b.image) return a.image < b.image;
  if (a.row != b.row) return a.row < b.row;
  return a.col < b.col;
}

// Bounded keeper of the k best candidates seen so far. Binary heap with the
// weakest kept candidate at the front; an offer that cannot beat it costs one
// comparison.
class TopKBuffer {
 public:
  explicit TopKBuffer(std::int64_t k) : k_(k) { heap_.reserve(static_cast<std::size_t>(k)); }

  void offer(const Candidate& cand) {
    if (k_ == 0) return;
    if (static_cast<std::int64_t>(heap_.size()) < k_) {
      heap_.push_back(cand);
      std::push_heap(heap_.begin(), heap_.end(), candidate_better);
      return;
    }
    if (!candidate_better(cand, heap_.front())) return;
    std::pop_heap(heap_.begin(), heap_.end(), candidate_better);
    heap_.back() = cand;
    std::push_heap(heap_.begin(), heap_.end(), candidate_better);
  }

  bool full() const { return static_cast<std::int64_t>(heap_.size()) == k_; }
  double weakest_score() const { return heap_.front().score; }
  const std::vector<Candidate>& raw() const { return heap_; }

  std::vector<Candidate> sorted_take() && {
    std::sort(heap_.begin(), heap_.end(), candidate_better);
    return std::move(heap_);
  }

 private:
  std::int64_t k_;
  std::vector<Candidate> heap_;
};

void append_picks(const std::vector<Candidate>& picks, ActiveLabelStore& store,
                  const GroundTruth& ground_truth, std::int32_t al_iteration,
                  SelectionResult& result) {
  for (const Candidate& cand : picks) {
    result.picked.push_back({cand.image, cand.row, cand.col});
    ++result.per_image_counts[static_cast<std::size_t>(cand.image)];
    store.add(cand.image, cand.row, cand.col,
              ground_truth.labels[static_cast<std::size_t>(cand.image)](cand.row, cand.col),
              al_iteration);
  }
  result.iteration_budget_used = static_cast<std::int64_t>(result.picked.size());
}

}  // namespace

void ScoreStack::validate(const DatasetShape& shape) const {
  if (static_cast<std::int64_t>(scores.size()) != shape.num_images) {
    throw ShapeError("score stack must cover every image of the target set");
  }
  if (pseudo.size() != scores.size()) {
    throw ShapeError("score stack needs one pseudo label map per score matrix");
  }
  std::unordered_set<std::int32_t> ids;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].scores.height() != shape.height || scores[i].scores.width() != shape.width) {
      throw ShapeError("score matrix dimensions differ from the dataset shape");
    }
    if (!scores[i].scores.same_shape(pseudo[i].labels)) {
      throw ShapeError("pseudo label map dimensions differ from its score matrix");
    }
    if (scores[i].image_id != pseudo[i].image_id) {
      throw ShapeError("score matrix and pseudo label map image ids disagree");
    }
    if (!ids.insert(scores[i].image_id).second) {
      throw ConsistencyError("duplicate image id in score stack");
    }
  }
}

std::int64_t iteration_budget(const DatasetShape& shape, const BudgetSchedule& sched,
                              std::int32_t iteration, std::int64_t already_selected) {
  shape.validate();
  sched.validate(shape.num_classes);
  if (iteration < 1 || iteration > sched.num_al_iterations) {
    throw ScheduleError("iteration " + std::to_string(iteration) + " outside schedule [1, " +
                        std::to_string(sched.num_al_iterations) + "]");
  }
  // +1e-9 rescues exact-decimal budgets from landing a hair under an integer
  const double target = static_cast<double>(shape.total_pixels()) * sched.budget_fraction *
                        static_cast<double>(iteration) /
                        static_cast<double>(sched.num_al_iterations);
  const std::int64_t cumulative = static_cast<std::int64_t>(std::floor(target + 1e-9));
  return std::max<std::int64_t>(cumulative - already_selected, 0);
}

SelectionResult select_image_wise(const ScoreStack& stack, std::int64_t budget_images,
                                  ActiveLabelStore& store, const GroundTruth& ground_truth,
                                  std::int32_t al_iteration) {
  const DatasetShape& shape = store.shape();
  stack.validate(shape);
  if (budget_images < 0) throw BudgetError("image budget must be non-negative");

  const std::int64_t n = shape.num_images;
  const std::int64_t pixels = shape.pixels_per_image();
  std::vector<double> means(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto flat = stack.scores[static_cast<std::size_t>(i)].scores.flat();
    double sum = 0.0;
    for (double s : flat) sum += s;
    means[static_cast<std::size_t>(i)] = sum / static_cast<double>(pixels);
  }

  std::vector<std::int32_t> eligible;
  for (std::int64_t i = 0; i < n; ++i) {
    if (store.count_in_image(static_cast<std::int32_t>(i)) < pixels) {
      eligible.push_back(static_cast<std::int32_t>(i));
    }
  }
  if (budget_images > static_cast<std::int64_t>(eligible.size())) {
    throw BudgetError("image budget " + std::to_string(budget_images) + " exceeds the " +
                      std::to_string(eligible.size()) + " images with unselected pixels");
  }
  std::stable_sort(eligible.begin(), eligible.end(), [&](std::int32_t a, std::int32_t b) {
    if (means[static_cast<std::size_t>(a)] != means[static_cast<std::size_t>(b)]) {
      return means[static_cast<std::size_t>(a)] > means[static_cast<std::size_t>(b)];
    }
    return a < b;
  });

  SelectionResult result;
  result.per_image_counts.assign(static_cast<std::size_t>(n), 0);
  for (std::int64_t pick = 0; pick < budget_images; ++pick) {
    const std::int32_t image = eligible[static_cast<std::size_t>(pick)];
    for (std::int32_t r = 0; r < shape.height; ++r) {
      for (std::int32_t c = 0; c < shape.width; ++c) {
        if (store.selected(image, r, c)) continue;
        result.picked.push_back({image, r, c});
        ++result.per_image_counts[static_cast<std::size_t>(image)];
        store.add(image, r, c, ground_truth.labels[static_cast<std::size_t>(image)](r, c),
                  al_iteration);
      }
    }
  }
  result.iteration_budget_used = static_cast<std::int64_t>(result.picked.size());
  return result;
}

SelectionResult select_region(const ScoreStack& stack, std::int64_t per_image_budget,
                              ActiveLabelStore& store, const GroundTruth& ground_truth,
                              std::int32_t al_iteration) {
  const DatasetShape& shape = store.shape();
  stack.validate(shape);
  if (per_image_budget < 0) throw BudgetError("per-image budget must be non-negative");

  const std::int64_t n = shape.num_images;
  const std::int64_t pixels = shape.pixels_per_image();
  std::vector<std::vector<Candidate>> local(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t img = 0; img < n; ++img) {
    TopKBuffer buffer(std::min(per_image_budget, pixels));
    const auto& grid = stack.scores[static_cast<std::size_t>(img)].scores;
    for (std::int32_t r = 0; r < shape.height; ++r) {
      for (std::int32_t c = 0; c < shape.width; ++c) {
        if (store.selected(static_cast<std::int32_t>(img), r, c)) continue;
        buffer.offer({grid(r, c), static_cast<std::int32_t>(img), r, c});
      }
    }
    local[static_cast<std::size_t>(img)] = std::move(buffer).sorted_take();
  }

  SelectionResult result;
  result.per_image_counts.assign(static_cast<std::size_t>(n), 0);
  for (std::int64_t img = 0; img < n; ++img) {
    append_picks(local[static_cast<std::size_t>(img)], store, ground_truth, al_iteration, result);
  }
  return result;
}

SelectionResult select_dynamic(const ScoreStack& stack, std::int64_t budget,
                               ActiveLabelStore& store, const GroundTruth& ground_truth,
                               std::int32_t al_iteration) {
  const DatasetShape& shape = store.shape();
  stack.validate(shape);
  if (budget < 0) throw BudgetError("budget must be non-negative");

  const std::int64_t n = shape.num_images;
  SelectionResult result;
  result.per_image_counts.assign(static_cast<std::size_t>(n), 0);
  if (budget == 0) return result;

  const std::int64_t pixels = shape.pixels_per_image();
  TopKBuffer global(budget);
  // Current weakest score in the (full) global buffer. Candidates strictly
  // below it can never enter the final top-k, so scans may skip them; the
  // floor only rises, which keeps the pruning exact no matter how threads
  // interleave.
  std::atomic<double> score_floor{-std::numeric_limits<double>::infinity()};

#pragma omp parallel for ordered schedule(dynamic, 1)
  for (std::int64_t img = 0; img < n; ++img) {
    TopKBuffer local(std::min(budget, pixels));
    const auto& grid = stack.scores[static_cast<std::size_t>(img)].scores;
    for (std::int32_t r = 0; r < shape.height; ++r) {
      const double floor_snapshot = score_floor.load(std::memory_order_relaxed);
      for (std::int32_t c = 0; c < shape.width; ++c) {
        const double s = grid(r, c);
        if (s < floor_snapshot) continue;
        if (store.selected(static_cast<std::int32_t>(img), r, c)) continue;
        local.offer({s, static_cast<std::int32_t>(img), r, c});
      }
    }
#pragma omp ordered
    {
      for (const Candidate& cand : local.raw()) global.offer(cand);
      if (global.full()) {
        score_floor.store(global.weakest_score(), std::memory_order_relaxed);
      }
    }
  }

  append_picks(std::move(global).sorted_take(), store, ground_truth, al_iteration, result);
  return result;
}

std::vector<std::int64_t> pseudo_class_counts(const ActiveLabelStore& store,
                                              const ScoreStack& stack) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(store.shape().num_classes), 0);
  for (const ActiveLabelEntry& e : store.entries()) {
    const ClassId c = stack.pseudo[static_cast<std::size_t>(e.image_index)].labels(e.row, e.col);
    if (c >= counts.size()) throw ClassError("pseudo label class id out of range");
    ++counts[c];
  }
  return counts;
}

CbIterationResult run_cbda_iteration(const ScoreStack& stack, const DatasetShape& shape,
                                     const BudgetSchedule& sched, std::int32_t iteration,
                                     ClassStats& stats, ActiveLabelStore& store,
                                     const GroundTruth& ground_truth, CbStrategy strategy,
                                     const CbOptions& options) {
  shape.validate();
  sched.validate(shape.num_classes);
  if (!(store.shape() == shape)) throw ShapeError("store shape differs from the dataset shape");
  stack.validate(shape);
  if (iteration < 1 || iteration > sched.num_al_iterations) {
    throw ScheduleError("iteration " + std::to_string(iteration) + " outside schedule [1, " +
                        std::to_string(sched.num_al_iterations) + "]");
  }

  // Phase 1: statistics gathering. The store is authoritative; the caller's
  // stats must agree with a fresh recount.
  if (static_cast<std::int64_t>(stats.cumulative_counts.size()) != shape.num_classes) {
    throw ConsistencyError("class stats must have one counter per class");
  }
  const std::vector<std::int64_t> recount = store.class_counts();
  if (options.count_mode == CountMode::kGroundTruth) {
    if (stats.cumulative_counts != recount) {
      throw ConsistencyError("class stats disagree with the active label store");
    }
  } else if (stats.total() != store.size()) {
    throw ConsistencyError("class stats total disagrees with the active label store");
  }
  const std::vector<std::int64_t> counts =
      options.count_mode == CountMode::kGroundTruth ? recount : pseudo_class_counts(store, stack);

  // Phase 2: weight calculation from the cumulative class budgets.
  std::vector<double> weights;
  if (options.unit_weights) {
    weights.assign(static_cast<std::size_t>(shape.num_classes), 1.0);
  } else {
    weights = class_weights(counts, shape, sched, iteration);
  }

  // Phase 3: weighted scoring, image-parallel.
  ScoreStack weighted;
  weighted.scores.resize(stack.scores.size());
  weighted.pseudo = stack.pseudo;
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t img = 0; img < shape.num_images; ++img) {
    try {
      weighted.scores[static_cast<std::size_t>(img)] =
          apply_weights(stack.scores[static_cast<std::size_t>(img)],
                        stack.pseudo[static_cast<std::size_t>(img)], weights);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  // Phase 4: selection on the weighted stack.
  const std::int64_t budget = iteration_budget(shape, sched, iteration, store.size());
  CbIterationResult result;
  result.weights = weights;
  if (strategy == CbStrategy::kDynamic) {
    result.selection = select_dynamic(weighted, budget, store, ground_truth, iteration);
  } else {
    const std::int64_t per_image = budget / shape.num_images;
    result.selection = select_region(weighted, per_image, store, ground_truth, iteration);
  }

  stats.cumulative_counts = options.count_mode == CountMode::kGroundTruth
                                ? store.class_counts()
                                : pseudo_class_counts(store, stack);
  stats.iteration_index = iteration;
  return result;
}

}  // namespace balsel
