#include "balsel/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <utility>

#include "balsel/rng.hpp"

namespace balsel {

namespace {

// Stream tags so ground truth, surrogate draws, and the random heuristic
// never share a generator state.
constexpr std::uint64_t kGroundTruthStream = 0x67726F756E64ULL;
constexpr std::uint64_t kSurrogateStream = 0x737572726FULL;
constexpr std::uint64_t kRandomScoreStream = 0x72616E64ULL;

}  // namespace

void ScenarioConfig::validate() const {
  shape.validate();
  if (static_cast<std::int64_t>(class_frequencies.size()) != shape.num_classes) {
    throw ConfigError("class_frequencies: must have one entry per class");
  }
  double sum = 0.0;
  for (double f : class_frequencies) {
    if (!(f >= 0.0)) throw ConfigError("class_frequencies: entries must be >= 0");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("class_frequencies: must sum to 1 (got " + std::to_string(sum) + ")");
  }
  if (spatial_granularity < 1) {
    throw ConfigError("spatial_granularity: must be at least 1");
  }
  if (spatial_granularity > std::min(shape.height, shape.width)) {
    throw ConfigError("spatial_granularity: must not exceed the smaller image dimension");
  }
  if (noise_schedule.empty()) {
    throw ConfigError("noise_schedule: must not be empty");
  }
  double previous = 1.0;
  for (double lambda : noise_schedule) {
    if (!(lambda >= 0.0) || lambda > 1.0) {
      throw ConfigError("noise_schedule: entries must lie in [0, 1]");
    }
    if (lambda > previous) {
      throw ConfigError("noise_schedule: entries must be non-increasing");
    }
    previous = lambda;
  }
}

GroundTruth generate_ground_truth(const ScenarioConfig& cfg) {
  cfg.validate();
  const std::int64_t n = cfg.shape.num_images;
  GroundTruth gt;
  gt.labels.resize(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t img = 0; img < n; ++img) {
    Rng rng(mix_seed(cfg.seed, kGroundTruthStream, static_cast<std::uint64_t>(img)));
    Grid<ClassId> grid(cfg.shape.height, cfg.shape.width);
    const std::int32_t g = cfg.spatial_granularity;
    for (std::int32_t r0 = 0; r0 < cfg.shape.height; r0 += g) {
      for (std::int32_t c0 = 0; c0 < cfg.shape.width; c0 += g) {
        const auto cls =
            static_cast<ClassId>(pick_category(rng.next_double(), cfg.class_frequencies));
        const std::int32_t r1 = std::min(r0 + g, cfg.shape.height);
        const std::int32_t c1 = std::min(c0 + g, cfg.shape.width);
        for (std::int32_t r = r0; r < r1; ++r) {
          for (std::int32_t c = c0; c < c1; ++c) grid(r, c) = cls;
        }
      }
    }
    gt.labels[static_cast<std::size_t>(img)] = std::move(grid);
  }
  return gt;
}

ProbabilityMap surrogate_probabilities(const Grid<ClassId>& truth, std::int32_t image_id,
                                       std::int32_t num_classes, double lambda,
                                       std::uint64_t seed) {
  if (!(lambda >= 0.0) || lambda > 1.0) throw ConfigError("lambda must lie in [0, 1]");
  if (num_classes < 1) throw ClassError("num_classes must be at least 1");
  ProbabilityMap out;
  out.image_id = image_id;
  out.height = truth.height();
  out.width = truth.width();
  out.num_classes = num_classes;
  out.probs.resize(static_cast<std::size_t>(truth.size()) * num_classes);

  Rng rng(seed);
  std::vector<double> draws(static_cast<std::size_t>(num_classes));
  const auto labels = truth.flat();
  for (std::int64_t px = 0; px < truth.size(); ++px) {
    double total = 0.0;
    for (double& d : draws) {
      d = rng.next_exponential();
      total += d;
    }
    double* p = out.probs.data() + static_cast<std::size_t>(px) * num_classes;
    if (total > 0.0) {
      for (std::int32_t c = 0; c < num_classes; ++c) p[c] = lambda * draws[c] / total;
    } else {
      for (std::int32_t c = 0; c < num_classes; ++c) p[c] = lambda / num_classes;
    }
    p[labels[static_cast<std::size_t>(px)]] += 1.0 - lambda;
  }
  return out;
}

std::optional<Strategy> strategy_from_name(std::string_view name) {
  if (name == "image") return Strategy::kImageWise;
  if (name == "ra") return Strategy::kRegion;
  if (name == "da") return Strategy::kDynamic;
  if (name == "cbra") return Strategy::kCbRegion;
  if (name == "cbda") return Strategy::kCbDynamic;
  return std::nullopt;
}

std::string_view strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::kImageWise: return "image";
    case Strategy::kRegion: return "ra";
    case Strategy::kDynamic: return "da";
    case Strategy::kCbRegion: return "cbra";
    case Strategy::kCbDynamic: return "cbda";
  }
  return "unknown";
}

std::string_view strategy_names_joined() { return "image, ra, da, cbra, cbda"; }

namespace {

ScoreStack build_stack(const GroundTruth& gt, const ScenarioConfig& cfg,
                       const HeuristicSpec& heuristic, double lambda, std::int32_t iteration) {
  const std::int64_t n = cfg.shape.num_images;
  ScoreStack stack;
  stack.scores.resize(static_cast<std::size_t>(n));
  stack.pseudo.resize(static_cast<std::size_t>(n));
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t img = 0; img < n; ++img) {
    try {
      const auto& truth = gt.labels[static_cast<std::size_t>(img)];
      const std::uint64_t probe_seed =
          mix_seed(cfg.seed, kSurrogateStream, static_cast<std::uint64_t>(iteration),
                   static_cast<std::uint64_t>(img));
      const ProbabilityMap probs = surrogate_probabilities(
          truth, static_cast<std::int32_t>(img), cfg.shape.num_classes, lambda, probe_seed);
      PseudoLabelMap pseudo = pseudo_label(probs);
      ScoreMatrix scores;
      switch (heuristic.kind) {
        case Heuristic::kEntropy:
          scores = score_entropy(probs);
          break;
        case Heuristic::kMargin:
          scores = score_margin(probs);
          break;
        case Heuristic::kRegionImpurity:
          scores = score_region_impurity(pseudo, heuristic.impurity_radius);
          break;
        case Heuristic::kRandom:
          scores = score_random(static_cast<std::int32_t>(img), cfg.shape.height,
                                cfg.shape.width,
                                mix_seed(cfg.seed, kRandomScoreStream,
                                         static_cast<std::uint64_t>(iteration),
                                         static_cast<std::uint64_t>(img)));
          break;
      }
      stack.pseudo[static_cast<std::size_t>(img)] = std::move(pseudo);
      stack.scores[static_cast<std::size_t>(img)] = std::move(scores);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return stack;
}

// Image-wise runs track the same linear ramp, rounded down to whole images.
std::int64_t image_budget(const DatasetShape& shape, const BudgetSchedule& sched,
                          std::int32_t iteration, std::int64_t images_already) {
  const double target = static_cast<double>(shape.total_pixels()) * sched.budget_fraction *
                        static_cast<double>(iteration) /
                        static_cast<double>(sched.num_al_iterations);
  const auto target_images = static_cast<std::int64_t>(
      std::floor(target / static_cast<double>(shape.pixels_per_image()) + 1e-9));
  return std::max<std::int64_t>(target_images - images_already, 0);
}

}  // namespace

LoopResult run_loop(const ScenarioConfig& cfg, const BudgetSchedule& sched, Strategy strategy,
                    const HeuristicSpec& heuristic, const LoopOptions& options) {
  cfg.validate();
  sched.validate(cfg.shape.num_classes);
  if (static_cast<std::int64_t>(cfg.noise_schedule.size()) != sched.num_al_iterations) {
    throw ConfigError("noise_schedule: length must equal num_al_iterations");
  }
  if (options.histogram_bins < 1) throw ConfigError("histogram_bins: must be at least 1");

  LoopResult result;
  result.ground_truth = generate_ground_truth(cfg);
  result.store = ActiveLabelStore(cfg.shape);
  ClassStats stats = ClassStats::zeros(cfg.shape.num_classes);
  std::int64_t images_selected = 0;

  for (std::int32_t iteration = 1; iteration <= sched.num_al_iterations; ++iteration) {
    const double lambda = cfg.noise_schedule[static_cast<std::size_t>(iteration - 1)];
    const ScoreStack stack = build_stack(result.ground_truth, cfg, heuristic, lambda, iteration);

    IterationRecord record;
    record.iteration = iteration;
    record.lambda = lambda;
    record.weights.assign(static_cast<std::size_t>(cfg.shape.num_classes), 1.0);

    SelectionResult selection;
    switch (strategy) {
      case Strategy::kImageWise: {
        const std::int64_t budget_images =
            std::min(image_budget(cfg.shape, sched, iteration, images_selected),
                     cfg.shape.num_images - images_selected);
        record.budget_requested = budget_images * cfg.shape.pixels_per_image();
        selection = select_image_wise(stack, budget_images, result.store, result.ground_truth,
                                      iteration);
        images_selected += budget_images;
        break;
      }
      case Strategy::kRegion: {
        const std::int64_t budget =
            iteration_budget(cfg.shape, sched, iteration, result.store.size());
        record.budget_requested = budget;
        selection = select_region(stack, budget / cfg.shape.num_images, result.store,
                                  result.ground_truth, iteration);
        break;
      }
      case Strategy::kDynamic: {
        const std::int64_t budget =
            iteration_budget(cfg.shape, sched, iteration, result.store.size());
        record.budget_requested = budget;
        selection =
            select_dynamic(stack, budget, result.store, result.ground_truth, iteration);
        break;
      }
      case Strategy::kCbRegion:
      case Strategy::kCbDynamic: {
        record.budget_requested =
            iteration_budget(cfg.shape, sched, iteration, result.store.size());
        CbOptions cb_options;
        cb_options.count_mode = options.count_mode;
        cb_options.unit_weights = options.unit_weights;
        CbIterationResult cb = run_cbda_iteration(
            stack, cfg.shape, sched, iteration, stats, result.store, result.ground_truth,
            strategy == Strategy::kCbDynamic ? CbStrategy::kDynamic : CbStrategy::kRegion,
            cb_options);
        selection = std::move(cb.selection);
        record.weights = std::move(cb.weights);
        break;
      }
    }

    if (strategy != Strategy::kCbRegion && strategy != Strategy::kCbDynamic) {
      stats.cumulative_counts = options.count_mode == CountMode::kGroundTruth
                                    ? result.store.class_counts()
                                    : pseudo_class_counts(result.store, stack);
      stats.iteration_index = iteration;
    }

    record.budget_used = selection.iteration_budget_used;
    record.cumulative_selected = result.store.size();
    record.cumulative_class_counts = result.store.class_counts();
    if (result.store.size() > 0) {
      const ClassDistribution dist = options.imbalance_on_pseudo
                                         ? class_distribution_pseudo(result.store, stack)
                                         : class_distribution(result.store);
      record.imbalance = imbalance_score(dist);
    } else {
      record.imbalance = std::nan("");
    }
    record.histogram =
        selection_histogram(result.store, cfg.shape, options.histogram_bins).counts;
    result.report.iterations.push_back(std::move(record));
  }

  result.report.total_selected = result.store.size();
  result.report.final_class_counts = result.store.class_counts();
  if (result.store.size() > 0) {
    const ImbalanceReport imbalance = imbalance_report(result.store);
    result.report.final_imbalance = imbalance.imbalance_score;
    result.report.final_kl_to_uniform = imbalance.kl_to_uniform;
  } else {
    result.report.final_imbalance = std::nan("");
    result.report.final_kl_to_uniform = std::nan("");
  }
  return result;
}

}  // namespace balsel
