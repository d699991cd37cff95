#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "balsel/scenario.hpp"

using namespace balsel;

namespace {

ScenarioConfig skewed_config(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.shape = {20, 32, 32, 5};
  cfg.class_frequencies = {0.6, 0.2, 0.1, 0.07, 0.03};
  cfg.spatial_granularity = 4;
  cfg.noise_schedule = {0.8, 0.6, 0.4, 0.2, 0.1};
  cfg.seed = seed;
  return cfg;
}

BudgetSchedule skewed_schedule() {
  BudgetSchedule sched;
  sched.budget_fraction = 0.05;
  sched.num_al_iterations = 5;
  sched.goal_distribution = uniform_goal(5);
  return sched;
}

double pseudo_accuracy(const GroundTruth& gt, const ScenarioConfig& cfg, double lambda,
                       std::uint64_t seed) {
  std::int64_t correct = 0;
  for (std::size_t img = 0; img < gt.labels.size(); ++img) {
    const ProbabilityMap probs =
        surrogate_probabilities(gt.labels[img], static_cast<std::int32_t>(img),
                                cfg.shape.num_classes, lambda, seed + img);
    const PseudoLabelMap pseudo = pseudo_label(probs);
    const auto truth = gt.labels[img].flat();
    const auto predicted = pseudo.labels.flat();
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == predicted[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(cfg.shape.total_pixels());
}

}  // namespace

TEST_CASE("scenario config validation names fields") {
  CHECK_NOTHROW(skewed_config(1).validate());

  ScenarioConfig bad = skewed_config(1);
  bad.class_frequencies = {0.5, 0.2, 0.1, 0.07, 0.03};
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("class_frequencies"), ConfigError);

  bad = skewed_config(1);
  bad.spatial_granularity = 33;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("spatial_granularity"), ConfigError);

  bad = skewed_config(1);
  bad.noise_schedule = {0.4, 0.6, 0.4, 0.2, 0.1};  // increases
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("noise_schedule"), ConfigError);
}

TEST_CASE("ground truth generation") {
  SUBCASE("one-hot frequencies fill every pixel with that class") {
    ScenarioConfig cfg = skewed_config(2);
    cfg.class_frequencies = {0.0, 0.0, 1.0, 0.0, 0.0};
    const GroundTruth gt = generate_ground_truth(cfg);
    for (const auto& grid : gt.labels) {
      for (ClassId c : grid.flat()) CHECK(c == 2);
    }
  }
  SUBCASE("same seed reproduces the maps, different seed does not") {
    const GroundTruth a = generate_ground_truth(skewed_config(3));
    const GroundTruth b = generate_ground_truth(skewed_config(3));
    const GroundTruth c = generate_ground_truth(skewed_config(4));
    CHECK(a.labels == b.labels);
    CHECK(a.labels != c.labels);
  }
  SUBCASE("tiles are spatially coherent") {
    ScenarioConfig cfg = skewed_config(5);
    const GroundTruth gt = generate_ground_truth(cfg);
    const auto& grid = gt.labels[0];
    for (std::int32_t r = 0; r < 32; r += 4) {
      for (std::int32_t c = 0; c < 32; c += 4) {
        const ClassId cls = grid(r, c);
        for (std::int32_t rr = r; rr < r + 4; ++rr) {
          for (std::int32_t cc = c; cc < c + 4; ++cc) CHECK(grid(rr, cc) == cls);
        }
      }
    }
  }
  SUBCASE("empirical frequencies track the configured ones") {
    ScenarioConfig cfg = skewed_config(6);
    cfg.shape = {100, 64, 64, 5};
    cfg.spatial_granularity = 8;
    const GroundTruth gt = generate_ground_truth(cfg);
    std::vector<std::int64_t> counts(5, 0);
    for (const auto& grid : gt.labels) {
      for (ClassId c : grid.flat()) ++counts[c];
    }
    const auto total = static_cast<double>(cfg.shape.total_pixels());
    for (std::size_t c = 0; c < 5; ++c) {
      const double empirical = static_cast<double>(counts[c]) / total;
      const double expected = cfg.class_frequencies[c];
      CHECK(std::abs(empirical - expected) / expected <= 0.20);
    }
  }
}

TEST_CASE("surrogate probabilities") {
  ScenarioConfig cfg = skewed_config(7);
  const GroundTruth gt = generate_ground_truth(cfg);

  SUBCASE("lambda zero reproduces the truth exactly") {
    const ProbabilityMap probs = surrogate_probabilities(gt.labels[0], 0, 5, 0.0, 11);
    const PseudoLabelMap pseudo = pseudo_label(probs);
    CHECK(pseudo.labels == gt.labels[0]);
    const ScoreMatrix entropy = score_entropy(probs);
    for (double s : entropy.scores.flat()) CHECK(s == 0.0);
  }
  SUBCASE("rows sum to one and draws are deterministic") {
    const ProbabilityMap a = surrogate_probabilities(gt.labels[0], 0, 5, 0.3, 12);
    const ProbabilityMap b = surrogate_probabilities(gt.labels[0], 0, 5, 0.3, 12);
    CHECK(a.probs == b.probs);
    CHECK_NOTHROW(a.validate());
  }
  SUBCASE("full noise is less informative than half noise") {
    double entropy_half = 0.0;
    double entropy_full = 0.0;
    const ProbabilityMap half = surrogate_probabilities(gt.labels[0], 0, 5, 0.5, 13);
    const ProbabilityMap full = surrogate_probabilities(gt.labels[0], 0, 5, 1.0, 13);
    const ScoreMatrix half_scores = score_entropy(half);
    const ScoreMatrix full_scores = score_entropy(full);
    for (double s : half_scores.scores.flat()) entropy_half += s;
    for (double s : full_scores.scores.flat()) entropy_full += s;
    CHECK(entropy_full > entropy_half);
  }
  SUBCASE("lambda outside [0,1] is rejected") {
    CHECK_THROWS_AS(surrogate_probabilities(gt.labels[0], 0, 5, -0.1, 14), ConfigError);
    CHECK_THROWS_AS(surrogate_probabilities(gt.labels[0], 0, 5, 1.1, 14), ConfigError);
  }
}

TEST_CASE("pseudo-label accuracy improves as the noise drops") {
  std::vector<double> mean_accuracy(3, 0.0);
  const std::vector<double> lambdas{0.9, 0.6, 0.3};
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    ScenarioConfig cfg = skewed_config(static_cast<std::uint64_t>(seed));
    cfg.shape = {4, 16, 16, 5};
    const GroundTruth gt = generate_ground_truth(cfg);
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      mean_accuracy[i] +=
          pseudo_accuracy(gt, cfg, lambdas[i], static_cast<std::uint64_t>(seed) * 100) / seeds;
    }
  }
  CHECK(mean_accuracy[0] <= mean_accuracy[1]);
  CHECK(mean_accuracy[1] <= mean_accuracy[2]);
}

TEST_CASE("run_loop basics") {
  const ScenarioConfig cfg = skewed_config(21);
  const BudgetSchedule sched = skewed_schedule();

  SUBCASE("records appear in order with budgets on the ramp") {
    const LoopResult result = run_loop(cfg, sched, Strategy::kDynamic, {});
    REQUIRE(result.report.iterations.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      const IterationRecord& rec = result.report.iterations[i];
      CHECK(rec.iteration == static_cast<std::int32_t>(i + 1));
      const auto expected = static_cast<std::int64_t>(std::floor(
          static_cast<double>(cfg.shape.total_pixels()) * 0.05 * (i + 1) / 5));
      CHECK(rec.cumulative_selected == expected);
    }
    CHECK(result.report.total_selected == result.store.size());
  }

  SUBCASE("region strategy spreads the budget evenly") {
    const LoopResult result = run_loop(cfg, sched, Strategy::kRegion, {});
    for (const IterationRecord& rec : result.report.iterations) {
      CHECK(rec.budget_used > 0);
    }
    const std::vector<double> fractions =
        per_image_selected_fractions(result.store, cfg.shape);
    for (double f : fractions) CHECK(f == fractions[0]);
  }

  SUBCASE("identical inputs give identical outputs") {
    const LoopResult a = run_loop(cfg, sched, Strategy::kCbDynamic, {});
    const LoopResult b = run_loop(cfg, sched, Strategy::kCbDynamic, {});
    CHECK(a.store == b.store);
    REQUIRE(a.report.iterations.size() == b.report.iterations.size());
    for (std::size_t i = 0; i < a.report.iterations.size(); ++i) {
      CHECK(a.report.iterations[i].cumulative_class_counts ==
            b.report.iterations[i].cumulative_class_counts);
      CHECK(a.report.iterations[i].weights == b.report.iterations[i].weights);
    }
  }

  SUBCASE("unit-weight class balancing collapses to the plain strategy") {
    LoopOptions options;
    options.unit_weights = true;
    const LoopResult pinned = run_loop(cfg, sched, Strategy::kCbDynamic, {}, options);
    const LoopResult plain = run_loop(cfg, sched, Strategy::kDynamic, {});
    CHECK(pinned.store == plain.store);
  }

  SUBCASE("noise schedule must match the iteration count") {
    ScenarioConfig short_cfg = cfg;
    short_cfg.noise_schedule = {0.5, 0.25};
    CHECK_THROWS_WITH_AS(run_loop(short_cfg, sched, Strategy::kDynamic, {}),
                         doctest::Contains("noise_schedule"), ConfigError);
  }

  SUBCASE("image-wise strategy labels whole images") {
    ScenarioConfig img_cfg = cfg;
    img_cfg.shape = {10, 16, 16, 5};
    BudgetSchedule img_sched = sched;
    img_sched.budget_fraction = 0.5;
    const LoopResult result = run_loop(img_cfg, img_sched, Strategy::kImageWise, {});
    std::int64_t full = 0;
    for (std::int32_t i = 0; i < 10; ++i) {
      const std::int64_t count = result.store.count_in_image(i);
      CHECK((count == 0 || count == 16 * 16));
      full += count == 16 * 16 ? 1 : 0;
    }
    CHECK(full == 5);
  }
}

TEST_CASE("schedule adherence for pixel strategies") {
  const ScenarioConfig cfg = skewed_config(31);
  const BudgetSchedule sched = skewed_schedule();
  for (Strategy strategy : {Strategy::kDynamic, Strategy::kCbDynamic}) {
    const LoopResult result = run_loop(cfg, sched, strategy, {});
    for (const IterationRecord& rec : result.report.iterations) {
      const auto expected = static_cast<std::int64_t>(
          std::floor(static_cast<double>(cfg.shape.total_pixels()) * 0.05 *
                     rec.iteration / 5));
      CHECK(rec.cumulative_selected == expected);
    }
  }
}

TEST_CASE("class balancing lowers imbalance and the max/min ratio on skewed scenarios") {
  auto max_min_ratio = [](const std::vector<std::int64_t>& counts) {
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    return *lo > 0 ? static_cast<double>(*hi) / static_cast<double>(*lo)
                   : std::numeric_limits<double>::infinity();
  };
  int imbalance_wins = 0;
  int ratio_wins = 0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    const ScenarioConfig cfg = skewed_config(1000 + static_cast<std::uint64_t>(seed));
    const BudgetSchedule sched = skewed_schedule();
    const LoopResult da = run_loop(cfg, sched, Strategy::kDynamic, {});
    const LoopResult cbda = run_loop(cfg, sched, Strategy::kCbDynamic, {});
    if (cbda.report.final_imbalance < da.report.final_imbalance) ++imbalance_wins;
    if (max_min_ratio(cbda.report.final_class_counts) <
        max_min_ratio(da.report.final_class_counts)) {
      ++ratio_wins;
    }
  }
  CHECK(imbalance_wins >= 9);
  CHECK(ratio_wins >= 9);
}

TEST_CASE("cumulative class counts never decrease across iterations") {
  const ScenarioConfig cfg = skewed_config(77);
  const BudgetSchedule sched = skewed_schedule();
  for (Strategy strategy : {Strategy::kRegion, Strategy::kDynamic, Strategy::kCbDynamic}) {
    const LoopResult result = run_loop(cfg, sched, strategy, {});
    std::vector<std::int64_t> previous(5, 0);
    for (const IterationRecord& rec : result.report.iterations) {
      for (std::size_t c = 0; c < 5; ++c) {
        CHECK(rec.cumulative_class_counts[c] >= previous[c]);
      }
      previous = rec.cumulative_class_counts;
    }
  }
}

TEST_CASE("dynamic acquisition spreads wider than the equal split") {
  auto variance = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return var / static_cast<double>(xs.size());
  };

  int wider = 0;
  const int seeds = 50;
  for (int seed = 0; seed < seeds; ++seed) {
    ScenarioConfig cfg = skewed_config(2000 + static_cast<std::uint64_t>(seed));
    cfg.shape = {10, 16, 16, 5};
    const BudgetSchedule sched = skewed_schedule();
    const LoopResult da = run_loop(cfg, sched, Strategy::kDynamic, {});
    const LoopResult ra = run_loop(cfg, sched, Strategy::kRegion, {});
    const double var_da = variance(per_image_selected_fractions(da.store, cfg.shape));
    const double var_ra = variance(per_image_selected_fractions(ra.store, cfg.shape));
    if (var_da >= var_ra) ++wider;
  }
  CHECK(wider >= 48);
}

#ifdef _OPENMP
TEST_CASE("run_loop output does not depend on the worker count") {
  const ScenarioConfig cfg = skewed_config(41);
  const BudgetSchedule sched = skewed_schedule();
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const LoopResult serial = run_loop(cfg, sched, Strategy::kCbDynamic, {});
  omp_set_num_threads(saved > 1 ? saved : 2);
  const LoopResult parallel = run_loop(cfg, sched, Strategy::kCbDynamic, {});
  omp_set_num_threads(saved);
  CHECK(serial.store == parallel.store);
  CHECK(serial.report.final_imbalance == parallel.report.final_imbalance);
}
#endif

TEST_CASE("strategy names round-trip") {
  for (Strategy s : {Strategy::kImageWise, Strategy::kRegion, Strategy::kDynamic,
                     Strategy::kCbRegion, Strategy::kCbDynamic}) {
    CHECK(strategy_from_name(strategy_name(s)) == s);
  }
  CHECK_FALSE(strategy_from_name("bogus").has_value());
}
