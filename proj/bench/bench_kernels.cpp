// Timing comparison between the parallel kernels and the serial reference
// implementations. Build and run manually:
//   cmake --build build --target balsel_bench && ./build/bench/balsel_bench

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "balsel/heuristics.hpp"
#include "balsel/reference.hpp"
#include "balsel/rng.hpp"
#include "balsel/selection.hpp"

using namespace balsel;

namespace {

template <typename F>
double time_best_of(int repetitions, F&& f) {
  double best = 1e300;
  for (int i = 0; i < repetitions; ++i) {
    const auto start = std::chrono::steady_clock::now();
    f();
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    best = best < elapsed ? best : elapsed;
  }
  return best;
}

void print_row(const char* kernel, const char* size, double serial, double parallel) {
  std::printf("%-18s %-14s %10.3fms %12.3fms %8.2fx\n", kernel, size, serial * 1e3,
              parallel * 1e3, serial / parallel);
}

ProbabilityMap random_probs(std::int32_t h, std::int32_t w, std::int32_t C, std::uint64_t seed) {
  ProbabilityMap map;
  map.height = h;
  map.width = w;
  map.num_classes = C;
  map.probs.resize(static_cast<std::size_t>(h) * w * C);
  Rng rng(seed);
  for (std::int64_t px = 0; px < static_cast<std::int64_t>(h) * w; ++px) {
    double sum = 0.0;
    for (std::int32_t c = 0; c < C; ++c) {
      const double e = rng.next_exponential();
      map.probs[static_cast<std::size_t>(px) * C + c] = e;
      sum += e;
    }
    for (std::int32_t c = 0; c < C; ++c) map.probs[static_cast<std::size_t>(px) * C + c] /= sum;
  }
  return map;
}

ScoreStack random_score_stack(const DatasetShape& shape, std::uint64_t seed) {
  ScoreStack stack;
  for (std::int64_t img = 0; img < shape.num_images; ++img) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(img)));
    ScoreMatrix m;
    m.image_id = static_cast<std::int32_t>(img);
    m.scores = Grid<double>(shape.height, shape.width);
    for (double& s : m.scores.flat()) s = rng.next_double();
    PseudoLabelMap p;
    p.image_id = static_cast<std::int32_t>(img);
    p.labels = Grid<ClassId>(shape.height, shape.width);
    for (ClassId& c : p.labels.flat()) {
      c = static_cast<ClassId>(rng.next_below(static_cast<std::uint64_t>(shape.num_classes)));
    }
    stack.scores.push_back(std::move(m));
    stack.pseudo.push_back(std::move(p));
  }
  return stack;
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (OpenMP disabled)\n");
#endif
  std::printf("%-18s %-14s %12s %14s %9s\n", "kernel", "size", "serial", "parallel", "speedup");

  // entropy scoring over one large probability map
  {
    const ProbabilityMap probs = random_probs(2048, 1024, 8, 1);
    ScoreMatrix sink;
    const double serial = time_best_of(3, [&] { sink = reference::entropy_scores(probs); });
    const double parallel = time_best_of(3, [&] { sink = score_entropy(probs); });
    if (sink.scores != reference::entropy_scores(probs).scores) {
      std::printf("entropy mismatch!\n");
      return 1;
    }
    print_row("entropy", "2048x1024x8", serial, parallel);
  }

  // weighted scoring
  {
    const ProbabilityMap probs = random_probs(2048, 1024, 8, 2);
    const ScoreMatrix scores = score_entropy(probs);
    const PseudoLabelMap pseudo = pseudo_label(probs);
    const std::vector<double> weights{1.0, 0.5, 1e-6, 0.25, 1.0, 0.75, 0.125, 1.0};
    ScoreMatrix sink;
    const double serial =
        time_best_of(3, [&] { sink = reference::weighted_scores(scores, pseudo, weights); });
    const double parallel = time_best_of(3, [&] { sink = apply_weights(scores, pseudo, weights); });
    print_row("apply-weights", "2048x1024", serial, parallel);
  }

  // global top-k: bounded-buffer engine vs full sort
  for (const std::int64_t pixels : {std::int64_t{1000000}, std::int64_t{10000000}}) {
    const std::int32_t side = pixels == 1000000 ? 500 : 1000;
    const std::int64_t images = pixels / (static_cast<std::int64_t>(side) * side);
    const DatasetShape shape{images, side, side, 4};
    const ScoreStack stack = random_score_stack(shape, 3);
    GroundTruth gt;
    for (std::int64_t img = 0; img < images; ++img) {
      gt.labels.emplace_back(side, side, static_cast<ClassId>(0));
    }
    const std::int64_t k = pixels / 100;

    std::vector<PixelRef> oracle;
    const double serial = time_best_of(2, [&] {
      const ActiveLabelStore store(shape);
      oracle = reference::top_k_global(stack, k, store);
    });
    SelectionResult engine;
    const double parallel = time_best_of(2, [&] {
      ActiveLabelStore store(shape);
      engine = select_dynamic(stack, k, store, gt, 1);
    });
    if (engine.picked != oracle) {
      std::printf("top-k mismatch!\n");
      return 1;
    }
    char label[32];
    std::snprintf(label, sizeof(label), "%lldx%dx%d k=1%%", static_cast<long long>(images), side,
                  side);
    print_row("top-k-global", label, serial, parallel);
  }
  return 0;
}
