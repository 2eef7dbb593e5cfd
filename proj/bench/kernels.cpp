// Serial vs parallel timings of the hot kernels. Arg 0 = serial, 1 = parallel.
#include <benchmark/benchmark.h>

#include "epiline/barcode.hpp"
#include "epiline/estimator.hpp"
#include "epiline/matching.hpp"
#include "epiline/simulator.hpp"

using namespace epiline;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

const Simulation& scene() {
  static const Simulation sim = [] {
    ScenarioConfig c;
    c.num_frames = 800;
    c.seed = 1;
    return simulate(c);
  }();
  return sim;
}

std::vector<MotionBarcode> barcodes(int count, std::uint64_t seed) {
  const auto& video = scene().videos[0];
  const ImageRect rect{video.width(), video.height()};
  Rng rng(seed);
  std::vector<std::vector<PixelCoord>> rasters;
  for (const auto& l : sample_border_lines(rect, count, rng)) rasters.push_back(raster_line_pixels(l, rect));
  // Constant barcodes have no correlation; keep the informative ones as the pipeline does.
  std::vector<MotionBarcode> out;
  for (auto& b : compute_barcodes(video, rasters))
    if (is_informative(b, 0.05, 0.95)) out.push_back(std::move(b));
  return out;
}

void BM_RenderVideo(benchmark::State& state) {
  ScenarioConfig c;
  c.num_frames = 100;
  for (auto _ : state) benchmark::DoNotOptimize(simulate(c, exec_of(state)));
}

void BM_HeatMap(benchmark::State& state) {
  const auto& video = scene().videos[0];
  for (auto _ : state) benchmark::DoNotOptimize(compute_heat_map(video, exec_of(state)));
}

void BM_Barcodes(benchmark::State& state) {
  const auto& video = scene().videos[0];
  const ImageRect rect{video.width(), video.height()};
  Rng rng(2);
  std::vector<std::vector<PixelCoord>> rasters;
  for (const auto& l : sample_border_lines(rect, 5000, rng)) rasters.push_back(raster_line_pixels(l, rect));
  for (auto _ : state) benchmark::DoNotOptimize(compute_barcodes(video, rasters, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rasters.size()));
}

void BM_CorrelationMatrix(benchmark::State& state) {
  const auto a = barcodes(2000, 3), b = barcodes(2000, 4);
  for (auto _ : state) benchmark::DoNotOptimize(correlation_matrix(a, b, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(a.size() * b.size()));
}

void BM_MutualTopkStreaming(benchmark::State& state) {
  const auto a = barcodes(4000, 5), b = barcodes(4000, 6);
  for (auto _ : state) benchmark::DoNotOptimize(mutual_topk_streaming(a, b, 3, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(a.size() * b.size()));
}

void BM_Ransac(benchmark::State& state) {
  const auto& sim = scene();
  const ImageRect rect = sim.cameras[0].image;
  const auto f = sim.truths[0].f;
  const auto [e, e_prime] = epipoles_of(f);
  Rng rng(7);
  std::vector<CandidatePair> cands;
  const auto noise_a = sample_border_lines(rect, 1000, rng), noise_b = sample_border_lines(rect, 1000, rng);
  for (int i = 0; i < 1000; ++i) {
    CandidatePair c{noise_a[i], noise_b[i], uniform(rng, 0.2, 1.0)};
    if (i % 2 == 0) {
      // Half the candidates are the true epipolar line pair through a random point of A.
      const HomPoint2 x = HomPoint2::from_pixel(uniform(rng, 0, rect.width), uniform(rng, 0, rect.height));
      const HomLine2 la = line_through(x, e), lb{f.f * x.h};
      const auto sa = clip_line_to_rect(la, rect), sb = clip_line_to_rect(lb, rect);
      if (sa && sb) c = {{sa->p, sa->q, la.normalized(), i}, {sb->p, sb->q, lb.normalized(), i}, 1.0};
    }
    cands.push_back(c);
  }
  RansacConfig cfg;
  cfg.max_iterations = 2000;
  for (auto _ : state) benchmark::DoNotOptimize(estimate_fundamental(cands, rect, rect, cfg, exec_of(state)));
}

}  // namespace

BENCHMARK(BM_RenderVideo)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HeatMap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Barcodes)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CorrelationMatrix)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MutualTopkStreaming)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Ransac)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
