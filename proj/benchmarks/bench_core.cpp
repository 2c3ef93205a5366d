#include "drnwm/ac_dit.hpp"
#include "drnwm/geometry.hpp"
#include "drnwm/mask_builder.hpp"
#include "drnwm/synthetic_world.hpp"

#include <benchmark/benchmark.h>

using namespace drnwm;

namespace {

world::LabeledCorrespondences pairs(double outlier_rate) {
  world::Bounds near;
  near.min = {1.5, -4.0, -1.0};
  near.max = {6.0, 4.0, 3.0};
  const auto scene = world::make_random_scene(17, 400, near);
  world::CorrespondenceOptions opt;
  opt.outlier_rate = outlier_rate;
  opt.max_pairs = 50;
  opt.seed = 4;
  return world::sample_correspondences(scene, {}, {0, 0, 0}, {0.0, 3.5, -0.45}, opt);
}

void BM_EightPoint(benchmark::State& state) {
  const auto lc = pairs(0.0);
  for (auto _ : state) benchmark::DoNotOptimize(geometry::estimate_fundamental_8pt(lc.corrs));
}
BENCHMARK(BM_EightPoint);

void BM_Ransac(benchmark::State& state) {
  const auto lc = pairs(0.3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        geometry::ransac_fundamental(lc.corrs, 3.0, static_cast<int>(state.range(0)), 99));
  }
}
BENCHMARK(BM_Ransac)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_TripletMasks(benchmark::State& state) {
  const world::CameraIntrinsics intr;
  const world::Pose past{0, 0, 0}, goal{0.8, 0.3, 0.1}, fut{1.6, -0.2, 0.25};
  const auto scene = world::make_random_scene(77, 1500);
  const world::CorrespondenceOptions opt;
  const auto pg = world::sample_correspondences(scene, intr, past, goal, opt);
  const auto pf = world::sample_correspondences(scene, intr, past, fut, opt);
  const auto fg = world::sample_correspondences(scene, intr, fut, goal, opt);
  const masks::MaskParams params;
  const auto geo = masks::estimate_triplet_geometry(pg.corrs, pf.corrs, fg.corrs, params, 5);
  const masks::TokenGrid grid;
  for (auto _ : state) benchmark::DoNotOptimize(masks::masks_for_triplet(geo, grid, params.tau_rel));
}
BENCHMARK(BM_TripletMasks)->Unit(benchmark::kMicrosecond);

void BM_MaskSmoothing(benchmark::State& state) {
  const masks::TokenGrid grid;
  std::vector<masks::AttentionMask> seq;
  for (int k = 0; k < 8; ++k) {
    masks::AttentionMask m(grid.tokens());
    for (int r = k; r < grid.tokens(); r += 3) m.constrain(r, (r * 7 + k) % grid.tokens());
    seq.push_back(m);
  }
  for (auto _ : state) benchmark::DoNotOptimize(masks::smooth_mask_sequence(seq, 0.6, 0.5));
}
BENCHMARK(BM_MaskSmoothing)->Unit(benchmark::kMicrosecond);

void BM_BlockForward(benchmark::State& state) {
  const acdit::AcDitConfig cfg;
  auto model = acdit::AcDitModel::initialize(cfg, 1);
  model.gamma_cond = model.gamma_past = model.gamma_fut = model.gamma_tau = 0.5;
  const auto in = acdit::random_chunk(cfg, 196, static_cast<int>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(acdit::block_forward(model, in));
}
BENCHMARK(BM_BlockForward)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_Render(benchmark::State& state) {
  const auto scene = world::make_random_scene(11, static_cast<std::size_t>(state.range(0)));
  const world::CameraIntrinsics intr;
  for (auto _ : state) benchmark::DoNotOptimize(world::render(scene, intr, {0.5, 0.2, 0.1}));
}
BENCHMARK(BM_Render)->Arg(800)->Arg(3000)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
