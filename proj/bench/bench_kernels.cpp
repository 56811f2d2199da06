#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "gazecone/geometry.hpp"
#include "gazecone/kernels.hpp"
#include "gazecone/random.hpp"
#include "gazecone/synth.hpp"
#include "gazecone/train.hpp"

using namespace gazecone;
namespace k = gazecone::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

// Shape of the first target-view convolution at batch 32.
k::ConvDims conv_dims() {
  k::ConvDims d;
  d.batch = 32;
  d.in_channels = 3;
  d.height = d.width = 32;
  d.out_channels = 8;
  d.kernel_h = d.kernel_w = 3;
  d.pad = 1;
  return d;
}

template <k::Backend B>
void BM_Conv2dForward(benchmark::State& state) {
  const auto d = conv_dims();
  const auto x = random_vec(d.batch * d.in_channels * d.height * d.width, 1);
  const auto w = random_vec(d.out_channels * d.in_channels * 9, 2);
  const auto b = random_vec(d.out_channels, 3);
  std::vector<double> y(d.batch * d.out_channels * d.out_height() * d.out_width());
  for (auto _ : state) {
    if constexpr (B == k::Backend::serial) k::serial::conv2d_forward(d, x, w, b, y);
    else k::parallel::conv2d_forward(d, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <k::Backend B>
void BM_Conv2dBackward(benchmark::State& state) {
  const auto d = conv_dims();
  const auto x = random_vec(d.batch * d.in_channels * d.height * d.width, 1);
  const auto w = random_vec(d.out_channels * d.in_channels * 9, 2);
  const auto dy = random_vec(d.batch * d.out_channels * d.out_height() * d.out_width(), 4);
  std::vector<double> dx(x.size()), dw(w.size()), db(d.out_channels);
  for (auto _ : state) {
    if constexpr (B == k::Backend::serial) k::serial::conv2d_backward(d, x, w, dy, dx, dw, db);
    else k::parallel::conv2d_backward(d, x, w, dy, dx, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
}

template <k::Backend B>
void BM_DenseForwardBackward(benchmark::State& state) {
  const k::DenseDims d{64, 512, 128};
  const auto x = random_vec(d.batch * d.in, 1);
  const auto w = random_vec(d.in * d.out, 2);
  const auto b = random_vec(d.out, 3);
  std::vector<double> y(d.batch * d.out), dx(x.size()), dw(w.size()), db(d.out);
  for (auto _ : state) {
    if constexpr (B == k::Backend::serial) {
      k::serial::dense_forward(d, x, w, b, y);
      k::serial::dense_backward(d, x, w, y, dx, dw, db);
    } else {
      k::parallel::dense_forward(d, x, w, b, y);
      k::parallel::dense_backward(d, x, w, y, dx, dw, db);
    }
    benchmark::DoNotOptimize(dw.data());
  }
}

void BM_IntersectMap(benchmark::State& state) {
  geometry::GeometryParams p;
  p.eye = geometry::Vec2(0.1, -0.2);
  p.direction_raw = geometry::Vec3(0.2, 0.1, 1.0);
  p.family = geometry::TransformFamily::vertical_rot_trans;
  p.theta = {0.2, 0.0, 0.0, 2.0};
  const auto side = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(geometry::intersect_map(p, side));
}

template <k::Backend B>
void BM_RayCastOracle(benchmark::State& state) {
  const geometry::Cone c = geometry::make_cone(geometry::Vec2::Zero(), geometry::Vec3::UnitZ(), 0.0, -6.0);
  const geometry::PlaneFrame f{geometry::Vec3::UnitX(), geometry::Vec3::UnitY(), geometry::Vec3(0, 0, 1)};
  for (auto _ : state) benchmark::DoNotOptimize(geometry::ray_cast_oracle(c, f, 200000, 64, 1, B));
}

void BM_TrainBatch(benchmark::State& state) {
  const auto data = synth::generate(0, synth::GenConfig{}, 32);
  learning::TrainConfig tc;
  model::GazeModel m(tc.model_config());
  m.set_backend(state.range(0) ? nn::Backend::parallel : nn::Backend::serial);
  std::vector<std::size_t> idx(32);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::unique_ptr<bool[]> flip(new bool[32]());
  for (auto _ : state) {
    m.zero_grad();
    benchmark::DoNotOptimize(learning::accumulate_batch(m, data, idx, std::span<const bool>(flip.get(), 32), tc));
  }
}

}  // namespace

BENCHMARK(BM_Conv2dForward<k::Backend::serial>);
BENCHMARK(BM_Conv2dForward<k::Backend::parallel>);
BENCHMARK(BM_Conv2dBackward<k::Backend::serial>);
BENCHMARK(BM_Conv2dBackward<k::Backend::parallel>);
BENCHMARK(BM_DenseForwardBackward<k::Backend::serial>);
BENCHMARK(BM_DenseForwardBackward<k::Backend::parallel>);
BENCHMARK(BM_IntersectMap)->Arg(13)->Arg(64);
BENCHMARK(BM_RayCastOracle<k::Backend::serial>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RayCastOracle<k::Backend::parallel>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
