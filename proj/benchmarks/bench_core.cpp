#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "stereoloc/dsp.hpp"
#include "stereoloc/losses.hpp"
#include "stereoloc/model.hpp"
#include "stereoloc/postprocess.hpp"
#include "stereoloc/tensor.hpp"
#include "stereoloc/tracker.hpp"

using namespace stereoloc;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const ad::Tensor x({1, c, 64, 64}, noise(c * 64 * 64, 1));
  const ad::Tensor k({c, c, 3, 3}, noise(c * c * 9, 2));
  const ad::Tensor b({c}, noise(c, 3));
  for (auto _ : state) benchmark::DoNotOptimize(ad::conv2d(x, k, b, 1, 1));
}
BENCHMARK(BM_Conv2d)->Arg(4)->Arg(16);

void BM_MelSpectrogram(benchmark::State& state) {
  const auto clip = noise(dsp::kClipSamples, 4);
  for (auto _ : state) benchmark::DoNotOptimize(dsp::mel_spectrogram(clip));
}
BENCHMARK(BM_MelSpectrogram);

void BM_NetworkInput(benchmark::State& state) {
  const StereoWaveform w{noise(dsp::kClipSamples, 5), noise(dsp::kClipSamples, 6), dsp::kSampleRate};
  for (auto _ : state) benchmark::DoNotOptimize(dsp::to_network_input(w, {}));
}
BENCHMARK(BM_NetworkInput);

void BM_ForwardEighthWidth(benchmark::State& state) {
  model::ModelConfig cfg;
  cfg.width_multiplier = 0.125;
  auto params = model::init_params(cfg, 7);
  dsp::NetworkInput in;
  in.spectrogram = noise(2 * dsp::kInputSize * dsp::kInputSize, 8);
  in.meta = {0.5, 0.5, 0.5};
  const auto batch = model::make_batch(in);
  for (auto _ : state) benchmark::DoNotOptimize(model::forward(params, batch, ad::BatchNormMode::kEval));
}
BENCHMARK(BM_ForwardEighthWidth)->Unit(benchmark::kMillisecond);

void BM_DetectionLoss(benchmark::State& state) {
  const ad::Tensor grid({kGridSize, kGridSize, kGridChannels}, noise(kGridSize * kGridSize * kGridChannels, 9), true);
  const std::vector<GroundTruthBox> targets{{0.4, 0.5, 0.2, 0.1, kCarClass}};
  for (auto _ : state) {
    auto l = losses::detection_loss(grid, targets);
    l.backward();
    benchmark::DoNotOptimize(l);
  }
}
BENCHMARK(BM_DetectionLoss);

std::vector<Detection> random_dets(std::size_t n) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0), e(0.02, 0.4);
  std::vector<Detection> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].box = {u(rng), u(rng), e(rng), e(rng)};
    out[i].confidence = u(rng);
    out[i].class_id = kCarClass;
    out[i].index = static_cast<int>(i);
  }
  return out;
}

void BM_Nms(benchmark::State& state) {
  const auto dets = random_dets(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(postprocess::nms(dets));
}
BENCHMARK(BM_Nms)->Arg(20)->Arg(845);

void BM_Track(benchmark::State& state) {
  std::vector<std::vector<Detection>> frames(100);
  for (int t = 0; t < 100; ++t) {
    Detection d;
    d.box = {0.2 + 0.005 * t, 0.5, 0.2, 0.1};
    d.confidence = 0.9;
    d.class_id = kCarClass;
    d.frame_index = t;
    frames[static_cast<std::size_t>(t)].push_back(d);
  }
  for (auto _ : state) benchmark::DoNotOptimize(tracker::track(frames));
}
BENCHMARK(BM_Track);

}  // namespace
BENCHMARK_MAIN();
