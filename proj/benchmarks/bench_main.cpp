// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "protomm/augment.hpp"
#include "protomm/encoder.hpp"
#include "protomm/interpret.hpp"
#include "protomm/logging.hpp"
#include "protomm/losses.hpp"
#include "protomm/prototypes.hpp"

using namespace protomm;

namespace {

InputBatch<float> random_input(int batch, int length, int channels, Rng& rng) {
  std::normal_distribution<float> n;
  InputBatch<float> in;
  in.batch = batch;
  in.length = length;
  in.data.resize(static_cast<Eigen::Index>(batch) * length, channels);
  for (Eigen::Index i = 0; i < in.data.size(); ++i) in.data.data()[i] = n(rng);
  return in;
}

Mat<float> random_unit(int rows, int cols, Rng& rng) {
  std::normal_distribution<float> n;
  Mat<float> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m.rowwise().normalized();
}

// args: batch, window length
void BM_EncoderForward(benchmark::State& state) {
  set_log_level("error");
  EncoderConfig cfg;
  auto params = init_encoder<float>(cfg, 1);
  Rng rng = derive_rng(1, {});
  const auto in = random_input(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 1, rng);
  for (auto _ : state) benchmark::DoNotOptimize(encode_batch(params, in));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncoderForward)->Args({8, 400})->Args({8, 1500})->Unit(benchmark::kMillisecond);

void BM_EncoderTrainStep(benchmark::State& state) {
  EncoderConfig cfg;
  auto params = init_encoder<float>(cfg, 2);
  Rng rng = derive_rng(2, {});
  const auto in = random_input(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 1, rng);
  auto grads = zero_grads(params);
  for (auto _ : state) {
    EncoderCache<float> cache;
    const Mat<float> z = encoder_forward(params, in, Mode::train, &cache, false);
    benchmark::DoNotOptimize(encoder_backward<float>(params, cache, Mat<float>::Ones(z.rows(), z.cols()), grads));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncoderTrainStep)->Args({8, 400})->Unit(benchmark::kMillisecond);

// args: batch, prototypes
void BM_Sinkhorn(benchmark::State& state) {
  Rng rng = derive_rng(3, {});
  const int b = static_cast<int>(state.range(0)), p = static_cast<int>(state.range(1));
  const Mat<float> scores = random_unit(b, 512, rng) * random_unit(p, 512, rng).transpose();
  AssignmentConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn_targets(scores, cfg));
}
BENCHMARK(BM_Sinkhorn)->Args({256, 512})->Args({64, 128});

void BM_MppLoss(benchmark::State& state) {
  Rng rng = derive_rng(4, {});
  const int b = 256, p = 512;
  ViewBundle<float> bundle;
  bundle.modalities = 2;
  bundle.views = static_cast<int>(state.range(0));
  for (int i = 0; i < bundle.modalities * bundle.views; ++i) {
    const Mat<float> s = random_unit(b, 64, rng) * random_unit(p, 64, rng).transpose();
    bundle.probs.push_back(soft_probs(s, 0.1));
    bundle.targets.push_back(soft_probs(s, 0.05));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(mpp_loss(bundle, 0.5));
    benchmark::DoNotOptimize(mpp_loss_grad(bundle, 0.5));
  }
}
BENCHMARK(BM_MppLoss)->Arg(2)->Arg(4);

void BM_NtXent(benchmark::State& state) {
  Rng rng = derive_rng(5, {});
  const Mat<float> a = random_unit(256, 512, rng), b = random_unit(256, 512, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nt_xent(a, b, 0.1));
}
BENCHMARK(BM_NtXent);

void BM_Augment(benchmark::State& state) {
  Rng rng = derive_rng(6, {});
  std::normal_distribution<float> n;
  TimeSeriesWindow w;
  w.modality = Modality::ACCEL;
  w.sample_rate_hz = 50;
  w.samples.resize(1500, 3);
  for (Eigen::Index i = 0; i < w.samples.size(); ++i) w.samples.data()[i] = n(rng);
  const auto specs = default_augmentations();
  for (auto _ : state) {
    for (const auto& s : specs) {
      if (s.applies_to(Modality::ACCEL)) benchmark::DoNotOptimize(apply(s, w, rng));
    }
  }
}
BENCHMARK(BM_Augment);

void BM_ClusterPrototypes(benchmark::State& state) {
  Rng rng = derive_rng(7, {});
  PrototypeBank<float> bank{random_unit(512, 512, rng).transpose()};
  for (auto _ : state) benchmark::DoNotOptimize(cluster_prototypes(bank, 15, 1));
}
BENCHMARK(BM_ClusterPrototypes)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
