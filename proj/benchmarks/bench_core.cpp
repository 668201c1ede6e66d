#include <random>

#include <benchmark/benchmark.h>

#include "gchoreo/audio.hpp"
#include "gchoreo/autoencoder.hpp"
#include "gchoreo/dataset.hpp"
#include "gchoreo/generation.hpp"
#include "gchoreo/metrics.hpp"
#include "gchoreo/position.hpp"
#include "gchoreo/rvq.hpp"

using namespace gchoreo;

namespace {

Matrix gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

ResidualQuantizerStack random_stack(int levels, int K, int D, std::mt19937_64& rng) {
  auto s = ResidualQuantizerStack::uninitialized(levels);
  for (int l = 0; l < levels; ++l) s.books.push_back(Codebook::from_entries(gaussian(K, D, rng)));
  return s;
}

void BM_QuantizeResidual(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto stack = random_stack(4, static_cast<int>(state.range(0)), 32, rng);
  const Matrix z = gaussian(256, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(quantize_residual(stack, z));
  state.SetItemsProcessed(state.iterations() * z.rows());
}
BENCHMARK(BM_QuantizeResidual)->Arg(64)->Arg(512);

void BM_HilbertRoundTrip(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const std::uint32_t n = 1u << (2 * p);
  std::uint32_t id = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hilbert_index(p, hilbert_inverse(p, id)));
    id = (id + 7919) % n;
  }
}
BENCHMARK(BM_HilbertRoundTrip)->Arg(6)->Arg(15);

void BM_AudioFrames(benchmark::State& state) {
  AudioClip clip;
  clip.sample_rate = 22050;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  clip.samples.resize(22050 * 4);
  for (auto& s : clip.samples) s = u(rng);
  AudioAnalysisConfig cfg;
  cfg.window = 4096;
  cfg.hop = 2940;
  for (auto _ : state) benchmark::DoNotOptimize(extract_audio_frames(clip, cfg));
}
BENCHMARK(BM_AudioFrames)->Unit(benchmark::kMillisecond);

void BM_Fid(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const int dim = static_cast<int>(state.range(0));
  const Matrix a = gaussian(1000, dim, rng), b = gaussian(1000, dim, rng);
  for (auto _ : state) benchmark::DoNotOptimize(fid(a, b));
}
BENCHMARK(BM_Fid)->Arg(27)->Arg(72)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  SyntheticDatasetSpec spec;
  spec.clip_count = 4;
  spec.duration_seconds = 3;
  const auto clips = synthesize_dataset(spec, SkeletonSpec::default24());
  AutoencoderConfig cfg;
  cfg.input_dim = static_cast<int>(Pose::flat_dim(24));
  std::mt19937_64 rng(4);
  auto ae = TemporalAutoencoder::random(cfg, rng);
  std::vector<Matrix> raw;
  for (const auto& c : clips) raw.push_back(c.dancers.front().to_features().topRows(64));
  ae.fit_normalization(raw);
  std::vector<Matrix> batch;
  for (const auto& r : raw) batch.push_back(ae.pad(ae.normalize(r)));
  auto stack = ResidualQuantizerStack::uninitialized(4);
  initialize_codebooks(ae, stack, 64, batch, 5, rng);
  TrainerState ts{TrainerConfig{}};
  for (auto _ : state) benchmark::DoNotOptimize(train_step(ae, stack, batch, 1e-3, ts));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_NGramDistribution(benchmark::State& state) {
  Vocabulary v;
  v.motion_size = 256;
  v.music_size = 64;
  v.pos_size = 4096;
  NGramPredictor p(v, 6, 0.001);
  std::mt19937_64 rng(5);
  std::vector<Word> stream;
  for (int i = 0; i < 20000; ++i) stream.push_back(Word::motion(static_cast<std::uint32_t>(rng() % 256)));
  p.add_stream(stream);
  const std::vector<Word> ctx(stream.begin() + 100, stream.begin() + 105);
  for (auto _ : state) benchmark::DoNotOptimize(p.distribution(ctx));
}
BENCHMARK(BM_NGramDistribution);

}  // namespace

BENCHMARK_MAIN();
