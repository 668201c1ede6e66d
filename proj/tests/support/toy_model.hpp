#pragma once

// Small random tokenizer for tests that need a decoder but not a trained one.

#include <random>

#include "gchoreo/autoencoder.hpp"
#include "gchoreo/generation.hpp"
#include "gchoreo/position.hpp"
#include "gchoreo/rvq.hpp"
#include "gchoreo/sequence.hpp"

namespace toy {

struct Tokenizer {
  gchoreo::TemporalAutoencoder ae;
  gchoreo::ResidualQuantizerStack stack;
};

inline Tokenizer tokenizer(int levels, int codebook_size, int joints, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  gchoreo::AutoencoderConfig cfg;
  cfg.input_dim = static_cast<int>(gchoreo::Pose::flat_dim(joints));
  cfg.hidden = 16;
  cfg.latent_dim = 8;
  cfg.downsample = 4;
  Tokenizer t{gchoreo::TemporalAutoencoder::random(cfg, rng), gchoreo::ResidualQuantizerStack::uninitialized(levels)};
  t.ae.feature_mean() = gchoreo::RowVector::Zero(cfg.input_dim);
  // Small scale keeps the decoded root velocities at a few cm per frame.
  t.ae.feature_scale() = gchoreo::RowVector::Constant(cfg.input_dim, 0.05);
  std::normal_distribution<double> n;
  for (int l = 0; l < levels; ++l) {
    gchoreo::Matrix e(codebook_size, cfg.latent_dim);
    for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = n(rng);
    t.stack.books.push_back(gchoreo::Codebook::from_entries(e));
  }
  return t;
}

inline gchoreo::Vocabulary vocabulary(const Tokenizer& t, std::uint32_t music, const gchoreo::PositionGrid& grid) {
  gchoreo::Vocabulary v;
  v.motion_size = static_cast<std::uint32_t>(t.stack.levels * t.stack.codebook_size());
  v.music_size = music;
  v.pos_size = grid.token_count();
  v.max_dancers = 8;
  return v;
}

}  // namespace toy
