#pragma once

// Temporal autoencoder around the residual quantizer, with hand-derived
// backward passes.
//
// Encoder:  conv1d(k=3, D_in->H) -> tanh -> strided conv(k=d, stride=d, H->D)
//           -> tanh -> dense(D->D) -> tanh -> dense(D->D)
// Decoder:  dense(D->D) -> tanh -> dense(D->H) -> tanh -> nearest upsample x d
//           -> conv1d(k=3, H->D_in)
// Convolutions use zero padding. All tensors are (time x channels).

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "gchoreo/linalg.hpp"
#include "gchoreo/motion.hpp"
#include "gchoreo/rvq.hpp"

namespace gchoreo {

struct AutoencoderConfig {
  int input_dim = 0;   // D_in, flat pose dimension
  int hidden = 64;     // H
  int latent_dim = 32; // D
  int downsample = 4;  // d
  double fps = 30.0;   // frame rate of the motion the model was trained on
};

struct LossWeights {
  double reconstruction = 0.8;
  double commitment = 0.1;
  double orthogonal = 0.1;
};

struct LossBreakdown {
  double reconstruction = 0.0;
  double commitment = 0.0;  // includes beta
  double codebook = 0.0;    // logged only; codebooks follow the EMA update
  double orthogonal = 0.0;
  double total = 0.0;       // weighted rec + commit + orthogonal
};

struct AutoencoderParams {
  Matrix enc_conv0, enc_conv1, enc_conv2, enc_conv_b;  // D_in x H taps, 1 x H
  Matrix enc_down, enc_down_b;                         // d*H x D, 1 x D
  Matrix enc_mix1, enc_mix1_b;                         // D x D
  Matrix enc_mix2, enc_mix2_b;                         // D x D
  Matrix dec_mix1, dec_mix1_b;                         // D x D
  Matrix dec_mix2, dec_mix2_b;                         // D x H
  Matrix dec_conv0, dec_conv1, dec_conv2, dec_conv_b;  // H x D_in taps, 1 x D_in

  static AutoencoderParams zeros(const AutoencoderConfig& cfg);

  // Visits every tensor in a fixed order (the persisted order).
  void for_each(const std::function<void(std::string_view, Matrix&)>& fn);
  void for_each(const std::function<void(std::string_view, const Matrix&)>& fn) const;

  std::size_t parameter_count() const;
  bool all_finite() const;
};

class TemporalAutoencoder {
 public:
  TemporalAutoencoder() = default;
  explicit TemporalAutoencoder(const AutoencoderConfig& cfg);  // zero parameters, identity normalization

  // Scaled Gaussian initialization (std = 1/sqrt(fan_in)).
  static TemporalAutoencoder random(const AutoencoderConfig& cfg, std::mt19937_64& rng);

  const AutoencoderConfig& config() const { return cfg_; }
  AutoencoderParams& params() { return params_; }
  const AutoencoderParams& params() const { return params_; }

  // Per-feature affine normalization applied before encoding.
  RowVector& feature_mean() { return mean_; }
  RowVector& feature_scale() { return scale_; }
  const RowVector& feature_mean() const { return mean_; }
  const RowVector& feature_scale() const { return scale_; }

  // Mean/std over all frames; root channels (first four) get their scale
  // divided by `root_emphasis` so the loss weighs them more.
  void fit_normalization(std::span<const Matrix> raw_features, double root_emphasis = 5.0);

  Matrix normalize(const Matrix& raw) const;
  Matrix denormalize(const Matrix& normalized) const;

  // Edge-replicates the last frame up to a multiple of the downsample factor.
  Matrix pad(const Matrix& frames) const;
  int token_count(int frames) const;

  // normalized, padded (T*d x D_in) -> latent (T x D)
  Matrix encode(const Matrix& input) const;
  // latent (T x D) -> normalized (T*d x D_in)
  Matrix decode(const Matrix& latent) const;

  // Vector-Jacobian product of decode at `latent` with output cotangent
  // `grad_output`; returns d/d(latent).
  Matrix decode_vjp(const Matrix& latent, const Matrix& grad_output) const;

  // Rounds every stored value to float precision (the persisted precision).
  void round_to_storage_precision();

  void validate() const;

 private:
  AutoencoderConfig cfg_{};
  AutoencoderParams params_{};
  RowVector mean_;
  RowVector scale_;
};

double smooth_l1(const Matrix& prediction, const Matrix& target);

// Sum over distinct codebooks of ||E E^T - I||_F^2 with rows of E scaled to
// unit length (zero rows stay zero).
double orthogonal_penalty(const ResidualQuantizerStack& stack);

LossBreakdown rvq_losses(const Matrix& original, const Matrix& reconstructed, const QuantizeResult& result,
                         const ResidualQuantizerStack& stack, const LossWeights& weights = {});

// Quantizer choices held fixed so the loss becomes a smooth function of the
// network parameters (the surrogate the straight-through gradient follows).
struct FrozenQuantization {
  std::vector<Matrix> selected;  // q_l per level, T x D
  Matrix offset;                 // Z* - latent at the freeze point
};

struct GradientResult {
  AutoencoderParams grad;
  LossBreakdown loss;
  std::vector<QuantizeResult> quantized;  // one per batch item
  std::vector<Matrix> latents;            // encoder outputs per batch item
};

// Loss and parameter gradients averaged over a batch of normalized, padded
// feature matrices. With `frozen` set, quantization uses the given choices.
GradientResult compute_gradients(const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack,
                                 std::span<const Matrix> batch, const LossWeights& weights,
                                 const std::vector<FrozenQuantization>* frozen = nullptr);

LossBreakdown evaluate_loss(const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack,
                            std::span<const Matrix> batch, const LossWeights& weights,
                            const std::vector<FrozenQuantization>* frozen = nullptr);

std::vector<FrozenQuantization> freeze_quantization(const TemporalAutoencoder& ae,
                                                    const ResidualQuantizerStack& stack,
                                                    std::span<const Matrix> batch);

// d(total)/d(encoder output) for one item under the straight-through rule.
Matrix latent_gradient(const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack, const Matrix& input,
                       const LossWeights& weights, double batch_scale = 1.0);

struct TrainerConfig {
  double learning_rate = 2e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  LossWeights weights{};
  MaintenanceConfig maintenance{};
  int maintenance_window = 50;  // steps between dead-entry sweeps
  int kmeans_iterations = 20;
  std::uint64_t seed = 0;
};

// Optimizer moments, step counter and RNG carried between train steps.
class TrainerState {
 public:
  explicit TrainerState(const TrainerConfig& cfg);

  const TrainerConfig& config() const { return cfg_; }
  std::uint64_t step() const { return step_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  friend LossBreakdown train_step(TemporalAutoencoder&, ResidualQuantizerStack&, std::span<const Matrix>, double,
                                  TrainerState&);
  TrainerConfig cfg_;
  std::uint64_t step_ = 0;
  std::optional<AutoencoderParams> m_, v_;
  std::mt19937_64 rng_;
};

// Seeds every level by k-means on the residuals of the given batch latents.
void initialize_codebooks(const TemporalAutoencoder& ae, ResidualQuantizerStack& stack, int codebook_size,
                          std::span<const Matrix> batch, int iterations, std::mt19937_64& rng);

// One Adam step on 0.8*rec + 0.1*commit + 0.1*ortho with the
// straight-through estimator, followed by EMA codebook maintenance.
// `batch` holds normalized, padded feature matrices. Returns the losses
// measured before the update.
LossBreakdown train_step(TemporalAutoencoder& ae, ResidualQuantizerStack& stack, std::span<const Matrix> batch,
                         double learning_rate, TrainerState& state);

// Encode + quantize; L x ceil(F/d) code indices.
IndexMatrix tokenize_motion(const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack,
                            const MotionSequence& seq);

// Dequantize + decode, attach the initial position and trim to `frames`
// when given. Foot contacts are thresholded at 0.5.
MotionSequence detokenize_motion(const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack,
                                 const IndexMatrix& indices, const Vec3& initial_position,
                                 std::optional<int> frames = std::nullopt);

}  // namespace gchoreo
