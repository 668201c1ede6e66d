#pragma once

// Residual vector quantization: cascaded codebooks where level l quantizes
// the residual left by levels < l, plus k-means seeding and EMA codebook
// maintenance with dead-entry re-initialization.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gchoreo/linalg.hpp"

namespace gchoreo {

using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Codebook {
  Matrix entries;                     // K x D
  Vector ema_counts;                  // K, nonnegative
  Matrix ema_sums;                    // K x D
  std::vector<std::uint64_t> usage;   // assignments since the window opened

  int size() const { return static_cast<int>(entries.rows()); }
  int dim() const { return static_cast<int>(entries.cols()); }

  // Entries with unit EMA counts and zero usage.
  static Codebook from_entries(Matrix entries);
  void validate() const;
};

struct ResidualQuantizerStack {
  // One codebook per level, or a single codebook reused by every level when
  // `shared` is set.
  std::vector<Codebook> books;
  int levels = 4;
  bool shared = false;
  double commitment = 1.0;  // beta

  static ResidualQuantizerStack uninitialized(int levels, bool shared = false, double commitment = 1.0);

  const Codebook& level(int l) const { return books[shared ? 0 : static_cast<std::size_t>(l)]; }
  Codebook& level(int l) { return books[shared ? 0 : static_cast<std::size_t>(l)]; }

  bool initialized() const;
  int codebook_size() const;
  int dim() const;
  void validate() const;
};

struct QuantizeResult {
  IndexMatrix indices;             // L x T
  Matrix quantized;                // T x D, sum over levels of selected codes
  std::vector<Matrix> residuals;   // e_1..e_L, each T x D
  std::vector<Matrix> selected;    // q_l(e_l), each T x D
};

// Lloyd's algorithm with k-means++ seeding. Clusters that go empty are
// re-seeded from a random sample. EMA counts are set to the final cluster
// sizes and EMA sums to size * centroid.
Codebook kmeans_init(const Matrix& samples, int k, int iterations, std::mt19937_64& rng);

// Index of the entry nearest to `v` in squared Euclidean distance; ties go
// to the lowest index.
int nearest_entry(const Matrix& entries, const Eigen::Ref<const RowVector>& v);

QuantizeResult quantize_residual(const ResidualQuantizerStack& stack, const Matrix& latent);

// Same as quantize_residual but stops after the first `levels` levels.
QuantizeResult quantize_residual(const ResidualQuantizerStack& stack, const Matrix& latent, int levels);

Matrix dequantize(const ResidualQuantizerStack& stack, const IndexMatrix& indices);

struct MaintenanceConfig {
  double decay = 0.95;          // EMA gamma
  std::uint64_t dead_below = 1; // usage < dead_below over a window -> re-init
  double epsilon = 1e-5;
};

// EMA update of one codebook from a batch of vectors and their assigned
// entries. When `close_window` is set, entries whose usage over the window
// is below `dead_below` are replaced by randomly drawn batch vectors and all
// usage counters are reset. Returns the number of re-initialized entries.
// An empty batch is a no-op.
int maintain_codebook(Codebook& book, const Matrix& vectors, std::span<const int> assignments,
                      const MaintenanceConfig& config, bool close_window, std::mt19937_64& rng);

// Fraction of all codebook entries (across distinct books) used at least
// once when quantizing `latents`.
double codebook_utilization(const ResidualQuantizerStack& stack, std::span<const Matrix> latents);

}  // namespace gchoreo
