#include "gchoreo/rvq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gchoreo/error.hpp"

namespace gchoreo {

Codebook Codebook::from_entries(Matrix entries) {
  Codebook book;
  book.ema_counts = Vector::Ones(entries.rows());
  book.ema_sums = entries;
  book.usage.assign(static_cast<std::size_t>(entries.rows()), 0);
  book.entries = std::move(entries);
  return book;
}

void Codebook::validate() const {
  if (entries.rows() < 1) throw ValidationError("codebook must have at least one entry");
  if (!entries.allFinite()) throw ValidationError("codebook entries must be finite");
  if (ema_counts.size() != entries.rows() || ema_sums.rows() != entries.rows() || ema_sums.cols() != entries.cols() ||
      usage.size() != static_cast<std::size_t>(entries.rows())) {
    throw ValidationError("codebook EMA state does not match its entries");
  }
  if ((ema_counts.array() < 0.0).any()) throw ValidationError("codebook EMA counts must be nonnegative");
}

ResidualQuantizerStack ResidualQuantizerStack::uninitialized(int levels, bool shared, double commitment) {
  ResidualQuantizerStack s;
  s.levels = levels;
  s.shared = shared;
  s.commitment = commitment;
  return s;
}

bool ResidualQuantizerStack::initialized() const {
  const std::size_t expected = shared ? 1 : static_cast<std::size_t>(std::max(levels, 0));
  if (levels < 1 || books.size() != expected) return false;
  return std::all_of(books.begin(), books.end(), [](const Codebook& b) { return b.size() > 0; });
}

int ResidualQuantizerStack::codebook_size() const { return books.empty() ? 0 : books.front().size(); }

int ResidualQuantizerStack::dim() const { return books.empty() ? 0 : books.front().dim(); }

void ResidualQuantizerStack::validate() const {
  if (levels < 1) throw ValidationError("quantizer stack needs at least one level");
  if (!(commitment > 0.0)) throw ValidationError("commitment weight must be positive");
  if (!initialized()) throw ValidationError("quantizer stack is not initialized");
  for (const auto& b : books) {
    b.validate();
    if (b.dim() != dim()) throw ValidationError("all codebook levels must share one dimension");
  }
}

int nearest_entry(const Matrix& entries, const Eigen::Ref<const RowVector>& v) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  const auto K = entries.rows();
  const auto D = entries.cols();
  for (Eigen::Index k = 0; k < K; ++k) {
    double d = 0.0;
    const double* row = entries.row(k).data();
    for (Eigen::Index c = 0; c < D; ++c) {
      const double diff = v[c] - row[c];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

namespace {

std::vector<int> assign_all(const Matrix& samples, const Matrix& centroids) {
  std::vector<int> out(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index i = 0; i < samples.rows(); ++i) out[static_cast<std::size_t>(i)] = nearest_entry(centroids, samples.row(i));
  return out;
}

Matrix seed_plus_plus(const Matrix& samples, int k, std::mt19937_64& rng) {
  const auto N = samples.rows();
  Matrix centroids(k, samples.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, N - 1);
  centroids.row(0) = samples.row(pick(rng));
  Vector d2(N);
  for (Eigen::Index i = 0; i < N; ++i) d2[i] = (samples.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      chosen = N - 1;
      for (Eigen::Index i = 0; i < N; ++i) {
        target -= d2[i];
        if (target < 0.0 && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centroids.row(c) = samples.row(chosen);
    for (Eigen::Index i = 0; i < N; ++i) {
      d2[i] = std::min(d2[i], (samples.row(i) - centroids.row(c)).squaredNorm());
    }
  }
  return centroids;
}

}  // namespace

Codebook kmeans_init(const Matrix& samples, int k, int iterations, std::mt19937_64& rng) {
  if (samples.rows() == 0 || samples.cols() == 0) throw ValidationError("kmeans_init: empty samples");
  if (k < 1) throw ValidationError("kmeans_init: K must be >= 1");
  if (samples.rows() < k) {
    throw ValidationError("kmeans_init: need at least K=" + std::to_string(k) + " samples, got " +
                          std::to_string(samples.rows()));
  }
  if (!samples.allFinite()) throw ValidationError("kmeans_init: samples must be finite");

  Matrix centroids = seed_plus_plus(samples, k, rng);
  std::vector<int> assign = assign_all(samples, centroids);
  std::uniform_int_distribution<Eigen::Index> pick(0, samples.rows() - 1);
  for (int it = 0; it < iterations; ++it) {
    Matrix sums = Matrix::Zero(k, samples.cols());
    Vector counts = Vector::Zero(k);
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += samples.row(i);
      counts[assign[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      centroids.row(c) = counts[c] > 0.0 ? RowVector(sums.row(c) / counts[c]) : RowVector(samples.row(pick(rng)));
    }
    std::vector<int> next = assign_all(samples, centroids);
    const bool converged = next == assign;
    assign = std::move(next);
    if (converged) break;
  }

  Codebook book;
  book.entries = centroids;
  book.ema_counts = Vector::Zero(k);
  for (int a : assign) book.ema_counts[a] += 1.0;
  book.ema_sums = centroids.array().colwise() * book.ema_counts.array();
  book.usage.assign(static_cast<std::size_t>(k), 0);
  return book;
}

QuantizeResult quantize_residual(const ResidualQuantizerStack& stack, const Matrix& latent) {
  return quantize_residual(stack, latent, stack.levels);
}

QuantizeResult quantize_residual(const ResidualQuantizerStack& stack, const Matrix& latent, int levels) {
  if (!stack.initialized()) throw ValidationError("quantize_residual: quantizer stack is not initialized");
  if (levels < 1 || levels > stack.levels) throw ValidationError("quantize_residual: level count out of range");
  if (latent.cols() != stack.dim()) {
    throw ValidationError("quantize_residual: latent width " + std::to_string(latent.cols()) +
                          " does not match codebook dimension " + std::to_string(stack.dim()));
  }
  if (!latent.allFinite()) throw ValidationError("quantize_residual: latent must be finite");
  const auto T = latent.rows();
  QuantizeResult r;
  r.indices.resize(levels, T);
  r.quantized = Matrix::Zero(T, latent.cols());
  Matrix residual = latent;
  for (int l = 0; l < levels; ++l) {
    const Matrix& entries = stack.level(l).entries;
    Matrix chosen(T, latent.cols());
    for (Eigen::Index t = 0; t < T; ++t) {
      const int idx = nearest_entry(entries, residual.row(t));
      r.indices(l, t) = idx;
      chosen.row(t) = entries.row(idx);
    }
    r.quantized += chosen;
    r.residuals.push_back(residual);
    residual -= chosen;
    r.selected.push_back(std::move(chosen));
  }
  return r;
}

Matrix dequantize(const ResidualQuantizerStack& stack, const IndexMatrix& indices) {
  if (!stack.initialized()) throw ValidationError("dequantize: quantizer stack is not initialized");
  if (indices.rows() < 1 || indices.rows() > stack.levels) {
    throw ValidationError("dequantize: index matrix has " + std::to_string(indices.rows()) + " levels, stack has " +
                          std::to_string(stack.levels));
  }
  const auto T = indices.cols();
  Matrix out = Matrix::Zero(T, stack.dim());
  for (Eigen::Index l = 0; l < indices.rows(); ++l) {
    const Matrix& entries = stack.level(static_cast<int>(l)).entries;
    Matrix chosen(T, stack.dim());
    for (Eigen::Index t = 0; t < T; ++t) {
      const int idx = indices(l, t);
      if (idx < 0 || idx >= entries.rows()) {
        throw ValidationError("dequantize: index " + std::to_string(idx) + " at level " + std::to_string(l) +
                              " out of range [0," + std::to_string(entries.rows()) + ")");
      }
      chosen.row(t) = entries.row(idx);
    }
    // Same accumulation order as quantize_residual so the sums match bit for bit.
    out += chosen;
  }
  return out;
}

int maintain_codebook(Codebook& book, const Matrix& vectors, std::span<const int> assignments,
                      const MaintenanceConfig& config, bool close_window, std::mt19937_64& rng) {
  if (!(config.decay > 0.0 && config.decay < 1.0)) throw ValidationError("maintain_codebook: decay must be in (0,1)");
  if (vectors.rows() == 0 || assignments.empty()) return 0;
  if (static_cast<std::size_t>(vectors.rows()) != assignments.size() || vectors.cols() != book.dim()) {
    throw ValidationError("maintain_codebook: batch shape mismatch");
  }
  const int K = book.size();
  Vector counts = Vector::Zero(K);
  Matrix sums = Matrix::Zero(K, book.dim());
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const int a = assignments[i];
    if (a < 0 || a >= K) throw ValidationError("maintain_codebook: assignment out of range");
    counts[a] += 1.0;
    sums.row(a) += vectors.row(static_cast<Eigen::Index>(i));
    ++book.usage[static_cast<std::size_t>(a)];
  }
  const double g = config.decay;
  book.ema_counts = g * book.ema_counts + (1.0 - g) * counts;
  book.ema_sums = g * book.ema_sums + (1.0 - g) * sums;
  for (int k = 0; k < K; ++k) {
    book.entries.row(k) = book.ema_sums.row(k) / std::max(book.ema_counts[k], config.epsilon);
  }

  int reinit = 0;
  if (close_window) {
    std::uniform_int_distribution<Eigen::Index> pick(0, vectors.rows() - 1);
    for (int k = 0; k < K; ++k) {
      if (book.usage[static_cast<std::size_t>(k)] < config.dead_below) {
        const Eigen::Index src = pick(rng);
        book.entries.row(k) = vectors.row(src);
        book.ema_counts[k] = 1.0;
        book.ema_sums.row(k) = vectors.row(src);
        ++reinit;
      }
    }
    std::fill(book.usage.begin(), book.usage.end(), 0);
  }
  return reinit;
}

double codebook_utilization(const ResidualQuantizerStack& stack, std::span<const Matrix> latents) {
  stack.validate();
  std::vector<std::vector<bool>> used(stack.books.size(),
                                      std::vector<bool>(static_cast<std::size_t>(stack.codebook_size()), false));
  for (const Matrix& z : latents) {
    const QuantizeResult q = quantize_residual(stack, z);
    for (int l = 0; l < stack.levels; ++l) {
      auto& u = used[stack.shared ? 0 : static_cast<std::size_t>(l)];
      for (Eigen::Index t = 0; t < q.indices.cols(); ++t) u[static_cast<std::size_t>(q.indices(l, t))] = true;
    }
  }
  std::size_t hit = 0, total = 0;
  for (const auto& u : used) {
    total += u.size();
    hit += static_cast<std::size_t>(std::count(u.begin(), u.end(), true));
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

}  // namespace gchoreo
