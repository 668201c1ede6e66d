#include "gchoreo/autoencoder.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "gchoreo/error.hpp"

namespace gchoreo {

namespace {

void check_config(const AutoencoderConfig& cfg) {
  if (cfg.input_dim < 20 || (cfg.input_dim - 8) % 12 != 0) {
    throw ValidationError("autoencoder input dimension " + std::to_string(cfg.input_dim) +
                          " is not a flat pose size 8 + 12J");
  }
  if (cfg.hidden < 1 || cfg.latent_dim < 1 || cfg.downsample < 1) {
    throw ValidationError("autoencoder hidden/latent/downsample sizes must be positive");
  }
  if (!(cfg.fps > 0.0)) throw ValidationError("autoencoder fps must be positive");
}

Matrix conv3(const Matrix& x, const Matrix& w0, const Matrix& w1, const Matrix& w2, const Matrix& b) {
  const auto F = x.rows();
  Matrix y = x * w1;
  y.rowwise() += b.row(0);
  if (F > 1) {
    y.bottomRows(F - 1).noalias() += x.topRows(F - 1) * w0;
    y.topRows(F - 1).noalias() += x.bottomRows(F - 1) * w2;
  }
  return y;
}

// Accumulates weight gradients; returns d/dx when `want_input` is set.
Matrix conv3_backward(const Matrix& x, const Matrix& dy, const Matrix& w0, const Matrix& w1, const Matrix& w2,
                      Matrix& dw0, Matrix& dw1, Matrix& dw2, Matrix& db, bool want_input) {
  const auto F = x.rows();
  dw1.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  if (F > 1) {
    dw0.noalias() += x.topRows(F - 1).transpose() * dy.bottomRows(F - 1);
    dw2.noalias() += x.bottomRows(F - 1).transpose() * dy.topRows(F - 1);
  }
  if (!want_input) return {};
  Matrix dx = dy * w1.transpose();
  if (F > 1) {
    dx.topRows(F - 1).noalias() += dy.bottomRows(F - 1) * w0.transpose();
    dx.bottomRows(F - 1).noalias() += dy.topRows(F - 1) * w2.transpose();
  }
  return dx;
}

Matrix dense(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

Matrix tanh_of(const Matrix& x) { return x.array().tanh().matrix(); }

Matrix tanh_backward(const Matrix& activated, const Matrix& grad) {
  return (grad.array() * (1.0 - activated.array().square())).matrix();
}

Matrix upsample(const Matrix& x, int d) {
  Matrix y(x.rows() * d, x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    for (int k = 0; k < d; ++k) y.row(t * d + k) = x.row(t);
  return y;
}

Matrix upsample_backward(const Matrix& dy, int d) {
  const auto T = dy.rows() / d;
  Matrix dx = Matrix::Zero(T, dy.cols());
  for (Eigen::Index t = 0; t < T; ++t)
    for (int k = 0; k < d; ++k) dx.row(t) += dy.row(t * d + k);
  return dx;
}

double smooth_l1_grad(double diff) { return std::abs(diff) < 1.0 ? diff : (diff > 0.0 ? 1.0 : -1.0); }

struct EncoderTrace {
  Matrix a1;  // F' x H
  Matrix a2;  // T x D
  Matrix a3;  // T x D
  Matrix z;   // T x D
};

struct DecoderTrace {
  Matrix b1;  // T x D
  Matrix b2;  // T x H
  Matrix b3;  // F' x H
  Matrix y;   // F' x D_in
};

EncoderTrace run_encoder(const AutoencoderParams& p, const AutoencoderConfig& cfg, const Matrix& x) {
  if (x.cols() != cfg.input_dim) {
    throw ValidationError("encoder input has " + std::to_string(x.cols()) + " features, expected " +
                          std::to_string(cfg.input_dim));
  }
  if (x.rows() == 0 || x.rows() % cfg.downsample != 0) {
    throw ValidationError("encoder input length must be a positive multiple of the downsample factor");
  }
  EncoderTrace tr;
  tr.a1 = tanh_of(conv3(x, p.enc_conv0, p.enc_conv1, p.enc_conv2, p.enc_conv_b));
  const auto T = x.rows() / cfg.downsample;
  Eigen::Map<const Matrix> grouped(tr.a1.data(), T, static_cast<Eigen::Index>(cfg.downsample) * cfg.hidden);
  Matrix u = grouped * p.enc_down;
  u.rowwise() += p.enc_down_b.row(0);
  tr.a2 = tanh_of(u);
  tr.a3 = tanh_of(dense(tr.a2, p.enc_mix1, p.enc_mix1_b));
  tr.z = dense(tr.a3, p.enc_mix2, p.enc_mix2_b);
  return tr;
}

DecoderTrace run_decoder(const AutoencoderParams& p, const AutoencoderConfig& cfg, const Matrix& zq) {
  if (zq.cols() != cfg.latent_dim) throw ValidationError("decoder input width does not match the latent size");
  DecoderTrace tr;
  tr.b1 = tanh_of(dense(zq, p.dec_mix1, p.dec_mix1_b));
  tr.b2 = tanh_of(dense(tr.b1, p.dec_mix2, p.dec_mix2_b));
  tr.b3 = upsample(tr.b2, cfg.downsample);
  tr.y = conv3(tr.b3, p.dec_conv0, p.dec_conv1, p.dec_conv2, p.dec_conv_b);
  return tr;
}

// Returns d/d(zq).
Matrix backward_decoder(const AutoencoderParams& p, const AutoencoderConfig& cfg, const Matrix& zq,
                        const DecoderTrace& tr, const Matrix& dy, AutoencoderParams& g) {
  const Matrix db3 = conv3_backward(tr.b3, dy, p.dec_conv0, p.dec_conv1, p.dec_conv2, g.dec_conv0, g.dec_conv1,
                                    g.dec_conv2, g.dec_conv_b, true);
  const Matrix db2 = tanh_backward(tr.b2, upsample_backward(db3, cfg.downsample));
  g.dec_mix2.noalias() += tr.b1.transpose() * db2;
  g.dec_mix2_b.row(0) += db2.colwise().sum();
  const Matrix db1 = tanh_backward(tr.b1, db2 * p.dec_mix2.transpose());
  g.dec_mix1.noalias() += zq.transpose() * db1;
  g.dec_mix1_b.row(0) += db1.colwise().sum();
  return db1 * p.dec_mix1.transpose();
}

void backward_encoder(const AutoencoderParams& p, const AutoencoderConfig& cfg, const Matrix& x,
                      const EncoderTrace& tr, const Matrix& dz, AutoencoderParams& g) {
  g.enc_mix2.noalias() += tr.a3.transpose() * dz;
  g.enc_mix2_b.row(0) += dz.colwise().sum();
  const Matrix dp3 = tanh_backward(tr.a3, dz * p.enc_mix2.transpose());
  g.enc_mix1.noalias() += tr.a2.transpose() * dp3;
  g.enc_mix1_b.row(0) += dp3.colwise().sum();
  const Matrix du = tanh_backward(tr.a2, dp3 * p.enc_mix1.transpose());
  const auto T = tr.a2.rows();
  const auto group = static_cast<Eigen::Index>(cfg.downsample) * cfg.hidden;
  Eigen::Map<const Matrix> grouped(tr.a1.data(), T, group);
  g.enc_down.noalias() += grouped.transpose() * du;
  g.enc_down_b.row(0) += du.colwise().sum();
  Matrix dgrouped = du * p.enc_down.transpose();
  Eigen::Map<const Matrix> da1(dgrouped.data(), tr.a1.rows(), tr.a1.cols());
  const Matrix dh1 = tanh_backward(tr.a1, da1);
  conv3_backward(x, dh1, p.enc_conv0, p.enc_conv1, p.enc_conv2, g.enc_conv0, g.enc_conv1, g.enc_conv2,
                 g.enc_conv_b, false);
}

// Residuals and chosen codes for the commitment term under either live or
// frozen quantization.
struct CommitTerms {
  std::vector<Matrix> residuals;
  std::vector<Matrix> selected;
};

CommitTerms commit_terms(const Matrix& z, const QuantizeResult* live, const FrozenQuantization* frozen) {
  CommitTerms c;
  if (frozen != nullptr) {
    Matrix e = z;
    for (const Matrix& q : frozen->selected) {
      c.residuals.push_back(e);
      c.selected.push_back(q);
      e -= q;
    }
  } else {
    c.residuals = live->residuals;
    c.selected = live->selected;
  }
  return c;
}

double mean_sq_diff(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double s = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    s += (a[l] - b[l]).squaredNorm() / static_cast<double>(a[l].size());
  }
  return s;
}

}  // namespace

AutoencoderParams AutoencoderParams::zeros(const AutoencoderConfig& c) {
  AutoencoderParams p;
  const auto Din = c.input_dim, H = c.hidden, D = c.latent_dim, d = c.downsample;
  p.enc_conv0 = p.enc_conv1 = p.enc_conv2 = Matrix::Zero(Din, H);
  p.enc_conv_b = Matrix::Zero(1, H);
  p.enc_down = Matrix::Zero(static_cast<Eigen::Index>(d) * H, D);
  p.enc_down_b = Matrix::Zero(1, D);
  p.enc_mix1 = p.enc_mix2 = Matrix::Zero(D, D);
  p.enc_mix1_b = p.enc_mix2_b = Matrix::Zero(1, D);
  p.dec_mix1 = Matrix::Zero(D, D);
  p.dec_mix1_b = Matrix::Zero(1, D);
  p.dec_mix2 = Matrix::Zero(D, H);
  p.dec_mix2_b = Matrix::Zero(1, H);
  p.dec_conv0 = p.dec_conv1 = p.dec_conv2 = Matrix::Zero(H, Din);
  p.dec_conv_b = Matrix::Zero(1, Din);
  return p;
}

void AutoencoderParams::for_each(const std::function<void(std::string_view, Matrix&)>& fn) {
  fn("enc_conv0", enc_conv0);
  fn("enc_conv1", enc_conv1);
  fn("enc_conv2", enc_conv2);
  fn("enc_conv_b", enc_conv_b);
  fn("enc_down", enc_down);
  fn("enc_down_b", enc_down_b);
  fn("enc_mix1", enc_mix1);
  fn("enc_mix1_b", enc_mix1_b);
  fn("enc_mix2", enc_mix2);
  fn("enc_mix2_b", enc_mix2_b);
  fn("dec_mix1", dec_mix1);
  fn("dec_mix1_b", dec_mix1_b);
  fn("dec_mix2", dec_mix2);
  fn("dec_mix2_b", dec_mix2_b);
  fn("dec_conv0", dec_conv0);
  fn("dec_conv1", dec_conv1);
  fn("dec_conv2", dec_conv2);
  fn("dec_conv_b", dec_conv_b);
}

void AutoencoderParams::for_each(const std::function<void(std::string_view, const Matrix&)>& fn) const {
  const_cast<AutoencoderParams*>(this)->for_each([&](std::string_view n, Matrix& m) { fn(n, m); });
}

std::size_t AutoencoderParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](std::string_view, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

bool AutoencoderParams::all_finite() const {
  bool ok = true;
  for_each([&](std::string_view, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

TemporalAutoencoder::TemporalAutoencoder(const AutoencoderConfig& cfg)
    : cfg_(cfg),
      params_(AutoencoderParams::zeros(cfg)),
      mean_(RowVector::Zero(cfg.input_dim)),
      scale_(RowVector::Ones(cfg.input_dim)) {
  check_config(cfg);
}

TemporalAutoencoder TemporalAutoencoder::random(const AutoencoderConfig& cfg, std::mt19937_64& rng) {
  TemporalAutoencoder ae(cfg);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double d = cfg.downsample;
  auto fill = [&](Matrix& m, double fan_in) {
    const double s = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = s * normal(rng);
  };
  auto& p = ae.params_;
  fill(p.enc_conv0, 3.0 * cfg.input_dim);
  fill(p.enc_conv1, 3.0 * cfg.input_dim);
  fill(p.enc_conv2, 3.0 * cfg.input_dim);
  fill(p.enc_down, d * cfg.hidden);
  fill(p.enc_mix1, cfg.latent_dim);
  fill(p.enc_mix2, cfg.latent_dim);
  fill(p.dec_mix1, cfg.latent_dim);
  fill(p.dec_mix2, cfg.latent_dim);
  fill(p.dec_conv0, 3.0 * cfg.hidden);
  fill(p.dec_conv1, 3.0 * cfg.hidden);
  fill(p.dec_conv2, 3.0 * cfg.hidden);
  return ae;
}

void TemporalAutoencoder::fit_normalization(std::span<const Matrix> raw_features, double root_emphasis) {
  const auto D = cfg_.input_dim;
  RowVector sum = RowVector::Zero(D), sq = RowVector::Zero(D);
  double n = 0.0;
  for (const Matrix& m : raw_features) {
    if (m.cols() != D) throw ValidationError("fit_normalization: feature width mismatch");
    sum += m.colwise().sum();
    sq += m.array().square().matrix().colwise().sum();
    n += static_cast<double>(m.rows());
  }
  if (n < 1.0) throw ValidationError("fit_normalization: no frames");
  mean_ = sum / n;
  const RowVector var = (sq / n).array() - mean_.array().square();
  scale_ = var.array().max(0.0).sqrt().max(1e-3).matrix();
  for (int c = 0; c < 4; ++c) scale_[c] /= root_emphasis;
}

Matrix TemporalAutoencoder::normalize(const Matrix& raw) const {
  if (raw.cols() != cfg_.input_dim) throw ValidationError("normalize: feature width mismatch");
  return ((raw.rowwise() - mean_).array().rowwise() / scale_.array()).matrix();
}

Matrix TemporalAutoencoder::denormalize(const Matrix& normalized) const {
  if (normalized.cols() != cfg_.input_dim) throw ValidationError("denormalize: feature width mismatch");
  return ((normalized.array().rowwise() * scale_.array()).rowwise() + mean_.array()).matrix();
}

int TemporalAutoencoder::token_count(int frames) const { return (frames + cfg_.downsample - 1) / cfg_.downsample; }

Matrix TemporalAutoencoder::pad(const Matrix& frames) const {
  if (frames.rows() == 0) throw ValidationError("pad: empty input");
  const auto target = static_cast<Eigen::Index>(token_count(static_cast<int>(frames.rows()))) * cfg_.downsample;
  Matrix out(target, frames.cols());
  out.topRows(frames.rows()) = frames;
  for (Eigen::Index r = frames.rows(); r < target; ++r) out.row(r) = frames.row(frames.rows() - 1);
  return out;
}

Matrix TemporalAutoencoder::encode(const Matrix& input) const { return run_encoder(params_, cfg_, input).z; }

Matrix TemporalAutoencoder::decode(const Matrix& latent) const { return run_decoder(params_, cfg_, latent).y; }

Matrix TemporalAutoencoder::decode_vjp(const Matrix& latent, const Matrix& grad_output) const {
  const DecoderTrace tr = run_decoder(params_, cfg_, latent);
  AutoencoderParams scratch = AutoencoderParams::zeros(cfg_);
  return backward_decoder(params_, cfg_, latent, tr, grad_output, scratch);
}

void TemporalAutoencoder::round_to_storage_precision() {
  auto round = [](auto& m) { m = m.template cast<float>().template cast<double>(); };
  params_.for_each([&](std::string_view, Matrix& m) { round(m); });
  round(mean_);
  round(scale_);
}

void TemporalAutoencoder::validate() const {
  check_config(cfg_);
  if (!params_.all_finite()) throw ValidationError("autoencoder parameters must be finite");
  if (mean_.size() != cfg_.input_dim || scale_.size() != cfg_.input_dim || !mean_.allFinite() ||
      !(scale_.array() > 0.0).all()) {
    throw ValidationError("autoencoder normalization is invalid");
  }
}

double smooth_l1(const Matrix& prediction, const Matrix& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
    throw ValidationError("smooth_l1: shape mismatch");
  }
  if (prediction.size() == 0) return 0.0;
  const auto diff = (prediction - target).array().abs();
  const double total = (diff < 1.0).select(0.5 * diff.square(), diff - 0.5).sum();
  return total / static_cast<double>(prediction.size());
}

double orthogonal_penalty(const ResidualQuantizerStack& stack) {
  double total = 0.0;
  for (const Codebook& book : stack.books) {
    Matrix e = book.entries;
    for (Eigen::Index k = 0; k < e.rows(); ++k) {
      const double n = e.row(k).norm();
      if (n > 0.0) e.row(k) /= n;
    }
    const Matrix gram = e * e.transpose();
    total += (gram - Matrix::Identity(e.rows(), e.rows())).squaredNorm();
  }
  return total;
}

LossBreakdown rvq_losses(const Matrix& original, const Matrix& reconstructed, const QuantizeResult& result,
                         const ResidualQuantizerStack& stack, const LossWeights& weights) {
  if (result.residuals.size() != result.selected.size()) throw ValidationError("rvq_losses: malformed result");
  for (std::size_t l = 0; l < result.residuals.size(); ++l) {
    if (result.residuals[l].rows() != result.selected[l].rows() ||
        result.residuals[l].cols() != result.selected[l].cols()) {
      throw ValidationError("rvq_losses: residual/code shape mismatch");
    }
  }
  LossBreakdown out;
  out.reconstruction = smooth_l1(reconstructed, original);
  out.codebook = mean_sq_diff(result.residuals, result.selected);
  out.commitment = stack.commitment * out.codebook;
  out.orthogonal = stack.books.empty() ? 0.0 : orthogonal_penalty(stack);
  out.total = weights.reconstruction * out.reconstruction + weights.commitment * out.commitment +
              weights.orthogonal * out.orthogonal;
  return out;
}

GradientResult compute_gradients(const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack,
                                 std::span<const Matrix> batch, const LossWeights& weights,
                                 const std::vector<FrozenQuantization>* frozen) {
  if (batch.empty()) throw ValidationError("compute_gradients: empty batch");
  if (frozen != nullptr && frozen->size() != batch.size()) {
    throw ValidationError("compute_gradients: frozen quantization count does not match the batch");
  }
  if (frozen == nullptr && !stack.initialized()) {
    throw ValidationError("compute_gradients: quantizer stack is not initialized");
  }
  const auto& cfg = ae.config();
  const auto& p = ae.params();
  GradientResult out;
  out.grad = AutoencoderParams::zeros(cfg);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const double beta = stack.commitment;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Matrix& x = batch[i];
    const EncoderTrace enc = run_encoder(p, cfg, x);
    Matrix zq;
    CommitTerms commit;
    if (frozen != nullptr) {
      const FrozenQuantization& fq = (*frozen)[i];
      zq = enc.z + fq.offset;
      commit = commit_terms(enc.z, nullptr, &fq);
    } else {
      QuantizeResult q = quantize_residual(stack, enc.z);
      zq = q.quantized;
      commit = commit_terms(enc.z, &q, nullptr);
      out.quantized.push_back(std::move(q));
    }
    const DecoderTrace dec = run_decoder(p, cfg, zq);

    const double rec = smooth_l1(dec.y, x);
    const double code = mean_sq_diff(commit.residuals, commit.selected);
    out.loss.reconstruction += rec * inv_batch;
    out.loss.codebook += code * inv_batch;
    out.loss.commitment += beta * code * inv_batch;

    const double rec_scale = weights.reconstruction * inv_batch / static_cast<double>(x.size());
    const Matrix dy = (dec.y - x).unaryExpr([](double v) { return smooth_l1_grad(v); }) * rec_scale;
    Matrix dz = backward_decoder(p, cfg, zq, dec, dy, out.grad);
    // Straight-through: the decoder-input gradient passes to the encoder
    // output unchanged; every residual e_l has identity Jacobian w.r.t. it.
    for (std::size_t l = 0; l < commit.residuals.size(); ++l) {
      const double s = weights.commitment * beta * 2.0 * inv_batch / static_cast<double>(commit.residuals[l].size());
      dz += s * (commit.residuals[l] - commit.selected[l]);
    }
    backward_encoder(p, cfg, x, enc, dz, out.grad);
    out.latents.push_back(enc.z);
  }
  out.loss.orthogonal = stack.books.empty() ? 0.0 : orthogonal_penalty(stack);
  out.loss.total = weights.reconstruction * out.loss.reconstruction + weights.commitment * out.loss.commitment +
                   weights.orthogonal * out.loss.orthogonal;
  return out;
}

LossBreakdown evaluate_loss(const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack,
                            std::span<const Matrix> batch, const LossWeights& weights,
                            const std::vector<FrozenQuantization>* frozen) {
  if (batch.empty()) throw ValidationError("evaluate_loss: empty batch");
  const auto& cfg = ae.config();
  const auto& p = ae.params();
  LossBreakdown out;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Matrix z = run_encoder(p, cfg, batch[i]).z;
    Matrix zq;
    CommitTerms commit;
    if (frozen != nullptr) {
      zq = z + (*frozen)[i].offset;
      commit = commit_terms(z, nullptr, &(*frozen)[i]);
    } else {
      const QuantizeResult q = quantize_residual(stack, z);
      zq = q.quantized;
      commit = commit_terms(z, &q, nullptr);
    }
    const Matrix y = run_decoder(p, cfg, zq).y;
    const double code = mean_sq_diff(commit.residuals, commit.selected);
    out.reconstruction += smooth_l1(y, batch[i]) * inv_batch;
    out.codebook += code * inv_batch;
    out.commitment += stack.commitment * code * inv_batch;
  }
  out.orthogonal = stack.books.empty() ? 0.0 : orthogonal_penalty(stack);
  out.total = weights.reconstruction * out.reconstruction + weights.commitment * out.commitment +
              weights.orthogonal * out.orthogonal;
  return out;
}

std::vector<FrozenQuantization> freeze_quantization(const TemporalAutoencoder& ae,
                                                    const ResidualQuantizerStack& stack,
                                                    std::span<const Matrix> batch) {
  std::vector<FrozenQuantization> out;
  for (const Matrix& x : batch) {
    const Matrix z = ae.encode(x);
    QuantizeResult q = quantize_residual(stack, z);
    FrozenQuantization f;
    f.offset = q.quantized - z;
    f.selected = std::move(q.selected);
    out.push_back(std::move(f));
  }
  return out;
}

Matrix latent_gradient(const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack, const Matrix& input,
                       const LossWeights& weights, double batch_scale) {
  const auto& cfg = ae.config();
  const EncoderTrace enc = run_encoder(ae.params(), cfg, input);
  const QuantizeResult q = quantize_residual(stack, enc.z);
  const DecoderTrace dec = run_decoder(ae.params(), cfg, q.quantized);
  const double rec_scale = weights.reconstruction * batch_scale / static_cast<double>(input.size());
  const Matrix dy = (dec.y - input).unaryExpr([](double v) { return smooth_l1_grad(v); }) * rec_scale;
  AutoencoderParams scratch = AutoencoderParams::zeros(cfg);
  Matrix dz = backward_decoder(ae.params(), cfg, q.quantized, dec, dy, scratch);
  for (std::size_t l = 0; l < q.residuals.size(); ++l) {
    const double s = weights.commitment * stack.commitment * 2.0 * batch_scale / static_cast<double>(q.residuals[l].size());
    dz += s * (q.residuals[l] - q.selected[l]);
  }
  return dz;
}

TrainerState::TrainerState(const TrainerConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {}

void initialize_codebooks(const TemporalAutoencoder& ae, ResidualQuantizerStack& stack, int codebook_size,
                          std::span<const Matrix> batch, int iterations, std::mt19937_64& rng) {
  if (batch.empty()) throw ValidationError("initialize_codebooks: empty batch");
  std::vector<Matrix> latents;
  Eigen::Index rows = 0;
  for (const Matrix& x : batch) {
    latents.push_back(ae.encode(x));
    rows += latents.back().rows();
  }
  Matrix samples(rows, ae.config().latent_dim);
  Eigen::Index r = 0;
  for (const Matrix& z : latents) {
    samples.middleRows(r, z.rows()) = z;
    r += z.rows();
  }
  stack.books.clear();
  const int distinct = stack.shared ? 1 : stack.levels;
  for (int l = 0; l < distinct; ++l) {
    Codebook book = kmeans_init(samples, codebook_size, iterations, rng);
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      samples.row(i) -= book.entries.row(nearest_entry(book.entries, samples.row(i)));
    }
    stack.books.push_back(std::move(book));
  }
}

LossBreakdown train_step(TemporalAutoencoder& ae, ResidualQuantizerStack& stack, std::span<const Matrix> batch,
                         double learning_rate, TrainerState& state) {
  if (batch.empty()) throw ValidationError("train_step: empty batch");
  if (!(learning_rate > 0.0)) throw ValidationError("train_step: learning rate must be positive");
  const TrainerConfig& cfg = state.cfg_;
  GradientResult g = compute_gradients(ae, stack, batch, cfg.weights);
  const LossBreakdown& loss = g.loss;
  if (!std::isfinite(loss.total) || !std::isfinite(loss.reconstruction) || !std::isfinite(loss.commitment)) {
    std::ostringstream msg;
    msg << "train_step " << state.step_ << ": non-finite loss (rec=" << loss.reconstruction
        << ", commit=" << loss.commitment << ", ortho=" << loss.orthogonal << ")";
    throw ComputeError(msg.str());
  }

  if (!state.m_) {
    state.m_ = AutoencoderParams::zeros(ae.config());
    state.v_ = AutoencoderParams::zeros(ae.config());
  }
  ++state.step_;
  const double t = static_cast<double>(state.step_);
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
  std::vector<Matrix*> params, grads, ms, vs;
  ae.params().for_each([&](std::string_view, Matrix& m) { params.push_back(&m); });
  g.grad.for_each([&](std::string_view, Matrix& m) { grads.push_back(&m); });
  state.m_->for_each([&](std::string_view, Matrix& m) { ms.push_back(&m); });
  state.v_->for_each([&](std::string_view, Matrix& m) { vs.push_back(&m); });
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& m = *ms[k];
    Matrix& v = *vs[k];
    const Matrix& gr = *grads[k];
    m = b1 * m + (1.0 - b1) * gr;
    v = b2 * v + (1.0 - b2) * gr.cwiseProduct(gr);
    params[k]->array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_epsilon);
  }
  if (!ae.params().all_finite()) {
    throw ComputeError("train_step " + std::to_string(state.step_) + ": parameters became non-finite");
  }

  // EMA maintenance on the residuals seen in this batch.
  const bool close_window = cfg.maintenance_window > 0 && state.step_ % static_cast<std::uint64_t>(cfg.maintenance_window) == 0;
  const int distinct = stack.shared ? 1 : stack.levels;
  for (int b = 0; b < distinct; ++b) {
    Eigen::Index rows = 0;
    for (const auto& q : g.quantized) {
      rows += stack.shared ? q.indices.size() : q.indices.cols();
    }
    Matrix vectors(rows, stack.dim());
    std::vector<int> assign;
    assign.reserve(static_cast<std::size_t>(rows));
    Eigen::Index r = 0;
    for (const auto& q : g.quantized) {
      for (int l = 0; l < stack.levels; ++l) {
        if (!stack.shared && l != b) continue;
        vectors.middleRows(r, q.residuals[static_cast<std::size_t>(l)].rows()) = q.residuals[static_cast<std::size_t>(l)];
        r += q.residuals[static_cast<std::size_t>(l)].rows();
        for (Eigen::Index t = 0; t < q.indices.cols(); ++t) assign.push_back(q.indices(l, t));
      }
    }
    maintain_codebook(stack.books[static_cast<std::size_t>(b)], vectors, assign, cfg.maintenance, close_window,
                      state.rng_);
  }
  return loss;
}

IndexMatrix tokenize_motion(const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack,
                            const MotionSequence& seq) {
  if (!stack.initialized()) throw ValidationError("tokenize_motion: quantizer stack is not trained");
  seq.validate();
  const Matrix x = ae.pad(ae.normalize(seq.to_features()));
  return quantize_residual(stack, ae.encode(x)).indices;
}

MotionSequence detokenize_motion(const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack,
                                 const IndexMatrix& indices, const Vec3& initial_position, std::optional<int> frames) {
  const Matrix latent = dequantize(stack, indices);
  Matrix raw = ae.denormalize(ae.decode(latent));
  if (frames) {
    if (*frames < 1 || *frames > raw.rows()) throw ValidationError("detokenize_motion: requested frame count out of range");
    raw.conservativeResize(*frames, Eigen::NoChange);
  }
  const int D = ae.config().input_dim;
  for (int c = D - 4; c < D; ++c) {
    for (Eigen::Index f = 0; f < raw.rows(); ++f) raw(f, c) = raw(f, c) >= 0.5 ? 1.0 : 0.0;
  }
  return MotionSequence::from_features(raw, (D - 8) / 12, ae.config().fps, initial_position);
}

}  // namespace gchoreo
