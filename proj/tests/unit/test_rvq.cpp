#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "gchoreo/error.hpp"
#include "gchoreo/rvq.hpp"
#include "oracles.hpp"

using namespace gchoreo;

namespace {

Matrix col(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

ResidualQuantizerStack scalar_stack(std::initializer_list<double> l0, std::initializer_list<double> l1) {
  auto s = ResidualQuantizerStack::uninitialized(2);
  s.books = {Codebook::from_entries(col(l0)), Codebook::from_entries(col(l1))};
  return s;
}

ResidualQuantizerStack random_stack(int levels, int k, int dim, std::mt19937_64& rng, bool shared = false) {
  std::normal_distribution<double> n;
  auto s = ResidualQuantizerStack::uninitialized(levels, shared);
  const int books = shared ? 1 : levels;
  for (int l = 0; l < books; ++l) {
    Matrix e(k, dim);
    for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = n(rng) / (1 << l);
    s.books.push_back(Codebook::from_entries(e));
  }
  return s;
}

Matrix gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST_CASE("two-level scalar example") {
  const auto s = scalar_stack({0, 1}, {-0.1, 0.1});
  const auto r = quantize_residual(s, col({0.9}));
  CHECK(r.indices(0, 0) == 1);
  CHECK(r.indices(1, 0) == 0);
  CHECK(r.quantized(0, 0) == doctest::Approx(0.9));
  CHECK(r.residuals[0](0, 0) == 0.9);
  CHECK(r.residuals[1](0, 0) == doctest::Approx(-0.1));
}

TEST_CASE("nearest entry tie goes to the lowest index") {
  const Matrix e = col({0, 1});
  RowVector v(1);
  v << 0.5;
  CHECK(nearest_entry(e, v) == 0);
  const auto s = scalar_stack({0, 1}, {-0.1, 0.1});
  CHECK(quantize_residual(s, col({0.5}), 1).indices(0, 0) == 0);
}

TEST_CASE("nearest entry agrees with brute force") {
  std::mt19937_64 rng(11);
  const Matrix e = gaussian(37, 5, rng);
  const Matrix q = gaussian(200, 5, rng);
  for (int i = 0; i < q.rows(); ++i) CHECK(nearest_entry(e, q.row(i)) == oracle::nearest(e, q.row(i)));
}

TEST_CASE("telescoping identity and dequantize") {
  std::mt19937_64 rng(12);
  const auto s = random_stack(4, 16, 6, rng);
  const Matrix z = gaussian(30, 6, rng);
  const auto r = quantize_residual(s, z);
  REQUIRE(r.indices.rows() == 4);
  REQUIRE(r.indices.cols() == 30);
  Matrix sum = Matrix::Zero(30, 6);
  for (const auto& q : r.selected) sum += q;
  CHECK((sum - r.quantized).cwiseAbs().maxCoeff() < 1e-12);
  // z = Z* + e_{L+1}
  const Matrix last = r.residuals.back() - r.selected.back();
  CHECK((z - r.quantized - last).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(dequantize(s, r.indices) == r.quantized);
  for (int l = 0; l + 1 < 4; ++l)
    CHECK((r.residuals[l] - r.selected[l] - r.residuals[l + 1]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shared codebook uses one book at every level") {
  std::mt19937_64 rng(13);
  const auto s = random_stack(3, 8, 2, rng, true);
  CHECK(s.books.size() == 1);
  CHECK(&s.level(0) == &s.level(2));
  const Matrix z = gaussian(10, 2, rng);
  const auto r = quantize_residual(s, z);
  CHECK(dequantize(s, r.indices) == r.quantized);
}

TEST_CASE("level-truncated quantization") {
  std::mt19937_64 rng(14);
  const auto s = random_stack(4, 8, 3, rng);
  const Matrix z = gaussian(5, 3, rng);
  const auto full = quantize_residual(s, z);
  const auto two = quantize_residual(s, z, 2);
  CHECK(two.indices.rows() == 2);
  CHECK(two.indices == full.indices.topRows(2));
  CHECK_THROWS_AS(quantize_residual(s, z, 5), ValidationError);
}

TEST_CASE("quantize rejects bad input") {
  std::mt19937_64 rng(15);
  const auto s = random_stack(2, 4, 3, rng);
  CHECK_THROWS_AS(quantize_residual(s, Matrix::Zero(2, 4)), ValidationError);
  CHECK_THROWS_AS(quantize_residual(ResidualQuantizerStack::uninitialized(2), Matrix::Zero(2, 3)), ValidationError);
  IndexMatrix bad(2, 1);
  bad << 0, 4;
  CHECK_THROWS_AS(dequantize(s, bad), ValidationError);
}

TEST_CASE("kmeans separates two clusters") {
  std::mt19937_64 rng(1);
  const Codebook b = kmeans_init(col({0, 0, 10, 10}), 2, 10, rng);
  std::vector<double> c{b.entries(0, 0), b.entries(1, 0)};
  std::sort(c.begin(), c.end());
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 10.0);
  CHECK(b.ema_counts.sum() == doctest::Approx(4.0));
  for (int i = 0; i < 2; ++i) CHECK(b.ema_sums(i, 0) == doctest::Approx(2 * b.entries(i, 0)));
}

TEST_CASE("kmeans is deterministic for a seed") {
  std::mt19937_64 a(21), b(21), data(3);
  const Matrix x = gaussian(100, 4, data);
  CHECK(kmeans_init(x, 8, 5, a).entries == kmeans_init(x, 8, 5, b).entries);
}

TEST_CASE("EMA update matches hand arithmetic") {
  // Counts 1, sums 10*1; two vectors at 2 assigned to entry 0; gamma 0.8.
  Codebook b = Codebook::from_entries(col({10, 50}));
  b.ema_sums(0, 0) = 10;
  b.ema_sums(1, 0) = 50;
  MaintenanceConfig cfg;
  cfg.decay = 0.8;
  cfg.epsilon = 0.0;
  std::mt19937_64 rng(0);
  const std::vector<int> assign{0, 0};
  maintain_codebook(b, col({2, 2}), assign, cfg, false, rng);
  // N = 0.8 + 0.2*2 = 1.2; m = 8 + 0.2*4 = 8.8; e = 8.8/1.2
  CHECK(b.ema_counts[0] == doctest::Approx(1.2));
  CHECK(b.ema_sums(0, 0) == doctest::Approx(8.8));
  CHECK(b.entries(0, 0) == doctest::Approx(8.8 / 1.2));
  // Unused entry decays in count and sum; its entry is unchanged.
  CHECK(b.entries(1, 0) == doctest::Approx(50.0));
  CHECK(b.usage[0] == 2);
  CHECK(b.usage[1] == 0);
}

TEST_CASE("EMA single step with gamma 0.95") {
  Codebook b = Codebook::from_entries(col({10}));
  b.ema_sums(0, 0) = 10;
  MaintenanceConfig cfg;
  cfg.decay = 0.95;
  cfg.epsilon = 0.0;
  std::mt19937_64 rng(0);
  const std::vector<int> assign{0};
  maintain_codebook(b, col({2}), assign, cfg, false, rng);
  // 0.95*10 + 0.05*2 = 9.6 over count 1
  CHECK(b.entries(0, 0) == doctest::Approx(9.6));
}

TEST_CASE("dead entries are re-initialized from the batch when the window closes") {
  Codebook b = Codebook::from_entries(col({0, 100}));
  std::mt19937_64 rng(5);
  const Matrix v = col({0.1, -0.1, 0.2});
  const std::vector<int> assign{0, 0, 0};
  CHECK(maintain_codebook(b, v, assign, {}, false, rng) == 0);
  CHECK(b.entries(1, 0) == 100.0);
  CHECK(maintain_codebook(b, v, assign, {}, true, rng) == 1);
  bool from_batch = false;
  for (int i = 0; i < 3; ++i) from_batch |= b.entries(1, 0) == v(i, 0);
  CHECK(from_batch);
  CHECK(b.usage[0] == 0);
}

TEST_CASE("empty maintenance batch is a no-op") {
  Codebook b = Codebook::from_entries(col({1, 2}));
  const Codebook before = b;
  std::mt19937_64 rng(0);
  CHECK(maintain_codebook(b, Matrix(0, 1), {}, {}, true, rng) == 0);
  CHECK(b.entries == before.entries);
  CHECK(b.ema_counts == before.ema_counts);
}

TEST_CASE("utilization counts distinct entries used") {
  auto s = scalar_stack({0, 1, 2, 3}, {-0.1, 0.1, 5, 6});
  const std::vector<Matrix> z{col({0.05, 0.95})};
  // Level 0 uses entries 0 and 1; level 1 uses 0.1 for 0.05 and -0.1 for -0.05.
  CHECK(codebook_utilization(s, z) == doctest::Approx(0.5));
}

TEST_CASE("property: mean error per level does not increase after fitting") {
  std::mt19937_64 rng(31);
  const Matrix z = gaussian(500, 4, rng);
  auto s = ResidualQuantizerStack::uninitialized(4);
  Matrix residual = z;
  for (int l = 0; l < 4; ++l) {
    s.books.push_back(kmeans_init(residual, 16, 10, rng));
    s.levels = l + 1;
    const auto r = quantize_residual(s, z);
    residual = r.residuals.back() - r.selected.back();
  }
  double prev = z.rowwise().squaredNorm().mean();
  for (int l = 1; l <= 4; ++l) {
    const auto r = quantize_residual(s, z, l);
    const double err = (z - r.quantized).rowwise().squaredNorm().mean();
    CHECK(err <= prev + 1e-12);
    prev = err;
  }
}
