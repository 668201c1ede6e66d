#pragma once

// Independent reference implementations used only by the tests. None of
// these share code with the library.

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Hilbert index by explicit quadrant recursion. Base order (0,0) (0,1)
// (1,1) (1,0); quadrant 0 is transposed, quadrant 3 anti-transposed.
inline std::uint64_t hilbert(std::uint32_t n, std::uint32_t x, std::uint32_t z) {
  if (n == 1) return 0;
  const std::uint32_t h = n / 2;
  const std::uint64_t block = static_cast<std::uint64_t>(h) * h;
  if (x < h && z < h) return 0 * block + hilbert(h, z, x);
  if (x < h) return 1 * block + hilbert(h, x, z - h);
  if (z >= h) return 2 * block + hilbert(h, x - h, z - h);
  return 3 * block + hilbert(h, h - 1 - z, h - 1 - (x - h));
}

// Denman-Beavers iteration for the principal square root.
inline Eigen::MatrixXd sqrtm_denman_beavers(const Eigen::MatrixXd& a, int iterations = 100) {
  Eigen::MatrixXd y = a;
  Eigen::MatrixXd z = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  for (int i = 0; i < iterations; ++i) {
    const Eigen::MatrixXd yi = y.inverse();
    const Eigen::MatrixXd zi = z.inverse();
    y = 0.5 * (y + zi);
    z = 0.5 * (z + yi);
  }
  return y;
}

inline double frechet(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& m2,
                      const Eigen::MatrixXd& s2) {
  return (m1 - m2).squaredNorm() + (s1 + s2 - 2.0 * sqrtm_denman_beavers(s1 * s2)).trace();
}

// |X_k|^2 of the Hann-windowed frame, k = 0..n/2, by the O(n^2) sum.
inline std::vector<double> hann_power_spectrum(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  const double pi = std::acos(-1.0);
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(t) / static_cast<double>(n));
      acc += w * frame[t] * std::polar(1.0, -2.0 * pi * static_cast<double>(k * t) / static_cast<double>(n));
    }
    out[k] = std::norm(acc);
  }
  return out;
}

// Brute-force nearest row (lowest index on ties).
inline int nearest(const Eigen::MatrixXd& entries, const Eigen::RowVectorXd& v) {
  int best = 0;
  double bd = (entries.row(0) - v).squaredNorm();
  for (int i = 1; i < entries.rows(); ++i) {
    const double d = (entries.row(i) - v).squaredNorm();
    if (d < bd) bd = d, best = i;
  }
  return best;
}

}  // namespace oracle
