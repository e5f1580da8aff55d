#pragma once

#include <cstdint>
#include <stdexcept>

#include "qsc/common.hpp"
#include "qsc/rng.hpp"

namespace qsc {

// m x n sensing matrix with i.i.d. CN(0,1) entries, filled row-major so the
// first rows of a taller draw with the same seed coincide with a shorter one.
inline CMatrix gaussian_matrix(int m, int n, std::uint64_t seed) {
  if (m < 1 || n < 1) throw std::invalid_argument("gaussian_matrix: m, n must be >= 1");
  Rng rng(seed, seed_salt::matrix);
  CMatrix A(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) A(i, j) = rng.complex_normal();
  }
  return A;
}

struct MeasurementSet {
  CMatrix A;            // m x n sensing matrix
  CVector z;            // unquantized measurements A x + sigma * eps
  double sigma = 0.0;   // noise level, eps ~ CN(0, I)
  std::uint64_t seed = 0;  // noise seed
};

inline MeasurementSet measure(const CMatrix& A, const CVector& x, double sigma,
                              std::uint64_t seed) {
  if (A.cols() != x.size()) throw std::invalid_argument("measure: dimension mismatch");
  if (sigma < 0.0) throw std::invalid_argument("measure: sigma must be >= 0");
  MeasurementSet ms;
  ms.A = A;
  ms.z = A * x;
  ms.sigma = sigma;
  ms.seed = seed;
  if (sigma > 0.0) {
    Rng rng(seed, seed_salt::noise);
    for (Eigen::Index i = 0; i < ms.z.size(); ++i) {
      ms.z(i) += sigma * rng.complex_normal();
    }
  }
  return ms;
}

// MMV variant: per-column noise, columns drawn in order from one stream.
inline CMatrix measure_mmv(const CMatrix& A, const CMatrix& X, double sigma,
                           std::uint64_t seed) {
  if (A.cols() != X.rows()) throw std::invalid_argument("measure_mmv: dimension mismatch");
  if (sigma < 0.0) throw std::invalid_argument("measure_mmv: sigma must be >= 0");
  CMatrix Z = A * X;
  if (sigma > 0.0) {
    Rng rng(seed, seed_salt::noise);
    for (Eigen::Index t = 0; t < Z.cols(); ++t) {
      for (Eigen::Index i = 0; i < Z.rows(); ++i) Z(i, t) += sigma * rng.complex_normal();
    }
  }
  return Z;
}

inline double snr(const CVector& x, double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("snr: sigma must be positive");
  return x.squaredNorm() / (sigma * sigma);
}

inline double snr_mmv(const CMatrix& X, double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("snr_mmv: sigma must be positive");
  return X.squaredNorm() / (static_cast<double>(X.cols()) * sigma * sigma);
}

}  // namespace qsc
