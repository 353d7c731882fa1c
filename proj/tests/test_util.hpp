#pragma once

#include <random>

#include "simtrack/liealg.hpp"

namespace simtrack::testing {

inline CMatrix random_complex(std::mt19937& rng, int rows, int cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  CMatrix x(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) x(r, c) = Complex(n(rng), n(rng));
  return x;
}

inline CMatrix random_skew(std::mt19937& rng, int m, double scale = 1.0) {
  const CMatrix x = random_complex(rng, m, m);
  return scale * 0.5 * (x - x.adjoint());
}

inline CMatrix random_traceless_skew(std::mt19937& rng, int m, double scale = 1.0) {
  return traceless(random_skew(rng, m, scale));
}

inline CMatrix random_unitary(std::mt19937& rng, int m) {
  Eigen::HouseholderQR<CMatrix> qr(random_complex(rng, m, m));
  return qr.householderQ() * CMatrix::Identity(m, m);
}

// Truncated Taylor series with scaling and squaring; independent of the
// eigendecomposition route used by the library.
inline CMatrix taylor_expm(const CMatrix& h) {
  int squarings = 0;
  double norm = h.norm();
  while (norm > 0.25) {
    norm /= 2.0;
    ++squarings;
  }
  const CMatrix x = h / std::pow(2.0, squarings);
  CMatrix term = CMatrix::Identity(h.rows(), h.cols());
  CMatrix sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * x / static_cast<double>(k);
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

inline GalerkinModel single_block_model(const std::vector<double>& spectrum, const CMatrix& b, double delta = 1.0) {
  GalerkinModel g;
  g.order = static_cast<int>(spectrum.size());
  g.delta = delta;
  g.spectra = {spectrum};
  g.blocks = {{0, 0}};
  g.couplings = {b};
  return g;
}

}  // namespace simtrack::testing
