#pragma once

// Independent oracles shared by the unit and acceptance suites. Nothing here
// touches the autodiff engine.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "xhm/array.hpp"

namespace xhm::testing {

inline Array random_array(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Array a(shape);
  for (double& v : a.data) v = dist(rng);
  return a;
}

/// Central finite differences of a scalar function, one entry per input element.
inline std::vector<double> central_difference(const std::function<double(const Array&)>& f, const Array& x,
                                              double h = 1e-5) {
  std::vector<double> g(x.size());
  Array probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + h;
    const double up = f(probe);
    probe[i] = keep - h;
    const double down = f(probe);
    probe[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||b||, floor), Euclidean norms.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

inline double relative_gap(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max(std::abs(b), floor);
}

}  // namespace xhm::testing
