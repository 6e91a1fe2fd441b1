#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace xhm {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape);

/// Dense row-major array of doubles. Images use channel-first layout
/// [channels, rows, cols].
struct Array {
  Shape shape;
  std::vector<double> data;

  Array() = default;
  Array(Shape s, std::vector<double> d);
  explicit Array(Shape s, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  friend bool operator==(const Array&, const Array&) = default;
};

/// Throws Errc::non_finite if any entry is NaN or infinite.
void require_finite(const std::vector<double>& data, const std::string& what);

}  // namespace xhm
