#include "mvh/fft.hpp"

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace mvh::fft {

namespace {

bool is_pow2(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

void radix2(std::span<cplx> a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles from the angle directly rather than by repeated multiplication.
        const cplx w = std::polar(1.0, ang * static_cast<double>(k));
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

void direct(std::span<cplx> a, bool inverse) {
  const std::size_t n = a.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += a[j] * std::polar(1.0, ang);
    }
    out[k] = acc;
  }
  std::copy(out.begin(), out.end(), a.begin());
}

}  // namespace

void transform(std::span<cplx> data, bool inverse) {
  if (data.size() <= 1) return;
  if (is_pow2(data.size()))
    radix2(data, inverse);
  else
    direct(data, inverse);
  if (inverse) {
    const double s = 1.0 / static_cast<double>(data.size());
    for (auto& v : data) v *= s;
  }
}

void transform2d(CMat& m, int side, bool inverse) {
  std::vector<cplx> line(static_cast<std::size_t>(side));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (int r = 0; r < side; ++r) {
      for (int q = 0; q < side; ++q) line[q] = m(r * side + q, c);
      transform(line, inverse);
      for (int q = 0; q < side; ++q) m(r * side + q, c) = line[q];
    }
    for (int q = 0; q < side; ++q) {
      for (int r = 0; r < side; ++r) line[r] = m(r * side + q, c);
      transform(line, inverse);
      for (int r = 0; r < side; ++r) m(r * side + q, c) = line[r];
    }
  }
}

}  // namespace mvh::fft
