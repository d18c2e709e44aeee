#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mvh/nn.hpp"
#include "mvh/rng.hpp"

namespace gradcheck {

using mvh::nn::Mat;

inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct Worst {
  double err = 0.0;
  std::string where;
  void update(double e, const std::string& w) {
    if (e > err) err = e, where = w;
  }
};

/// Central-difference check of analytic gradients. Entries of every parameter
/// (at most per_param of them, evenly strided) and of the input are perturbed.
template <class W, class Fwd, class Bwd>
Worst check(W w, Mat x, Fwd fwd, Bwd bwd, mvh::Rng& rng, int per_param = 12, double h = 1e-5) {
  const Mat probe = mvh::nn::randn(rng, x.rows(), fwd(w, x).cols(), 1.0);
  auto loss = [&](const W& ww, const Mat& xx) { return (fwd(ww, xx).array() * probe.array()).sum(); };
  W g = mvh::nn::zeros_like(w);
  const Mat dx = bwd(w, x, probe, g);

  std::vector<std::pair<std::string, Mat*>> params;
  std::vector<Mat*> grads;
  w.visit([&](auto name, Mat& m) { params.emplace_back(std::string(name), &m); });
  g.visit([&](auto, Mat& m) { grads.push_back(&m); });

  Worst worst;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Mat& m = *params[p].second;
    const Eigen::Index n = m.size();
    const Eigen::Index stride = std::max<Eigen::Index>(1, n / per_param);
    for (Eigen::Index i = 0; i < n; i += stride) {
      const double keep = m.data()[i];
      m.data()[i] = keep + h;
      const double lp = loss(w, x);
      m.data()[i] = keep - h;
      const double lm = loss(w, x);
      m.data()[i] = keep;
      worst.update(rel_err((lp - lm) / (2 * h), grads[p]->data()[i]), params[p].first + "[" + std::to_string(i) + "]");
    }
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double lp = loss(w, x);
    x.data()[i] = keep - h;
    const double lm = loss(w, x);
    x.data()[i] = keep;
    worst.update(rel_err((lp - lm) / (2 * h), dx.data()[i]), "x[" + std::to_string(i) + "]");
  }
  return worst;
}

}  // namespace gradcheck
