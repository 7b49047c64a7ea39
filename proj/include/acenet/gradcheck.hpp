// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "acenet/tensor.hpp"

namespace acenet {

using ScalarFn64 = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Compares reverse-mode gradients of a scalar function against central
/// differences, both in double precision. Returns
/// max |analytic - numeric| / max(1, |numeric|) over every input coordinate.
inline double grad_check(const ScalarFn64& f, const std::vector<Tensor<double>>& inputs, double h = 1e-5) {
  std::vector<Tensor<double>> leaves;
  leaves.reserve(inputs.size());
  for (const auto& in : inputs) leaves.push_back(Tensor<double>(in.shape(), {in.data().begin(), in.data().end()}, true));
  {
    auto loss = f(leaves);
    backward(loss);
  }

  double worst = 0.0;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    std::vector<double> analytic(leaves[k].numel(), 0.0);
    if (leaves[k].has_grad()) std::copy(leaves[k].grad().begin(), leaves[k].grad().end(), analytic.begin());
    std::vector<Tensor<double>> probe;
    for (const auto& l : leaves) probe.push_back(l.detach());
    auto x = probe[k].mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + h;
      const double up = f(probe).item();
      x[i] = orig - h;
      const double down = f(probe).item();
      x[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

inline double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, const Tensor<double>& x,
                         double h = 1e-5) {
  return grad_check([&](const std::vector<Tensor<double>>& in) { return f(in[0]); }, std::vector<Tensor<double>>{x}, h);
}

}  // namespace acenet
