// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks for every differentiable operation, run in double
// precision over many random seeds.
#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "acenet/affinity.hpp"
#include "acenet/gradcheck.hpp"
#include "acenet/losses.hpp"
#include "acenet/nn/blocks.hpp"

namespace acenet::gradcheck {

struct CaseResult {
  std::string module;
  std::string name;
  std::size_t seeds = 0;
  double max_error = 0.0;
};

using Tensors = std::vector<Tensor<double>>;

class Random {
 public:
  explicit Random(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) { return lo + (hi - lo) * static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  Tensor<double> tensor(Shape s, double scale = 1.0) {
    std::vector<double> v(s.numel());
    for (auto& x : v) x = uniform(-scale, scale);
    return Tensor<double>(s, std::move(v));
  }

 private:
  std::mt19937_64 engine_;
};

/// Weighted sum with fixed coefficients, so the scalar depends on every output element.
inline Tensor<double> project(const Tensor<double>& y, const Tensor<double>& coeffs) { return sum(mul(y, coeffs)); }

struct Case {
  std::string module;
  std::string name;
  // Builds inputs for one seed and returns the scalar objective over them.
  std::function<std::pair<Tensors, ScalarFn64>(Random&)> make;
};

inline nn::ConvParams<double> conv_from(const Tensors& in, std::size_t w, std::size_t b, std::size_t stride, std::size_t ph,
                                        std::size_t pw, std::size_t dil = 1) {
  nn::ConvParams<double> p;
  p.weight = in[w];
  p.bias = in[b];
  p.stride = stride;
  p.pad_h = ph;
  p.pad_w = pw;
  p.dilation = dil;
  return p;
}

inline LabelMap random_labels(Random& r, std::size_t n, std::size_t h, std::size_t w, std::size_t k) {
  LabelMap m(n, h, w, k);
  for (auto& v : m.labels) v = static_cast<int>(r.index(k));
  return m;
}

inline std::vector<Case> tensor_cases() {
  std::vector<Case> cs;
  cs.push_back({"tensor", "matmul", [](Random& r) {
                  auto a = r.tensor({3, 4}), b = r.tensor({4, 2}), c = r.tensor({3, 2});
                  return std::pair{Tensors{a, b}, ScalarFn64([c](const Tensors& x) { return project(matmul(x[0], x[1]), c); })};
                }});
  cs.push_back({"tensor", "matmul_batched", [](Random& r) {
                  auto a = r.tensor({2, 3, 4}), b = r.tensor({2, 4, 5}), c = r.tensor({2, 3, 5});
                  return std::pair{Tensors{a, b}, ScalarFn64([c](const Tensors& x) { return project(matmul(x[0], x[1]), c); })};
                }});
  for (std::size_t axis = 0; axis < 3; ++axis)
    cs.push_back({"tensor", "softmax_along_" + std::to_string(axis), [axis](Random& r) {
                    auto a = r.tensor({3, 4, 5}, 2.0), c = r.tensor({3, 4, 5});
                    return std::pair{Tensors{a}, ScalarFn64([c, axis](const Tensors& x) { return project(softmax_along(x[0], axis), c); })};
                  }});
  cs.push_back({"tensor", "permute_reshape", [](Random& r) {
                  auto a = r.tensor({1, 2, 3, 4}), c = r.tensor({4, 6});
                  return std::pair{Tensors{a}, ScalarFn64([c](const Tensors& x) {
                                     return project(reshape(permute(x[0], {0, 3, 1, 2}), Shape{4, 6}), c);
                                   })};
                }});
  cs.push_back({"tensor", "add_mul_broadcast", [](Random& r) {
                  auto a = r.tensor({2, 3, 4, 4}), ch = r.tensor({3}), sc = r.tensor({2, 3}), c = r.tensor({2, 3, 4, 4});
                  return std::pair{Tensors{a, ch, sc}, ScalarFn64([c](const Tensors& x) {
                                     return project(mul(add(x[0], x[1]), x[2]), c);
                                   })};
                }});
  cs.push_back({"tensor", "sub_scale_relu", [](Random& r) {
                  auto a = r.tensor({1, 8, 6, 6}), b = r.tensor({1, 8, 6, 6}), c = r.tensor({1, 8, 6, 6});
                  return std::pair{Tensors{a, b}, ScalarFn64([c](const Tensors& x) {
                                     return project(relu(scale(sub(x[0], x[1]), 1.5)), c);
                                   })};
                }});
  cs.push_back({"tensor", "concat_slice", [](Random& r) {
                  auto a = r.tensor({1, 2, 3, 3}), b = r.tensor({1, 3, 3, 3}), c = r.tensor({1, 4, 3, 3});
                  return std::pair{Tensors{a, b}, ScalarFn64([c](const Tensors& x) {
                                     return project(slice_channels(concat_channels(x), 1, 5), c);
                                   })};
                }});
  cs.push_back({"tensor", "mean_along", [](Random& r) {
                  auto a = r.tensor({2, 3, 4}), c = r.tensor({2, 4});
                  return std::pair{Tensors{a}, ScalarFn64([c](const Tensors& x) { return project(mean_along(x[0], 1), c); })};
                }});
  return cs;
}

inline std::vector<Case> nnops_cases() {
  std::vector<Case> cs;
  cs.push_back({"nnops", "conv2d_3x3", [](Random& r) {
                  auto x = r.tensor({1, 2, 4, 4}), w = r.tensor({3, 2, 3, 3}, 0.5), b = r.tensor({3}), c = r.tensor({1, 3, 4, 4});
                  return std::pair{Tensors{x, w, b}, ScalarFn64([c](const Tensors& in) {
                                     return project(nn::conv2d(in[0], conv_from(in, 1, 2, 1, 1, 1)), c);
                                   })};
                }});
  cs.push_back({"nnops", "conv2d_strided_dilated", [](Random& r) {
                  auto x = r.tensor({1, 3, 6, 6}), w = r.tensor({2, 3, 3, 3}, 0.5), b = r.tensor({2}), c = r.tensor({1, 2, 3, 3});
                  return std::pair{Tensors{x, w, b}, ScalarFn64([c](const Tensors& in) {
                                     return project(nn::conv2d(in[0], conv_from(in, 1, 2, 2, 2, 2, 2)), c);
                                   })};
                }});
  cs.push_back({"nnops", "conv2d_1x1", [](Random& r) {
                  auto x = r.tensor({2, 4, 3, 3}), w = r.tensor({5, 4, 1, 1}), b = r.tensor({5}), c = r.tensor({2, 5, 3, 3});
                  return std::pair{Tensors{x, w, b}, ScalarFn64([c](const Tensors& in) {
                                     return project(nn::conv2d(in[0], conv_from(in, 1, 2, 1, 0, 0)), c);
                                   })};
                }});
  cs.push_back({"nnops", "gc_block", [](Random& r) {
                  const std::size_t cin = 4, n = 3, k = 3;
                  Tensors in{r.tensor({1, cin, 5, 5}),  r.tensor({n, cin, 1, k}, 0.5), r.tensor({n}), r.tensor({n, n, k, 1}, 0.5),
                             r.tensor({n}),             r.tensor({n, cin, k, 1}, 0.5), r.tensor({n}), r.tensor({n, n, 1, k}, 0.5),
                             r.tensor({n})};
                  auto c = r.tensor({1, n, 5, 5});
                  return std::pair{in, ScalarFn64([c, k](const Tensors& x) {
                                     nn::GCParams<double> p;
                                     p.k = k;
                                     p.a_row = conv_from(x, 1, 2, 1, 0, k / 2);
                                     p.a_col = conv_from(x, 3, 4, 1, k / 2, 0);
                                     p.b_col = conv_from(x, 5, 6, 1, k / 2, 0);
                                     p.b_row = conv_from(x, 7, 8, 1, 0, k / 2);
                                     return project(nn::gc_block(x[0], p), c);
                                   })};
                }});
  cs.push_back({"nnops", "pyramid_pooling", [](Random& r) {
                  Tensors in{r.tensor({1, 4, 6, 6}), r.tensor({2, 4, 1, 1}), r.tensor({2}), r.tensor({2, 4, 1, 1}), r.tensor({2})};
                  auto c = r.tensor({1, 8, 6, 6});
                  return std::pair{in, ScalarFn64([c](const Tensors& x) {
                                     nn::PyramidPoolingParams<double> p;
                                     p.bins = {1, 3};
                                     p.branches = {conv_from(x, 1, 2, 1, 0, 0), conv_from(x, 3, 4, 1, 0, 0)};
                                     return project(nn::pyramid_pooling(x[0], p), c);
                                   })};
                }});
  cs.push_back({"nnops", "channel_shuffle", [](Random& r) {
                  auto a = r.tensor({1, 8, 3, 3}), c = r.tensor({1, 8, 3, 3});
                  return std::pair{Tensors{a}, ScalarFn64([c](const Tensors& x) { return project(nn::channel_shuffle(x[0], 4), c); })};
                }});
  cs.push_back({"nnops", "upsample_bilinear", [](Random& r) {
                  auto a = r.tensor({1, 2, 3, 4}), c = r.tensor({1, 2, 7, 5});
                  return std::pair{Tensors{a}, ScalarFn64([c](const Tensors& x) { return project(nn::upsample(x[0], 7, 5), c); })};
                }});
  cs.push_back({"nnops", "upsample_nearest", [](Random& r) {
                  auto a = r.tensor({1, 2, 3, 3}), c = r.tensor({1, 2, 6, 6});
                  return std::pair{Tensors{a}, ScalarFn64([c](const Tensors& x) {
                                     return project(nn::upsample(x[0], 6, 6, nn::UpsampleMode::kNearest), c);
                                   })};
                }});
  cs.push_back({"nnops", "adaptive_avg_pool", [](Random& r) {
                  auto a = r.tensor({1, 3, 6, 6}), c = r.tensor({1, 3, 4, 4});
                  return std::pair{Tensors{a}, ScalarFn64([c](const Tensors& x) { return project(nn::adaptive_avg_pool2d(x[0], 4, 4), c); })};
                }});
  return cs;
}

// Inputs: S, P, then GC (a_row w,b, a_col w,b, b_col w,b, b_row w,b), encoder w,b.
inline LcmParams<double> lcm_from(const Tensors& x, std::size_t k) {
  LcmParams<double> p;
  p.gc.k = k;
  p.gc.a_row = conv_from(x, 2, 3, 1, 0, k / 2);
  p.gc.a_col = conv_from(x, 4, 5, 1, k / 2, 0);
  p.gc.b_col = conv_from(x, 6, 7, 1, k / 2, 0);
  p.gc.b_row = conv_from(x, 8, 9, 1, 0, k / 2);
  p.encoder = conv_from(x, 10, 11, 1, 0, 0);
  return p;
}

inline Tensors random_lcm_inputs(Random& r, std::size_t c, std::size_t n, std::size_t k, std::size_t h, std::size_t w) {
  return {r.tensor({1, c, h, w}), r.tensor({1, c, h, w}),
          r.tensor({n, c, 1, k}, 0.5), r.tensor({n}, 0.2), r.tensor({n, n, k, 1}, 0.5), r.tensor({n}, 0.2),
          r.tensor({n, c, k, 1}, 0.5), r.tensor({n}, 0.2), r.tensor({n, n, 1, k}, 0.5), r.tensor({n}, 0.2),
          r.tensor({c, c, 1, 1}, 0.5), r.tensor({c}, 0.2)};
}

// Inputs: P, E, parsing enc w,b, boundary enc w,b, value enc w,b, fuse w,b.
inline GemParams<double> gem_from(const Tensors& x) {
  return {conv_from(x, 2, 3, 1, 0, 0), conv_from(x, 4, 5, 1, 0, 0), conv_from(x, 6, 7, 1, 0, 0), conv_from(x, 8, 9, 1, 0, 0)};
}

inline Tensors random_gem_inputs(Random& r, std::size_t c, std::size_t d, std::size_t h, std::size_t w) {
  return {r.tensor({1, c, h, w}), r.tensor({1, c, h, w}),
          r.tensor({d, c, 1, 1}, 0.5), r.tensor({d}, 0.2), r.tensor({d, c, 1, 1}, 0.5), r.tensor({d}, 0.2),
          r.tensor({d, c, 1, 1}, 0.5), r.tensor({d}, 0.2), r.tensor({c, c + d, 1, 1}, 0.5), r.tensor({c}, 0.2)};
}

inline std::vector<Case> lcm_cases() {
  std::vector<Case> cs;
  cs.push_back({"lcm", "lcm_composite", [](Random& r) {
                  auto in = random_lcm_inputs(r, 4, 3, 3, 3, 3);
                  auto c = r.tensor({1, 4, 3, 3});
                  return std::pair{in, ScalarFn64([c](const Tensors& x) { return project(lcm_forward(x[0], x[1], lcm_from(x, 3)), c); })};
                }});
  cs.push_back({"lcm", "lcm_affinity", [](Random& r) {
                  auto in = random_lcm_inputs(r, 4, 3, 3, 3, 3);
                  auto c = r.tensor({1, 3, 4});
                  return std::pair{in, ScalarFn64([c](const Tensors& x) {
                                     return project(lcm_affinity(x[0], x[1], lcm_from(x, 3)).matrix, c);
                                   })};
                }});
  return cs;
}

inline std::vector<Case> gem_cases() {
  std::vector<Case> cs;
  cs.push_back({"gem", "gem_composite", [](Random& r) {
                  auto in = random_gem_inputs(r, 4, 3, 3, 3);
                  auto c = r.tensor({1, 4, 3, 3});
                  return std::pair{in, ScalarFn64([c](const Tensors& x) { return project(gem_forward(x[0], x[1], gem_from(x)), c); })};
                }});
  cs.push_back({"gem", "gem_affinity", [](Random& r) {
                  auto in = random_gem_inputs(r, 4, 3, 3, 3);
                  auto c = r.tensor({1, 9, 9});
                  return std::pair{in, ScalarFn64([c](const Tensors& x) {
                                     return project(gem_affinity(x[0], x[1], gem_from(x)).matrix, c);
                                   })};
                }});
  cs.push_back({"gem", "lcm_gem_composite", [](Random& r) {
                  // LCM and GEM on shared parsing features, concatenated as in the fusion head.
                  auto l = random_lcm_inputs(r, 4, 3, 3, 3, 3);
                  auto g = random_gem_inputs(r, 4, 3, 3, 3);
                  Tensors in = l;
                  in.push_back(g[1]);
                  for (std::size_t i = 2; i < g.size(); ++i) in.push_back(g[i]);
                  auto c = r.tensor({1, 8, 3, 3});
                  return std::pair{in, ScalarFn64([c](const Tensors& x) {
                                     Tensors gx{x[1], x[12]};
                                     for (std::size_t i = 13; i < x.size(); ++i) gx.push_back(x[i]);
                                     auto lout = lcm_forward(x[0], x[1], lcm_from(x, 3));
                                     auto gout = gem_forward(x[1], x[12], gem_from(gx));
                                     return project(concat_channels<double>({lout, gout}), c);
                                   })};
                }});
  return cs;
}

inline std::vector<Case> loss_cases() {
  std::vector<Case> cs;
  cs.push_back({"losses", "cross_entropy", [](Random& r) {
                  auto logits = r.tensor({1, 4, 3, 3}, 2.0);
                  auto t = random_labels(r, 1, 3, 3, 4);
                  t.labels[4] = kIgnoreIndex;
                  return std::pair{Tensors{logits}, ScalarFn64([t](const Tensors& x) { return cross_entropy(x[0], t); })};
                }});
  cs.push_back({"losses", "ohem_cross_entropy", [](Random& r) {
                  auto logits = r.tensor({1, 4, 3, 3}, 2.0);
                  auto t = random_labels(r, 1, 3, 3, 4);
                  LossWeights w;
                  w.ohem_keep_fraction = 0.4;
                  w.ohem_min_kept = 2;
                  return std::pair{Tensors{logits}, ScalarFn64([t, w](const Tensors& x) { return ohem_cross_entropy(x[0], t, w); })};
                }});
  cs.push_back({"losses", "boundary_ce", [](Random& r) {
                  auto logits = r.tensor({1, 2, 3, 3}, 2.0);
                  auto t = random_labels(r, 1, 3, 3, 2);
                  t.labels[0] = 1;
                  t.labels[1] = 0;
                  return std::pair{Tensors{logits}, ScalarFn64([t](const Tensors& x) { return boundary_ce(x[0], t, LossWeights{}); })};
                }});
  cs.push_back({"losses", "skeleton_mse", [](Random& r) {
                  auto pred = r.tensor({1, 4, 3, 3}), gt = r.tensor({1, 4, 3, 3});
                  return std::pair{Tensors{pred}, ScalarFn64([gt](const Tensors& x) { return skeleton_mse(x[0], gt); })};
                }});
  cs.push_back({"losses", "total_loss", [](Random& r) {
                  Tensors in{r.tensor({1, 4, 3, 3}, 2.0), r.tensor({1, 4, 3, 3}, 2.0), r.tensor({1, 2, 3, 3}, 2.0),
                             r.tensor({1, 4, 3, 3})};
                  LossTargets<double> tg{random_labels(r, 1, 3, 3, 4), random_labels(r, 1, 3, 3, 2), r.tensor({1, 4, 3, 3})};
                  tg.boundary.labels[0] = 1;
                  LossWeights w;
                  w.alpha = 0.7;
                  w.beta = 2.0;
                  w.ohem_min_kept = 3;
                  return std::pair{in, ScalarFn64([tg, w](const Tensors& x) {
                                     LossInputs<double> li{x[0], x[1], x[2], x[3]};
                                     return total_loss(li, tg, w).total;
                                   })};
                }});
  return cs;
}

/// Cases for one of: all, tensor, nnops, lcm, gem, losses.
inline std::vector<Case> cases_for(const std::string& module) {
  std::vector<Case> out;
  auto append = [&](std::vector<Case> cs) { out.insert(out.end(), cs.begin(), cs.end()); };
  if (module == "all" || module == "tensor") append(tensor_cases());
  if (module == "all" || module == "nnops") append(nnops_cases());
  if (module == "all" || module == "lcm") append(lcm_cases());
  if (module == "all" || module == "gem") append(gem_cases());
  if (module == "all" || module == "losses") append(loss_cases());
  if (out.empty()) throw ConfigError("unknown gradcheck module '" + module + "'");
  return out;
}

inline std::vector<CaseResult> run(const std::string& module, std::size_t seeds = 20, double h = 1e-5) {
  std::vector<CaseResult> results;
  for (const auto& c : cases_for(module)) {
    CaseResult res{c.module, c.name, seeds, 0.0};
    for (std::size_t s = 0; s < seeds; ++s) {
      Random r(0x5eed0000ULL + s);
      auto [inputs, f] = c.make(r);
      res.max_error = std::max(res.max_error, grad_check(f, inputs, h));
    }
    results.push_back(res);
  }
  return results;
}

}  // namespace acenet::gradcheck
