// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "acenet/losses.hpp"

namespace acenet {

/// Architecture of the parsing network. Defaults follow the full-size module
/// widths (N = D = 64); `toy()` is the desk-scale preset.
struct NetworkConfig {
  std::vector<std::size_t> stage_widths{16, 32, 48, 64};
  std::vector<std::size_t> stage_strides{1, 2, 2, 2};
  std::size_t parsing_channels = 32;  // C
  std::size_t compression_dim = 64;   // N
  std::size_t encoding_dim = 64;      // D
  std::size_t gc_kernel = 7;
  std::vector<std::size_t> ppm_bins{1, 2, 3, 6};
  std::size_t num_classes = 7;
  std::size_t num_joints = 6;
  bool enable_lcm = true;
  bool enable_gem = true;
  std::size_t skeleton_width = 16;
  std::size_t boundary_reduce = 8;
  std::size_t boundary_width = 16;
  std::size_t shuffle_groups = 4;

  static NetworkConfig toy() {
    NetworkConfig c;
    c.compression_dim = 8;
    c.encoding_dim = 8;
    return c;
  }

  std::size_t skeleton_concat_width() const {
    std::size_t s = 0;
    for (auto w : stage_widths) s += w;
    return s;
  }

  void validate() const {
    if (stage_widths.size() != 4 || stage_strides.size() != 4) throw ConfigError("network needs exactly 4 backbone stages");
    for (auto w : stage_widths)
      if (w == 0) throw ConfigError("backbone stage width must be positive");
    for (auto s : stage_strides)
      if (s != 1 && s != 2) throw ConfigError("backbone stage strides must be 1 or 2");
    if (parsing_channels == 0 || compression_dim == 0 || encoding_dim == 0 || num_classes < 2 || num_joints == 0 ||
        skeleton_width == 0 || boundary_reduce == 0 || boundary_width == 0)
      throw ConfigError("network widths must be positive and num_classes >= 2");
    if (gc_kernel % 2 == 0) throw ConfigError("gc_kernel must be odd");
    if (ppm_bins.empty() || stage_widths[3] / ppm_bins.size() == 0) throw ConfigError("ppm_bins must be non-empty and fit the last stage width");
    if (shuffle_groups == 0 || skeleton_concat_width() % shuffle_groups != 0)
      throw ConfigError("shuffle_groups must divide the summed stage widths");
  }
};

/// Optimizer and schedule. Defaults are the full-scale recipe; `toy()` is the
/// desk-scale budget.
struct TrainConfig {
  double base_lr = 0.007;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t batch_size = 40;
  std::size_t total_iters = 600;
  std::size_t warmup_iters = 50;
  double poly_power = 0.9;
  std::uint64_t seed = 0;
  bool flip = true;
  LossWeights loss;

  static TrainConfig toy() {
    TrainConfig c;
    c.base_lr = 0.05;
    c.batch_size = 8;
    c.total_iters = 600;
    c.warmup_iters = 50;
    return c;
  }

  void validate() const {
    if (!(base_lr >= 0.0)) throw ConfigError("base_lr must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (batch_size == 0 || total_iters == 0) throw ConfigError("batch_size and total_iters must be positive");
    if (warmup_iters >= total_iters) throw ConfigError("warmup_iters must be < total_iters");
    if (!(poly_power > 0.0)) throw ConfigError("poly_power must be > 0");
    loss.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::map<std::string, std::string> parse_key_values(std::istream& is, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected `key = value`");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) out.push_back(to_size(key, trim(item)));
  return out;
}

inline std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

using Setter = std::function<void(const std::string&)>;

inline void apply(const std::map<std::string, std::string>& kv, const std::map<std::string, Setter>& setters,
                  const std::string& origin) {
  for (const auto& [key, value] : kv) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(origin + ": unknown key '" + key + "'");
    it->second(value);
  }
}

}  // namespace detail

inline NetworkConfig parse_network_config(std::istream& is, const std::string& origin = "<network config>",
                                          NetworkConfig cfg = NetworkConfig::toy()) {
  using namespace detail;
  const std::map<std::string, Setter> setters{
      {"stage_widths", [&](const std::string& v) { cfg.stage_widths = to_sizes("stage_widths", v); }},
      {"stage_strides", [&](const std::string& v) { cfg.stage_strides = to_sizes("stage_strides", v); }},
      {"parsing_channels", [&](const std::string& v) { cfg.parsing_channels = to_size("parsing_channels", v); }},
      {"compression_dim", [&](const std::string& v) { cfg.compression_dim = to_size("compression_dim", v); }},
      {"encoding_dim", [&](const std::string& v) { cfg.encoding_dim = to_size("encoding_dim", v); }},
      {"gc_kernel", [&](const std::string& v) { cfg.gc_kernel = to_size("gc_kernel", v); }},
      {"ppm_bins", [&](const std::string& v) { cfg.ppm_bins = to_sizes("ppm_bins", v); }},
      {"num_classes", [&](const std::string& v) { cfg.num_classes = to_size("num_classes", v); }},
      {"num_joints", [&](const std::string& v) { cfg.num_joints = to_size("num_joints", v); }},
      {"enable_lcm", [&](const std::string& v) { cfg.enable_lcm = to_bool("enable_lcm", v); }},
      {"enable_gem", [&](const std::string& v) { cfg.enable_gem = to_bool("enable_gem", v); }},
      {"skeleton_width", [&](const std::string& v) { cfg.skeleton_width = to_size("skeleton_width", v); }},
      {"boundary_reduce", [&](const std::string& v) { cfg.boundary_reduce = to_size("boundary_reduce", v); }},
      {"boundary_width", [&](const std::string& v) { cfg.boundary_width = to_size("boundary_width", v); }},
      {"shuffle_groups", [&](const std::string& v) { cfg.shuffle_groups = to_size("shuffle_groups", v); }},
  };
  apply(parse_key_values(is, origin), setters, origin);
  cfg.validate();
  return cfg;
}

inline TrainConfig parse_train_config(std::istream& is, const std::string& origin = "<train config>",
                                      TrainConfig cfg = TrainConfig::toy()) {
  using namespace detail;
  const std::map<std::string, Setter> setters{
      {"base_lr", [&](const std::string& v) { cfg.base_lr = to_double("base_lr", v); }},
      {"momentum", [&](const std::string& v) { cfg.momentum = to_double("momentum", v); }},
      {"weight_decay", [&](const std::string& v) { cfg.weight_decay = to_double("weight_decay", v); }},
      {"batch_size", [&](const std::string& v) { cfg.batch_size = to_size("batch_size", v); }},
      {"total_iters", [&](const std::string& v) { cfg.total_iters = to_size("total_iters", v); }},
      {"warmup_iters", [&](const std::string& v) { cfg.warmup_iters = to_size("warmup_iters", v); }},
      {"poly_power", [&](const std::string& v) { cfg.poly_power = to_double("poly_power", v); }},
      {"seed", [&](const std::string& v) { cfg.seed = to_size("seed", v); }},
      {"flip", [&](const std::string& v) { cfg.flip = to_bool("flip", v); }},
      {"alpha", [&](const std::string& v) { cfg.loss.alpha = to_double("alpha", v); }},
      {"beta", [&](const std::string& v) { cfg.loss.beta = to_double("beta", v); }},
      {"ohem_keep_fraction", [&](const std::string& v) { cfg.loss.ohem_keep_fraction = to_double("ohem_keep_fraction", v); }},
      {"ohem_min_kept", [&](const std::string& v) { cfg.loss.ohem_min_kept = to_size("ohem_min_kept", v); }},
      {"boundary_weight_mode",
       [&](const std::string& v) {
         if (v == "inverse-frequency")
           cfg.loss.boundary_weight_mode = BoundaryWeightMode::kInverseFrequency;
         else if (v == "fixed")
           cfg.loss.boundary_weight_mode = BoundaryWeightMode::kFixed;
         else
           throw ConfigError("boundary_weight_mode: expected inverse-frequency or fixed, got '" + v + "'");
       }},
      {"boundary_pos_weight", [&](const std::string& v) { cfg.loss.boundary_pos_weight = to_double("boundary_pos_weight", v); }},
  };
  apply(parse_key_values(is, origin), setters, origin);
  cfg.validate();
  return cfg;
}

inline std::string format_network_config(const NetworkConfig& c) {
  std::ostringstream os;
  os << "stage_widths = " << detail::join(c.stage_widths) << '\n'
     << "stage_strides = " << detail::join(c.stage_strides) << '\n'
     << "parsing_channels = " << c.parsing_channels << '\n'
     << "compression_dim = " << c.compression_dim << '\n'
     << "encoding_dim = " << c.encoding_dim << '\n'
     << "gc_kernel = " << c.gc_kernel << '\n'
     << "ppm_bins = " << detail::join(c.ppm_bins) << '\n'
     << "num_classes = " << c.num_classes << '\n'
     << "num_joints = " << c.num_joints << '\n'
     << "enable_lcm = " << (c.enable_lcm ? "true" : "false") << '\n'
     << "enable_gem = " << (c.enable_gem ? "true" : "false") << '\n'
     << "skeleton_width = " << c.skeleton_width << '\n'
     << "boundary_reduce = " << c.boundary_reduce << '\n'
     << "boundary_width = " << c.boundary_width << '\n'
     << "shuffle_groups = " << c.shuffle_groups << '\n';
  return os.str();
}

inline NetworkConfig load_network_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return parse_network_config(is, path.string());
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return parse_train_config(is, path.string());
}

}  // namespace acenet
