// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "acenet/acet_io.hpp"
#include "acenet/tensor.hpp"

namespace acenet::nn {

/// Named trainable tensors in registration order.
template <typename T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(t)});
    return entries_.back().second;
  }

  const Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].second;
  }
  Tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

inline constexpr const char* kParamManifest = "params.txt";

/// Writes one ACET file per parameter plus a `name extents...` manifest.
template <typename T>
void save_params(const ParamStore<T>& store, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / kParamManifest, std::ios::trunc);
  if (!manifest) throw IoError("cannot write " + (dir / kParamManifest).string());
  for (const auto& [name, t] : store) {
    write_acet(dir / (name + ".acet"), t.template cast<float>());
    manifest << name;
    for (std::size_t d = 0; d < t.rank(); ++d) manifest << ' ' << t.dim(d);
    manifest << '\n';
  }
  if (!manifest) throw IoError("write failed: " + (dir / kParamManifest).string());
}

/// Overwrites every parameter in `store` from a checkpoint directory. The
/// checkpoint must list exactly the same names and extents.
template <typename T>
void load_params(ParamStore<T>& store, const std::filesystem::path& dir) {
  std::ifstream manifest(dir / kParamManifest);
  if (!manifest) throw IoError("cannot open " + (dir / kParamManifest).string());
  std::string line;
  std::size_t seen = 0;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string name;
    is >> name;
    std::vector<std::size_t> dims;
    for (std::size_t d; is >> d;) dims.push_back(d);
    if (!store.contains(name)) throw ConfigError("checkpoint parameter not in network: " + name);
    auto& t = store.get(name);
    if (!(Shape(dims) == t.shape()))
      throw ConfigError("checkpoint shape " + Shape(dims).str() + " for " + name + " does not match network " + t.shape().str());
    auto loaded = read_acet(dir / (name + ".acet"));
    if (!(loaded.shape() == t.shape())) throw ConfigError("ACET file shape disagrees with manifest for " + name);
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(loaded[i]);
    ++seen;
  }
  if (seen != store.size())
    throw ConfigError("checkpoint lists " + std::to_string(seen) + " parameters, network has " + std::to_string(store.size()));
}

}  // namespace acenet::nn
