// SPDX-License-Identifier: Apache-2.0
//
// File-level entry points behind the command-line tool.
#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "acenet/nn/params.hpp"
#include "acenet/train.hpp"

namespace acenet {

inline constexpr const char* kCheckpointNetConfig = "net.cfg";
inline constexpr const char* kTrainLog = "train_log.csv";

/// Writes parameters plus the network configuration needed to rebuild them.
inline void save_checkpoint(const Network<float>& net, const std::filesystem::path& dir) {
  nn::save_params(net.params(), dir);
  std::ofstream os(dir / kCheckpointNetConfig, std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / kCheckpointNetConfig).string());
  os << format_network_config(net.config());
}

inline Network<float> load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("checkpoint directory not found: " + dir.string());
  Network<float> net(load_network_config(dir / kCheckpointNetConfig));
  nn::load_params(net.params(), dir);
  return net;
}

/// Trains on `<data_root>/train` and writes the checkpoint and per-iteration
/// log into `out_dir`.
inline std::vector<TrainLogEntry> train_from_files(const std::filesystem::path& net_cfg_path,
                                                   const std::filesystem::path& train_cfg_path,
                                                   const std::filesystem::path& data_root, const std::filesystem::path& out_dir) {
  const auto net_cfg = load_network_config(net_cfg_path);
  const auto train_cfg = load_train_config(train_cfg_path);
  const auto data = synth::load_split(data_root, "train");
  Network<float> net(net_cfg, train_cfg.seed);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::ofstream log(out_dir / kTrainLog, std::ios::trunc);
  if (!log) throw IoError("cannot write " + (out_dir / kTrainLog).string());
  auto history = train(net, train_cfg, data, &log);
  save_checkpoint(net, out_dir);
  return history;
}

inline SegmentationMetrics evaluate_from_files(const std::filesystem::path& ckpt, const std::filesystem::path& data_root,
                                               const std::string& split, const std::filesystem::path& report,
                                               bool oracle_inject = false) {
  auto net = load_checkpoint(ckpt);
  const auto data = synth::load_split(data_root, split);
  for (const auto& s : data)
    if (s.heatmaps.dim(0) != net.config().num_joints)
      throw ConfigError("dataset joint count does not match checkpoint network");
  auto metrics = evaluate(net, data, oracle_inject).metrics();
  write_metrics_csv(report, metrics, synth::part_names());
  return metrics;
}

struct AffinityDump {
  std::optional<Tensor<float>> channel;  // [N, C]
  std::optional<Tensor<float>> spatial;  // [HW, HW]
  LabelMap fine_argmax;
  LabelMap base_argmax;
};

/// Largest deviation from 1 of the row sums (axis 1) or column sums (axis 0)
/// of a matrix, accumulated in double.
inline double stochasticity_error(const Tensor<float>& m, int axis) {
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  double worst = 0.0;
  const std::size_t outer = axis == 1 ? rows : cols, len = axis == 1 ? cols : rows;
  for (std::size_t o = 0; o < outer; ++o) {
    double s = 0.0;
    for (std::size_t k = 0; k < len; ++k) s += axis == 1 ? m[o * cols + k] : m[k * cols + o];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

/// Runs one sample through the network and writes A.acet, G.acet (when the
/// modules are enabled) and argmax label maps into out_dir. A's rows and G's
/// columns are checked to sum to 1 within 1e-6 before anything is written.
inline AffinityDump inspect_affinity(const Network<float>& net, const synth::Sample& sample, const std::filesystem::path& out_dir) {
  if (!net.config().enable_lcm && !net.config().enable_gem)
    throw ConfigError("inspect-affinity: the checkpoint has neither affinity module enabled");
  NoGradGuard guard;
  auto batch = make_batch({&sample}, net.config().num_classes);
  auto out = net.forward(batch.images);
  AffinityDump dump;
  const std::size_t h = sample.labels.height, w = sample.labels.width;
  dump.fine_argmax = argmax_labels(out.fine_logits, h, w);
  dump.base_argmax = argmax_labels(out.base_logits, h, w);
  if (out.channel_affinity) {
    const auto& a = out.channel_affinity->matrix;
    dump.channel = reshape(a, Shape{a.dim(1), a.dim(2)});
    if (stochasticity_error(*dump.channel, 1) > 1e-6) throw IntegrityError("channel affinity rows do not sum to 1");
  }
  if (out.spatial_affinity) {
    const auto& g = out.spatial_affinity->matrix;
    dump.spatial = reshape(g, Shape{g.dim(1), g.dim(2)});
    if (stochasticity_error(*dump.spatial, 0) > 1e-6) throw IntegrityError("spatial affinity columns do not sum to 1");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  if (dump.channel) write_acet(out_dir / "A.acet", *dump.channel);
  if (dump.spatial) write_acet(out_dir / "G.acet", *dump.spatial);
  write_acet(out_dir / "fine_argmax.acet", synth::detail::label_tensor(dump.fine_argmax));
  write_acet(out_dir / "base_argmax.acet", synth::detail::label_tensor(dump.base_argmax));
  return dump;
}

}  // namespace acenet
