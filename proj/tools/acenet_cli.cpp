// SPDX-License-Identifier: Apache-2.0
//
// acenet_cli: synthetic data generation, gradient checks, training,
// evaluation and affinity inspection.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

#include "acenet/gradcheck_suite.hpp"
#include "acenet/pipeline.hpp"

namespace {

constexpr int kExitContract = 1;
constexpr int kExitIo = 2;
constexpr double kGradTolerance = 1e-4;

int run_gradcheck(const std::string& module) {
  bool ok = true;
  for (const auto& r : acenet::gradcheck::run(module)) {
    const bool pass = r.max_error <= kGradTolerance;
    ok = ok && pass;
    std::printf("%-7s %-24s seeds=%zu max_err=%.3e %s\n", r.module.c_str(), r.name.c_str(), r.seeds, r.max_error,
                pass ? "PASS" : "FAIL");
  }
  return ok ? 0 : kExitContract;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Affinity-module human parsing at desk scale"};
  app.require_subcommand(1);

  std::string root, split = "train", module = "all", net_cfg, train_cfg, out, ckpt, report, sample;
  std::size_t count = 0;
  std::uint64_t seed_base = 0;
  bool oracle_inject = false;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic split to disk");
  gen->add_option("--root", root, "Dataset root")->required();
  gen->add_option("--split", split, "Split name")->required();
  gen->add_option("--count", count, "Number of samples")->required();
  gen->add_option("--seed-base", seed_base, "First sample seed")->required();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad->add_option("--module", module, "all|tensor|nnops|lcm|gem|losses");

  auto* tr = app.add_subcommand("train", "Train a network");
  tr->add_option("--net", net_cfg, "Network config file")->required();
  tr->add_option("--train", train_cfg, "Training config file")->required();
  tr->add_option("--data", root, "Dataset root")->required();
  tr->add_option("--out", out, "Checkpoint directory")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  ev->add_option("--data", root, "Dataset root")->required();
  ev->add_option("--split", split, "Split name")->required();
  ev->add_option("--report", report, "Metrics CSV path")->required();
  ev->add_flag("--oracle-inject", oracle_inject, "Score the ground truth against itself");

  auto* ins = app.add_subcommand("inspect-affinity", "Dump A and G for one sample");
  ins->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  ins->add_option("--sample", sample, "Sample directory")->required();
  ins->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitContract;
  }

  try {
    if (gen->parsed()) {
      acenet::synth::generate_split(root, split, count, seed_base);
      std::cout << "wrote " << count << " samples to " << root << '/' << split << '\n';
    } else if (grad->parsed()) {
      return run_gradcheck(module);
    } else if (tr->parsed()) {
      auto history = acenet::train_from_files(net_cfg, train_cfg, root, out);
      std::printf("trained %zu iterations, final loss %.9g\n", history.size(), history.back().total);
    } else if (ev->parsed()) {
      auto m = acenet::evaluate_from_files(ckpt, root, split, report, oracle_inject);
      std::printf("mIoU %.6f pixel_acc %.6f mean_acc %.6f\n", m.mean_iou, m.pixel_acc, m.mean_acc);
    } else if (ins->parsed()) {
      auto net = acenet::load_checkpoint(ckpt);
      auto dump = acenet::inspect_affinity(net, acenet::synth::load_sample(sample), out);
      if (dump.channel) std::printf("A %s row-sum error %.3e\n", dump.channel->shape().str().c_str(),
                                    acenet::stochasticity_error(*dump.channel, 1));
      if (dump.spatial) std::printf("G %s column-sum error %.3e\n", dump.spatial->shape().str().c_str(),
                                    acenet::stochasticity_error(*dump.spatial, 0));
    }
  } catch (const acenet::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const acenet::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitContract;
  }
  return 0;
}
