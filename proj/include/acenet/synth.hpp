// SPDX-License-Identifier: Apache-2.0
//
// Deterministic "stick figure" human-parsing data: an articulated figure of
// filled capsules and boxes with part labels, joints, boundaries, and
// Gaussian joint heatmaps.
#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "acenet/acet_io.hpp"
#include "acenet/losses.hpp"

namespace acenet::synth {

enum Part : int { kBackground = 0, kHead, kTorso, kLeftArm, kRightArm, kLeftLeg, kRightLeg, kNumParts };
enum JointId : int { kHeadTop = 0, kNeck, kLeftWrist, kRightWrist, kLeftAnkle, kRightAnkle, kNumJoints };

inline const std::vector<std::string>& part_names() {
  static const std::vector<std::string> names{"background", "head", "torso", "left-arm", "right-arm", "left-leg", "right-leg"};
  return names;
}

/// Left/right counterpart of a part label (identity for unpaired parts).
inline int mirror_part(int label) {
  switch (label) {
    case kLeftArm: return kRightArm;
    case kRightArm: return kLeftArm;
    case kLeftLeg: return kRightLeg;
    case kRightLeg: return kLeftLeg;
    default: return label;
  }
}

inline int mirror_joint(int id) {
  switch (id) {
    case kLeftWrist: return kRightWrist;
    case kRightWrist: return kLeftWrist;
    case kLeftAnkle: return kRightAnkle;
    case kRightAnkle: return kLeftAnkle;
    default: return id;
  }
}

struct Joint {
  int id = 0;
  int x = 0;  // column
  int y = 0;  // row
  bool visible = false;
  friend bool operator==(const Joint&, const Joint&) = default;
};

using JointSet = std::vector<Joint>;

struct SynthConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t num_classes = kNumParts;
  std::size_t num_joints = kNumJoints;
  double pose_range = 0.9;       // radians of limb swing around the canonical pose
  double color_jitter = 0.08;    // per-part colour perturbation
  double occlusion_prob = 0.2;
  double pixel_noise = 0.04;
  double sigma = 2.0;            // heatmap Gaussian width in pixels
  bool eight_connected = false;  // boundary neighbourhood

  void validate() const {
    if (height < 32 || width < 32) throw ConfigError("synthetic samples need H, W >= 32");
    if (num_classes != kNumParts) throw ConfigError("synthetic figures have exactly 7 part classes");
    if (num_joints != kNumJoints) throw ConfigError("synthetic figures have exactly 6 joints");
    if (!(sigma > 0.0)) throw ConfigError("heatmap sigma must be positive");
    if (pose_range < 0.0 || occlusion_prob < 0.0 || occlusion_prob > 1.0) throw ConfigError("invalid synthetic pose/occlusion range");
  }
};

struct Sample {
  std::uint64_t seed = 0;
  Tensor<float> image;     // [3, H, W] in [0, 1]
  LabelMap labels;         // batch 1
  JointSet joints;
  LabelMap boundary;       // batch 1, values {0, 1}
  Tensor<float> heatmaps;  // [J, H, W]
};

/// Train seeds [0, 200), validation seeds [200, 250).
inline constexpr std::uint64_t kTrainSeedBase = 0;
inline constexpr std::size_t kTrainCount = 200;
inline constexpr std::uint64_t kValSeedBase = 200;
inline constexpr std::size_t kValCount = 50;

/// 1 where a 4- (or 8-) neighbour carries a different label; border pixels
/// only compare against in-bounds neighbours.
inline LabelMap boundary_from_labels(const LabelMap& labels, bool eight_connected = false) {
  LabelMap out(labels.batch, labels.height, labels.width, 2, 0);
  const long h = static_cast<long>(labels.height), w = static_cast<long>(labels.width);
  static constexpr int kOffsets[8][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
  const int nbrs = eight_connected ? 8 : 4;
  for (std::size_t n = 0; n < labels.batch; ++n)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        const int v = labels.at(n, y, x);
        for (int k = 0; k < nbrs; ++k) {
          const long yy = y + kOffsets[k][0], xx = x + kOffsets[k][1];
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          if (labels.at(n, yy, xx) != v) {
            out.at(n, y, x) = 1;
            break;
          }
        }
      }
  return out;
}

/// Channel j is exp(-d^2 / (2 sigma^2)) around joint j, or zeros when the joint is hidden.
inline Tensor<float> joints_to_heatmaps(const JointSet& joints, std::size_t height, std::size_t width, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("heatmap sigma must be positive");
  std::vector<float> data(joints.size() * height * width, 0.0f);
  const double denom = 2.0 * sigma * sigma;
  for (std::size_t j = 0; j < joints.size(); ++j) {
    if (!joints[j].visible) continue;
    float* plane = data.data() + j * height * width;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double dx = static_cast<double>(x) - joints[j].x, dy = static_cast<double>(y) - joints[j].y;
        plane[y * width + x] = static_cast<float>(std::exp(-(dx * dx + dy * dy) / denom));
      }
  }
  return Tensor<float>(Shape{joints.size(), height, width}, std::move(data));
}

namespace detail {

// Platform-independent uniform draws from the standard 64-bit engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double symmetric() { return uniform(-1.0, 1.0); }

 private:
  std::mt19937_64 engine_;
};

struct Vec2 {
  double x, y;
};

inline double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

using Rgb = std::array<double, 3>;

inline Rgb jittered(const Rgb& base, double jitter, Rng& rng) {
  Rgb c;
  for (int i = 0; i < 3; ++i) c[i] = std::clamp(base[i] + jitter * rng.symmetric(), 0.0, 1.0);
  return c;
}

}  // namespace detail

inline Sample generate_sample(std::uint64_t seed, const SynthConfig& cfg = {}) {
  cfg.validate();
  using detail::Vec2;
  detail::Rng rng(seed);
  const double H = static_cast<double>(cfg.height), W = static_cast<double>(cfg.width);

  // Figure layout.
  const double s = rng.uniform(0.62, 0.82) * H;
  const double cx = rng.uniform(0.38, 0.62) * W;
  const double top = rng.uniform(0.04, 0.14) * H;
  const double head_r = 0.08 * s;
  const Vec2 head{cx, top + head_r};
  const Vec2 neck{cx, top + 2.0 * head_r};
  const double torso_half = 0.11 * s;
  const double hip_y = neck.y + 0.36 * s;
  const double arm_len = 0.34 * s, arm_r = 0.04 * s;
  const double leg_len = 0.42 * s, leg_r = 0.05 * s;

  // Limb angles measured from straight down, positive away from the body.
  const double arm_l = 0.35 + cfg.pose_range * rng.symmetric();
  const double arm_r_ang = 0.35 + cfg.pose_range * rng.symmetric();
  const double leg_l = 0.12 + 0.5 * cfg.pose_range * rng.symmetric();
  const double leg_r_ang = 0.12 + 0.5 * cfg.pose_range * rng.symmetric();

  const Vec2 l_shoulder{cx - torso_half, neck.y + 0.04 * s};
  const Vec2 r_shoulder{cx + torso_half, neck.y + 0.04 * s};
  const Vec2 l_hip{cx - 0.06 * s, hip_y};
  const Vec2 r_hip{cx + 0.06 * s, hip_y};
  const Vec2 l_wrist{l_shoulder.x - arm_len * std::sin(arm_l), l_shoulder.y + arm_len * std::cos(arm_l)};
  const Vec2 r_wrist{r_shoulder.x + arm_len * std::sin(arm_r_ang), r_shoulder.y + arm_len * std::cos(arm_r_ang)};
  const Vec2 l_ankle{l_hip.x - leg_len * std::sin(leg_l), l_hip.y + leg_len * std::cos(leg_l)};
  const Vec2 r_ankle{r_hip.x + leg_len * std::sin(leg_r_ang), r_hip.y + leg_len * std::cos(leg_r_ang)};

  // Appearance: shirt covers torso and both arms, trousers both legs.
  const detail::Rgb background{rng.uniform(), rng.uniform(), rng.uniform()};
  const detail::Rgb skin{rng.uniform(0.55, 0.95), rng.uniform(0.4, 0.75), rng.uniform(0.3, 0.6)};
  const detail::Rgb shirt{rng.uniform(), rng.uniform(), rng.uniform()};
  const detail::Rgb trousers{rng.uniform(), rng.uniform(), rng.uniform()};
  std::array<detail::Rgb, kNumParts> colour{background,
                                            detail::jittered(skin, cfg.color_jitter, rng),
                                            detail::jittered(shirt, cfg.color_jitter, rng),
                                            detail::jittered(shirt, cfg.color_jitter, rng),
                                            detail::jittered(shirt, cfg.color_jitter, rng),
                                            detail::jittered(trousers, cfg.color_jitter, rng),
                                            detail::jittered(trousers, cfg.color_jitter, rng)};

  // Optional occluder.
  const bool occluded = rng.uniform() < cfg.occlusion_prob;
  const double occ_w = rng.uniform(0.18, 0.32) * W, occ_h = rng.uniform(0.18, 0.32) * H;
  const double occ_x = rng.uniform(0.0, W - occ_w), occ_y = rng.uniform(0.0, H - occ_h);
  const detail::Rgb occ_colour{rng.uniform(), rng.uniform(), rng.uniform()};
  auto in_occluder = [&](double x, double y) {
    return occluded && x >= occ_x && x < occ_x + occ_w && y >= occ_y && y < occ_y + occ_h;
  };

  Sample out;
  out.seed = seed;
  out.labels = LabelMap(1, cfg.height, cfg.width, cfg.num_classes, kBackground);
  std::vector<float> img(3 * cfg.height * cfg.width);
  const std::size_t plane = cfg.height * cfg.width;
  for (std::size_t y = 0; y < cfg.height; ++y)
    for (std::size_t x = 0; x < cfg.width; ++x) {
      const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
      int label = kBackground;
      // Painter's order: legs, torso, arms, head.
      if (detail::segment_distance(p, l_hip, l_ankle) <= leg_r) label = kLeftLeg;
      if (detail::segment_distance(p, r_hip, r_ankle) <= leg_r) label = kRightLeg;
      if (p.x >= cx - torso_half && p.x <= cx + torso_half && p.y >= neck.y && p.y <= hip_y + leg_r) label = kTorso;
      if (detail::segment_distance(p, l_shoulder, l_wrist) <= arm_r) label = kLeftArm;
      if (detail::segment_distance(p, r_shoulder, r_wrist) <= arm_r) label = kRightArm;
      if (std::hypot(p.x - head.x, p.y - head.y) <= head_r) label = kHead;
      detail::Rgb c = colour[label];
      if (in_occluder(p.x, p.y)) {
        label = kBackground;
        c = occ_colour;
      }
      out.labels.at(0, y, x) = label;
      for (int ch = 0; ch < 3; ++ch) {
        const double v = c[ch] + cfg.pixel_noise * rng.symmetric();
        img[ch * plane + y * cfg.width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  out.image = Tensor<float>(Shape{3, cfg.height, cfg.width}, std::move(img));

  const std::array<Vec2, kNumJoints> joint_pos{Vec2{head.x, head.y - head_r}, neck, l_wrist, r_wrist, l_ankle, r_ankle};
  for (int j = 0; j < kNumJoints; ++j) {
    Joint jt;
    jt.id = j;
    jt.x = static_cast<int>(std::lround(joint_pos[j].x));
    jt.y = static_cast<int>(std::lround(joint_pos[j].y));
    const bool inside = jt.x >= 0 && jt.y >= 0 && jt.x < static_cast<int>(cfg.width) && jt.y < static_cast<int>(cfg.height);
    jt.visible = inside && !in_occluder(jt.x, jt.y);
    if (!inside) {
      jt.x = std::clamp(jt.x, 0, static_cast<int>(cfg.width) - 1);
      jt.y = std::clamp(jt.y, 0, static_cast<int>(cfg.height) - 1);
    }
    out.joints.push_back(jt);
  }
  out.boundary = boundary_from_labels(out.labels, cfg.eight_connected);
  out.heatmaps = joints_to_heatmaps(out.joints, cfg.height, cfg.width, cfg.sigma);
  return out;
}

/// Mirror image with left/right labels and joints swapped.
inline Sample flip_horizontal(const Sample& in) {
  Sample out;
  out.seed = in.seed;
  const std::size_t h = in.labels.height, w = in.labels.width, plane = h * w;
  std::vector<float> img(in.image.numel());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) img[c * plane + y * w + x] = in.image[c * plane + y * w + (w - 1 - x)];
  out.image = Tensor<float>(in.image.shape(), std::move(img));
  out.labels = in.labels;
  out.boundary = in.boundary;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      out.labels.at(0, y, x) = mirror_part(in.labels.at(0, y, w - 1 - x));
      out.boundary.at(0, y, x) = in.boundary.at(0, y, w - 1 - x);
    }
  out.joints.resize(in.joints.size());
  for (const auto& j : in.joints) {
    Joint m = j;
    m.id = mirror_joint(j.id);
    m.x = static_cast<int>(w) - 1 - j.x;
    out.joints[static_cast<std::size_t>(m.id)] = m;
  }
  const std::size_t nj = in.heatmaps.dim(0);
  std::vector<float> hm(in.heatmaps.numel());
  for (std::size_t j = 0; j < nj; ++j) {
    const std::size_t src = static_cast<std::size_t>(mirror_joint(static_cast<int>(j)));
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) hm[j * plane + y * w + x] = in.heatmaps[src * plane + y * w + (w - 1 - x)];
  }
  out.heatmaps = Tensor<float>(in.heatmaps.shape(), std::move(hm));
  return out;
}

// ---------------------------------------------------------------------------
// On-disk layout: <root>/<split>/<seed>/{image,labels,boundary,heatmaps}.acet,
// joints.csv, and <root>/manifest.txt with one `<split> <seed>` line per sample.

namespace detail {

inline Tensor<float> label_tensor(const LabelMap& m) {
  std::vector<float> v(m.labels.begin(), m.labels.end());
  return Tensor<float>(Shape{m.height, m.width}, std::move(v));
}

inline LabelMap label_map(const Tensor<float>& t, std::size_t num_classes) {
  if (t.rank() != 2) throw IoError("label map must be rank 2, got " + t.shape().str());
  LabelMap m(1, t.dim(0), t.dim(1), num_classes);
  for (std::size_t i = 0; i < m.labels.size(); ++i) m.labels[i] = static_cast<int>(t[i]);
  return m;
}

}  // namespace detail

inline void save_sample(const std::filesystem::path& dir, const Sample& s) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_acet(dir / "image.acet", s.image);
  write_acet(dir / "labels.acet", detail::label_tensor(s.labels));
  write_acet(dir / "boundary.acet", detail::label_tensor(s.boundary));
  write_acet(dir / "heatmaps.acet", s.heatmaps);
  std::ofstream os(dir / "joints.csv", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / "joints.csv").string());
  os << "joint_id,x,y,visible\n";
  for (const auto& j : s.joints) os << j.id << ',' << j.x << ',' << j.y << ',' << (j.visible ? 1 : 0) << '\n';
  if (!os) throw IoError("write failed: " + (dir / "joints.csv").string());
}

inline Sample load_sample(const std::filesystem::path& dir, std::size_t num_classes = kNumParts) {
  if (!std::filesystem::is_directory(dir)) throw IoError("sample directory not found: " + dir.string());
  Sample s;
  s.image = read_acet(dir / "image.acet");
  s.labels = detail::label_map(read_acet(dir / "labels.acet"), num_classes);
  s.boundary = detail::label_map(read_acet(dir / "boundary.acet"), 2);
  s.heatmaps = read_acet(dir / "heatmaps.acet");
  std::ifstream is(dir / "joints.csv");
  if (!is) throw IoError("cannot open " + (dir / "joints.csv").string());
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    Joint j;
    int vis = 0;
    if (!(ls >> j.id >> j.x >> j.y >> vis)) throw IoError("malformed joints.csv line: " + line);
    j.visible = vis != 0;
    s.joints.push_back(j);
  }
  if (s.image.rank() != 3 || s.image.dim(0) != 3 || s.image.dim(1) != s.labels.height || s.image.dim(2) != s.labels.width)
    throw IoError("sample " + dir.string() + " has inconsistent extents");
  const auto name = dir.filename().string();
  s.seed = 0;
  std::from_chars(name.data(), name.data() + name.size(), s.seed);
  return s;
}

inline std::map<std::string, std::set<std::uint64_t>> read_manifest(const std::filesystem::path& root) {
  std::map<std::string, std::set<std::uint64_t>> out;
  std::ifstream is(root / "manifest.txt");
  if (!is) return out;
  std::string split;
  std::uint64_t seed;
  while (is >> split >> seed) out[split].insert(seed);
  return out;
}

/// Writes `count` samples with seeds seed_base.. and merges them into the manifest.
inline void generate_split(const std::filesystem::path& root, const std::string& split, std::size_t count,
                           std::uint64_t seed_base, const SynthConfig& cfg = {}) {
  auto manifest = read_manifest(root);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t seed = seed_base + i;
    save_sample(root / split / std::to_string(seed), generate_sample(seed, cfg));
    manifest[split].insert(seed);
  }
  std::ofstream os(root / "manifest.txt", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (root / "manifest.txt").string());
  for (const auto& [name, seeds] : manifest)
    for (auto seed : seeds) os << name << ' ' << seed << '\n';
  if (!os) throw IoError("write failed: " + (root / "manifest.txt").string());
}

inline std::vector<Sample> load_split(const std::filesystem::path& root, const std::string& split) {
  if (!std::filesystem::exists(root / "manifest.txt")) throw IoError("dataset manifest not found under " + root.string());
  auto manifest = read_manifest(root);
  auto it = manifest.find(split);
  if (it == manifest.end() || it->second.empty()) throw IoError("split '" + split + "' is empty in " + root.string());
  std::vector<Sample> out;
  for (auto seed : it->second) out.push_back(load_sample(root / split / std::to_string(seed)));
  return out;
}

/// In-memory split with seeds [seed_base, seed_base + count).
inline std::vector<Sample> make_split(std::uint64_t seed_base, std::size_t count, const SynthConfig& cfg = {}) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_sample(seed_base + i, cfg));
  return out;
}

}  // namespace acenet::synth
