// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include "acenet/losses.hpp"

namespace acenet {

struct SegmentationMetrics {
  double mean_iou = 0.0;
  double pixel_acc = 0.0;
  double mean_acc = 0.0;
  std::vector<double> per_class_iou;  // NaN for classes absent from both maps
};

/// Integer confusion counts; rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes) : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const { return k_; }
  std::int64_t count(std::size_t gt, std::size_t pred) const { return counts_[gt * k_ + pred]; }

  /// Pixels whose ground truth equals the ignore index are skipped.
  void add(const LabelMap& pred, const LabelMap& gt) {
    if (pred.labels.size() != gt.labels.size())
      throw DimensionError("confusion matrix: prediction and ground truth differ in size");
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
      const int g = gt.labels[i];
      if (g == gt.ignore_index) continue;
      const int p = pred.labels[i];
      if (g < 0 || static_cast<std::size_t>(g) >= k_ || p < 0 || static_cast<std::size_t>(p) >= k_)
        throw DataError("confusion matrix: class id outside [0, " + std::to_string(k_) + ")");
      ++counts_[static_cast<std::size_t>(g) * k_ + static_cast<std::size_t>(p)];
    }
  }

  void merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw DimensionError("confusion matrix: class counts differ");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  }

  SegmentationMetrics metrics() const {
    SegmentationMetrics m;
    m.per_class_iou.assign(k_, std::nan(""));
    std::int64_t correct = 0, total = 0;
    double iou_sum = 0.0, acc_sum = 0.0;
    std::size_t iou_n = 0, acc_n = 0;
    for (std::size_t c = 0; c < k_; ++c) {
      std::int64_t gt_c = 0, pred_c = 0;
      for (std::size_t o = 0; o < k_; ++o) {
        gt_c += count(c, o);
        pred_c += count(o, c);
      }
      const std::int64_t tp = count(c, c);
      correct += tp;
      total += gt_c;
      const std::int64_t uni = gt_c + pred_c - tp;
      if (uni > 0) {
        m.per_class_iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
        iou_sum += m.per_class_iou[c];
        ++iou_n;
      }
      if (gt_c > 0) {
        acc_sum += static_cast<double>(tp) / static_cast<double>(gt_c);
        ++acc_n;
      }
    }
    m.mean_iou = iou_n ? iou_sum / static_cast<double>(iou_n) : 0.0;
    m.mean_acc = acc_n ? acc_sum / static_cast<double>(acc_n) : 0.0;
    m.pixel_acc = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    return m;
  }

 private:
  std::size_t k_;
  std::vector<std::int64_t> counts_;
};

inline SegmentationMetrics segmentation_metrics(const LabelMap& pred, const LabelMap& gt, std::size_t num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.add(pred, gt);
  return cm.metrics();
}

/// `class_id,class_name,iou` rows followed by a `mIoU,pixel_acc,mean_acc`
/// header and its values. Classes with no pixels in either map have an empty iou.
inline void write_metrics_csv(const std::filesystem::path& path, const SegmentationMetrics& m,
                              const std::vector<std::string>& class_names) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << std::setprecision(9);
  os << "class_id,class_name,iou\n";
  for (std::size_t c = 0; c < m.per_class_iou.size(); ++c) {
    os << c << ',' << (c < class_names.size() ? class_names[c] : "class" + std::to_string(c)) << ',';
    if (!std::isnan(m.per_class_iou[c])) os << m.per_class_iou[c];
    os << '\n';
  }
  os << "mIoU,pixel_acc,mean_acc\n" << m.mean_iou << ',' << m.pixel_acc << ',' << m.mean_acc << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace acenet
