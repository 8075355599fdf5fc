#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "gtal/interval.hpp"
#include "gtal/localizer.hpp"
#include "gtal/model.hpp"

namespace gtal {

struct GroundTruthSegment {
  std::string video_id;
  GroundTruthInstance instance;
};

std::vector<GroundTruthSegment> ground_truth_segments(const Dataset& ds);

/// Named tIoU threshold lists: "thumos14" = 0.1:0.1:0.7, "activitynet" = 0.5:0.05:0.95.
std::vector<double> threshold_preset(const std::string& name);

/// Greedy matching for one class: predictions are visited by descending
/// confidence (ties: video id, start, end) and each takes the unmatched
/// same-video ground truth with the highest tIoU >= threshold.
struct ClassMatching {
  std::vector<std::size_t> order;  // prediction indices in visiting order
  std::vector<int> matched_gt;     // per prediction (input index): gt index or -1
};

ClassMatching match_class(std::span<const Detection> preds, std::span<const GroundTruthSegment> gts, double iou_threshold);

/// All-point interpolated AP (precision envelope) for one class.
double average_precision(std::span<const Detection> preds, std::span<const GroundTruthSegment> gts, double iou_threshold);

struct EvalReport {
  std::vector<double> thresholds;
  int num_classes = 0;
  std::vector<int> classes_with_gt;
  std::vector<std::vector<double>> class_ap;  // [threshold][class]
  std::vector<double> map;                    // per threshold
  double average_map = 0.0;
  std::size_t num_predictions = 0;
  std::size_t num_ground_truth = 0;
};

EvalReport evaluate_map(std::span<const Detection> preds, std::span<const GroundTruthSegment> gts,
                        std::span<const double> thresholds, int num_classes, Execution ex = Execution::parallel);

struct ErrorCounts {
  std::size_t true_positive = 0;
  std::size_t double_detection = 0;
  std::size_t localization_error = 0;
  std::size_t confusion_error = 0;
  std::size_t background_error = 0;

  std::size_t total() const {
    return true_positive + double_detection + localization_error + confusion_error + background_error;
  }
};

ErrorCounts error_breakdown(std::span<const Detection> preds, std::span<const GroundTruthSegment> gts,
                            double iou_threshold);

inline constexpr std::size_t kAttentionBins = 10;

struct BinAccuracy {
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy() const;  // NaN when empty
};

struct DiagnosticsReport {
  double video_cls_acc = 0.0;
  double snippet_cls_acc = 0.0;
  double high_attn_snippet_acc = 0.0;
  std::size_t num_videos = 0;
  std::size_t num_fg_snippets = 0;
  std::size_t num_high_attn_snippets = 0;
  std::array<BinAccuracy, kAttentionBins> bins{};
  ErrorCounts errors;
  double error_iou_threshold = 0.5;
};

/// Bin 0 is [0, 0.1]; bin i > 0 is (i/10, (i+1)/10].
std::size_t attention_bin(double phi);

inline constexpr double kHighAttention = 0.9;

DiagnosticsReport snippet_diagnostics(const Dataset& ds, std::span<const ForwardOutput> outputs, int r_agg);
DiagnosticsReport snippet_diagnostics(const ModelParams& params, const Dataset& ds, int r_agg,
                                      Execution ex = Execution::parallel);

}  // namespace gtal
