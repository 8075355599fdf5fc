#pragma once

#include <span>
#include <string>
#include <vector>

#include "gtal/model.hpp"

namespace gtal {

struct Proposal {
  int class_id = 0;
  double start = 0.0;
  double end = 0.0;
  double confidence = 0.0;

  bool operator==(const Proposal&) const = default;
};

struct InferenceConfig {
  double class_threshold = 0.2;
  std::vector<double> attention_thresholds = default_attention_thresholds();
  double nms_sigma = 0.3;
  double nms_min_score = 1e-4;
  double outer_margin = 0.25;
  int topk_ratio = 8;

  static std::vector<double> default_attention_thresholds();  // 0.10, 0.15, ..., 0.90
  void validate() const;
};

/// Video-level class scores: softmax of top-k pooled phi (.) Psi.
std::vector<double> video_class_scores(const ForwardOutput& out, int r_agg);

/// Foreground classes whose video score exceeds the class threshold.
std::vector<int> select_classes(std::span<const double> scores, int num_classes, double threshold);

std::vector<Proposal> generate_proposals(const ForwardOutput& out, double snippet_stride,
                                         std::span<const int> selected_classes, std::span<const double> class_scores,
                                         const InferenceConfig& cfg);

/// Deterministic ranking: confidence desc, then start asc, class asc, end asc.
bool proposal_ranks_before(const Proposal& a, const Proposal& b);

/// Gaussian soft-NMS per class, output sorted by `proposal_ranks_before`.
std::vector<Proposal> soft_nms(std::vector<Proposal> proposals, const InferenceConfig& cfg);

std::vector<Proposal> localize(const ModelParams& params, const VideoRecord& video, const InferenceConfig& cfg);

struct Detection {
  std::string video_id;
  Proposal proposal;

  bool operator==(const Detection&) const = default;
};

/// Runs `localize` over every video; order is by video id then rank.
std::vector<Detection> localize_dataset(const ModelParams& params, const Dataset& ds, const InferenceConfig& cfg,
                                        Execution ex = Execution::parallel);

}  // namespace gtal
