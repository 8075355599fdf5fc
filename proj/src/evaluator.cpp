#include "gtal/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gtal {

std::vector<GroundTruthSegment> ground_truth_segments(const Dataset& ds) {
  std::vector<GroundTruthSegment> out;
  for (const auto& v : ds.videos)
    for (const auto& g : v.instances) out.push_back({v.id, g});
  return out;
}

std::vector<double> threshold_preset(const std::string& name) {
  std::vector<double> t;
  if (name == "thumos14") {
    for (int i = 1; i <= 7; ++i) t.push_back(i / 10.0);
  } else if (name == "activitynet") {
    for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  } else {
    throw ConfigError("unknown tIoU threshold preset '" + name + "' (expected thumos14 or activitynet)");
  }
  return t;
}

ClassMatching match_class(std::span<const Detection> preds, std::span<const GroundTruthSegment> gts, double iou_threshold) {
  ClassMatching m;
  m.order.resize(preds.size());
  std::iota(m.order.begin(), m.order.end(), 0);
  std::stable_sort(m.order.begin(), m.order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = preds[a];
    const auto& pb = preds[b];
    if (pa.proposal.confidence != pb.proposal.confidence) return pa.proposal.confidence > pb.proposal.confidence;
    if (pa.video_id != pb.video_id) return pa.video_id < pb.video_id;
    if (pa.proposal.start != pb.proposal.start) return pa.proposal.start < pb.proposal.start;
    return pa.proposal.end < pb.proposal.end;
  });
  m.matched_gt.assign(preds.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t pi : m.order) {
    const auto& p = preds[pi];
    double best = -1.0;
    int best_g = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].video_id != p.video_id) continue;
      const double iou = temporal_iou(p.proposal.start, p.proposal.end, gts[g].instance.start, gts[g].instance.end);
      if (iou >= iou_threshold && iou > best) {
        best = iou;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0) {
      taken[static_cast<std::size_t>(best_g)] = true;
      m.matched_gt[pi] = best_g;
    }
  }
  return m;
}

double average_precision(std::span<const Detection> preds, std::span<const GroundTruthSegment> gts, double iou_threshold) {
  if (gts.empty() || preds.empty()) return 0.0;
  const ClassMatching m = match_class(preds, gts, iou_threshold);
  const std::size_t P = preds.size();
  std::vector<double> precision(P), recall(P);
  double tp = 0.0;
  for (std::size_t r = 0; r < P; ++r) {
    if (m.matched_gt[m.order[r]] >= 0) tp += 1.0;
    precision[r] = tp / static_cast<double>(r + 1);
    recall[r] = tp / static_cast<double>(gts.size());
  }
  for (std::size_t r = P - 1; r-- > 0;) precision[r] = std::max(precision[r], precision[r + 1]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t r = 0; r < P; ++r) {
    ap += (recall[r] - prev_recall) * precision[r];
    prev_recall = recall[r];
  }
  return ap;
}

EvalReport evaluate_map(std::span<const Detection> preds, std::span<const GroundTruthSegment> gts,
                        std::span<const double> thresholds, int num_classes, Execution ex) {
  if (gts.empty()) throw Error("evaluate_map: no ground truth to evaluate");
  if (thresholds.empty()) throw ConfigError("evaluate_map: empty threshold list");
  EvalReport rep;
  rep.thresholds.assign(thresholds.begin(), thresholds.end());
  rep.num_classes = num_classes;
  rep.num_predictions = preds.size();
  rep.num_ground_truth = gts.size();

  std::vector<std::vector<Detection>> preds_by_class(static_cast<std::size_t>(num_classes));
  std::vector<std::vector<GroundTruthSegment>> gts_by_class(static_cast<std::size_t>(num_classes));
  for (const auto& p : preds)
    if (p.proposal.class_id >= 0 && p.proposal.class_id < num_classes) preds_by_class[static_cast<std::size_t>(p.proposal.class_id)].push_back(p);
  for (const auto& g : gts) gts_by_class.at(static_cast<std::size_t>(g.instance.class_id)).push_back(g);
  for (int c = 0; c < num_classes; ++c)
    if (!gts_by_class[static_cast<std::size_t>(c)].empty()) rep.classes_with_gt.push_back(c);

  const std::size_t T = thresholds.size(), C = static_cast<std::size_t>(num_classes);
  const auto aps = map_indexed(T * C, ex, [&](std::size_t i) {
    const std::size_t t = i / C, c = i % C;
    return average_precision(preds_by_class[c], gts_by_class[c], thresholds[t]);
  });
  rep.class_ap.assign(T, std::vector<double>(C, 0.0));
  rep.map.assign(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) rep.class_ap[t][c] = aps[t * C + c];
    double s = 0.0;
    for (int c : rep.classes_with_gt) s += rep.class_ap[t][static_cast<std::size_t>(c)];
    rep.map[t] = s / static_cast<double>(rep.classes_with_gt.size());
  }
  rep.average_map = std::accumulate(rep.map.begin(), rep.map.end(), 0.0) / static_cast<double>(T);
  return rep;
}

ErrorCounts error_breakdown(std::span<const Detection> preds, std::span<const GroundTruthSegment> gts,
                            double iou_threshold) {
  ErrorCounts counts;
  std::vector<bool> is_tp(preds.size(), false);
  int max_class = -1;
  for (const auto& p : preds) max_class = std::max(max_class, p.proposal.class_id);
  for (const auto& g : gts) max_class = std::max(max_class, g.instance.class_id);
  for (int c = 0; c <= max_class; ++c) {
    std::vector<std::size_t> pidx;
    std::vector<Detection> cp;
    std::vector<GroundTruthSegment> cg;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i].proposal.class_id == c) {
        pidx.push_back(i);
        cp.push_back(preds[i]);
      }
    for (const auto& g : gts)
      if (g.instance.class_id == c) cg.push_back(g);
    const ClassMatching m = match_class(cp, cg, iou_threshold);
    for (std::size_t j = 0; j < cp.size(); ++j)
      if (m.matched_gt[j] >= 0) is_tp[pidx[j]] = true;
  }

  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (is_tp[i]) {
      ++counts.true_positive;
      continue;
    }
    const auto& p = preds[i];
    bool double_det = false, loc = false, conf = false;
    for (const auto& g : gts) {
      if (g.video_id != p.video_id) continue;
      const double iou = temporal_iou(p.proposal.start, p.proposal.end, g.instance.start, g.instance.end);
      if (iou <= 0.0) continue;
      if (g.instance.class_id == p.proposal.class_id) {
        if (iou >= iou_threshold) double_det = true;
        else loc = true;
      } else {
        conf = true;
      }
    }
    if (double_det) ++counts.double_detection;
    else if (loc) ++counts.localization_error;
    else if (conf) ++counts.confusion_error;
    else ++counts.background_error;
  }
  return counts;
}

double BinAccuracy::accuracy() const {
  return count == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(correct) / static_cast<double>(count);
}

std::size_t attention_bin(double phi) {
  for (std::size_t i = 0; i + 1 < kAttentionBins; ++i)
    if (phi <= static_cast<double>(i + 1) / 10.0) return i;
  return kAttentionBins - 1;
}

DiagnosticsReport snippet_diagnostics(const Dataset& ds, std::span<const ForwardOutput> outputs, int r_agg) {
  if (outputs.size() != ds.videos.size()) throw Error("snippet_diagnostics: one output per video required");
  DiagnosticsReport rep;
  rep.num_videos = ds.videos.size();
  std::size_t video_correct = 0, fg_correct = 0, high_correct = 0;
  for (std::size_t v = 0; v < ds.videos.size(); ++v) {
    const VideoRecord& video = ds.videos[v];
    const ForwardOutput& out = outputs[v];
    const int C = video.num_classes();

    const std::vector<double> supp = aggregate_topk(attention_weighted(out), r_agg);
    const auto top = std::max_element(supp.begin(), supp.begin() + C) - supp.begin();
    if (video.label[static_cast<std::size_t>(top)] != 0) ++video_correct;

    const std::vector<int> labels = snippet_labels(video);
    for (std::size_t n = 0; n < labels.size(); ++n) {
      if (labels[n] == C) continue;
      const auto row = out.cas.row(n);
      const auto pred = std::max_element(row.begin(), row.end()) - row.begin();
      const bool correct = pred == labels[n];
      ++rep.num_fg_snippets;
      fg_correct += correct;
      if (out.attention[n] > kHighAttention) {
        ++rep.num_high_attn_snippets;
        high_correct += correct;
      }
      auto& bin = rep.bins[attention_bin(out.attention[n])];
      ++bin.count;
      bin.correct += correct;
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  rep.video_cls_acc = ratio(video_correct, rep.num_videos);
  rep.snippet_cls_acc = ratio(fg_correct, rep.num_fg_snippets);
  rep.high_attn_snippet_acc = ratio(high_correct, rep.num_high_attn_snippets);
  return rep;
}

DiagnosticsReport snippet_diagnostics(const ModelParams& params, const Dataset& ds, int r_agg, Execution ex) {
  const auto outputs = map_indexed(ds.videos.size(), ex, [&](std::size_t i) { return forward(params, ds.videos[i].features); });
  return snippet_diagnostics(ds, outputs, r_agg);
}

}  // namespace gtal
