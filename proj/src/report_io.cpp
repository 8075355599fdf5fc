#include "gtal/report_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gtal {

void write_text_file(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + file.string() + " for writing");
  os << text;
  if (!os) throw Error("write failed: " + file.string());
}

std::string format_fixed(double v, int precision) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

namespace {

std::string pad_left(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

}  // namespace

nlohmann::json predictions_to_json(std::span<const Detection> dets) {
  std::vector<Detection> sorted(dets.begin(), dets.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const Detection& a, const Detection& b) {
    if (a.video_id != b.video_id) return a.video_id < b.video_id;
    return proposal_ranks_before(a.proposal, b.proposal);
  });
  auto arr = nlohmann::json::array();
  for (const auto& d : sorted)
    arr.push_back({{"video_id", d.video_id},
                   {"class_id", d.proposal.class_id},
                   {"start", d.proposal.start},
                   {"end", d.proposal.end},
                   {"confidence", d.proposal.confidence}});
  return arr;
}

std::vector<Detection> predictions_from_json(const nlohmann::json& j) {
  std::vector<Detection> out;
  for (const auto& e : j)
    out.push_back({e.at("video_id").get<std::string>(),
                   {e.at("class_id").get<int>(), e.at("start").get<double>(), e.at("end").get<double>(),
                    e.at("confidence").get<double>()}});
  return out;
}

nlohmann::json eval_report_to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["thresholds"] = rep.thresholds;
  j["num_classes"] = rep.num_classes;
  j["classes_with_gt"] = rep.classes_with_gt;
  j["class_ap"] = rep.class_ap;
  j["map"] = rep.map;
  j["average_map"] = rep.average_map;
  j["num_predictions"] = rep.num_predictions;
  j["num_ground_truth"] = rep.num_ground_truth;
  return j;
}

std::string eval_report_to_text(const EvalReport& rep, const std::string& title) {
  std::ostringstream os;
  os << title << "\n";
  os << "predictions " << rep.num_predictions << ", ground truth " << rep.num_ground_truth << "\n";
  os << "tIoU   ";
  for (double t : rep.thresholds) os << "   " << format_fixed(t, 2);
  os << "    avg\n";
  os << "mAP    ";
  for (double m : rep.map) os << "  " << pad_left(format_fixed(100.0 * m, 1), 5);
  os << "  " << format_fixed(100.0 * rep.average_map, 2) << "\n";
  for (int c : rep.classes_with_gt) {
    os << "cls " << c << (c < 10 ? "  " : " ");
    for (std::size_t t = 0; t < rep.thresholds.size(); ++t) {
      os << "  " << pad_left(format_fixed(100.0 * rep.class_ap[t][static_cast<std::size_t>(c)], 1), 5);
    }
    os << "\n";
  }
  return os.str();
}

std::string eval_report_to_csv(const EvalReport& rep) {
  std::ostringstream os;
  os << "tiou,map\n";
  for (std::size_t t = 0; t < rep.thresholds.size(); ++t)
    os << format_fixed(rep.thresholds[t], 2) << "," << format_fixed(rep.map[t], 6) << "\n";
  os << "avg," << format_fixed(rep.average_map, 6) << "\n";
  return os.str();
}

namespace {

nlohmann::json errors_to_json(const ErrorCounts& e) {
  return {{"true_positive", e.true_positive},
          {"double_detection", e.double_detection},
          {"localization_error", e.localization_error},
          {"confusion_error", e.confusion_error},
          {"background_error", e.background_error}};
}

std::string bin_label(std::size_t i) {
  const std::string lo = format_fixed(static_cast<double>(i) / 10.0, 1);
  const std::string hi = format_fixed(static_cast<double>(i + 1) / 10.0, 1);
  return (i == 0 ? "[" : "(") + lo + "," + hi + "]";
}

}  // namespace

nlohmann::json diagnostics_to_json(const DiagnosticsReport& rep) {
  nlohmann::json j;
  j["video_cls_acc"] = rep.video_cls_acc;
  j["snippet_cls_acc"] = rep.snippet_cls_acc;
  j["high_attn_snippet_acc"] = rep.high_attn_snippet_acc;
  j["num_videos"] = rep.num_videos;
  j["num_fg_snippets"] = rep.num_fg_snippets;
  j["num_high_attn_snippets"] = rep.num_high_attn_snippets;
  auto bins = nlohmann::json::array();
  for (std::size_t i = 0; i < kAttentionBins; ++i) {
    const auto& b = rep.bins[i];
    bins.push_back({{"bin", bin_label(i)}, {"count", b.count}, {"correct", b.correct}, {"accuracy", b.accuracy()}});
  }
  j["attention_bins"] = bins;
  j["error_iou_threshold"] = rep.error_iou_threshold;
  j["errors"] = errors_to_json(rep.errors);
  return j;
}

std::string diagnostics_to_text(const DiagnosticsReport& rep, const std::string& title) {
  std::ostringstream os;
  os << title << "\n";
  os << "video-level cls. acc.          " << format_fixed(100.0 * rep.video_cls_acc, 1) << "%\n";
  os << "snippet-level cls. acc.        " << format_fixed(100.0 * rep.snippet_cls_acc, 1) << "%\n";
  os << "high-attention snippet acc.    " << format_fixed(100.0 * rep.high_attn_snippet_acc, 1) << "%  ("
     << rep.num_high_attn_snippets << " of " << rep.num_fg_snippets << " fg snippets)\n";
  os << "attention bin   count  accuracy\n";
  for (std::size_t i = 0; i < kAttentionBins; ++i) {
    const auto& b = rep.bins[i];
    std::string label = bin_label(i);
    label.resize(14, ' ');
    os << label << pad_left(std::to_string(b.count), 7) << "  "
       << format_fixed(100.0 * b.accuracy(), 1) << "\n";
  }
  os << "errors @ tIoU " << format_fixed(rep.error_iou_threshold, 2) << ": tp " << rep.errors.true_positive
     << ", double " << rep.errors.double_detection << ", localization " << rep.errors.localization_error
     << ", confusion " << rep.errors.confusion_error << ", background " << rep.errors.background_error << "\n";
  return os.str();
}

std::string attention_bins_to_csv(const DiagnosticsReport& rep) {
  std::ostringstream os;
  os << "bin_low,bin_high,count,correct,accuracy\n";
  for (std::size_t i = 0; i < kAttentionBins; ++i) {
    const auto& b = rep.bins[i];
    os << format_fixed(static_cast<double>(i) / 10.0, 1) << "," << format_fixed(static_cast<double>(i + 1) / 10.0, 1)
       << "," << b.count << "," << b.correct << "," << format_fixed(b.accuracy(), 6) << "\n";
  }
  return os.str();
}

std::string error_breakdown_to_csv(const DiagnosticsReport& rep) {
  std::ostringstream os;
  os << "tiou,true_positive,double_detection,localization_error,confusion_error,background_error\n";
  const auto& e = rep.errors;
  os << format_fixed(rep.error_iou_threshold, 2) << "," << e.true_positive << "," << e.double_detection << ","
     << e.localization_error << "," << e.confusion_error << "," << e.background_error << "\n";
  return os.str();
}

std::string train_log_to_csv(std::span<const EpochLoss> log) {
  std::ostringstream os;
  os << "epoch,mean_loss\n";
  for (const auto& e : log) os << e.epoch << "," << format_fixed(e.mean_loss, 8) << "\n";
  return os.str();
}

std::string adapt_log_to_csv(std::span<const AdaptEpochLog> log, const AdaptConfig& cfg) {
  std::ostringstream os;
  os << "epoch,L_att,L_cas,L_cal,total\n";
  for (const auto& e : log)
    os << e.epoch << "," << format_fixed(cfg.lambda_att * e.mean.att, 8) << ","
       << format_fixed(cfg.lambda_cas * e.mean.cas, 8) << "," << format_fixed(cfg.lambda_cal * e.mean.cal, 8) << ","
       << format_fixed(e.mean.total, 8) << "\n";
  return os.str();
}

}  // namespace gtal
