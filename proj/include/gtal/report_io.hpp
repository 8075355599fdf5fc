#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gtal/evaluator.hpp"
#include "gtal/model.hpp"
#include "gtal/stat_adapter.hpp"
#include "json.hpp"

namespace gtal {

void write_text_file(const std::filesystem::path& file, const std::string& text);

std::string format_fixed(double v, int precision);

/// JSON array of {video_id, class_id, start, end, confidence}, sorted by
/// video id then confidence descending.
nlohmann::json predictions_to_json(std::span<const Detection> dets);
std::vector<Detection> predictions_from_json(const nlohmann::json& j);

nlohmann::json eval_report_to_json(const EvalReport& rep);
std::string eval_report_to_text(const EvalReport& rep, const std::string& title);
std::string eval_report_to_csv(const EvalReport& rep);

nlohmann::json diagnostics_to_json(const DiagnosticsReport& rep);
std::string diagnostics_to_text(const DiagnosticsReport& rep, const std::string& title);
std::string attention_bins_to_csv(const DiagnosticsReport& rep);
std::string error_breakdown_to_csv(const DiagnosticsReport& rep);

std::string train_log_to_csv(std::span<const EpochLoss> log);
/// Columns epoch, L_att, L_cas, L_cal, total with lambda weights applied.
std::string adapt_log_to_csv(std::span<const AdaptEpochLog> log, const AdaptConfig& cfg);

}  // namespace gtal
