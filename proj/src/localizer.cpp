#include "gtal/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "gtal/interval.hpp"

namespace gtal {

std::vector<double> InferenceConfig::default_attention_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 16; ++i) t.push_back((10.0 + 5.0 * i) / 100.0);
  return t;
}

void InferenceConfig::validate() const {
  if (attention_thresholds.empty()) throw ConfigError("InferenceConfig.attention_thresholds must not be empty");
  for (std::size_t i = 0; i < attention_thresholds.size(); ++i) {
    const double t = attention_thresholds[i];
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("InferenceConfig.attention_thresholds must lie in (0, 1)");
    if (i > 0 && !(t > attention_thresholds[i - 1]))
      throw ConfigError("InferenceConfig.attention_thresholds must be strictly increasing");
  }
  if (!(nms_sigma > 0.0)) throw ConfigError("InferenceConfig.nms_sigma must be > 0");
  if (!(outer_margin >= 0.0)) throw ConfigError("InferenceConfig.outer_margin must be >= 0");
  if (topk_ratio < 1) throw ConfigError("InferenceConfig.topk_ratio must be >= 1");
}

std::vector<double> video_class_scores(const ForwardOutput& out, int r_agg) {
  return aggregate_topk(attention_weighted(out), r_agg);
}

std::vector<int> select_classes(std::span<const double> scores, int num_classes, double threshold) {
  std::vector<int> sel;
  for (int c = 0; c < num_classes; ++c)
    if (scores[static_cast<std::size_t>(c)] > threshold) sel.push_back(c);
  return sel;
}

std::vector<Proposal> generate_proposals(const ForwardOutput& out, double snippet_stride,
                                         std::span<const int> selected_classes, std::span<const double> class_scores,
                                         const InferenceConfig& cfg) {
  const auto& phi = out.attention;
  const std::size_t N = phi.size();
  // (class, first snippet, last snippet) -> best confidence
  std::map<std::tuple<int, std::size_t, std::size_t>, double> best;

  for (const int c : selected_classes) {
    const auto col = static_cast<std::size_t>(c);
    auto evidence = [&](std::size_t n) { return phi[n] * out.cas(n, col); };
    for (const double t : cfg.attention_thresholds) {
      std::size_t n = 0;
      while (n < N) {
        if (phi[n] < t) {
          ++n;
          continue;
        }
        const std::size_t first = n;
        while (n < N && phi[n] >= t) ++n;
        const std::size_t last = n - 1;
        const std::size_t len = last - first + 1;

        double inner = 0.0;
        for (std::size_t i = first; i <= last; ++i) inner += evidence(i);
        inner /= static_cast<double>(len);

        const auto margin = static_cast<std::size_t>(std::ceil(cfg.outer_margin * static_cast<double>(len)));
        double outer = 0.0;
        std::size_t outer_count = 0;
        for (std::size_t i = first >= margin ? first - margin : 0; i < first; ++i, ++outer_count) outer += evidence(i);
        for (std::size_t i = last + 1; i < std::min(N, last + 1 + margin); ++i, ++outer_count) outer += evidence(i);
        if (outer_count > 0) outer /= static_cast<double>(outer_count);

        const double conf = inner - outer + class_scores[col];
        auto [it, inserted] = best.try_emplace({c, first, last}, conf);
        if (!inserted) it->second = std::max(it->second, conf);
      }
    }
  }

  std::vector<Proposal> props;
  props.reserve(best.size());
  for (const auto& [key, conf] : best) {
    const auto& [c, first, last] = key;
    props.push_back({c, static_cast<double>(first) * snippet_stride, static_cast<double>(last + 1) * snippet_stride, conf});
  }
  return props;
}

bool proposal_ranks_before(const Proposal& a, const Proposal& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.start != b.start) return a.start < b.start;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  return a.end < b.end;
}

std::vector<Proposal> soft_nms(std::vector<Proposal> proposals, const InferenceConfig& cfg) {
  std::erase_if(proposals, [&](const Proposal& p) { return p.confidence < cfg.nms_min_score; });
  std::vector<Proposal> kept;
  kept.reserve(proposals.size());
  while (!proposals.empty()) {
    const auto top = std::min_element(proposals.begin(), proposals.end(), proposal_ranks_before);
    const Proposal chosen = *top;
    proposals.erase(top);
    kept.push_back(chosen);
    for (Proposal& p : proposals) {
      if (p.class_id != chosen.class_id) continue;
      const double iou = temporal_iou(chosen.start, chosen.end, p.start, p.end);
      p.confidence *= std::exp(-(iou * iou) / cfg.nms_sigma);
    }
    std::erase_if(proposals, [&](const Proposal& p) { return p.confidence < cfg.nms_min_score; });
  }
  std::stable_sort(kept.begin(), kept.end(), proposal_ranks_before);
  return kept;
}

std::vector<Proposal> localize(const ModelParams& params, const VideoRecord& video, const InferenceConfig& cfg) {
  const ForwardOutput out = forward(params, video.features);
  const std::vector<double> scores = video_class_scores(out, cfg.topk_ratio);
  const std::vector<int> classes = select_classes(scores, params.num_classes, cfg.class_threshold);
  if (classes.empty()) return {};
  std::vector<Proposal> props = generate_proposals(out, video.features.snippet_stride, classes, scores, cfg);
  for (Proposal& p : props) p.end = std::min(p.end, video.duration);
  std::erase_if(props, [](const Proposal& p) { return !(p.end > p.start); });
  return soft_nms(std::move(props), cfg);
}

std::vector<Detection> localize_dataset(const ModelParams& params, const Dataset& ds, const InferenceConfig& cfg,
                                        Execution ex) {
  cfg.validate();
  const auto per_video =
      map_indexed(ds.videos.size(), ex, [&](std::size_t i) { return localize(params, ds.videos[i], cfg); });
  std::vector<std::size_t> order(ds.videos.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ds.videos[a].id < ds.videos[b].id; });
  std::vector<Detection> out;
  for (std::size_t i : order)
    for (const Proposal& p : per_video[i]) out.push_back({ds.videos[i].id, p});
  return out;
}

}  // namespace gtal
