#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "gtal/evaluator.hpp"
#include "gtal/localizer.hpp"
#include "gtal/model.hpp"
#include "gtal/snippet_data.hpp"

namespace gtal::test {

inline FeatureSequence random_features(std::size_t N, std::size_t D, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  FeatureSequence f{Matrix(N, D), 1.0};
  for (double& x : f.data.values()) x = nd(rng);
  return f;
}

inline ModelParams random_params(int D, int H, int C, Rng& rng, double scale = 0.5) {
  ModelParams p = ModelParams::zeros(D, H, C);
  std::normal_distribution<double> nd(0.0, scale);
  for (std::size_t t = 0; t < ModelParams::kNumTensors; ++t)
    for (double& x : p.tensor(t)) x = nd(rng);
  return p;
}

inline std::vector<int> random_label(int C, Rng& rng) {
  std::bernoulli_distribution coin(0.3);
  std::vector<int> y(static_cast<std::size_t>(C), 0);
  for (int& v : y) v = coin(rng) ? 1 : 0;
  y[std::uniform_int_distribution<std::size_t>(0, y.size() - 1)(rng)] = 1;
  return y;
}

/// Random video whose label is consistent with one instance per positive class.
inline VideoRecord random_video(std::size_t N, std::size_t D, int C, Rng& rng, const std::string& id = "v") {
  VideoRecord v;
  v.id = id;
  v.features = random_features(N, D, rng);
  v.duration = static_cast<double>(N);
  v.label = random_label(C, rng);
  return v;
}

/// Central difference of f along one coordinate of `p`.
template <class Loss>
double central_difference(ModelParams p, std::size_t tensor, std::size_t index, double h, Loss&& loss) {
  double& x = p.tensor(tensor)[index];
  const double x0 = x;
  x = x0 + h;
  const double up = loss(p);
  x = x0 - h;
  const double down = loss(p);
  return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  const double denom = std::max(std::abs(a), std::abs(b));
  return denom < 1e-10 ? 0.0 : std::abs(a - b) / denom;
}

// ---- brute-force oracles ----

namespace oracle {

inline double iou(double s0, double e0, double s1, double e1) {
  const double inter = std::max(0.0, std::min(e0, e1) - std::max(s0, s1));
  const double uni = (e0 - s0) + (e1 - s1) - inter;
  return inter / uni;
}

inline auto rank_key(const Proposal& p) { return std::make_tuple(-p.confidence, p.start, p.class_id, p.end); }

/// Straightforward Gaussian soft-NMS over an index set.
inline std::vector<Proposal> soft_nms(const std::vector<Proposal>& in, double sigma, double min_score) {
  std::vector<Proposal> pool = in;
  std::vector<bool> alive(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) alive[i] = pool[i].confidence >= min_score;
  std::vector<Proposal> kept;
  for (;;) {
    std::size_t best = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (alive[i] && (best == pool.size() || rank_key(pool[i]) < rank_key(pool[best]))) best = i;
    if (best == pool.size()) break;
    alive[best] = false;
    kept.push_back(pool[best]);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!alive[i] || pool[i].class_id != pool[best].class_id) continue;
      const double o = iou(pool[best].start, pool[best].end, pool[i].start, pool[i].end);
      pool[i].confidence = pool[i].confidence * std::exp(-o * o / sigma);
      if (pool[i].confidence < min_score) alive[i] = false;
    }
  }
  std::sort(kept.begin(), kept.end(), [](const Proposal& a, const Proposal& b) { return rank_key(a) < rank_key(b); });
  return kept;
}

/// Greedy-matched, envelope-interpolated AP computed from first principles.
inline double average_precision(const std::vector<Detection>& preds, const std::vector<GroundTruthSegment>& gts,
                                double threshold) {
  if (preds.empty() || gts.empty()) return 0.0;
  std::vector<std::size_t> idx(preds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto key = [&](std::size_t i) {
    const auto& p = preds[i];
    return std::make_tuple(-p.proposal.confidence, p.video_id, p.proposal.start, p.proposal.end, i);
  };
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  std::vector<bool> used(gts.size(), false);
  std::vector<int> hit;
  for (std::size_t i : idx) {
    int pick = -1;
    double pick_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].video_id != preds[i].video_id) continue;
      const double o = iou(preds[i].proposal.start, preds[i].proposal.end, gts[g].instance.start, gts[g].instance.end);
      if (o >= threshold && (pick < 0 || o > pick_iou)) {
        pick = static_cast<int>(g);
        pick_iou = o;
      }
    }
    if (pick >= 0) used[static_cast<std::size_t>(pick)] = true;
    hit.push_back(pick >= 0 ? 1 : 0);
  }

  const std::size_t P = hit.size();
  std::vector<double> prec(P), rec(P);
  int tp = 0;
  for (std::size_t r = 0; r < P; ++r) {
    tp += hit[r];
    prec[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
    rec[r] = static_cast<double>(tp) / static_cast<double>(gts.size());
  }
  double ap = 0.0;
  for (std::size_t r = 0; r < P; ++r) {
    double envelope = 0.0;
    for (std::size_t s = r; s < P; ++s) envelope = std::max(envelope, prec[s]);
    ap += (rec[r] - (r == 0 ? 0.0 : rec[r - 1])) * envelope;
  }
  return ap;
}

}  // namespace oracle

/// Small integer-grid proposal sets so ties and overlaps are common.
inline std::vector<Proposal> random_proposals(Rng& rng, std::size_t max_count, int num_classes) {
  std::uniform_int_distribution<std::size_t> count(0, max_count);
  std::uniform_int_distribution<int> cls(0, num_classes - 1), pos(0, 12), len(1, 6), conf(1, 10);
  std::vector<Proposal> out(count(rng));
  for (auto& p : out) {
    p.class_id = cls(rng);
    p.start = pos(rng);
    p.end = p.start + len(rng);
    p.confidence = conf(rng) / 10.0;
  }
  return out;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / ("gtal_test_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace gtal::test
