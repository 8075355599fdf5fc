#include "gtal/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gtal/optimizer.hpp"
#include "json.hpp"

namespace gtal {

// ---- ModelParams ----

const std::array<const char*, ModelParams::kNumTensors>& ModelParams::tensor_names() {
  static const std::array<const char*, kNumTensors> names = {"embed_w", "embed_b", "attn_w",
                                                             "attn_b",  "cls_w",   "cls_b"};
  return names;
}

ModelParams ModelParams::zeros(int feature_dim, int hidden_dim, int num_classes) {
  if (feature_dim < 1 || hidden_dim < 1 || num_classes < 1) throw ConfigError("ModelParams: dimensions must be >= 1");
  ModelParams p;
  p.feature_dim = feature_dim;
  p.hidden_dim = hidden_dim;
  p.num_classes = num_classes;
  const auto D = static_cast<std::size_t>(feature_dim);
  const auto H = static_cast<std::size_t>(hidden_dim);
  const auto C1 = static_cast<std::size_t>(num_classes + 1);
  p.embed_w.assign(3 * D * H, 0.0);
  p.embed_b.assign(H, 0.0);
  p.attn_w.assign(H, 0.0);
  p.attn_b.assign(1, 0.0);
  p.cls_w.assign(H * C1, 0.0);
  p.cls_b.assign(C1, 0.0);
  return p;
}

std::span<double> ModelParams::tensor(std::size_t i) {
  switch (i) {
    case 0: return embed_w;
    case 1: return embed_b;
    case 2: return attn_w;
    case 3: return attn_b;
    case 4: return cls_w;
    case 5: return cls_b;
  }
  throw Error("ModelParams::tensor: index out of range");
}

std::span<const double> ModelParams::tensor(std::size_t i) const {
  return const_cast<ModelParams*>(this)->tensor(i);
}

std::size_t ModelParams::size() const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < kNumTensors; ++t) s += tensor(t).size();
  return s;
}

bool ModelParams::same_shape(const ModelParams& o) const {
  if (feature_dim != o.feature_dim || hidden_dim != o.hidden_dim || num_classes != o.num_classes) return false;
  for (std::size_t t = 0; t < kNumTensors; ++t)
    if (tensor(t).size() != o.tensor(t).size()) return false;
  return true;
}

void ModelParams::check_finite(const std::string& context) const {
  for (std::size_t t = 0; t < kNumTensors; ++t) {
    const auto v = tensor(t);
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!std::isfinite(v[i]))
        throw Error(context + ": non-finite value in '" + tensor_names()[t] + "' at index " + std::to_string(i));
  }
}

// ---- forward / backward ----

DropoutMask make_dropout_mask(std::size_t N, int hidden_dim, double rate, Rng& rng) {
  DropoutMask m{Matrix(N, static_cast<std::size_t>(hidden_dim), 1.0)};
  if (rate <= 0.0) return m;
  std::bernoulli_distribution drop(rate);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& s : m.scale.values()) s = drop(rng) ? 0.0 : keep_scale;
  return m;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

ForwardCache forward_cached(const ModelParams& params, const FeatureSequence& feats, const DropoutMask* mask) {
  if (static_cast<int>(feats.dim()) != params.feature_dim)
    throw Error("forward: feature dimension " + std::to_string(feats.dim()) + " does not match model input " +
                std::to_string(params.feature_dim));
  if (feats.length() < 1) throw Error("forward: empty feature sequence");
  const std::size_t N = feats.length();
  const auto H = static_cast<std::size_t>(params.hidden_dim);
  if (mask && (mask->scale.rows() != N || mask->scale.cols() != H)) throw Error("forward: dropout mask shape mismatch");

  ForwardCache c;
  kernels::temporal_conv_forward(feats.data, params.embed_w, params.embed_b, c.pre);
  c.hidden = Matrix(N, H);
  if (mask) c.dropout_scale = mask->scale;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t h = 0; h < H; ++h) {
      const double r = std::max(0.0, c.pre(n, h));
      c.hidden(n, h) = mask ? r * mask->scale(n, h) : r;
    }

  c.out.attention.resize(N);
  for (std::size_t n = 0; n < N; ++n) {
    double z = params.attn_b[0];
    const auto hr = c.hidden.row(n);
    for (std::size_t h = 0; h < H; ++h) z += hr[h] * params.attn_w[h];
    c.out.attention[n] = sigmoid(z);
  }
  kernels::dense_forward(c.hidden, params.cls_w, params.cls_b, c.out.cas);
  for (std::size_t n = 0; n < N; ++n) softmax_inplace(c.out.cas.row(n));
  return c;
}

ForwardOutput forward(const ModelParams& params, const FeatureSequence& feats, double dropout_rate, Rng* rng) {
  if (dropout_rate > 0.0 && rng) {
    const DropoutMask m = make_dropout_mask(feats.length(), params.hidden_dim, dropout_rate, *rng);
    return forward_cached(params, feats, &m).out;
  }
  return forward_cached(params, feats, nullptr).out;
}

ParamGradients backward(const ModelParams& params, const FeatureSequence& feats, const ForwardCache& cache,
                        std::span<const double> d_attention, const Matrix* d_cas) {
  const std::size_t N = feats.length();
  const auto H = static_cast<std::size_t>(params.hidden_dim);
  const auto C1 = static_cast<std::size_t>(params.num_outputs());
  ParamGradients g = ModelParams::zeros(params.feature_dim, params.hidden_dim, params.num_classes);
  const auto& phi = cache.out.attention;
  const auto& psi = cache.out.cas;

  Matrix d_hidden(N, H);
  if (d_cas && !d_cas->empty()) {
    Matrix d_logit(N, C1);
    for (std::size_t n = 0; n < N; ++n) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C1; ++c) dot += (*d_cas)(n, c) * psi(n, c);
      for (std::size_t c = 0; c < C1; ++c) d_logit(n, c) = psi(n, c) * ((*d_cas)(n, c) - dot);
    }
    kernels::dense_backward(cache.hidden, params.cls_w, d_logit, g.cls_w, g.cls_b, &d_hidden);
  }
  if (!d_attention.empty()) {
    for (std::size_t n = 0; n < N; ++n) {
      const double dz = d_attention[n] * phi[n] * (1.0 - phi[n]);
      g.attn_b[0] += dz;
      const auto hr = cache.hidden.row(n);
      auto dh = d_hidden.row(n);
      for (std::size_t h = 0; h < H; ++h) {
        g.attn_w[h] += hr[h] * dz;
        dh[h] += dz * params.attn_w[h];
      }
    }
  }
  // Through dropout and ReLU: hidden = relu(pre) * scale, so d_pre = d_hidden * scale on active units.
  Matrix d_pre(N, H);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t h = 0; h < H; ++h) {
      if (cache.pre(n, h) <= 0.0) continue;
      d_pre(n, h) = cache.dropout_scale.empty() ? d_hidden(n, h) : d_hidden(n, h) * cache.dropout_scale(n, h);
    }
  kernels::temporal_conv_backward(feats.data, d_pre, g.embed_w, g.embed_b);
  return g;
}

// ---- aggregation and loss ----

std::size_t topk_count(std::size_t N, int r_agg) {
  if (r_agg < 1) throw ConfigError("topk_ratio must be >= 1");
  const std::size_t r = static_cast<std::size_t>(r_agg);
  return std::max<std::size_t>(1, (N + r - 1) / r);
}

std::vector<double> topk_mean(const Matrix& scores, int r_agg, std::vector<std::vector<std::size_t>>* selection) {
  const std::size_t N = scores.rows(), C = scores.cols();
  if (N < 1) throw Error("topk_mean: empty score matrix");
  const std::size_t k = topk_count(N, r_agg);
  std::vector<double> agg(C, 0.0);
  if (selection) selection->assign(C, {});
  std::vector<std::size_t> idx(N);
  for (std::size_t c = 0; c < C; ++c) {
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double va = scores(a, c), vb = scores(b, c);
                        return va > vb || (va == vb && a < b);
                      });
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += scores(idx[i], c);
    agg[c] = s / static_cast<double>(k);
    if (selection) (*selection)[c].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return agg;
}

std::vector<double> aggregate_topk(const Matrix& scores, int r_agg) {
  std::vector<double> v = topk_mean(scores, r_agg);
  softmax_inplace(v);
  return v;
}

Matrix attention_weighted(const ForwardOutput& out) {
  Matrix m = out.cas;
  for (std::size_t n = 0; n < m.rows(); ++n)
    for (double& x : m.row(n)) x *= out.attention[n];
  return m;
}

VideoScores video_scores(const ForwardOutput& out, int r_agg) {
  return {aggregate_topk(out.cas, r_agg), aggregate_topk(attention_weighted(out), r_agg)};
}

namespace {

// Cross-entropy of a softmax over pooled scores; returns loss, fills d(pooled).
double softmax_ce(const std::vector<double>& pooled, const std::vector<double>& target, std::vector<double>& d_pooled) {
  std::vector<double> p = pooled;
  softmax_inplace(p);
  double loss = 0.0;
  std::vector<double> dp(p.size(), 0.0);
  for (std::size_t c = 0; c < p.size(); ++c) {
    loss -= target[c] * safe_log(p[c]);
    if (p[c] > kLogClamp) dp[c] = -target[c] / p[c];
  }
  double dot = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) dot += dp[c] * p[c];
  d_pooled.resize(p.size());
  for (std::size_t c = 0; c < p.size(); ++c) d_pooled[c] = p[c] * (dp[c] - dot);
  return loss;
}

}  // namespace

LossWithUpstream classification_loss_with_grad(const ForwardOutput& out, std::span<const int> label, int r_agg) {
  const std::size_t N = out.cas.rows(), C1 = out.cas.cols();
  if (label.size() + 1 != C1) throw Error("classification_loss: label length does not match CAS width");
  const int positives = std::count_if(label.begin(), label.end(), [](int v) { return v != 0; });
  if (positives == 0) throw Error("classification_loss: label has no action class");

  std::vector<double> y_base(C1, 0.0), y_supp(C1, 0.0);
  for (std::size_t c = 0; c + 1 < C1; ++c) {
    const double v = label[c] != 0 ? 1.0 : 0.0;
    y_base[c] = v / (positives + 1.0);
    y_supp[c] = v / positives;
  }
  y_base[C1 - 1] = 1.0 / (positives + 1.0);

  std::vector<std::vector<std::size_t>> sel_base, sel_supp;
  const Matrix weighted = attention_weighted(out);
  const auto pooled_base = topk_mean(out.cas, r_agg, &sel_base);
  const auto pooled_supp = topk_mean(weighted, r_agg, &sel_supp);

  LossWithUpstream r;
  std::vector<double> d_base, d_supp;
  r.loss = softmax_ce(pooled_base, y_base, d_base) + softmax_ce(pooled_supp, y_supp, d_supp);

  const double inv_k = 1.0 / static_cast<double>(topk_count(N, r_agg));
  r.d_cas = Matrix(N, C1);
  r.d_attention.assign(N, 0.0);
  for (std::size_t c = 0; c < C1; ++c) {
    for (std::size_t n : sel_base[c]) r.d_cas(n, c) += d_base[c] * inv_k;
    for (std::size_t n : sel_supp[c]) {
      const double dm = d_supp[c] * inv_k;
      r.d_cas(n, c) += dm * out.attention[n];
      r.d_attention[n] += dm * out.cas(n, c);
    }
  }
  return r;
}

double classification_loss(const ForwardOutput& out, std::span<const int> label, int r_agg) {
  return classification_loss_with_grad(out, label, r_agg).loss;
}

// ---- training ----

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig.learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("TrainConfig.batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("TrainConfig.epochs must be >= 0");
  if (topk_ratio < 1) throw ConfigError("TrainConfig.topk_ratio must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("TrainConfig.dropout must be in [0, 1)");
  if (hidden_dim < 1) throw ConfigError("TrainConfig.hidden_dim must be >= 1");
}

BatchGradient classification_gradients(const ModelParams& params, std::span<const VideoRecord* const> batch,
                                       const TrainConfig& cfg, std::uint64_t mask_seed, Execution ex) {
  if (batch.empty()) throw Error("classification_gradients: empty batch");
  struct PerVideo {
    double loss = 0.0;
    ParamGradients grad;
  };
  auto per_video = map_indexed(batch.size(), ex, [&](std::size_t i) {
    const VideoRecord& v = *batch[i];
    DropoutMask mask;
    const bool use_mask = cfg.dropout > 0.0;
    if (use_mask) {
      Rng rng(substream_seed(mask_seed, static_cast<std::uint64_t>(i)));
      mask = make_dropout_mask(v.features.length(), params.hidden_dim, cfg.dropout, rng);
    }
    const ForwardCache cache = forward_cached(params, v.features, use_mask ? &mask : nullptr);
    const LossWithUpstream l = classification_loss_with_grad(cache.out, v.label, cfg.topk_ratio);
    return PerVideo{l.loss, backward(params, v.features, cache, l.d_attention, &l.d_cas)};
  });

  BatchGradient out{0.0, ModelParams::zeros(params.feature_dim, params.hidden_dim, params.num_classes)};
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& pv : per_video) {
    out.mean_loss += pv.loss * inv;
    accumulate(out.grad, pv.grad, inv);
  }
  out.grad.check_finite("classification_gradients");
  return out;
}

ModelParams init_params(int feature_dim, int hidden_dim, int num_classes, Rng& rng) {
  ModelParams p = ModelParams::zeros(feature_dim, hidden_dim, num_classes);
  auto fill = [&](std::span<double> t, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& x : t) x = u(rng);
  };
  fill(p.embed_w, 3.0 * feature_dim);
  fill(p.embed_b, 3.0 * feature_dim);
  fill(p.attn_w, hidden_dim);
  fill(p.attn_b, hidden_dim);
  fill(p.cls_w, hidden_dim);
  fill(p.cls_b, hidden_dim);
  return p;
}

TrainResult train_base(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.split != Split::train) throw ConfigError("train_base: dataset split must be train");
  if (ds.videos.empty()) throw ConfigError("train_base: empty dataset");
  Rng init_rng(substream_seed(cfg.seed, "init"));
  TrainResult r{init_params(static_cast<int>(ds.feature_dim()), cfg.hidden_dim, ds.num_classes, init_rng), {}};

  Adam opt(r.params, {.learning_rate = cfg.learning_rate});
  Rng shuffle_rng(substream_seed(cfg.seed, "shuffle"));
  const std::uint64_t dropout_seed = substream_seed(cfg.seed, "dropout");
  std::vector<const VideoRecord*> order;
  for (const auto& v : ds.videos) order.push_back(&v);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const VideoRecord* const> batch(order.data() + begin, end - begin);
      const BatchGradient bg =
          classification_gradients(r.params, batch, cfg, substream_seed(dropout_seed, static_cast<std::uint64_t>(opt.steps())));
      loss_sum += bg.mean_loss * static_cast<double>(batch.size());
      opt.step(r.params, bg.grad);
    }
    r.log.push_back({epoch, loss_sum / static_cast<double>(order.size())});
  }
  r.params.check_finite("train_base");
  return r;
}

double mean_classification_loss(const ModelParams& params, const Dataset& ds, int r_agg) {
  const auto losses = map_indexed(ds.videos.size(), Execution::parallel, [&](std::size_t i) {
    return classification_loss(forward(params, ds.videos[i].features), ds.videos[i].label, r_agg);
  });
  double s = 0.0;
  for (double l : losses) s += l;
  return s / static_cast<double>(std::max<std::size_t>(1, losses.size()));
}

// ---- checkpoint ----

void save_checkpoint(const ModelParams& params, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["feature_dim"] = params.feature_dim;
  header["hidden_dim"] = params.hidden_dim;
  header["num_classes"] = params.num_classes;
  auto tensors = nlohmann::json::array();
  for (std::size_t t = 0; t < ModelParams::kNumTensors; ++t)
    tensors.push_back({{"name", ModelParams::tensor_names()[t]}, {"size", params.tensor(t).size()}});
  header["tensors"] = tensors;

  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + file.string() + " for writing");
  os << header.dump() << '\n';
  for (std::size_t t = 0; t < ModelParams::kNumTensors; ++t)
    for (double x : params.tensor(t)) {
      const auto bits = std::bit_cast<std::uint64_t>(x);
      unsigned char b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
      os.write(reinterpret_cast<const char*>(b), 8);
    }
  if (!os) throw Error("write failed: " + file.string());
}

ModelParams load_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw Error("cannot open " + file.string());
  std::string line;
  if (!std::getline(is, line)) throw Error(file.string() + ": missing header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(file.string() + ": malformed header: " + e.what());
  }
  ModelParams p;
  try {
    if (h.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw Error(file.string() + ": field 'format_version': unknown version");
    p = ModelParams::zeros(h.at("feature_dim").get<int>(), h.at("hidden_dim").get<int>(), h.at("num_classes").get<int>());
    const auto& tensors = h.at("tensors");
    if (tensors.size() != ModelParams::kNumTensors) throw Error(file.string() + ": field 'tensors': wrong count");
    for (std::size_t t = 0; t < ModelParams::kNumTensors; ++t) {
      if (tensors[t].at("name").get<std::string>() != ModelParams::tensor_names()[t] ||
          tensors[t].at("size").get<std::size_t>() != p.tensor(t).size())
        throw Error(file.string() + ": tensor '" + ModelParams::tensor_names()[t] + "' does not match declared dims");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(file.string() + ": malformed header field: " + e.what());
  }
  for (std::size_t t = 0; t < ModelParams::kNumTensors; ++t)
    for (double& x : p.tensor(t)) {
      unsigned char b[8];
      if (!is.read(reinterpret_cast<char*>(b), 8))
        throw Error(file.string() + ": payload truncated in '" + ModelParams::tensor_names()[t] + "'");
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
      x = std::bit_cast<double>(bits);
    }
  if (is.peek() != std::char_traits<char>::eof()) throw Error(file.string() + ": trailing bytes after payload");
  return p;
}

}  // namespace gtal
