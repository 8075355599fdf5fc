#include "gtal/stat_adapter.hpp"

#include <algorithm>
#include <cmath>

#include "gtal/optimizer.hpp"

namespace gtal {

void RefineConfig::validate() const {
  if (eta < 1) throw ConfigError("RefineConfig.eta must be >= 1");
  if (!(alpha >= 0.0)) throw ConfigError("RefineConfig.alpha must be >= 0");
}

std::string to_string(CalibrationTarget t) { return t == CalibrationTarget::as_printed ? "as_printed" : "complement"; }

CalibrationTarget calibration_target_from_string(const std::string& s) {
  if (s == "as_printed") return CalibrationTarget::as_printed;
  if (s == "complement") return CalibrationTarget::complement;
  throw ConfigError("unknown calibration_target '" + s + "' (expected as_printed or complement)");
}

void AdaptConfig::validate() const {
  if (lambda_att < 0.0 || lambda_cas < 0.0 || lambda_cal < 0.0) throw ConfigError("AdaptConfig: lambdas must be >= 0");
  if (!(ema_momentum >= 0.0 && ema_momentum <= 1.0)) throw ConfigError("AdaptConfig.ema_momentum must be in [0, 1]");
  if (epochs < 0) throw ConfigError("AdaptConfig.epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("AdaptConfig.learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("AdaptConfig.batch_size must be >= 1");
  if (blur_kernel < 1 || blur_kernel % 2 == 0) throw ConfigError("AdaptConfig.blur_kernel must be odd and >= 1");
  if (!(blur_sigma >= 0.0)) throw ConfigError("AdaptConfig.blur_sigma must be >= 0");
  if (!(student_dropout >= 0.0 && student_dropout < 1.0))
    throw ConfigError("AdaptConfig.student_dropout must be in [0, 1)");
}

// ---- augmentation ----

std::vector<double> gaussian_kernel(double sigma, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("blur kernel width must be odd and >= 1");
  const int half = kernel / 2;
  std::vector<double> k(static_cast<std::size_t>(kernel), 0.0);
  if (sigma <= 0.0) {
    k[static_cast<std::size_t>(half)] = 1.0;
    return k;
  }
  double sum = 0.0;
  for (int j = -half; j <= half; ++j) {
    const double w = std::exp(-static_cast<double>(j * j) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(j + half)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

FeatureSequence blur_augment(const FeatureSequence& feats, double sigma, int kernel) {
  const std::vector<double> k = gaussian_kernel(sigma, kernel);
  const long long half = kernel / 2;
  const long long N = static_cast<long long>(feats.length());
  const std::size_t D = feats.dim();
  FeatureSequence out{Matrix(feats.length(), D), feats.snippet_stride};
  for (long long n = 0; n < N; ++n) {
    auto dst = out.data.row(static_cast<std::size_t>(n));
    for (long long j = -half; j <= half; ++j) {
      const auto src = feats.data.row(static_cast<std::size_t>(std::clamp(n + j, 0LL, N - 1)));
      const double w = k[static_cast<std::size_t>(j + half)];
      for (std::size_t d = 0; d < D; ++d) dst[d] += w * src[d];
    }
  }
  return out;
}

// ---- temporal refinement ----

std::pair<double, double> salience_sample(std::span<const double> phi, std::size_t n, int eta) {
  const std::size_t N = phi.size();
  const auto e = static_cast<std::size_t>(std::max(eta, 1));
  double left = phi[n], right = phi[n];
  if (n > 0) {
    const std::size_t lo = n >= e ? n - e : 0;
    left = *std::max_element(phi.begin() + static_cast<std::ptrdiff_t>(lo), phi.begin() + static_cast<std::ptrdiff_t>(n));
  }
  if (n + 1 < N) {
    const std::size_t hi = std::min(N, n + 1 + e);
    right = *std::max_element(phi.begin() + static_cast<std::ptrdiff_t>(n + 1), phi.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return {left, right};
}

std::vector<double> refine_attention(std::span<const double> phi, const RefineConfig& cfg) {
  cfg.validate();
  std::vector<double> out(phi.begin(), phi.end());
  for (std::size_t n = 0; n < phi.size(); ++n) {
    const auto [left, right] = salience_sample(phi, n, cfg.eta);
    const double ref = std::min(left, right);
    if (phi[n] < ref) {
      double v = cfg.alpha * phi[n] + (1.0 - cfg.alpha) * ref;
      if (cfg.clamp) v = std::clamp(v, 0.0, 1.0);
      out[n] = v;
    }
  }
  return out;
}

// ---- alignment losses ----

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(what);
}

double cal_target(double phi, CalibrationTarget t) { return t == CalibrationTarget::as_printed ? phi : 1.0 - phi; }

}  // namespace

double loss_att(std::span<const double> phi_hat_teacher, std::span<const double> phi_student) {
  require(phi_hat_teacher.size() == phi_student.size() && !phi_student.empty(), "loss_att: length mismatch");
  double s = 0.0;
  for (std::size_t n = 0; n < phi_student.size(); ++n) {
    const double d = phi_hat_teacher[n] - phi_student[n];
    s += d * d;
  }
  return s / static_cast<double>(phi_student.size());
}

double loss_cas(const Matrix& psi_teacher, const Matrix& psi_student) {
  require(psi_teacher.rows() == psi_student.rows() && psi_teacher.cols() == psi_student.cols() && !psi_student.empty(),
          "loss_cas: shape mismatch");
  double s = 0.0;
  for (std::size_t n = 0; n < psi_student.rows(); ++n)
    for (std::size_t c = 0; c < psi_student.cols(); ++c) {
      const double t = psi_teacher(n, c);
      if (t > 0.0) s += t * (std::log(t) - safe_log(psi_student(n, c)));
    }
  return s / static_cast<double>(psi_student.rows());
}

double loss_cal(std::span<const double> phi_student, const Matrix& psi_student, CalibrationTarget target) {
  require(phi_student.size() == psi_student.rows() && !phi_student.empty(), "loss_cal: shape mismatch");
  const std::size_t bg = psi_student.cols() - 1;
  double s = 0.0;
  for (std::size_t n = 0; n < phi_student.size(); ++n) {
    const double y = cal_target(phi_student[n], target);
    const double b = psi_student(n, bg);
    s += -y * safe_log(b) - (1.0 - y) * safe_log(1.0 - b);
  }
  return s / static_cast<double>(phi_student.size());
}

AdaptLossParts total_adapt_loss(std::span<const double> phi_hat_teacher, const Matrix& psi_teacher,
                                std::span<const double> phi_student, const Matrix& psi_student,
                                const AdaptConfig& cfg) {
  AdaptLossParts p;
  p.att = loss_att(phi_hat_teacher, phi_student);
  p.cas = loss_cas(psi_teacher, psi_student);
  p.cal = loss_cal(phi_student, psi_student, cfg.calibration_target);
  p.total = cfg.lambda_att * p.att + cfg.lambda_cas * p.cas + cfg.lambda_cal * p.cal;
  return p;
}

AdaptLossWithUpstream total_adapt_loss_with_grad(std::span<const double> phi_hat_teacher, const Matrix& psi_teacher,
                                                 std::span<const double> phi_student, const Matrix& psi_student,
                                                 const AdaptConfig& cfg) {
  AdaptLossWithUpstream r;
  r.parts = total_adapt_loss(phi_hat_teacher, psi_teacher, phi_student, psi_student, cfg);
  const std::size_t N = phi_student.size(), C1 = psi_student.cols(), bg = C1 - 1;
  const double inv_n = 1.0 / static_cast<double>(N);
  r.d_attention.assign(N, 0.0);
  r.d_cas = Matrix(N, C1);
  const double sign = cfg.calibration_target == CalibrationTarget::as_printed ? 1.0 : -1.0;
  for (std::size_t n = 0; n < N; ++n) {
    r.d_attention[n] += cfg.lambda_att * 2.0 * (phi_student[n] - phi_hat_teacher[n]) * inv_n;
    for (std::size_t c = 0; c < C1; ++c) {
      const double s = psi_student(n, c);
      if (s > kLogClamp) r.d_cas(n, c) += cfg.lambda_cas * (-psi_teacher(n, c) / s) * inv_n;
    }
    const double y = cal_target(phi_student[n], cfg.calibration_target);
    const double b = psi_student(n, bg);
    r.d_attention[n] += cfg.lambda_cal * sign * (-safe_log(b) + safe_log(1.0 - b)) * inv_n;
    double db = 0.0;
    if (b > kLogClamp) db -= y / b;
    if (1.0 - b > kLogClamp) db += (1.0 - y) / (1.0 - b);
    r.d_cas(n, bg) += cfg.lambda_cal * db * inv_n;
  }
  return r;
}

TeacherTargets teacher_targets(const ModelParams& teacher, const FeatureSequence& clean, const RefineConfig& refine) {
  ForwardOutput out = forward(teacher, clean);
  return {refine_attention(out.attention, refine), std::move(out.cas)};
}

StudentGradient student_gradient(const ModelParams& student, const FeatureSequence& student_input,
                                 const TeacherTargets& targets, const DropoutMask* mask, const AdaptConfig& cfg) {
  const ForwardCache cache = forward_cached(student, student_input, mask);
  const AdaptLossWithUpstream l = total_adapt_loss_with_grad(targets.refined_attention, targets.cas, cache.out.attention,
                                                             cache.out.cas, cfg);
  return {l.parts, backward(student, student_input, cache, l.d_attention, &l.d_cas)};
}

// ---- mean teacher ----

void ema_update(TeacherStudent& ts, double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("ema_update: momentum must be in [0, 1]");
  if (!ts.teacher.same_shape(ts.student)) throw Error("ema_update: teacher/student shape mismatch");
  if (momentum == 1.0) return;
  if (momentum == 0.0) {
    ts.teacher = ts.student;
    return;
  }
  const double rate = 1.0 - momentum;
  for (std::size_t t = 0; t < ModelParams::kNumTensors; ++t) {
    auto teacher = ts.teacher.tensor(t);
    const auto student = ts.student.tensor(t);
    for (std::size_t i = 0; i < teacher.size(); ++i) teacher[i] += rate * (student[i] - teacher[i]);
  }
}

// ---- adaptation loop ----

AdaptResult adapt_full(const ModelParams& base, const Dataset& target_train, const RefineConfig& refine,
                       const AdaptConfig& cfg, Execution ex) {
  refine.validate();
  cfg.validate();
  AdaptResult r{{base, base}, {}};
  if (cfg.epochs == 0 || target_train.videos.empty()) return r;

  std::vector<FeatureSequence> blurred;
  blurred.reserve(target_train.videos.size());
  for (const auto& v : target_train.videos) blurred.push_back(blur_augment(v.features, cfg.blur_sigma, cfg.blur_kernel));

  Adam opt(r.models.student, {.learning_rate = cfg.learning_rate});
  Rng shuffle_rng(substream_seed(cfg.seed, "adapt-shuffle"));
  const std::uint64_t dropout_seed = substream_seed(cfg.seed, "adapt-dropout");
  std::vector<std::size_t> order(target_train.videos.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const bool any_loss = cfg.lambda_att > 0.0 || cfg.lambda_cas > 0.0 || cfg.lambda_cal > 0.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    AdaptLossParts sum;
    int batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const std::uint64_t step_seed = substream_seed(dropout_seed, static_cast<std::uint64_t>(opt.steps()));
      const auto& teacher = r.models.teacher;
      const auto& student = r.models.student;
      auto per_video = map_indexed(end - begin, ex, [&](std::size_t i) {
        const std::size_t vi = order[begin + i];
        const TeacherTargets targets = teacher_targets(teacher, target_train.videos[vi].features, refine);
        DropoutMask mask;
        const bool use_mask = cfg.student_dropout > 0.0;
        if (use_mask) {
          Rng rng(substream_seed(step_seed, static_cast<std::uint64_t>(i)));
          mask = make_dropout_mask(blurred[vi].length(), student.hidden_dim, cfg.student_dropout, rng);
        }
        return student_gradient(student, blurred[vi], targets, use_mask ? &mask : nullptr, cfg);
      });

      ParamGradients grad = ModelParams::zeros(base.feature_dim, base.hidden_dim, base.num_classes);
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (const auto& pv : per_video) {
        if (!std::isfinite(pv.parts.total))
          throw Error("adapt: non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index));
        sum.att += pv.parts.att;
        sum.cas += pv.parts.cas;
        sum.cal += pv.parts.cal;
        sum.total += pv.parts.total;
        if (any_loss) accumulate(grad, pv.grad, inv);
      }
      grad.check_finite("adapt epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index));
      opt.step(r.models.student, grad);
      if (cfg.ema_enabled) ema_update(r.models, cfg.ema_momentum);
    }
    const double inv_n = 1.0 / static_cast<double>(order.size());
    r.log.push_back({epoch, {sum.att * inv_n, sum.cas * inv_n, sum.cal * inv_n, sum.total * inv_n}});
  }
  return r;
}

ModelParams adapt(const ModelParams& base, const Dataset& target_train, const RefineConfig& refine,
                  const AdaptConfig& cfg) {
  AdaptResult r = adapt_full(base, target_train, refine, cfg);
  return cfg.ema_enabled ? std::move(r.models.teacher) : std::move(r.models.student);
}

}  // namespace gtal
