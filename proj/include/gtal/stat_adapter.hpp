#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gtal/model.hpp"

namespace gtal {

struct RefineConfig {
  int eta = 3;         // salience window, snippets
  double alpha = 1.4;  // refinement factor
  bool clamp = true;

  void validate() const;
};

enum class CalibrationTarget { as_printed, complement };

std::string to_string(CalibrationTarget t);
CalibrationTarget calibration_target_from_string(const std::string& s);

struct AdaptConfig {
  double lambda_att = 1.0;
  double lambda_cas = 1.0;
  double lambda_cal = 0.1;
  double ema_momentum = 0.9;
  /// Off reproduces the frozen-teacher ablation: the teacher never moves and
  /// adapt() hands back the student.
  bool ema_enabled = true;
  int epochs = 10;
  double learning_rate = 3e-5;
  int batch_size = 30;
  double blur_sigma = 1.0;
  int blur_kernel = 3;
  double student_dropout = 0.1;
  CalibrationTarget calibration_target = CalibrationTarget::as_printed;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TeacherStudent {
  ModelParams teacher;
  ModelParams student;
};

/// Per-channel temporal Gaussian blur with edge replication.
FeatureSequence blur_augment(const FeatureSequence& feats, double sigma, int kernel);
std::vector<double> gaussian_kernel(double sigma, int kernel);

/// Max attention over [n-eta, n-1] and [n+1, n+eta], clipped to the sequence.
/// An empty window yields phi[n].
std::pair<double, double> salience_sample(std::span<const double> phi, std::size_t n, int eta);

/// One simultaneous pass of the three-condition refinement rule.
std::vector<double> refine_attention(std::span<const double> phi, const RefineConfig& cfg);

double loss_att(std::span<const double> phi_hat_teacher, std::span<const double> phi_student);
double loss_cas(const Matrix& psi_teacher, const Matrix& psi_student);
double loss_cal(std::span<const double> phi_student, const Matrix& psi_student,
                CalibrationTarget target = CalibrationTarget::as_printed);

struct AdaptLossParts {
  double att = 0.0;
  double cas = 0.0;
  double cal = 0.0;
  double total = 0.0;  // lambda-weighted
};

AdaptLossParts total_adapt_loss(std::span<const double> phi_hat_teacher, const Matrix& psi_teacher,
                                std::span<const double> phi_student, const Matrix& psi_student,
                                const AdaptConfig& cfg);

struct AdaptLossWithUpstream {
  AdaptLossParts parts;
  std::vector<double> d_attention;  // w.r.t. phi_S
  Matrix d_cas;                     // w.r.t. Psi_S
};

AdaptLossWithUpstream total_adapt_loss_with_grad(std::span<const double> phi_hat_teacher, const Matrix& psi_teacher,
                                                 std::span<const double> phi_student, const Matrix& psi_student,
                                                 const AdaptConfig& cfg);

/// Fixed teacher-side targets for one video.
struct TeacherTargets {
  std::vector<double> refined_attention;
  Matrix cas;
};

TeacherTargets teacher_targets(const ModelParams& teacher, const FeatureSequence& clean, const RefineConfig& refine);

struct StudentGradient {
  AdaptLossParts parts;
  ParamGradients grad;
};

/// Total adaptation loss of the student on (already augmented) features for
/// fixed teacher targets, and its gradient w.r.t. the student parameters.
StudentGradient student_gradient(const ModelParams& student, const FeatureSequence& student_input,
                                 const TeacherTargets& targets, const DropoutMask* mask, const AdaptConfig& cfg);

/// theta_T <- m theta_T + (1 - m) theta_S, elementwise.
void ema_update(TeacherStudent& ts, double momentum);

struct AdaptEpochLog {
  int epoch = 0;
  AdaptLossParts mean;  // weighted components, averaged over videos
};

struct AdaptResult {
  TeacherStudent models;
  std::vector<AdaptEpochLog> log;
  /// Teacher when EMA is on, student otherwise.
  const ModelParams& inference_model(const AdaptConfig& cfg) const {
    return cfg.ema_enabled ? models.teacher : models.student;
  }
};

/// Self-supervised adaptation on an unlabeled target split. Video labels are never read.
AdaptResult adapt_full(const ModelParams& base, const Dataset& target_train, const RefineConfig& refine,
                       const AdaptConfig& cfg, Execution ex = Execution::parallel);

ModelParams adapt(const ModelParams& base, const Dataset& target_train, const RefineConfig& refine,
                  const AdaptConfig& cfg);

}  // namespace gtal
