#pragma once

#include <vector>

#include "gtal/model.hpp"

namespace gtal {

/// Adaptive-moment gradient descent over a ModelParams record.
class Adam {
 public:
  struct Options {
    double learning_rate = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam(const ModelParams& shape, Options opts);

  void step(ModelParams& params, const ParamGradients& grad);
  long steps() const { return t_; }

 private:
  Options opts_;
  ModelParams m_;
  ModelParams v_;
  long t_ = 0;
};

}  // namespace gtal
