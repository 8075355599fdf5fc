#include "gtal/optimizer.hpp"

#include <cmath>

namespace gtal {

Adam::Adam(const ModelParams& shape, Options opts)
    : opts_(opts),
      m_(ModelParams::zeros(shape.feature_dim, shape.hidden_dim, shape.num_classes)),
      v_(m_) {}

void Adam::step(ModelParams& params, const ParamGradients& grad) {
  if (!params.same_shape(grad) || !params.same_shape(m_)) throw Error("Adam::step: shape mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t t = 0; t < ModelParams::kNumTensors; ++t) {
    auto p = params.tensor(t);
    const auto g = grad.tensor(t);
    auto m = m_.tensor(t);
    auto v = v_.tensor(t);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
      p[i] -= opts_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + opts_.epsilon);
    }
  }
}

}  // namespace gtal
