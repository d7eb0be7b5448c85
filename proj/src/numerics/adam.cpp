#include "headlab/numerics/adam.hpp"

#include <cmath>

#include "headlab/errors.hpp"

namespace headlab {

AdamState::AdamState(AdamOptions opts, std::span<const Matrix* const> params) : options(opts) {
  if (!(opts.learning_rate > 0.0) || !(opts.beta1 >= 0.0 && opts.beta1 < 1.0) ||
      !(opts.beta2 >= 0.0 && opts.beta2 < 1.0) || !(opts.epsilon > 0.0))
    throw InvalidInput("adam: invalid hyperparameters");
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const Matrix* p : params) {
    first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
    second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void adam_step(AdamState& state, std::span<Matrix* const> params, std::span<const Matrix* const> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw InvalidInput("adam: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = state.first_moment[i];
    if (params[i]->rows() != m.rows() || params[i]->cols() != m.cols() ||
        grads[i]->rows() != m.rows() || grads[i]->cols() != m.cols())
      throw InvalidInput("adam: shape mismatch for tensor " + std::to_string(i));
  }
  const auto& o = state.options;
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const Matrix& g = *grads[i];
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseProduct(g);
    params[i]->array() -= o.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + o.epsilon);
  }
}

}  // namespace headlab
