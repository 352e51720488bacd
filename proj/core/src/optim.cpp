#include "vrfm/optim.hpp"

#include <cmath>

namespace vrfm {

OptimizerState make_optimizer_state(const std::vector<Parameter>& params, AdamWConfig cfg) {
  OptimizerState st;
  st.hyper = cfg;
  st.first_moment.reserve(params.size());
  st.second_moment.reserve(params.size());
  for (const Parameter& p : params) {
    st.first_moment.push_back(Matrix::Zero(p.values.rows(), p.values.cols()));
    st.second_moment.push_back(Matrix::Zero(p.values.rows(), p.values.cols()));
  }
  return st;
}

void adamw_step(std::vector<Parameter>& params, const std::vector<Matrix>& grads,
                OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw ShapeError("adamw_step: parameter/gradient/state count mismatch");

  const AdamWConfig& h = state.hyper;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (!p.requires_grad) continue;
    const Matrix& g = grads[i];
    if (g.rows() != p.values.rows() || g.cols() != p.values.cols())
      throw ShapeError("adamw_step: gradient shape mismatch for parameter " + p.name);
    if (!all_finite(g))
      throw NumericsError("adamw_step: non-finite gradient for parameter " + p.name);

    if (h.weight_decay != 0.0) p.values -= h.lr * h.weight_decay * p.values;

    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = h.beta1 * m + (1.0 - h.beta1) * g;
    v = h.beta2 * v + (1.0 - h.beta2) * g.cwiseProduct(g);
    const Matrix m_hat = m / bc1;
    const Matrix v_hat = v / bc2;
    p.values.array() -= h.lr * m_hat.array() / (v_hat.array().sqrt() + h.epsilon);
  }
}

}  // namespace vrfm
