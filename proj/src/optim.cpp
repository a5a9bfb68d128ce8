#include "enmdap/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "enmdap/error.hpp"

namespace enmdap {

namespace {

void check_shapes(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size())
    throw ShapeError(std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i].shape())
      throw ShapeError("parameter " + std::to_string(i) + " has shape " +
                       shape_string(params[i]->shape()) + ", gradient " +
                       shape_string(grads[i].shape()));
}

}  // namespace

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               AdamState& state, const AdamConfig& cfg) {
  check_shapes(params, grads);
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("adam: lr must be > 0");
  if (state.m.empty()) {
    for (Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: state sized for a different parameter list");

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double correct1 = 1.0 - std::pow(cfg.beta1, t);
  const double correct2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    const auto g = grads[i].values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correct1;
      const double v_hat = v[j] / correct2;
      p[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr) {
  check_shapes(params, grads);
  if (!(lr > 0.0)) throw std::invalid_argument("sgd: lr must be > 0");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    const auto g = grads[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
  }
}

}  // namespace enmdap
