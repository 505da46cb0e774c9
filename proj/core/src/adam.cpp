#include "t4d/adam.hpp"

#include <cmath>

#include "t4d/error.hpp"

namespace t4d {
namespace {

template <typename Scalar>
void step_impl(Scalar* params, const double* grad, std::size_t n, AdamState& state,
               const AdamConfig& cfg) {
  if (state.m.size() != n) {
    if (!state.m.empty()) throw Error("train.nan", "adam state size does not match parameter group");
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (state.v.size() != n) throw Error("train.nan", "adam state size does not match parameter group");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    if (!std::isfinite(g)) throw Error("train.nan", "non-finite gradient in adam step");
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    const double next = static_cast<double>(params[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    if (!std::isfinite(next)) throw Error("train.nan", "non-finite parameter after adam step");
    params[i] = static_cast<Scalar>(next);
  }
}

}  // namespace

void adam_step(float* params, const double* grad, std::size_t n, AdamState& state,
               const AdamConfig& cfg) {
  step_impl(params, grad, n, state, cfg);
}

void adam_step(double* params, const double* grad, std::size_t n, AdamState& state,
               const AdamConfig& cfg) {
  step_impl(params, grad, n, state, cfg);
}

}  // namespace t4d
