#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>

#include "fuselm/error.hpp"

namespace fuselm {

struct AdamConfig {
  double lr = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // 0 disables clipping by global L2 norm

  void validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip norm must be >= 0");
  }
};

// First and second moments share the parameter container type.
template <typename Params>
struct AdamState {
  Params m;
  Params v;
  std::uint64_t step = 0;

  static AdamState fresh(const Params& params) {
    return {Params::zeros(params.config), Params::zeros(params.config), 0};
  }
};

namespace detail {

template <typename A, typename B>
void require_same_shape(const char* name, const A& a, const B& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string("shape mismatch in tensor ") + name + ": " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
  }
}

}  // namespace detail

// Global L2 norm of all gradient tensors, accumulated in double.
template <typename Params>
double grad_norm(const Params& grads) {
  double sq = 0.0;
  grads.for_each([&](const char*, const auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) sq += double(t.data()[i]) * double(t.data()[i]);
  });
  return std::sqrt(sq);
}

// One bias-corrected Adam update. `grads` is scaled in place when clipping
// is enabled and the norm exceeds the limit.
template <typename Params>
void adam_step(Params& params, Params& grads, AdamState<Params>& state, const AdamConfig& cfg) {
  if (state.step == 0 && state.m.config != params.config) state = AdamState<Params>::fresh(params);
  Params::zip([](const char* name, const auto& p, const auto& g, const auto& m,
                 const auto& v) {
    detail::require_same_shape(name, p, g);
    detail::require_same_shape(name, p, m);
    detail::require_same_shape(name, p, v);
  }, params, grads, state.m, state.v);

  if (cfg.clip_norm > 0.0) {
    const double norm = grad_norm(grads);
    if (norm > cfg.clip_norm) {
      const double scale = cfg.clip_norm / norm;
      grads.for_each([&](const char*, auto& t) { t *= static_cast<typename std::decay_t<decltype(t)>::Scalar>(scale); });
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  Params::zip(
      [&](const char*, auto& p, const auto& g, auto& m, auto& v) {
        using Scalar = typename std::decay_t<decltype(p)>::Scalar;
        const auto b1 = static_cast<Scalar>(cfg.beta1);
        const auto b2 = static_cast<Scalar>(cfg.beta2);
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          const Scalar gi = g.data()[i];
          Scalar& mi = m.data()[i];
          Scalar& vi = v.data()[i];
          mi = b1 * mi + (Scalar(1) - b1) * gi;
          vi = b2 * vi + (Scalar(1) - b2) * gi * gi;
          const double m_hat = double(mi) / c1;
          const double v_hat = double(vi) / c2;
          p.data()[i] -= static_cast<Scalar>(cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
        }
      },
      params, grads, state.m, state.v);
}

}  // namespace fuselm
