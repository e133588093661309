#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace fuselm::testing {

struct GradMismatch {
  std::string tensor;
  long index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel = 0.0;
};

// Worst central-difference disagreement over every element of every tensor.
// `loss(params)` must return the summed NLL in double.
template <typename Params, typename Loss>
GradMismatch worst_gradient_error(Params params, const Params& grads, Loss&& loss, double h = 1e-4) {
  GradMismatch worst;
  Params::zip(
      [&](const char* name, auto& p, const auto& g) {
        for (long i = 0; i < p.size(); ++i) {
          const double saved = p.data()[i];
          p.data()[i] = saved + h;
          const double up = loss(params);
          p.data()[i] = saved - h;
          const double down = loss(params);
          p.data()[i] = saved;
          const double numeric = (up - down) / (2 * h);
          const double analytic = g.data()[i];
          const double rel = std::abs(analytic - numeric) /
                             std::max({std::abs(analytic), std::abs(numeric), 1e-6});
          if (rel > worst.rel) worst = {name, i, analytic, numeric, rel};
        }
      },
      params, grads);
  return worst;
}

}  // namespace fuselm::testing
