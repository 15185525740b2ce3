/*
 * Copyright 2026 The vgsum Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "vgsum/tensor.hpp"

namespace vgsum {

/// Worst relative disagreement between analytic and central-difference gradients.
struct GradReport {
  std::vector<double> per_parameter;  ///< max relative error for each parameter tensor
  double max_error = 0.0;
};

/// Compares backward() against (f(p+ε) − f(p−ε)) / 2ε for every entry of every
/// parameter. Relative error uses the denominator max(|analytic|, |numeric|, 1e-8).
/// `f` must rebuild its graph from `params` on each call and be deterministic.
/// Central is (f(p+e) - f(p-e)) / 2e. FivePoint adds the +-2e samples,
/// cancelling the e^2 truncation term; it costs twice the evaluations.
enum class Stencil { Central, FivePoint };

template <typename Scalar>
GradReport grad_check(const std::function<BasicTensor<Scalar>()>& f, std::vector<BasicTensor<Scalar>> params,
                      Scalar eps = Scalar(1e-4), Stencil stencil = Stencil::Central) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  auto evaluate = [&f]() {
    const Scalar v = f().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: objective is not finite");
    return v;
  };
  {
    BasicTensor<Scalar> loss = f();
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: objective is not finite");
    backward(loss);
  }

  GradReport report;
  NoGradGuard no_grad;
  for (auto& p : params) {
    const RowMatrix<Scalar> analytic = p.grad();
    double worst = 0.0;
    Scalar* data = p.mutable_value().data();
    for (Index i = 0; i < p.numel(); ++i) {
      const Scalar saved = data[i];
      const auto at = [&](Scalar delta) {
        data[i] = saved + delta;
        const Scalar v = evaluate();
        data[i] = saved;
        return v;
      };
      const Scalar near = at(eps) - at(-eps);
      double numeric = static_cast<double>(near / (Scalar(2) * eps));
      if (stencil == Stencil::FivePoint) {
        const Scalar far = at(Scalar(2) * eps) - at(Scalar(-2) * eps);
        numeric = static_cast<double>((Scalar(8) * near - far) / (Scalar(12) * eps));
      }
      const double a = static_cast<double>(analytic.data()[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    report.per_parameter.push_back(worst);
    report.max_error = std::max(report.max_error, worst);
  }
  return report;
}

}  // namespace vgsum
