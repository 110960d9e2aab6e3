#pragma once

#include <cmath>
#include <vector>

#include "dre/errors.hpp"
#include "dre/tensor.hpp"

namespace dre {

// Adam with bias correction. Moment buffers are keyed by position, so the
// parameter list must keep a stable order across steps.
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState create(const std::vector<const Tensor*>& params, double lr) {
    AdamState s;
    s.lr = lr;
    for (const Tensor* p : params) {
      s.m.push_back(Tensor::zeros(p->rows, p->cols));
      s.v.push_back(Tensor::zeros(p->rows, p->cols));
    }
    return s;
  }

  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != m.size() || grads.size() != m.size())
      throw precondition_error("adam step: parameter list size changed");
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor& p = *params[k];
      const Tensor& g = *grads[k];
      if (!p.same_shape(g) || !p.same_shape(m[k]))
        throw precondition_error("adam step: gradient shape mismatch");
      if (!g.all_finite()) throw non_finite_error("adam step: non-finite gradient");
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[k].v[i] = beta1 * m[k].v[i] + (1.0 - beta1) * g.v[i];
        v[k].v[i] = beta2 * v[k].v[i] + (1.0 - beta2) * g.v[i] * g.v[i];
        const double mhat = m[k].v[i] / bc1;
        const double vhat = v[k].v[i] / bc2;
        p.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

}  // namespace dre
