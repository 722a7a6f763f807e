#include <pgvton/nn/adam.hpp>

#include <cmath>

namespace pgvton::nn {

Adam::Adam(const ParamStore& params, double lr_, double beta1_, double beta2_,
           double eps_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_), params_(params.items()) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step() {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].second;
    if (p->grad.size() != p->value.size()) continue;  // never touched
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (std::size_t j = 0; j < p->size(); ++j) {
      const double g = p->grad[j];
      m[j] = beta1 * m[j] + (1.0 - beta1) * g;
      v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p->value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) p->grad.clear();
}

}  // namespace pgvton::nn
