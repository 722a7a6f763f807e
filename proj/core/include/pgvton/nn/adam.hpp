#pragma once

#include <pgvton/nn/modules.hpp>

namespace pgvton::nn {

/// Adam over a ParamStore. Moment buffers are exposed for checkpointing so
/// resumed runs continue bit-exactly.
class Adam {
public:
  Adam(const ParamStore& params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  /// Applies one update from the gradients accumulated on the parameters,
  /// then clears them.
  void step();
  void zero_grad();

  double lr;
  double beta1, beta2, eps;
  std::int64_t t = 0;  // update count

  std::vector<std::vector<double>>& m() { return m_; }
  std::vector<std::vector<double>>& v() { return v_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const {
    return params_;
  }

private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace pgvton::nn
