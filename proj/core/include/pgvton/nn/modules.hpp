#pragma once

#include <pgvton/nn/ops.hpp>

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace pgvton::nn {

/// Ordered, named parameter registry. Names are stable identifiers used by
/// the checkpoint format and the optimizer; registration order is the
/// deterministic initialization order.
class ParamStore {
public:
  Tensor add(const std::string& name, Shape shape, std::vector<double> data);
  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return items_;
  }
  Tensor find(const std::string& name) const;
  std::size_t total_size() const;

private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

/// Weight initializers on an explicit engine; construction order of the
/// network fixes the draw order, so a fixed seed fixes the weights.
std::vector<double> normal_init(std::mt19937_64& rng, std::int64_t n,
                                double stddev);
std::vector<double> kaiming_init(std::mt19937_64& rng, std::int64_t n,
                                 std::int64_t fan_in);
std::vector<double> zeros_init(std::int64_t n);
std::vector<double> ones_init(std::int64_t n);

struct Linear {
  Tensor w, b;
  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out,
         std::mt19937_64& rng, bool zero_init = false);
  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
};

struct Conv2d {
  Tensor w, b;
  int stride = 1, pad = 1;
  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int in, int out, int k,
         int stride, int pad, std::mt19937_64& rng, bool zero_init = false);
  Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
};

struct LayerNorm {
  Tensor gain, bias;
  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

/// Pre-norm multi-head self-attention + feed-forward block over (N,T,D).
struct TransformerBlock {
  int heads = 4;
  LayerNorm ln1, ln2;
  Linear qkv, proj, fc1, fc2;
  TransformerBlock() = default;
  TransformerBlock(ParamStore& ps, const std::string& name, int dim, int heads,
                   int ffn_dim, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;
};

/// Multi-head self-attention over tokens (N,T,D); helper used by the block.
Tensor self_attention(const Tensor& x, const Linear& qkv, const Linear& proj,
                      int heads);

}  // namespace pgvton::nn
