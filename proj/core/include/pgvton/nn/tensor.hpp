#pragma once

#include <pgvton/errors.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pgvton::nn {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

class Node;
using Tensor = std::shared_ptr<Node>;

/// A tape node: eager value plus a closure that scatters this node's
/// gradient into its parents. Values and gradients are double precision
/// throughout; all gradient-check tolerances in the tests rely on that.
class Node {
public:
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<Tensor> parents;
  std::function<void(Node&)> backward_fn;

  Node(Shape s, bool rg)
      : shape(std::move(s)), value(static_cast<std::size_t>(numel(shape)), 0.0),
        requires_grad(rg) {}

  std::size_t size() const { return value.size(); }

  double* grad_data() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad.data();
  }

  int dim(int i) const { return shape[i]; }
};

Tensor make_tensor(Shape shape, bool requires_grad = false);
Tensor constant(Shape shape, std::vector<double> data);
Tensor constant_like(Shape shape, double fill);
Tensor scalar(double v);

/// Trainable leaf.
Tensor parameter(Shape shape, std::vector<double> data);

/// Reverse-mode sweep from a scalar root. Gradients accumulate into
/// `grad` of every node reachable through requires_grad parents.
void backward(const Tensor& root);

/// Value of a scalar (1-element) tensor.
double item(const Tensor& t);

}  // namespace pgvton::nn
