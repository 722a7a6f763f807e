#include <pgvton/nn/tensor.hpp>

#include <algorithm>
#include <unordered_set>

namespace pgvton::nn {

Tensor make_tensor(Shape shape, bool requires_grad) {
  return std::make_shared<Node>(std::move(shape), requires_grad);
}

Tensor constant(Shape shape, std::vector<double> data) {
  auto t = std::make_shared<Node>(std::move(shape), false);
  if (static_cast<std::int64_t>(data.size()) != numel(t->shape))
    throw ValidationError("tensor constant: data size does not match shape");
  t->value = std::move(data);
  return t;
}

Tensor constant_like(Shape shape, double fill) {
  auto t = std::make_shared<Node>(std::move(shape), false);
  std::fill(t->value.begin(), t->value.end(), fill);
  return t;
}

Tensor scalar(double v) {
  auto t = std::make_shared<Node>(Shape{1}, false);
  t->value[0] = v;
  return t;
}

Tensor parameter(Shape shape, std::vector<double> data) {
  auto t = constant(std::move(shape), std::move(data));
  t->requires_grad = true;
  return t;
}

namespace {

void topo_visit(Node* n, std::unordered_set<Node*>& seen,
                std::vector<Node*>& order) {
  // Iterative DFS; graphs can be a few thousand nodes deep in training.
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack{{n, 0}};
  seen.insert(n);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
}

}  // namespace

void backward(const Tensor& root) {
  if (root->size() != 1)
    throw ValidationError("backward: root must be a scalar");
  if (!root->requires_grad) return;  // nothing trainable upstream

  std::unordered_set<Node*> seen;
  std::vector<Node*> order;
  topo_visit(root.get(), seen, order);

  for (Node* n : order) n->grad.assign(n->value.size(), 0.0);
  root->grad_data()[0] = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

double item(const Tensor& t) {
  if (t->size() != 1) throw ValidationError("item: tensor is not scalar");
  return t->value[0];
}

}  // namespace pgvton::nn
