#include <pgvton/nn/modules.hpp>

#include <cmath>

namespace pgvton::nn {

Tensor ParamStore::add(const std::string& name, Shape shape,
                       std::vector<double> data) {
  for (const auto& [n, t] : items_)
    if (n == name) throw ValidationError("duplicate parameter name: " + name);
  auto t = parameter(std::move(shape), std::move(data));
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::find(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  return nullptr;
}

std::size_t ParamStore::total_size() const {
  std::size_t s = 0;
  for (const auto& [n, t] : items_) s += t->size();
  return s;
}

std::vector<double> normal_init(std::mt19937_64& rng, std::int64_t n,
                                double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = dist(rng);
  return v;
}

std::vector<double> kaiming_init(std::mt19937_64& rng, std::int64_t n,
                                 std::int64_t fan_in) {
  return normal_init(rng, n, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

std::vector<double> zeros_init(std::int64_t n) {
  return std::vector<double>(static_cast<std::size_t>(n), 0.0);
}

std::vector<double> ones_init(std::int64_t n) {
  return std::vector<double>(static_cast<std::size_t>(n), 1.0);
}

Linear::Linear(ParamStore& ps, const std::string& name, int in, int out,
               std::mt19937_64& rng, bool zero_init) {
  w = ps.add(name + ".w", {in, out},
             zero_init ? zeros_init(static_cast<std::int64_t>(in) * out)
                       : kaiming_init(rng, static_cast<std::int64_t>(in) * out, in));
  b = ps.add(name + ".b", {out}, zeros_init(out));
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int in, int out, int k,
               int stride_, int pad_, std::mt19937_64& rng, bool zero_init)
    : stride(stride_), pad(pad_) {
  const std::int64_t n = static_cast<std::int64_t>(out) * in * k * k;
  w = ps.add(name + ".w", {out, in, k, k},
             zero_init ? zeros_init(n)
                       : kaiming_init(rng, n, static_cast<std::int64_t>(in) * k * k));
  b = ps.add(name + ".b", {out}, zeros_init(out));
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int dim) {
  gain = ps.add(name + ".g", {dim}, ones_init(dim));
  bias = ps.add(name + ".b", {dim}, zeros_init(dim));
}

Tensor self_attention(const Tensor& x, const Linear& qkv, const Linear& proj,
                      int heads) {
  const int n = x->dim(0), t = x->dim(1), d = x->dim(2);
  const int hd = d / heads;
  Tensor qkv_out = qkv(x);  // (N,T,3D)
  Tensor q = slice(qkv_out, 2, 0, d);
  Tensor k = slice(qkv_out, 2, d, 2 * d);
  Tensor v = slice(qkv_out, 2, 2 * d, 3 * d);
  auto split_heads = [&](const Tensor& m) {
    // (N,T,D) -> (N*heads, T, hd)
    Tensor r = reshape(m, {n, t, heads, hd});
    r = permute(r, {0, 2, 1, 3});
    return reshape(r, {n * heads, t, hd});
  };
  Tensor qh = split_heads(q), kh = split_heads(k), vh = split_heads(v);
  Tensor scores = bmm(qh, transpose_last2(kh));  // (N*heads, T, T)
  scores = mul_scalar(scores, 1.0 / std::sqrt(static_cast<double>(hd)));
  Tensor attn = softmax_lastdim(scores);
  Tensor ctx = bmm(attn, vh);  // (N*heads, T, hd)
  ctx = reshape(ctx, {n, heads, t, hd});
  ctx = permute(ctx, {0, 2, 1, 3});
  ctx = reshape(ctx, {n, t, d});
  return proj(ctx);
}

TransformerBlock::TransformerBlock(ParamStore& ps, const std::string& name,
                                   int dim, int heads_, int ffn_dim,
                                   std::mt19937_64& rng)
    : heads(heads_),
      ln1(ps, name + ".ln1", dim),
      ln2(ps, name + ".ln2", dim),
      qkv(ps, name + ".qkv", dim, 3 * dim, rng),
      proj(ps, name + ".proj", dim, dim, rng),
      fc1(ps, name + ".fc1", dim, ffn_dim, rng),
      fc2(ps, name + ".fc2", ffn_dim, dim, rng) {}

Tensor TransformerBlock::operator()(const Tensor& x) const {
  Tensor h = add(x, self_attention(ln1(x), qkv, proj, heads));
  Tensor f = fc2(leaky_relu(fc1(ln2(h))));
  return add(h, f);
}

}  // namespace pgvton::nn
