#pragma once

#include <pgvton/nn/tensor.hpp>

namespace pgvton::nn {

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
/// a: (N,...), b: (...) broadcast over the leading dim
Tensor add_broadcast(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor abs_op(const Tensor& a);
Tensor square(const Tensor& a);
/// elementwise a^p; requires a > 0 when p is non-integer
Tensor pow_scalar(const Tensor& a, double p);

/// Gradient barrier: value copy that stops backpropagation.
Tensor detach(const Tensor& a);

// ---- shape ----------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& perm);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int from, int to);

// ---- reductions -----------------------------------------------------------

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
/// (N,C,H,W) -> (N,C) spatial mean
Tensor global_avg_pool(const Tensor& a);

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);              // (M,K)x(K,N)
Tensor bmm(const Tensor& a, const Tensor& b);                 // (B,M,K)x(B,K,N)
Tensor transpose_last2(const Tensor& a);                      // (...,M,N)->(...,N,M)
/// x: (...,K), w: (K,N), b: (N) or null -> (...,N)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- nn layers ------------------------------------------------------------

/// x: (N,C,H,W), w: (F,C,kh,kw), b: (F) or null. Zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);
Tensor upsample2_nearest(const Tensor& x);
/// Bilinear resize with edge clamping (half-pixel centers), NCHW.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
/// image: (N,C,H,W); field: (N,Hf,Wf,2) normalized coords in [-1,1],
/// last dim = (x,y). Bilinear with zero padding; differentiable in both.
Tensor grid_sample(const Tensor& image, const Tensor& field);
/// per-pixel softmax over the channel dim of (N,C,H,W)
Tensor softmax_channels(const Tensor& x);
/// softmax over the last dim
Tensor softmax_lastdim(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
/// per-(n,c) spatial standardization of (N,C,H,W)
Tensor instance_norm(const Tensor& x, double eps = 1e-5);
/// y[n,c,h,w] = x[n,c,h,w] * s[n,c] + b[n,c]
Tensor channel_affine(const Tensor& x, const Tensor& s, const Tensor& b);
/// x: (N,C,H,W) * m: (N,1,H,W) broadcast over channels
Tensor mul_map(const Tensor& x, const Tensor& m);
/// y[n,c,..] = x[n,c,..] * s[c] with a fixed per-channel factor
Tensor scale_channels(const Tensor& x, const std::vector<double>& s);

// ---- TPS ------------------------------------------------------------------

/// offsets: (N,K,2) control-point displacements in normalized coords.
/// basis: (H*W, K) constant evaluation matrix, static_pts: (K,2) constant.
/// Returns the dense backward-sampling field (N,H,W,2):
///   field[..,d] = basis * (static_pts[:,d] + offsets[:,:,d])
Tensor apply_tps_basis(const Tensor& offsets, const Tensor& basis,
                       const Tensor& static_pts, int h, int w);

// ---- losses ---------------------------------------------------------------

/// mean |a-b| over all elements
Tensor l1_loss(const Tensor& a, const Tensor& b);
/// mean (a-b)^2 over all elements
Tensor l2_loss(const Tensor& a, const Tensor& b);

}  // namespace pgvton::nn
