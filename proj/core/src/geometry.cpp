#include <pgvton/geometry.hpp>

#include <pgvton/nn/ops.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <mutex>
#include <string>

namespace pgvton::geometry {

ControlGrid ControlGrid::uniform(int scale) {
  if (scale < 2) throw ValidationError("control grid scale must be >= 2");
  ControlGrid g;
  g.scale = scale;
  g.points.resize(static_cast<std::size_t>(scale) * scale);
  for (int a = 0; a < scale; ++a)
    for (int b = 0; b < scale; ++b)
      g.points[static_cast<std::size_t>(a) * scale + b] = {
          -1.0 + 2.0 * b / (scale - 1), -1.0 + 2.0 * a / (scale - 1)};
  return g;
}

double tps_kernel_r2(double r2) {
  return r2 > 0.0 ? r2 * std::log(r2) : 0.0;
}

namespace {

double sq_dist(Point a, Point b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

/// Extended TPS system for the uniform lattice: [K + eps*I, P; P^T, 0].
Eigen::MatrixXd tps_system(const std::vector<Point>& control) {
  const int k = static_cast<int>(control.size());
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(k + 3, k + 3);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j)
      l(i, j) = tps_kernel_r2(sq_dist(control[i], control[j]));
    l(i, i) += kTpsKernelRegularization;
    l(i, k) = l(k, i) = 1.0;
    l(i, k + 1) = l(k + 1, i) = control[i].x;
    l(i, k + 2) = l(k + 2, i) = control[i].y;
  }
  return l;
}

}  // namespace

TpsCoefficients tps_fit(const ControlGrid& static_grid,
                        const ControlGrid& warped_grid) {
  if (static_grid.scale != warped_grid.scale)
    throw ValidationError("tps_fit: grids have different scales");
  const int k = static_cast<int>(static_grid.points.size());

  Eigen::MatrixXd l = tps_system(static_grid.points);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(k + 3, 2);
  for (int i = 0; i < k; ++i) {
    rhs(i, 0) = warped_grid.points[i].x;
    rhs(i, 1) = warped_grid.points[i].y;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(l);
  if (!lu.isInvertible())
    throw NumericError("tps_fit: singular kernel system at scale " +
                       std::to_string(static_grid.scale));
  Eigen::MatrixXd sol = lu.solve(rhs);

  TpsCoefficients c;
  c.scale = static_grid.scale;
  c.control = static_grid.points;
  c.weights.resize(static_cast<std::size_t>(k) * 2);
  for (int i = 0; i < k; ++i) {
    c.weights[2 * i] = sol(i, 0);
    c.weights[2 * i + 1] = sol(i, 1);
  }
  for (int d = 0; d < 2; ++d) {
    c.affine[3 * d] = sol(k, d);
    c.affine[3 * d + 1] = sol(k + 1, d);
    c.affine[3 * d + 2] = sol(k + 2, d);
  }
  return c;
}

Point tps_evaluate(const TpsCoefficients& c, Point q) {
  double fx = c.affine[0] + c.affine[1] * q.x + c.affine[2] * q.y;
  double fy = c.affine[3] + c.affine[4] * q.x + c.affine[5] * q.y;
  for (std::size_t i = 0; i < c.control.size(); ++i) {
    const double u = tps_kernel_r2(sq_dist(c.control[i], q));
    fx += c.weights[2 * i] * u;
    fy += c.weights[2 * i + 1] * u;
  }
  return {fx, fy};
}

SamplingField identity_field(int h, int w) {
  SamplingField f(h, w);
  for (int yi = 0; yi < h; ++yi)
    for (int xi = 0; xi < w; ++xi) {
      f.x(yi, xi) = -1.0 + (2.0 * xi + 1.0) / w;
      f.y(yi, xi) = -1.0 + (2.0 * yi + 1.0) / h;
    }
  return f;
}

SamplingField build_sampling_field(const TpsCoefficients& c, int h, int w) {
  SamplingField f(h, w);
  for (int yi = 0; yi < h; ++yi)
    for (int xi = 0; xi < w; ++xi) {
      const Point q{-1.0 + (2.0 * xi + 1.0) / w, -1.0 + (2.0 * yi + 1.0) / h};
      const Point s = tps_evaluate(c, q);
      f.x(yi, xi) = s.x;
      f.y(yi, xi) = s.y;
    }
  return f;
}

Image warp_image(const Image& image, const SamplingField& field) {
  if (field.height != image.height || field.width != image.width)
    throw ValidationError("warp_image: field/image shape mismatch");
  const int h = image.height, w = image.width;
  Image out(h, w, image.channels);
  auto read = [&](int c, int yy, int xx) -> double {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
    return image.at(c, yy, xx);
  };
  for (int yi = 0; yi < h; ++yi)
    for (int xi = 0; xi < w; ++xi) {
      const double px = (field.x(yi, xi) + 1.0) * w * 0.5 - 0.5;
      const double py = (field.y(yi, xi) + 1.0) * h * 0.5 - 0.5;
      const int x0 = static_cast<int>(std::floor(px));
      const int y0 = static_cast<int>(std::floor(py));
      const double wx = px - x0, wy = py - y0;
      for (int c = 0; c < image.channels; ++c)
        out.at(c, yi, xi) =
            (1 - wy) * ((1 - wx) * read(c, y0, x0) + wx * read(c, y0, x0 + 1)) +
            wy * ((1 - wx) * read(c, y0 + 1, x0) + wx * read(c, y0 + 1, x0 + 1));
    }
  return out;
}

int select_optimal(const WarpCandidateSet& candidates, const Mask& target,
                   const Mask& source, double tau) {
  if (tau < 0.0 || tau > 1.0)
    throw ValidationError("select_optimal: tau must lie in [0,1]");
  double best = 0.0;
  int best_scale = -1;
  for (int s : kScales) {
    const Mask& m = candidates.at_scale(s).mask;
    if (!m.same_shape(target) || !m.same_shape(source))
      throw ValidationError("select_optimal: mask shape mismatch");
    const double cost =
        tau * mean_abs_diff(m, target) + (1.0 - tau) * mean_abs_diff(m, source);
    if (best_scale < 0 || cost < best) {
      best = cost;
      best_scale = s;
    }
  }
  return best_scale;
}

double grid_regularization(
    const std::vector<std::pair<ControlGrid, ControlGrid>>& warped_static) {
  double total = 0.0;
  for (const auto& [warped, stat] : warped_static) {
    if (warped.points.size() != stat.points.size())
      throw ValidationError("grid_regularization: grid size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < warped.points.size(); ++i) {
      const double dx = warped.points[i].x - stat.points[i].x;
      const double dy = warped.points[i].y - stat.points[i].y;
      s += dx * dx + dy * dy;
    }
    total += s / (2.0 * static_cast<double>(warped.points.size()));
  }
  return total;
}

Image composite(const Image& i_map, const Image& i_tps, const Mask& m) {
  if (!i_map.same_shape(i_tps))
    throw ValidationError("composite: image shape mismatch");
  Image out(i_map.height, i_map.width, i_map.channels);
  const std::size_t ps = out.plane_size();
  for (int c = 0; c < out.channels; ++c)
    for (std::size_t i = 0; i < ps; ++i) {
      const double mv = m.data[i];
      out.plane(c)[i] = i_map.plane(c)[i] * mv + i_tps.plane(c)[i] * (1.0 - mv);
    }
  return out;
}

// ---- differentiable path ------------------------------------------------------

const TpsBasis& tps_basis(int scale, int h, int w) {
  static std::map<std::tuple<int, int, int>, TpsBasis> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(scale, h, w);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  const ControlGrid grid = ControlGrid::uniform(scale);
  const int k = static_cast<int>(grid.points.size());
  Eigen::MatrixXd l = tps_system(grid.points);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(l);
  if (!lu.isInvertible())
    throw NumericError("tps_basis: singular kernel system at scale " +
                       std::to_string(scale));
  // coef = L^-1 [Y;0]; only the first K columns of L^-1 reach Y.
  Eigen::MatrixXd inv_left = lu.inverse().leftCols(k);  // (K+3, K)

  const std::int64_t p = static_cast<std::int64_t>(h) * w;
  Eigen::MatrixXd phi(p, k + 3);
  for (int yi = 0; yi < h; ++yi)
    for (int xi = 0; xi < w; ++xi) {
      const Point q{-1.0 + (2.0 * xi + 1.0) / w, -1.0 + (2.0 * yi + 1.0) / h};
      const std::int64_t row = static_cast<std::int64_t>(yi) * w + xi;
      for (int j = 0; j < k; ++j)
        phi(row, j) = tps_kernel_r2(sq_dist(grid.points[j], q));
      phi(row, k) = 1.0;
      phi(row, k + 1) = q.x;
      phi(row, k + 2) = q.y;
    }
  Eigen::MatrixXd b = phi * inv_left;  // (P, K)

  TpsBasis tb;
  tb.scale = scale;
  tb.height = h;
  tb.width = w;
  std::vector<double> bdata(static_cast<std::size_t>(p) * k);
  for (std::int64_t r = 0; r < p; ++r)
    for (int j = 0; j < k; ++j) bdata[r * k + j] = b(r, j);
  tb.basis = nn::constant({static_cast<int>(p), k}, std::move(bdata));
  std::vector<double> sdata(static_cast<std::size_t>(k) * 2);
  for (int j = 0; j < k; ++j) {
    sdata[2 * j] = grid.points[j].x;
    sdata[2 * j + 1] = grid.points[j].y;
  }
  tb.static_pts = nn::constant({k, 2}, std::move(sdata));
  return cache.emplace(key, std::move(tb)).first->second;
}

nn::Tensor tps_field_from_offsets(const nn::Tensor& offsets, int scale, int h,
                                  int w) {
  const TpsBasis& tb = tps_basis(scale, h, w);
  return nn::apply_tps_basis(offsets, tb.basis, tb.static_pts, h, w);
}

}  // namespace pgvton::geometry
