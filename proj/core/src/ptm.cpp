#include <pgvton/ptm.hpp>

#include <pgvton/bridge.hpp>
#include <pgvton/rng.hpp>

#include <cmath>
#include <sstream>

namespace pgvton::ptm {

using nn::Tensor;

namespace {

Tensor replicate3(const Tensor& mask) {
  return nn::concat({mask, mask, mask}, 1);
}

/// (N,T,D) -> (N,D): token mean
Tensor token_mean(const Tensor& tokens) {
  const int n = tokens->dim(0), t = tokens->dim(1), d = tokens->dim(2);
  Tensor x = nn::permute(tokens, {0, 2, 1});
  x = nn::reshape(x, {n, d, t, 1});
  return nn::global_avg_pool(x);
}

constexpr int kHeads = 4;

}  // namespace

TryOnModel::TryOnModel(const pipeline::Config& cfg,
                       const metrics::PerceptualEncoder* encoder)
    : cfg_(cfg), encoder_(encoder) {
  if (!encoder_) throw ValidationError("ptm: a perceptual encoder is required");
  if (encoder_->dim() != cfg.encoder_dim)
    throw ValidationError("ptm: encoder dim does not match config");
  const int token_dim = 2 * cfg.d1;
  if (token_dim % kHeads != 0)
    throw ValidationError("ptm: 2*d1 must be divisible by the head count");

  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x50544dull));
  const int d = cfg.encoder_dim;
  const int level_dims[4] = {d, 2 * d, 4 * d, 8 * d};
  for (int i = 0; i < 4; ++i)
    proj_[i] = nn::Conv2d(params_, "warp.proj" + std::to_string(i),
                          level_dims[i], cfg.d1, 1, 1, 0, rng);
  const int tokens = 4 * cfg.h1 * cfg.w1;
  pos_embed_ = params_.add("warp.pos_embed", {tokens, token_dim},
                           nn::zeros_init(static_cast<std::int64_t>(tokens) *
                                          token_dim));
  for (int i = 0; i < 3; ++i)
    blocks_[i] = nn::TransformerBlock(params_, "warp.block" + std::to_string(i),
                                      token_dim, kHeads, 4 * token_dim, rng);
  pool_norm_ = nn::LayerNorm(params_, "warp.pool_norm", token_dim);
  const int hidden = 64;
  trunk_ = nn::Linear(params_, "warp.trunk", token_dim, hidden, rng);
  for (int i = 0; i < 4; ++i) {
    const int s = geometry::kScales[i];
    scale_heads_[i] = nn::Linear(params_, "warp.head" + std::to_string(s),
                                 hidden, 2 * s * s, rng, /*zero_init=*/true);
  }

  const int mw = cfg.mapper_width;
  m_e0_ = nn::Conv2d(params_, "map.e0", 4, mw, 3, 1, 1, rng);
  m_d1_ = nn::Conv2d(params_, "map.d1", mw, 2 * mw, 3, 2, 1, rng);
  m_d2_ = nn::Conv2d(params_, "map.d2", 2 * mw, 4 * mw, 3, 2, 1, rng);
  m_attn_ = nn::TransformerBlock(params_, "map.attn", 4 * mw, kHeads,
                                 8 * mw, rng);
  m_u1_ = nn::Conv2d(params_, "map.u1", 6 * mw, 2 * mw, 3, 1, 1, rng);
  m_u0_ = nn::Conv2d(params_, "map.u0", 3 * mw, mw, 3, 1, 1, rng);
  m_head_ = nn::Conv2d(params_, "map.head", mw, 3, 3, 1, 1, rng);

  const int cw = cfg.compositor_width;
  c_e0_ = nn::Conv2d(params_, "compose.e0", 6, cw, 3, 1, 1, rng);
  c_d1_ = nn::Conv2d(params_, "compose.d1", cw, 2 * cw, 3, 2, 1, rng);
  c_d2_ = nn::Conv2d(params_, "compose.d2", 2 * cw, 4 * cw, 3, 2, 1, rng);
  c_u1_ = nn::Conv2d(params_, "compose.u1", 6 * cw, 2 * cw, 3, 1, 1, rng);
  c_u0_ = nn::Conv2d(params_, "compose.u0", 3 * cw, cw, 3, 1, 1, rng);
  c_head_ = nn::Conv2d(params_, "compose.head", cw, 1, 3, 1, 1, rng);
}

std::array<Tensor, 4> TryOnModel::extract_shape_pyramid(
    const Tensor& mask) const {
  auto feats = encoder_->features(replicate3(mask));
  for (auto& f : feats) f = nn::detach(f);  // frozen features, no input grads
  return feats;
}

Tensor TryOnModel::embed_patches(const std::array<Tensor, 4>& pyr_garment,
                                 const std::array<Tensor, 4>& pyr_target) const {
  auto tokens_of = [&](const std::array<Tensor, 4>& pyr) {
    std::vector<Tensor> levels;
    for (int i = 0; i < 4; ++i) {
      Tensor x = nn::resize_bilinear(pyr[i], cfg_.h1, cfg_.w1);
      x = proj_[i](x);  // (N, d1, h1, w1)
      x = nn::reshape(x, {x->dim(0), cfg_.d1, cfg_.h1 * cfg_.w1});
      levels.push_back(nn::permute(x, {0, 2, 1}));  // (N, h1*w1, d1)
    }
    return nn::concat(levels, 1);  // (N, 4*h1*w1, d1)
  };
  Tensor both = nn::concat({tokens_of(pyr_garment), tokens_of(pyr_target)}, 2);
  return nn::add_broadcast(both, pos_embed_);
}

ThetaResult TryOnModel::predict_theta(const Tensor& embedding) const {
  Tensor x = embedding;
  for (const auto& block : blocks_) x = block(x);
  Tensor pooled = pool_norm_(token_mean(x));
  Tensor hidden = nn::leaky_relu(trunk_(pooled));
  ThetaResult result;
  result.tokens = x;
  for (int i = 0; i < 4; ++i) {
    const int s = geometry::kScales[i];
    Tensor off = nn::tanh_op(scale_heads_[i](hidden));
    off = nn::mul_scalar(off, cfg_.max_offset);
    result.theta.offsets[i] = nn::reshape(off, {off->dim(0), s * s, 2});
  }
  return result;
}

Candidates TryOnModel::warp(const Tensor& garment_image,
                            const Tensor& garment_mask,
                            const ThetaSet& theta) const {
  const int h = garment_image->dim(2), w = garment_image->dim(3);
  Candidates c;
  c.theta = theta;
  for (int i = 0; i < 4; ++i) {
    Tensor field = geometry::tps_field_from_offsets(theta.offsets[i],
                                                    geometry::kScales[i], h, w);
    c.images[i] = nn::grid_sample(garment_image, field);
    c.masks[i] = nn::grid_sample(garment_mask, field);
  }
  return c;
}

Tensor TryOnModel::fined_map(const Tensor& image,
                             const Tensor& target_mask) const {
  if (image->dim(2) != target_mask->dim(2) ||
      image->dim(3) != target_mask->dim(3))
    throw ValidationError("fined_map: image/mask shape mismatch");
  Tensor x = nn::concat({image, target_mask}, 1);
  Tensor e0 = nn::leaky_relu(m_e0_(x));
  Tensor e1 = nn::leaky_relu(m_d1_(e0));
  Tensor e2 = nn::leaky_relu(m_d2_(e1));
  // global attention over the bottleneck tokens
  const int n = e2->dim(0), c = e2->dim(1), bh = e2->dim(2), bw = e2->dim(3);
  Tensor t = nn::permute(nn::reshape(e2, {n, c, bh * bw}), {0, 2, 1});
  t = m_attn_(t);
  Tensor b = nn::reshape(nn::permute(t, {0, 2, 1}), {n, c, bh, bw});
  Tensor u1 = nn::leaky_relu(m_u1_(nn::concat({nn::upsample2_nearest(b), e1}, 1)));
  Tensor u0 = nn::leaky_relu(m_u0_(nn::concat({nn::upsample2_nearest(u1), e0}, 1)));
  return nn::sigmoid(m_head_(u0));
}

Tensor TryOnModel::predict_composition_mask(const Tensor& i_tps,
                                            const Tensor& i_map) const {
  Tensor x = nn::concat({i_tps, i_map}, 1);
  Tensor e0 = nn::leaky_relu(c_e0_(x));
  Tensor e1 = nn::leaky_relu(c_d1_(e0));
  Tensor e2 = nn::leaky_relu(c_d2_(e1));
  Tensor u1 = nn::leaky_relu(c_u1_(nn::concat({nn::upsample2_nearest(e2), e1}, 1)));
  Tensor u0 = nn::leaky_relu(c_u0_(nn::concat({nn::upsample2_nearest(u1), e0}, 1)));
  return nn::sigmoid(c_head_(u0));
}

geometry::WarpCandidateSet TryOnModel::warp_candidates(
    const Image& garment_image, const Mask& garment_mask,
    const Mask& target_mask) const {
  Tensor img = to_tensor(garment_image);
  Tensor msk = to_tensor(garment_mask);
  auto pyr_g = extract_shape_pyramid(msk);
  auto pyr_t = extract_shape_pyramid(to_tensor(target_mask));
  ThetaResult tr = predict_theta(embed_patches(pyr_g, pyr_t));
  Candidates c = warp(img, msk, tr.theta);

  geometry::WarpCandidateSet out;
  for (int i = 0; i < 4; ++i) {
    const int s = geometry::kScales[i];
    geometry::WarpCandidate& cand = out.at_scale(s);
    cand.image = to_image(c.images[i], 0);
    cand.mask = to_image(c.masks[i], 0);
    cand.static_grid = geometry::ControlGrid::uniform(s);
    cand.warped_grid = cand.static_grid;
    for (int k = 0; k < s * s; ++k) {
      cand.warped_grid.points[k].x += c.theta.offsets[i]->value[2 * k];
      cand.warped_grid.points[k].y += c.theta.offsets[i]->value[2 * k + 1];
    }
  }
  return out;
}

Image TryOnModel::try_on(const Image& garment_image, const Mask& garment_mask,
                         const Mask& target_mask, double tau,
                         int* selected_scale) const {
  geometry::WarpCandidateSet cands =
      warp_candidates(garment_image, garment_mask, target_mask);
  const int scale =
      geometry::select_optimal(cands, target_mask, garment_mask, tau);
  if (selected_scale) *selected_scale = scale;
  const Image& i_tps = cands.at_scale(scale).image;

  Tensor i_map_t = fined_map(to_tensor(i_tps), to_tensor(target_mask));
  Tensor m_t = predict_composition_mask(to_tensor(i_tps), i_map_t);
  const Image i_map = to_image(i_map_t, 0);
  const Mask m = to_image(m_t, 0);
  Image result = geometry::composite(i_map, i_tps, m);

  Mask support(target_mask.height, target_mask.width, 1);
  for (std::size_t i = 0; i < support.data.size(); ++i)
    support.data[i] = target_mask.data[i] > 0.0 ? 1.0 : 0.0;
  return result.masked_by(support);
}

// ---- losses -------------------------------------------------------------------

Tensor coarse_warp_loss(const Candidates& candidates, const Tensor& m_pg,
                        double lambda3, double lambda4) {
  Tensor shape_term = nn::l1_loss(candidates.masks[0], m_pg);
  Tensor reg_term = nn::mean_all(nn::square(candidates.theta.offsets[0]));
  for (int i = 1; i < 4; ++i) {
    shape_term = nn::add(shape_term, nn::l1_loss(candidates.masks[i], m_pg));
    reg_term = nn::add(reg_term,
                       nn::mean_all(nn::square(candidates.theta.offsets[i])));
  }
  return nn::add(nn::mul_scalar(shape_term, lambda3),
                 nn::mul_scalar(reg_term, lambda4));
}

Tensor fined_map_loss(const Tensor& i_map, const Tensor& i_tps2,
                      const Tensor& i_tps, const Tensor& i_pg,
                      const metrics::PerceptualEncoder& enc, double xi,
                      double lambda5, double lambda6) {
  if (xi < 0.0 || xi > 1.0)
    throw ValidationError("fined_map_loss: xi must lie in [0,1]");
  Tensor pix = nn::mul_scalar(nn::l1_loss(i_map, i_tps), xi);
  pix = nn::add(pix, nn::mul_scalar(nn::l1_loss(i_map, i_pg), 1.0 - xi));
  pix = nn::add(pix, nn::l1_loss(i_tps2, i_tps));
  Tensor per =
      nn::mul_scalar(metrics::perceptual_distance(enc, i_map, i_tps), xi);
  per = nn::add(per, nn::mul_scalar(
                         metrics::perceptual_distance(enc, i_map, i_pg),
                         1.0 - xi));
  per = nn::add(per, metrics::perceptual_distance(enc, i_tps2, i_tps));
  return nn::add(nn::mul_scalar(pix, lambda5), nn::mul_scalar(per, lambda6));
}

Tensor composition_loss(const Tensor& i_comp, const Tensor& i_tps,
                        const Tensor& i_pg, const Tensor& m_pg,
                        const Tensor& m_tps, double xi) {
  if (xi < 0.0 || xi > 1.0)
    throw ValidationError("composition_loss: xi must lie in [0,1]");
  Tensor region = nn::mul(m_pg, m_tps);  // soft intersection, (N,1,H,W)
  double mass = 0.0;
  for (double v : region->value) mass += v;

  Tensor second = nn::mul_scalar(nn::l1_loss(i_comp, i_pg), 1.0 - xi);
  if (mass <= 0.0) return second;

  const double channels = static_cast<double>(i_comp->dim(1));
  Tensor weighted = nn::mul_map(nn::abs_op(nn::sub(i_comp, i_tps)), region);
  Tensor first =
      nn::mul_scalar(nn::sum_all(weighted), xi / (channels * mass));
  return nn::add(first, second);
}

Tensor composite(const Tensor& i_map, const Tensor& i_tps, const Tensor& m) {
  Tensor inv = nn::add_scalar(nn::mul_scalar(m, -1.0), 1.0);
  return nn::add(nn::mul_map(i_map, m), nn::mul_map(i_tps, inv));
}

// ---- training -------------------------------------------------------------------

namespace {

int select_scale_from_values(const std::array<Tensor, 4>& masks, int n,
                             const double* target, const double* source,
                             std::int64_t hw, double tau) {
  int best_scale = -1;
  double best = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double* m = masks[i]->value.data() + static_cast<std::int64_t>(n) * hw;
    double dt = 0.0, ds = 0.0;
    for (std::int64_t p = 0; p < hw; ++p) {
      dt += std::abs(m[p] - target[p]);
      ds += std::abs(m[p] - source[p]);
    }
    // same expression as geometry::select_optimal so ties agree bit-exactly
    const double cost = tau * (dt / static_cast<double>(hw)) +
                        (1.0 - tau) * (ds / static_cast<double>(hw));
    if (best_scale < 0 || cost < best) {
      best = cost;
      best_scale = geometry::kScales[i];
    }
  }
  return best_scale;
}

}  // namespace

TrainResult train(const synthdata::Dataset& dataset,
                  const pipeline::Config& cfg,
                  const metrics::PerceptualEncoder& encoder,
                  const pipeline::Checkpoint* resume,
                  const std::function<void(const StepTrace&)>& observer,
                  std::vector<std::string>* log_rows) {
  const auto train_idx = dataset.split_indices("train");
  if (train_idx.empty())
    throw ValidationError("ptm train: empty train split");
  const int batch =
      std::min<int>(cfg.ptm_batch, static_cast<int>(train_idx.size()));
  const int h = cfg.image_height, w = cfg.image_width;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;

  TryOnModel model(cfg, &encoder);
  nn::Adam opt(model.params(), cfg.ptm_lr);
  long start_iter = 0;
  if (resume) {
    resume->restore_params(model.params());
    resume->restore_adam(opt, "adam");
    start_iter = static_cast<long>(resume->iterations);
  }

  TrainResult result;
  double final_loss = 0.0;
  for (long it = start_iter; it < cfg.ptm_iterations; ++it) {
    std::mt19937_64 rng = step_rng(cfg.seed, static_cast<std::uint64_t>(it));
    std::vector<int> pool = train_idx;
    for (int k = 0; k < batch; ++k) {
      std::uniform_int_distribution<int> pick(k,
                                              static_cast<int>(pool.size()) - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    pool.resize(batch);

    std::vector<Image> mg_store, ig_store, mpg_store, ipg_store;
    std::vector<const Image*> mg, ig, mpg, ipg;
    for (int k = 0; k < batch; ++k) {
      const synthdata::Sample& s = dataset.samples[pool[k]];
      mg_store.push_back(s.garment_mask);
      ig_store.push_back(s.garment);
      mpg_store.push_back(s.garment_region());
      ipg_store.push_back(s.garment_image());
    }
    for (int k = 0; k < batch; ++k) {
      mg.push_back(&mg_store[k]);
      ig.push_back(&ig_store[k]);
      mpg.push_back(&mpg_store[k]);
      ipg.push_back(&ipg_store[k]);
    }
    Tensor m_g = batch_tensor(mg);
    Tensor i_g = batch_tensor(ig);
    Tensor m_pg = batch_tensor(mpg);
    Tensor i_pg = batch_tensor(ipg);

    // stage 1: coarse warping
    auto pyr_g = model.extract_shape_pyramid(m_g);
    auto pyr_t = model.extract_shape_pyramid(m_pg);
    ThetaResult tr = model.predict_theta(model.embed_patches(pyr_g, pyr_t));
    Candidates cands = model.warp(i_g, m_g, tr.theta);
    Tensor loss_cw = coarse_warp_loss(cands, m_pg, cfg.lambda3, cfg.lambda4);

    // per-sample optimal-scale selection on the (detached) candidate masks
    std::vector<int> selected(batch);
    Tensor i_tps = nn::make_tensor({batch, 3, h, w}, false);
    Tensor m_tps = nn::make_tensor({batch, 1, h, w}, false);
    for (int n = 0; n < batch; ++n) {
      const double* tgt = m_pg->value.data() + static_cast<std::int64_t>(n) * hw;
      const double* src = m_g->value.data() + static_cast<std::int64_t>(n) * hw;
      selected[n] =
          select_scale_from_values(cands.masks, n, tgt, src, hw, cfg.tau);
      const int i = selected[n] - 3;
      std::copy(cands.images[i]->value.begin() + static_cast<std::int64_t>(n) * 3 * hw,
                cands.images[i]->value.begin() + static_cast<std::int64_t>(n + 1) * 3 * hw,
                i_tps->value.begin() + static_cast<std::int64_t>(n) * 3 * hw);
      std::copy(cands.masks[i]->value.begin() + static_cast<std::int64_t>(n) * hw,
                cands.masks[i]->value.begin() + static_cast<std::int64_t>(n + 1) * hw,
                m_tps->value.begin() + static_cast<std::int64_t>(n) * hw);
    }

    // stage 2: fined mapping with an in-stage consistency pass
    Tensor i_map = model.fined_map(i_tps, m_pg);
    Tensor i_tps2 = model.fined_map(i_map, m_tps);
    Tensor loss_fm = fined_map_loss(i_map, i_tps2, i_tps, i_pg, encoder,
                                    cfg.xi, cfg.lambda5, cfg.lambda6);

    // stage 3: composition on detached inputs
    Tensor i_map_det = nn::detach(i_map);
    Tensor m_comp = model.predict_composition_mask(i_tps, i_map_det);
    Tensor i_comp = composite(i_map_det, i_tps, m_comp);
    Tensor loss_cp =
        composition_loss(i_comp, i_tps, i_pg, m_pg, m_tps, cfg.xi);

    const double v_cw = nn::item(loss_cw);
    const double v_fm = nn::item(loss_fm);
    const double v_cp = nn::item(loss_cp);
    if (!std::isfinite(v_cw))
      throw NumericError("ptm: non-finite coarse-warp loss at iteration " +
                         std::to_string(it));
    if (!std::isfinite(v_fm))
      throw NumericError("ptm: non-finite fined-map loss at iteration " +
                         std::to_string(it));
    if (!std::isfinite(v_cp))
      throw NumericError("ptm: non-finite composition loss at iteration " +
                         std::to_string(it));

    Tensor total = nn::add(nn::add(loss_cw, loss_fm), loss_cp);
    final_loss = nn::item(total);
    nn::backward(total);
    opt.step();

    result.warp_history.push_back(v_cw);
    result.map_history.push_back(v_fm);
    result.compose_history.push_back(v_cp);

    std::array<int, 4> hist{};
    for (int n = 0; n < batch; ++n) ++hist[selected[n] - 3];
    if (log_rows) {
      std::ostringstream row;
      row << it << '\t' << v_cw << '\t' << v_fm << '\t' << v_cp << '\t'
          << hist[0] << '\t' << hist[1] << '\t' << hist[2] << '\t' << hist[3];
      log_rows->push_back(row.str());
    }
    if (observer) {
      StepTrace trace;
      trace.iteration = it;
      trace.loss_warp = v_cw;
      trace.loss_map = v_fm;
      trace.loss_compose = v_cp;
      trace.scale_histogram = hist;
      trace.selected = selected;
      for (int n = 0; n < batch; ++n) {
        geometry::WarpCandidateSet copy;
        for (int i = 0; i < 4; ++i) {
          const int s = geometry::kScales[i];
          geometry::WarpCandidate& cand = copy.at_scale(s);
          cand.image = to_image(cands.images[i], n);
          cand.mask = to_image(cands.masks[i], n);
          cand.static_grid = geometry::ControlGrid::uniform(s);
          cand.warped_grid = cand.static_grid;
          for (int k = 0; k < s * s; ++k) {
            cand.warped_grid.points[k].x +=
                cands.theta.offsets[i]->value[(static_cast<std::int64_t>(n) * s * s + k) * 2];
            cand.warped_grid.points[k].y +=
                cands.theta.offsets[i]->value[(static_cast<std::int64_t>(n) * s * s + k) * 2 + 1];
          }
        }
        trace.candidate_copies.push_back(std::move(copy));
        trace.target_masks.push_back(mpg_store[n]);
        trace.source_masks.push_back(mg_store[n]);
      }
      observer(trace);
    }
  }

  pipeline::Checkpoint ckpt;
  ckpt.module_id = "ptm";
  ckpt.config_hash = cfg.hash();
  ckpt.iterations = static_cast<std::uint64_t>(cfg.ptm_iterations);
  ckpt.final_loss = final_loss;
  ckpt.set_meta("config", cfg.canonical());
  ckpt.add_params(model.params());
  ckpt.add_adam(opt, "adam");
  result.checkpoint = std::move(ckpt);
  return result;
}

TryOnModel from_checkpoint(const pipeline::Checkpoint& ckpt,
                           const metrics::PerceptualEncoder* encoder) {
  if (ckpt.module_id != "ptm")
    throw IoError("ptm: checkpoint holds module '" + ckpt.module_id + "'");
  pipeline::Config cfg = pipeline::Config::parse(ckpt.meta("config"));
  TryOnModel model(cfg, encoder);
  ckpt.restore_params(model.params());
  return model;
}

}  // namespace pgvton::ptm
