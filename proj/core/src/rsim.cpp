#include <pgvton/rsim.hpp>

#include <pgvton/bridge.hpp>
#include <pgvton/rng.hpp>

#include <cmath>
#include <sstream>

namespace pgvton::rsim {

using nn::Tensor;

void ErasureSpec::validate() const {
  if (probability < 0.0 || probability > 1.0)
    throw ValidationError("erasure spec: probability must lie in [0,1]");
  if (!(0.0 <= area_lo && area_lo <= area_hi && area_hi <= 1.0))
    throw ValidationError("erasure spec: need 0 <= lo <= hi <= 1 for area");
  if (aspect_lo <= 0.0 || aspect_hi < aspect_lo)
    throw ValidationError("erasure spec: aspect range must be positive");
}

Mask random_erase(const Mask& mask, const ErasureSpec& spec,
                  std::mt19937_64& rng) {
  spec.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) >= spec.probability) return mask;

  const int h = mask.height, w = mask.width;
  const double area_frac =
      spec.area_lo + (spec.area_hi - spec.area_lo) * unit(rng);
  const double aspect =
      spec.aspect_lo + (spec.aspect_hi - spec.aspect_lo) * unit(rng);
  const double target = area_frac * h * w;
  const int rh = std::clamp(
      static_cast<int>(std::lround(std::sqrt(target * aspect))), 1, h);
  const int rw =
      std::clamp(static_cast<int>(std::lround(target / rh)), 1, w);
  std::uniform_int_distribution<int> ypos(0, h - rh), xpos(0, w - rw);
  const int y0 = ypos(rng), x0 = xpos(rng);

  Mask out = mask;
  for (int y = y0; y < y0 + rh; ++y)
    for (int x = x0; x < x0 + rw; ++x) out.at(0, y, x) = 0.0;
  return out;
}

ErasureSpec erasure_ladder(int level) {
  if (level < 1 || level > 9)
    throw ValidationError("erasure_ladder: level must lie in 1..9");
  ErasureSpec spec;
  spec.probability = 0.1 * level;
  spec.area_lo = 0.02;
  spec.area_hi = 0.06 * level;
  spec.aspect_lo = 0.3;
  spec.aspect_hi = 3.33;
  return spec;
}

std::string erasure_ladder_table() {
  std::ostringstream out;
  out << "level\tprobability\tarea_lo\tarea_hi\taspect_lo\taspect_hi\n";
  for (int level = 1; level <= 9; ++level) {
    const ErasureSpec s = erasure_ladder(level);
    out << level << '\t' << s.probability << '\t' << s.area_lo << '\t'
        << s.area_hi << '\t' << s.aspect_lo << '\t' << s.aspect_hi << '\n';
  }
  return out.str();
}

Model::Model(const pipeline::Config& cfg,
             const metrics::PerceptualEncoder* encoder)
    : cfg_(cfg), encoder_(encoder) {
  if (!encoder_) throw ValidationError("rsim: a perceptual encoder is required");
  if (encoder_->dim() != cfg.encoder_dim)
    throw ValidationError("rsim: encoder dim does not match config");
  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x5253494dull));
  const int d = cfg.encoder_dim;
  const int level_dims[4] = {d, 2 * d, 4 * d, 8 * d};
  for (int i = 0; i < 4; ++i)
    reduce_[i] = nn::Linear(params_, "encode.reduce" + std::to_string(i),
                            level_dims[i], kLatentPerLevel, rng);
  for (int i = 0; i < 8; ++i)
    mapping_[i] = nn::Linear(params_, "mapping.fc" + std::to_string(i),
                             kLatentDim, kLatentDim, rng);

  const int gen_dims[5] = {8 * d, 4 * d, 2 * d, d, d};
  for (int i = 0; i < 4; ++i) {
    gen_conv_[i] = nn::Conv2d(params_, "gen.conv" + std::to_string(i),
                              gen_dims[i], gen_dims[i + 1], 3, 1, 1, rng);
    // AdaIN wants (scale,shift) per output channel; the demodulated variant
    // wants one modulation factor per input channel
    const int style_out =
        cfg.demodulation ? gen_dims[i] : 2 * gen_dims[i + 1];
    gen_style_[i] = nn::Linear(params_, "gen.style" + std::to_string(i),
                               kLatentDim, style_out, rng, /*zero_init=*/true);
  }
  to_rgb_ = nn::Conv2d(params_, "gen.rgb", gen_dims[4], 3, 1, 1, 0, rng);
}

Tensor Model::reduce_features(const std::array<Tensor, 4>& features) const {
  std::vector<Tensor> parts;
  for (int i = 0; i < 4; ++i)
    parts.push_back(reduce_[i](nn::global_avg_pool(features[i])));
  return nn::concat(parts, 1);  // (N, 1536)
}

Tensor Model::encode_skin(const Tensor& images) const {
  auto feats = encoder_->features(images);
  for (auto& f : feats) f = nn::detach(f);  // frozen pyramid, data inputs
  return reduce_features(feats);
}

Tensor Model::map_latent(const Tensor& z) const {
  Tensor w = z;
  for (const auto& fc : mapping_) w = nn::leaky_relu(fc(w));
  return w;
}

Tensor Model::spatial_seed(const Tensor& mask) const {
  auto feats = encoder_->features(nn::concat({mask, mask, mask}, 1));
  return nn::detach(feats[3]);
}

Tensor Model::style_block(const Tensor& x, const nn::Conv2d& conv,
                          const nn::Linear& style, const Tensor& w) const {
  const Tensor params = style(w);
  const int n = x->dim(0);
  if (!cfg_.demodulation) {
    // AdaIN: convolve, spatially standardize, then per-channel style affine
    Tensor y = conv(x);
    const int c = params->dim(1) / 2;
    const Tensor s = nn::add_scalar(nn::slice(params, 1, 0, c), 1.0);
    const Tensor b = nn::slice(params, 1, c, 2 * c);
    return nn::channel_affine(nn::instance_norm(y), s, b);
  }
  // demodulated variant: modulate input channels, convolve, then rescale
  // each output channel by the inverse modulated-weight norm
  const int cin = x->dim(1);
  const Tensor s = nn::add_scalar(params, 1.0);  // (N,cin)
  Tensor x_mod = nn::channel_affine(x, s, nn::constant_like({n, cin}, 0.0));
  Tensor y = conv(x_mod);
  const int cout = y->dim(1);
  const int k = conv.w->dim(2) * conv.w->dim(3);
  Tensor wsq = nn::reshape(nn::square(conv.w), {cout * cin, k});
  Tensor q = nn::reshape(nn::matmul(wsq, nn::constant_like({k, 1}, 1.0)),
                         {cout, cin});
  Tensor norm = nn::matmul(nn::square(s), nn::transpose_last2(q));  // (N,cout)
  Tensor demod = nn::pow_scalar(nn::add_scalar(norm, 1e-8), -0.5);
  return nn::channel_affine(y, demod, nn::constant_like({n, cout}, 0.0));
}

Tensor Model::generate(const Tensor& w, const Tensor& seed) const {
  Tensor x = seed;
  for (int i = 0; i < 4; ++i) {
    x = nn::leaky_relu(style_block(x, gen_conv_[i], gen_style_[i], w));
    if (i < 3) x = nn::upsample2_nearest(x);
  }
  return nn::sigmoid(to_rgb_(x));
}

Tensor rsim_loss(const Tensor& pred, const Tensor& target,
                 const metrics::PerceptualEncoder& enc, double lambda7,
                 double lambda8) {
  if (pred->shape != target->shape)
    throw ValidationError("rsim_loss: shape mismatch");
  Tensor pix = nn::mul_scalar(nn::l1_loss(pred, target), lambda7);
  Tensor per =
      nn::mul_scalar(metrics::perceptual_distance(enc, pred, target), lambda8);
  return nn::add(pix, per);
}

TrainResult train(const synthdata::Dataset& dataset,
                  const pipeline::Config& cfg,
                  const metrics::PerceptualEncoder& encoder,
                  const pipeline::Checkpoint* resume,
                  const std::function<void(const StepTrace&)>& observer,
                  std::vector<std::string>* log_rows) {
  const auto train_idx = dataset.split_indices("train");
  if (train_idx.empty()) throw ValidationError("rsim train: empty train split");
  const int batch =
      std::min<int>(cfg.rsim_batch, static_cast<int>(train_idx.size()));
  const ErasureSpec erasure = erasure_ladder(cfg.erasure_level);

  Model model(cfg, &encoder);
  nn::Adam opt(model.params(), cfg.rsim_lr);
  long start_iter = 0;
  if (resume) {
    resume->restore_params(model.params());
    resume->restore_adam(opt, "adam");
    start_iter = static_cast<long>(resume->iterations);
  }

  TrainResult result;
  double final_loss = 0.0;
  for (long it = start_iter; it < cfg.rsim_iterations; ++it) {
    std::mt19937_64 rng = step_rng(cfg.seed, static_cast<std::uint64_t>(it));
    std::vector<int> pool = train_idx;
    for (int k = 0; k < batch; ++k) {
      std::uniform_int_distribution<int> pick(k,
                                              static_cast<int>(pool.size()) - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    pool.resize(batch);

    std::vector<Image> erased_store, mask_store, target_store;
    std::vector<const Image*> erased, masks, targets;
    for (int k = 0; k < batch; ++k) {
      const synthdata::Sample& s = dataset.samples[pool[k]];
      const Mask m_ps = s.skin_region();
      const Mask m_e = random_erase(m_ps, erasure, rng);
      erased_store.push_back(s.person.masked_by(m_e));  // I_ps-e
      mask_store.push_back(m_ps);
      target_store.push_back(s.person.masked_by(m_ps));  // I_ps
    }
    for (int k = 0; k < batch; ++k) {
      erased.push_back(&erased_store[k]);
      masks.push_back(&mask_store[k]);
      targets.push_back(&target_store[k]);
    }

    Tensor z = model.encode_skin(batch_tensor(erased));
    Tensor w = model.map_latent(z);
    Tensor seed = model.spatial_seed(batch_tensor(masks));
    Tensor pred = model.generate(w, seed);
    Tensor loss = rsim_loss(pred, batch_tensor(targets), encoder, cfg.lambda7,
                            cfg.lambda8);

    final_loss = nn::item(loss);
    if (!std::isfinite(final_loss))
      throw NumericError("rsim: non-finite loss at iteration " +
                         std::to_string(it));
    nn::backward(loss);
    opt.step();

    result.loss_history.push_back(final_loss);
    if (log_rows) {
      std::ostringstream row;
      row << it << '\t' << final_loss;
      log_rows->push_back(row.str());
    }
    if (observer) observer({it, final_loss});
  }

  pipeline::Checkpoint ckpt;
  ckpt.module_id = "rsim";
  ckpt.config_hash = cfg.hash();
  ckpt.iterations = static_cast<std::uint64_t>(cfg.rsim_iterations);
  ckpt.final_loss = final_loss;
  ckpt.set_meta("config", cfg.canonical());
  ckpt.set_meta("erasure_level", std::to_string(cfg.erasure_level));
  ckpt.add_params(model.params());
  ckpt.add_adam(opt, "adam");
  result.checkpoint = std::move(ckpt);
  return result;
}

bool needs_inpainting(const Mask& m_ts, const Mask& m_ps) {
  if (!m_ts.same_shape(m_ps))
    throw ValidationError("needs_inpainting: mask shape mismatch");
  for (std::size_t i = 0; i < m_ts.data.size(); ++i)
    if (m_ts.data[i] > 0.5 && !(m_ps.data[i] > 0.5)) return true;
  return false;
}

Image inpaint_if_needed(const Model& model, const Mask& m_ts, const Mask& m_ps,
                        const Image& i_ps, const Image& i_p) {
  const Mask ts = binarize(m_ts, 0.5);
  const Mask ps = binarize(m_ps, 0.5);
  if (!needs_inpainting(m_ts, m_ps)) return i_p.masked_by(ts);

  Tensor z = model.encode_skin(to_tensor(i_ps));
  Tensor w = model.map_latent(z);
  Tensor seed = model.spatial_seed(to_tensor(ts));
  const Image raw = to_image(model.generate(w, seed), 0);

  // keep real skin where it already existed, synthesize only new skin
  Image out(i_p.height, i_p.width, 3);
  for (std::size_t i = 0; i < ts.data.size(); ++i) {
    const bool in_ts = ts.data[i] > 0.5;
    const bool in_hs = in_ts && ps.data[i] > 0.5;
    for (int c = 0; c < 3; ++c)
      out.plane(c)[i] = in_hs ? i_p.plane(c)[i]
                              : (in_ts ? raw.plane(c)[i] : 0.0);
  }
  return out;
}

Model from_checkpoint(const pipeline::Checkpoint& ckpt,
                      const metrics::PerceptualEncoder* encoder) {
  if (ckpt.module_id != "rsim")
    throw IoError("rsim: checkpoint holds module '" + ckpt.module_id + "'");
  pipeline::Config cfg = pipeline::Config::parse(ckpt.meta("config"));
  Model model(cfg, encoder);
  ckpt.restore_params(model.params());
  return model;
}

}  // namespace pgvton::rsim
