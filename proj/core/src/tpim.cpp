#include <pgvton/tpim.hpp>

#include <pgvton/bridge.hpp>
#include <pgvton/rng.hpp>
#include <pgvton/synthdata.hpp>

#include <cmath>
#include <numeric>
#include <sstream>

namespace pgvton::tpim {

using nn::Tensor;

Model::Model(int width, std::uint64_t seed) : width_(width) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x7450494dull));  // module-tagged seed
  const int w = width;
  e0a_ = nn::Conv2d(params_, "net.e0a", 11, w, 3, 1, 1, rng);
  e0b_ = nn::Conv2d(params_, "net.e0b", w, w, 3, 1, 1, rng);
  d1_ = nn::Conv2d(params_, "net.d1", w, 2 * w, 3, 2, 1, rng);
  e1_ = nn::Conv2d(params_, "net.e1", 2 * w, 2 * w, 3, 1, 1, rng);
  d2_ = nn::Conv2d(params_, "net.d2", 2 * w, 4 * w, 3, 2, 1, rng);
  e2_ = nn::Conv2d(params_, "net.e2", 4 * w, 4 * w, 3, 1, 1, rng);
  d3_ = nn::Conv2d(params_, "net.d3", 4 * w, 8 * w, 3, 2, 1, rng);
  e3_ = nn::Conv2d(params_, "net.e3", 8 * w, 8 * w, 3, 1, 1, rng);
  u2_ = nn::Conv2d(params_, "net.u2", 12 * w, 4 * w, 3, 1, 1, rng);
  u1_ = nn::Conv2d(params_, "net.u1", 6 * w, 2 * w, 3, 1, 1, rng);
  u0_ = nn::Conv2d(params_, "net.u0", 3 * w, w, 3, 1, 1, rng);
  head_ = nn::Conv2d(params_, "net.head", w, kParsingChannels, 3, 1, 1, rng);
}

Tensor Model::forward(const Tensor& x) const {
  if (x->shape.size() != 4 || x->dim(1) != 11)
    throw ValidationError("tpim: input must be (N,11,H,W)");
  auto a0 = nn::leaky_relu(e0b_(nn::leaky_relu(e0a_(x))));
  auto a1 = nn::leaky_relu(e1_(nn::leaky_relu(d1_(a0))));
  auto a2 = nn::leaky_relu(e2_(nn::leaky_relu(d2_(a1))));
  auto a3 = nn::leaky_relu(e3_(nn::leaky_relu(d3_(a2))));
  auto b2 = nn::leaky_relu(u2_(nn::concat({nn::upsample2_nearest(a3), a2}, 1)));
  auto b1 = nn::leaky_relu(u1_(nn::concat({nn::upsample2_nearest(b2), a1}, 1)));
  auto b0 = nn::leaky_relu(u0_(nn::concat({nn::upsample2_nearest(b1), a0}, 1)));
  return nn::softmax_channels(head_(b0));
}

namespace {

std::vector<double> remainder_channel_mask() {
  std::vector<double> m(kParsingChannels, 0.0);
  for (int c = 0; c < kParsingChannels; ++c)
    if (kRemainderChannel[c]) m[c] = 1.0;
  return m;
}

/// (N,7,H,W) -> (N,4,H,W): the hair/face and leg/lower-garment bands.
Tensor remainder_channels(const Tensor& m) {
  return nn::concat({nn::slice(m, 1, kHair, kFace + 1),
                     nn::slice(m, 1, kLeg, kLowerGarment + 1)},
                    1);
}

}  // namespace

TryOnParsing split_tryon(const Image& m_t) {
  if (m_t.channels != kParsingChannels)
    throw ValidationError("split_tryon: parsing must have 7 channels");
  TryOnParsing p;
  p.full = m_t;
  p.garment = m_t.channel_slice(kUpperGarment, kUpperGarment + 1);
  p.skin = m_t.channel_slice(kUpperSkin, kUpperSkin + 1);
  p.remainder = synthdata::derive_remainder(m_t);
  return p;
}

TryOnParsing infer_parsing(const Model& model, const Image& remainder,
                           const Image& pose, const Mask& garment_mask) {
  if (remainder.height != pose.height || pose.height != garment_mask.height ||
      remainder.width != pose.width || pose.width != garment_mask.width)
    throw ValidationError("infer_parsing: inputs must share H x W");
  Tensor x = stack_inputs({&remainder}, {&pose}, {&garment_mask});
  Tensor y = model.forward(x);
  return split_tryon(to_image(y, 0));
}

Tensor stack_inputs(const std::vector<const Image*>& remainders,
                    const std::vector<const Image*>& poses,
                    const std::vector<const Image*>& garment_masks) {
  const int n = static_cast<int>(remainders.size());
  const int h = remainders[0]->height, w = remainders[0]->width;
  Tensor out = nn::make_tensor({n, 11, h, w}, false);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    double* dst = out->value.data() + static_cast<std::size_t>(i) * 11 * plane;
    std::copy(remainders[i]->data.begin(), remainders[i]->data.end(), dst);
    std::copy(poses[i]->data.begin(), poses[i]->data.end(), dst + 7 * plane);
    std::copy(garment_masks[i]->data.begin(), garment_masks[i]->data.end(),
              dst + 10 * plane);
  }
  return out;
}

Tensor remainder_l1(const Tensor& pred7, const Tensor& target7) {
  return nn::l1_loss(remainder_channels(pred7), remainder_channels(target7));
}

Tensor tpim_loss(const Tensor& m_tr_pred, const Tensor& m_pr,
                 const Tensor& m_p_pred, const Tensor& m_p, double lambda1,
                 double lambda2) {
  Tensor t1 = nn::mul_scalar(remainder_l1(m_tr_pred, m_pr), lambda1);
  Tensor t2 = nn::mul_scalar(nn::l1_loss(m_p_pred, m_p), lambda2);
  return nn::add(t1, t2);
}

TrainResult train(const synthdata::Dataset& dataset,
                  const pipeline::Config& cfg,
                  const pipeline::Checkpoint* resume,
                  const std::function<void(const StepTrace&)>& observer,
                  std::vector<std::string>* log_rows) {
  const auto train_idx = dataset.split_indices("train");
  if (static_cast<int>(train_idx.size()) < 2)
    throw ValidationError("tpim train: need at least two train samples");
  const int batch = std::min<int>(cfg.tpim_batch,
                                  static_cast<int>(train_idx.size()));

  Model model(cfg.tpim_width, cfg.seed);
  nn::Adam opt(model.params(), cfg.tpim_lr);
  long start_iter = 0;
  if (resume) {
    resume->restore_params(model.params());
    resume->restore_adam(opt, "adam");
    start_iter = static_cast<long>(resume->iterations);
  }

  TrainResult result;
  double final_loss = 0.0;
  for (long it = start_iter; it < cfg.tpim_iterations; ++it) {
    std::mt19937_64 rng = step_rng(cfg.seed, static_cast<std::uint64_t>(it));

    // batch without replacement, then an in-batch derangement for the
    // unpaired garments
    std::vector<int> pool = train_idx;
    for (int k = 0; k < batch; ++k) {
      std::uniform_int_distribution<int> pick(k, static_cast<int>(pool.size()) - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    pool.resize(batch);
    const std::vector<int> unpaired = synthdata::shuffled_pairing(batch, rng);

    std::vector<Image> rem_store, pose_store, garment_unpaired, garment_paired,
        parsing_store;
    std::vector<const Image*> rems, poses, masks_unpaired;
    for (int k = 0; k < batch; ++k) {
      const synthdata::Sample& s = dataset.samples[pool[k]];
      const synthdata::Sample& donor = dataset.samples[pool[unpaired[k]]];
      rem_store.push_back(s.remainder_parsing());
      pose_store.push_back(s.pose);
      garment_unpaired.push_back(donor.garment_mask);
      garment_paired.push_back(s.garment_mask);
      parsing_store.push_back(s.parsing);
    }
    for (int k = 0; k < batch; ++k) {
      rems.push_back(&rem_store[k]);
      poses.push_back(&pose_store[k]);
      masks_unpaired.push_back(&garment_unpaired[k]);
    }

    // pass 1: unpaired garment
    Tensor x1 = stack_inputs(rems, poses, masks_unpaired);
    Tensor m_t = model.forward(x1);
    Tensor m_tr = nn::scale_channels(m_t, remainder_channel_mask());

    // pass 2: paired garment on the pass-1 remainder (no detachment)
    const int h = cfg.image_height, w = cfg.image_width;
    Tensor pose_t = nn::make_tensor({batch, 3, h, w}, false);
    Tensor paired_t = nn::make_tensor({batch, 1, h, w}, false);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int k = 0; k < batch; ++k) {
      std::copy(pose_store[k].data.begin(), pose_store[k].data.end(),
                pose_t->value.data() + static_cast<std::size_t>(k) * 3 * plane);
      std::copy(garment_paired[k].data.begin(), garment_paired[k].data.end(),
                paired_t->value.data() + static_cast<std::size_t>(k) * plane);
    }
    Tensor x2 = nn::concat({m_tr, pose_t, paired_t}, 1);
    Tensor m_p_pred = model.forward(x2);

    std::vector<const Image*> parsing_ptrs, rem_ptrs;
    for (int k = 0; k < batch; ++k) {
      parsing_ptrs.push_back(&parsing_store[k]);
      rem_ptrs.push_back(&rem_store[k]);
    }
    Tensor m_p = batch_tensor(parsing_ptrs);
    Tensor m_pr = batch_tensor(rem_ptrs);

    Tensor t1 = nn::mul_scalar(remainder_l1(m_tr, m_pr), cfg.lambda1);
    Tensor t2 = nn::mul_scalar(nn::l1_loss(m_p_pred, m_p), cfg.lambda2);
    Tensor loss = nn::add(t1, t2);

    final_loss = nn::item(loss);
    if (!std::isfinite(final_loss))
      throw NumericError("tpim: non-finite loss at iteration " +
                         std::to_string(it));
    nn::backward(loss);
    opt.step();

    result.loss_history.push_back(final_loss);
    if (log_rows) {
      std::ostringstream row;
      row << it << '\t' << nn::item(t1) << '\t' << nn::item(t2) << '\t'
          << final_loss;
      log_rows->push_back(row.str());
    }
    if (observer) {
      StepTrace trace;
      trace.iteration = it;
      trace.term_remainder = nn::item(t1);
      trace.term_cycle = nn::item(t2);
      trace.total = final_loss;
      trace.pass1_output = m_t;
      trace.pass1_remainder = m_tr;
      trace.pass2_input = x2;
      observer(trace);
    }
  }

  pipeline::Checkpoint ckpt;
  ckpt.module_id = "tpim";
  ckpt.config_hash = cfg.hash();
  ckpt.iterations = static_cast<std::uint64_t>(cfg.tpim_iterations);
  ckpt.final_loss = final_loss;
  ckpt.set_meta("width", std::to_string(cfg.tpim_width));
  ckpt.set_meta("seed", std::to_string(cfg.seed));
  ckpt.add_params(model.params());
  ckpt.add_adam(opt, "adam");
  result.checkpoint = std::move(ckpt);
  return result;
}

Model from_checkpoint(const pipeline::Checkpoint& ckpt) {
  if (ckpt.module_id != "tpim")
    throw IoError("tpim: checkpoint holds module '" + ckpt.module_id + "'");
  Model model(std::stoi(ckpt.meta("width", "16")),
              std::stoull(ckpt.meta("seed", "7")));
  ckpt.restore_params(model.params());
  return model;
}

}  // namespace pgvton::tpim
