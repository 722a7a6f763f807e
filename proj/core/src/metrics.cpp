#include <pgvton/metrics.hpp>

#include <pgvton/checkpoint.hpp>
#include <pgvton/ptm.hpp>
#include <pgvton/rng.hpp>
#include <pgvton/tpim.hpp>

#include <cmath>
#include <limits>

namespace pgvton::metrics {

PerceptualEncoder::PerceptualEncoder(int dim, std::uint64_t seed) : dim_(dim) {
  std::mt19937_64 rng(seed);
  c1_ = nn::Conv2d(params_, "enc.c1", 3, dim, 3, 1, 1, rng);
  c2_ = nn::Conv2d(params_, "enc.c2", dim, 2 * dim, 3, 2, 1, rng);
  c3_ = nn::Conv2d(params_, "enc.c3", 2 * dim, 4 * dim, 3, 2, 1, rng);
  c4_ = nn::Conv2d(params_, "enc.c4", 4 * dim, 8 * dim, 3, 2, 1, rng);
  // frozen: the arrays exist but never receive gradients
  for (const auto& [name, t] : params_.items()) t->requires_grad = false;
}

std::array<nn::Tensor, 4> PerceptualEncoder::features(
    const nn::Tensor& images) const {
  if (images->shape.size() != 4 || images->dim(1) != 3)
    throw ValidationError("perceptual encoder: input must be (N,3,H,W)");
  if (images->dim(2) % 8 != 0 || images->dim(3) % 8 != 0)
    throw ValidationError("perceptual encoder: dims must be multiples of 8");
  auto f1 = nn::leaky_relu(c1_(images));
  auto f2 = nn::leaky_relu(c2_(f1));
  auto f3 = nn::leaky_relu(c3_(f2));
  auto f4 = nn::leaky_relu(c4_(f3));
  return {f1, f2, f3, f4};
}

const std::array<nn::Tensor, 4>& PerceptualEncoder::zero_response(
    int h, int w) const {
  auto it = zero_cache_.find({h, w});
  if (it != zero_cache_.end()) return it->second;
  auto feats = features(nn::constant_like({1, 3, h, w}, 0.0));
  for (auto& f : feats) f = nn::detach(f);
  return zero_cache_.emplace(std::make_pair(h, w), feats).first->second;
}

void PerceptualEncoder::load_weights(const std::string& path) {
  const auto ckpt = pipeline::Checkpoint::load(path, "encoder");
  auto& store = const_cast<nn::ParamStore&>(params_);
  ckpt.restore_params(store);
  zero_cache_.clear();
}

double l1(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ValidationError("l1: shape mismatch");
  return mean_abs_diff(a, b);
}

double l2(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ValidationError("l2: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

nn::Tensor perceptual_distance(const PerceptualEncoder& enc,
                               const nn::Tensor& a, const nn::Tensor& b) {
  const auto fa = enc.features(a);
  const auto fb = enc.features(b);
  nn::Tensor total = nn::l1_loss(fa[0], fb[0]);
  for (int i = 1; i < 4; ++i)
    total = nn::add(total, nn::l1_loss(fa[i], fb[i]));
  return total;
}

nn::Tensor perceptual_distance(const PerceptualEncoder& enc,
                               const nn::Tensor& a,
                               const std::array<nn::Tensor, 4>& features_b) {
  const auto fa = enc.features(a);
  nn::Tensor total = nn::l1_loss(fa[0], features_b[0]);
  for (int i = 1; i < 4; ++i)
    total = nn::add(total, nn::l1_loss(fa[i], features_b[i]));
  return total;
}

double perceptual_distance(const PerceptualEncoder& enc, const Image& a,
                           const Image& b) {
  return nn::item(perceptual_distance(enc, to_tensor(a), to_tensor(b)));
}

double mse_image(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ValidationError("mse: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = 255.0 * (a.data[i] - b.data[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double mse = mse_image(a, b);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ValidationError("ssim: shape mismatch");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = 0.01 * 0.01;  // L = 1
  constexpr double kC2 = 0.03 * 0.03;
  if (a.height < kWin || a.width < kWin)
    throw ValidationError("ssim: image smaller than the 11x11 window");

  double win[kWin];
  double wsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    win[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    wsum += win[i];
  }
  for (double& w : win) w /= wsum;

  const int oh = a.height - kWin + 1, ow = a.width - kWin + 1;
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
        for (int ky = 0; ky < kWin; ++ky)
          for (int kx = 0; kx < kWin; ++kx) {
            const double w = win[ky] * win[kx];
            const double va = a.at(c, oy + ky, ox + kx);
            const double vb = b.at(c, oy + ky, ox + kx);
            ma += w * va;
            mb += w * vb;
            maa += w * va * va;
            mbb += w * vb * vb;
            mab += w * va * vb;
          }
        const double var_a = maa - ma * ma;
        const double var_b = mbb - mb * mb;
        const double cov = mab - ma * mb;
        total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
                 ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
      }
  }
  return total / (static_cast<double>(a.channels) * oh * ow);
}

std::vector<SelectionRow> selection_proportions(
    const synthdata::Dataset& dataset, const ptm::TryOnModel& model,
    const std::vector<double>& taus, const tpim::Model* tpim_model,
    std::uint64_t seed) {
  const auto test = dataset.split_indices("test");
  if (test.empty())
    throw ValidationError("selection_proportions: empty test split");

  std::mt19937_64 rng(splitmix64(seed));
  const std::vector<int> pairing =
      test.size() >= 2 ? synthdata::shuffled_pairing(
                             static_cast<int>(test.size()), rng)
                       : std::vector<int>{0};

  // one candidate set per sample, reused across taus
  std::vector<geometry::WarpCandidateSet> candidates;
  std::vector<Mask> targets, sources;
  candidates.reserve(test.size());
  for (std::size_t k = 0; k < test.size(); ++k) {
    const synthdata::Sample& person = dataset.samples[test[k]];
    const synthdata::Sample& donor = dataset.samples[test[pairing[k]]];
    Mask target = person.garment_region();
    if (tpim_model) {
      const tpim::TryOnParsing parsed = tpim::infer_parsing(
          *tpim_model, person.remainder_parsing(), person.pose,
          donor.garment_mask);
      target = binarize(parsed.garment, 0.5);
    }
    candidates.push_back(
        model.warp_candidates(donor.garment, donor.garment_mask, target));
    targets.push_back(std::move(target));
    sources.push_back(donor.garment_mask);
  }

  std::vector<SelectionRow> rows;
  for (double tau : taus) {
    SelectionRow row;
    row.tau = tau;
    for (std::size_t k = 0; k < test.size(); ++k) {
      const int scale = geometry::select_optimal(candidates[k], targets[k],
                                                 sources[k], tau);
      row.proportion[scale - 3] += 1.0;
    }
    for (double& p : row.proportion) p /= static_cast<double>(test.size());
    rows.push_back(row);
  }
  return rows;
}

}  // namespace pgvton::metrics
