#pragma once

#include <pgvton/image.hpp>
#include <pgvton/parsing.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pgvton::synthdata {

enum class GarmentTexture : int { kSolid = 0, kStripes, kLogo, kChecker };

struct Rgb {
  double r = 0.0, g = 0.0, b = 0.0;
};

/// Reachable pose range of the paper-doll figure; angles are radians from
/// straight-down, positive bending the limb outward/up. Limbs stay inside
/// the frame for any angles in range.
inline constexpr double kShoulderMin = -0.40, kShoulderMax = 1.25;
inline constexpr double kElbowMin = -0.30, kElbowMax = 2.00;

struct SceneSpec {
  std::uint64_t rng_seed = 0;
  double shoulder_left = 0.15, elbow_left = 0.10;
  double shoulder_right = 0.15, elbow_right = 0.10;
  Rgb skin_tone{0.85, 0.65, 0.52};
  GarmentTexture garment_texture = GarmentTexture::kSolid;
  Rgb garment_color{0.75, 0.20, 0.20};
  double sleeve_length = 0.5;  // fraction of the arm covered by the sleeve
  int image_height = 64;
  int image_width = 48;
};

/// Throws ValidationError on out-of-range angles, sleeve length, colors,
/// or image dims (dims must be multiples of 8, at least 16).
void validate(const SceneSpec& spec);

/// One paired (person, in-shop garment) record plus ground truth.
struct Sample {
  std::string id;
  std::uint64_t seed = 0;
  std::string split = "train";

  Image person;        // I_p, 3 channels in [0,1]
  Image parsing;       // M_p, 7 channels, one-hot
  Image pose;          // P, 3 channels: part-index/10, U, V
  Image garment;       // I_g', flat in-shop render of the dressed garment
  Mask garment_mask;   // M_g'

  Mask garment_region() const;     // M_pg: upper-garment channel
  Mask skin_region() const;        // M_ps: upper-skin channel
  Image remainder_parsing() const; // M_pr
  Image garment_image() const;     // I_pg = M_pg * I_p
  Image skin_image() const;        // I_ps = M_ps * I_p
  Image remainder_image() const;   // I_pr over the support of M_pr
};

/// Deterministic rasterization of the scene: layered paper-doll figure
/// (torso quad, two 2-segment arms, head disc, legs) plus a canonical flat
/// render of the dressed garment.
Sample render_sample(const SceneSpec& spec);

/// Zeroes the background, upper-garment and upper-skin channels; the other
/// four channels are copied unchanged (no renormalization).
Image derive_remainder(const Image& parsing);

/// Uniformly random in-range scene.
SceneSpec random_spec(std::mt19937_64& rng, int height, int width);

/// Random pairing permutation with no fixed point (Sattolo cycle), so no
/// sample is paired with its own garment. n must be >= 2.
std::vector<int> shuffled_pairing(int n, std::mt19937_64& rng);

}  // namespace pgvton::synthdata
