#include <pgvton/synthdata.hpp>

#include <algorithm>
#include <cmath>

namespace pgvton::synthdata {

namespace {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

/// Distance of p to segment [a,b]; t is the clamped axis parameter and
/// side the signed perpendicular offset.
double segment_dist(Vec2 p, Vec2 a, Vec2 b, double& t, double& side) {
  const Vec2 d = b - a;
  const double len2 = std::max(dot(d, d), 1e-12);
  t = std::clamp(dot(p - a, d) / len2, 0.0, 1.0);
  const Vec2 c = a + d * t;
  const Vec2 off = p - c;
  const double len = std::sqrt(len2);
  side = (d.x * off.y - d.y * off.x) / len;  // signed, in pixels
  return std::sqrt(dot(off, off));
}

Rgb scale(Rgb c, double s) {
  return {std::clamp(c.r * s, 0.0, 1.0), std::clamp(c.g * s, 0.0, 1.0),
          std::clamp(c.b * s, 0.0, 1.0)};
}

Rgb invert(Rgb c) { return {1.0 - c.r, 1.0 - c.g, 1.0 - c.b}; }

Rgb garment_texel(GarmentTexture t, Rgb color, double u, double v) {
  switch (t) {
    case GarmentTexture::kSolid:
      return color;
    case GarmentTexture::kStripes:
      return (static_cast<int>(std::floor(v * 6.0)) % 2 == 0) ? color
                                                              : scale(color, 0.55);
    case GarmentTexture::kChecker: {
      const int q = static_cast<int>(std::floor(u * 5.0)) +
                    static_cast<int>(std::floor(v * 5.0));
      return (q % 2 == 0) ? color : scale(invert(color), 0.85);
    }
    case GarmentTexture::kLogo:
      if (u >= 0.32 && u <= 0.68 && v >= 0.30 && v <= 0.50)
        return scale(invert(color), 0.9);
      return color;
  }
  return color;
}

/// Mutable per-pixel rasterization state for the painter's passes.
struct Buffers {
  int h, w;
  std::vector<int> category;      // ParsingChannel per pixel
  std::vector<Rgb> color;
  std::vector<int> part;          // pose part id, 0 = none
  std::vector<double> u, v;       // pose part-local coords

  Buffers(int height, int width)
      : h(height), w(width),
        category(static_cast<std::size_t>(h) * w, kBackground),
        color(static_cast<std::size_t>(h) * w),
        part(static_cast<std::size_t>(h) * w, 0),
        u(static_cast<std::size_t>(h) * w, 0.0),
        v(static_cast<std::size_t>(h) * w, 0.0) {}

  std::size_t idx(int yi, int xi) const {
    return static_cast<std::size_t>(yi) * w + xi;
  }
};

struct ArmPose {
  Vec2 shoulder, elbow, wrist;
  double upper_len, fore_len;
};

ArmPose arm_pose(Vec2 shoulder, double side, double shoulder_angle,
                 double elbow_angle, double upper_len, double fore_len) {
  // angle 0 points straight down; positive swings the limb outward
  const double a1 = shoulder_angle;
  const Vec2 d1{side * std::sin(a1), std::cos(a1)};
  const Vec2 elbow = shoulder + d1 * upper_len;
  const double a2 = a1 + elbow_angle;
  const Vec2 d2{side * std::sin(a2), std::cos(a2)};
  return {shoulder, elbow, shoulder + d1 * upper_len + d2 * fore_len, upper_len,
          fore_len};
}

}  // namespace

void validate(const SceneSpec& spec) {
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (!in(spec.shoulder_left, kShoulderMin, kShoulderMax) ||
      !in(spec.shoulder_right, kShoulderMin, kShoulderMax))
    throw ValidationError("scene spec: shoulder angle outside reachable range");
  if (!in(spec.elbow_left, kElbowMin, kElbowMax) ||
      !in(spec.elbow_right, kElbowMin, kElbowMax))
    throw ValidationError("scene spec: elbow angle outside reachable range");
  if (!in(spec.sleeve_length, 0.0, 1.0))
    throw ValidationError("scene spec: sleeve_length must lie in [0,1]");
  for (double c : {spec.skin_tone.r, spec.skin_tone.g, spec.skin_tone.b,
                   spec.garment_color.r, spec.garment_color.g,
                   spec.garment_color.b})
    if (!in(c, 0.0, 1.0))
      throw ValidationError("scene spec: colors must lie in [0,1]");
  if (spec.image_height < 16 || spec.image_width < 16 ||
      spec.image_height % 8 != 0 || spec.image_width % 8 != 0)
    throw ValidationError(
        "scene spec: image dims must be multiples of 8, at least 16");
}

Sample render_sample(const SceneSpec& spec) {
  validate(spec);
  const int h = spec.image_height, w = spec.image_width;
  const double hh = h, ww = w;
  const double cx = 0.5 * ww;

  // figure proportions (fractions of the frame)
  const Vec2 head_c{cx, 0.155 * hh};
  const double face_r = 0.070 * hh;
  const Vec2 hair_c{cx, 0.140 * hh};
  const double hair_r = 0.092 * hh;
  const Vec2 neck_a{cx, 0.185 * hh}, neck_b{cx, 0.28 * hh};
  const double neck_r = 0.035 * ww;
  const double torso_hw = 0.15 * ww;
  const double torso_y0 = 0.28 * hh, torso_y1 = 0.56 * hh;
  const double upper_len = 0.100 * hh, fore_len = 0.095 * hh;
  const double arm_r = 0.030 * ww, sleeve_r = 0.048 * ww;
  const double hand_r = 0.040 * ww;
  const double pants_hw = 0.13 * ww;
  const double pants_y0 = torso_y1, pants_y1 = 0.82 * hh;
  const double leg_dx = 0.065 * ww, leg_r = 0.036 * ww;
  const double leg_y0 = 0.60 * hh, leg_y1 = 0.94 * hh;

  const ArmPose arm_l = arm_pose({cx - torso_hw, 0.30 * hh}, -1.0,
                                 spec.shoulder_left, spec.elbow_left, upper_len,
                                 fore_len);
  const ArmPose arm_r_ = arm_pose({cx + torso_hw, 0.30 * hh}, +1.0,
                                  spec.shoulder_right, spec.elbow_right,
                                  upper_len, fore_len);

  Buffers buf(h, w);

  // background with a faint seeded speckle so determinism is observable
  std::mt19937_64 bg_rng(spec.rng_seed);
  std::uniform_real_distribution<double> speck(-0.015, 0.015);
  for (int yi = 0; yi < h; ++yi)
    for (int xi = 0; xi < w; ++xi) {
      const double base = 0.90 - 0.06 * (yi / hh) + 0.02 * (xi / ww);
      const double n = speck(bg_rng);
      buf.color[buf.idx(yi, xi)] = {std::clamp(base + n, 0.0, 1.0),
                                    std::clamp(base + n, 0.0, 1.0),
                                    std::clamp(base + 0.01 + n, 0.0, 1.0)};
    }

  const Rgb hair_color{0.25, 0.17, 0.12};
  const Rgb pants_color{0.16, 0.18, 0.30};

  auto paint = [&](int yi, int xi, int cat, Rgb col) {
    const std::size_t i = buf.idx(yi, xi);
    buf.category[i] = cat;
    buf.color[i] = col;
  };

  const double arm_total = arm_l.upper_len + arm_l.fore_len;
  const double sleeve_frac = spec.sleeve_length;

  // painter's order: legs, pants, torso garment, neck, hair, face, arms, hands
  for (int yi = 0; yi < h; ++yi) {
    for (int xi = 0; xi < w; ++xi) {
      const Vec2 p{xi + 0.5, yi + 0.5};
      double t, side;

      for (double sgn : {-1.0, 1.0}) {
        const Vec2 a{cx + sgn * leg_dx, leg_y0}, b{cx + sgn * leg_dx, leg_y1};
        if (segment_dist(p, a, b, t, side) <= leg_r)
          paint(yi, xi, kLeg, scale(spec.skin_tone, 0.95 - 0.05 * t));
      }
      if (std::abs(p.x - cx) <= pants_hw && p.y >= pants_y0 && p.y <= pants_y1)
        paint(yi, xi, kLowerGarment, pants_color);
      if (std::abs(p.x - cx) <= torso_hw && p.y >= torso_y0 && p.y <= torso_y1) {
        const double u = (p.x - (cx - torso_hw)) / (2.0 * torso_hw);
        const double v = (p.y - torso_y0) / (torso_y1 - torso_y0);
        paint(yi, xi, kUpperGarment,
              garment_texel(spec.garment_texture, spec.garment_color, u, v));
      }
      if (segment_dist(p, neck_a, neck_b, t, side) <= neck_r)
        paint(yi, xi, kUpperSkin, scale(spec.skin_tone, 0.96));
      {
        const Vec2 d = p - hair_c;
        if (dot(d, d) <= hair_r * hair_r) paint(yi, xi, kHair, hair_color);
      }
      {
        const Vec2 d = p - head_c;
        if (dot(d, d) <= face_r * face_r)
          paint(yi, xi, kFace, scale(spec.skin_tone, 1.02));
      }

      for (const ArmPose* arm : {&arm_l, &arm_r_}) {
        // arm-length parameter in [0,1] across both segments
        double tu, su, tf, sf;
        const double du = segment_dist(p, arm->shoulder, arm->elbow, tu, su);
        const double df = segment_dist(p, arm->elbow, arm->wrist, tf, sf);
        const bool upper_closer = du <= df;
        const double dist = upper_closer ? du : df;
        const double along =
            upper_closer
                ? tu * arm->upper_len / arm_total
                : (arm->upper_len + tf * arm->fore_len) / arm_total;
        const bool sleeved = sleeve_frac > 0.0 && along <= sleeve_frac;
        const double radius = sleeved ? sleeve_r : arm_r;
        if (dist <= radius) {
          if (sleeved) {
            const double u = 0.5 + (upper_closer ? su : sf) / (2.0 * sleeve_r);
            paint(yi, xi, kUpperGarment,
                  garment_texel(spec.garment_texture, spec.garment_color, u,
                                along));
          } else {
            paint(yi, xi, kUpperSkin,
                  scale(spec.skin_tone, 0.92 + 0.08 * (1.0 - along)));
          }
        }
      }
      for (const ArmPose* arm : {&arm_l, &arm_r_}) {
        const Vec2 d = p - arm->wrist;
        if (dot(d, d) <= hand_r * hand_r)
          paint(yi, xi, kUpperSkin, scale(spec.skin_tone, 0.95));
      }
    }
  }

  // pose pass: body geometry, garments ignored
  for (int yi = 0; yi < h; ++yi) {
    for (int xi = 0; xi < w; ++xi) {
      const Vec2 p{xi + 0.5, yi + 0.5};
      const std::size_t i = buf.idx(yi, xi);
      double t, side;
      auto set_part = [&](int id, double u, double v) {
        buf.part[i] = id;
        buf.u[i] = std::clamp(u, 0.0, 1.0);
        buf.v[i] = std::clamp(v, 0.0, 1.0);
      };

      if (std::abs(p.x - cx) <= torso_hw && p.y >= torso_y0 && p.y <= torso_y1)
        set_part(2, (p.x - (cx - torso_hw)) / (2.0 * torso_hw),
                 (p.y - torso_y0) / (torso_y1 - torso_y0));
      for (double sgn : {-1.0, 1.0}) {
        const Vec2 a{cx + sgn * leg_dx, leg_y0}, b{cx + sgn * leg_dx, leg_y1};
        if (segment_dist(p, a, b, t, side) <= leg_r)
          set_part(sgn < 0 ? 7 : 8, t, 0.5 + side / (2.0 * leg_r));
      }
      {
        const Vec2 d = p - hair_c;
        if (dot(d, d) <= hair_r * hair_r)
          set_part(1, 0.5 + d.x / (2.0 * hair_r), 0.5 + d.y / (2.0 * hair_r));
      }
      if (segment_dist(p, neck_a, neck_b, t, side) <= neck_r)
        set_part(1, 0.5 + side / (2.0 * neck_r), t);
      int arm_id = 3;
      for (const ArmPose* arm : {&arm_l, &arm_r_}) {
        const double du = segment_dist(p, arm->shoulder, arm->elbow, t, side);
        if (du <= arm_r) set_part(arm_id, t, 0.5 + side / (2.0 * arm_r));
        const double df = segment_dist(p, arm->elbow, arm->wrist, t, side);
        if (df <= arm_r) set_part(arm_id + 1, t, 0.5 + side / (2.0 * arm_r));
        arm_id += 2;
      }
      int hand_id = 9;
      for (const ArmPose* arm : {&arm_l, &arm_r_}) {
        const Vec2 d = p - arm->wrist;
        if (dot(d, d) <= hand_r * hand_r)
          set_part(hand_id, 0.5 + d.x / (2.0 * hand_r),
                   0.5 + d.y / (2.0 * hand_r));
        ++hand_id;
      }
    }
  }

  Sample s;
  s.seed = spec.rng_seed;
  s.person = Image(h, w, 3);
  s.parsing = Image(h, w, kParsingChannels);
  s.pose = Image(h, w, 3);
  for (int yi = 0; yi < h; ++yi)
    for (int xi = 0; xi < w; ++xi) {
      const std::size_t i = buf.idx(yi, xi);
      s.person.at(0, yi, xi) = buf.color[i].r;
      s.person.at(1, yi, xi) = buf.color[i].g;
      s.person.at(2, yi, xi) = buf.color[i].b;
      s.parsing.at(buf.category[i], yi, xi) = 1.0;
      if (buf.part[i] > 0) {
        s.pose.at(0, yi, xi) = buf.part[i] / 10.0;
        s.pose.at(1, yi, xi) = buf.u[i];
        s.pose.at(2, yi, xi) = buf.v[i];
      }
    }

  // flat in-shop render: canonical torso rectangle plus straight sleeves
  s.garment = Image(h, w, 3);
  s.garment_mask = Mask(h, w, 1);
  const double g_hw = 0.15 * ww;
  const double g_y0 = 0.30 * hh, g_y1 = 0.58 * hh;
  const double g_angle = 1.05;  // canonical sleeve direction, out-down
  const double g_sleeve_len = sleeve_frac * arm_total;
  for (int yi = 0; yi < h; ++yi)
    for (int xi = 0; xi < w; ++xi) {
      const Vec2 p{xi + 0.5, yi + 0.5};
      bool hit = false;
      double u = 0.0, v = 0.0;
      if (std::abs(p.x - cx) <= g_hw && p.y >= g_y0 && p.y <= g_y1) {
        hit = true;
        u = (p.x - (cx - g_hw)) / (2.0 * g_hw);
        v = (p.y - g_y0) / (g_y1 - g_y0);
      }
      if (!hit && g_sleeve_len > 0.0) {
        for (double sgn : {-1.0, 1.0}) {
          const Vec2 a{cx + sgn * g_hw, g_y0 + 0.02 * hh};
          const Vec2 d{sgn * std::sin(g_angle), std::cos(g_angle)};
          const Vec2 b = a + d * g_sleeve_len;
          double t, side;
          if (segment_dist(p, a, b, t, side) <= sleeve_r) {
            hit = true;
            u = 0.5 + side / (2.0 * sleeve_r);
            v = t * sleeve_frac;
          }
        }
      }
      if (hit) {
        const Rgb c =
            garment_texel(spec.garment_texture, spec.garment_color, u, v);
        s.garment.at(0, yi, xi) = c.r;
        s.garment.at(1, yi, xi) = c.g;
        s.garment.at(2, yi, xi) = c.b;
        s.garment_mask.at(0, yi, xi) = 1.0;
      }
    }
  return s;
}

Image derive_remainder(const Image& parsing) {
  Image out(parsing.height, parsing.width, parsing.channels);
  for (int c = 0; c < parsing.channels; ++c) {
    if (!kRemainderChannel[c]) continue;
    std::copy(parsing.plane(c), parsing.plane(c) + parsing.plane_size(),
              out.plane(c));
  }
  return out;
}

Mask Sample::garment_region() const {
  return parsing.channel_slice(kUpperGarment, kUpperGarment + 1);
}

Mask Sample::skin_region() const {
  return parsing.channel_slice(kUpperSkin, kUpperSkin + 1);
}

Image Sample::remainder_parsing() const { return derive_remainder(parsing); }

Image Sample::garment_image() const { return person.masked_by(garment_region()); }

Image Sample::skin_image() const { return person.masked_by(skin_region()); }

Image Sample::remainder_image() const {
  const Image rem = remainder_parsing();
  Mask support(rem.height, rem.width, 1);
  for (int c = 0; c < rem.channels; ++c)
    for (std::size_t i = 0; i < support.data.size(); ++i)
      if (rem.plane(c)[i] != 0.0) support.data[i] = 1.0;
  return person.masked_by(support);
}

SceneSpec random_spec(std::mt19937_64& rng, int height, int width) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  SceneSpec spec;
  spec.rng_seed = rng();
  spec.shoulder_left = range(kShoulderMin, kShoulderMax);
  spec.shoulder_right = range(kShoulderMin, kShoulderMax);
  spec.elbow_left = range(kElbowMin, kElbowMax);
  spec.elbow_right = range(kElbowMin, kElbowMax);
  spec.skin_tone = {range(0.45, 0.95), range(0.35, 0.75), range(0.28, 0.62)};
  spec.garment_texture =
      static_cast<GarmentTexture>(static_cast<int>(range(0.0, 3.999)));
  spec.garment_color = {unit(rng), unit(rng), unit(rng)};
  spec.sleeve_length = unit(rng);
  spec.image_height = height;
  spec.image_width = width;
  return spec;
}

std::vector<int> shuffled_pairing(int n, std::mt19937_64& rng) {
  if (n < 2)
    throw ValidationError("shuffled_pairing: need at least two samples");
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  // Sattolo's algorithm: a uniformly random single cycle, hence no fixed point
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i - 1);
    std::swap(perm[i], perm[pick(rng)]);
  }
  return perm;
}

}  // namespace pgvton::synthdata
