#pragma once

#include <pgvton/errors.hpp>

#include <cstdint>
#include <string>

namespace pgvton::pipeline {

/// Flat key=value run configuration. Defaults are the published training
/// settings (learning rates, batch sizes, iteration counts, loss weights,
/// tau, xi); the iteration counts are full-scale documentation defaults --
/// smoke runs override them. Unknown keys are rejected.
struct Config {
  std::uint64_t seed = 7;
  std::string dataset = "data";
  int image_height = 64;
  int image_width = 48;

  double lambda1 = 2.0, lambda2 = 2.0;
  double lambda3 = 3.0, lambda4 = 0.3;
  double lambda5 = 6.0, lambda6 = 0.2;
  double lambda7 = 6.0, lambda8 = 0.2;
  double tau = 0.2;
  double xi = 0.3;

  double tpim_lr = 1e-4;
  int tpim_batch = 16;
  long tpim_iterations = 72000;
  int tpim_width = 16;

  double ptm_lr = 2e-4;
  int ptm_batch = 4;
  long ptm_iterations = 145000;

  double rsim_lr = 1e-5;
  int rsim_batch = 32;
  long rsim_iterations = 36000;

  int d1 = 16;         // patch-embedding channel width
  int h1 = 8, w1 = 6;  // token grid each pyramid level is resampled to
  double max_offset = 0.5;

  int erasure_level = 5;
  int encoder_dim = 16;     // d of the frozen pyramid (d,2d,4d,8d)
  int mapper_width = 12;    // fined-mapping backbone base width
  int compositor_width = 8; // composition U-Net base width
  bool demodulation = false;  // style-conv weight demodulation instead of AdaIN

  static Config parse(const std::string& text);
  static Config parse_file(const std::string& path);

  /// Sorted key=value serialization; the config hash is FNV-1a over it.
  std::string canonical() const;
  std::uint64_t hash() const;

  void validate() const;
};

}  // namespace pgvton::pipeline
