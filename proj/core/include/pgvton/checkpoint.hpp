#pragma once

#include <pgvton/nn/adam.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace pgvton::pipeline {

inline constexpr char kCheckpointMagic[8] = {'P', 'G', 'V', 'T',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named-parameter container persisted as a little-endian binary file:
/// magic, format version, module id, config hash, training metadata, then
/// the arrays (name, dtype, shape, payload). Round-trips are bit-exact.
/// Loading rejects a mismatched format version or module id.
struct Checkpoint {
  struct Array {
    std::string name;
    nn::Shape shape;
    std::vector<double> data;
  };

  std::string module_id;
  std::uint64_t config_hash = 0;
  std::uint64_t iterations = 0;
  double final_loss = 0.0;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<Array> arrays;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
  static Checkpoint load(const std::string& path,
                         const std::string& expect_module);

  const Array* find(const std::string& name) const;
  std::string meta(const std::string& key, const std::string& fallback = "") const;
  void set_meta(const std::string& key, const std::string& value);

  /// Parameter helpers; names are checkpoint-array names, shape-checked on
  /// restore.
  void add_params(const nn::ParamStore& params);
  void restore_params(nn::ParamStore& params) const;
  void add_adam(const nn::Adam& opt, const std::string& prefix);
  void restore_adam(nn::Adam& opt, const std::string& prefix) const;
};

}  // namespace pgvton::pipeline
