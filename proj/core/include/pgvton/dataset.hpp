#pragma once

#include <pgvton/synthdata.hpp>

#include <string>
#include <vector>

namespace pgvton::synthdata {

/// Raw tensor files carry a 16-byte header (magic "PGVT", version u32,
/// H u32, W u32) followed by little-endian float32 values in H x W x C
/// order; C is implied by the payload size.
inline constexpr char kRawTensorMagic[4] = {'P', 'G', 'V', 'T'};
inline constexpr std::uint32_t kRawTensorVersion = 1;

void write_raw_tensor(const std::string& path, const Image& image);
Image read_raw_tensor(const std::string& path);

struct Dataset {
  std::vector<Sample> samples;

  std::vector<int> split_indices(const std::string& split) const;
  const Sample& by_id(const std::string& id) const;
};

/// Directory layout: manifest.tsv (id, seed, split) plus per-sample files
/// <id>_person.png, <id>_parsing.raw, <id>_pose.raw, <id>_garment.png,
/// <id>_garmask.png.
void write_dataset(const std::vector<Sample>& samples, const std::string& dir);
Dataset read_dataset(const std::string& dir);

}  // namespace pgvton::synthdata
