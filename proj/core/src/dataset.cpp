#include <pgvton/dataset.hpp>

#include <pgvton/png_io.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace pgvton::synthdata {

namespace fs = std::filesystem;

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_raw_tensor(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_raw_tensor: cannot open " + path);
  out.write(kRawTensorMagic, 4);
  put_u32(out, kRawTensorVersion);
  put_u32(out, static_cast<std::uint32_t>(image.height));
  put_u32(out, static_cast<std::uint32_t>(image.width));
  // H x W x C float32, little-endian
  std::vector<float> buf(image.data.size());
  std::size_t k = 0;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c)
        buf[k++] = static_cast<float>(image.at(c, y, x));
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw IoError("write_raw_tensor: short write to " + path);
}

Image read_raw_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("read_raw_tensor: cannot open " + path);
  const std::streamsize total = in.tellg();
  in.seekg(0);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kRawTensorMagic, 4) != 0)
    throw IoError("read_raw_tensor: bad magic in " + path);
  const std::uint32_t version = get_u32(in);
  if (version != kRawTensorVersion)
    throw IoError("read_raw_tensor: unsupported version in " + path);
  const std::uint32_t h = get_u32(in), w = get_u32(in);
  const std::streamsize payload = total - 16;
  if (h == 0 || w == 0 || payload <= 0 ||
      payload % (static_cast<std::streamsize>(h) * w * sizeof(float)) != 0)
    throw IoError("read_raw_tensor: corrupt payload in " + path);
  const int c = static_cast<int>(
      payload / (static_cast<std::streamsize>(h) * w * sizeof(float)));
  std::vector<float> buf(static_cast<std::size_t>(h) * w * c);
  in.read(reinterpret_cast<char*>(buf.data()), payload);
  if (!in) throw IoError("read_raw_tensor: short read from " + path);
  Image img(static_cast<int>(h), static_cast<int>(w), c);
  std::size_t k = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int ch = 0; ch < c; ++ch) img.at(ch, y, x) = buf[k++];
  return img;
}

void write_dataset(const std::vector<Sample>& samples, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("write_dataset: cannot create " + dir);
  std::ofstream manifest(fs::path(dir) / "manifest.tsv");
  if (!manifest) throw IoError("write_dataset: cannot write manifest in " + dir);
  manifest << "id\tseed\tsplit\n";
  for (const Sample& s : samples) {
    const fs::path base = fs::path(dir) / s.id;
    write_png(base.string() + "_person.png", s.person);
    write_raw_tensor(base.string() + "_parsing.raw", s.parsing);
    write_raw_tensor(base.string() + "_pose.raw", s.pose);
    write_png(base.string() + "_garment.png", s.garment);
    write_png(base.string() + "_garmask.png", s.garment_mask);
    manifest << s.id << '\t' << s.seed << '\t' << s.split << '\n';
  }
  if (!manifest) throw IoError("write_dataset: manifest write failed in " + dir);
}

Dataset read_dataset(const std::string& dir) {
  Dataset ds;
  const fs::path manifest_path = fs::path(dir) / "manifest.tsv";
  if (!fs::exists(manifest_path)) {
    if (fs::exists(dir)) return ds;  // empty directory: empty dataset
    throw IoError("read_dataset: no such directory " + dir);
  }
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("read_dataset: cannot open manifest in " + dir);
  std::string line;
  std::getline(manifest, line);  // header
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    Sample s;
    std::string seed_text;
    if (!std::getline(row, s.id, '\t') || !std::getline(row, seed_text, '\t') ||
        !std::getline(row, s.split))
      throw IoError("read_dataset: malformed manifest row: " + line);
    s.seed = std::stoull(seed_text);
    const fs::path base = fs::path(dir) / s.id;
    auto require = [&](const std::string& p) {
      if (!fs::exists(p))
        throw IoError("read_dataset: sample '" + s.id + "' is missing " + p);
      return p;
    };
    s.person = read_png(require(base.string() + "_person.png"));
    s.parsing = read_raw_tensor(require(base.string() + "_parsing.raw"));
    s.pose = read_raw_tensor(require(base.string() + "_pose.raw"));
    s.garment = read_png(require(base.string() + "_garment.png"));
    s.garment_mask = read_png(require(base.string() + "_garmask.png"));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<int> Dataset::split_indices(const std::string& split) const {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(samples.size()); ++i)
    if (samples[i].split == split) idx.push_back(i);
  return idx;
}

const Sample& Dataset::by_id(const std::string& id) const {
  for (const Sample& s : samples)
    if (s.id == id) return s;
  throw IoError("dataset: no sample with id '" + id + "'");
}

}  // namespace pgvton::synthdata
