#include <pgvton/checkpoint.hpp>

#include <cstring>
#include <fstream>

namespace pgvton::pipeline {

namespace {

constexpr std::uint8_t kDtypeF64 = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  const std::uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string get_string(std::istream& in) {
  const std::uint32_t n = get_u32(in);
  if (n > (1u << 20)) throw IoError("checkpoint: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open " + path + " for writing");
  out.write(kCheckpointMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_string(out, module_id);
  put_u64(out, config_hash);
  put_u64(out, iterations);
  put_f64(out, final_loss);
  put_u32(out, static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const Array& a : arrays) {
    put_string(out, a.name);
    out.put(static_cast<char>(kDtypeF64));
    put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (int d : a.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : a.data) put_f64(out, v);
  }
  if (!out) throw IoError("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported format version " +
                  std::to_string(version) + " in " + path);
  Checkpoint c;
  c.module_id = get_string(in);
  c.config_hash = get_u64(in);
  c.iterations = get_u64(in);
  c.final_loss = get_f64(in);
  const std::uint32_t nmeta = get_u32(in);
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = get_string(in);
    std::string v = get_string(in);
    c.metadata.emplace_back(std::move(k), std::move(v));
  }
  const std::uint32_t narr = get_u32(in);
  for (std::uint32_t i = 0; i < narr; ++i) {
    Array a;
    a.name = get_string(in);
    const int dtype = in.get();
    if (dtype != kDtypeF64)
      throw IoError("checkpoint: unsupported dtype in " + path);
    const std::uint32_t ndim = get_u32(in);
    if (ndim > 8) throw IoError("checkpoint: implausible rank in " + path);
    std::int64_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      a.shape.push_back(static_cast<int>(get_u32(in)));
      count *= a.shape.back();
    }
    a.data.resize(static_cast<std::size_t>(count));
    for (double& v : a.data) v = get_f64(in);
    c.arrays.push_back(std::move(a));
  }
  if (!in) throw IoError("checkpoint: truncated file " + path);
  return c;
}

Checkpoint Checkpoint::load(const std::string& path,
                            const std::string& expect_module) {
  Checkpoint c = load(path);
  if (c.module_id != expect_module)
    throw IoError("checkpoint: " + path + " holds module '" + c.module_id +
                  "', expected '" + expect_module + "'");
  return c;
}

const Checkpoint::Array* Checkpoint::find(const std::string& name) const {
  for (const Array& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

std::string Checkpoint::meta(const std::string& key,
                             const std::string& fallback) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return v;
  return fallback;
}

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : metadata)
    if (k == key) {
      v = value;
      return;
    }
  metadata.emplace_back(key, value);
}

void Checkpoint::add_params(const nn::ParamStore& params) {
  for (const auto& [name, t] : params.items())
    arrays.push_back({name, t->shape, t->value});
}

void Checkpoint::restore_params(nn::ParamStore& params) const {
  for (auto& [name, t] : params.items()) {
    const Array* a = find(name);
    if (!a) throw IoError("checkpoint: missing parameter '" + name + "'");
    if (a->shape != t->shape)
      throw IoError("checkpoint: shape mismatch for parameter '" + name + "'");
    const_cast<nn::Tensor&>(t)->value = a->data;
  }
}

void Checkpoint::add_adam(const nn::Adam& opt, const std::string& prefix) {
  auto& self = const_cast<nn::Adam&>(opt);
  const auto& params = opt.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    arrays.push_back({prefix + ".m." + params[i].first,
                      params[i].second->shape, self.m()[i]});
    arrays.push_back({prefix + ".v." + params[i].first,
                      params[i].second->shape, self.v()[i]});
  }
  set_meta(prefix + ".t", std::to_string(opt.t));
}

void Checkpoint::restore_adam(nn::Adam& opt, const std::string& prefix) const {
  const auto& params = opt.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Array* m = find(prefix + ".m." + params[i].first);
    const Array* v = find(prefix + ".v." + params[i].first);
    if (!m || !v)
      throw IoError("checkpoint: missing optimizer state for '" +
                    params[i].first + "'");
    opt.m()[i] = m->data;
    opt.v()[i] = v->data;
  }
  opt.t = std::stoll(meta(prefix + ".t", "0"));
}

}  // namespace pgvton::pipeline
