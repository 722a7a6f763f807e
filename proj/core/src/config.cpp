#include <pgvton/config.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace pgvton::pipeline {

namespace {

struct Field {
  const char* name;
  enum Kind { kU64, kInt, kLong, kDouble, kString, kBool } kind;
  void* Config::* unused = nullptr;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError("config: bad numeric value for '" + key + "': " + v);
  }
}

long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError("config: bad integer value for '" + key + "': " + v);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError("config: bad integer value for '" + key + "': " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ValidationError("config: bad boolean value for '" + key + "': " + v);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config: expected key=value, got: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "seed") c.seed = parse_u64(key, val);
    else if (key == "dataset") c.dataset = val;
    else if (key == "image_height") c.image_height = static_cast<int>(parse_long(key, val));
    else if (key == "image_width") c.image_width = static_cast<int>(parse_long(key, val));
    else if (key == "lambda1") c.lambda1 = parse_double(key, val);
    else if (key == "lambda2") c.lambda2 = parse_double(key, val);
    else if (key == "lambda3") c.lambda3 = parse_double(key, val);
    else if (key == "lambda4") c.lambda4 = parse_double(key, val);
    else if (key == "lambda5") c.lambda5 = parse_double(key, val);
    else if (key == "lambda6") c.lambda6 = parse_double(key, val);
    else if (key == "lambda7") c.lambda7 = parse_double(key, val);
    else if (key == "lambda8") c.lambda8 = parse_double(key, val);
    else if (key == "tau") c.tau = parse_double(key, val);
    else if (key == "xi") c.xi = parse_double(key, val);
    else if (key == "tpim_lr") c.tpim_lr = parse_double(key, val);
    else if (key == "tpim_batch") c.tpim_batch = static_cast<int>(parse_long(key, val));
    else if (key == "tpim_iterations") c.tpim_iterations = parse_long(key, val);
    else if (key == "tpim_width") c.tpim_width = static_cast<int>(parse_long(key, val));
    else if (key == "ptm_lr") c.ptm_lr = parse_double(key, val);
    else if (key == "ptm_batch") c.ptm_batch = static_cast<int>(parse_long(key, val));
    else if (key == "ptm_iterations") c.ptm_iterations = parse_long(key, val);
    else if (key == "rsim_lr") c.rsim_lr = parse_double(key, val);
    else if (key == "rsim_batch") c.rsim_batch = static_cast<int>(parse_long(key, val));
    else if (key == "rsim_iterations") c.rsim_iterations = parse_long(key, val);
    else if (key == "d1") c.d1 = static_cast<int>(parse_long(key, val));
    else if (key == "h1") c.h1 = static_cast<int>(parse_long(key, val));
    else if (key == "w1") c.w1 = static_cast<int>(parse_long(key, val));
    else if (key == "max_offset") c.max_offset = parse_double(key, val);
    else if (key == "erasure_level") c.erasure_level = static_cast<int>(parse_long(key, val));
    else if (key == "encoder_dim") c.encoder_dim = static_cast<int>(parse_long(key, val));
    else if (key == "mapper_width") c.mapper_width = static_cast<int>(parse_long(key, val));
    else if (key == "compositor_width") c.compositor_width = static_cast<int>(parse_long(key, val));
    else if (key == "demodulation") c.demodulation = parse_bool(key, val);
    else throw ValidationError("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

std::string Config::canonical() const {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(seed);
  kv["dataset"] = dataset;
  kv["image_height"] = std::to_string(image_height);
  kv["image_width"] = std::to_string(image_width);
  kv["lambda1"] = fmt_double(lambda1);
  kv["lambda2"] = fmt_double(lambda2);
  kv["lambda3"] = fmt_double(lambda3);
  kv["lambda4"] = fmt_double(lambda4);
  kv["lambda5"] = fmt_double(lambda5);
  kv["lambda6"] = fmt_double(lambda6);
  kv["lambda7"] = fmt_double(lambda7);
  kv["lambda8"] = fmt_double(lambda8);
  kv["tau"] = fmt_double(tau);
  kv["xi"] = fmt_double(xi);
  kv["tpim_lr"] = fmt_double(tpim_lr);
  kv["tpim_batch"] = std::to_string(tpim_batch);
  kv["tpim_iterations"] = std::to_string(tpim_iterations);
  kv["tpim_width"] = std::to_string(tpim_width);
  kv["ptm_lr"] = fmt_double(ptm_lr);
  kv["ptm_batch"] = std::to_string(ptm_batch);
  kv["ptm_iterations"] = std::to_string(ptm_iterations);
  kv["rsim_lr"] = fmt_double(rsim_lr);
  kv["rsim_batch"] = std::to_string(rsim_batch);
  kv["rsim_iterations"] = std::to_string(rsim_iterations);
  kv["d1"] = std::to_string(d1);
  kv["h1"] = std::to_string(h1);
  kv["w1"] = std::to_string(w1);
  kv["max_offset"] = fmt_double(max_offset);
  kv["erasure_level"] = std::to_string(erasure_level);
  kv["encoder_dim"] = std::to_string(encoder_dim);
  kv["mapper_width"] = std::to_string(mapper_width);
  kv["compositor_width"] = std::to_string(compositor_width);
  kv["demodulation"] = demodulation ? "1" : "0";
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t Config::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

void Config::validate() const {
  if (tau < 0.0 || tau > 1.0)
    throw ValidationError("config: tau must lie in [0,1]");
  if (xi < 0.0 || xi > 1.0)
    throw ValidationError("config: xi must lie in [0,1]");
  if (image_height < 16 || image_width < 16 || image_height % 8 != 0 ||
      image_width % 8 != 0)
    throw ValidationError("config: image dims must be multiples of 8, >= 16");
  if (tpim_batch < 2)
    throw ValidationError("config: tpim_batch must be >= 2 (unpaired draws)");
  if (ptm_batch < 1 || rsim_batch < 1)
    throw ValidationError("config: batch sizes must be positive");
  if (tpim_iterations < 0 || ptm_iterations < 0 || rsim_iterations < 0)
    throw ValidationError("config: iteration counts must be non-negative");
  if (erasure_level < 1 || erasure_level > 9)
    throw ValidationError("config: erasure_level must lie in 1..9");
  if (d1 < 1 || h1 < 1 || w1 < 1 || encoder_dim < 1 || tpim_width < 1 ||
      mapper_width < 1 || compositor_width < 1)
    throw ValidationError("config: widths must be positive");
  if (max_offset <= 0.0 || max_offset > 2.0)
    throw ValidationError("config: max_offset must lie in (0,2]");
}

}  // namespace pgvton::pipeline
