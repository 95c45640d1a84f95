#include "udap/storage.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>
#include <vector>

namespace udap {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr char kMagic[8] = {'U', 'D', 'A', 'P', 'C', 'K', 'P', 'T'};
constexpr size_t kMaxNameLen = 1u << 20;
constexpr uint32_t kMaxNdim = 64;

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("storage: cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw StorageError("storage: short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("storage: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void append_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

/// Sequential little-endian reader over the checkpoint body; any read that
/// would cross the CRC trailer reports truncation.
struct ByteReader {
  const uint8_t* data;
  size_t pos;
  size_t end;  // one past the last body byte (start of the CRC)

  void need(size_t n) const {
    if (pos + n > end)
      throw TruncatedError(
          "checkpoint: entry data runs into the CRC trailer (file cut "
          "short?)");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
};

float quantized_byte_to_unit(uint8_t b) {
  return static_cast<float>(b) / 255.0f;
}

uint8_t unit_to_byte(float v) {
  // Round to nearest; inputs are pre-validated to [0,1].
  return static_cast<uint8_t>(std::lround(static_cast<double>(v) * 255.0));
}

std::string image_filename(int index, int channels) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%05d.%s", index,
                channels == 1 ? "pgm" : "ppm");
  return buf;
}

/// Strict-schema walker: every object level knows its legal keys and
/// reports violations with the dotted path.
class ConfigReader {
 public:
  explicit ConfigReader(const ordered_json& root) : root_(root) {}

  const ordered_json* object(const std::string& key) {
    if (!root_.contains(key)) return nullptr;
    if (!root_.at(key).is_object())
      throw std::invalid_argument("run config: " + key + " must be an object");
    return &root_.at(key);
  }

  static void check_keys(const ordered_json& obj, const std::string& prefix,
                         std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : obj.items()) {
      if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
            return key == a;
          }) == allowed.end())
        throw std::invalid_argument("run config: unknown key '" + prefix +
                                    key + "'");
    }
  }

  static float number(const ordered_json& obj, const std::string& prefix,
                      const char* key, float fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number())
      throw std::invalid_argument("run config: " + prefix + key +
                                  " must be a number");
    return obj.at(key).get<float>();
  }

  static int integer(const ordered_json& obj, const std::string& prefix,
                     const char* key, int fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number_integer())
      throw std::invalid_argument("run config: " + prefix + key +
                                  " must be an integer");
    return obj.at(key).get<int>();
  }

  static std::string text(const ordered_json& obj, const std::string& prefix,
                          const char* key, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_string())
      throw std::invalid_argument("run config: " + prefix + key +
                                  " must be a string");
    return obj.at(key).get<std::string>();
  }

  static bool boolean(const ordered_json& obj, const std::string& prefix,
                      const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_boolean())
      throw std::invalid_argument("run config: " + prefix + key +
                                  " must be a boolean");
    return obj.at(key).get<bool>();
  }

 private:
  const ordered_json& root_;
};

}  // namespace

uint32_t crc32(const void* data, size_t n) {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  const auto* bytes = static_cast<const uint8_t*>(data);
  uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i)
    crc = table[(crc ^ bytes[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

void save_checkpoint(const NamedParams& entries, const std::string& path) {
  std::set<std::string> seen;
  std::string buf(kMagic, sizeof(kMagic));
  append_u32(buf, kCheckpointVersion);
  for (const auto& [name, tensor] : entries) {
    if (name.empty() || name.size() > kMaxNameLen)
      throw std::invalid_argument("checkpoint: entry name must be 1.." +
                                  std::to_string(kMaxNameLen) + " bytes");
    if (!seen.insert(name).second)
      throw std::invalid_argument("checkpoint: duplicate entry '" + name +
                                  "'");
    if (!tensor.defined() || tensor.shape().empty())
      throw std::invalid_argument("checkpoint: entry '" + name +
                                  "' has no tensor");
    append_u32(buf, static_cast<uint32_t>(name.size()));
    buf += name;
    const Shape& shape = tensor.shape();
    append_u32(buf, static_cast<uint32_t>(shape.size()));
    for (int d : shape) {
      if (d < 1)
        throw std::invalid_argument("checkpoint: entry '" + name +
                                    "' has a non-positive dimension");
      append_u64(buf, static_cast<uint64_t>(d));
    }
    const ArrayXf& v = tensor.values();
    for (int i = 0; i < v.size(); ++i)
      append_u32(buf, std::bit_cast<uint32_t>(v[i]));
  }
  append_u32(buf, crc32(buf.data(), buf.size()));
  write_atomic(path, buf);
}

NamedParams load_checkpoint(const std::string& path) {
  const std::string buf = read_file(path);
  if (buf.size() < sizeof(kMagic) + 8)
    throw TruncatedError("checkpoint: " + path + " is shorter than the " +
                         "fixed header and CRC");
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw BadMagicError("checkpoint: " + path + " is not a UDAPCKPT file");

  ByteReader r{reinterpret_cast<const uint8_t*>(buf.data()), sizeof(kMagic),
               buf.size() - 4};
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw BadVersionError("checkpoint: version " + std::to_string(version) +
                          " needs migration; this build reads version " +
                          std::to_string(kCheckpointVersion));

  NamedParams entries;
  std::set<std::string> seen;
  while (r.pos < r.end) {
    const uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > kMaxNameLen)
      throw MalformedError("checkpoint: entry name length " +
                           std::to_string(name_len) + " out of range");
    r.need(name_len);
    std::string name(buf.data() + r.pos, name_len);
    r.pos += name_len;
    if (!seen.insert(name).second)
      throw MalformedError("checkpoint: duplicate entry '" + name + "'");

    const uint32_t ndim = r.u32();
    if (ndim == 0 || ndim > kMaxNdim)
      throw MalformedError("checkpoint: entry '" + name + "' has ndim " +
                           std::to_string(ndim));
    Shape shape(ndim);
    uint64_t elements = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      const uint64_t dim = r.u64();
      if (dim == 0 || dim > 0x7FFFFFFFull)
        throw MalformedError("checkpoint: entry '" + name +
                             "' has dimension " + std::to_string(dim));
      elements *= dim;
      if (elements > 0x10000000ull)  // 256M elements ≫ any desk-scale tensor
        throw MalformedError("checkpoint: entry '" + name +
                             "' is implausibly large");
      shape[d] = static_cast<int>(dim);
    }
    // Assemble f32s from little-endian bytes directly into the tensor;
    // finiteness is not policed here — corruption is the CRC's to catch.
    Tensor tensor = Tensor::zeros(std::move(shape));
    ArrayXf& values = tensor.values();
    for (uint64_t i = 0; i < elements; ++i) {
      const uint32_t bits = r.u32();
      values[static_cast<Eigen::Index>(i)] = std::bit_cast<float>(bits);
    }
    entries.emplace_back(std::move(name), std::move(tensor));
  }

  uint32_t stored = 0;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  if (crc32(buf.data(), buf.size() - 4) != stored)
    throw CrcMismatchError("checkpoint: " + path + " fails its CRC");
  return entries;
}

namespace {

const char* codec_mode_str(AutoEncoder::Mode m) {
  return m == AutoEncoder::Mode::Conv ? "conv" : "identity";
}

const char* denoiser_mode_str(Denoiser::Mode m) {
  switch (m) {
    case Denoiser::Mode::Network: return "network";
    case Denoiser::Mode::Null: return "null";
    case Denoiser::Mode::Constant: return "constant";
  }
  throw std::logic_error("denoiser_mode_str: bad mode");
}

ordered_json require_object(const ordered_json& j, const char* key,
                            const std::string& path) {
  if (!j.contains(key) || !j.at(key).is_object())
    throw MalformedError("bundle meta: " + path + " lacks object '" + key +
                         "'");
  return j.at(key);
}

template <typename T>
T require_field(const ordered_json& j, const char* key,
                const std::string& path) {
  if (!j.contains(key))
    throw MalformedError("bundle meta: " + path + " lacks field '" + key +
                         "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw MalformedError("bundle meta: " + path + " field '" + key +
                         "' has the wrong type");
  }
}

/// Copies checkpoint entries with the given prefix onto a freshly built
/// net's parameters, demanding an exact name and shape match.
void assign_params(NamedParams net_params, const std::string& prefix,
                   const std::map<std::string, Tensor>& by_name,
                   const std::string& path, size_t* consumed) {
  for (auto& [name, param] : net_params) {
    const std::string full = prefix + name;
    auto it = by_name.find(full);
    if (it == by_name.end())
      throw MalformedError("bundle: " + path + " is missing entry '" + full +
                           "'");
    if (it->second.shape() != param.shape())
      throw MalformedError("bundle: entry '" + full + "' has shape " +
                           shape_str(it->second.shape()) + ", expected " +
                           shape_str(param.shape()));
    param.values() = it->second.values();
    ++*consumed;
  }
}

}  // namespace

void save_bundle(const ModelBundle& bundle, const std::string& path) {
  NamedParams entries;
  const std::vector<float>& beta = bundle.schedule.beta;
  if (beta.empty())
    throw std::invalid_argument("save_bundle: schedule has no betas");
  ArrayXf beta_arr(static_cast<Eigen::Index>(beta.size()));
  for (size_t i = 0; i < beta.size(); ++i)
    beta_arr[static_cast<Eigen::Index>(i)] = beta[i];
  entries.emplace_back(
      "schedule.beta",
      Tensor::from_array({static_cast<int>(beta.size())}, std::move(beta_arr)));

  // Net copies share parameter storage, so the handles they hand out read
  // the bundle's own tensors.
  if (bundle.codec.mode() == AutoEncoder::Mode::Conv) {
    AutoEncoder codec = bundle.codec;
    for (auto& [name, p] : codec.named_params())
      entries.emplace_back("codec." + name, p);
  }
  if (bundle.denoiser.mode() == Denoiser::Mode::Network) {
    Denoiser denoiser = bundle.denoiser;
    for (auto& [name, p] : denoiser.named_params())
      entries.emplace_back("denoiser." + name, p);
  }
  save_checkpoint(entries, path);
  write_atomic(path + ".meta.json", bundle_meta_json(bundle).dump(2) + "\n");
}

nlohmann::ordered_json bundle_meta_json(const ModelBundle& bundle) {
  ordered_json meta;
  meta["format"] = "udap-bundle";
  meta["version_tag"] = bundle.meta.version_tag;
  meta["dataset_id"] = bundle.meta.dataset_id;
  meta["train_seed"] = bundle.meta.train_seed;
  meta["schedule"] = {{"T", bundle.schedule.total_steps}};
  ordered_json codec;
  codec["mode"] = codec_mode_str(bundle.codec.mode());
  codec["image_shape"] = bundle.codec.image_shape();
  codec["epochs_trained"] = bundle.codec.epochs_trained;
  meta["codec"] = codec;
  ordered_json den;
  den["mode"] = denoiser_mode_str(bundle.denoiser.mode());
  den["in_channels"] = bundle.denoiser.in_channels();
  den["constant_value"] =
      static_cast<double>(bundle.denoiser.constant_value());
  den["steps_trained"] = bundle.denoiser.steps_trained;
  den["trained_total_steps"] = bundle.denoiser.trained_total_steps;
  meta["denoiser"] = den;
  return meta;
}

ModelBundle load_bundle(const std::string& path) {
  NamedParams entries = load_checkpoint(path);
  std::map<std::string, Tensor> by_name;
  for (auto& [name, tensor] : entries) by_name.emplace(name, tensor);

  ordered_json meta;
  try {
    meta = ordered_json::parse(read_file(path + ".meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw MalformedError("bundle meta: " + path + ".meta.json: " + e.what());
  }

  ModelBundle bundle;
  bundle.meta.version_tag = require_field<std::string>(meta, "version_tag", path);
  bundle.meta.dataset_id = require_field<std::string>(meta, "dataset_id", path);
  bundle.meta.train_seed = require_field<uint64_t>(meta, "train_seed", path);

  auto beta_it = by_name.find("schedule.beta");
  if (beta_it == by_name.end())
    throw MalformedError("bundle: " + path + " is missing 'schedule.beta'");
  const ArrayXf& beta_arr = beta_it->second.values();
  std::vector<float> beta(beta_arr.data(), beta_arr.data() + beta_arr.size());
  bundle.schedule = make_schedule_from_betas(std::move(beta));
  const ordered_json sched = require_object(meta, "schedule", path);
  if (require_field<int>(sched, "T", path) != bundle.schedule.total_steps)
    throw MalformedError("bundle: meta T disagrees with the stored betas");
  size_t consumed = 1;

  const ordered_json codec = require_object(meta, "codec", path);
  const std::string codec_mode = require_field<std::string>(codec, "mode", path);
  const Shape image_shape = require_field<Shape>(codec, "image_shape", path);
  if (codec_mode == "conv") {
    bundle.codec = AutoEncoder::make_conv(image_shape, 0);
    assign_params(bundle.codec.named_params(), "codec.", by_name, path,
                  &consumed);
  } else if (codec_mode == "identity") {
    bundle.codec = AutoEncoder::make_identity(image_shape);
  } else {
    throw MalformedError("bundle meta: unknown codec mode '" + codec_mode +
                         "'");
  }
  bundle.codec.epochs_trained =
      require_field<int>(codec, "epochs_trained", path);

  const ordered_json den = require_object(meta, "denoiser", path);
  const std::string den_mode = require_field<std::string>(den, "mode", path);
  if (den_mode == "network") {
    bundle.denoiser =
        Denoiser::make_network(require_field<int>(den, "in_channels", path), 0);
    assign_params(bundle.denoiser.named_params(), "denoiser.", by_name, path,
                  &consumed);
    bundle.denoiser.steps_trained =
        require_field<int>(den, "steps_trained", path);
    bundle.denoiser.trained_total_steps =
        require_field<int>(den, "trained_total_steps", path);
  } else if (den_mode == "null") {
    bundle.denoiser = Denoiser::make_null();
  } else if (den_mode == "constant") {
    bundle.denoiser = Denoiser::make_constant(static_cast<float>(
        require_field<double>(den, "constant_value", path)));
  } else {
    throw MalformedError("bundle meta: unknown denoiser mode '" + den_mode +
                         "'");
  }

  if (consumed != entries.size())
    throw MalformedError("bundle: " + path + " carries " +
                         std::to_string(entries.size() - consumed) +
                         " entries the meta file does not account for");
  return bundle;
}

Tensor read_image(const std::string& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6'))
    throw BadMagicError("image: " + path + " is not a binary PGM/PPM file");
  const int channels = buf[1] == '5' ? 1 : 3;

  // Header tokens (width, height, maxval) separated by whitespace, with
  // '#' comments running to end of line.
  size_t pos = 2;
  auto next_int = [&](const char* what) {
    while (pos < buf.size()) {
      if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
        ++pos;
      } else if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    size_t start = pos;
    while (pos < buf.size() &&
           std::isdigit(static_cast<unsigned char>(buf[pos])))
      ++pos;
    if (start == pos)
      throw MalformedError("image: " + path + " has a malformed " + what);
    return std::stoi(buf.substr(start, pos - start));
  };
  const int width = next_int("width");
  const int height = next_int("height");
  const int maxval = next_int("maxval");
  if (width < 1 || height < 1)
    throw MalformedError("image: " + path + " has empty dimensions");
  if (maxval != 255)
    throw MalformedError("image: " + path + " has maxval " +
                         std::to_string(maxval) + "; only 255 is supported");
  if (pos >= buf.size() ||
      !std::isspace(static_cast<unsigned char>(buf[pos])))
    throw MalformedError("image: " + path +
                         " lacks the single whitespace before the raster");
  ++pos;

  const size_t raster = static_cast<size_t>(width) * height * channels;
  if (buf.size() - pos < raster)
    throw TruncatedError("image: " + path + " raster is cut short");
  if (buf.size() - pos > raster)
    throw MalformedError("image: " + path + " has trailing bytes");

  Tensor out = Tensor::zeros({channels, height, width});
  ArrayXf& v = out.values();
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const uint8_t b = static_cast<uint8_t>(
            buf[pos + (static_cast<size_t>(y) * width + x) * channels + c]);
        v[(static_cast<Eigen::Index>(c) * height + y) * width + x] =
            quantized_byte_to_unit(b);
      }
    }
  }
  return out;
}

void write_image(const Tensor& image, const std::string& path) {
  if (!image.defined() || image.shape().size() != 3 ||
      (image.shape()[0] != 1 && image.shape()[0] != 3))
    throw std::invalid_argument(
        "write_image: image must be [1,H,W] or [3,H,W]");
  if ((image.values() < 0.0f).any() || (image.values() > 1.0f).any())
    throw std::invalid_argument("write_image: values must lie in [0,1]");
  const int channels = image.shape()[0];
  const int height = image.shape()[1];
  const int width = image.shape()[2];

  std::string buf = channels == 1 ? "P5\n" : "P6\n";
  buf += std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const ArrayXf& v = image.values();
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        buf.push_back(static_cast<char>(unit_to_byte(
            v[(static_cast<Eigen::Index>(c) * height + y) * width + x])));
      }
    }
  }
  write_atomic(path, buf);
}

void save_imageset(const ImageSet& set, const std::string& dir) {
  set.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw StorageError("save_imageset: cannot create directory " + dir);

  ordered_json manifest;
  manifest["source"] = set.source;
  ordered_json images = ordered_json::array();
  for (size_t i = 0; i < set.images.size(); ++i) {
    const int channels = set.images[i].shape()[0];
    const std::string file = image_filename(static_cast<int>(i), channels);
    write_image(set.images[i], (fs::path(dir) / file).string());
    images.push_back({{"file", file}, {"label", label_str(set.labels[i])}});
  }
  manifest["images"] = images;
  write_atomic(fs::path(dir) / "manifest.json", manifest.dump(2) + "\n");
}

ImageSet load_imageset(const std::string& dir) {
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(
        read_file((fs::path(dir) / "manifest.json").string()));
  } catch (const nlohmann::json::exception& e) {
    throw MalformedError("imageset manifest: " + dir + ": " + e.what());
  }
  if (!manifest.contains("source") || !manifest["source"].is_string() ||
      !manifest.contains("images") || !manifest["images"].is_array())
    throw MalformedError("imageset manifest: " + dir +
                         " needs 'source' and 'images'");
  ImageSet set;
  set.source = manifest["source"].get<std::string>();
  for (const auto& entry : manifest["images"]) {
    if (!entry.is_object() || !entry.contains("file") ||
        !entry.contains("label"))
      throw MalformedError("imageset manifest: bad image entry in " + dir);
    Tensor img =
        read_image((fs::path(dir) / entry["file"].get<std::string>()).string());
    set.add(std::move(img), label_from_str(entry["label"].get<std::string>()));
  }
  return set;
}

RunConfig parse_run_config(const ordered_json& j) {
  if (!j.is_object())
    throw std::invalid_argument("run config: document must be a JSON object");
  ConfigReader::check_keys(
      j, "", {"schedule", "purify", "attack", "train", "seed", "paths"});
  RunConfig cfg;
  ConfigReader reader(j);

  if (const ordered_json* s = reader.object("schedule")) {
    ConfigReader::check_keys(*s, "schedule.", {"T", "beta_start", "beta_end"});
    cfg.schedule_T = ConfigReader::integer(*s, "schedule.", "T", cfg.schedule_T);
    cfg.beta_start =
        ConfigReader::number(*s, "schedule.", "beta_start", cfg.beta_start);
    cfg.beta_end = ConfigReader::number(*s, "schedule.", "beta_end", cfg.beta_end);
  }
  if (const ordered_json* p = reader.object("purify")) {
    ConfigReader::check_keys(*p, "purify.", {"tau", "K", "t_hat", "lr", "gate"});
    cfg.purify.tau = ConfigReader::number(*p, "purify.", "tau", cfg.purify.tau);
    cfg.purify.max_epochs =
        ConfigReader::integer(*p, "purify.", "K", cfg.purify.max_epochs);
    cfg.purify.t_hat =
        ConfigReader::integer(*p, "purify.", "t_hat", cfg.purify.t_hat);
    cfg.purify.lr = ConfigReader::number(*p, "purify.", "lr", cfg.purify.lr);
    cfg.purify.gate_enabled =
        ConfigReader::boolean(*p, "purify.", "gate", cfg.purify.gate_enabled);
  }
  if (const ordered_json* a = reader.object("attack")) {
    ConfigReader::check_keys(
        *a, "attack.", {"family", "xi", "steps", "step_size", "lambda"});
    const std::string family = ConfigReader::text(
        *a, "attack.", "family", family_str(cfg.attack.family));
    try {
      cfg.attack.family = family_from_str(family);
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("run config: attack.family '" + family +
                                  "' is not encoder|denoiser|hybrid");
    }
    cfg.attack.xi = ConfigReader::number(*a, "attack.", "xi", cfg.attack.xi);
    cfg.attack.steps =
        ConfigReader::integer(*a, "attack.", "steps", cfg.attack.steps);
    cfg.attack.step_size =
        ConfigReader::number(*a, "attack.", "step_size", cfg.attack.step_size);
    cfg.attack.hybrid_weight =
        ConfigReader::number(*a, "attack.", "lambda", cfg.attack.hybrid_weight);
  }
  if (const ordered_json* t = reader.object("train")) {
    ConfigReader::check_keys(
        *t, "train.",
        {"corpus_n", "corpus_kind", "ae_epochs", "denoiser_steps"});
    cfg.corpus_n = ConfigReader::integer(*t, "train.", "corpus_n", cfg.corpus_n);
    const std::string kind = ConfigReader::text(
        *t, "train.", "corpus_kind", corpus_kind_str(cfg.corpus_kind));
    try {
      cfg.corpus_kind = corpus_kind_from_str(kind);
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("run config: train.corpus_kind '" + kind +
                                  "' is not shapes|gradients|mixed");
    }
    cfg.ae_epochs = ConfigReader::integer(*t, "train.", "ae_epochs", cfg.ae_epochs);
    cfg.denoiser_steps =
        ConfigReader::integer(*t, "train.", "denoiser_steps", cfg.denoiser_steps);
  }
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_integer() ||
        (j.at("seed").is_number_integer() && !j.at("seed").is_number_unsigned() &&
         j.at("seed").get<int64_t>() < 0))
      throw std::invalid_argument("run config: seed must be a non-negative "
                                  "integer");
    cfg.seed = j.at("seed").get<uint64_t>();
  }
  if (const ordered_json* p = reader.object("paths")) {
    ConfigReader::check_keys(*p, "paths.",
                             {"data", "bundle", "out", "adv", "purified"});
    cfg.data_path = ConfigReader::text(*p, "paths.", "data", cfg.data_path);
    cfg.bundle_path = ConfigReader::text(*p, "paths.", "bundle", cfg.bundle_path);
    cfg.out_path = ConfigReader::text(*p, "paths.", "out", cfg.out_path);
    cfg.adv_path = ConfigReader::text(*p, "paths.", "adv", cfg.adv_path);
    cfg.purified_path =
        ConfigReader::text(*p, "paths.", "purified", cfg.purified_path);
  }

  cfg.attack.seed = cfg.seed;
  cfg.purify.seed = cfg.seed;
  cfg.attack.t_hat = cfg.purify.t_hat;
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("run config: " + path + ": " + e.what());
  }
  return parse_run_config(j);
}

nlohmann::ordered_json run_config_echo(const RunConfig& cfg) {
  ordered_json j;
  j["schedule"] = {{"T", cfg.schedule_T},
                   {"beta_start", static_cast<double>(cfg.beta_start)},
                   {"beta_end", static_cast<double>(cfg.beta_end)}};
  j["purify"] = {{"tau", static_cast<double>(cfg.purify.tau)},
                 {"K", cfg.purify.max_epochs},
                 {"t_hat", cfg.purify.t_hat},
                 {"lr", static_cast<double>(cfg.purify.lr)},
                 {"gate", cfg.purify.gate_enabled}};
  j["attack"] = {{"family", family_str(cfg.attack.family)},
                 {"xi", static_cast<double>(cfg.attack.xi)},
                 {"steps", cfg.attack.steps},
                 {"step_size", static_cast<double>(cfg.attack.step_size)},
                 {"lambda", static_cast<double>(cfg.attack.hybrid_weight)}};
  j["train"] = {{"corpus_n", cfg.corpus_n},
                {"corpus_kind", corpus_kind_str(cfg.corpus_kind)},
                {"ae_epochs", cfg.ae_epochs},
                {"denoiser_steps", cfg.denoiser_steps}};
  j["seed"] = cfg.seed;
  j["paths"] = {{"data", cfg.data_path},
                {"bundle", cfg.bundle_path},
                {"out", cfg.out_path},
                {"adv", cfg.adv_path},
                {"purified", cfg.purified_path}};
  return j;
}

}  // namespace udap
