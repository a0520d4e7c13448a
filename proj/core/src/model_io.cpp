#include "deal/model_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "deal/errors.hpp"

namespace deal {
namespace {

constexpr char kMagic[8] = {'D', 'E', 'A', 'L', 'M', 'D', 'L', '\0'};
constexpr std::size_t kPrefix = sizeof(kMagic) + sizeof(std::uint64_t);

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <class T>
void append(std::vector<std::uint8_t>& out, T v) {
  v = to_little(v);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T read_at(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return to_little(v);
}

struct Split {
  std::string manifest;
  std::size_t blob_offset = 0;
};

Split split(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kPrefix || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError("not a DEAL model container");
  const auto len = read_at<std::uint64_t>(bytes.data() + sizeof(kMagic));
  if (len > bytes.size() - kPrefix) throw FormatError("manifest extends past the end of the file");
  Split s;
  s.manifest.assign(reinterpret_cast<const char*>(bytes.data() + kPrefix), len);
  s.blob_offset = kPrefix + len;
  return s;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const DealModel& model) {
  DealModel copy = model;
  nlohmann::ordered_json manifest;
  manifest["format_version"] = kModelFormatVersion;
  const ModelConfig c = model.config();
  manifest["hyperparameters"] = {{"in_channels", c.in_channels},
                                 {"num_filters", c.num_filters},
                                 {"kernel_size", c.kernel_size},
                                 {"eps_m", c.eps_m},
                                 {"zero_mean", c.zero_mean}};
  std::vector<std::uint8_t> blob;
  nlohmann::ordered_json arrays = nlohmann::ordered_json::array();
  for (const auto& p : copy.parameters()) {
    arrays.push_back({{"name", p.name},
                      {"dtype", "f64"},
                      {"shape", p.shape},
                      {"offset", blob.size()},
                      {"length", p.values.size() * sizeof(double)}});
    for (double v : p.values) append(blob, std::bit_cast<std::uint64_t>(v));
  }
  manifest["arrays"] = arrays;
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
  append(out, static_cast<std::uint64_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

DealModel deserialize_model(const std::vector<std::uint8_t>& bytes) {
  const Split s = split(bytes);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(s.manifest);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid manifest: ") + e.what());
  }

  DealModel model;
  std::size_t blob_size = bytes.size() - s.blob_offset;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw FormatError("unsupported format version " + std::to_string(version));
    const auto& h = manifest.at("hyperparameters");
    ModelConfig c;
    c.in_channels = h.at("in_channels").get<int>();
    c.num_filters = h.at("num_filters").get<int>();
    c.kernel_size = h.at("kernel_size").get<int>();
    c.eps_m = h.at("eps_m").get<double>();
    c.zero_mean = h.at("zero_mean").get<bool>();
    if (!(c.eps_m > 0.0 && c.eps_m < 1.0)) throw FormatError("eps_m out of range");
    model = DealModel::architecture(c);

    const auto& table = manifest.at("arrays");
    auto params = model.parameters();
    for (const auto& p : params) {
      const auto entry = std::find_if(table.begin(), table.end(), [&](const nlohmann::json& e) {
        return e.at("name").get<std::string>() == p.name;
      });
      if (entry == table.end()) throw FormatError("array " + p.name + ": missing from manifest");
      const std::string dtype = entry->at("dtype").get<std::string>();
      if (dtype != "f64" && dtype != "f32")
        throw FormatError("array " + p.name + ": unsupported dtype " + dtype);
      if (entry->at("shape").get<std::vector<int>>() != p.shape)
        throw FormatError("array " + p.name + ": shape does not match the architecture");
      const std::size_t width = dtype == "f64" ? 8 : 4;
      const auto offset = entry->at("offset").get<std::uint64_t>();
      const auto length = entry->at("length").get<std::uint64_t>();
      if (length != p.values.size() * width)
        throw FormatError("array " + p.name + ": byte length does not match its shape");
      if (offset > blob_size || length > blob_size - offset)
        throw FormatError("array " + p.name + ": lies outside the blob (truncated file?)");
      const std::uint8_t* src = bytes.data() + s.blob_offset + offset;
      for (std::size_t i = 0; i < p.values.size(); ++i)
        p.values[i] = width == 8 ? std::bit_cast<double>(read_at<std::uint64_t>(src + 8 * i))
                                 : static_cast<double>(std::bit_cast<float>(read_at<std::uint32_t>(src + 4 * i)));
    }
    if (table.size() != params.size()) throw FormatError("manifest lists unknown arrays");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid manifest: ") + e.what());
  }
  return model;
}

std::string model_manifest(const std::vector<std::uint8_t>& bytes) { return split(bytes).manifest; }

std::vector<std::uint8_t> replace_manifest(const std::vector<std::uint8_t>& bytes,
                                           const std::string& manifest) {
  const Split s = split(bytes);
  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
  append(out, static_cast<std::uint64_t>(manifest.size()));
  out.insert(out.end(), manifest.begin(), manifest.end());
  out.insert(out.end(), bytes.begin() + static_cast<std::ptrdiff_t>(s.blob_offset), bytes.end());
  return out;
}

void save_model(const std::filesystem::path& path, const DealModel& model) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

DealModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return deserialize_model(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace deal
