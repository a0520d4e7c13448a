#include "deal/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "deal/errors.hpp"

namespace deal {
namespace {

class HeaderReader {
 public:
  HeaderReader(const std::vector<unsigned char>& bytes, const std::string& path)
      : bytes_(bytes), path_(path) {}

  std::string token() {
    skip_space_and_comments();
    std::string t;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) t.push_back(static_cast<char>(bytes_[pos_++]));
    if (t.empty()) fail("truncated header");
    return t;
  }

  int number() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
        t.size() > 9)
      fail("invalid header field '" + t + "'");
    return std::stoi(t);
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing raster separator");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_ + ": " + what);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  HeaderReader header(bytes, path.string());
  const std::string magic = header.token();
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    header.fail("unsupported format '" + magic + "' (expected P5 or P6)");
  }
  const int width = header.number();
  const int height = header.number();
  const int maxval = header.number();
  if (width < 1 || height < 1) header.fail("empty image");
  if (maxval < 1 || maxval > 65535) header.fail("maxval out of range");
  const std::size_t start = header.raster_start();
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() - start < count * sample_bytes) header.fail("truncated raster");

  Image img(Shape{channels, height, width});
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j)
      for (int c = 0; c < channels; ++c) {
        const std::size_t k = (static_cast<std::size_t>(i) * width + j) * channels + c;
        const unsigned char* p = bytes.data() + start + k * sample_bytes;
        const int v = sample_bytes == 2 ? (p[0] << 8) | p[1] : p[0];
        if (v > maxval) header.fail("sample exceeds maxval");
        img.at(c, i, j) = static_cast<double>(v) / maxval;
      }
  return img;
}

void write_image(const std::filesystem::path& path, const Image& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("bit depth must be 8 or 16");
  if (image.channels() != 1 && image.channels() != 3)
    throw ShapeError("write_image: only 1 or 3 channels can be written");
  const int maxval = bit_depth == 8 ? 255 : 65535;
  std::string header = std::string(image.channels() == 1 ? "P5" : "P6") + "\n" +
                       std::to_string(image.width()) + " " + std::to_string(image.height()) +
                       "\n" + std::to_string(maxval) + "\n";
  std::vector<unsigned char> raster;
  raster.reserve(image.size() * (bit_depth / 8));
  for (int i = 0; i < image.height(); ++i)
    for (int j = 0; j < image.width(); ++j)
      for (int c = 0; c < image.channels(); ++c) {
        const double v = image.at(c, i, j);
        const double clamped = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
        const auto q = static_cast<unsigned>(std::lround(clamped * maxval));
        if (bit_depth == 16) raster.push_back(static_cast<unsigned char>(q >> 8));
        raster.push_back(static_cast<unsigned char>(q & 0xff));
      }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

}  // namespace deal
