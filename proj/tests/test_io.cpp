#include <cmath>
#include <cstring>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "deal/errors.hpp"
#include "deal/image_io.hpp"
#include "deal/model_io.hpp"
#include "deal/synthetic.hpp"
#include "oracles.hpp"

using namespace deal;
namespace fs = std::filesystem;

namespace {

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ImageIo, EightBitRoundTripQuantizes) {
  const auto dir = oracle::scratch_dir("img8");
  const Image x = phantom(16, 12);
  write_image(dir / "a.pgm", x);
  const Image y = read_image(dir / "a.pgm");
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(y[i], x[i], 0.5 / 255.0 + 1e-12);
    EXPECT_NEAR(y[i] * 255.0, std::round(y[i] * 255.0), 1e-9);
  }
}

TEST(ImageIo, SixteenBitColorRoundTrip) {
  const auto dir = oracle::scratch_dir("img16");
  const Image x = piecewise_constant(3, 10, 7, 2);
  write_image(dir / "a.ppm", x, 16);
  const Image y = read_image(dir / "a.ppm");
  ASSERT_EQ(y.shape(), (Shape{3, 10, 7}));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 0.5 / 65535.0 + 1e-12);
}

TEST(ImageIo, ClampsOutOfRangeValues) {
  const auto dir = oracle::scratch_dir("clamp");
  write_image(dir / "c.pgm", Image(Shape{1, 1, 2}, {-0.5, 1.7}));
  const Image y = read_image(dir / "c.pgm");
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 1.0);
}

TEST(ImageIo, HeaderCommentsAndMaxval) {
  const auto dir = oracle::scratch_dir("hdr");
  write_bytes(dir / "c.pgm", std::string("P5\n# made by hand\n2 1\n# another\n100\n") +
                                 std::string{static_cast<char>(0), static_cast<char>(50)});
  const Image y = read_image(dir / "c.pgm");
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2}));
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(ImageIo, MalformedInputsRejected) {
  const auto dir = oracle::scratch_dir("bad");
  write_bytes(dir / "magic.pgm", "P2\n2 2\n255\n0 0 0 0");
  write_bytes(dir / "short.pgm", "P5\n4 4\n255\nabc");
  write_bytes(dir / "maxval.pgm", "P5\n1 1\n70000\nab");
  EXPECT_THROW(read_image(dir / "magic.pgm"), FormatError);
  EXPECT_THROW(read_image(dir / "short.pgm"), FormatError);
  EXPECT_THROW(read_image(dir / "maxval.pgm"), FormatError);
  EXPECT_THROW(read_image(dir / "missing.pgm"), FormatError);
  EXPECT_ANY_THROW(write_image(dir / "two.pgm", Image(Shape{2, 2, 2})));
}

TEST(ModelIo, SaveLoadBitIdentical) {
  const auto dir = oracle::scratch_dir("model");
  const DealModel m = oracle::gradient_toy(4, 5, 1).model;
  save_model(dir / "m.deal", m);
  const DealModel back = load_model(dir / "m.deal");
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.config().kernel_size, 5);
  EXPECT_EQ(back.config().num_filters, 4);
  EXPECT_EQ(serialize_model(back), serialize_model(m));
}

TEST(ModelIo, ManifestDescribesArrays) {
  const DealModel m = oracle::small_model(3, 3, 2);
  const auto j = nlohmann::json::parse(model_manifest(serialize_model(m)));
  EXPECT_EQ(j["format_version"], kModelFormatVersion);
  EXPECT_EQ(j["hyperparameters"]["num_filters"], 3);
  EXPECT_EQ(j["hyperparameters"]["in_channels"], 1);
  std::size_t names = 0;
  for (const auto& a : j["arrays"]) {
    EXPECT_EQ(a["dtype"], "f64");
    names += a["name"] == "kappa";
  }
  EXPECT_EQ(names, 1u);
}

TEST(ModelIo, TruncatedBlobNamesLastArray) {
  const DealModel m = oracle::small_model(3, 3, 2);
  auto bytes = serialize_model(m);
  const auto j = nlohmann::json::parse(model_manifest(bytes));
  const std::string last = j["arrays"].back()["name"];
  bytes.pop_back();
  const std::string msg = message_of([&] { deserialize_model(bytes); });
  EXPECT_NE(msg.find(last), std::string::npos) << msg;
}

TEST(ModelIo, EditedShapeRejectedWithName) {
  const DealModel m = oracle::small_model(3, 3, 2);
  const auto bytes = serialize_model(m);
  auto j = nlohmann::json::parse(model_manifest(bytes));
  j["arrays"][1]["shape"][0] = 99;
  const std::string name = j["arrays"][1]["name"];
  const std::string msg = message_of([&] { deserialize_model(replace_manifest(bytes, j.dump())); });
  EXPECT_NE(msg.find(name), std::string::npos) << msg;
}

TEST(ModelIo, VersionAndMagicChecked) {
  const DealModel m = oracle::small_model(3, 3, 2);
  const auto bytes = serialize_model(m);
  auto j = nlohmann::json::parse(model_manifest(bytes));
  j["format_version"] = 7;
  const std::string msg = message_of([&] { deserialize_model(replace_manifest(bytes, j.dump())); });
  EXPECT_NE(msg.find("version"), std::string::npos) << msg;
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_model(bad), FormatError);
  j = nlohmann::json::parse(model_manifest(bytes));
  j["arrays"].erase(j["arrays"].begin());
  EXPECT_THROW(deserialize_model(replace_manifest(bytes, j.dump())), FormatError);
}

TEST(ModelIo, SinglePrecisionArraysAccepted) {
  const DealModel m = oracle::small_model(2, 3, 3);
  const auto bytes = serialize_model(m);
  auto j = nlohmann::json::parse(model_manifest(bytes));
  const std::size_t header = 16 + model_manifest(bytes).size();
  // Rewrite every array as f32 in a fresh blob.
  std::vector<std::uint8_t> blob;
  for (auto& a : j["arrays"]) {
    const std::size_t off = a["offset"];
    const std::size_t len = a["length"];
    a["offset"] = blob.size();
    a["dtype"] = "f32";
    for (std::size_t i = 0; i < len; i += 8) {
      double d;
      std::memcpy(&d, bytes.data() + header + off + i, 8);
      const float f = static_cast<float>(d);
      std::uint8_t raw[4];
      std::memcpy(raw, &f, 4);
      blob.insert(blob.end(), raw, raw + 4);
    }
    a["length"] = len / 2;
  }
  const std::string manifest = j.dump();
  std::vector<std::uint8_t> out{'D', 'E', 'A', 'L', 'M', 'D', 'L', '\0'};
  std::uint64_t n = manifest.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  out.insert(out.end(), manifest.begin(), manifest.end());
  out.insert(out.end(), blob.begin(), blob.end());
  const DealModel back = deserialize_model(out);
  EXPECT_NEAR(back.kappa.values()[10], m.kappa.values()[10], 1e-6);
  EXPECT_NEAR(back.w.scale, m.w.scale, 1e-6 * m.w.scale);
}
