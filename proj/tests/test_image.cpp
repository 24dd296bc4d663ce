#include <d3/image.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace d3;

namespace {

std::string pgm_bytes(const std::string& header, std::initializer_list<int> payload) {
  std::string s = header;
  for (int v : payload) s.push_back(static_cast<char>(v));
  return s;
}

ParseErrorKind parse_kind(const std::string& bytes) {
  try {
    parse_pgm(bytes);
  } catch (const ParseError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a parse error";
  return ParseErrorKind::malformed_header;
}

}  // namespace

TEST(Pgm, ParsesPayloadBytes) {
  const GrayImage img = parse_pgm(pgm_bytes("P5\n2 2\n255\n", {0, 128, 200, 255}));
  ASSERT_EQ(img.width, 2);
  ASSERT_EQ(img.height, 2);
  EXPECT_EQ(img.pixels, (std::vector<double>{0, 128, 200, 255}));
}

TEST(Pgm, HeaderComments) {
  const GrayImage img = parse_pgm(pgm_bytes("P5\n# made by hand\n1 1\n# depth\n255\n", {42}));
  EXPECT_EQ(img.at(0, 0), 42.0);
}

TEST(Pgm, DistinctErrors) {
  EXPECT_EQ(parse_kind(pgm_bytes("P5\n2 2\n65535\n", {0, 0, 0, 0, 0, 0, 0, 0})), ParseErrorKind::unsupported_format);
  EXPECT_EQ(parse_kind(pgm_bytes("P5\n2 2\n255\n", {1, 2, 3})), ParseErrorKind::truncated_payload);
  EXPECT_EQ(parse_kind("P2\n2 2\n255\n0 0 0 0"), ParseErrorKind::malformed_header);
  EXPECT_EQ(parse_kind("P5\nx 2\n255\n"), ParseErrorKind::malformed_header);
  EXPECT_EQ(parse_kind(""), ParseErrorKind::malformed_header);
}

TEST(Pgm, SaveLoadRoundTrip) {
  GrayImage img(5, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>((i * 37) % 256);
  const auto path = std::filesystem::temp_directory_path() / "d3_test_roundtrip.pgm";
  save_gray(img, path);
  EXPECT_EQ(load_gray(path), img);
  std::filesystem::remove(path);
}

TEST(Pgm, SaveRoundsAndClamps) {
  GrayImage img(4, 1);
  img.pixels = {-3.0, 2.5, 254.5, 300.0};
  const GrayImage back = parse_pgm(encode_pgm(img));
  EXPECT_EQ(back.pixels, (std::vector<double>{0, 3, 255, 255}));
  EXPECT_EQ(quantize_pixels(img), back);
}

TEST(Pgm, MissingFileIsIoError) {
  EXPECT_THROW(load_gray("/nonexistent/dir/img.pgm"), IoError);
}
