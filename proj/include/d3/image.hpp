#pragma once

#include <d3/error.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace d3 {

/// Row-major grayscale image with real-valued pixels (nominally in [0, 255]).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
    if (w <= 0 || h <= 0) throw ValidationError("image dimensions must be positive");
  }

  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }

  /// Edge-replicated access for coordinates past the right/bottom border.
  double clamped(int row, int col) const {
    return at(std::clamp(row, 0, height - 1), std::clamp(col, 0, width - 1));
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::round(std::clamp(v, 0.0, 255.0)));
}

namespace pgm_detail {

inline void skip_space_and_comments(const std::string& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
      ++pos;
    } else if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
}

inline long read_header_int(const std::string& buf, std::size_t& pos, const char* field) {
  skip_space_and_comments(buf, pos);
  const std::size_t start = pos;
  long v = 0;
  while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
    v = v * 10 + (buf[pos] - '0');
    if (v > 1'000'000'000L) throw ParseError(ParseErrorKind::malformed_header, std::string("PGM ") + field + " too large");
    ++pos;
  }
  if (pos == start) throw ParseError(ParseErrorKind::malformed_header, std::string("PGM header: missing ") + field);
  return v;
}

}  // namespace pgm_detail

/// Parses an 8-bit binary graymap (P5, maxval 255).
inline GrayImage parse_pgm(const std::string& buf) {
  using namespace pgm_detail;
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5')
    throw ParseError(ParseErrorKind::malformed_header, "not a binary PGM (expected P5 magic)");
  std::size_t pos = 2;
  const long w = read_header_int(buf, pos, "width");
  const long h = read_header_int(buf, pos, "height");
  const long maxval = read_header_int(buf, pos, "maxval");
  if (w <= 0 || h <= 0) throw ParseError(ParseErrorKind::malformed_header, "PGM dimensions must be positive");
  if (maxval != 255)
    throw ParseError(ParseErrorKind::unsupported_format,
                     "unsupported PGM maxval " + std::to_string(maxval) + " (only 8-bit, maxval 255)");
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos])))
    throw ParseError(ParseErrorKind::malformed_header, "PGM header not terminated by whitespace");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (buf.size() - pos < n)
    throw ParseError(ParseErrorKind::truncated_payload,
                     "PGM payload truncated: expected " + std::to_string(n) + " bytes, got " +
                         std::to_string(buf.size() - pos));
  GrayImage img(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<unsigned char>(buf[pos + i]);
  return img;
}

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pixels.size());
  for (double v : img.pixels) out.push_back(static_cast<char>(to_byte(v)));
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline GrayImage load_gray(const std::filesystem::path& path) { return parse_pgm(read_file(path)); }

/// Writes P5; pixels are clamped to [0, 255] and rounded half away from zero.
inline void save_gray(const GrayImage& img, const std::filesystem::path& path) {
  write_file(path, encode_pgm(img));
}

/// Rounds and clamps every pixel, as a file round trip would.
inline GrayImage quantize_pixels(GrayImage img) {
  for (double& v : img.pixels) v = to_byte(v);
  return img;
}

}  // namespace d3
