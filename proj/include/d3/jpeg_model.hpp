#pragma once

// Block DCT / quantization model of a baseline JPEG luminance encoder and the
// quantization-interval prior derived from it.

#include <d3/error.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

namespace d3 {

inline constexpr int kBlockSide = 8;
inline constexpr int kBlockSize = 64;

using Block = Eigen::Matrix<double, kBlockSize, 1>;
using BlockMatrix = Eigen::Matrix<double, kBlockSize, kBlockSize>;

namespace jpeg {

/// 2-D orthonormal DCT-II on row-major 8x8 blocks and its inverse.
struct OrthonormalTransform {
  BlockMatrix forward;
  BlockMatrix inverse;
};

/// Builds T = C (x) C where C is the 8-point orthonormal DCT-II.
inline OrthonormalTransform build_transform() {
  Eigen::Matrix<double, kBlockSide, kBlockSide> c;
  for (int i = 0; i < kBlockSide; ++i) {
    for (int j = 0; j < kBlockSide; ++j) {
      c(i, j) = i == 0 ? 1.0 / std::sqrt(8.0)
                       : 0.5 * std::cos((2 * j + 1) * i * std::numbers::pi / 16.0);
    }
  }
  OrthonormalTransform t;
  for (int u = 0; u < kBlockSide; ++u)
    for (int v = 0; v < kBlockSide; ++v)
      for (int r = 0; r < kBlockSide; ++r)
        for (int s = 0; s < kBlockSide; ++s)
          t.forward(u * kBlockSide + v, r * kBlockSide + s) = c(u, r) * c(v, s);
  t.inverse = t.forward.transpose();
  return t;
}

/// Process-wide constant transform.
inline const OrthonormalTransform& transform() {
  static const OrthonormalTransform t = build_transform();
  return t;
}

/// ITU-T T.81 Annex K luminance table, row-major.
inline constexpr std::array<int, kBlockSize> kLuminanceBase = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

struct QuantSpec {
  int quality = 50;
  std::array<int, kBlockSize> steps{};

  friend bool operator==(const QuantSpec&, const QuantSpec&) = default;
};

/// Quality-scaled luminance table (IJG convention).
inline QuantSpec scaled_quant_table(int quality) {
  if (quality < 1 || quality > 100)
    throw ValidationError("quality factor must be in [1, 100], got " + std::to_string(quality));
  const long scale = quality < 50 ? 5000 / quality : 200 - 2L * quality;
  QuantSpec spec;
  spec.quality = quality;
  for (int i = 0; i < kBlockSize; ++i) {
    const long step = (kLuminanceBase[i] * scale + 50) / 100;
    spec.steps[i] = static_cast<int>(std::clamp(step, 1L, 255L));
  }
  return spec;
}

struct QuantizedBlock {
  std::array<int, kBlockSize> indices{};
  QuantSpec spec;

  friend bool operator==(const QuantizedBlock&, const QuantizedBlock&) = default;
};

/// Per-coefficient interval [lower, upper] in DCT units.
struct IntervalPair {
  Block lower = Block::Zero();
  Block upper = Block::Zero();
};

/// A mean-shifted decoded block together with its quantization intervals.
struct DegradedPatch {
  Block pixels = Block::Zero();
  IntervalPair intervals;
};

/// Rounds coeffs / step half away from zero.
inline QuantizedBlock quantize(const Block& coeffs, const QuantSpec& spec) {
  QuantizedBlock b;
  b.spec = spec;
  for (int i = 0; i < kBlockSize; ++i)
    b.indices[i] = static_cast<int>(std::round(coeffs[i] / spec.steps[i]));
  return b;
}

inline Block dequantize(const QuantizedBlock& b) {
  Block out;
  for (int i = 0; i < kBlockSize; ++i) out[i] = static_cast<double>(b.indices[i]) * b.spec.steps[i];
  return out;
}

inline IntervalPair intervals(const QuantizedBlock& b) {
  IntervalPair iv;
  for (int i = 0; i < kBlockSize; ++i) {
    const double k = b.indices[i];
    const double q = b.spec.steps[i];
    iv.lower[i] = (k - 0.5) * q;
    iv.upper[i] = (k + 0.5) * q;
  }
  return iv;
}

/// Encodes and decodes one mean-shifted block.
inline DegradedPatch compress_block(const Block& pixels, const QuantSpec& spec) {
  const auto& t = transform();
  const QuantizedBlock b = quantize(t.forward * pixels, spec);
  return {t.inverse * dequantize(b), intervals(b)};
}

inline DegradedPatch compress_block(const Block& pixels, int quality) {
  return compress_block(pixels, scaled_quant_table(quality));
}

inline bool contains(const IntervalPair& iv, const Block& coeffs, double slack = 0.0) {
  return ((coeffs.array() >= iv.lower.array() - slack) && (coeffs.array() <= iv.upper.array() + slack))
      .all();
}

inline Block clamp_to(const IntervalPair& iv, const Block& coeffs) {
  return coeffs.cwiseMax(iv.lower).cwiseMin(iv.upper);
}

}  // namespace jpeg
}  // namespace d3
