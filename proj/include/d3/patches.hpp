#pragma once

// Patch extraction / overlap-averaging aggregation, whole-image JPEG
// degradation, test-time interval matching and training-set sampling.

#include <d3/error.hpp>
#include <d3/image.hpp>
#include <d3/jpeg_model.hpp>
#include <d3/random.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace d3 {

inline constexpr double kMeanShift = 128.0;

struct Origin {
  int row = 0;
  int col = 0;
  friend bool operator==(const Origin&, const Origin&) = default;
};

/// Overlapping 8x8 patches; column j of `patches` is the mean-shifted patch at origins[j].
struct PatchGrid {
  int patch_size = kBlockSide;
  int stride = 1;
  std::vector<Origin> origins;
  Eigen::MatrixXd patches;
};

/// Start offsets 0, s, 2s, ... plus a final offset snapped to extent - 8.
inline std::vector<int> patch_offsets(int extent, int stride) {
  std::vector<int> out;
  for (int o = 0; o + kBlockSide <= extent; o += stride) out.push_back(o);
  if (out.back() + kBlockSide < extent) out.push_back(extent - kBlockSide);
  return out;
}

inline Block read_patch(const GrayImage& img, Origin o) {
  Block b;
  for (int r = 0; r < kBlockSide; ++r)
    for (int c = 0; c < kBlockSide; ++c) b[r * kBlockSide + c] = img.clamped(o.row + r, o.col + c) - kMeanShift;
  return b;
}

inline PatchGrid extract_patches(const GrayImage& img, int stride) {
  if (stride < 1 || stride > kBlockSide) throw ValidationError("stride must be in [1, 8] so patches cover the image");
  if (img.width < kBlockSide || img.height < kBlockSide)
    throw ValidationError("image must be at least 8x8, got " + std::to_string(img.width) + "x" +
                          std::to_string(img.height));
  PatchGrid grid;
  grid.stride = stride;
  for (int r : patch_offsets(img.height, stride))
    for (int c : patch_offsets(img.width, stride)) grid.origins.push_back({r, c});
  grid.patches.resize(kBlockSize, static_cast<Eigen::Index>(grid.origins.size()));
  for (std::size_t j = 0; j < grid.origins.size(); ++j)
    grid.patches.col(static_cast<Eigen::Index>(j)) = read_patch(img, grid.origins[j]);
  return grid;
}

/// Averages overlapping patch values per pixel, undoes the mean shift and clamps to [0, 255].
inline GrayImage aggregate(const PatchGrid& grid, int width, int height) {
  if (grid.patches.cols() != static_cast<Eigen::Index>(grid.origins.size()) || grid.patches.rows() != kBlockSize)
    throw ValidationError("patch grid has inconsistent dimensions");
  GrayImage sum(width, height, 0.0);
  std::vector<int> count(sum.pixels.size(), 0);
  for (std::size_t j = 0; j < grid.origins.size(); ++j) {
    const Origin o = grid.origins[j];
    if (o.row < 0 || o.col < 0 || o.row + kBlockSide > height || o.col + kBlockSide > width)
      throw ValidationError("patch origin out of bounds");
    for (int r = 0; r < kBlockSide; ++r) {
      for (int c = 0; c < kBlockSide; ++c) {
        sum.at(o.row + r, o.col + c) += grid.patches(r * kBlockSide + c, static_cast<Eigen::Index>(j));
        ++count[static_cast<std::size_t>(o.row + r) * width + o.col + c];
      }
    }
  }
  for (std::size_t i = 0; i < sum.pixels.size(); ++i) {
    if (count[i] == 0)
      throw CoverageError("pixel (" + std::to_string(i / width) + ", " + std::to_string(i % width) +
                          ") not covered by any patch");
    sum.pixels[i] = std::clamp(sum.pixels[i] / count[i] + kMeanShift, 0.0, 255.0);
  }
  return sum;
}

/// Quantized coding blocks of an image, on the edge-padded 8-aligned grid.
struct BlockGrid {
  int block_rows = 0;
  int block_cols = 0;
  std::vector<jpeg::QuantizedBlock> blocks;

  const jpeg::QuantizedBlock& at(int block_row, int block_col) const {
    return blocks[static_cast<std::size_t>(block_row) * block_cols + block_col];
  }
};

struct DegradedImage {
  GrayImage image;
  BlockGrid blocks;
};

/// JPEG-compresses every aligned 8x8 block (edge-replicated padding, cropped back).
inline DegradedImage degrade_image(const GrayImage& img, const jpeg::QuantSpec& spec) {
  const auto& t = jpeg::transform();
  DegradedImage out{GrayImage(img.width, img.height), {}};
  out.blocks.block_rows = (img.height + kBlockSide - 1) / kBlockSide;
  out.blocks.block_cols = (img.width + kBlockSide - 1) / kBlockSide;
  out.blocks.blocks.reserve(static_cast<std::size_t>(out.blocks.block_rows) * out.blocks.block_cols);
  for (int br = 0; br < out.blocks.block_rows; ++br) {
    for (int bc = 0; bc < out.blocks.block_cols; ++bc) {
      const Origin o{br * kBlockSide, bc * kBlockSide};
      const jpeg::QuantizedBlock q = jpeg::quantize(t.forward * read_patch(img, o), spec);
      const Block decoded = t.inverse * jpeg::dequantize(q);
      for (int r = 0; r < kBlockSide; ++r)
        for (int c = 0; c < kBlockSide; ++c)
          if (o.row + r < img.height && o.col + c < img.width)
            out.image.at(o.row + r, o.col + c) = decoded[r * kBlockSide + c] + kMeanShift;
      out.blocks.blocks.push_back(q);
    }
  }
  return out;
}

inline DegradedImage degrade_image(const GrayImage& img, int quality) {
  return degrade_image(img, jpeg::scaled_quant_table(quality));
}

/// Recovers the aligned block grid from decoded pixels by re-quantizing each
/// block. Exact for unrounded decoder output; after 8-bit rounding it holds
/// while the rounding error stays below half a step.
inline BlockGrid requantize_blocks(const GrayImage& decoded, const jpeg::QuantSpec& spec) {
  return degrade_image(decoded, spec).blocks;
}

/// Text sidecar holding the quality and every block's quantization indices.
inline std::string encode_blocks(const BlockGrid& g) {
  if (g.blocks.empty()) throw ValidationError("block grid is empty");
  std::ostringstream os;
  os << "D3BLOCKS 1\n" << g.blocks.front().spec.quality << ' ' << g.block_rows << ' ' << g.block_cols << '\n';
  for (const auto& b : g.blocks) {
    for (int i = 0; i < kBlockSize; ++i) os << (i ? " " : "") << b.indices[static_cast<std::size_t>(i)];
    os << '\n';
  }
  return os.str();
}

inline BlockGrid parse_blocks(const std::string& text) {
  std::istringstream is(text);
  std::string magic;
  int version = 0, quality = 0;
  BlockGrid g;
  if (!(is >> magic >> version) || magic != "D3BLOCKS")
    throw ParseError(ParseErrorKind::malformed_header, "not a block sidecar");
  if (version != 1) throw ParseError(ParseErrorKind::unsupported_format, "unsupported block sidecar version");
  if (!(is >> quality >> g.block_rows >> g.block_cols) || g.block_rows < 1 || g.block_cols < 1)
    throw ParseError(ParseErrorKind::malformed_header, "bad block sidecar header");
  jpeg::QuantSpec spec;
  try {
    spec = jpeg::scaled_quant_table(quality);
  } catch (const ValidationError& e) {
    throw ParseError(ParseErrorKind::malformed_header, e.what());
  }
  g.blocks.resize(static_cast<std::size_t>(g.block_rows) * g.block_cols);
  for (auto& b : g.blocks) {
    b.spec = spec;
    for (auto& v : b.indices)
      if (!(is >> v)) throw ParseError(ParseErrorKind::truncated_payload, "block sidecar ends early");
  }
  return g;
}

struct IntervalMatch {
  jpeg::IntervalPair intervals;
  Origin block;             // top-left of the chosen coding block
  double distance = 0.0;    // squared pixel distance to the patch
};

/// Intervals for the patch at `origin`: its own block when aligned, otherwise the
/// most similar aligned block whose top-left lies in the 16x16 window centred on
/// the patch origin (truncated at the borders; ties go to raster order).
inline IntervalMatch match_intervals(const GrayImage& degraded, const BlockGrid& blocks, Origin origin) {
  if (origin.row < 0 || origin.col < 0 || origin.row >= degraded.height || origin.col >= degraded.width)
    throw ValidationError("patch origin out of bounds");
  if (origin.row % kBlockSide == 0 && origin.col % kBlockSide == 0) {
    const auto& q = blocks.at(origin.row / kBlockSide, origin.col / kBlockSide);
    return {jpeg::intervals(q), origin, 0.0};
  }
  const Block patch = read_patch(degraded, origin);
  const int half = kBlockSide;  // window rows/cols [origin - 8, origin + 7]
  auto candidates = [&](int o, int n_blocks) {
    const int lo = std::max(0, o - half);
    const int hi = std::min((n_blocks - 1) * kBlockSide, o + half - 1);
    std::vector<int> out;
    for (int b = (lo + kBlockSide - 1) / kBlockSide * kBlockSide; b <= hi; b += kBlockSide) out.push_back(b);
    return out;
  };
  IntervalMatch best;
  best.distance = std::numeric_limits<double>::infinity();
  for (int br : candidates(origin.row, blocks.block_rows)) {
    for (int bc : candidates(origin.col, blocks.block_cols)) {
      const double d = (read_patch(degraded, {br, bc}) - patch).squaredNorm();
      if (d < best.distance) {
        best.distance = d;
        best.block = {br, bc};
      }
    }
  }
  best.intervals = jpeg::intervals(blocks.at(best.block.row / kBlockSide, best.block.col / kBlockSide));
  return best;
}

struct TrainingPair {
  jpeg::DegradedPatch degraded;
  Block clean = Block::Zero();
};

struct TrainingSetOptions {
  int quality = 10;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  // Sample patches of the whole-image encoding instead of encoding each patch
  // as its own coding block; intervals then come from match_intervals.
  bool encode_full_image = false;
};

/// Samples `count` origins uniformly over all valid 8x8 positions of the corpus.
inline std::vector<TrainingPair> build_training_set(std::span<const GrayImage> images, const TrainingSetOptions& opt) {
  if (opt.count < 1) throw ValidationError("training set count must be >= 1");
  std::vector<std::uint64_t> cumulative;
  std::vector<std::size_t> usable;
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    if (im.width < kBlockSide || im.height < kBlockSide) continue;
    total += static_cast<std::uint64_t>(im.width - kBlockSide + 1) * (im.height - kBlockSide + 1);
    cumulative.push_back(total);
    usable.push_back(i);
  }
  if (total == 0) throw ValidationError("training corpus has no image of at least 8x8");

  struct Draw {
    std::size_t image;
    Origin origin;
  };
  Rng rng(opt.seed);
  std::vector<Draw> draws(opt.count);
  for (auto& d : draws) {
    const std::uint64_t k = uniform_index(rng, total);
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), k);
    const std::size_t slot = static_cast<std::size_t>(it - cumulative.begin());
    const std::uint64_t local = k - (slot == 0 ? 0 : cumulative[slot - 1]);
    const auto& im = images[usable[slot]];
    const auto span_cols = static_cast<std::uint64_t>(im.width - kBlockSide + 1);
    d.image = usable[slot];
    d.origin = {static_cast<int>(local / span_cols), static_cast<int>(local % span_cols)};
  }

  const jpeg::QuantSpec spec = jpeg::scaled_quant_table(opt.quality);
  std::vector<DegradedImage> full;
  if (opt.encode_full_image) {
    full.reserve(images.size());
    for (const auto& im : images) full.push_back(degrade_image(im, spec));
  }
  std::vector<TrainingPair> pairs;
  pairs.reserve(draws.size());
  for (const auto& d : draws) {
    TrainingPair p;
    p.clean = read_patch(images[d.image], d.origin);
    if (opt.encode_full_image) {
      const auto& deg = full[d.image];
      p.degraded.pixels = read_patch(deg.image, d.origin);
      p.degraded.intervals = match_intervals(deg.image, deg.blocks, d.origin).intervals;
    } else {
      p.degraded = jpeg::compress_block(p.clean, spec);
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace d3
