#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace oddmap::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa) noexcept;

/// Best instruction set supported by the running CPU and compiled into this
/// binary. The ODDMAP_ISA environment variable ("scalar", "avx2") caps it.
Isa detect_isa();
/// ISA used by the dispatching entry points below; initialized from detect_isa().
Isa active_isa();
/// Overrides the active ISA (tests, benchmarking). Requests above what the
/// CPU supports are clamped.
void set_active_isa(Isa isa);
bool isa_available(Isa isa);

/// Fixed-point precomputed bilinear sampling table for one axis, using
/// half-pixel-center alignment: src = (dst + 0.5) * in / out - 0.5, clamped.
/// Weights are 11-bit (0..2048) for the upper neighbour.
struct AxisMap {
  std::vector<std::int32_t> index0;
  std::vector<std::int32_t> index1;
  std::vector<std::int32_t> weight1;

  static AxisMap build(std::int64_t in_size, std::int64_t out_size);
};

/// AxisMap expanded to interleaved channels: output element k reads source
/// bytes offset0[k] and offset1[k] of a row.
struct RowPlan {
  std::vector<std::int32_t> offset0;
  std::vector<std::int32_t> offset1;
  std::vector<std::int32_t> weight1;

  static RowPlan build(const AxisMap& xmap, int channels);
  std::size_t size() const { return offset0.size(); }
};

/// Bytes readable past the end of a source row passed to resize_row_h.
inline constexpr std::size_t kRowPadding = 4;

inline constexpr int kWeightBits = 11;
inline constexpr std::int32_t kWeightOne = 1 << kWeightBits;

struct MarkerRule {
  std::uint8_t min_red = 200;
  std::uint8_t max_green = 60;
};

/// Kernel table; every implementation is bit-exact with the scalar one.
struct KernelSet {
  /// Counts RGB pixels (interleaved, `pixels` * 3 bytes) with
  /// red >= rule.min_red and green <= rule.max_green.
  std::size_t (*count_markers)(const std::uint8_t* rgb, std::size_t pixels, MarkerRule rule);
  /// Counts zero bytes in a nodata mask (i.e. valid pixels).
  std::size_t (*count_zero)(const std::uint8_t* bytes, std::size_t n);
  /// Horizontal pass for one row: out[k] = p0 * (2048 - w) + p1 * w.
  /// `src_row` must have kRowPadding readable bytes past its end.
  void (*resize_row_h)(const std::uint8_t* src_row, std::int32_t* dst, const RowPlan& plan);
  /// Vertical blend of two horizontally-resized rows with rounding to u8:
  /// (upper * (2048 - w) + lower * w + 2^21) >> 22.
  void (*resize_row_v)(const std::int32_t* upper, const std::int32_t* lower, std::int32_t weight,
                       std::uint8_t* dst, std::size_t n);
};

const KernelSet& scalar_kernels();
#if defined(ODDMAP_HAVE_AVX2)
const KernelSet& avx2_kernels();
#endif
const KernelSet& kernels_for(Isa isa);
const KernelSet& active_kernels();

/// Bilinear resize of an interleaved u8 image using the active kernels.
void resize_bilinear(std::span<const std::uint8_t> src, std::int64_t src_h, std::int64_t src_w,
                     int channels, std::span<std::uint8_t> dst, std::int64_t dst_h,
                     std::int64_t dst_w);
/// Same, with an explicit kernel set.
void resize_bilinear(const KernelSet& ks, std::span<const std::uint8_t> src, std::int64_t src_h,
                     std::int64_t src_w, int channels, std::span<std::uint8_t> dst,
                     std::int64_t dst_h, std::int64_t dst_w);

}  // namespace oddmap::kernels
