#include <algorithm>
#include <cstring>
#include <vector>

#include "oddmap/error.hpp"
#include "oddmap/kernels.hpp"

namespace oddmap::kernels {

AxisMap AxisMap::build(std::int64_t in_size, std::int64_t out_size) {
  if (in_size < 1 || out_size < 1) fail(ErrorKind::Config, "resize dimensions must be positive");
  AxisMap m;
  m.index0.resize(static_cast<std::size_t>(out_size));
  m.index1.resize(static_cast<std::size_t>(out_size));
  m.weight1.resize(static_cast<std::size_t>(out_size));
  // src = ((2 d + 1) in - out) / (2 out), evaluated exactly in integers.
  const std::int64_t den = 2 * out_size;
  for (std::int64_t d = 0; d < out_size; ++d) {
    std::int64_t num = (2 * d + 1) * in_size - out_size;
    if (num < 0) num = 0;
    std::int64_t i0 = num / den;
    std::int64_t rem = num % den;
    std::int64_t i1 = i0 + 1;
    if (i0 >= in_size - 1) {
      i0 = in_size - 1;
      i1 = in_size - 1;
      rem = 0;
    }
    const std::int64_t w = (rem * kWeightOne * 2 + den) / (2 * den);
    m.index0[d] = static_cast<std::int32_t>(i0);
    m.index1[d] = static_cast<std::int32_t>(i1);
    m.weight1[d] = static_cast<std::int32_t>(w);
  }
  return m;
}

RowPlan RowPlan::build(const AxisMap& xmap, int channels) {
  RowPlan p;
  const std::size_t n = xmap.index0.size() * static_cast<std::size_t>(channels);
  p.offset0.resize(n);
  p.offset1.resize(n);
  p.weight1.resize(n);
  for (std::size_t x = 0; x < xmap.index0.size(); ++x) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t k = x * channels + c;
      p.offset0[k] = xmap.index0[x] * channels + c;
      p.offset1[k] = xmap.index1[x] * channels + c;
      p.weight1[k] = xmap.weight1[x];
    }
  }
  return p;
}

namespace {

std::size_t count_markers_scalar(const std::uint8_t* rgb, std::size_t pixels, MarkerRule rule) {
  std::size_t count = 0;
  for (std::size_t p = 0; p < pixels; ++p) {
    count += (rgb[3 * p] >= rule.min_red && rgb[3 * p + 1] <= rule.max_green) ? 1 : 0;
  }
  return count;
}

std::size_t count_zero_scalar(const std::uint8_t* bytes, std::size_t n) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += bytes[i] == 0 ? 1 : 0;
  return count;
}

void resize_row_h_scalar(const std::uint8_t* src, std::int32_t* dst, const RowPlan& plan) {
  const std::size_t n = plan.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::int32_t w = plan.weight1[k];
    dst[k] = src[plan.offset0[k]] * (kWeightOne - w) + src[plan.offset1[k]] * w;
  }
}

void resize_row_v_scalar(const std::int32_t* upper, const std::int32_t* lower, std::int32_t w,
                         std::uint8_t* dst, std::size_t n) {
  constexpr int kShift = 2 * kWeightBits;
  constexpr std::int32_t kRound = 1 << (kShift - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t v = upper[i] * (kWeightOne - w) + lower[i] * w;
    dst[i] = static_cast<std::uint8_t>((v + kRound) >> kShift);
  }
}

}  // namespace

const KernelSet& scalar_kernels() {
  static const KernelSet ks{count_markers_scalar, count_zero_scalar, resize_row_h_scalar,
                            resize_row_v_scalar};
  return ks;
}

void resize_bilinear(const KernelSet& ks, std::span<const std::uint8_t> src, std::int64_t src_h,
                     std::int64_t src_w, int channels, std::span<std::uint8_t> dst, std::int64_t dst_h,
                     std::int64_t dst_w) {
  if (channels < 1) fail(ErrorKind::Config, "resize needs at least one channel");
  const auto src_row = static_cast<std::size_t>(src_w * channels);
  const auto dst_row = static_cast<std::size_t>(dst_w * channels);
  if (src.size() != src_row * static_cast<std::size_t>(src_h) ||
      dst.size() != dst_row * static_cast<std::size_t>(dst_h)) {
    fail(ErrorKind::Config, "resize buffer sizes do not match dimensions");
  }
  const AxisMap xmap = AxisMap::build(src_w, dst_w);
  const AxisMap ymap = AxisMap::build(src_h, dst_h);
  const RowPlan plan = RowPlan::build(xmap, channels);

  // Padded copy so vector kernels may over-read each row end.
  std::vector<std::uint8_t> padded(src.size() + kRowPadding, 0);
  std::memcpy(padded.data(), src.data(), src.size());

  std::vector<std::int32_t> row_a(dst_row), row_b(dst_row);
  std::int32_t have_a = -1, have_b = -1;
  auto horizontal = [&](std::int32_t sy) -> const std::int32_t* {
    if (sy == have_a) return row_a.data();
    if (sy == have_b) return row_b.data();
    // Rows are requested in nondecreasing order; recycle the older buffer.
    std::swap(row_a, row_b);
    std::swap(have_a, have_b);
    ks.resize_row_h(padded.data() + static_cast<std::size_t>(sy) * src_row, row_a.data(), plan);
    have_a = sy;
    return row_a.data();
  };
  for (std::int64_t y = 0; y < dst_h; ++y) {
    const std::int32_t y0 = ymap.index0[y];
    const std::int32_t y1 = ymap.index1[y];
    const std::int32_t* upper = horizontal(y0);
    const std::int32_t* lower = horizontal(y1);
    if (y0 != y1) upper = (have_a == y0) ? row_a.data() : row_b.data();
    ks.resize_row_v(upper, lower, ymap.weight1[y], dst.data() + static_cast<std::size_t>(y) * dst_row,
                    dst_row);
  }
}

void resize_bilinear(std::span<const std::uint8_t> src, std::int64_t src_h, std::int64_t src_w,
                     int channels, std::span<std::uint8_t> dst, std::int64_t dst_h, std::int64_t dst_w) {
  resize_bilinear(active_kernels(), src, src_h, src_w, channels, dst, dst_h, dst_w);
}

}  // namespace oddmap::kernels
