#include <immintrin.h>

#include "oddmap/kernels.hpp"

namespace oddmap::kernels {
namespace {

std::size_t count_markers_avx2(const std::uint8_t* rgb, std::size_t pixels, MarkerRule rule) {
  const std::size_t n = pixels * 3;
  // 96-byte blocks hold 32 whole pixels; the R byte of each sits at k % 3 == 0.
  alignas(32) std::uint8_t pos[96];
  for (int k = 0; k < 96; ++k) pos[k] = (k % 3 == 0) ? 0xFF : 0x00;
  const __m256i pos0 = _mm256_load_si256(reinterpret_cast<const __m256i*>(pos));
  const __m256i pos1 = _mm256_load_si256(reinterpret_cast<const __m256i*>(pos + 32));
  const __m256i pos2 = _mm256_load_si256(reinterpret_cast<const __m256i*>(pos + 64));
  const __m256i red_min = _mm256_set1_epi8(static_cast<char>(rule.min_red));
  const __m256i green_max = _mm256_set1_epi8(static_cast<char>(rule.max_green));

  auto lane_count = [&](const std::uint8_t* p, __m256i position) {
    const __m256i red = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p));
    const __m256i green = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p + 1));
    const __m256i red_ok = _mm256_cmpeq_epi8(_mm256_max_epu8(red, red_min), red);
    const __m256i green_ok = _mm256_cmpeq_epi8(_mm256_min_epu8(green, green_max), green);
    const __m256i hit = _mm256_and_si256(_mm256_and_si256(red_ok, green_ok), position);
    return static_cast<std::size_t>(
        __builtin_popcount(static_cast<unsigned>(_mm256_movemask_epi8(hit))));
  };

  std::size_t count = 0;
  std::size_t i = 0;
  // The G load of the last lane reads one byte past the block.
  for (; i + 97 <= n; i += 96) {
    count += lane_count(rgb + i, pos0);
    count += lane_count(rgb + i + 32, pos1);
    count += lane_count(rgb + i + 64, pos2);
  }
  for (std::size_t p = i / 3; p < pixels; ++p) {
    count += (rgb[3 * p] >= rule.min_red && rgb[3 * p + 1] <= rule.max_green) ? 1 : 0;
  }
  return count;
}

std::size_t count_zero_avx2(const std::uint8_t* bytes, std::size_t n) {
  const __m256i zero = _mm256_setzero_si256();
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(bytes + i));
    count += static_cast<std::size_t>(
        __builtin_popcount(static_cast<unsigned>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(v, zero)))));
  }
  for (; i < n; ++i) count += bytes[i] == 0 ? 1 : 0;
  return count;
}

void resize_row_h_avx2(const std::uint8_t* src, std::int32_t* dst, const RowPlan& plan) {
  const std::size_t n = plan.size();
  const __m256i one = _mm256_set1_epi32(kWeightOne);
  const __m256i low_byte = _mm256_set1_epi32(0xFF);
  const auto* base = reinterpret_cast<const int*>(src);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    const __m256i o0 = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(plan.offset0.data() + k));
    const __m256i o1 = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(plan.offset1.data() + k));
    const __m256i w1 = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(plan.weight1.data() + k));
    const __m256i p0 = _mm256_and_si256(_mm256_i32gather_epi32(base, o0, 1), low_byte);
    const __m256i p1 = _mm256_and_si256(_mm256_i32gather_epi32(base, o1, 1), low_byte);
    const __m256i v = _mm256_add_epi32(_mm256_mullo_epi32(p0, _mm256_sub_epi32(one, w1)),
                                       _mm256_mullo_epi32(p1, w1));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + k), v);
  }
  for (; k < n; ++k) {
    const std::int32_t w = plan.weight1[k];
    dst[k] = src[plan.offset0[k]] * (kWeightOne - w) + src[plan.offset1[k]] * w;
  }
}

void resize_row_v_avx2(const std::int32_t* upper, const std::int32_t* lower, std::int32_t w,
                       std::uint8_t* dst, std::size_t n) {
  constexpr int kShift = 2 * kWeightBits;
  constexpr std::int32_t kRound = 1 << (kShift - 1);
  const __m256i wu = _mm256_set1_epi32(kWeightOne - w);
  const __m256i wl = _mm256_set1_epi32(w);
  const __m256i round = _mm256_set1_epi32(kRound);
  const __m256i order = _mm256_setr_epi32(0, 4, 1, 5, 2, 6, 3, 7);
  auto blend = [&](std::size_t i) {
    const __m256i u = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(upper + i));
    const __m256i l = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(lower + i));
    const __m256i v = _mm256_add_epi32(_mm256_mullo_epi32(u, wu), _mm256_mullo_epi32(l, wl));
    return _mm256_srai_epi32(_mm256_add_epi32(v, round), kShift);
  };
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i a = blend(i), b = blend(i + 8), c = blend(i + 16), d = blend(i + 24);
    const __m256i packed = _mm256_packus_epi16(_mm256_packus_epi32(a, b), _mm256_packus_epi32(c, d));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i), _mm256_permutevar8x32_epi32(packed, order));
  }
  for (; i < n; ++i) {
    const std::int32_t v = upper[i] * (kWeightOne - w) + lower[i] * w;
    dst[i] = static_cast<std::uint8_t>((v + kRound) >> kShift);
  }
}

}  // namespace

const KernelSet& avx2_kernels() {
  static const KernelSet ks{count_markers_avx2, count_zero_avx2, resize_row_h_avx2, resize_row_v_avx2};
  return ks;
}

}  // namespace oddmap::kernels
