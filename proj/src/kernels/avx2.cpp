#include "conforest/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

namespace conforest::kernels {
namespace {

#define CF_AVX2 __attribute__((target("avx2")))

CF_AVX2 inline std::size_t mask_count(__m256d m) {
  return static_cast<std::size_t>(__builtin_popcount(_mm256_movemask_pd(m)));
}

CF_AVX2 std::size_t count_lt(const double* v, std::size_t n, double t) {
  const __m256d tt = _mm256_set1_pd(t);
  std::size_t c = 0, i = 0;
  for (; i + 4 <= n; i += 4)
    c += mask_count(_mm256_cmp_pd(_mm256_loadu_pd(v + i), tt, _CMP_LT_OQ));
  for (; i < n; ++i) c += v[i] < t;
  return c;
}

CF_AVX2 std::size_t count_leq(const double* v, std::size_t n, double t) {
  const __m256d tt = _mm256_set1_pd(t);
  std::size_t c = 0, i = 0;
  for (; i + 4 <= n; i += 4)
    c += mask_count(_mm256_cmp_pd(_mm256_loadu_pd(v + i), tt, _CMP_LE_OQ));
  for (; i < n; ++i) c += v[i] <= t;
  return c;
}

CF_AVX2 std::size_t count_leq_pairwise(const double* a, const double* b, std::size_t n) {
  std::size_t c = 0, i = 0;
  for (; i + 4 <= n; i += 4)
    c += mask_count(
        _mm256_cmp_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), _CMP_LE_OQ));
  for (; i < n; ++i) c += a[i] <= b[i];
  return c;
}

CF_AVX2 std::size_t count_in_intervals(const double* lo, const double* hi,
                                       const double* y, std::size_t n) {
  std::size_t c = 0, i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d yy = _mm256_loadu_pd(y + i);
    const __m256d in =
        _mm256_and_pd(_mm256_cmp_pd(_mm256_loadu_pd(lo + i), yy, _CMP_LE_OQ),
                      _mm256_cmp_pd(yy, _mm256_loadu_pd(hi + i), _CMP_LE_OQ));
    c += mask_count(in);
  }
  for (; i < n; ++i) c += (lo[i] <= y[i]) & (y[i] <= hi[i]);
  return c;
}

CF_AVX2 void abs_diff(const double* a, const double* b, double* out, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    _mm256_storeu_pd(out + i, _mm256_andnot_pd(sign, d));
  }
  for (; i < n; ++i) out[i] = std::fabs(a[i] - b[i]);
}

// Gains are evaluated lane-wise with the same expression as the scalar
// reference (bit-identical), buffered, and the argmax resolved by a scalar
// pass so first-index tie-breaking matches exactly.
CF_AVX2 SplitResult best_split(const double* values, const double* prefix_wy,
                               const double* prefix_w, std::size_t n, double total_wy,
                               double total_w, double min_child_weight) {
  SplitResult best;
  if (n < 2) return best;
  double best_gain = -1.0;
  const __m256d v_twy = _mm256_set1_pd(total_wy);
  const __m256d v_tw = _mm256_set1_pd(total_w);
  const __m256d v_minw = _mm256_set1_pd(min_child_weight);
  const __m256d v_neg = _mm256_set1_pd(-1.0);

  constexpr std::size_t kChunk = 512;
  alignas(32) double gains[kChunk];

  const std::size_t m = n - 1;  // candidate positions 0..m-1
  std::size_t base = 0;
  while (base < m) {
    const std::size_t len = std::min(kChunk, m - base);
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4) {
      const std::size_t p = base + i;
      const __m256d wl = _mm256_loadu_pd(prefix_w + p);
      const __m256d wr = _mm256_sub_pd(v_tw, wl);
      const __m256d sl = _mm256_loadu_pd(prefix_wy + p);
      const __m256d sr = _mm256_sub_pd(v_twy, sl);
      const __m256d gain = _mm256_add_pd(_mm256_div_pd(_mm256_mul_pd(sl, sl), wl),
                                         _mm256_div_pd(_mm256_mul_pd(sr, sr), wr));
      const __m256d distinct = _mm256_cmp_pd(_mm256_loadu_pd(values + p + 1),
                                             _mm256_loadu_pd(values + p), _CMP_NEQ_OQ);
      const __m256d valid =
          _mm256_and_pd(distinct,
                        _mm256_and_pd(_mm256_cmp_pd(wl, v_minw, _CMP_GE_OQ),
                                      _mm256_cmp_pd(wr, v_minw, _CMP_GE_OQ)));
      _mm256_storeu_pd(gains + i, _mm256_blendv_pd(v_neg, gain, valid));
    }
    for (; i < len; ++i) {
      const std::size_t p = base + i;
      const double wl = prefix_w[p];
      const double wr = total_w - wl;
      if (values[p + 1] == values[p] || wl < min_child_weight || wr < min_child_weight) {
        gains[i] = -1.0;
        continue;
      }
      const double sl = prefix_wy[p];
      const double sr = total_wy - sl;
      gains[i] = sl * sl / wl + sr * sr / wr;
    }
    for (std::size_t j = 0; j < len; ++j) {
      if (gains[j] > best_gain && gains[j] >= 0.0) {
        best_gain = gains[j];
        best.pos = base + j;
      }
    }
    base += len;
  }
  if (best.pos != SplitResult::npos) best.gain = best_gain;
  return best;
}

CF_AVX2 double sum(const double* v, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(v + i));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) s += v[i];
  return s;
}

CF_AVX2 double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

#undef CF_AVX2

}  // namespace

const Ops* avx2_ops() {
  if (!__builtin_cpu_supports("avx2")) return nullptr;
  static const Ops table = {
      "avx2",    count_lt,  count_leq,  count_leq_pairwise,
      count_in_intervals,   abs_diff,   best_split,
      sum,        dot,
  };
  return &table;
}

}  // namespace conforest::kernels

#else

namespace conforest::kernels {
const Ops* avx2_ops() { return nullptr; }
}  // namespace conforest::kernels

#endif
