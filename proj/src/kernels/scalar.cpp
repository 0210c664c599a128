#include <cmath>

#include "conforest/kernels.hpp"

namespace conforest::kernels {
namespace {

std::size_t count_lt(const double* v, std::size_t n, double t) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) c += v[i] < t;
  return c;
}

std::size_t count_leq(const double* v, std::size_t n, double t) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) c += v[i] <= t;
  return c;
}

std::size_t count_leq_pairwise(const double* a, const double* b, std::size_t n) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) c += a[i] <= b[i];
  return c;
}

std::size_t count_in_intervals(const double* lo, const double* hi, const double* y,
                               std::size_t n) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) c += (lo[i] <= y[i]) & (y[i] <= hi[i]);
  return c;
}

void abs_diff(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(a[i] - b[i]);
}

SplitResult best_split(const double* values, const double* prefix_wy,
                       const double* prefix_w, std::size_t n, double total_wy,
                       double total_w, double min_child_weight) {
  SplitResult best;
  double best_gain = -1.0;
  for (std::size_t p = 0; p + 1 < n; ++p) {
    const double wl = prefix_w[p];
    const double wr = total_w - wl;
    if (values[p + 1] == values[p] || wl < min_child_weight || wr < min_child_weight)
      continue;
    const double sl = prefix_wy[p];
    const double sr = total_wy - sl;
    const double gain = sl * sl / wl + sr * sr / wr;
    if (gain > best_gain) {
      best_gain = gain;
      best.pos = p;
    }
  }
  if (best.pos != SplitResult::npos) best.gain = best_gain;
  return best;
}

double sum(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += v[i];
  return s;
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops table = {
      "scalar", count_lt,  count_leq,  count_leq_pairwise,
      count_in_intervals,  abs_diff,   best_split,
      sum,       dot,
  };
  return table;
}

}  // namespace conforest::kernels
