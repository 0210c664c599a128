#pragma once

#include <cstddef>
#include <cstdint>

namespace conforest::kernels {

// Result of a CART split scan over one candidate feature.
struct SplitResult {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t pos = npos;  // last index of the left child, npos if no valid split
  double gain = 0.0;       // SL^2/WL + SR^2/WR at pos
};

// Data-parallel inner loops, provided as scalar reference kernels plus an
// AVX2 variant selected at runtime. Counting and elementwise kernels are
// exactly equivalent between variants (comparisons and per-lane arithmetic
// are order-free); sum/dot are reductions whose association order differs,
// equivalent to 1e-12 relative. Everything feeding the exact calibration
// boundary algebra stays in ExactSum, never here.
struct Ops {
  const char* name;

  std::size_t (*count_lt)(const double* v, std::size_t n, double t);
  std::size_t (*count_leq)(const double* v, std::size_t n, double t);
  std::size_t (*count_leq_pairwise)(const double* a, const double* b, std::size_t n);
  std::size_t (*count_in_intervals)(const double* lo, const double* hi,
                                    const double* y, std::size_t n);
  void (*abs_diff)(const double* a, const double* b, double* out, std::size_t n);

  // Scan split positions p in [0, n-1): valid when values[p+1] != values[p]
  // and both children carry at least min_child_weight; gain computed from
  // the caller-supplied sequential prefix sums, ties resolved to the
  // smallest p. Lane arithmetic is bit-identical to the scalar reference.
  SplitResult (*best_split)(const double* values, const double* prefix_wy,
                            const double* prefix_w, std::size_t n, double total_wy,
                            double total_w, double min_child_weight);

  double (*sum)(const double* v, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
};

// Active table: AVX2 when the CPU supports it, scalar otherwise; force with
// CONFOREST_KERNELS=scalar|avx2.
const Ops& ops();

const Ops& scalar_ops();
// Null when this build/CPU cannot run AVX2.
const Ops* avx2_ops();

}  // namespace conforest::kernels
