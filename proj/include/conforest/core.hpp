#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "conforest/common.hpp"

namespace conforest {

// Feature table (row major) plus target vector. Categorical variables are
// expected pre-encoded as integer-valued reals.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<double> features, std::size_t n_cols,
          std::vector<double> targets);

  std::size_t rows() const { return targets_.size(); }
  std::size_t cols() const { return n_cols_; }

  std::span<const double> row(std::size_t i) const {
    return {features_.data() + i * n_cols_, n_cols_};
  }
  double feature(std::size_t i, std::size_t j) const {
    return features_[i * n_cols_ + j];
  }
  double target(std::size_t i) const { return targets_[i]; }
  const std::vector<double>& targets() const { return targets_; }

  Dataset subset(const std::vector<std::uint32_t>& row_ids) const;

 private:
  std::vector<double> features_;
  std::size_t n_cols_ = 0;
  std::vector<double> targets_;
};

// Miscoverage rate alpha in (0,1).
struct MiscoverageLevel {
  double alpha;
  explicit MiscoverageLevel(double a) : alpha(a) {
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  }
};

struct Atom {
  double location;  // extended real; +inf allowed, at most once and last
  double mass;      // >= 0
};

// Weighted step distribution over the extended reals.
//
// Internally: merged atoms with strictly increasing locations plus an
// optional "rider" atom that is kept out of the ladder and folded in
// additively during queries. Cumulative masses of the ladder are correctly
// rounded sums of the atom masses (ExactSum), so a cumulative value is a
// function of the mass multiset alone. The rider carries the test-point
// residual of a localizer c.d.f.: when its location moves, every cumulative
// the queries compare stays bit-identical (ladder cum + one IEEE add),
// which is what makes the fast calibration sweep agree exactly with the
// brute-force test inversion.
class StepCdf {
 public:
  StepCdf() = default;

  // Merges duplicate locations (masses summed exactly), sorts, drops
  // zero-mass atoms. Throws DataError on empty input or negative mass.
  static StepCdf from_atoms(std::vector<Atom> atoms);

  // Same, with an extra rider atom (mass 0 riders are ignored).
  static StepCdf from_atoms_with_rider(std::vector<Atom> atoms, double rider_location,
                                       double rider_mass);

  std::size_t size() const { return locs_.size(); }
  const std::vector<double>& locations() const { return locs_; }
  const std::vector<double>& masses() const { return masses_; }
  const std::vector<double>& cumulatives() const { return cums_; }
  bool has_rider() const { return rider_mass_ > 0.0; }
  double rider_location() const { return rider_loc_; }
  double rider_mass() const { return rider_mass_; }

  // Total mass including the rider.
  double total_mass() const;

  // True when the total mass is within tol of 1.
  bool is_normalized(double tol = 1e-9) const;

  // Generalized inverse inf{r : F(r) >= beta}. beta outside [0,1] is a
  // domain error. If no cumulative reaches beta (possible only through
  // floating-point shortfall at beta near 1), returns the largest
  // supported location.
  double quantile(double beta) const;

  // F(t^-): mass strictly below t, rider included when rider_loc < t.
  // Exactly the value quantile() compares beta against at the boundary t.
  double mass_below(double t) const;

  // Largest supported location (rider included).
  double max_location() const;

  // All distinct values the cumulative ladder attains (rider folds
  // included), i.e. the jump levels of quantile(). Appended to `out`.
  void collect_levels(std::vector<double>& out) const;

 private:
  std::vector<double> locs_;
  std::vector<double> masses_;
  std::vector<double> cums_;  // exact-rounded prefix sums of masses_
  double rider_loc_ = kInf;
  double rider_mass_ = 0.0;
};

// inf{r : F(r) >= beta}; see StepCdf::quantile.
double weighted_quantile(double beta, const StepCdf& cdf);

// Empirical split-conformal c.d.f.: each residual gets mass 1/(n+1)
// (duplicates merged) plus a +inf atom of mass 1/(n+1).
StepCdf empirical_split_cdf(const std::vector<double>& residuals);

// Sort + merge duplicates; total mass preserved exactly.
StepCdf merge_duplicates(std::vector<Atom> atoms);

}  // namespace conforest
