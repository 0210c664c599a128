#include "conforest/core.hpp"

#include <algorithm>
#include <cmath>

#include "conforest/exact_sum.hpp"

namespace conforest {

Dataset::Dataset(std::vector<double> features, std::size_t n_cols,
                 std::vector<double> targets)
    : features_(std::move(features)), n_cols_(n_cols), targets_(std::move(targets)) {
  if (n_cols_ == 0) throw DataError("dataset needs at least one feature column");
  if (targets_.empty()) throw DataError("dataset needs at least one row");
  if (features_.size() != targets_.size() * n_cols_)
    throw DataError("feature table shape does not match target count");
  for (double v : features_)
    if (!std::isfinite(v)) throw DataError("non-finite feature value");
  for (double v : targets_)
    if (!std::isfinite(v)) throw DataError("non-finite target value");
}

Dataset Dataset::subset(const std::vector<std::uint32_t>& row_ids) const {
  std::vector<double> f;
  f.reserve(row_ids.size() * n_cols_);
  std::vector<double> t;
  t.reserve(row_ids.size());
  for (std::uint32_t r : row_ids) {
    auto rr = row(r);
    f.insert(f.end(), rr.begin(), rr.end());
    t.push_back(target(r));
  }
  return Dataset(std::move(f), n_cols_, std::move(t));
}

StepCdf StepCdf::from_atoms(std::vector<Atom> atoms) {
  return from_atoms_with_rider(std::move(atoms), kInf, 0.0);
}

StepCdf StepCdf::from_atoms_with_rider(std::vector<Atom> atoms, double rider_location,
                                       double rider_mass) {
  for (const Atom& a : atoms) {
    if (a.mass < 0.0 || std::isnan(a.mass)) throw DataError("negative atom mass");
    if (std::isnan(a.location)) throw DataError("NaN atom location");
  }
  if (rider_mass < 0.0 || std::isnan(rider_mass)) throw DataError("negative rider mass");
  if (atoms.empty() && rider_mass <= 0.0)
    throw DataError("step c.d.f. needs at least one atom");

  std::stable_sort(atoms.begin(), atoms.end(),
                   [](const Atom& a, const Atom& b) { return a.location < b.location; });

  StepCdf out;
  ExactSum cum;
  std::size_t i = 0;
  while (i < atoms.size()) {
    std::size_t j = i;
    ExactSum group;
    while (j < atoms.size() && atoms[j].location == atoms[i].location) {
      group.add(atoms[j].mass);
      ++j;
    }
    double m = group.round();
    if (m > 0.0) {
      cum.add(m);
      out.locs_.push_back(atoms[i].location);
      out.masses_.push_back(m);
      out.cums_.push_back(cum.round());
    }
    i = j;
  }
  if (rider_mass > 0.0) {
    out.rider_loc_ = rider_location;
    out.rider_mass_ = rider_mass;
  }
  if (out.locs_.empty() && out.rider_mass_ <= 0.0)
    throw DataError("step c.d.f. has no positive mass");
  return out;
}

double StepCdf::total_mass() const {
  double base = cums_.empty() ? 0.0 : cums_.back();
  return rider_mass_ > 0.0 ? base + rider_mass_ : base;
}

bool StepCdf::is_normalized(double tol) const {
  double t = total_mass();
  return t >= 1.0 - tol && t <= 1.0 + tol;
}

double StepCdf::quantile(double beta) const {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw NumericError("quantile level outside [0,1]");
  const std::size_t n = locs_.size();
  if (rider_mass_ <= 0.0) {
    // first ladder position with cum >= beta
    auto it = std::lower_bound(cums_.begin(), cums_.end(), beta);
    if (it == cums_.end()) return locs_.back();
    return locs_[static_cast<std::size_t>(it - cums_.begin())];
  }
  // Positions at locations < rider_loc_ have cum C_p; the rider position and
  // everything after it has C_p + rider_mass_ (one add, order-independent).
  std::size_t split = static_cast<std::size_t>(
      std::lower_bound(locs_.begin(), locs_.end(), rider_loc_) - locs_.begin());
  auto pre_end = cums_.begin() + static_cast<std::ptrdiff_t>(split);
  auto it = std::lower_bound(cums_.begin(), pre_end, beta);
  if (it != pre_end) return locs_[static_cast<std::size_t>(it - cums_.begin())];
  // rider position: cumulative = mass strictly before rider + rider mass
  double before = split == 0 ? 0.0 : cums_[split - 1];
  if (before + rider_mass_ >= beta && !(split < n && locs_[split] == rider_loc_))
    return rider_loc_;
  for (std::size_t p = split; p < n; ++p) {
    if (cums_[p] + rider_mass_ >= beta) return locs_[p];
  }
  // Mass shortfall below beta: largest supported location.
  return max_location();
}

double StepCdf::mass_below(double t) const {
  auto it = std::lower_bound(locs_.begin(), locs_.end(), t);
  double base = it == locs_.begin()
                    ? 0.0
                    : cums_[static_cast<std::size_t>(it - locs_.begin()) - 1];
  if (rider_mass_ > 0.0 && rider_loc_ < t) return base + rider_mass_;
  return base;
}

double StepCdf::max_location() const {
  double base = locs_.empty() ? -kInf : locs_.back();
  if (rider_mass_ > 0.0) return std::max(base, rider_loc_);
  return base;
}

void StepCdf::collect_levels(std::vector<double>& out) const {
  if (rider_mass_ <= 0.0) {
    out.insert(out.end(), cums_.begin(), cums_.end());
    return;
  }
  std::size_t split = static_cast<std::size_t>(
      std::lower_bound(locs_.begin(), locs_.end(), rider_loc_) - locs_.begin());
  for (std::size_t p = 0; p < split; ++p) out.push_back(cums_[p]);
  if (!(split < locs_.size() && locs_[split] == rider_loc_)) {
    double before = split == 0 ? 0.0 : cums_[split - 1];
    out.push_back(before + rider_mass_);
  }
  for (std::size_t p = split; p < locs_.size(); ++p)
    out.push_back(cums_[p] + rider_mass_);
}

double weighted_quantile(double beta, const StepCdf& cdf) { return cdf.quantile(beta); }

StepCdf empirical_split_cdf(const std::vector<double>& residuals) {
  if (residuals.empty()) throw DataError("empty residual vector");
  const double unit = 1.0 / (static_cast<double>(residuals.size()) + 1.0);
  std::vector<Atom> atoms;
  atoms.reserve(residuals.size() + 1);
  for (double r : residuals) {
    if (!std::isfinite(r)) throw DataError("non-finite residual");
    atoms.push_back({r, unit});
  }
  atoms.push_back({kInf, unit});
  return StepCdf::from_atoms(std::move(atoms));
}

StepCdf merge_duplicates(std::vector<Atom> atoms) {
  return StepCdf::from_atoms(std::move(atoms));
}

}  // namespace conforest
