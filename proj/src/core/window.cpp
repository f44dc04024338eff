#include "labpolicy/core/window.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "labpolicy/error.hpp"
#include "labpolicy/numeric/rng.hpp"

namespace labpolicy::core {

nlohmann::json FeatureStats::to_json() const { return {{"mean", mean}, {"std", sd}}; }

FeatureStats FeatureStats::from_json(const nlohmann::json& j) {
  FeatureStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.sd = j.at("std").get<std::vector<double>>();
  if (s.mean.size() != s.sd.size()) throw DataError("stats: mean/std length mismatch");
  for (double v : s.sd)
    if (!(v > 0)) throw DataError("stats: std must be positive");
  return s;
}

RawWindow RawWindow::from_stay(const PatientStay& stay, std::size_t d) {
  RawWindow w;
  w.anchor = stay.anchor_hour;
  w.by_feature.assign(d, {});
  const double lo = stay.anchor_hour - static_cast<double>(kPrevHours);
  for (const auto& o : stay.observations)
    if (o.hour >= lo && o.hour < stay.anchor_hour) w.by_feature[o.feature].emplace_back(o.hour, o.value);
  return w;
}

std::size_t RawWindow::count() const {
  std::size_t n = 0;
  for (const auto& f : by_feature) n += f.size();
  return n;
}

namespace {

// Bin sums over [start, start + hours) then standardized averages with
// carry-forward; `carry` seeds the first rows per feature (NaN = none).
void fill_binned(const PatientStay& stay, const FeatureStats& stats, double start, std::size_t hours,
                 const std::vector<double>& carry, Matrix& x, Matrix& mask) {
  const std::size_t d = stats.mean.size();
  Matrix sum(hours, d, 0.0), cnt(hours, d, 0.0);
  for (const auto& o : stay.observations) {
    if (o.hour < start || o.hour >= start + static_cast<double>(hours)) continue;
    const auto b = std::min(hours - 1, static_cast<std::size_t>(std::floor(o.hour - start)));
    sum(b, o.feature) += o.value;
    cnt(b, o.feature) += 1.0;
  }
  x = Matrix(hours, d, 0.0);
  mask = Matrix(hours, d, 0.0);
  for (std::size_t f = 0; f < d; ++f) {
    double last = carry.empty() ? std::nan("") : carry[f];
    for (std::size_t h = 0; h < hours; ++h) {
      if (cnt(h, f) > 0) {
        last = stats.standardize(f, sum(h, f) / cnt(h, f));
        mask(h, f) = 1.0;
      }
      x(h, f) = std::isnan(last) ? 0.0 : last;
    }
  }
}

}  // namespace

StayWindow make_window(const PatientStay& stay, const FeatureStats& stats) {
  const std::size_t d = stats.mean.size();
  StayWindow w;
  w.raw_prev = RawWindow::from_stay(stay, d);
  if (w.raw_prev.count() == 0)
    throw DataError("stay '" + stay.stay_id + "' has no observations in the 48h before its anchor");
  const double start = stay.anchor_hour - static_cast<double>(kPrevHours);
  fill_binned(stay, stats, start, kPrevHours, {}, w.x_prev, w.obs_mask_prev);

  bool any_post = false;
  for (const auto& o : stay.observations)
    if (o.hour >= stay.anchor_hour && o.hour < stay.anchor_hour + static_cast<double>(kPostHours)) any_post = true;
  if (any_post) {
    // Post cells before the first post observation continue the last observed
    // prev value, so the target is not biased toward the mean.
    std::vector<double> carry(d, std::nan(""));
    for (std::size_t f = 0; f < d; ++f)
      for (std::size_t h = kPrevHours; h-- > 0;)
        if (w.obs_mask_prev(h, f) > 0) {
          carry[f] = w.x_prev(h, f);
          break;
        }
    Matrix x, m;
    fill_binned(stay, stats, stay.anchor_hour, kPostHours, carry, x, m);
    w.x_post_true = std::move(x);
    w.obs_mask_post = std::move(m);
  }
  return w;
}

FeatureStats fit_stats(const std::vector<const PatientStay*>& train, std::size_t d) {
  if (train.empty()) throw DataError("fit_stats: empty training set");
  std::vector<double> n(d, 0.0), mean(d, 0.0), m2(d, 0.0);
  // Welford accumulation keeps the variance accurate for large offsets.
  for (const PatientStay* s : train)
    for (const auto& o : s->observations) {
      const std::size_t f = o.feature;
      n[f] += 1.0;
      const double delta = o.value - mean[f];
      mean[f] += delta / n[f];
      m2[f] += delta * (o.value - mean[f]);
    }
  FeatureStats st;
  st.mean.assign(d, 0.0);
  st.sd.assign(d, FeatureStats::kStdFloor);
  for (std::size_t f = 0; f < d; ++f) {
    if (n[f] == 0) continue;
    st.mean[f] = mean[f];
    st.sd[f] = std::max(std::sqrt(std::max(m2[f], 0.0) / n[f]), FeatureStats::kStdFloor);
  }
  return st;
}

FeatureStats fit_stats(const std::vector<PatientStay>& train, std::size_t d) {
  std::vector<const PatientStay*> ptrs;
  for (const auto& s : train) ptrs.push_back(&s);
  return fit_stats(ptrs, d);
}

SplitIndices split(std::size_t n, double train_ratio, double val_ratio, double test_ratio, std::uint64_t seed) {
  if (n == 0) throw DataError("split: empty collection");
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9 || train_ratio < 0 || val_ratio < 0 ||
      test_ratio < 0)
    throw ConfigError("split: ratios must be non-negative and sum to 1");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  numeric::Rng rng(numeric::derive_seed(seed, {0x5b1175ull}));
  std::shuffle(idx.begin(), idx.end(), rng);
  // Nudge before flooring so 0.1 * 10 lands on 1, not 0.999...
  const auto n_val = static_cast<std::size_t>(std::floor(val_ratio * static_cast<double>(n) + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(test_ratio * static_cast<double>(n) + 1e-9));
  SplitIndices s;
  s.val.assign(idx.begin(), idx.begin() + n_val);
  s.test.assign(idx.begin() + n_val, idx.begin() + n_val + n_test);
  s.train.assign(idx.begin() + n_val + n_test, idx.end());
  return s;
}

}  // namespace labpolicy::core

namespace labpolicy::core {

Matrix flatten_context(const Matrix& x_prev, const Matrix& x_post) {
  if (x_prev.rows != kPrevHours || x_post.rows != kPostHours || x_prev.cols != x_post.cols)
    throw DataError("context windows must be 48xd and 24xd");
  Matrix out(1, x_prev.size() + x_post.size());
  std::copy(x_prev.data.begin(), x_prev.data.end(), out.data.begin());
  std::copy(x_post.data.begin(), x_post.data.end(), out.data.begin() + static_cast<long>(x_prev.size()));
  return out;
}

}  // namespace labpolicy::core
