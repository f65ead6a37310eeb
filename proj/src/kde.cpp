#include "ssme/kde.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <set>

namespace ssme {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kIsjGridBits = 14;  // 2^14 dyadic bins
constexpr double kMinEffectiveForIsj = 50.0;

double weighted_sd(const std::vector<double>& samples,
                   const std::vector<double>& weights, double* n_eff_out) {
  double wsum = 0.0, wsq = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    wsum += weights[i];
    wsq += weights[i] * weights[i];
    mean += weights[i] * samples[i];
  }
  if (wsum <= 0.0) throw FitError("silverman: nonpositive total weight");
  mean /= wsum;
  double var = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double d = samples[i] - mean;
    var += weights[i] * d * d;
  }
  var /= wsum;
  if (n_eff_out) *n_eff_out = wsum * wsum / wsq;
  return std::sqrt(var);
}

// iterative radix-2 FFT, in place
void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const auto u = a[i + j];
        const auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// DCT-II via FFT of even-odd reordered data (Botev's dct1d)
std::vector<double> dct1d(const std::vector<double>& data) {
  const std::size_t n = data.size();
  std::vector<std::complex<double>> buf(n);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < n; i += 2) buf[idx++] = data[i];
  for (std::size_t i = (n % 2 == 0) ? n - 1 : n - 2; idx < n; i -= 2) {
    buf[idx++] = data[i];
    if (i < 2) break;
  }
  fft(buf);
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double ang = -static_cast<double>(k) * kPi / (2.0 * static_cast<double>(n));
    const std::complex<double> w =
        (k == 0) ? std::complex<double>(1.0, 0.0)
                 : 2.0 * std::complex<double>(std::cos(ang), std::sin(ang));
    out[k] = (w * buf[k]).real();
  }
  return out;
}

// Botev's fixed-point functional: t - xi * gamma^[l](t)
double isj_fixed_point(double t, double n, const std::vector<double>& i_sq,
                       const std::vector<double>& a2) {
  const int l = 7;
  double f = 0.0;
  for (std::size_t j = 0; j < i_sq.size(); ++j) {
    f += std::pow(i_sq[j], l) * a2[j] * std::exp(-i_sq[j] * kPi * kPi * t);
  }
  f *= 2.0 * std::pow(kPi, 2 * l);
  for (int s = l - 1; s >= 2; --s) {
    double k0 = 1.0;
    for (int j = 1; j <= 2 * s - 1; j += 2) k0 *= j;
    k0 /= std::sqrt(2.0 * kPi);
    const double c = (1.0 + std::pow(0.5, s + 0.5)) / 3.0;
    const double time = std::pow(2.0 * c * k0 / (n * f), 2.0 / (3.0 + 2.0 * s));
    double fs = 0.0;
    for (std::size_t j = 0; j < i_sq.size(); ++j) {
      fs += std::pow(i_sq[j], s) * a2[j] * std::exp(-i_sq[j] * kPi * kPi * time);
    }
    f = 2.0 * std::pow(kPi, 2 * s) * fs;
  }
  return t - std::pow(2.0 * n * std::sqrt(kPi) * f, -0.4);
}

}  // namespace

std::string bandwidth_method_name(BandwidthMethod m) {
  switch (m) {
    case BandwidthMethod::Isj: return "isj";
    case BandwidthMethod::Silverman: return "silverman";
    case BandwidthMethod::Fixed: return "fixed";
  }
  return "unknown";
}

double silverman_bandwidth(const std::vector<double>& samples,
                           const std::vector<double>& weights) {
  if (samples.size() < 2 || samples.size() != weights.size())
    throw FitError("silverman: need >= 2 weighted samples");
  double n_eff = 0.0;
  const double sd = weighted_sd(samples, weights, &n_eff);
  if (sd <= 0.0) throw FitError("degenerate sample");
  return 1.06 * sd * std::pow(n_eff, -0.2);
}

IsjResult isj_bandwidth(const std::vector<double>& samples,
                        const std::vector<double>& weights) {
  double n_eff = 0.0;
  const double sd = weighted_sd(samples, weights, &n_eff);
  if (sd <= 0.0) throw FitError("degenerate sample");
  if (n_eff < kMinEffectiveForIsj) {
    return {silverman_bandwidth(samples, weights), BandwidthMethod::Silverman};
  }

  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double range = *hi_it - *lo_it;
  const double lo = *lo_it - range / 10.0;
  const double hi = *hi_it + range / 10.0;
  const double r = hi - lo;

  const std::size_t bins = std::size_t{1} << kIsjGridBits;
  std::vector<double> hist(bins, 0.0);
  for (double x : samples) {
    auto b = static_cast<std::size_t>((x - lo) / r * static_cast<double>(bins));
    if (b >= bins) b = bins - 1;
    hist[b] += 1.0;
  }
  const double n_unique =
      static_cast<double>(std::set<double>(samples.begin(), samples.end()).size());
  for (double& v : hist) v /= static_cast<double>(samples.size());

  const auto a = dct1d(hist);
  std::vector<double> i_sq(bins - 1), a2(bins - 1);
  for (std::size_t j = 1; j < bins; ++j) {
    i_sq[j - 1] = static_cast<double>(j) * static_cast<double>(j);
    a2[j - 1] = (a[j] / 2.0) * (a[j] / 2.0);
  }

  // bracket a root of the fixed-point equation, then bisect
  double t_lo = 1e-12, t_hi = 0.0;
  double f_lo = isj_fixed_point(t_lo, n_unique, i_sq, a2);
  bool bracketed = false;
  for (double t = 1e-7; t <= 0.1 + 1e-15; t *= 2.0) {
    const double f = isj_fixed_point(t, n_unique, i_sq, a2);
    if (std::isfinite(f) && std::isfinite(f_lo) && f_lo * f < 0.0) {
      t_hi = t;
      bracketed = true;
      break;
    }
    t_lo = t;
    f_lo = f;
  }
  if (!bracketed) {
    return {silverman_bandwidth(samples, weights), BandwidthMethod::Silverman};
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (t_lo + t_hi);
    const double f = isj_fixed_point(mid, n_unique, i_sq, a2);
    if (f_lo * f <= 0.0) {
      t_hi = mid;
    } else {
      t_lo = mid;
      f_lo = f;
    }
    if (t_hi - t_lo < 1e-14) break;
  }
  const double t_star = 0.5 * (t_lo + t_hi);
  const double h = std::sqrt(t_star) * r;
  if (!(h > 0.0) || !std::isfinite(h)) {
    return {silverman_bandwidth(samples, weights), BandwidthMethod::Silverman};
  }
  return {h, BandwidthMethod::Isj};
}

BandwidthVector pooled_bandwidths(const std::vector<std::vector<double>>& points,
                                  const std::vector<double>& weights,
                                  BandwidthMethod preferred) {
  BandwidthVector out;
  if (points.empty()) return out;
  const std::size_t d = points.front().size();
  // drop zero-weight points so they cannot influence the selection
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (weights[i] > 0.0) keep.push_back(i);
  }
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> col(keep.size()), w(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      col[i] = points[keep[i]][j];
      w[i] = weights[keep[i]];
    }
    if (preferred == BandwidthMethod::Isj) {
      const auto r = isj_bandwidth(col, w);
      out.h.push_back(r.h);
      out.methods.push_back(r.method);
    } else {
      out.h.push_back(silverman_bandwidth(col, w));
      out.methods.push_back(BandwidthMethod::Silverman);
    }
  }
  return out;
}

BandwidthVector pooled_bandwidths(const std::vector<std::vector<double>>& points,
                                  BandwidthMethod preferred) {
  return pooled_bandwidths(points, std::vector<double>(points.size(), 1.0),
                           preferred);
}

KdeComponent::KdeComponent(std::vector<std::vector<double>> points,
                           std::vector<double> weights,
                           BandwidthVector bandwidth)
    : bandwidth_(std::move(bandwidth)) {
  if (points.size() != weights.size())
    throw FitError("kde component: point/weight length mismatch");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (weights[i] < 1e-12) {
      ++dropped_;
      continue;
    }
    if (points[i].size() != bandwidth_.h.size())
      throw FitError("kde component: dimension mismatch");
    points_.push_back(std::move(points[i]));
    weights_.push_back(weights[i]);
    source_index_.push_back(static_cast<int>(i));
    total_weight_ += weights[i];
  }
  if (points_.empty()) throw FitError("empty component");
  log_norm_ = -0.5 * static_cast<double>(bandwidth_.h.size()) *
              std::log(2.0 * kPi);
  for (double h : bandwidth_.h) log_norm_ -= std::log(h);
}

double KdeComponent::log_density(const std::vector<double>& query,
                                 std::optional<int> exclude_id) const {
  if (query.size() != bandwidth_.h.size())
    throw FitError("kde query: dimension mismatch");
  const int n = point_count();
  int excluded_pos = -1;
  if (exclude_id) {
    for (int i = 0; i < n; ++i) {
      if (source_index_[i] == *exclude_id) {
        excluded_pos = i;
        break;
      }
    }
    if (excluded_pos >= 0 && n == 1)
      throw FitError("kde: exclusion leaves no points");
  }
  // log-sum-exp over kernel terms
  double max_term = -INFINITY;
  std::vector<double> terms(n, -INFINITY);
  double wsum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i == excluded_pos) continue;
    double q = 0.0;
    for (std::size_t j = 0; j < query.size(); ++j) {
      const double z = (query[j] - points_[i][j]) / bandwidth_.h[j];
      q += z * z;
    }
    terms[i] = std::log(weights_[i]) - 0.5 * q;
    wsum += weights_[i];
    max_term = std::max(max_term, terms[i]);
  }
  if (!std::isfinite(max_term)) return kLogDensityFloor;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i == excluded_pos) continue;
    acc += std::exp(terms[i] - max_term);
  }
  const double v = max_term + std::log(acc) - std::log(wsum) + log_norm_;
  return std::max(v, kLogDensityFloor);
}

}  // namespace ssme
