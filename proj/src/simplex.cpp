#include "ssme/simplex.hpp"

#include <cmath>
#include <stdexcept>

namespace ssme {

std::vector<double> clip_simplex(const std::vector<double>& p, double eps_clip) {
  std::vector<double> out(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = p[i] < eps_clip ? eps_clip : p[i];
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::vector<double> alr(const std::vector<double>& p) {
  const std::size_t k = p.size();
  if (k < 2) throw std::invalid_argument("alr: need at least 2 classes");
  const double ref = p[k - 1];
  if (ref <= 0.0) throw std::domain_error("alr: zero reference entry, clip first");
  std::vector<double> s(k - 1);
  for (std::size_t i = 0; i + 1 < k; ++i) {
    if (p[i] <= 0.0) throw std::domain_error("alr: zero entry, clip first");
    s[i] = std::log(p[i] / ref);
  }
  return s;
}

std::vector<double> alr_inverse(const std::vector<double>& s) {
  // Shift by max(0, s) before exponentiation so large scores saturate
  // instead of overflowing.
  double m = 0.0;
  for (double v : s) m = std::max(m, v);
  double denom = std::exp(-m);  // reference class term
  std::vector<double> p(s.size() + 1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    p[i] = std::exp(s[i] - m);
    denom += p[i];
  }
  for (std::size_t i = 0; i < s.size(); ++i) p[i] /= denom;
  p[s.size()] = std::exp(-m) / denom;
  return p;
}

ScoreVector profile_to_score(const ProbabilityProfile& profile, double eps_clip) {
  ScoreVector out;
  out.m = profile.classifier_count();
  out.k = profile.class_count();
  out.values.reserve(static_cast<std::size_t>(out.m) * (out.k - 1));
  for (const auto& row : profile.values) {
    const auto s = alr(clip_simplex(row, eps_clip));
    out.values.insert(out.values.end(), s.begin(), s.end());
  }
  return out;
}

}  // namespace ssme
