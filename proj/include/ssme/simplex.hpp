#pragma once

#include <vector>

#include "ssme/core_data.hpp"

// Additive log-ratio transform between the K-simplex and R^{K-1}.
// The last class is the reference denominator; the inverse is evaluated
// in an overflow-safe form so saturated probabilities stay finite.
namespace ssme {

constexpr double kDefaultEpsClip = 1e-6;

// Floor entries at eps_clip, then renormalize to sum 1.
std::vector<double> clip_simplex(const std::vector<double>& p, double eps_clip);

// s_i = log(p_i / p_K), i < K. Requires strictly positive entries.
std::vector<double> alr(const std::vector<double>& p);

// p_i = exp(s_i) / (1 + sum_k exp(s_k)); overflow-safe.
std::vector<double> alr_inverse(const std::vector<double>& s);

// Concatenate alr(clip(row_m)) over classifiers in row order.
ScoreVector profile_to_score(const ProbabilityProfile& profile,
                             double eps_clip = kDefaultEpsClip);

}  // namespace ssme
