#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ssme/core_data.hpp"

// Weighted multivariate KDE with a product Gaussian kernel and a
// per-dimension bandwidth chosen by the improved Sheather-Jones plug-in
// (Silverman as fallback for small or degenerate samples).
namespace ssme {

enum class BandwidthMethod { Isj, Silverman, Fixed };

std::string bandwidth_method_name(BandwidthMethod m);

struct BandwidthVector {
  std::vector<double> h;                  // one entry per score dimension
  std::vector<BandwidthMethod> methods;   // how each entry was chosen
};

// 1.06 * weighted sd * n_eff^{-1/5}, n_eff = (sum w)^2 / sum w^2.
double silverman_bandwidth(const std::vector<double>& samples,
                           const std::vector<double>& weights);

struct IsjResult {
  double h = 0.0;
  BandwidthMethod method = BandwidthMethod::Isj;  // Silverman when fallback fired
};

// Botev fixed-point plug-in on a dyadic grid of 2^14 bins; falls back to
// Silverman when fewer than 50 effective samples or no root brackets.
IsjResult isj_bandwidth(const std::vector<double>& samples,
                        const std::vector<double>& weights);

// Per-dimension bandwidths for a weighted point cloud (rows = points);
// zero-weight points are excluded from the selection.
BandwidthVector pooled_bandwidths(const std::vector<std::vector<double>>& points,
                                  const std::vector<double>& weights,
                                  BandwidthMethod preferred);
BandwidthVector pooled_bandwidths(const std::vector<std::vector<double>>& points,
                                  BandwidthMethod preferred);

class KdeComponent {
public:
  // Drops points with weight < 1e-12.
  KdeComponent(std::vector<std::vector<double>> points,
               std::vector<double> weights, BandwidthVector bandwidth);

  // log of the weighted mixture-of-kernels density at `query`; when
  // exclude_id is set (an index into the original point array), that point
  // is removed from both sums. Excluding a dropped point is a no-op.
  double log_density(const std::vector<double>& query,
                     std::optional<int> exclude_id = std::nullopt) const;

  int point_count() const { return static_cast<int>(points_.size()); }
  int dropped_count() const { return dropped_; }
  int dimension() const { return static_cast<int>(bandwidth_.h.size()); }
  const std::vector<std::vector<double>>& points() const { return points_; }
  const std::vector<double>& weights() const { return weights_; }
  const BandwidthVector& bandwidth() const { return bandwidth_; }

private:
  std::vector<std::vector<double>> points_;
  std::vector<double> weights_;
  std::vector<int> source_index_;  // position in the pre-drop input arrays
  BandwidthVector bandwidth_;
  double log_norm_ = 0.0;  // -sum log h_j - (d/2) log(2 pi)
  double total_weight_ = 0.0;
  int dropped_ = 0;
};

// Documented floor on log-densities once every kernel term underflows.
constexpr double kLogDensityFloor = -745.0;

}  // namespace ssme
