#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssme/core_data.hpp"
#include "ssme/metrics.hpp"
#include "ssme/mixture.hpp"

// Stylized two-Gaussian score model: positive-class scores ~ N(c, I),
// negative-class scores ~ N(0, I), one score dimension per classifier.
// Includes the closed-form performance map, the separation-error bound,
// and the synthetic grid runner.
namespace ssme::synthetic {

// standard normal CDF
double phi(double x);

struct SyntheticSpec {
  std::vector<double> c;  // separation vector, one entry per classifier
  int n_labeled = 20;
  int n_unlabeled = 1000;
  int n_eval = 5000;
  std::uint64_t seed = 0;
};

// Entries ~ Normal(mean_entry, 0.2 sd), floored at 0.01, rescaled to
// ||c|| = target_norm.
std::vector<double> sample_separation(int d, double target_norm,
                                      double mean_entry, std::uint64_t seed);

struct GeneratedData {
  EvaluationDataset estimation;   // n_labeled labeled + n_unlabeled unlabeled
  EvaluationDataset evaluation;   // fully labeled
  std::vector<int> hidden_truth;  // true labels of the unlabeled records
};

GeneratedData generate(const SyntheticSpec& spec);

double theoretical_auc(double c_k);  // phi(c_k / sqrt(2))
double theoretical_acc(double c_k);  // phi(c_k / 2)

struct BoundInputs {
  int n_unlabeled = 0;
  int n_labeled = 0;
  int d = 0;
  double norm_c = 0.0;
  double p = 0.1;
  double c0 = 1.0;
};

struct BoundResult {
  double value = 0.0;
  bool assumptions_met = true;
};

BoundResult epsilon_bound(const BoundInputs& b);

enum class BandMetric { Auc, Acc };
double performance_error_band(double c_k, double eps_c, BandMetric metric);

// Whether adding a classifier with per-dimension separation delta tightens
// the first bound term: sqrt(norm^2 + delta^2) > sqrt(d + 1).
bool classifier_gain_condition(double current_norm, int d, double delta);

struct GridSpec {
  std::vector<double> norms;
  std::vector<int> dims;
  std::vector<int> unlabeled_sizes;
  int n_labeled = 20;
  int runs = 50;
  int n_eval = 5000;
  std::vector<MetricKind> metrics = {MetricKind::Accuracy, MetricKind::EceBinary,
                                     MetricKind::Auc, MetricKind::Auprc};
  std::vector<std::string> methods = {"labeled", "ssme"};
  int sample_rounds = kDefaultSampleRounds;
  int threads = 1;
};

struct GridRow {
  double norm = 0.0;
  int d = 0;
  int n_unlabeled = 0;
  int run = 0;
  std::string method;
  MetricKind metric = MetricKind::Accuracy;
  double mae = 0.0;           // mean over classifiers of |estimate - truth|
  std::string error;          // nonempty when the cell run failed
};

std::vector<GridRow> run_grid(const GridSpec& grid, std::uint64_t seed);

std::string grid_to_csv(const std::vector<GridRow>& rows);

}  // namespace ssme::synthetic
