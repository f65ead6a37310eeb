#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ssme/core_data.hpp"
#include "ssme/kde.hpp"
#include "ssme/simplex.hpp"

// Semi-supervised KDE mixture over ALR-space scores, fit by EM with
// labeled rows pinned to their true class.
namespace ssme {

struct FitConfig {
  double lambda_u = 1.0;     // weight of unlabeled likelihood contributions
  int max_epochs = 1000;
  double tol = 1e-6;         // early stop on max responsibility change
  std::uint64_t seed = 0;
  bool loo = true;           // leave-one-out density during EM
  double eps_prior = 1e-6;
  double eps_clip = kDefaultEpsClip;
  BandwidthMethod bandwidth_method = BandwidthMethod::Isj;
};

struct ResponsibilityMatrix {
  std::vector<std::vector<double>> gamma;  // n x K, rows sum to 1
  std::vector<bool> fixed;                 // true for labeled rows
};

struct FittedMixture {
  std::vector<double> priors;                 // K entries, sums to 1
  std::vector<std::unique_ptr<KdeComponent>> components;  // one per class
  BandwidthVector bandwidths;
  FitConfig config;
  int epochs_run = 0;
  double final_max_delta = 0.0;
  ResponsibilityMatrix responsibilities;
  int m = 0;
  int k = 0;

  int dimension() const { return m * (k - 1); }
};

// Labeled rows one-hot at the true label; unlabeled rows one-hot at a
// class drawn from the mean-over-classifiers probability row.
ResponsibilityMatrix initialize_responsibilities(const EvaluationDataset& dataset,
                                                 std::uint64_t seed,
                                                 double eps_clip = kDefaultEpsClip);

FittedMixture fit(const EvaluationDataset& dataset, const FitConfig& config);

struct Posterior {
  std::vector<double> probs;
  bool underflow = false;  // all components underflowed; priors returned
};

Posterior posterior(const FittedMixture& model, const ScoreVector& s);

double log_likelihood(const FittedMixture& model, const EvaluationDataset& dataset,
                      double lambda_u);

std::string serialize_mixture(const FittedMixture& model);
FittedMixture deserialize_mixture(const std::string& json_text);

}  // namespace ssme
