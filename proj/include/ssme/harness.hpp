#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssme/core_data.hpp"
#include "ssme/metrics.hpp"
#include "ssme/mixture.hpp"

// Evaluation protocol: repeated labeled/unlabeled splits of a fully
// labeled pool, MAE and rescaled MAE against the held-out remainder,
// confidence intervals, effective sample size, subgroup estimates.
namespace ssme::harness {

struct Split {
  EvaluationDataset estimation;   // n_labeled labeled + n_unlabeled unlabeled
  std::vector<int> hidden_truth;  // true labels of the unlabeled records
  EvaluationDataset evaluation;   // the disjoint remainder, fully labeled
};

// Samples without replacement; resamples (bounded) until every class is
// covered among the labeled block, then swaps one example per missing class.
Split make_split(const EvaluationDataset& pool, int n_labeled, int n_unlabeled,
                 std::uint64_t seed);

struct TrialResult {
  std::string method;
  MetricKind metric = MetricKind::Accuracy;
  int classifier = 0;
  double estimate = 0.0;
  double truth = 0.0;
  double abs_error = 0.0;
  int run = 0;
  int n_labeled = 0;
  int n_unlabeled = 0;
  std::string error;  // nonempty when this trial row failed
};

struct TrialConfig {
  std::vector<std::string> methods = {"labeled", "ssme"};
  int n_labeled = 20;
  int n_unlabeled = 1000;
  int runs = 50;
  std::vector<MetricRequest> requests;
  std::uint64_t master_seed = 0;
  FitConfig fit_config;
  int sample_rounds = kDefaultSampleRounds;
  int threads = 1;
};

std::vector<TrialResult> run_trials(const EvaluationDataset& pool,
                                    const TrialConfig& config);

// mean over runs and classifiers of absolute error
double mae(const std::vector<TrialResult>& results, const std::string& method,
           MetricKind metric);

// mae_method / mae_labeled over seed-matched trials (failures excluded pairwise)
double rescaled_mae(const std::vector<TrialResult>& results,
                    const std::string& method, const std::string& labeled_method,
                    MetricKind metric);

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;  // 1.96 * sd / sqrt(n), sample sd
};

ConfidenceInterval confidence_interval(const std::vector<double>& values);

struct EssCurve {
  std::vector<int> sizes;       // 10..1000 step 5, possibly truncated
  std::vector<double> mean_mae; // labeled-only MAE at each size
};

// 50 runs per size by default, labeled-only estimates scored on the
// evaluation remainder.
EssCurve build_ess_curve(const EvaluationDataset& pool,
                         const std::vector<MetricRequest>& requests,
                         std::uint64_t master_seed, int runs = 50,
                         int max_size = 1000);

// grid size whose labeled-only MAE is closest; ties break to the larger size
int effective_sample_size(double method_mae, const EssCurve& curve);

MetricReport subgroup_estimates(const FittedMixture& model,
                                const EvaluationDataset& dataset,
                                const std::string& group_tag,
                                const std::vector<MetricRequest>& requests,
                                const EstimateOptions& options);

std::string trials_to_csv(const std::vector<TrialResult>& results);

}  // namespace ssme::harness
