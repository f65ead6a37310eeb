#pragma once

#include <string>
#include <vector>

#include "ssme/core_data.hpp"
#include "ssme/metrics.hpp"
#include "ssme/mixture.hpp"

// Reference estimators sharing the metric_engine evaluation path:
// labeled-only, pseudo-labeling, Dawid-Skene, accuracy-weighted majority
// vote, and the single-classifier marginal ablation.
namespace ssme {

MetricReport labeled_only(const EvaluationDataset& dataset,
                          const std::vector<MetricRequest>& requests,
                          const EstimateOptions& options);

// Multinomial logistic regression on concatenated raw probability rows,
// L2 regularization strength 1.0 (intercept unpenalized), Newton steps to
// gradient norm <= 1e-6 or 1000 iterations.
struct LinearClassifier {
  std::vector<std::vector<double>> weights;  // K rows, feature columns
  std::vector<double> intercepts;            // K entries
  double reg_strength = 1.0;
  int iterations = 0;
  double final_grad_norm = 0.0;
  std::vector<double> loss_trace;
};

LinearClassifier train_pseudo_label_model(const EvaluationDataset& dataset,
                                          double reg_strength = 1.0,
                                          bool alr_features = false);

MetricReport pseudo_label(const EvaluationDataset& dataset,
                          const std::vector<MetricRequest>& requests,
                          const EstimateOptions& options,
                          double reg_strength = 1.0);

struct ConfusionMatrices {
  // per-annotator K x K row-stochastic matrices: row = true class,
  // column = predicted class
  std::vector<std::vector<std::vector<double>>> matrices;
  std::vector<double> prevalence;
};

struct DawidSkeneResult {
  ConfusionMatrices params;
  std::vector<std::vector<double>> posteriors;  // n x K
  std::vector<double> log_likelihood_trace;
  int iterations = 0;
};

DawidSkeneResult dawid_skene(const EvaluationDataset& dataset,
                             double tol = 1e-5, int max_iter = 100);

MetricReport dawid_skene_report(const EvaluationDataset& dataset,
                                const std::vector<MetricRequest>& requests,
                                const EstimateOptions& options,
                                double tol = 1e-5, int max_iter = 100);

struct MajorityVoteResult {
  std::vector<double> classifier_weights;  // labeled-set accuracy, clamped >= 0
  std::vector<int> labels;                 // per-record hard labels
};

MajorityVoteResult majority_vote(const EvaluationDataset& dataset);

MetricReport majority_vote_report(const EvaluationDataset& dataset,
                                  const std::vector<MetricRequest>& requests,
                                  const EstimateOptions& options);

// Fit the mixture to classifier j's scores only and estimate j's metrics.
MetricReport ssme_marginal(const EvaluationDataset& dataset, int classifier,
                           const FitConfig& fit_config,
                           const std::vector<MetricRequest>& requests,
                           const EstimateOptions& options);

// Dispatch by method tag: ssme, labeled, pl, ds, mv, ssme-m.
MetricReport run_method(const std::string& name, const EvaluationDataset& dataset,
                        const std::vector<MetricRequest>& requests,
                        const FitConfig& fit_config,
                        const EstimateOptions& options);

}  // namespace ssme
