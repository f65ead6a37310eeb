#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssme/core_data.hpp"
#include "ssme/mixture.hpp"

// Performance metrics on (scores, labels) and the sampling-based
// estimator over a fitted mixture: per round, draw a label for every
// unlabeled record from its posterior, score the union with the labeled
// records, and average over rounds.
namespace ssme {

struct MetricRequest {
  MetricKind kind = MetricKind::Accuracy;
  int classifier = 0;
  int bin_count = 10;
  double threshold = 0.5;
};

struct MetricEstimate {
  MetricRequest request;
  double value = 0.0;
  double sampling_sd = 0.0;
  int rounds_used = 0;
  int skipped_rounds = 0;
  std::optional<std::string> error;
  bool fallback = false;  // subgroup fell back to all-labeled estimate
};

struct MetricReport {
  std::string method;
  std::uint64_t seed = 0;
  int sample_rounds = 0;
  std::vector<MetricEstimate> estimates;
};

constexpr int kDefaultSampleRounds = 500;

// Binary uses strict p > t for the positive class; multiclass argmax with
// lowest-index tie break.
double accuracy(const std::vector<std::vector<double>>& scores,
                const std::vector<int>& labels, double threshold = 0.5);

double ece_binary(const std::vector<double>& positive_scores,
                  const std::vector<int>& labels, int bin_count = 10);

double ece_top_label(const std::vector<std::vector<double>>& profiles,
                     const std::vector<int>& labels, int bin_count = 10);

// Mann-Whitney with half credit for ties.
double auc(const std::vector<double>& positive_scores,
           const std::vector<int>& labels);

// Average precision with tied scores entering together.
double auprc(const std::vector<double>& positive_scores,
             const std::vector<int>& labels);

double compute_metric(const MetricRequest& req,
                      const std::vector<const ProbabilityProfile*>& profiles,
                      const std::vector<int>& labels);

struct EstimateOptions {
  int sample_rounds = kDefaultSampleRounds;
  std::uint64_t seed = 0;
  int threads = 1;
  // restrict metric computation to records carrying this group tag
  std::optional<std::string> subgroup;
};

MetricReport estimate_metrics(const FittedMixture& model,
                              const EvaluationDataset& dataset,
                              const std::vector<MetricRequest>& requests,
                              const EstimateOptions& options);

// Shared evaluation path for baselines: hard labels evaluate once,
// distributions go through the same S-round sampler.
struct LabelAssignment {
  std::vector<int> hard;                          // one per record, or
  std::vector<std::vector<double>> distributions; // one per record
  bool is_hard = true;
};

MetricReport estimate_with_fixed_labels(const EvaluationDataset& dataset,
                                        const LabelAssignment& assignment,
                                        const std::vector<MetricRequest>& requests,
                                        const EstimateOptions& options);

// stable JSON schema shared by all methods (docs/metric_report.schema.json)
std::string report_to_json(const MetricReport& report);
std::string reports_to_json(const std::vector<MetricReport>& reports);

}  // namespace ssme
