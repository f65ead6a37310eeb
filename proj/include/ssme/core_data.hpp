#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssme {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-example M x K matrix of class probabilities, one row per classifier.
struct ProbabilityProfile {
  std::vector<std::vector<double>> values;  // M rows, K columns

  int classifier_count() const { return static_cast<int>(values.size()); }
  int class_count() const {
    return values.empty() ? 0 : static_cast<int>(values.front().size());
  }
};

struct ExampleRecord {
  std::string id;
  ProbabilityProfile profile;
  std::optional<int> label;
  std::optional<std::string> group;
};

struct EvaluationDataset {
  std::vector<ExampleRecord> records;

  int classifier_count() const {
    return records.empty() ? 0 : records.front().profile.classifier_count();
  }
  int class_count() const {
    return records.empty() ? 0 : records.front().profile.class_count();
  }
  int labeled_count() const {
    int n = 0;
    for (const auto& r : records) n += r.label.has_value();
    return n;
  }
  int unlabeled_count() const {
    return static_cast<int>(records.size()) - labeled_count();
  }
};

// Flat ALR-space score vector of length M * (K - 1).
struct ScoreVector {
  std::vector<double> values;
  int m = 0;
  int k = 0;
};

enum class MetricKind { Accuracy, EceBinary, EceTopLabel, Auc, Auprc };

std::string metric_name(MetricKind kind);
MetricKind metric_from_name(const std::string& name);

enum class DataFormat { Jsonl, Csv };

EvaluationDataset load_dataset(const std::string& path, DataFormat format);
void save_dataset(const EvaluationDataset& d, const std::string& path);
EvaluationDataset parse_jsonl(const std::string& content);
std::string serialize_jsonl(const EvaluationDataset& d);

struct ValidationIssue {
  std::string check;
  std::string message;
  bool failure = false;  // false -> warning
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const {
    for (const auto& i : issues)
      if (i.failure) return false;
    return true;
  }
};

ValidationReport validate_dataset(const EvaluationDataset& d);

}  // namespace ssme
