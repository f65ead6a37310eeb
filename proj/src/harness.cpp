#include "ssme/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "ssme/baselines.hpp"
#include "ssme/rng.hpp"

namespace ssme::harness {

namespace {

constexpr std::uint64_t kSplitTag = 0x73706c74;
constexpr std::uint64_t kTrialTag = 0x7472;
constexpr std::uint64_t kEssTag = 0x657373;
constexpr int kSplitRetries = 64;

std::vector<int> sample_without_replacement(int pool_size, int count,
                                            rng::Stream& stream) {
  std::vector<int> indices(pool_size);
  for (int i = 0; i < pool_size; ++i) indices[i] = i;
  for (int i = 0; i < count; ++i) {
    const int j =
        i + static_cast<int>(stream.next_below(static_cast<std::uint64_t>(pool_size - i)));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(count);
  return indices;
}

}  // namespace

Split make_split(const EvaluationDataset& pool, int n_labeled, int n_unlabeled,
                 std::uint64_t seed) {
  const int pool_size = static_cast<int>(pool.records.size());
  const int k = pool.class_count();
  if (n_labeled + n_unlabeled > pool_size)
    throw DataError("make_split: pool too small");
  for (const auto& rec : pool.records) {
    if (!rec.label) throw DataError("make_split: pool must be fully labeled");
  }
  std::vector<bool> class_in_pool(k, false);
  for (const auto& rec : pool.records) class_in_pool[*rec.label] = true;
  for (int c = 0; c < k; ++c) {
    if (!class_in_pool[c])
      throw DataError("make_split: class " + std::to_string(c) +
                      " absent from pool");
  }

  rng::Stream stream(rng::derive(seed, kSplitTag));
  std::vector<int> selection;
  const auto labeled_covers_all = [&](const std::vector<int>& sel) {
    std::vector<bool> seen(k, false);
    for (int i = 0; i < n_labeled; ++i) seen[*pool.records[sel[i]].label] = true;
    for (bool s : seen)
      if (!s) return false;
    return true;
  };
  for (int attempt = 0; attempt < kSplitRetries; ++attempt) {
    selection = sample_without_replacement(pool_size, n_labeled + n_unlabeled,
                                           stream);
    if (n_labeled >= k && labeled_covers_all(selection)) break;
  }
  if (n_labeled >= k && !labeled_covers_all(selection)) {
    // deterministic swap-in of one example per missing class
    std::set<int> selected(selection.begin(), selection.end());
    for (int c = 0; c < k; ++c) {
      bool seen = false;
      for (int i = 0; i < n_labeled; ++i)
        seen |= *pool.records[selection[i]].label == c;
      if (seen) continue;
      int source = -1;
      for (int i = 0; i < pool_size; ++i) {
        if (*pool.records[i].label == c && !selected.count(i)) {
          source = i;
          break;
        }
      }
      if (source < 0) continue;
      // replace the first labeled slot whose class appears more than once
      for (int i = 0; i < n_labeled; ++i) {
        const int cls = *pool.records[selection[i]].label;
        int copies = 0;
        for (int j = 0; j < n_labeled; ++j)
          copies += *pool.records[selection[j]].label == cls;
        if (copies > 1) {
          selected.erase(selection[i]);
          selection[i] = source;
          selected.insert(source);
          break;
        }
      }
    }
  }

  Split split;
  std::set<int> selected(selection.begin(), selection.end());
  for (int i = 0; i < n_labeled + n_unlabeled; ++i) {
    ExampleRecord rec = pool.records[selection[i]];
    if (i >= n_labeled) {
      split.hidden_truth.push_back(*rec.label);
      rec.label.reset();
    }
    split.estimation.records.push_back(std::move(rec));
  }
  for (int i = 0; i < pool_size; ++i) {
    if (!selected.count(i)) split.evaluation.records.push_back(pool.records[i]);
  }
  return split;
}

std::vector<TrialResult> run_trials(const EvaluationDataset& pool,
                                    const TrialConfig& config) {
  if (config.n_labeled + config.n_unlabeled >=
      static_cast<int>(pool.records.size()))
    throw DataError("run_trials: estimation and evaluation splits must be disjoint");

  std::vector<TrialResult> results;
  for (int run = 0; run < config.runs; ++run) {
    const std::uint64_t trial_seed =
        rng::derive(config.master_seed, kTrialTag, static_cast<std::uint64_t>(run));
    const auto split =
        make_split(pool, config.n_labeled, config.n_unlabeled, trial_seed);

    std::vector<const ProbabilityProfile*> eval_profiles;
    std::vector<int> eval_labels;
    for (const auto& rec : split.evaluation.records) {
      eval_profiles.push_back(&rec.profile);
      eval_labels.push_back(*rec.label);
    }

    for (const auto& method : config.methods) {
      FitConfig fc = config.fit_config;
      fc.seed = trial_seed;
      EstimateOptions opts;
      opts.seed = trial_seed;
      opts.sample_rounds = config.sample_rounds;
      opts.threads = config.threads;
      try {
        const auto report =
            run_method(method, split.estimation, config.requests, fc, opts);
        for (const auto& est : report.estimates) {
          TrialResult row;
          row.method = method;
          row.metric = est.request.kind;
          row.classifier = est.request.classifier;
          row.run = run;
          row.n_labeled = config.n_labeled;
          row.n_unlabeled = config.n_unlabeled;
          if (est.error) {
            row.error = *est.error;
          } else {
            row.estimate = est.value;
            row.truth = compute_metric(est.request, eval_profiles, eval_labels);
            row.abs_error = std::fabs(row.estimate - row.truth);
          }
          results.push_back(std::move(row));
        }
      } catch (const std::exception& e) {
        for (const auto& req : config.requests) {
          TrialResult row;
          row.method = method;
          row.metric = req.kind;
          row.classifier = req.classifier;
          row.run = run;
          row.n_labeled = config.n_labeled;
          row.n_unlabeled = config.n_unlabeled;
          row.error = e.what();
          results.push_back(std::move(row));
        }
      }
    }
  }
  return results;
}

double mae(const std::vector<TrialResult>& results, const std::string& method,
           MetricKind metric) {
  double total = 0.0;
  int count = 0;
  for (const auto& row : results) {
    if (row.method != method || row.metric != metric || !row.error.empty())
      continue;
    total += row.abs_error;
    ++count;
  }
  if (count == 0) throw MetricError("mae: no successful trials");
  return total / count;
}

double rescaled_mae(const std::vector<TrialResult>& results,
                    const std::string& method, const std::string& labeled_method,
                    MetricKind metric) {
  // seed sets where each side succeeded; compare on the intersection
  std::set<int> ok_method, ok_labeled, failed_method, failed_labeled;
  for (const auto& row : results) {
    if (row.metric != metric) continue;
    if (row.method == method)
      (row.error.empty() ? ok_method : failed_method).insert(row.run);
    if (row.method == labeled_method)
      (row.error.empty() ? ok_labeled : failed_labeled).insert(row.run);
  }
  const auto usable = [&](int run) {
    return ok_method.count(run) && ok_labeled.count(run) &&
           !failed_method.count(run) && !failed_labeled.count(run);
  };
  double sum_m = 0.0, sum_l = 0.0;
  int count_m = 0, count_l = 0;
  for (const auto& row : results) {
    if (row.metric != metric || !row.error.empty() || !usable(row.run)) continue;
    if (row.method == method) {
      sum_m += row.abs_error;
      ++count_m;
    }
    if (row.method == labeled_method) {
      sum_l += row.abs_error;
      ++count_l;
    }
  }
  if (count_m == 0 || count_l == 0)
    throw MetricError("rescaled_mae: no matched trials");
  const double mae_l = sum_l / count_l;
  if (mae_l == 0.0) throw MetricError("degenerate rescaling: labeled MAE is zero");
  return (sum_m / count_m) / mae_l;
}

ConfidenceInterval confidence_interval(const std::vector<double>& values) {
  if (values.size() < 2)
    throw MetricError("confidence_interval: need at least 2 values");
  ConfidenceInterval ci;
  for (double v : values) ci.mean += v;
  ci.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - ci.mean) * (v - ci.mean);
  const double sd = std::sqrt(ss / (static_cast<double>(values.size()) - 1.0));
  ci.half_width = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
  return ci;
}

EssCurve build_ess_curve(const EvaluationDataset& pool,
                         const std::vector<MetricRequest>& requests,
                         std::uint64_t master_seed, int runs, int max_size) {
  EssCurve curve;
  for (int size = 10; size <= max_size; size += 5) {
    if (size >= static_cast<int>(pool.records.size())) break;
    double total = 0.0;
    int count = 0;
    for (int run = 0; run < runs; ++run) {
      const std::uint64_t seed =
          rng::derive(master_seed, kEssTag, static_cast<std::uint64_t>(size),
                      static_cast<std::uint64_t>(run));
      const auto split = make_split(pool, size, 0, seed);
      std::vector<const ProbabilityProfile*> eval_profiles;
      std::vector<int> eval_labels;
      for (const auto& rec : split.evaluation.records) {
        eval_profiles.push_back(&rec.profile);
        eval_labels.push_back(*rec.label);
      }
      EstimateOptions opts;
      opts.seed = seed;
      const auto report = labeled_only(split.estimation, requests, opts);
      for (const auto& est : report.estimates) {
        if (est.error) continue;
        const double truth =
            compute_metric(est.request, eval_profiles, eval_labels);
        total += std::fabs(est.value - truth);
        ++count;
      }
    }
    curve.sizes.push_back(size);
    curve.mean_mae.push_back(count > 0 ? total / count
                                       : std::numeric_limits<double>::quiet_NaN());
  }
  return curve;
}

int effective_sample_size(double method_mae, const EssCurve& curve) {
  if (curve.sizes.empty()) throw MetricError("effective_sample_size: empty curve");
  int best = curve.sizes.front();
  double best_gap = std::fabs(curve.mean_mae.front() - method_mae);
  for (std::size_t i = 1; i < curve.sizes.size(); ++i) {
    const double gap = std::fabs(curve.mean_mae[i] - method_mae);
    if (gap < best_gap || (gap == best_gap && curve.sizes[i] > best)) {
      best = curve.sizes[i];
      best_gap = gap;
    }
  }
  return best;
}

MetricReport subgroup_estimates(const FittedMixture& model,
                                const EvaluationDataset& dataset,
                                const std::string& group_tag,
                                const std::vector<MetricRequest>& requests,
                                const EstimateOptions& options) {
  EstimateOptions opts = options;
  opts.subgroup = group_tag;
  return estimate_metrics(model, dataset, requests, opts);
}

std::string trials_to_csv(const std::vector<TrialResult>& results) {
  std::ostringstream out;
  out.precision(17);
  out << "method,metric,classifier,run,n_labeled,n_unlabeled,estimate,truth,"
         "abs_error,error\n";
  for (const auto& row : results) {
    out << row.method << ',' << metric_name(row.metric) << ',' << row.classifier
        << ',' << row.run << ',' << row.n_labeled << ',' << row.n_unlabeled
        << ',';
    if (row.error.empty()) {
      out << row.estimate << ',' << row.truth << ',' << row.abs_error;
    } else {
      out << ",,";
    }
    out << ',' << row.error << '\n';
  }
  return out.str();
}

}  // namespace ssme::harness
