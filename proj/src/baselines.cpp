#include "ssme/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "ssme/simplex.hpp"

namespace ssme {

namespace {

int argmax_lowest(const std::vector<double>& row) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(row.size()); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

// dense solve by Gaussian elimination with partial pivoting
std::vector<double> solve_linear(std::vector<std::vector<double>> a,
                                 std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    if (std::fabs(a[col][col]) < 1e-300)
      throw FitError("singular system in logistic regression solve");
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < n; ++c) acc -= a[r][c] * x[c];
    x[r] = acc / a[r][r];
  }
  return x;
}

std::vector<double> record_features(const ExampleRecord& rec, bool alr_features) {
  std::vector<double> f;
  if (alr_features) {
    const auto s = profile_to_score(rec.profile);
    f = s.values;
  } else {
    for (const auto& row : rec.profile.values)
      f.insert(f.end(), row.begin(), row.end());
  }
  return f;
}

std::vector<double> softmax_probs(const LinearClassifier& model,
                                  const std::vector<double>& features) {
  const int k = static_cast<int>(model.intercepts.size());
  std::vector<double> logits(k);
  for (int c = 0; c < k; ++c) {
    double z = model.intercepts[c];
    for (std::size_t j = 0; j < features.size(); ++j)
      z += model.weights[c][j] * features[j];
    logits[c] = z;
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& z : logits) {
    z = std::exp(z - m);
    total += z;
  }
  for (double& z : logits) z /= total;
  return logits;
}

}  // namespace

MetricReport labeled_only(const EvaluationDataset& dataset,
                          const std::vector<MetricRequest>& requests,
                          const EstimateOptions& options) {
  EvaluationDataset labeled;
  for (const auto& rec : dataset.records) {
    if (rec.label) labeled.records.push_back(rec);
  }
  if (labeled.records.empty()) throw MetricError("labeled_only: no labeled records");
  LabelAssignment assignment;
  for (const auto& rec : labeled.records) assignment.hard.push_back(*rec.label);

  EstimateOptions opts = options;
  bool fallback = false;
  if (options.subgroup) {
    bool any = false;
    for (const auto& rec : labeled.records) {
      if (rec.group && *rec.group == *options.subgroup) any = true;
    }
    if (!any) {
      // no labeled member of the group: estimate as all-labeled performance
      opts.subgroup.reset();
      fallback = true;
    }
  }
  auto report = estimate_with_fixed_labels(labeled, assignment, requests, opts);
  report.method = "labeled";
  if (fallback) {
    for (auto& est : report.estimates) est.fallback = true;
  }
  return report;
}

LinearClassifier train_pseudo_label_model(const EvaluationDataset& dataset,
                                          double reg_strength,
                                          bool alr_features) {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (const auto& rec : dataset.records) {
    if (!rec.label) continue;
    x.push_back(record_features(rec, alr_features));
    y.push_back(*rec.label);
  }
  if (x.empty()) throw FitError("pseudo_label: no labeled records");
  const int k = dataset.class_count();
  {
    std::vector<bool> seen(k, false);
    for (int label : y) seen[label] = true;
    int classes = 0;
    for (bool s : seen) classes += s;
    if (classes < 2) throw FitError("pseudo_label: labeled rows cover one class");
  }
  const int f = static_cast<int>(x.front().size());
  const int n = static_cast<int>(x.size());
  // reference-class parameterization: class K-1 pinned at zero
  const int free_k = k - 1;
  const int p = free_k * (f + 1);  // weights then intercept per class
  std::vector<double> theta(p, 0.0);

  const auto unpack = [&](const std::vector<double>& th) {
    LinearClassifier model;
    model.reg_strength = reg_strength;
    model.weights.assign(k, std::vector<double>(f, 0.0));
    model.intercepts.assign(k, 0.0);
    for (int c = 0; c < free_k; ++c) {
      for (int j = 0; j < f; ++j) model.weights[c][j] = th[c * (f + 1) + j];
      model.intercepts[c] = th[c * (f + 1) + f];
    }
    return model;
  };

  const auto loss_of = [&](const std::vector<double>& th) {
    const auto model = unpack(th);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto probs = softmax_probs(model, x[i]);
      loss -= std::log(std::max(probs[y[i]], 1e-300));
    }
    for (int c = 0; c < free_k; ++c) {
      for (int j = 0; j < f; ++j) {
        const double w = th[c * (f + 1) + j];
        loss += 0.5 * reg_strength * w * w;
      }
    }
    return loss;
  };

  LinearClassifier model = unpack(theta);
  double loss = loss_of(theta);
  model.loss_trace.push_back(loss);
  double grad_norm = 0.0;

  for (int iter = 0; iter < 1000; ++iter) {
    // gradient and Hessian of the multinomial log loss
    std::vector<double> grad(p, 0.0);
    std::vector<std::vector<double>> hess(p, std::vector<double>(p, 0.0));
    for (int i = 0; i < n; ++i) {
      const auto probs = softmax_probs(model, x[i]);
      std::vector<double> xi = x[i];
      xi.push_back(1.0);  // intercept column
      for (int a = 0; a < free_k; ++a) {
        const double ra = probs[a] - (y[i] == a ? 1.0 : 0.0);
        for (int j = 0; j <= f; ++j) grad[a * (f + 1) + j] += ra * xi[j];
        for (int b = 0; b < free_k; ++b) {
          const double w = probs[a] * ((a == b ? 1.0 : 0.0) - probs[b]);
          if (w == 0.0) continue;
          for (int j1 = 0; j1 <= f; ++j1) {
            const double wj1 = w * xi[j1];
            for (int j2 = 0; j2 <= f; ++j2)
              hess[a * (f + 1) + j1][b * (f + 1) + j2] += wj1 * xi[j2];
          }
        }
      }
    }
    for (int c = 0; c < free_k; ++c) {
      for (int j = 0; j < f; ++j) {
        grad[c * (f + 1) + j] += reg_strength * theta[c * (f + 1) + j];
        hess[c * (f + 1) + j][c * (f + 1) + j] += reg_strength;
      }
    }
    for (int q = 0; q < p; ++q) hess[q][q] += 1e-10;

    grad_norm = 0.0;
    for (double g : grad) grad_norm += g * g;
    grad_norm = std::sqrt(grad_norm);
    if (grad_norm <= 1e-6) {
      model.iterations = iter;
      break;
    }

    const auto step = solve_linear(hess, grad);
    double alpha = 1.0;
    std::vector<double> candidate(p);
    double new_loss = loss;
    for (int ls = 0; ls < 40; ++ls) {
      for (int q = 0; q < p; ++q) candidate[q] = theta[q] - alpha * step[q];
      new_loss = loss_of(candidate);
      if (new_loss <= loss) break;
      alpha *= 0.5;
    }
    theta = candidate;
    loss = new_loss;
    auto trace = std::move(model.loss_trace);
    model = unpack(theta);
    model.loss_trace = std::move(trace);
    model.loss_trace.push_back(loss);
    model.iterations = iter + 1;
  }
  model.final_grad_norm = grad_norm;
  return model;
}

MetricReport pseudo_label(const EvaluationDataset& dataset,
                          const std::vector<MetricRequest>& requests,
                          const EstimateOptions& options, double reg_strength) {
  const auto model = train_pseudo_label_model(dataset, reg_strength);
  LabelAssignment assignment;
  for (const auto& rec : dataset.records) {
    if (rec.label) {
      assignment.hard.push_back(*rec.label);
    } else {
      const auto probs = softmax_probs(model, record_features(rec, false));
      assignment.hard.push_back(argmax_lowest(probs));
    }
  }
  auto report = estimate_with_fixed_labels(dataset, assignment, requests, options);
  report.method = "pl";
  return report;
}

DawidSkeneResult dawid_skene(const EvaluationDataset& dataset, double tol,
                             int max_iter) {
  const int n = static_cast<int>(dataset.records.size());
  const int m = dataset.classifier_count();
  const int k = dataset.class_count();
  if (n == 0) throw FitError("dawid_skene: empty dataset");

  // discrete votes by argmax
  std::vector<std::vector<int>> votes(n, std::vector<int>(m));
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < m; ++a)
      votes[i][a] = argmax_lowest(dataset.records[i].profile.values[a]);
  }

  // prevalence from labeled empirical frequencies
  std::vector<double> prevalence(k, 0.0);
  int n_l = 0;
  for (const auto& rec : dataset.records) {
    if (rec.label) {
      prevalence[*rec.label] += 1.0;
      ++n_l;
    }
  }
  if (n_l > 0) {
    for (double& p : prevalence) p /= n_l;
  } else {
    std::fill(prevalence.begin(), prevalence.end(), 1.0 / k);
  }
  for (double& p : prevalence) p = std::max(p, 1e-6);
  {
    double total = 0.0;
    for (double p : prevalence) total += p;
    for (double& p : prevalence) p /= total;
  }

  // confusion matrices initialized from agreement with plain majority vote
  std::vector<int> mv(n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> tally(k, 0.0);
    for (int a = 0; a < m; ++a) tally[votes[i][a]] += 1.0;
    mv[i] = argmax_lowest(tally);
  }
  std::vector<std::vector<std::vector<double>>> confusion(
      m, std::vector<std::vector<double>>(k, std::vector<double>(k, 1.0)));
  for (int i = 0; i < n; ++i) {
    const int truth = dataset.records[i].label ? *dataset.records[i].label : mv[i];
    for (int a = 0; a < m; ++a) confusion[a][truth][votes[i][a]] += 1.0;
  }
  for (int a = 0; a < m; ++a) {
    for (int t = 0; t < k; ++t) {
      double total = 0.0;
      for (int c = 0; c < k; ++c) total += confusion[a][t][c];
      for (int c = 0; c < k; ++c) confusion[a][t][c] /= total;
    }
  }

  std::vector<std::vector<double>> post(n, std::vector<double>(k, 0.0));
  DawidSkeneResult result;

  const auto observed_ll = [&]() {
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      if (dataset.records[i].label) {
        const int y = *dataset.records[i].label;
        double term = std::log(prevalence[y]);
        for (int a = 0; a < m; ++a)
          term += std::log(std::max(confusion[a][y][votes[i][a]], 1e-300));
        ll += term;
      } else {
        double total = 0.0;
        for (int c = 0; c < k; ++c) {
          double term = prevalence[c];
          for (int a = 0; a < m; ++a) term *= confusion[a][c][votes[i][a]];
          total += term;
        }
        ll += std::log(std::max(total, 1e-300));
      }
    }
    return ll;
  };

  int iter = 0;
  for (iter = 0; iter < max_iter; ++iter) {
    // E-step, labeled rows pinned
    double max_delta = 0.0;
    for (int i = 0; i < n; ++i) {
      std::vector<double> next(k, 0.0);
      if (dataset.records[i].label) {
        next[*dataset.records[i].label] = 1.0;
      } else {
        double total = 0.0;
        for (int c = 0; c < k; ++c) {
          double term = prevalence[c];
          for (int a = 0; a < m; ++a) term *= confusion[a][c][votes[i][a]];
          next[c] = term;
          total += term;
        }
        if (total <= 0.0) {
          next = prevalence;
        } else {
          for (double& v : next) v /= total;
        }
      }
      for (int c = 0; c < k; ++c)
        max_delta = std::max(max_delta, std::fabs(next[c] - post[i][c]));
      post[i] = std::move(next);
    }
    result.log_likelihood_trace.push_back(observed_ll());

    // M-step
    std::vector<double> counts(k, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < k; ++c) counts[c] += post[i][c];
    }
    for (int c = 0; c < k; ++c) prevalence[c] = std::max(counts[c] / n, 1e-12);
    {
      double total = 0.0;
      for (double p : prevalence) total += p;
      for (double& p : prevalence) p /= total;
    }
    for (int a = 0; a < m; ++a) {
      for (int t = 0; t < k; ++t) {
        std::vector<double> row(k, 1e-12);
        double total = k * 1e-12;
        for (int i = 0; i < n; ++i) {
          row[votes[i][a]] += post[i][t];
          total += post[i][t];
        }
        for (int c = 0; c < k; ++c) confusion[a][t][c] = row[c] / total;
      }
    }
    if (iter > 0 && max_delta < tol) {
      ++iter;
      break;
    }
  }

  result.params.matrices = std::move(confusion);
  result.params.prevalence = std::move(prevalence);
  result.posteriors = std::move(post);
  result.iterations = iter;
  return result;
}

MetricReport dawid_skene_report(const EvaluationDataset& dataset,
                                const std::vector<MetricRequest>& requests,
                                const EstimateOptions& options, double tol,
                                int max_iter) {
  const auto ds = dawid_skene(dataset, tol, max_iter);
  LabelAssignment assignment;
  assignment.is_hard = false;
  assignment.distributions = ds.posteriors;
  auto report = estimate_with_fixed_labels(dataset, assignment, requests, options);
  report.method = "ds";
  return report;
}

MajorityVoteResult majority_vote(const EvaluationDataset& dataset) {
  const int n = static_cast<int>(dataset.records.size());
  const int m = dataset.classifier_count();
  const int k = dataset.class_count();
  if (dataset.labeled_count() < 1)
    throw FitError("majority_vote: needs labeled records for weights");

  MajorityVoteResult result;
  result.classifier_weights.assign(m, 0.0);
  for (int a = 0; a < m; ++a) {
    int correct = 0, total = 0;
    for (const auto& rec : dataset.records) {
      if (!rec.label) continue;
      ++total;
      correct += argmax_lowest(rec.profile.values[a]) == *rec.label;
    }
    result.classifier_weights[a] =
        std::max(0.0, static_cast<double>(correct) / total);
  }

  result.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& rec = dataset.records[i];
    if (rec.label) {
      result.labels[i] = *rec.label;
      continue;
    }
    std::vector<double> tally(k, 0.0);
    for (int a = 0; a < m; ++a) {
      tally[argmax_lowest(rec.profile.values[a])] += result.classifier_weights[a];
    }
    result.labels[i] = argmax_lowest(tally);
  }
  return result;
}

MetricReport majority_vote_report(const EvaluationDataset& dataset,
                                  const std::vector<MetricRequest>& requests,
                                  const EstimateOptions& options) {
  const auto mv = majority_vote(dataset);
  LabelAssignment assignment;
  assignment.hard = mv.labels;
  auto report = estimate_with_fixed_labels(dataset, assignment, requests, options);
  report.method = "mv";
  return report;
}

MetricReport ssme_marginal(const EvaluationDataset& dataset, int classifier,
                           const FitConfig& fit_config,
                           const std::vector<MetricRequest>& requests,
                           const EstimateOptions& options) {
  if (classifier < 0 || classifier >= dataset.classifier_count())
    throw FitError("ssme_marginal: classifier index out of range");
  EvaluationDataset marginal;
  for (const auto& rec : dataset.records) {
    ExampleRecord r = rec;
    r.profile.values = {rec.profile.values[classifier]};
    marginal.records.push_back(std::move(r));
  }
  std::vector<MetricRequest> marginal_requests = requests;
  for (auto& req : marginal_requests) req.classifier = 0;

  const auto model = fit(marginal, fit_config);
  auto report = estimate_metrics(model, marginal, marginal_requests, options);
  report.method = "ssme-m";
  for (auto& est : report.estimates) est.request.classifier = classifier;
  return report;
}

MetricReport run_method(const std::string& name, const EvaluationDataset& dataset,
                        const std::vector<MetricRequest>& requests,
                        const FitConfig& fit_config,
                        const EstimateOptions& options) {
  if (name == "ssme") {
    const auto model = fit(dataset, fit_config);
    return estimate_metrics(model, dataset, requests, options);
  }
  if (name == "labeled") return labeled_only(dataset, requests, options);
  if (name == "pl") return pseudo_label(dataset, requests, options);
  if (name == "ds") return dawid_skene_report(dataset, requests, options);
  if (name == "mv") return majority_vote_report(dataset, requests, options);
  if (name == "ssme-m") {
    // one marginal fit per distinct classifier index in the requests
    MetricReport merged;
    merged.method = "ssme-m";
    merged.seed = options.seed;
    merged.sample_rounds = options.sample_rounds;
    std::vector<int> classifiers;
    for (const auto& req : requests) {
      if (std::find(classifiers.begin(), classifiers.end(), req.classifier) ==
          classifiers.end())
        classifiers.push_back(req.classifier);
    }
    for (int j : classifiers) {
      std::vector<MetricRequest> subset;
      for (const auto& req : requests) {
        if (req.classifier == j) subset.push_back(req);
      }
      auto part = ssme_marginal(dataset, j, fit_config, subset, options);
      for (auto& est : part.estimates) merged.estimates.push_back(std::move(est));
    }
    return merged;
  }
  throw DataError("unknown method: " + name);
}

}  // namespace ssme
