#include "ssme/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "ssme/rng.hpp"

namespace ssme {

namespace {

constexpr std::uint64_t kRoundTag = 0x726e64;

int argmax_lowest(const std::vector<double>& row) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(row.size()); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

// right-closed equal-width bins of [0, 1]; 0 lands in the first bin
int bin_index(double v, int bins) {
  if (v <= 0.0) return 0;
  int b = static_cast<int>(std::ceil(v * bins)) - 1;
  return std::clamp(b, 0, bins - 1);
}

}  // namespace

double accuracy(const std::vector<std::vector<double>>& scores,
                const std::vector<int>& labels, double threshold) {
  if (scores.empty() || scores.size() != labels.size())
    throw MetricError("accuracy: empty or mismatched input");
  const int k = static_cast<int>(scores.front().size());
  int correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    int pred;
    if (k == 2) {
      pred = scores[i][1] > threshold ? 1 : 0;
    } else {
      pred = argmax_lowest(scores[i]);
    }
    correct += pred == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double ece_binary(const std::vector<double>& positive_scores,
                  const std::vector<int>& labels, int bin_count) {
  if (positive_scores.empty() || positive_scores.size() != labels.size())
    throw MetricError("ece: empty or mismatched input");
  std::vector<double> score_sum(bin_count, 0.0), label_sum(bin_count, 0.0);
  std::vector<int> count(bin_count, 0);
  for (std::size_t i = 0; i < positive_scores.size(); ++i) {
    const int b = bin_index(positive_scores[i], bin_count);
    score_sum[b] += positive_scores[i];
    label_sum[b] += labels[i];
    ++count[b];
  }
  const double n = static_cast<double>(positive_scores.size());
  double ece = 0.0;
  for (int b = 0; b < bin_count; ++b) {
    if (count[b] == 0) continue;
    const double gap = label_sum[b] / count[b] - score_sum[b] / count[b];
    ece += (count[b] / n) * std::fabs(gap);
  }
  return ece;
}

double ece_top_label(const std::vector<std::vector<double>>& profiles,
                     const std::vector<int>& labels, int bin_count) {
  if (profiles.empty() || profiles.size() != labels.size())
    throw MetricError("ece_top_label: empty or mismatched input");
  std::vector<double> conf_sum(bin_count, 0.0), hit_sum(bin_count, 0.0);
  std::vector<int> count(bin_count, 0);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const int pred = argmax_lowest(profiles[i]);
    const double conf = profiles[i][pred];
    const int b = bin_index(conf, bin_count);
    conf_sum[b] += conf;
    hit_sum[b] += pred == labels[i];
    ++count[b];
  }
  const double n = static_cast<double>(profiles.size());
  double ece = 0.0;
  for (int b = 0; b < bin_count; ++b) {
    if (count[b] == 0) continue;
    ece += (count[b] / n) * std::fabs(hit_sum[b] / count[b] - conf_sum[b] / count[b]);
  }
  return ece;
}

double auc(const std::vector<double>& positive_scores,
           const std::vector<int>& labels) {
  if (positive_scores.empty() || positive_scores.size() != labels.size())
    throw MetricError("auc: empty or mismatched input");
  const std::size_t n = positive_scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y == 1;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("undefined metric: auc");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return positive_scores[a] < positive_scores[b];
  });
  // rank-sum with average ranks over ties
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n &&
           positive_scores[order[j + 1]] == positive_scores[order[i]])
      ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] == 1) pos_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double u = pos_rank_sum -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(const std::vector<double>& positive_scores,
             const std::vector<int>& labels) {
  if (positive_scores.empty() || positive_scores.size() != labels.size())
    throw MetricError("auprc: empty or mismatched input");
  const std::size_t n = positive_scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y == 1;
  if (n_pos == 0) throw MetricError("undefined metric: auprc");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return positive_scores[a] > positive_scores[b];
  });
  double ap = 0.0;
  double tp = 0.0, fp = 0.0, prev_recall = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n &&
           positive_scores[order[j + 1]] == positive_scores[order[i]])
      ++j;
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] == 1) tp += 1.0;
      else fp += 1.0;
    }
    const double recall = tp / static_cast<double>(n_pos);
    const double precision = tp / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return ap;
}

double compute_metric(const MetricRequest& req,
                      const std::vector<const ProbabilityProfile*>& profiles,
                      const std::vector<int>& labels) {
  if (profiles.empty()) throw MetricError("empty input");
  const int j = req.classifier;
  const int k = profiles.front()->class_count();
  if (j < 0 || j >= profiles.front()->classifier_count())
    throw MetricError("classifier index out of range");

  switch (req.kind) {
    case MetricKind::Accuracy: {
      std::vector<std::vector<double>> rows;
      rows.reserve(profiles.size());
      for (const auto* p : profiles) rows.push_back(p->values[j]);
      return accuracy(rows, labels, req.threshold);
    }
    case MetricKind::EceBinary: {
      if (k != 2) throw MetricError("ece requires K = 2");
      std::vector<double> pos;
      pos.reserve(profiles.size());
      for (const auto* p : profiles) pos.push_back(p->values[j][1]);
      return ece_binary(pos, labels, req.bin_count);
    }
    case MetricKind::EceTopLabel: {
      std::vector<std::vector<double>> rows;
      rows.reserve(profiles.size());
      for (const auto* p : profiles) rows.push_back(p->values[j]);
      return ece_top_label(rows, labels, req.bin_count);
    }
    case MetricKind::Auc: {
      if (k != 2) throw MetricError("auc requires K = 2");
      std::vector<double> pos;
      pos.reserve(profiles.size());
      for (const auto* p : profiles) pos.push_back(p->values[j][1]);
      return auc(pos, labels);
    }
    case MetricKind::Auprc: {
      if (k != 2) throw MetricError("auprc requires K = 2");
      std::vector<double> pos;
      pos.reserve(profiles.size());
      for (const auto* p : profiles) pos.push_back(p->values[j][1]);
      return auprc(pos, labels);
    }
  }
  throw MetricError("unknown metric kind");
}

namespace {

struct SamplerInput {
  std::vector<int> fixed;                          // -1 when stochastic
  std::vector<std::vector<double>> distributions;  // used when fixed < 0
};

MetricReport run_sampler(const EvaluationDataset& dataset,
                         const SamplerInput& input,
                         const std::vector<MetricRequest>& requests,
                         const EstimateOptions& options,
                         const std::string& method) {
  const int n = static_cast<int>(dataset.records.size());
  std::vector<int> members;
  for (int i = 0; i < n; ++i) {
    if (!options.subgroup ||
        (dataset.records[i].group && *dataset.records[i].group == *options.subgroup))
      members.push_back(i);
  }
  if (members.empty()) throw MetricError("empty group");

  std::vector<const ProbabilityProfile*> profiles;
  profiles.reserve(members.size());
  for (int i : members) profiles.push_back(&dataset.records[i].profile);

  bool any_stochastic = false;
  for (int i : members) any_stochastic |= input.fixed[i] < 0;

  MetricReport report;
  report.method = method;
  report.seed = options.seed;
  report.sample_rounds = options.sample_rounds;

  if (!any_stochastic) {
    // no sampling noise path: one exact evaluation
    std::vector<int> labels;
    labels.reserve(members.size());
    for (int i : members) labels.push_back(input.fixed[i]);
    for (const auto& req : requests) {
      MetricEstimate est;
      est.request = req;
      try {
        est.value = compute_metric(req, profiles, labels);
        est.rounds_used = 1;
      } catch (const MetricError& e) {
        est.error = e.what();
      }
      report.estimates.push_back(est);
    }
    return report;
  }

  const int rounds = options.sample_rounds;
  const int n_req = static_cast<int>(requests.size());
  // per (request, round) values; NaN marks an undefined round
  std::vector<std::vector<double>> values(
      n_req, std::vector<double>(rounds, std::nan("")));

  const auto run_round = [&](int r) {
    std::vector<int> labels(members.size());
    for (std::size_t mi = 0; mi < members.size(); ++mi) {
      const int i = members[mi];
      if (input.fixed[i] >= 0) {
        labels[mi] = input.fixed[i];
      } else {
        labels[mi] = rng::categorical_draw(
            input.distributions[i],
            rng::derive(options.seed, kRoundTag, static_cast<std::uint64_t>(r),
                        static_cast<std::uint64_t>(i)));
      }
    }
    for (int q = 0; q < n_req; ++q) {
      try {
        values[q][r] = compute_metric(requests[q], profiles, labels);
      } catch (const MetricError&) {
        // round skipped for this metric
      }
    }
  };

  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    for (int r = 0; r < rounds; ++r) run_round(r);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (int r = t; r < rounds; r += threads) run_round(r);
      });
    }
    for (auto& th : pool) th.join();
  }

  for (int q = 0; q < n_req; ++q) {
    MetricEstimate est;
    est.request = requests[q];
    double sum = 0.0;
    int used = 0;
    for (int r = 0; r < rounds; ++r) {
      if (std::isnan(values[q][r])) continue;
      sum += values[q][r];
      ++used;
    }
    est.rounds_used = used;
    est.skipped_rounds = rounds - used;
    if (used == 0) {
      est.error = "metric unestimable: " + metric_name(requests[q].kind);
    } else {
      est.value = sum / used;
      double ss = 0.0;
      for (int r = 0; r < rounds; ++r) {
        if (std::isnan(values[q][r])) continue;
        const double d = values[q][r] - est.value;
        ss += d * d;
      }
      est.sampling_sd = std::sqrt(ss / used);
    }
    report.estimates.push_back(est);
  }
  return report;
}

}  // namespace

namespace {

// Solve the small symmetric system H x = g by Gaussian elimination with
// partial pivoting. H is row-major p x p.
std::vector<double> solve_small(std::vector<double> H, std::vector<double> g) {
  const int p = static_cast<int>(g.size());
  for (int col = 0; col < p; ++col) {
    int piv = col;
    for (int r = col + 1; r < p; ++r)
      if (std::fabs(H[r * p + col]) > std::fabs(H[piv * p + col])) piv = r;
    if (std::fabs(H[piv * p + col]) < 1e-300) return {};  // singular
    if (piv != col) {
      for (int c = 0; c < p; ++c) std::swap(H[piv * p + c], H[col * p + c]);
      std::swap(g[piv], g[col]);
    }
    for (int r = col + 1; r < p; ++r) {
      const double f = H[r * p + col] / H[col * p + col];
      for (int c = col; c < p; ++c) H[r * p + c] -= f * H[col * p + c];
      g[r] -= f * g[col];
    }
  }
  std::vector<double> x(p, 0.0);
  for (int r = p - 1; r >= 0; --r) {
    double s = g[r];
    for (int c = r + 1; c < p; ++c) s -= H[r * p + c] * x[c];
    x[r] = s / H[r * p + r];
  }
  return x;
}

// Labeled-anchored recalibration of the sampling posterior. The EM
// responsibility field is a kernel-smoothed interpolation of the labeled
// anchors; when the unlabeled pool is much larger than the labeled pool,
// repeated smoothing compresses the posterior toward the class prior even
// though its ranking stays informative. Labels sampled from a compressed
// posterior are nearly independent of the scores, which biases every
// sampled-label metric toward its chance value. The labeled rows are the
// only ground-truth anchor available, so before sampling we fit a
// temperature map on them:
//   z_c = a * log q_c + b_c,  p' = softmax(z),  a >= 1
// Maximum-likelihood calibration systematically under-estimates the slope
// here (the field is noisy relative to its compressed amplitude, a classic
// errors-in-variables attenuation), so instead the slope is chosen so that
// the metrics computed from sampled labels match the metrics computed from
// true labels on the labeled subset: for each candidate slope the offsets
// are fit so the expected class counts match the labeled counts, the
// discrepancy D(a) between expected sampled-label and true-label anchor
// metrics (pairwise AUC per classifier for two classes, top-1 agreement
// otherwise) is evaluated, and the slope minimizing D is kept. Labeled
// rows are scored with leave-one-out posteriors so a row's own kernel mass
// cannot make its anchor trivially consistent. If sharpening does not beat
// the identity slope by more than a noise-floor gate, the posterior is
// left untouched; one-hot posteriors are exact fixed points of the map.
struct RecalMap {
  double a = 1.0;
  std::vector<double> b;  // K entries, last fixed at 0
};

constexpr double kRecalGate = 0.03;  // min D improvement to justify a > 1
constexpr double kRecalGrid[] = {1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0};

std::vector<double> log_probs(const std::vector<double>& q) {
  std::vector<double> x(q.size());
  for (std::size_t c = 0; c < q.size(); ++c)
    x[c] = std::log(std::max(q[c], 1e-300));
  return x;
}

// softmax of a * logq + b (logq may be unnormalized; the shift cancels)
std::vector<double> recal_apply(const RecalMap& map, const std::vector<double>& logq) {
  const int k = static_cast<int>(logq.size());
  std::vector<double> z(k);
  double zmax = -INFINITY;
  for (int c = 0; c < k; ++c) {
    z[c] = map.a * logq[c] + map.b[c];
    zmax = std::max(zmax, z[c]);
  }
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    z[c] = std::exp(z[c] - zmax);
    total += z[c];
  }
  for (int c = 0; c < k; ++c) z[c] /= total;
  return z;
}

// For a fixed slope, fit offsets b so that the expected class counts over
// the labeled rows match the observed counts (damped Newton; the count-
// matching problem is concave). b_{k-1} stays 0.
void fit_offsets(RecalMap& map, const std::vector<std::vector<double>>& logq,
                 const std::vector<double>& counts) {
  const int k = static_cast<int>(counts.size());
  const int p = k - 1;
  if (p <= 0) return;
  std::fill(map.b.begin(), map.b.end(), 0.0);
  for (int it = 0; it < 100; ++it) {
    std::vector<double> f(p, 0.0);
    std::vector<double> jac(static_cast<std::size_t>(p) * p, 0.0);
    for (const auto& lq : logq) {
      const auto g = recal_apply(map, lq);
      for (int c = 0; c < p; ++c) {
        f[c] += g[c];
        for (int d = 0; d < p; ++d)
          jac[c * p + d] += g[c] * ((c == d ? 1.0 : 0.0) - g[d]);
      }
    }
    for (int c = 0; c < p; ++c) f[c] -= counts[c];
    auto step = solve_small(jac, f);
    if (step.empty()) break;
    double norm = 0.0;
    for (double s : step) norm = std::max(norm, std::fabs(s));
    if (norm > 3.0)
      for (double& s : step) s *= 3.0 / norm;
    for (int c = 0; c < p; ++c)
      map.b[c] = std::clamp(map.b[c] - step[c], -30.0, 30.0);
    if (norm < 1e-10) break;
  }
}

// Expected pairwise AUC of score s when each row i is positive with
// probability g[i] (hard labels are the 0/1 special case).
double expected_pair_auc(const std::vector<double>& s, const std::vector<double>& g) {
  const int n = static_cast<int>(s.size());
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double w = g[i] * (1.0 - g[j]);
      den += w;
      if (s[i] > s[j]) num += w;
      else if (s[i] == s[j]) num += 0.5 * w;
    }
  }
  return den > 0.0 ? num / den : 0.5;
}

// Anchor discrepancy: mean over classifiers of |expected sampled-label
// metric - true-label metric| on the labeled subset.
double anchor_discrepancy(const RecalMap& map,
                          const std::vector<std::vector<double>>& logq,
                          const std::vector<int>& labels,
                          const std::vector<const ProbabilityProfile*>& profiles,
                          int k) {
  const int nl = static_cast<int>(labels.size());
  const int m = static_cast<int>(profiles[0]->values.size());
  std::vector<std::vector<double>> g(nl);
  for (int i = 0; i < nl; ++i) g[i] = recal_apply(map, logq[i]);
  double d = 0.0;
  for (int j = 0; j < m; ++j) {
    if (k == 2) {
      std::vector<double> s(nl), soft(nl), hard(nl);
      for (int i = 0; i < nl; ++i) {
        s[i] = profiles[i]->values[j][1];
        soft[i] = g[i][1];
        hard[i] = labels[i] == 1 ? 1.0 : 0.0;
      }
      d += std::fabs(expected_pair_auc(s, soft) - expected_pair_auc(s, hard));
    } else {
      double soft = 0.0, hard = 0.0;
      for (int i = 0; i < nl; ++i) {
        const auto& row = profiles[i]->values[j];
        const int pred = static_cast<int>(
            std::max_element(row.begin(), row.end()) - row.begin());
        soft += g[i][pred];
        hard += pred == labels[i] ? 1.0 : 0.0;
      }
      d += std::fabs(soft - hard) / nl;
    }
  }
  return d / m;
}

RecalMap fit_recal(const std::vector<std::vector<double>>& logq,
                   const std::vector<int>& labels,
                   const std::vector<const ProbabilityProfile*>& profiles, int k) {
  RecalMap best;
  best.b.assign(k, 0.0);
  if (labels.empty() || k < 2) return best;
  std::vector<double> counts(k, 0.0);
  for (int y : labels) counts[y] += 1.0;
  std::vector<RecalMap> maps;
  std::vector<double> disc;
  for (double a : kRecalGrid) {
    RecalMap map;
    map.a = a;
    map.b.assign(k, 0.0);
    fit_offsets(map, logq, counts);
    maps.push_back(map);
    disc.push_back(anchor_discrepancy(map, logq, labels, profiles, k));
  }
  std::size_t pick = 0;
  for (std::size_t t = 1; t < disc.size(); ++t)
    if (disc[t] < disc[pick]) pick = t;
  if (disc[0] - disc[pick] <= kRecalGate) pick = 0;  // sharpening not justified
  return maps[pick];
}

}  // namespace

MetricReport estimate_metrics(const FittedMixture& model,
                              const EvaluationDataset& dataset,
                              const std::vector<MetricRequest>& requests,
                              const EstimateOptions& options) {
  const int n = static_cast<int>(dataset.records.size());
  SamplerInput input;
  input.fixed.assign(n, -1);
  input.distributions.resize(n);
  std::vector<std::vector<double>> labeled_logq;
  std::vector<int> labeled_y;
  std::vector<const ProbabilityProfile*> labeled_profiles;
  bool any_unlabeled = false;
  for (int i = 0; i < n; ++i) {
    if (!dataset.records[i].label) any_unlabeled = true;
  }
  // Row exclusion is only meaningful when this dataset is the one the model
  // was fitted on; require matching size and labeled pattern.
  bool loo_anchors = static_cast<int>(model.responsibilities.fixed.size()) == n;
  for (int i = 0; loo_anchors && i < n; ++i) {
    if (model.responsibilities.fixed[i] != dataset.records[i].label.has_value())
      loo_anchors = false;
  }
  for (int i = 0; i < n; ++i) {
    const auto& rec = dataset.records[i];
    if (rec.label) {
      input.fixed[i] = *rec.label;
      if (any_unlabeled) {
        // leave-one-out anchor: exclude the row's own kernel so the anchor
        // cannot trivially agree with its own label
        const auto s = profile_to_score(rec.profile, model.config.eps_clip);
        std::vector<double> lq(model.k);
        if (loo_anchors) {
          for (int c = 0; c < model.k; ++c)
            lq[c] = std::log(model.priors[c]) +
                    model.components[c]->log_density(s.values, i);
        } else {
          lq = log_probs(posterior(model, s).probs);
        }
        labeled_logq.push_back(std::move(lq));
        labeled_y.push_back(*rec.label);
        labeled_profiles.push_back(&rec.profile);
      }
    } else {
      const auto s = profile_to_score(rec.profile, model.config.eps_clip);
      input.distributions[i] = posterior(model, s).probs;
    }
  }
  if (any_unlabeled && !labeled_y.empty()) {
    const RecalMap map = fit_recal(labeled_logq, labeled_y, labeled_profiles, model.k);
    for (int i = 0; i < n; ++i) {
      if (input.fixed[i] < 0)
        input.distributions[i] = recal_apply(map, log_probs(input.distributions[i]));
    }
  }
  return run_sampler(dataset, input, requests, options, "ssme");
}

namespace {

nlohmann::ordered_json report_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["method"] = report.method;
  j["seed"] = report.seed;
  j["samples"] = report.sample_rounds;
  nlohmann::ordered_json results = nlohmann::ordered_json::array();
  for (const auto& est : report.estimates) {
    nlohmann::ordered_json e;
    e["classifier"] = est.request.classifier;
    e["metric"] = metric_name(est.request.kind);
    e["bin_count"] = est.request.bin_count;
    e["threshold"] = est.request.threshold;
    if (est.error) {
      e["error"] = *est.error;
    } else {
      e["value"] = est.value;
      e["sampling_sd"] = est.sampling_sd;
      e["rounds_used"] = est.rounds_used;
      e["skipped_rounds"] = est.skipped_rounds;
    }
    if (est.fallback) e["fallback"] = true;
    results.push_back(std::move(e));
  }
  j["results"] = std::move(results);
  return j;
}

}  // namespace

std::string report_to_json(const MetricReport& report) {
  return report_json(report).dump(2) + "\n";
}

std::string reports_to_json(const std::vector<MetricReport>& reports) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : reports) j.push_back(report_json(r));
  return j.dump(2) + "\n";
}

MetricReport estimate_with_fixed_labels(const EvaluationDataset& dataset,
                                        const LabelAssignment& assignment,
                                        const std::vector<MetricRequest>& requests,
                                        const EstimateOptions& options) {
  const int n = static_cast<int>(dataset.records.size());
  SamplerInput input;
  if (assignment.is_hard) {
    if (static_cast<int>(assignment.hard.size()) != n)
      throw MetricError("label assignment does not cover all records");
    input.fixed = assignment.hard;
    input.distributions.resize(n);
  } else {
    if (static_cast<int>(assignment.distributions.size()) != n)
      throw MetricError("label assignment does not cover all records");
    input.fixed.assign(n, -1);
    input.distributions = assignment.distributions;
  }
  return run_sampler(dataset, input, requests, options, "fixed");
}

}  // namespace ssme
