#include "ssme/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ssme/baselines.hpp"
#include "ssme/rng.hpp"

namespace ssme::synthetic {

namespace {

constexpr std::uint64_t kSeparationTag = 0x736570;
constexpr std::uint64_t kGenerateTag = 0x67656e;
constexpr std::uint64_t kGridTag = 0x677264;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Classifier k reports its true posterior under equal priors: the score
// log-likelihood ratio is c_k s - c_k^2 / 2, so the probability row is the
// calibrated sigmoid of it. This keeps classifier AUC = phi(c_k / sqrt(2))
// and makes threshold-0.5 accuracy equal the closed form phi(c_k / 2).
ExampleRecord make_record(const std::string& id, const std::vector<double>& c,
                          const std::vector<double>& score,
                          std::optional<int> label) {
  ExampleRecord rec;
  rec.id = id;
  for (std::size_t k = 0; k < score.size(); ++k) {
    const double pos =
        sigmoid(c[k] * score[k] - 0.5 * c[k] * c[k]);  // positive class = 1
    rec.profile.values.push_back({1.0 - pos, pos});
  }
  rec.label = label;
  return rec;
}

}  // namespace

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> sample_separation(int d, double target_norm,
                                      double mean_entry, std::uint64_t seed) {
  rng::Stream stream(rng::derive(seed, kSeparationTag));
  std::vector<double> c(d);
  for (double& v : c) {
    v = std::max(mean_entry + 0.2 * stream.next_gaussian(), 0.01);
  }
  double norm = 0.0;
  for (double v : c) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : c) v *= target_norm / norm;
  return c;
}

GeneratedData generate(const SyntheticSpec& spec) {
  const int d = static_cast<int>(spec.c.size());
  GeneratedData out;
  rng::Stream stream(rng::derive(spec.seed, kGenerateTag));

  const auto draw = [&](int label) {
    std::vector<double> s(d);
    for (int t = 0; t < d; ++t) {
      s[t] = stream.next_gaussian() + (label == 1 ? spec.c[t] : 0.0);
    }
    return s;
  };

  // estimation split: labeled block first, unlabeled after
  std::vector<int> labels(spec.n_labeled + spec.n_unlabeled);
  for (int& y : labels) y = stream.next_double() < 0.5 ? 1 : 0;
  // guarantee both classes among the labeled block
  if (spec.n_labeled >= 2) {
    bool has[2] = {false, false};
    for (int i = 0; i < spec.n_labeled; ++i) has[labels[i]] = true;
    if (!has[0]) labels[0] = 0;
    if (!has[1]) labels[spec.n_labeled >= 2 ? 1 : 0] = 1;
  }
  for (int i = 0; i < spec.n_labeled + spec.n_unlabeled; ++i) {
    const auto s = draw(labels[i]);
    const bool is_labeled = i < spec.n_labeled;
    out.estimation.records.push_back(make_record(
        "est-" + std::to_string(i), spec.c, s,
        is_labeled ? std::optional<int>(labels[i]) : std::nullopt));
    if (!is_labeled) out.hidden_truth.push_back(labels[i]);
  }

  for (int i = 0; i < spec.n_eval; ++i) {
    const int y = stream.next_double() < 0.5 ? 1 : 0;
    out.evaluation.records.push_back(
        make_record("eval-" + std::to_string(i), spec.c, draw(y), y));
  }
  return out;
}

double theoretical_auc(double c_k) { return phi(c_k / std::sqrt(2.0)); }
double theoretical_acc(double c_k) { return phi(c_k / 2.0); }

BoundResult epsilon_bound(const BoundInputs& b) {
  if (b.norm_c <= 0.0) throw FitError("zero separation: bound undefined");
  const double nu = static_cast<double>(b.n_unlabeled);
  const double nl = static_cast<double>(b.n_labeled);
  const double d = static_cast<double>(b.d);
  const double c2 = b.norm_c * b.norm_c;
  const double c4 = c2 * c2;
  const double c6 = c4 * c2;

  BoundResult out;
  const double gate =
      std::max({d, d / c4, std::log(nu) / std::min(c2, c4),
                d * std::log(d * nu) / c6});
  out.assumptions_met = b.d >= 2 && nu >= gate;

  const double first = std::sqrt(d / (c2 * nu));
  const double inner = 1.0 - (b.c0 / c2) * std::sqrt(d * std::log(nu) / (c2 * nu));
  const double second = b.norm_c * std::exp(-0.5 * nl * c2 * inner * inner);
  out.value = (first + second) / b.p;
  return out;
}

double performance_error_band(double c_k, double eps_c, BandMetric metric) {
  const double s = metric == BandMetric::Auc ? std::sqrt(2.0) : 2.0;
  return phi(c_k / s) - phi((c_k - eps_c) / s);
}

bool classifier_gain_condition(double current_norm, int d, double delta) {
  return std::sqrt(current_norm * current_norm + delta * delta) >
         std::sqrt(static_cast<double>(d) + 1.0);
}

std::vector<GridRow> run_grid(const GridSpec& grid, std::uint64_t seed) {
  std::vector<GridRow> rows;
  int cell_index = 0;
  for (double norm : grid.norms) {
    for (int d : grid.dims) {
      for (int n_u : grid.unlabeled_sizes) {
        for (int run = 0; run < grid.runs; ++run) {
          const std::uint64_t cell_seed =
              rng::derive(seed, kGridTag, static_cast<std::uint64_t>(cell_index),
                          static_cast<std::uint64_t>(run));
          SyntheticSpec spec;
          spec.c = sample_separation(d, norm, norm / std::sqrt(d), cell_seed);
          spec.n_labeled = grid.n_labeled;
          spec.n_unlabeled = n_u;
          spec.n_eval = grid.n_eval;
          spec.seed = cell_seed;
          const auto data = generate(spec);

          std::vector<MetricRequest> requests;
          for (MetricKind kind : grid.metrics) {
            for (int j = 0; j < d; ++j) {
              MetricRequest req;
              req.kind = kind;
              req.classifier = j;
              requests.push_back(req);
            }
          }
          // ground truth on the evaluation split
          std::vector<const ProbabilityProfile*> eval_profiles;
          std::vector<int> eval_labels;
          for (const auto& rec : data.evaluation.records) {
            eval_profiles.push_back(&rec.profile);
            eval_labels.push_back(*rec.label);
          }

          for (const auto& method : grid.methods) {
            FitConfig fc;
            fc.seed = cell_seed;
            EstimateOptions opts;
            opts.seed = cell_seed;
            opts.sample_rounds = grid.sample_rounds;
            opts.threads = grid.threads;
            try {
              const auto report =
                  run_method(method, data.estimation, requests, fc, opts);
              for (MetricKind kind : grid.metrics) {
                GridRow row;
                row.norm = norm;
                row.d = d;
                row.n_unlabeled = n_u;
                row.run = run;
                row.method = method;
                row.metric = kind;
                double total = 0.0;
                int count = 0;
                for (const auto& est : report.estimates) {
                  if (est.request.kind != kind || est.error) continue;
                  const double truth = compute_metric(est.request, eval_profiles,
                                                      eval_labels);
                  total += std::fabs(est.value - truth);
                  ++count;
                }
                if (count == 0) {
                  row.error = "no estimable classifier";
                } else {
                  row.mae = total / count;
                }
                rows.push_back(std::move(row));
              }
            } catch (const std::exception& e) {
              GridRow row;
              row.norm = norm;
              row.d = d;
              row.n_unlabeled = n_u;
              row.run = run;
              row.method = method;
              row.error = e.what();
              rows.push_back(std::move(row));
            }
          }
        }
        ++cell_index;
      }
    }
  }
  return rows;
}

std::string grid_to_csv(const std::vector<GridRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "norm,d,n_unlabeled,run,method,metric,mae,error\n";
  for (const auto& row : rows) {
    out << row.norm << ',' << row.d << ',' << row.n_unlabeled << ',' << row.run
        << ',' << row.method << ',' << metric_name(row.metric) << ',';
    if (row.error.empty()) out << row.mae;
    out << ',' << row.error << '\n';
  }
  return out.str();
}

}  // namespace ssme::synthetic
