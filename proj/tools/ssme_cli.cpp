#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssme/baselines.hpp"
#include "ssme/core_data.hpp"
#include "ssme/harness.hpp"
#include "ssme/metrics.hpp"
#include "ssme/mixture.hpp"
#include "ssme/synthetic.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitFit = 3;
constexpr int kExitUnestimable = 4;

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> split_doubles(const std::string& csv) {
  std::vector<double> out;
  for (const auto& s : split_list(csv)) out.push_back(std::stod(s));
  return out;
}

std::vector<int> split_ints(const std::string& csv) {
  std::vector<int> out;
  for (const auto& s : split_list(csv)) out.push_back(std::stoi(s));
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ssme::DataError("cannot write " + path);
  out << content;
}

ssme::EvaluationDataset load(const std::string& path, const std::string& format) {
  ssme::DataFormat fmt = ssme::DataFormat::Jsonl;
  if (format == "csv" ||
      (format == "auto" && path.size() > 4 &&
       path.compare(path.size() - 4, 4, ".csv") == 0)) {
    fmt = ssme::DataFormat::Csv;
  }
  return ssme::load_dataset(path, fmt);
}

std::vector<ssme::MetricRequest> build_requests(const std::string& metrics_csv,
                                                const ssme::EvaluationDataset& d,
                                                int bin_count, double threshold) {
  std::vector<ssme::MetricRequest> requests;
  for (const auto& name : split_list(metrics_csv)) {
    const auto kind = ssme::metric_from_name(name);
    for (int j = 0; j < d.classifier_count(); ++j) {
      ssme::MetricRequest req;
      req.kind = kind;
      req.classifier = j;
      req.bin_count = bin_count;
      req.threshold = threshold;
      requests.push_back(req);
    }
  }
  return requests;
}

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("SSME_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

nlohmann::ordered_json fit_config_json(const ssme::FitConfig& fc) {
  nlohmann::ordered_json j;
  j["lambda_u"] = fc.lambda_u;
  j["max_epochs"] = fc.max_epochs;
  j["tol"] = fc.tol;
  j["seed"] = fc.seed;
  j["loo"] = fc.loo;
  j["eps_prior"] = fc.eps_prior;
  j["eps_clip"] = fc.eps_clip;
  j["bandwidth_method"] = ssme::bandwidth_method_name(fc.bandwidth_method);
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised classifier performance estimation"};
  app.require_subcommand(1);

  // shared flags
  std::uint64_t seed = 0;
  int threads = 0;

  // ---- fit ----
  auto* cmd_fit = app.add_subcommand("fit", "Fit the mixture model to a dataset");
  std::string fit_input, fit_format = "auto", fit_out = "model.json";
  ssme::FitConfig fit_cfg;
  std::string fit_bw = "isj";
  bool no_loo = false;
  cmd_fit->add_option("--input", fit_input, "dataset path")->required();
  cmd_fit->add_option("--format", fit_format, "jsonl|csv|auto");
  cmd_fit->add_option("--out", fit_out, "output model path");
  cmd_fit->add_option("--seed", seed, "master seed");
  cmd_fit->add_option("--lambda-u", fit_cfg.lambda_u, "unlabeled weight");
  cmd_fit->add_option("--max-epochs", fit_cfg.max_epochs, "EM epoch cap");
  cmd_fit->add_option("--tol", fit_cfg.tol, "early-stop threshold");
  cmd_fit->add_option("--eps-clip", fit_cfg.eps_clip, "simplex clip floor");
  cmd_fit->add_option("--eps-prior", fit_cfg.eps_prior, "prior floor");
  cmd_fit->add_option("--bandwidth", fit_bw, "isj|silverman");
  cmd_fit->add_flag("--no-loo", no_loo, "disable leave-one-out EM densities");

  // ---- estimate ----
  auto* cmd_est = app.add_subcommand("estimate", "Estimate classifier metrics");
  std::string est_dataset, est_model, est_format = "auto";
  std::string est_metrics = "acc,ece,auc,auprc";
  std::string est_methods = "ssme";
  std::string est_out, est_subgroup;
  int est_samples = ssme::kDefaultSampleRounds;
  int est_bins = 10;
  double est_threshold = 0.5;
  ssme::FitConfig est_fit_cfg;
  cmd_est->add_option("--dataset", est_dataset, "dataset path")->required();
  cmd_est->add_option("--model", est_model, "fitted model path (refit if absent)");
  cmd_est->add_option("--format", est_format, "jsonl|csv|auto");
  cmd_est->add_option("--metrics", est_metrics, "comma list: acc,ece,ece-top,auc,auprc");
  cmd_est->add_option("--methods", est_methods, "comma list: ssme,labeled,pl,ds,mv,ssme-m");
  cmd_est->add_option("--samples", est_samples, "sampling rounds S");
  cmd_est->add_option("--bins", est_bins, "ECE bin count");
  cmd_est->add_option("--threshold", est_threshold, "binary accuracy threshold");
  cmd_est->add_option("--seed", seed, "master seed");
  cmd_est->add_option("--threads", threads, "worker threads");
  cmd_est->add_option("--subgroup", est_subgroup, "restrict metrics to a group tag");
  cmd_est->add_option("--out", est_out, "output report path (stdout if absent)");
  cmd_est->add_option("--lambda-u", est_fit_cfg.lambda_u, "unlabeled weight");
  cmd_est->add_option("--max-epochs", est_fit_cfg.max_epochs, "EM epoch cap");

  // ---- synth ----
  auto* cmd_synth = app.add_subcommand("synth", "Synthetic grids and bounds");
  std::string synth_norms = "1.0", synth_dims = "2", synth_nu = "1000";
  std::string synth_methods = "labeled,ssme";
  std::string synth_out, synth_summary;
  int synth_runs = 50, synth_nl = 20, synth_neval = 5000;
  int synth_samples = ssme::kDefaultSampleRounds;
  bool bound_only = false;
  double bound_norm = 1.0, bound_p = 0.1, bound_c0 = 1.0;
  int bound_nu = 1000, bound_nl = 20, bound_d = 2;
  cmd_synth->add_option("--norms", synth_norms, "separation norms, comma list");
  cmd_synth->add_option("--dims", synth_dims, "classifier counts, comma list");
  cmd_synth->add_option("--nu", synth_nu, "unlabeled sizes, comma list");
  cmd_synth->add_option("--nl", synth_nl, "labeled size");
  cmd_synth->add_option("--neval", synth_neval, "evaluation split size");
  cmd_synth->add_option("--runs", synth_runs, "datasets per cell");
  cmd_synth->add_option("--methods", synth_methods, "methods, comma list");
  cmd_synth->add_option("--samples", synth_samples, "sampling rounds S");
  cmd_synth->add_option("--seed", seed, "master seed");
  cmd_synth->add_option("--threads", threads, "worker threads");
  cmd_synth->add_option("--out", synth_out, "results CSV path");
  cmd_synth->add_option("--summary", synth_summary, "JSON summary path");
  cmd_synth->add_flag("--bound-only", bound_only, "print the separation-error bound");
  cmd_synth->add_option("--norm", bound_norm, "bound: ||c||");
  cmd_synth->add_option("--p", bound_p, "bound: failure probability");
  cmd_synth->add_option("--c0", bound_c0, "bound: universal-constant stand-in");
  cmd_synth->add_option("--bound-nu", bound_nu, "bound: unlabeled count");
  cmd_synth->add_option("--bound-nl", bound_nl, "bound: labeled count");
  cmd_synth->add_option("--d", bound_d, "bound: dimension");

  // ---- ess ----
  auto* cmd_ess = app.add_subcommand("ess", "Effective sample size");
  std::string ess_dataset, ess_format = "auto", ess_out;
  std::string ess_method = "ssme", ess_metric = "acc";
  int ess_nl = 20, ess_nu = 1000, ess_runs = 50, ess_max = 1000;
  int ess_samples = ssme::kDefaultSampleRounds;
  bool allow_truncated = false;
  cmd_ess->add_option("--dataset", ess_dataset, "fully labeled pool path")->required();
  cmd_ess->add_option("--format", ess_format, "jsonl|csv|auto");
  cmd_ess->add_option("--method", ess_method, "method to score");
  cmd_ess->add_option("--metric", ess_metric, "metric for the curve");
  cmd_ess->add_option("--nl", ess_nl, "labeled size for the method");
  cmd_ess->add_option("--nu", ess_nu, "unlabeled size for the method");
  cmd_ess->add_option("--runs", ess_runs, "runs per size");
  cmd_ess->add_option("--samples", ess_samples, "sampling rounds S");
  cmd_ess->add_option("--seed", seed, "master seed");
  cmd_ess->add_option("--threads", threads, "worker threads");
  cmd_ess->add_option("--out", ess_out, "output JSON path (stdout if absent)");
  cmd_ess->add_flag("--allow-truncated", allow_truncated,
                    "accept a pool smaller than the full size grid");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_fit->parsed()) {
      fit_cfg.seed = seed;
      fit_cfg.loo = !no_loo;
      fit_cfg.bandwidth_method = fit_bw == "silverman"
                                     ? ssme::BandwidthMethod::Silverman
                                     : ssme::BandwidthMethod::Isj;
      ssme::EvaluationDataset dataset;
      try {
        dataset = load(fit_input, fit_format);
        const auto report = ssme::validate_dataset(dataset);
        if (!report.ok()) {
          for (const auto& issue : report.issues) {
            if (issue.failure)
              std::cerr << "validation: " << issue.check << ": " << issue.message
                        << "\n";
          }
          return kExitInput;
        }
      } catch (const ssme::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
      }
      try {
        const auto model = ssme::fit(dataset, fit_cfg);
        write_file(fit_out, ssme::serialize_mixture(model));
        std::cerr << "fit: epochs=" << model.epochs_run
                  << " final_max_delta=" << model.final_max_delta << " priors=[";
        for (std::size_t i = 0; i < model.priors.size(); ++i)
          std::cerr << (i ? "," : "") << model.priors[i];
        std::cerr << "]\n";
      } catch (const ssme::FitError& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return kExitFit;
      }
      return kExitOk;
    }

    if (cmd_est->parsed()) {
      ssme::EvaluationDataset dataset;
      try {
        dataset = load(est_dataset, est_format);
      } catch (const ssme::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
      }
      const auto requests =
          build_requests(est_metrics, dataset, est_bins, est_threshold);
      est_fit_cfg.seed = seed;
      ssme::EstimateOptions opts;
      opts.seed = seed;
      opts.sample_rounds = est_samples;
      opts.threads = resolve_threads(threads);
      if (!est_subgroup.empty()) opts.subgroup = est_subgroup;

      std::vector<ssme::MetricReport> reports;
      for (const auto& method : split_list(est_methods)) {
        try {
          if (method == "ssme" && !est_model.empty()) {
            std::ifstream in(est_model);
            if (!in) throw ssme::DataError("cannot open " + est_model);
            std::stringstream buf;
            buf << in.rdbuf();
            const auto model = ssme::deserialize_mixture(buf.str());
            auto report = ssme::estimate_metrics(model, dataset, requests, opts);
            reports.push_back(std::move(report));
          } else {
            reports.push_back(
                ssme::run_method(method, dataset, requests, est_fit_cfg, opts));
          }
        } catch (const ssme::FitError& e) {
          std::cerr << "fit error (" << method << "): " << e.what() << "\n";
          return kExitFit;
        }
      }
      // exit 4 when every requested estimate is unestimable
      bool any_ok = false;
      for (const auto& r : reports) {
        for (const auto& est : r.estimates) any_ok |= !est.error.has_value();
      }
      nlohmann::ordered_json out;
      out["command"] = "estimate";
      out["seed"] = seed;
      out["samples"] = est_samples;
      out["metrics"] = est_metrics;
      out["methods"] = est_methods;
      out["threads"] = opts.threads;
      if (!est_subgroup.empty()) out["subgroup"] = est_subgroup;
      out["fit_config"] = fit_config_json(est_fit_cfg);
      out["reports"] = nlohmann::ordered_json::parse(ssme::reports_to_json(reports));
      const std::string text = out.dump(2) + "\n";
      if (est_out.empty()) std::cout << text;
      else write_file(est_out, text);
      if (!any_ok) {
        std::cerr << "error: all requested metrics unestimable\n";
        return kExitUnestimable;
      }
      return kExitOk;
    }

    if (cmd_synth->parsed()) {
      if (bound_only) {
        ssme::synthetic::BoundInputs b;
        b.n_unlabeled = bound_nu;
        b.n_labeled = bound_nl;
        b.d = bound_d;
        b.norm_c = bound_norm;
        b.p = bound_p;
        b.c0 = bound_c0;
        const auto r = ssme::synthetic::epsilon_bound(b);
        nlohmann::ordered_json out;
        out["epsilon_c"] = r.value;
        out["assumptions_met"] = r.assumptions_met;
        out["auc_band"] = ssme::synthetic::performance_error_band(
            bound_norm, r.value, ssme::synthetic::BandMetric::Auc);
        out["acc_band"] = ssme::synthetic::performance_error_band(
            bound_norm, r.value, ssme::synthetic::BandMetric::Acc);
        std::cout << out.dump(2) << "\n";
        return kExitOk;
      }
      ssme::synthetic::GridSpec grid;
      try {
        grid.norms = split_doubles(synth_norms);
        grid.dims = split_ints(synth_dims);
        grid.unlabeled_sizes = split_ints(synth_nu);
      } catch (const std::exception&) {
        std::cerr << "error: invalid grid flags\n";
        return kExitInput;
      }
      if (grid.norms.empty() || grid.dims.empty() || grid.unlabeled_sizes.empty() ||
          synth_runs < 1) {
        std::cerr << "error: invalid grid flags\n";
        return kExitInput;
      }
      grid.n_labeled = synth_nl;
      grid.runs = synth_runs;
      grid.n_eval = synth_neval;
      grid.methods = split_list(synth_methods);
      grid.sample_rounds = synth_samples;
      grid.threads = resolve_threads(threads);
      const auto rows = ssme::synthetic::run_grid(grid, seed);
      const auto csv = ssme::synthetic::grid_to_csv(rows);
      if (synth_out.empty()) std::cout << csv;
      else write_file(synth_out, csv);
      if (!synth_summary.empty()) {
        // per (method, metric) mean MAE at the smallest and largest n_u,
        // plus bound diagnostics per cell
        nlohmann::ordered_json summary;
        summary["seed"] = seed;
        nlohmann::ordered_json cells = nlohmann::ordered_json::array();
        for (double norm : grid.norms) {
          for (int d : grid.dims) {
            for (int n_u : grid.unlabeled_sizes) {
              for (const auto& method : grid.methods) {
                for (const auto metric : grid.metrics) {
                  double total = 0.0;
                  int count = 0;
                  for (const auto& row : rows) {
                    if (row.norm == norm && row.d == d && row.n_unlabeled == n_u &&
                        row.method == method && row.metric == metric &&
                        row.error.empty()) {
                      total += row.mae;
                      ++count;
                    }
                  }
                  if (count == 0) continue;
                  nlohmann::ordered_json cell;
                  cell["norm"] = norm;
                  cell["d"] = d;
                  cell["n_unlabeled"] = n_u;
                  cell["method"] = method;
                  cell["metric"] = ssme::metric_name(metric);
                  cell["mean_mae"] = total / count;
                  cell["runs"] = count;
                  ssme::synthetic::BoundInputs b;
                  b.n_unlabeled = n_u;
                  b.n_labeled = grid.n_labeled;
                  b.d = d;
                  b.norm_c = norm;
                  const auto bound = ssme::synthetic::epsilon_bound(b);
                  cell["epsilon_c"] = bound.value;
                  cell["assumptions_met"] = bound.assumptions_met;
                  cells.push_back(std::move(cell));
                }
              }
            }
          }
        }
        summary["cells"] = std::move(cells);
        write_file(synth_summary, summary.dump(2) + "\n");
      }
      return kExitOk;
    }

    if (cmd_ess->parsed()) {
      ssme::EvaluationDataset pool;
      try {
        pool = load(ess_dataset, ess_format);
      } catch (const ssme::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
      }
      int max_size = ess_max;
      const int pool_size = static_cast<int>(pool.records.size());
      if (pool_size < ess_max + 1000) {  // 1000-record evaluation remainder
        if (!allow_truncated) {
          std::cerr << "error: pool smaller than " << (ess_max + 1000)
                    << " records; pass --allow-truncated to proceed\n";
          return kExitInput;
        }
        // keep at least half the pool (capped at 1000) for scoring
        const int reserve = std::min(1000, pool_size / 2);
        max_size = std::max(10, pool_size - reserve);
      }
      std::vector<ssme::MetricRequest> requests;
      for (int j = 0; j < pool.classifier_count(); ++j) {
        ssme::MetricRequest req;
        req.kind = ssme::metric_from_name(ess_metric);
        req.classifier = j;
        requests.push_back(req);
      }
      const auto curve =
          ssme::harness::build_ess_curve(pool, requests, seed, ess_runs, max_size);

      // method MAE over matched splits of the same pool
      ssme::harness::TrialConfig tc;
      tc.methods = {ess_method};
      tc.n_labeled = ess_nl;
      tc.n_unlabeled = ess_nu;
      tc.runs = ess_runs;
      tc.requests = requests;
      tc.master_seed = seed;
      tc.sample_rounds = ess_samples;
      tc.threads = resolve_threads(threads);
      const auto trials = ssme::harness::run_trials(pool, tc);
      const double method_mae = ssme::harness::mae(
          trials, ess_method, ssme::metric_from_name(ess_metric));
      const int ess_value = ssme::harness::effective_sample_size(method_mae, curve);

      nlohmann::ordered_json out;
      out["command"] = "ess";
      out["seed"] = seed;
      out["method"] = ess_method;
      out["metric"] = ess_metric;
      out["n_labeled"] = ess_nl;
      out["n_unlabeled"] = ess_nu;
      out["method_mae"] = method_mae;
      out["ess"] = ess_value;
      out["truncated"] = max_size < ess_max;
      out["curve_sizes"] = curve.sizes;
      out["curve_mae"] = curve.mean_mae;
      const std::string text = out.dump(2) + "\n";
      if (ess_out.empty()) std::cout << text;
      else write_file(ess_out, text);
      return kExitOk;
    }
  } catch (const ssme::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ssme::FitError& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return kExitFit;
  } catch (const ssme::MetricError& e) {
    std::cerr << "metric error: " << e.what() << "\n";
    return kExitUnestimable;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
