#include "ssme/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "json.hpp"
#include "ssme/rng.hpp"

namespace ssme {

namespace {

constexpr std::uint64_t kInitTag = 0x696e6974;  // responsibility init stream

std::vector<double> floored_simplex(std::vector<double> v, double floor_at) {
  double total = 0.0;
  for (double& x : v) {
    x = std::max(x, floor_at);
    total += x;
  }
  for (double& x : v) x /= total;
  return v;
}

}  // namespace

ResponsibilityMatrix initialize_responsibilities(const EvaluationDataset& dataset,
                                                 std::uint64_t seed,
                                                 double eps_clip) {
  const int n = static_cast<int>(dataset.records.size());
  const int k = dataset.class_count();
  ResponsibilityMatrix r;
  r.gamma.assign(n, std::vector<double>(k, 0.0));
  r.fixed.assign(n, false);
  for (int i = 0; i < n; ++i) {
    const auto& rec = dataset.records[i];
    if (rec.label) {
      r.gamma[i][*rec.label] = 1.0;
      r.fixed[i] = true;
      continue;
    }
    // mean probability row over classifiers, clipped
    std::vector<double> mean(k, 0.0);
    for (const auto& row : rec.profile.values) {
      for (int c = 0; c < k; ++c) mean[c] += row[c];
    }
    for (double& v : mean) v /= rec.profile.classifier_count();
    mean = clip_simplex(mean, eps_clip);
    const int drawn = rng::categorical_draw(
        mean, rng::derive(seed, kInitTag, static_cast<std::uint64_t>(i)));
    r.gamma[i][drawn] = 1.0;
  }
  return r;
}

FittedMixture fit(const EvaluationDataset& dataset, const FitConfig& config) {
  const int n = static_cast<int>(dataset.records.size());
  const int k = dataset.class_count();
  if (n == 0 || k < 2) throw FitError("fit: empty dataset or fewer than 2 classes");
  const int n_l = dataset.labeled_count();
  if (n_l < 1) throw FitError("fit: fully unsupervised dataset rejected");
  const int n_u = n - n_l;

  // ALR scores, fixed pooled bandwidths
  std::vector<std::vector<double>> scores(n);
  for (int i = 0; i < n; ++i) {
    scores[i] = profile_to_score(dataset.records[i].profile, config.eps_clip).values;
  }
  const int d = static_cast<int>(scores.front().size());
  if (d < 1) throw FitError("fit: zero score dimension");

  // per-point M-step weight; also weights the bandwidth pool so lambda = 0
  // reduces exactly to the labeled-only fit
  std::vector<double> point_weight(n);
  std::vector<int> labeled_class(n, -1);
  for (int i = 0; i < n; ++i) {
    const auto& rec = dataset.records[i];
    point_weight[i] = rec.label ? 1.0 : config.lambda_u;
    if (rec.label) labeled_class[i] = *rec.label;
  }
  BandwidthVector bw =
      pooled_bandwidths(scores, point_weight, config.bandwidth_method);
  if (const char* e = std::getenv("SSME_BW_SCALE")) {  // probing only
    const double s = std::atof(e);
    if (s > 0) for (auto& h : bw.h) h *= s;
  }

  ResponsibilityMatrix resp =
      initialize_responsibilities(dataset, config.seed, config.eps_clip);

  // priors from the empirical labeled-class distribution
  std::vector<double> priors(k, 0.0);
  for (int i = 0; i < n; ++i) {
    if (labeled_class[i] >= 0) priors[labeled_class[i]] += 1.0;
  }
  priors = floored_simplex(std::move(priors), config.eps_prior);

  // Kernel matrix in exp space, scaled per query row; points and bandwidths
  // never change during EM, so this is computed once. Row scaling cancels in
  // responsibilities.
  std::vector<std::vector<double>> kernel(n, std::vector<double>(n));
  std::vector<double> row_scale(n);  // the subtracted log max
  {
    std::vector<std::vector<double>> logk(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= i; ++j) {
        double q = 0.0;
        for (int t = 0; t < d; ++t) {
          const double z = (scores[i][t] - scores[j][t]) / bw.h[t];
          q += z * z;
        }
        logk[i][j] = logk[j][i] = -0.5 * q;
      }
    }
    for (int i = 0; i < n; ++i) {
      // scale by the off-diagonal row max; the diagonal is handled apart so
      // the self term can never overflow or cancel the neighbor sum
      double m = -INFINITY;
      for (int j = 0; j < n; ++j) {
        if (j == i && n > 1) continue;
        m = std::max(m, logk[i][j]);
      }
      if (!std::isfinite(m)) m = 0.0;
      row_scale[i] = m;
      for (int j = 0; j < n; ++j) kernel[i][j] = std::exp(logk[i][j] - m);
      kernel[i][i] = 0.0;  // self term excluded from every kernel sum
    }
  }

  const auto rebuild_from_labeled = [&](int cls) {
    bool any = false;
    for (int i = 0; i < n; ++i) {
      if (labeled_class[i] == cls) any = true;
    }
    if (!any) {
      throw FitError("fit: component death for class " + std::to_string(cls) +
                     " with no labeled examples");
    }
    for (int i = 0; i < n; ++i) {
      if (resp.fixed[i]) continue;
      resp.gamma[i][cls] = 0.0;
    }
  };

  int epoch = 0;
  double max_delta = 0.0;
  std::vector<double> dens(k);
  // class-major snapshot of point_weight * gamma: the E-step numerator for
  // each class is a contiguous dot product with the kernel row, computed
  // with a 4-lane unrolled reduction (fixed summation order, so results
  // stay deterministic and thread-invariant)
  std::vector<double> wgt(static_cast<std::size_t>(n) * k);
  std::vector<double> num(k);
  for (epoch = 0; epoch < config.max_epochs; ++epoch) {
    // class totals of point_weight * gamma
    std::vector<double> class_weight(k, 0.0);
    const auto snapshot = [&] {
      std::fill(class_weight.begin(), class_weight.end(), 0.0);
      for (int j = 0; j < n; ++j) {
        for (int c = 0; c < k; ++c) {
          const double w = point_weight[j] * resp.gamma[j][c];
          wgt[static_cast<std::size_t>(c) * n + j] = w;
          class_weight[c] += w;
        }
      }
    };
    snapshot();
    for (int c = 0; c < k; ++c) {
      if (class_weight[c] < 1e-12) {
        rebuild_from_labeled(c);
        snapshot();
      }
    }

    // E-step (unlabeled rows only; labeled rows pinned). Row i reads only
    // the snapshot plus its own previous gamma, so gamma updates in place.
    max_delta = 0.0;
    for (int i = 0; i < n; ++i) {
      if (resp.fixed[i]) continue;
      const double* krow = kernel[i].data();
      const int tail = n & ~3;
      for (int c = 0; c < k; ++c) {
        const double* w = &wgt[static_cast<std::size_t>(c) * n];
        double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
        for (int j = 0; j < tail; j += 4) {
          l0 += krow[j] * w[j];
          l1 += krow[j + 1] * w[j + 1];
          l2 += krow[j + 2] * w[j + 2];
          l3 += krow[j + 3] * w[j + 3];
        }
        for (int j = tail; j < n; ++j) l0 += krow[j] * w[j];
        num[c] = (l0 + l1) + (l2 + l3);
      }
      // self kernel term for the literal (non-loo) reading; clamped so an
      // isolated point cannot overflow the scaled sum
      const double self_kernel =
          config.loo ? 0.0 : std::exp(std::min(-row_scale[i], 700.0));
      double total = 0.0;
      for (int c = 0; c < k; ++c) {
        double den = class_weight[c];
        const double self = point_weight[i] * resp.gamma[i][c];
        double num_c = num[c];
        if (config.loo) {
          den -= self;
        } else {
          num_c += self * self_kernel;
        }
        dens[c] = (den > 1e-300 && num_c > 0.0) ? priors[c] * num_c / den : 0.0;
        total += dens[c];
      }
      if (total <= 0.0) {
        for (int c = 0; c < k; ++c) dens[c] = priors[c];
        total = 1.0;
      }
      for (int c = 0; c < k; ++c) {
        const double g = dens[c] / total;
        max_delta = std::max(max_delta, std::fabs(g - resp.gamma[i][c]));
        resp.gamma[i][c] = g;
      }
    }

    // M-step: priors from weighted effective counts
    std::vector<double> counts(k, 0.0);
    for (int j = 0; j < n; ++j) {
      for (int c = 0; c < k; ++c)
        counts[c] += point_weight[j] * resp.gamma[j][c];
    }
    const double denom = config.lambda_u * n_u + n_l;
    for (int c = 0; c < k; ++c) priors[c] = counts[c] / std::max(denom, 1e-300);
    priors = floored_simplex(std::move(priors), config.eps_prior);

    if (max_delta < config.tol) {
      ++epoch;
      break;
    }
  }

  FittedMixture model;
  model.priors = priors;
  model.bandwidths = bw;
  model.config = config;
  model.epochs_run = epoch;
  model.final_max_delta = max_delta;
  model.m = dataset.classifier_count();
  model.k = k;
  for (int c = 0; c < k; ++c) {
    std::vector<double> weights(n);
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      weights[j] = point_weight[j] * resp.gamma[j][c];
      total += weights[j];
    }
    if (total < 1e-12) {
      // component death at the end: labeled rows of this class only
      std::fill(weights.begin(), weights.end(), 0.0);
      bool any = false;
      for (int j = 0; j < n; ++j) {
        if (labeled_class[j] == c) {
          weights[j] = 1.0;
          any = true;
        }
      }
      if (!any)
        throw FitError("fit: component death for class " + std::to_string(c) +
                       " with no labeled examples");
    }
    model.components.push_back(
        std::make_unique<KdeComponent>(scores, weights, bw));
  }
  model.responsibilities = std::move(resp);
  return model;
}

Posterior posterior(const FittedMixture& model, const ScoreVector& s) {
  const int k = static_cast<int>(model.priors.size());
  std::vector<double> logp(k);
  bool all_floor = true;
  for (int c = 0; c < k; ++c) {
    const double ld = model.components[c]->log_density(s.values);
    if (ld > kLogDensityFloor) all_floor = false;
    logp[c] = std::log(model.priors[c]) + ld;
  }
  Posterior out;
  if (all_floor) {
    out.probs = model.priors;
    out.underflow = true;
    return out;
  }
  const double m = *std::max_element(logp.begin(), logp.end());
  double total = 0.0;
  out.probs.resize(k);
  for (int c = 0; c < k; ++c) {
    out.probs[c] = std::exp(logp[c] - m);
    total += out.probs[c];
  }
  for (double& p : out.probs) p /= total;
  return out;
}

double log_likelihood(const FittedMixture& model, const EvaluationDataset& dataset,
                      double lambda_u) {
  const int k = static_cast<int>(model.priors.size());
  double ll = 0.0;
  for (int i = 0; i < static_cast<int>(dataset.records.size()); ++i) {
    const auto& rec = dataset.records[i];
    const auto s = profile_to_score(rec.profile, model.config.eps_clip);
    std::optional<int> exclude;
    if (model.config.loo) exclude = i;
    if (rec.label) {
      ll += model.components[*rec.label]->log_density(s.values, exclude) +
            std::log(model.priors[*rec.label]);
    } else {
      if (lambda_u == 0.0) continue;
      double m = -INFINITY;
      std::vector<double> logp(k);
      for (int c = 0; c < k; ++c) {
        logp[c] = model.components[c]->log_density(s.values, exclude) +
                  std::log(model.priors[c]);
        m = std::max(m, logp[c]);
      }
      double acc = 0.0;
      for (int c = 0; c < k; ++c) acc += std::exp(logp[c] - m);
      ll += lambda_u * (m + std::log(acc));
    }
  }
  return ll;
}

std::string serialize_mixture(const FittedMixture& model) {
  nlohmann::ordered_json j;
  j["priors"] = model.priors;
  j["m"] = model.m;
  j["k"] = model.k;
  j["epochs_run"] = model.epochs_run;
  j["final_max_delta"] = model.final_max_delta;
  nlohmann::ordered_json bw;
  bw["values"] = model.bandwidths.h;
  std::vector<std::string> methods;
  for (auto m : model.bandwidths.methods) methods.push_back(bandwidth_method_name(m));
  bw["methods"] = methods;
  j["bandwidths"] = bw;
  nlohmann::ordered_json cfg;
  cfg["lambda_u"] = model.config.lambda_u;
  cfg["max_epochs"] = model.config.max_epochs;
  cfg["tol"] = model.config.tol;
  cfg["seed"] = model.config.seed;
  cfg["loo"] = model.config.loo;
  cfg["eps_prior"] = model.config.eps_prior;
  cfg["eps_clip"] = model.config.eps_clip;
  cfg["bandwidth_method"] = bandwidth_method_name(model.config.bandwidth_method);
  j["config"] = cfg;
  nlohmann::ordered_json comps = nlohmann::ordered_json::array();
  for (const auto& c : model.components) {
    nlohmann::ordered_json cj;
    cj["points"] = c->points();
    cj["weights"] = c->weights();
    comps.push_back(cj);
  }
  j["components"] = comps;
  return j.dump(2) + "\n";
}

FittedMixture deserialize_mixture(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  FittedMixture model;
  model.priors = j.at("priors").get<std::vector<double>>();
  model.m = j.at("m").get<int>();
  model.k = j.at("k").get<int>();
  model.epochs_run = j.at("epochs_run").get<int>();
  model.final_max_delta = j.at("final_max_delta").get<double>();
  model.bandwidths.h = j.at("bandwidths").at("values").get<std::vector<double>>();
  for (const auto& name :
       j.at("bandwidths").at("methods").get<std::vector<std::string>>()) {
    if (name == "isj") model.bandwidths.methods.push_back(BandwidthMethod::Isj);
    else if (name == "silverman")
      model.bandwidths.methods.push_back(BandwidthMethod::Silverman);
    else model.bandwidths.methods.push_back(BandwidthMethod::Fixed);
  }
  const auto& cfg = j.at("config");
  model.config.lambda_u = cfg.at("lambda_u").get<double>();
  model.config.max_epochs = cfg.at("max_epochs").get<int>();
  model.config.tol = cfg.at("tol").get<double>();
  model.config.seed = cfg.at("seed").get<std::uint64_t>();
  model.config.loo = cfg.at("loo").get<bool>();
  model.config.eps_prior = cfg.at("eps_prior").get<double>();
  model.config.eps_clip = cfg.at("eps_clip").get<double>();
  const auto bm = cfg.at("bandwidth_method").get<std::string>();
  model.config.bandwidth_method =
      bm == "isj" ? BandwidthMethod::Isj : BandwidthMethod::Silverman;
  for (const auto& cj : j.at("components")) {
    model.components.push_back(std::make_unique<KdeComponent>(
        cj.at("points").get<std::vector<std::vector<double>>>(),
        cj.at("weights").get<std::vector<double>>(), model.bandwidths));
  }
  return model;
}

}  // namespace ssme
