#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "ssme/baselines.hpp"
#include "ssme/harness.hpp"
#include "ssme/metrics.hpp"
#include "ssme/mixture.hpp"
#include "ssme/synthetic.hpp"

using namespace ssme;
using namespace ssme::harness;

namespace {

// fully labeled pool with two classifiers, drawn from the Gaussian generator
EvaluationDataset make_pool(int n, std::uint64_t seed) {
  synthetic::SyntheticSpec spec;
  spec.c = {1.2, 0.8};
  spec.n_labeled = 2;
  spec.n_unlabeled = 0;
  spec.n_eval = n;
  spec.seed = seed;
  return synthetic::generate(spec).evaluation;
}

TrialResult row(const std::string& method, MetricKind metric, int run,
                double abs_error, const std::string& error = "") {
  TrialResult r;
  r.method = method;
  r.metric = metric;
  r.run = run;
  r.abs_error = abs_error;
  r.error = error;
  return r;
}

}  // namespace

TEST_CASE("make_split produces disjoint, class-covering splits") {
  const auto pool = make_pool(200, 7);
  const auto split = make_split(pool, 20, 100, 3);
  CHECK(split.estimation.labeled_count() == 20);
  CHECK(split.estimation.unlabeled_count() == 100);
  CHECK(static_cast<int>(split.evaluation.records.size()) == 80);
  CHECK(split.hidden_truth.size() == 100);

  // no record id appears in both splits; together they cover the pool
  std::set<std::string> est_ids, eval_ids;
  for (const auto& rec : split.estimation.records) est_ids.insert(rec.id);
  for (const auto& rec : split.evaluation.records) eval_ids.insert(rec.id);
  CHECK(est_ids.size() == 120);
  CHECK(eval_ids.size() == 80);
  for (const auto& id : est_ids) CHECK(eval_ids.count(id) == 0);

  // both classes among the labeled block
  bool c0 = false, c1 = false;
  for (const auto& rec : split.estimation.records) {
    if (!rec.label) continue;
    c0 |= *rec.label == 0;
    c1 |= *rec.label == 1;
  }
  CHECK(c0);
  CHECK(c1);

  // hidden truth matches the pool labels of the unlabeled rows
  int u = 0;
  for (const auto& rec : split.estimation.records) {
    if (rec.label) continue;
    const auto it = std::find_if(pool.records.begin(), pool.records.end(),
                                 [&](const auto& p) { return p.id == rec.id; });
    REQUIRE(it != pool.records.end());
    CHECK(split.hidden_truth[u] == *it->label);
    ++u;
  }
}

TEST_CASE("make_split is deterministic and honors n_u = 0") {
  const auto pool = make_pool(80, 9);
  const auto a = make_split(pool, 15, 40, 11);
  const auto b = make_split(pool, 15, 40, 11);
  REQUIRE(a.estimation.records.size() == b.estimation.records.size());
  for (std::size_t i = 0; i < a.estimation.records.size(); ++i)
    CHECK(a.estimation.records[i].id == b.estimation.records[i].id);

  const auto full = make_split(pool, 30, 0, 4);
  CHECK(full.estimation.unlabeled_count() == 0);
  CHECK(full.hidden_truth.empty());
}

TEST_CASE("make_split enforces class coverage on imbalanced pools") {
  // 95% class 0: a random labeled pair frequently misses class 1 without
  // the coverage guarantee
  auto pool = make_pool(200, 5);
  int ones = 0;
  for (auto& rec : pool.records) {
    if (*rec.label == 1 && ++ones > 10) rec.label = 0;
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto split = make_split(pool, 2, 50, seed);
    bool c0 = false, c1 = false;
    for (const auto& rec : split.estimation.records) {
      if (!rec.label) continue;
      c0 |= *rec.label == 0;
      c1 |= *rec.label == 1;
    }
    CHECK(c0);
    CHECK(c1);
  }
}

TEST_CASE("make_split rejects bad pools") {
  const auto pool = make_pool(50, 2);
  CHECK_THROWS_AS(make_split(pool, 30, 30, 1), DataError);
  auto unlabeled = pool;
  unlabeled.records[4].label.reset();
  CHECK_THROWS_AS(make_split(unlabeled, 10, 10, 1), DataError);
  auto one_class = pool;
  for (auto& rec : one_class.records) rec.label = 0;
  CHECK_THROWS_AS(make_split(one_class, 10, 10, 1), DataError);
}

TEST_CASE("run_trials emits one row per method, metric, classifier, and run") {
  const auto pool = make_pool(220, 13);
  TrialConfig config;
  config.methods = {"labeled", "mv"};
  config.n_labeled = 20;
  config.n_unlabeled = 60;
  config.runs = 4;
  config.master_seed = 17;
  config.sample_rounds = 50;
  for (MetricKind kind : {MetricKind::Accuracy, MetricKind::Auc}) {
    for (int j = 0; j < 2; ++j) {
      MetricRequest req;
      req.kind = kind;
      req.classifier = j;
      config.requests.push_back(req);
    }
  }
  const auto results = run_trials(pool, config);
  CHECK(results.size() == 4u * 2u * 4u);  // runs x methods x requests
  for (const auto& r : results) {
    REQUIRE(r.error.empty());
    CHECK(r.abs_error == doctest::Approx(std::fabs(r.estimate - r.truth)));
    CHECK(r.abs_error >= 0.0);
    CHECK(r.n_labeled == 20);
    CHECK(r.n_unlabeled == 60);
  }

  // deterministic in the master seed
  const auto again = run_trials(pool, config);
  REQUIRE(again.size() == results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    CHECK(again[i].estimate == results[i].estimate);
    CHECK(again[i].truth == results[i].truth);
  }
}

TEST_CASE("run_trials rejects non-disjoint configurations") {
  const auto pool = make_pool(100, 3);
  TrialConfig config;
  config.n_labeled = 40;
  config.n_unlabeled = 60;  // consumes the whole pool: nothing held out
  MetricRequest req;
  config.requests.push_back(req);
  CHECK_THROWS_AS(run_trials(pool, config), DataError);
}

TEST_CASE("mae averages absolute errors of successful rows only") {
  std::vector<TrialResult> results = {
      row("labeled", MetricKind::Accuracy, 0, 1.0),
      row("labeled", MetricKind::Accuracy, 1, 2.0),
      row("labeled", MetricKind::Accuracy, 2, 3.0),
      row("labeled", MetricKind::Auc, 0, 9.0),
      row("labeled", MetricKind::Accuracy, 3, 99.0, "fit failed"),
      row("ssme", MetricKind::Accuracy, 0, 5.0),
  };
  CHECK(mae(results, "labeled", MetricKind::Accuracy) == doctest::Approx(2.0));
  CHECK(mae(results, "ssme", MetricKind::Accuracy) == doctest::Approx(5.0));
  CHECK_THROWS_AS(mae(results, "ssme", MetricKind::Auprc), MetricError);
}

TEST_CASE("rescaled mae is 1 against itself and excludes failed seeds pairwise") {
  std::vector<TrialResult> results = {
      row("labeled", MetricKind::Accuracy, 0, 2.0),
      row("labeled", MetricKind::Accuracy, 1, 4.0),
      row("labeled", MetricKind::Accuracy, 2, 100.0),
      row("ssme", MetricKind::Accuracy, 0, 1.0),
      row("ssme", MetricKind::Accuracy, 1, 2.0),
      row("ssme", MetricKind::Accuracy, 2, 0.0, "fit failed"),
  };
  CHECK(rescaled_mae(results, "labeled", "labeled", MetricKind::Accuracy) ==
        doctest::Approx(1.0));
  // run 2 is dropped from BOTH sides: (1+2)/2 over (2+4)/2
  CHECK(rescaled_mae(results, "ssme", "labeled", MetricKind::Accuracy) ==
        doctest::Approx(0.5));

  std::vector<TrialResult> zero = {
      row("labeled", MetricKind::Accuracy, 0, 0.0),
      row("ssme", MetricKind::Accuracy, 0, 1.0),
  };
  CHECK_THROWS_AS(rescaled_mae(zero, "ssme", "labeled", MetricKind::Accuracy),
                  MetricError);
}

TEST_CASE("confidence interval matches the hand example") {
  const auto ci = confidence_interval({1.0, 2.0, 3.0});
  CHECK(ci.mean == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ci.half_width == doctest::Approx(1.96 / std::sqrt(3.0)).epsilon(1e-9));
  CHECK(ci.half_width == doctest::Approx(1.13161).epsilon(1e-4));

  const auto flat = confidence_interval({0.4, 0.4, 0.4, 0.4});
  CHECK(flat.half_width == doctest::Approx(0.0));

  const auto perm = confidence_interval({3.0, 1.0, 2.0});
  CHECK(perm.mean == ci.mean);
  CHECK(perm.half_width == ci.half_width);

  CHECK_THROWS_AS(confidence_interval({1.0}), MetricError);
}

TEST_CASE("ess curve covers the grid and stays finite") {
  const auto pool = make_pool(160, 21);
  std::vector<MetricRequest> requests(1);
  const auto curve = build_ess_curve(pool, requests, 5, 8, 40);
  REQUIRE(curve.sizes.size() == 7);  // 10, 15, ..., 40
  CHECK(curve.sizes.front() == 10);
  CHECK(curve.sizes.back() == 40);
  for (std::size_t i = 0; i < curve.sizes.size(); ++i) {
    if (i > 0) CHECK(curve.sizes[i] > curve.sizes[i - 1]);
    CHECK(std::isfinite(curve.mean_mae[i]));
    CHECK(curve.mean_mae[i] >= 0.0);
  }
  // sizes never reach the pool size (a split must hold something out)
  const auto clipped = build_ess_curve(pool, requests, 5, 2, 1000);
  CHECK(clipped.sizes.back() < 160);
}

TEST_CASE("effective sample size picks the closest grid size") {
  EssCurve curve;
  curve.sizes = {10, 15, 20, 25};
  curve.mean_mae = {0.40, 0.30, 0.20, 0.10};
  CHECK(effective_sample_size(0.30, curve) == 15);   // exact match
  CHECK(effective_sample_size(0.33, curve) == 15);   // nearest
  CHECK(effective_sample_size(0.01, curve) == 25);   // below every value
  CHECK(effective_sample_size(9.99, curve) == 10);   // above every value

  // equidistant between two sizes: tie breaks to the larger
  EssCurve tie;
  tie.sizes = {100, 200};
  tie.mean_mae = {0.4, 0.2};
  CHECK(effective_sample_size(0.3, tie) == 200);

  CHECK_THROWS_AS(effective_sample_size(0.1, EssCurve{}), MetricError);
}

TEST_CASE("subgroup estimates with the full group match the overall report") {
  auto pool = make_pool(150, 31);
  for (auto& rec : pool.records) rec.group = "all";
  const auto split = make_split(pool, 20, 80, 2);
  FitConfig fc;
  fc.seed = 2;
  const auto model = fit(split.estimation, fc);
  std::vector<MetricRequest> requests(2);
  requests[1].kind = MetricKind::Auc;
  EstimateOptions opts;
  opts.seed = 19;
  opts.sample_rounds = 60;

  auto tagged = split.estimation;
  for (auto& rec : tagged.records) rec.group = "all";
  const auto overall = estimate_metrics(model, tagged, requests, opts);
  const auto grouped = subgroup_estimates(model, tagged, "all", requests, opts);
  REQUIRE(grouped.estimates.size() == overall.estimates.size());
  for (std::size_t i = 0; i < grouped.estimates.size(); ++i) {
    REQUIRE(!grouped.estimates[i].error);
    CHECK(grouped.estimates[i].value == overall.estimates[i].value);
  }
}

TEST_CASE("trial csv has the documented header and blank fields on failure") {
  std::vector<TrialResult> results = {
      row("labeled", MetricKind::Accuracy, 0, 0.25),
      row("ssme", MetricKind::Auc, 1, 0.0, "fit failed"),
  };
  results[0].estimate = 0.75;
  results[0].truth = 0.5;
  const auto csv = trials_to_csv(results);
  CHECK(csv.find("method,metric,classifier,run,n_labeled,n_unlabeled,estimate,"
                 "truth,abs_error,error") == 0);
  CHECK(csv.find("labeled,accuracy,0,0,") != std::string::npos);
  CHECK(csv.find(",,,fit failed") != std::string::npos);
  // two data lines after the header
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
