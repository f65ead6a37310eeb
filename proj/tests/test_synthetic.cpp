#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ssme/metrics.hpp"
#include "ssme/rng.hpp"
#include "ssme/synthetic.hpp"

using namespace ssme;
using namespace ssme::synthetic;

TEST_CASE("normal cdf identities") {
  CHECK(phi(0.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(phi(1.959963985) == doctest::Approx(0.975).epsilon(1e-6));
  CHECK(phi(-1.0) + phi(1.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("closed-form auc and accuracy maps") {
  // c = 3.0: AUC = phi(3/sqrt(2)) = 0.98305, ACC = phi(1.5)
  CHECK(theoretical_auc(3.0) == doctest::Approx(0.98305).epsilon(1e-4));
  CHECK(theoretical_acc(3.0) == doctest::Approx(phi(1.5)).epsilon(1e-12));
  CHECK(theoretical_auc(0.0) == doctest::Approx(0.5));
}

TEST_CASE("bound example is reproduced") {
  BoundInputs b;
  b.n_unlabeled = 1000;
  b.n_labeled = 20;
  b.d = 2;
  b.norm_c = 1.0;
  b.p = 0.1;
  const auto r = epsilon_bound(b);
  CHECK(r.assumptions_met);
  CHECK(r.value == doctest::Approx(0.4513).epsilon(1e-3));
  CHECK(performance_error_band(1.0, r.value, BandMetric::Auc) ==
        doctest::Approx(0.1093).epsilon(1e-2));
}

TEST_CASE("bound tightens with more data") {
  BoundInputs base;
  base.n_unlabeled = 1000;
  base.n_labeled = 20;
  base.d = 2;
  base.norm_c = 1.0;
  base.p = 0.1;
  const double v0 = epsilon_bound(base).value;
  auto more_u = base;
  more_u.n_unlabeled = 100000;
  CHECK(epsilon_bound(more_u).value < v0);
  auto more_l = base;
  more_l.n_labeled = 200;
  CHECK(epsilon_bound(more_l).value < v0);
  auto wider = base;
  wider.norm_c = 2.0;
  CHECK(epsilon_bound(wider).value < v0);
  auto higher_d = base;
  higher_d.d = 8;
  CHECK(epsilon_bound(higher_d).value > v0);
}

TEST_CASE("bound rejects nonpositive separation and flags assumptions") {
  BoundInputs b;
  b.n_unlabeled = 100;
  b.n_labeled = 10;
  b.d = 2;
  b.norm_c = 0.0;
  CHECK_THROWS(epsilon_bound(b));
  // tiny separation with few samples violates the assumption gate
  b.norm_c = 0.05;
  b.n_unlabeled = 50;
  const auto r = epsilon_bound(b);
  CHECK(!r.assumptions_met);
}

TEST_CASE("separation sampler hits the target norm with positive entries") {
  for (int d : {2, 6, 10}) {
    for (double target : {0.75, 1.25}) {
      const auto c = sample_separation(d, target, target / std::sqrt(double(d)),
                                       rng::derive(3, d));
      REQUIRE(static_cast<int>(c.size()) == d);
      double norm = 0.0;
      for (double v : c) {
        CHECK(v > 0.0);
        norm += v * v;
      }
      CHECK(std::sqrt(norm) == doctest::Approx(target).epsilon(1e-9));
    }
  }
}

TEST_CASE("generator is measure-correct per classifier") {
  // empirical per-classifier AUC over a large evaluation split matches
  // phi(c_k / sqrt(2))
  SyntheticSpec spec;
  spec.c = {1.5, 0.5};
  spec.n_labeled = 20;
  spec.n_unlabeled = 100;
  spec.n_eval = 20000;
  spec.seed = 9;
  const auto data = generate(spec);
  REQUIRE(static_cast<int>(data.evaluation.records.size()) == spec.n_eval);
  for (int j = 0; j < 2; ++j) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& rec : data.evaluation.records) {
      scores.push_back(rec.profile.values[j][1]);
      labels.push_back(*rec.label);
    }
    CHECK(auc(scores, labels) ==
          doctest::Approx(theoretical_auc(spec.c[j])).epsilon(0.02));
    const double acc = accuracy(
        [&] {
          std::vector<std::vector<double>> rows;
          for (const auto& rec : data.evaluation.records)
            rows.push_back(rec.profile.values[j]);
          return rows;
        }(),
        labels);
    CHECK(acc == doctest::Approx(theoretical_acc(spec.c[j])).epsilon(0.03));
  }
}

TEST_CASE("generator splits have the requested shape and hidden truth") {
  SyntheticSpec spec;
  spec.c = {1.0};
  spec.n_labeled = 15;
  spec.n_unlabeled = 85;
  spec.n_eval = 200;
  spec.seed = 4;
  const auto data = generate(spec);
  CHECK(data.estimation.labeled_count() == 15);
  CHECK(data.estimation.unlabeled_count() == 85);
  CHECK(data.hidden_truth.size() == 85);
  // labeled block covers both classes
  bool c0 = false, c1 = false;
  for (const auto& rec : data.estimation.records) {
    if (!rec.label) continue;
    c0 |= *rec.label == 0;
    c1 |= *rec.label == 1;
  }
  CHECK(c0);
  CHECK(c1);
  // deterministic in the seed
  const auto again = generate(spec);
  CHECK(again.estimation.records[0].profile.values[0][1] ==
        data.estimation.records[0].profile.values[0][1]);
}

TEST_CASE("classifier gain condition") {
  // at ||c||^2 = 2, d = 2: need sqrt(2 + delta^2) > sqrt(3), so delta > 1
  CHECK(classifier_gain_condition(std::sqrt(2.0), 2, 1.1));
  CHECK(!classifier_gain_condition(std::sqrt(2.0), 2, 0.9));
}

TEST_CASE("small grid runs produce finite errors for every cell") {
  GridSpec grid;
  grid.norms = {1.0};
  grid.dims = {2};
  grid.unlabeled_sizes = {100};
  grid.runs = 2;
  grid.n_eval = 500;
  grid.sample_rounds = 50;
  const auto rows = run_grid(grid, 11);
  // 2 runs x 2 methods x 4 metrics
  CHECK(rows.size() == 16);
  for (const auto& row : rows) {
    CHECK(row.error.empty());
    CHECK(std::isfinite(row.mae));
    CHECK(row.mae >= 0.0);
    CHECK(row.mae < 0.6);
  }
  const auto csv = grid_to_csv(rows);
  CHECK(csv.find("norm,d,n_unlabeled,run,method,metric,mae,error") == 0);
  // deterministic
  const auto rows2 = run_grid(grid, 11);
  CHECK(grid_to_csv(rows2) == csv);
}

TEST_CASE("ssme beats labeled-only on the reference cell") {
  // the headline ordering: with n_l = 20 and enough unlabeled data the
  // semi-supervised estimate has lower MAE than the labeled-only estimate.
  // The cell uses d = 6 classifiers: with few labeled points the gap between
  // the two methods grows with the number of classifiers, while at d = 2 the
  // soft-label EM equilibrium is too diffuse for a reliable ordering.
  GridSpec grid;
  grid.norms = {1.25};
  grid.dims = {6};
  grid.unlabeled_sizes = {1000};
  grid.runs = 8;
  grid.n_eval = 2000;
  grid.sample_rounds = 100;
  grid.metrics = {MetricKind::Accuracy};
  const auto rows = run_grid(grid, 21);
  double ssme = 0.0, labeled = 0.0;
  int ns = 0, nl = 0;
  for (const auto& row : rows) {
    REQUIRE(row.error.empty());
    if (row.method == "ssme") {
      ssme += row.mae;
      ++ns;
    } else {
      labeled += row.mae;
      ++nl;
    }
  }
  CHECK(ssme / ns < labeled / nl);
}
