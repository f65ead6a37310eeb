#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ssme/baselines.hpp"
#include "ssme/rng.hpp"

using namespace ssme;

namespace {

// three noisy annotators over a binary task: each flips the true label
// independently with its own rate, reported as a confident probability row
EvaluationDataset annotator_dataset(int n, int n_labeled, double flip0,
                                    double flip1, double flip2,
                                    std::uint64_t seed,
                                    std::vector<int>* truth = nullptr) {
  EvaluationDataset d;
  rng::Stream s(seed);
  const double flips[3] = {flip0, flip1, flip2};
  for (int i = 0; i < n; ++i) {
    const int y = s.next_double() < 0.5;
    ExampleRecord rec;
    rec.id = "a" + std::to_string(i);
    for (double flip : flips) {
      const int vote = s.next_double() < flip ? 1 - y : y;
      const double p1 = vote == 1 ? 0.9 : 0.1;
      rec.profile.values.push_back({1.0 - p1, p1});
    }
    if (i < n_labeled) rec.label = y;
    else if (truth) truth->push_back(y);
    d.records.push_back(std::move(rec));
  }
  return d;
}

EvaluationDataset smooth_binary(int n_labeled, int n_unlabeled, double sep,
                                std::uint64_t seed) {
  EvaluationDataset d;
  rng::Stream s(seed);
  for (int i = 0; i < n_labeled + n_unlabeled; ++i) {
    const int y = s.next_double() < 0.5;
    ExampleRecord rec;
    rec.id = "r" + std::to_string(i);
    for (double c : {sep, 0.8 * sep}) {
      const double score = s.next_gaussian() + (y ? c : 0.0);
      const double p1 = 1.0 / (1.0 + std::exp(-score));
      rec.profile.values.push_back({1.0 - p1, p1});
    }
    if (i < n_labeled) rec.label = y;
    d.records.push_back(std::move(rec));
  }
  return d;
}

std::vector<MetricRequest> acc_requests(int m) {
  std::vector<MetricRequest> reqs;
  for (int j = 0; j < m; ++j) {
    MetricRequest r;
    r.kind = MetricKind::Accuracy;
    r.classifier = j;
    reqs.push_back(r);
  }
  return reqs;
}

}  // namespace

TEST_CASE("labeled_only scores only the labeled subset") {
  auto d = smooth_binary(40, 100, 2.0, 1);
  EstimateOptions opts;
  opts.seed = 1;
  const auto report = labeled_only(d, acc_requests(2), opts);
  CHECK(report.method == "labeled");
  REQUIRE(report.estimates.size() == 2);
  for (const auto& est : report.estimates) {
    REQUIRE(!est.error);
    CHECK(est.rounds_used == 1);
    // adding more unlabeled records cannot change the estimate
  }
  auto more = d;
  for (int i = 0; i < 50; ++i) {
    auto rec = d.records.back();
    rec.id = "extra" + std::to_string(i);
    rec.label.reset();
    more.records.push_back(rec);
  }
  const auto report2 = labeled_only(more, acc_requests(2), opts);
  CHECK(report2.estimates[0].value == report.estimates[0].value);
  CHECK(report2.estimates[1].value == report.estimates[1].value);
}

TEST_CASE("pseudo-label training converges with decreasing loss") {
  auto d = smooth_binary(60, 0, 2.0, 2);
  const auto clf = train_pseudo_label_model(d);
  CHECK(clf.final_grad_norm <= 1e-6);
  REQUIRE(clf.loss_trace.size() >= 2);
  for (std::size_t i = 1; i < clf.loss_trace.size(); ++i)
    CHECK(clf.loss_trace[i] <= clf.loss_trace[i - 1] + 1e-12);
}

TEST_CASE("pseudo-label recovers a separable rule") {
  std::vector<int> truth;
  auto d = annotator_dataset(400, 60, 0.05, 0.05, 0.05, 3, &truth);
  EstimateOptions opts;
  opts.seed = 3;
  const auto report = pseudo_label(d, acc_requests(3), opts);
  CHECK(report.method == "pl");
  for (const auto& est : report.estimates) {
    REQUIRE(!est.error);
    // annotators are right ~95% of the time
    CHECK(est.value > 0.85);
  }
}

TEST_CASE("dawid-skene recovers flip rates on synthetic annotators") {
  // average over seeds: estimated flip rate of the noisiest annotator
  double flip_sum = 0.0;
  int trials = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const auto d = annotator_dataset(500, 25, 0.2, 0.1, 0.05,
                                     rng::derive(100, seed));
    const auto ds = dawid_skene(d);
    // flip rate of annotator 0 = mean off-diagonal of its confusion matrix
    const auto& cm = ds.params.matrices[0];
    flip_sum += 0.5 * (cm[0][1] + cm[1][0]);
    ++trials;
    // log likelihood must be monotone nondecreasing
    for (std::size_t i = 1; i < ds.log_likelihood_trace.size(); ++i)
      CHECK(ds.log_likelihood_trace[i] >=
            ds.log_likelihood_trace[i - 1] - 1e-8);
  }
  CHECK(flip_sum / trials == doctest::Approx(0.2).epsilon(0.25));
}

TEST_CASE("dawid-skene posteriors are sharper than single votes") {
  std::vector<int> truth;
  const auto d = annotator_dataset(400, 30, 0.1, 0.1, 0.1, 5, &truth);
  const auto ds = dawid_skene(d);
  int correct = 0, idx = 0;
  for (int i = 0; i < static_cast<int>(d.records.size()); ++i) {
    if (d.records[i].label) continue;
    correct += (ds.posteriors[i][1] > 0.5) == (truth[idx] == 1);
    ++idx;
  }
  CHECK(correct / double(truth.size()) > 0.9);
}

TEST_CASE("majority vote weights by labeled accuracy") {
  // two voters agree with the label 100% / 0% of the time on the labeled set
  EvaluationDataset d;
  for (int i = 0; i < 10; ++i) {
    const int y = i % 2;
    ExampleRecord rec;
    rec.id = "v" + std::to_string(i);
    const double right = y == 1 ? 0.9 : 0.1;
    rec.profile.values.push_back({1.0 - right, right});   // always correct
    rec.profile.values.push_back({right, 1.0 - right});   // always wrong
    rec.label = y;
    d.records.push_back(std::move(rec));
  }
  ExampleRecord u;
  u.id = "u";
  u.profile.values = {{0.1, 0.9}, {0.9, 0.1}};  // voters disagree
  d.records.push_back(u);
  const auto mv = majority_vote(d);
  CHECK(mv.classifier_weights[0] == doctest::Approx(1.0));
  CHECK(mv.classifier_weights[1] == doctest::Approx(0.0));
  // the perfect voter wins the disagreement
  CHECK(mv.labels.back() == 1);
}

TEST_CASE("weighted vote example: 1.15 beats 0.9") {
  // three voters with labeled accuracies 0.6, 0.55, 0.9; the two weaker
  // voters agreeing (1.15) outvote the strong voter alone (0.9)
  EvaluationDataset d;
  auto add_labeled = [&](const std::string& id, int label, int right0,
                         int right1, int right2) {
    ExampleRecord rec;
    rec.id = id;
    const int rights[3] = {right0, right1, right2};
    for (int r : rights) {
      const int vote = r ? label : 1 - label;
      const double p1 = vote == 1 ? 0.9 : 0.1;
      rec.profile.values.push_back({1.0 - p1, p1});
    }
    rec.label = label;
    d.records.push_back(std::move(rec));
  };
  // 20 labeled rows with per-voter accuracy 12/20, 11/20, 18/20
  for (int i = 0; i < 20; ++i)
    add_labeled("l" + std::to_string(i), i % 2, i < 12, i < 11, i < 18);
  ExampleRecord u;
  u.id = "u";
  u.profile.values = {{0.1, 0.9}, {0.1, 0.9}, {0.9, 0.1}};  // 1+2 vs 3
  d.records.push_back(u);
  const auto mv = majority_vote(d);
  CHECK(mv.classifier_weights[0] == doctest::Approx(0.6));
  CHECK(mv.classifier_weights[1] == doctest::Approx(0.55));
  CHECK(mv.classifier_weights[2] == doctest::Approx(0.9));
  CHECK(mv.labels.back() == 1);
}

TEST_CASE("method dispatch covers every tag") {
  auto d = smooth_binary(40, 60, 2.0, 6);
  FitConfig fc;
  fc.seed = 6;
  EstimateOptions opts;
  opts.seed = 6;
  opts.sample_rounds = 20;
  for (const std::string name : {"ssme", "labeled", "pl", "ds", "mv", "ssme-m"}) {
    const auto report = run_method(name, d, acc_requests(2), fc, opts);
    CHECK(report.method == (name == "ssme" ? "ssme" : name));
    CHECK(report.estimates.size() == 2);
    for (const auto& est : report.estimates) {
      REQUIRE(!est.error);
      CHECK(est.value >= 0.0);
      CHECK(est.value <= 1.0);
    }
  }
  CHECK_THROWS_AS(run_method("nope", d, acc_requests(2), fc, opts), DataError);
}

TEST_CASE("ssme-m restores the classifier index in its report") {
  auto d = smooth_binary(40, 60, 2.0, 7);
  FitConfig fc;
  fc.seed = 7;
  EstimateOptions opts;
  opts.seed = 7;
  opts.sample_rounds = 20;
  const auto report = run_method("ssme-m", d, acc_requests(2), fc, opts);
  std::vector<int> seen;
  for (const auto& est : report.estimates) seen.push_back(est.request.classifier);
  std::sort(seen.begin(), seen.end());
  CHECK(seen == std::vector<int>{0, 1});
}
