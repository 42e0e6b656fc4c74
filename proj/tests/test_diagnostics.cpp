#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "clreg/diagnostics.hpp"
#include "clreg/errors.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace clreg;

TEST_CASE("cosine and relative L2 basics") {
  ParamVector a;
  a.values = {1.0, 2.0, -3.0};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(relative_l2_error(a, a) == 0.0);
  ParamVector neg = a;
  for (auto& v : neg.values) v = -v;
  CHECK(cosine_similarity(a, neg) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("true Fisher diagonal: hand-enumerated logistic case") {
  // 1-D input, two classes: logits = [w0 x + b0, w1 x + b1]
  ClassifierModel model;
  model.layer_sizes = {1, 2};
  model.activation = Activation::elu;
  model.params = make_param_vector(classifier_layout(model.layer_sizes));
  const double w0 = 0.8, w1 = -0.4, b0 = 0.1, b1 = -0.3, x = 1.7;
  model.params.values = {w0, w1, b0, b1};

  Matrix inputs(1, 1);
  inputs(0, 0) = x;
  const ParamVector diag = true_fisher_diag(model, inputs);

  // scalar enumeration over both labels
  const double z0 = w0 * x + b0, z1 = w1 * x + b1;
  const double m = std::max(z0, z1);
  const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
  const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
  // NLL gradient for label y: d/dw_k = (p_k - [k==y]) x, d/db_k = p_k - [k==y]
  auto sq = [](double v) { return v * v; };
  const double expected_w0 = p0 * sq((p0 - 1.0) * x) + p1 * sq(p0 * x);
  const double expected_w1 = p0 * sq(p1 * x) + p1 * sq((p1 - 1.0) * x);
  const double expected_b0 = p0 * sq(p0 - 1.0) + p1 * sq(p0);
  const double expected_b1 = p0 * sq(p1) + p1 * sq(p1 - 1.0);

  CHECK(diag.values[0] == doctest::Approx(expected_w0).epsilon(1e-12));
  CHECK(diag.values[1] == doctest::Approx(expected_w1).epsilon(1e-12));
  CHECK(diag.values[2] == doctest::Approx(expected_b0).epsilon(1e-12));
  CHECK(diag.values[3] == doctest::Approx(expected_b1).epsilon(1e-12));
}

TEST_CASE("true Fisher approaches the empirical Fisher for a confident model") {
  ClassifierModel model;
  model.layer_sizes = {1, 2};
  model.activation = Activation::elu;
  model.params = make_param_vector(classifier_layout(model.layer_sizes));
  model.params.values = {20.0, -20.0, 0.0, 0.0};
  Batch data;
  data.inputs = Matrix(2, 1);
  data.inputs(0, 0) = 1.0;
  data.inputs(1, 0) = 1.5;
  data.labels = {0, 0};  // labels agree with the confident predictions

  const ParamVector truth = true_fisher_diag(model, data.inputs);
  const ParamVector emp = empirical_fisher_diag(model, data);
  for (std::size_t k = 0; k < truth.size(); ++k) {
    CHECK(std::fabs(truth.values[k] - emp.values[k]) < 1e-8);
  }
}

TEST_CASE("zero-parameter model Fisher equals the uniform-mixture enumeration") {
  ClassifierModel model;
  model.layer_sizes = {2, 3};
  model.activation = Activation::elu;
  model.params = make_param_vector(classifier_layout(model.layer_sizes));
  Rng rng(71);
  Batch data = test_util::random_batch(model, 5, rng);

  const ParamVector diag = true_fisher_diag(model, data.inputs);

  // independent enumeration: uniform predictive distribution over labels
  std::vector<double> expected(model.params.size(), 0.0);
  Batch one;
  one.inputs = Matrix(1, 2);
  one.labels = {0};
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < 2; ++j) one.inputs(0, j) = data.inputs(i, j);
    for (int y = 0; y < 3; ++y) {
      one.labels[0] = y;
      const ParamVector g = nll_loss_and_grad(model, one).grad;
      for (std::size_t k = 0; k < expected.size(); ++k) {
        expected[k] += (1.0 / 3.0) * g.values[k] * g.values[k];
      }
    }
  }
  for (auto& v : expected) v /= static_cast<double>(data.size());
  for (std::size_t k = 0; k < expected.size(); ++k) {
    CHECK(std::fabs(diag.values[k] - expected[k]) < 1e-14);
  }
}

TEST_CASE("Fisher diagonals are nonnegative and obey the variance decomposition") {
  Rng rng(83);
  for (int trial = 0; trial < 5; ++trial) {
    ClassifierModel model = test_util::random_model(rng);
    const Batch data = test_util::random_batch(model, 7, rng);

    const ParamVector truth = true_fisher_diag(model, data.inputs);
    const ParamVector emp = empirical_fisher_diag(model, data);
    for (double v : truth.values) CHECK(v >= 0.0);
    for (double v : emp.values) CHECK(v >= 0.0);

    // F_kk = Var(g_k) + mean(g_k)^2 with population variance
    const auto grads = per_sample_grads(model, data);
    for (std::size_t k = 0; k < emp.size(); ++k) {
      double mean = 0.0;
      for (const auto& g : grads) mean += g.values[k];
      mean /= static_cast<double>(grads.size());
      double var = 0.0;
      for (const auto& g : grads) var += (g.values[k] - mean) * (g.values[k] - mean);
      var /= static_cast<double>(grads.size());
      CHECK(std::fabs(emp.values[k] - (var + mean * mean)) < 1e-10);
    }
  }
}

TEST_CASE("fisher convergence probe tightens with sample size") {
  Rng rng(91);
  ClassifierModel model = make_classifier({4, 8, 3}, Activation::elu, 17);
  Batch data;
  data.inputs = Matrix(64, 4);
  data.labels.resize(64);
  for (std::size_t i = 0; i < 64; ++i) {
    for (std::size_t j = 0; j < 4; ++j) data.inputs(i, j) = rng.gaussian();
    data.labels[i] = static_cast<int>(rng.index(3));
  }

  const auto result = probe_fisher_convergence(model, data, {1, 8, 64}, true, 5, 12345);
  REQUIRE(result.rows.size() == 3);
  const double rel_small = result.rows[0].get("rel_l2");
  const double rel_large = result.rows[2].get("rel_l2");
  CHECK(rel_small > rel_large);
  CHECK(result.rows[2].get("cosine") > result.rows[0].get("cosine"));
  CHECK(result.stat.kind == StatKind::pearson);

  SUBCASE("oversized draws are rejected") {
    CHECK_THROWS_AS(probe_fisher_convergence(model, data, {200}, true, 2, 1), invalid_input);
  }
}

TEST_CASE("finite-difference Hessian diagonal nails a closed-form quadratic") {
  // f(theta) = 3 theta0^2 + 2 theta0 + 0.5 theta1^2: H = diag(6, 1)
  auto grad_fn = [](const std::vector<double>& theta) {
    return std::vector<double>{6.0 * theta[0] + 2.0, theta[1]};
  };
  const auto diag = fd_hessian_diag(grad_fn, {0.3, -1.2}, 1e-4);
  CHECK(std::fabs(diag[0] - 6.0) < 1e-6);
  CHECK(std::fabs(diag[1] - 1.0) < 1e-6);
}

TEST_CASE("hessian gap probe: well-specified fit beats the label-noise variant") {
  Rng rng(5);
  Matrix inputs(300, 5);
  for (auto& v : inputs.data) v = rng.gaussian();
  const ClassifierModel teacher = make_classifier({5, 6, 3}, Activation::tanh, 31);

  const HessianGapResult result = probe_hessian_gap(teacher, inputs, 0.4, 400, 777);
  REQUIRE(result.rows.size() == 2);
  const double cos_clean = result.rows[0].get("cosine");
  const double cos_noisy = result.rows[1].get("cosine");
  CHECK(cos_clean >= 0.99);
  CHECK(cos_noisy < cos_clean);

  SUBCASE("oversized models are rejected") {
    const ClassifierModel big = make_classifier({64, 64, 8}, Activation::elu, 3);
    CHECK_THROWS_AS(probe_hessian_gap(big, inputs, 0.4, 10, 1), invalid_input);
  }
}

TEST_CASE("batch probes: noise falls with batch size, SI path integral tracks it") {
  ProbeTrainSpec spec;
  spec.stream.d = 6;
  spec.stream.k = 3;
  spec.stream.n_subjects = 1;
  spec.stream.n_train = 48;
  spec.stream.n_test = 12;
  spec.stream.noise_sigma = 0.4;
  spec.stream.label_flip = 0.1;
  spec.stream.holdout_frac = 0.0;
  spec.hidden = {8};
  spec.epochs = 2;

  const auto result = probe_si_batch_inflation(spec, {1, 4, 16, 48}, {1, 2});
  REQUIRE(result.rows.size() == 8);
  double var_b1 = 0.0, var_full = 0.0, w_b1 = 0.0, w_full = 0.0;
  for (const auto& row : result.rows) {
    if (row.get("batch_size") == 1.0) {
      var_b1 += row.get("grad_variance");
      w_b1 += row.get("mean_abs_w");
    }
    if (row.get("batch_size") == 48.0) {
      var_full += row.get("grad_variance");
      w_full += row.get("mean_abs_w");
    }
  }
  CHECK(var_b1 > var_full);
  CHECK(var_full < 1e-20);  // full batch sees the full-data gradient exactly
  CHECK(w_b1 > w_full);
  CHECK(result.variance_vs_magnitude.kind == StatKind::pearson);

  SUBCASE("noiseless full-batch anchor sits at zero variance and minimal |w|") {
    ProbeTrainSpec quiet = spec;
    quiet.stream.noise_sigma = 0.0;
    quiet.stream.label_flip = 0.0;
    quiet.use_adam = false;
    quiet.lr = 0.05;
    const auto anchor = probe_si_batch_inflation(quiet, {1, 8, 48}, {1});
    double w_min = 1e300, w_at_full = 0.0;
    for (const auto& row : anchor.rows) {
      w_min = std::min(w_min, row.get("mean_abs_w"));
      if (row.get("batch_size") == 48.0) {
        w_at_full = row.get("mean_abs_w");
        CHECK(row.get("grad_variance") < 1e-20);
      }
    }
    CHECK(w_at_full == doctest::Approx(w_min).epsilon(1e-12));
  }
}

TEST_CASE("MAS omega is stable across batch sizes on a noiseless stream") {
  // two epochs keep total optimizer effort low enough that the step-count
  // confound (more steps at small batches inflate the logits) stays inside
  // the 5% band; the batch-composition noise alone barely moves omega
  ProbeTrainSpec spec;
  spec.stream.d = 6;
  spec.stream.k = 3;
  spec.stream.n_subjects = 1;
  spec.stream.n_train = 48;
  spec.stream.n_test = 12;
  spec.stream.noise_sigma = 0.0;
  spec.stream.label_flip = 0.0;
  spec.stream.spike_prob = 0.0;
  spec.stream.holdout_frac = 0.0;
  spec.hidden = {8};
  spec.epochs = 2;

  const auto result = probe_mas_batch_robustness(spec, {1, 4, 16, 48}, {1});
  double mean = 0.0;
  for (const auto& row : result.rows) mean += row.get("mean_omega");
  mean /= static_cast<double>(result.rows.size());
  for (const auto& row : result.rows) {
    CHECK(std::fabs(row.get("mean_omega") - mean) / mean < 0.05);
  }
}

TEST_CASE("probe outputs are deterministic given seeds") {
  Rng rng(101);
  ClassifierModel model = make_classifier({4, 6, 3}, Activation::elu, 13);
  Batch data;
  data.inputs = Matrix(32, 4);
  data.labels.resize(32);
  for (std::size_t i = 0; i < 32; ++i) {
    for (std::size_t j = 0; j < 4; ++j) data.inputs(i, j) = rng.gaussian();
    data.labels[i] = static_cast<int>(rng.index(3));
  }
  const auto a = probe_fisher_convergence(model, data, {1, 8, 32}, true, 3, 555);
  const auto b = probe_fisher_convergence(model, data, {1, 8, 32}, true, 3, 555);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].get("cosine") == b.rows[i].get("cosine"));
    CHECK(a.rows[i].get("rel_l2") == b.rows[i].get("rel_l2"));
  }
}

TEST_CASE("MAS batch probe reports omega magnitude per batch size") {
  ProbeTrainSpec spec;
  spec.stream.d = 6;
  spec.stream.k = 3;
  spec.stream.n_subjects = 1;
  spec.stream.n_train = 48;
  spec.stream.n_test = 12;
  spec.stream.noise_sigma = 0.4;
  spec.stream.holdout_frac = 0.0;
  spec.hidden = {8};
  spec.epochs = 2;

  const auto result = probe_mas_batch_robustness(spec, {1, 4, 48}, {1});
  REQUIRE(result.rows.size() == 3);
  for (const auto& row : result.rows) {
    CHECK(row.get("mean_omega") > 0.0);
    CHECK(std::isfinite(row.get("mean_omega")));
  }
  CHECK_THROWS_AS(probe_mas_batch_robustness(spec, {1, 4}, {1}), invalid_input);
}

namespace {

ParamVector with_layout(std::vector<double> values, LayoutPtr layout) {
  ParamVector v;
  v.values = std::move(values);
  v.layout = std::move(layout);
  return v;
}

}  // namespace

TEST_CASE("gradient interference probe") {
  const auto layout = ParamLayout::create({{"a", 0, 2}, {"b", 2, 2}});

  TaskSnapshots snaps;
  snaps.theta_start = {with_layout({0, 0, 0, 0}, layout), with_layout({1, 1, 1, 1}, layout)};
  snaps.theta_after = snaps.theta_start;
  snaps.omega_after = {with_layout({5, 4, 3, 2}, layout), with_layout({5, 4, 3, 2}, layout)};
  snaps.standalone_importance = {with_layout({1, 1, 1, 1}, layout),
                                 with_layout({5, 4, 3, 2}, layout)};

  SUBCASE("identical gradients give cosine 1 at every fraction") {
    snaps.grad_current = {with_layout({1, 2, 3, 4}, layout), with_layout({1, 2, 3, 4}, layout)};
    snaps.grad_previous = snaps.grad_current;
    const auto rows = probe_gradient_interference(snaps, {0.05, 0.20, 1.0});
    REQUIRE(rows.size() == 3);
    for (const auto& row : rows) {
      CHECK(row.get("cosine") == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(row.get("flagged") == 0.0);
    }
  }

  SUBCASE("antagonistic gradients give cosine -1") {
    snaps.grad_current = {with_layout({1, 1, 1, 1}, layout), with_layout({2, 2, 2, 2}, layout)};
    snaps.grad_previous = {with_layout({0, 0, 0, 0}, layout),
                           with_layout({-2, -2, -2, -2}, layout)};
    const auto rows = probe_gradient_interference(snaps, {1.0});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].get("cosine") == doctest::Approx(-1.0).epsilon(1e-12));
  }

  SUBCASE("naive uses every parameter regardless of fraction") {
    snaps.naive = true;
    snaps.grad_current = {with_layout({1, 2, 3, 4}, layout), with_layout({1, 2, 3, 4}, layout)};
    snaps.grad_previous = snaps.grad_current;
    const auto rows = probe_gradient_interference(snaps, {0.05, 1.0});
    for (const auto& row : rows) CHECK(row.get("overlap") == 4.0);
  }

  SUBCASE("disjoint top sets flag the row and omit the cosine") {
    snaps.omega_after[0] = with_layout({9, 8, 0, 0}, layout);
    snaps.standalone_importance[1] = with_layout({0, 0, 9, 8}, layout);
    snaps.grad_current = {with_layout({1, 2, 3, 4}, layout), with_layout({1, 2, 3, 4}, layout)};
    snaps.grad_previous = snaps.grad_current;
    const auto rows = probe_gradient_interference(snaps, {0.5});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].get("flagged") == 1.0);
    CHECK(std::isnan(rows[0].get("cosine")));
    const std::string csv = probe_rows_to_csv(rows);
    CHECK(csv.find(",1,") != std::string::npos);   // flagged column
    CHECK(csv.back() == '\n');
    CHECK(csv.substr(csv.size() - 2) == ",\n");    // empty cosine cell
  }
}

TEST_CASE("importance accumulation probe correlates omega with the next delta") {
  const auto layout = ParamLayout::create({{"a", 0, 2}, {"b", 2, 2}});
  TaskSnapshots snaps;
  // omega grows across tasks; the group with large omega moves less next task
  snaps.omega_after = {with_layout({1, 1, 10, 10}, layout),
                       with_layout({2, 2, 20, 20}, layout),
                       with_layout({3, 3, 30, 30}, layout)};
  snaps.theta_start = {with_layout({0, 0, 0, 0}, layout), with_layout({1, 1, 0.1, 0.1}, layout),
                       with_layout({1.8, 1.8, 0.15, 0.15}, layout)};
  snaps.theta_after = {with_layout({1, 1, 0.1, 0.1}, layout),
                       with_layout({1.8, 1.8, 0.15, 0.15}, layout),
                       with_layout({2.4, 2.4, 0.17, 0.17}, layout)};
  snaps.grad_current = snaps.omega_after;
  snaps.grad_previous = snaps.omega_after;
  snaps.standalone_importance = snaps.omega_after;

  const auto result = probe_importance_accumulation(snaps);
  CHECK(result.rows.size() == 6);  // 3 tasks x 2 groups
  CHECK(result.stat.statistic < 0.0);
  CHECK_FALSE(result.stat.degenerate);

  SUBCASE("constant inputs are flagged degenerate with p = 1") {
    TaskSnapshots flat = snaps;
    for (auto& o : flat.omega_after) o = with_layout({1, 1, 1, 1}, layout);
    flat.theta_start = {with_layout({0, 0, 0, 0}, layout), with_layout({1, 1, 1, 1}, layout),
                        with_layout({2, 2, 2, 2}, layout)};
    flat.theta_after = {with_layout({1, 1, 1, 1}, layout), with_layout({2, 2, 2, 2}, layout),
                        with_layout({3, 3, 3, 3}, layout)};
    const auto degenerate = probe_importance_accumulation(flat);
    CHECK(degenerate.stat.degenerate);
    CHECK(degenerate.stat.p_value == 1.0);
  }
}

TEST_CASE("probe CSV keeps stable column order") {
  ProbeRow row;
  row.key = "r1";
  row.set("alpha", 1.0);
  row.set("beta", 2.0);
  const std::string csv = probe_rows_to_csv({row});
  CHECK(csv == "key,alpha,beta\nr1,1,2\n");
}
