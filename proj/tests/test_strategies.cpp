#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "clreg/errors.hpp"
#include "clreg/strategies.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace clreg;

namespace {

ParamVector plain(std::initializer_list<double> values) {
  ParamVector v;
  v.values = values;
  return v;
}

}  // namespace

TEST_CASE("penalty is zero at the anchor and inactive before the first boundary") {
  ImportanceMap map = make_importance_map(plain({0.0, 0.0}));
  map.omega = plain({3.0, 5.0});
  map.anchor = plain({1.0, -1.0});

  SUBCASE("no anchor yet") {
    const PenaltyResult pr = penalty_and_grad(map, plain({9.0, 9.0}), 2.0);
    CHECK(pr.penalty == 0.0);
    CHECK(pr.grad.values == std::vector<double>{0.0, 0.0});
  }

  map.has_anchor = true;
  SUBCASE("theta equals anchor") {
    const PenaltyResult pr = penalty_and_grad(map, map.anchor, 2.0);
    CHECK(pr.penalty == 0.0);
    CHECK(pr.grad.values == std::vector<double>{0.0, 0.0});
  }
  SUBCASE("lambda zero behaves like naive") {
    const PenaltyResult pr = penalty_and_grad(map, plain({7.0, 7.0}), 0.0);
    CHECK(pr.penalty == 0.0);
    CHECK(pr.grad.values == std::vector<double>{0.0, 0.0});
  }
}

TEST_CASE("penalty hand case: omega [2,0], anchor [1,1], theta [3,1], lambda 0.5") {
  ImportanceMap map = make_importance_map(plain({0.0, 0.0}));
  map.omega = plain({2.0, 0.0});
  map.anchor = plain({1.0, 1.0});
  map.has_anchor = true;
  const PenaltyResult pr = penalty_and_grad(map, plain({3.0, 1.0}), 0.5);
  CHECK(pr.penalty == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(pr.grad.values[0] == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(pr.grad.values[1] == 0.0);
}

TEST_CASE("penalty gradient matches finite differences of the penalty scalar") {
  Rng rng(5);
  ImportanceMap map = make_importance_map(plain({0, 0, 0, 0}));
  map.has_anchor = true;
  for (auto& v : map.omega.values) v = std::fabs(rng.gaussian());
  for (auto& v : map.anchor.values) v = rng.gaussian();
  ParamVector theta = zeros_like(map.anchor);
  for (auto& v : theta.values) v = rng.gaussian();
  const double lambda = 0.7;

  const PenaltyResult pr = penalty_and_grad(map, theta, lambda);
  auto penalty_at = [&](const std::vector<double>& values) {
    ParamVector t = theta;
    t.values = values;
    return penalty_and_grad(map, t, lambda).penalty;
  };
  const auto fd = test_util::fd_gradient(penalty_at, theta.values);
  for (std::size_t k = 0; k < fd.size(); ++k) {
    CHECK(test_util::rel_err(pr.grad.values[k], fd[k]) < 1e-6);
  }
}

TEST_CASE("empirical Fisher estimation") {
  Rng rng(13);
  ClassifierModel model = test_util::random_model(rng);
  Batch data = test_util::random_batch(model, 4, rng);

  SUBCASE("matches an independent per-sample loop") {
    Rng fisher_rng(99);
    const ParamVector fisher = ewc_estimate_fisher(model, data, 4, fisher_rng);
    // oracle: square each per-sample gradient and average, coded separately
    const auto grads = per_sample_grads(model, data);
    for (std::size_t k = 0; k < fisher.size(); ++k) {
      double expected = 0.0;
      for (const auto& g : grads) expected += g.values[k] * g.values[k];
      expected /= 4.0;
      CHECK(std::fabs(fisher.values[k] - expected) < 1e-12);
    }
  }

  SUBCASE("single sample gives exactly g squared") {
    Batch one;
    one.inputs = Matrix(1, model.input_dim());
    for (std::size_t j = 0; j < model.input_dim(); ++j) one.inputs(0, j) = data.inputs(0, j);
    one.labels = {data.labels[0]};
    Rng fisher_rng(3);
    const ParamVector fisher = ewc_estimate_fisher(model, one, 1, fisher_rng);
    const ParamVector g = nll_loss_and_grad(model, one).grad;
    for (std::size_t k = 0; k < fisher.size(); ++k) {
      CHECK(fisher.values[k] == g.values[k] * g.values[k]);
    }
  }

  SUBCASE("oversampling draws with replacement and stays finite") {
    Rng fisher_rng(8);
    const ParamVector fisher = ewc_estimate_fisher(model, data, 16, fisher_rng);
    for (double v : fisher.values) {
      CHECK(v >= 0.0);
      CHECK(std::isfinite(v));
    }
  }

  SUBCASE("empty data is rejected") {
    Batch empty;
    empty.inputs = Matrix(0, model.input_dim());
    Rng fisher_rng(1);
    CHECK_THROWS_AS(ewc_estimate_fisher(model, empty, 4, fisher_rng), invalid_input);
  }
}

TEST_CASE("a confident model has near-zero empirical Fisher") {
  // strong weights, labels equal to the argmax predictions
  ClassifierModel model;
  model.layer_sizes = {1, 2};
  model.activation = Activation::elu;
  model.params = make_param_vector(classifier_layout(model.layer_sizes));
  model.params.values = {25.0, -25.0, 0.0, 0.0};
  Batch data;
  data.inputs = Matrix(2, 1);
  data.inputs(0, 0) = 1.0;
  data.inputs(1, 0) = 2.0;
  data.labels = {0, 0};
  Rng rng(4);
  const ParamVector fisher = ewc_estimate_fisher(model, data, 2, rng);
  for (double v : fisher.values) CHECK(v < 1e-8);
}

TEST_CASE("online EWC running Fisher update") {
  ParamVector params = plain({0.5, -0.5});
  EwcState state = make_ewc_state(params, 0.9, 500);
  ImportanceMap map = make_importance_map(params);

  ewc_task_end(state, plain({1.0, 2.0}), params, map);
  CHECK(state.running_fisher.values == std::vector<double>{1.0, 2.0});
  CHECK(map.omega.values == std::vector<double>{1.0, 2.0});
  CHECK(map.anchor.values == params.values);
  CHECK(map.has_anchor);

  ewc_task_end(state, plain({1.0, 0.0}), params, map);
  CHECK(state.running_fisher.values[0] == doctest::Approx(1.9).epsilon(1e-15));
  CHECK(state.running_fisher.values[1] == doctest::Approx(1.8).epsilon(1e-15));

  SUBCASE("gamma = 1 accumulates a plain sum") {
    EwcState sum_state = make_ewc_state(params, 1.0, 500);
    ImportanceMap sum_map = make_importance_map(params);
    for (int task = 0; task < 3; ++task) {
      ewc_task_end(sum_state, plain({1.0, 0.0}), params, sum_map);
    }
    CHECK(sum_state.running_fisher.values[0] == 3.0);
  }

  SUBCASE("running Fisher stays within [0, max/(1-gamma)]") {
    EwcState bound_state = make_ewc_state(params, 0.9, 500);
    ImportanceMap bound_map = make_importance_map(params);
    const double f_max = 2.0;
    Rng rng(21);
    for (int task = 0; task < 200; ++task) {
      ewc_task_end(bound_state, plain({f_max * rng.uniform(), f_max * rng.uniform()}),
                   params, bound_map);
      for (double v : bound_state.running_fisher.values) {
        CHECK(v >= 0.0);
        CHECK(v <= f_max / (1.0 - 0.9) + 1e-9);
      }
    }
  }
}

TEST_CASE("SI path integral accumulation") {
  ParamVector params = plain({0.0});
  SiTaskState si = make_si_state(params, 0.01);

  SUBCASE("SGD step increments by eta g^2") {
    StepRecord rec;
    rec.grad = plain({2.0});
    rec.delta = plain({-0.2});  // eta = 0.1
    si_accumulate_step(si, rec);
    CHECK(si.w.values[0] == doctest::Approx(0.4).epsilon(1e-15));
  }

  SUBCASE("zero gradient leaves w untouched") {
    StepRecord rec;
    rec.grad = plain({0.0});
    rec.delta = plain({-0.5});
    si_accumulate_step(si, rec);
    CHECK(si.w.values[0] == 0.0);
  }

  SUBCASE("an ascent step decreases w") {
    StepRecord rec;
    rec.grad = plain({2.0});
    rec.delta = plain({0.2});  // moving along +grad
    si_accumulate_step(si, rec);
    CHECK(si.w.values[0] == doctest::Approx(-0.4).epsilon(1e-15));
  }
}

TEST_CASE("SI task-end importance update") {
  SUBCASE("hand case: w 0.4, delta 0.2, xi 0.01") {
    ParamVector start = plain({0.0});
    SiTaskState si = make_si_state(start, 0.01);
    si.w.values[0] = 0.4;
    ImportanceMap map = make_importance_map(start);
    si_task_end(si, map, plain({0.2}));
    CHECK(map.omega.values[0] == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(map.anchor.values[0] == 0.2);
    CHECK(si.w.values[0] == 0.0);
    CHECK(si.theta_start.values[0] == 0.2);
  }

  SUBCASE("zero w leaves omega unchanged") {
    SiTaskState si = make_si_state(plain({1.0}), 0.1);
    ImportanceMap map = make_importance_map(plain({1.0}));
    si_task_end(si, map, plain({2.0}));
    CHECK(map.omega.values[0] == 0.0);
  }

  SUBCASE("dampening prevents blow-up when the parameter never moved") {
    SiTaskState si = make_si_state(plain({1.0}), 0.1);
    si.w.values[0] = 0.1;
    ImportanceMap map = make_importance_map(plain({1.0}));
    si_task_end(si, map, plain({1.0}));  // delta = 0
    CHECK(map.omega.values[0] == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("negative path integrals are clamped to zero") {
    SiTaskState si = make_si_state(plain({0.0}), 0.1);
    si.w.values[0] = -2.0;
    ImportanceMap map = make_importance_map(plain({0.0}));
    si_task_end(si, map, plain({0.5}));
    CHECK(map.omega.values[0] == 0.0);
  }
}

TEST_CASE("SI under deterministic full-batch SGD equals eta times summed g^2") {
  Rng rng(17);
  ClassifierModel model = test_util::random_model(rng);
  const Batch data = test_util::random_batch(model, 12, rng);
  SiTaskState si = make_si_state(model.params, 0.1);
  const double eta = 0.05;

  std::vector<double> oracle(model.params.size(), 0.0);
  for (int step = 0; step < 40; ++step) {
    const LossGrad lg = nll_loss_and_grad(model, data);
    for (std::size_t k = 0; k < oracle.size(); ++k) {
      oracle[k] += eta * lg.grad.values[k] * lg.grad.values[k];
    }
    const StepRecord rec = sgd_step(model.params, lg.grad, eta);
    si_accumulate_step(si, rec);
  }
  for (std::size_t k = 0; k < oracle.size(); ++k) {
    CHECK(std::fabs(si.w.values[k] - oracle[k]) < 1e-10);
  }
}

TEST_CASE("MAS importance update") {
  SUBCASE("zero-output model contributes nothing") {
    ClassifierModel model;
    model.layer_sizes = {2, 2};
    model.activation = Activation::elu;
    model.params = make_param_vector(classifier_layout(model.layer_sizes));
    Batch data;
    data.inputs = Matrix(3, 2);
    data.labels = {0, 1, 0};
    ImportanceMap map = make_importance_map(model.params);
    mas_task_end(model, data, map, model.params);
    // weights see zero logits; every gradient is zero
    for (double v : map.omega.values) CHECK(v == 0.0);
  }

  SUBCASE("scalar model on inputs {3, -3}: absolute value kills the sign") {
    ClassifierModel model;
    model.layer_sizes = {1, 1};
    model.activation = Activation::elu;
    model.params = make_param_vector(classifier_layout(model.layer_sizes));
    model.params.values = {2.0, 0.0};
    Batch data;
    data.inputs = Matrix(2, 1);
    data.inputs(0, 0) = 3.0;
    data.inputs(1, 0) = -3.0;
    data.labels = {0, 0};
    ImportanceMap map = make_importance_map(model.params);
    mas_task_end(model, data, map, model.params);
    CHECK(map.omega.values[0] == doctest::Approx(36.0).epsilon(1e-12));
  }

  SUBCASE("n = 1 equals the absolute output-norm gradient") {
    Rng rng(23);
    ClassifierModel model = test_util::random_model(rng);
    Batch one = test_util::random_batch(model, 1, rng);
    ImportanceMap map = make_importance_map(model.params);
    mas_task_end(model, one, map, model.params);
    const ParamVector g = output_norm_grad(model, one);
    for (std::size_t k = 0; k < g.size(); ++k) {
      CHECK(map.omega.values[k] == doctest::Approx(std::fabs(g.values[k])).epsilon(1e-12));
    }
  }

  SUBCASE("importance ignores label permutations") {
    Rng rng(29);
    ClassifierModel model = test_util::random_model(rng);
    Batch data = test_util::random_batch(model, 6, rng);
    ImportanceMap a = make_importance_map(model.params);
    mas_task_end(model, data, a, model.params);

    Batch permuted = data;
    for (auto& label : permuted.labels) {
      label = static_cast<int>((label + 1) % static_cast<int>(model.num_classes()));
    }
    ImportanceMap b = make_importance_map(model.params);
    mas_task_end(model, permuted, b, model.params);
    CHECK(a.omega.values == b.omega.values);
  }
}

TEST_CASE("omega accumulates monotonically for SI and MAS across boundaries") {
  Rng rng(41);
  ClassifierModel model = test_util::random_model(rng);
  ImportanceMap si_map = make_importance_map(model.params);
  ImportanceMap mas_map = make_importance_map(model.params);
  SiTaskState si = make_si_state(model.params, 0.1);

  std::vector<double> prev_si(model.params.size(), 0.0);
  std::vector<double> prev_mas(model.params.size(), 0.0);
  for (int task = 0; task < 4; ++task) {
    const Batch data = test_util::random_batch(model, 5, rng);
    for (int step = 0; step < 10; ++step) {
      const LossGrad lg = nll_loss_and_grad(model, data);
      const StepRecord rec = sgd_step(model.params, lg.grad, 0.05);
      si_accumulate_step(si, rec);
    }
    si_task_end(si, si_map, model.params);
    mas_task_end(model, data, mas_map, model.params);
    for (std::size_t k = 0; k < prev_si.size(); ++k) {
      CHECK(si_map.omega.values[k] >= prev_si[k]);
      CHECK(mas_map.omega.values[k] >= prev_mas[k]);
      prev_si[k] = si_map.omega.values[k];
      prev_mas[k] = mas_map.omega.values[k];
    }
  }
}

TEST_CASE("naive strategy never accumulates importance or penalty") {
  Rng rng(43);
  ClassifierModel model = test_util::random_model(rng);
  ContinualStrategy strategy(StrategyKind::naive, StrategyHyper{}, model.params);
  Rng fisher_rng(1);
  for (int task = 0; task < 3; ++task) {
    const Batch data = test_util::random_batch(model, 4, rng);
    strategy.task_start(model.params);
    strategy.task_end(model, data, fisher_rng);
    const PenaltyResult pr = strategy.penalty_and_grad(model.params);
    CHECK(pr.penalty == 0.0);
    for (double v : pr.grad.values) CHECK(v == 0.0);
    for (double v : strategy.importance().omega.values) CHECK(v == 0.0);
  }
}
