#include "clreg/runner.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "clreg/csvio.hpp"
#include "clreg/errors.hpp"
#include "clreg/optim.hpp"
#include "json.hpp"

namespace clreg {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw config_error("config: unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw config_error(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig c;
  try {
    reject_unknown_keys(j, {"stream", "model", "optimizer", "epochs", "batch_size",
                            "strategy", "lambda", "gamma", "xi_damp", "n_fisher", "seeds",
                            "shuffles", "output_dir"},
                        "root");
    if (j.contains("stream")) {
      const json& s = j["stream"];
      reject_unknown_keys(s, {"d", "k", "n_subjects", "n_train", "n_test", "shift_angle",
                              "drift_scale", "noise_sigma", "spike_prob", "spike_scale",
                              "label_flip", "holdout_frac", "seed"},
                          "stream");
      if (s.contains("d")) c.stream.d = s["d"].get<std::size_t>();
      if (s.contains("k")) c.stream.k = s["k"].get<std::size_t>();
      if (s.contains("n_subjects")) c.stream.n_subjects = s["n_subjects"].get<std::size_t>();
      if (s.contains("n_train")) c.stream.n_train = s["n_train"].get<std::size_t>();
      if (s.contains("n_test")) c.stream.n_test = s["n_test"].get<std::size_t>();
      if (s.contains("shift_angle")) c.stream.shift_angle = s["shift_angle"].get<double>();
      if (s.contains("drift_scale")) c.stream.drift_scale = s["drift_scale"].get<double>();
      if (s.contains("noise_sigma")) c.stream.noise_sigma = s["noise_sigma"].get<double>();
      if (s.contains("spike_prob")) c.stream.spike_prob = s["spike_prob"].get<double>();
      if (s.contains("spike_scale")) c.stream.spike_scale = s["spike_scale"].get<double>();
      if (s.contains("label_flip")) c.stream.label_flip = s["label_flip"].get<double>();
      if (s.contains("holdout_frac")) c.stream.holdout_frac = s["holdout_frac"].get<double>();
      if (s.contains("seed")) c.stream.seed = s["seed"].get<std::uint64_t>();
    }
    if (j.contains("model")) {
      const json& m = j["model"];
      reject_unknown_keys(m, {"hidden", "activation"}, "model");
      if (m.contains("hidden")) c.model.hidden = m["hidden"].get<std::vector<std::size_t>>();
      if (m.contains("activation")) {
        const std::string a = m["activation"].get<std::string>();
        if (a == "elu") {
          c.model.activation = Activation::elu;
        } else if (a == "tanh") {
          c.model.activation = Activation::tanh;
        } else {
          throw config_error("config: activation must be elu or tanh");
        }
      }
    }
    if (j.contains("optimizer")) {
      const json& o = j["optimizer"];
      reject_unknown_keys(o, {"kind", "lr"}, "optimizer");
      if (o.contains("kind")) {
        const std::string k = o["kind"].get<std::string>();
        if (k == "adam") {
          c.optimizer.use_adam = true;
        } else if (k == "sgd") {
          c.optimizer.use_adam = false;
        } else {
          throw config_error("config: optimizer kind must be sgd or adam");
        }
      }
      if (o.contains("lr")) c.optimizer.lr = o["lr"].get<double>();
    }
    if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("strategy")) c.strategy = strategy_from_name(j["strategy"].get<std::string>());
    if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
    if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
    if (j.contains("xi_damp")) c.xi_damp = j["xi_damp"].get<double>();
    if (j.contains("n_fisher")) c.n_fisher = j["n_fisher"].get<std::size_t>();
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("shuffles")) c.shuffles = j["shuffles"].get<std::size_t>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

void validate(const RunConfig& config) {
  validate(config.stream);
  if (config.lambda < 0.0) throw config_error("config: lambda must be >= 0");
  if (config.epochs < 1) throw config_error("config: epochs must be >= 1");
  if (config.batch_size < 1) throw config_error("config: batch_size must be >= 1");
  if (config.seeds.empty()) throw config_error("config: seeds must be nonempty");
  if (config.optimizer.lr <= 0.0) throw config_error("config: lr must be > 0");
  if (config.gamma <= 0.0 || config.gamma > 1.0) {
    throw config_error("config: gamma must lie in (0, 1]");
  }
  if (config.xi_damp <= 0.0) throw config_error("config: xi_damp must be > 0");
  if (config.n_fisher < 1) throw config_error("config: n_fisher must be >= 1");
}

namespace {

double test_accuracy(const ClassifierModel& model, const Batch& batch) {
  return accuracy_from_predictions(batch.labels, predict_labels(model, batch.inputs));
}

double train_macro_f1(const ClassifierModel& model, const Batch& batch, std::size_t k) {
  const auto preds = predict_labels(model, batch.inputs);
  return macro_f1(confusion_from_predictions(batch.labels, preds, k));
}

Batch gather_minibatch(const Batch& data, const std::vector<std::size_t>& order,
                       std::size_t begin, std::size_t end) {
  Batch mb;
  mb.inputs = Matrix(end - begin, data.inputs.cols);
  mb.labels.resize(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t src = order[i];
    for (std::size_t j = 0; j < data.inputs.cols; ++j) {
      mb.inputs(i - begin, j) = data.inputs(src, j);
    }
    mb.labels[i - begin] = data.labels[src];
  }
  return mb;
}

}  // namespace

RunArtifacts run_sequence(const RunConfig& config, std::uint64_t seed) {
  const StreamResult generated = generate_stream(config.stream);
  return run_sequence_on_stream(config, seed, generated.stream, generated.holdout);
}

RunArtifacts run_sequence_on_stream(const RunConfig& config, std::uint64_t seed,
                                    const std::vector<SubjectTask>& stream,
                                    const std::vector<SubjectTask>& holdout) {
  validate(config);
  if (stream.empty()) throw config_error("run: stream has no training subjects");

  std::vector<std::size_t> sizes;
  sizes.push_back(config.stream.d);
  for (std::size_t h : config.model.hidden) sizes.push_back(h);
  sizes.push_back(config.stream.k);

  RunArtifacts art;
  art.strategy = strategy_name(config.strategy);
  art.lambda = config.lambda;
  art.seed = seed;

  ClassifierModel model =
      make_classifier(sizes, config.model.activation, derive_seed(seed, "init"));
  ContinualStrategy strategy(
      config.strategy,
      StrategyHyper{config.lambda, config.gamma, config.xi_damp, config.n_fisher},
      model.params);
  art.snapshots.naive = config.strategy == StrategyKind::naive;
  AdamState adam = make_adam_state(model.params, config.optimizer.lr);
  Rng fisher_rng(derive_seed(seed, "fisher"));

  const std::size_t t_count = stream.size();
  // b: test accuracy of the freshly initialized model, before any training
  art.matrix.b.resize(t_count);
  for (std::size_t j = 0; j < t_count; ++j) {
    art.matrix.b[j] = test_accuracy(model, stream[j].test);
  }

  for (std::size_t tau = 0; tau < t_count; ++tau) {
    const auto t0 = std::chrono::steady_clock::now();
    const SubjectTask& task = stream[tau];

    // diagnostics inputs, all evaluated at the parameters this task inherits
    art.snapshots.theta_start.push_back(model.params);
    art.snapshots.grad_current.push_back(nll_loss_and_grad(model, task.train).grad);
    art.snapshots.grad_previous.push_back(
        tau > 0 ? nll_loss_and_grad(model, stream[tau - 1].train).grad
                : zeros_like(model.params));
    art.snapshots.standalone_importance.push_back(
        strategy.standalone_importance(model, task.train));

    strategy.task_start(model.params);
    std::vector<std::size_t> order(task.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::uint64_t task_batch_seed =
        derive_seed(seed, "batch_task_" + std::to_string(tau));
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      Rng epoch_rng(derive_seed(task_batch_seed, "epoch_" + std::to_string(epoch)));
      shuffle(order, epoch_rng);
      for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
        const std::size_t end = std::min(begin + config.batch_size, order.size());
        const Batch mb = gather_minibatch(task.train, order, begin, end);
        const LossGrad lg = nll_loss_and_grad(model, mb);
        const PenaltyResult pr = strategy.penalty_and_grad(model.params);
        if (!std::isfinite(lg.loss) || !std::isfinite(pr.penalty)) {
          art.aborted = true;
          art.abort_reason = "non-finite loss at task " + std::to_string(tau) +
                             " epoch " + std::to_string(epoch);
          return art;
        }
        StepRecord rec;
        if (pr.penalty != 0.0 || l2_norm(pr.grad) != 0.0) {
          ParamVector total = lg.grad;
          axpy(1.0, pr.grad, total);
          rec = config.optimizer.use_adam ? adam_step(model.params, total, adam)
                                          : sgd_step(model.params, total, config.optimizer.lr);
        } else {
          // keep the naive trajectory bit-identical at lambda = 0
          rec = config.optimizer.use_adam ? adam_step(model.params, lg.grad, adam)
                                          : sgd_step(model.params, lg.grad, config.optimizer.lr);
        }
        strategy.observe_step(StepRecord{lg.grad, rec.delta});
      }
    }

    strategy.task_end(model, task.train, fisher_rng);
    art.snapshots.theta_after.push_back(model.params);
    art.snapshots.omega_after.push_back(strategy.importance().omega);

    std::vector<double> row(t_count);
    for (std::size_t j = 0; j < t_count; ++j) row[j] = test_accuracy(model, stream[j].test);
    art.matrix.R.push_back(std::move(row));
    art.train_f1.push_back(train_macro_f1(model, task.train, config.stream.k));
    art.task_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }

  if (!holdout.empty()) {
    ConfusionCounts pooled(config.stream.k);
    for (const SubjectTask& task : holdout) {
      for (const Batch* part : {&task.train, &task.test}) {
        const auto preds = predict_labels(model, part->inputs);
        for (std::size_t i = 0; i < preds.size(); ++i) {
          pooled.add(part->labels[i], preds[i]);
        }
      }
    }
    art.unseen_f1 = macro_f1(pooled);
    art.has_unseen = true;
  }
  return art;
}

std::vector<std::string> emit_reports(const RunArtifacts& artifacts,
                                      const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> warnings;
  auto emit = [&](const std::filesystem::path& name, const std::string& content) {
    const auto path = out_dir / name;
    if (std::filesystem::exists(path)) {
      warnings.push_back("overwrote " + path.string());
    }
    write_text_file(path, content);
  };

  if (artifacts.aborted) {
    json j;
    j["aborted"] = true;
    j["reason"] = artifacts.abort_reason;
    j["strategy"] = artifacts.strategy;
    j["seed"] = artifacts.seed;
    emit("abort.json", j.dump(2) + "\n");
    if (!warnings.empty()) {
      std::string text;
      for (const auto& w : warnings) text += w + "\n";
      write_text_file(out_dir / "warnings.txt", text);
    }
    return warnings;
  }

  emit("R.csv", accuracy_matrix_to_csv(artifacts.matrix));

  json m;
  m["strategy"] = artifacts.strategy;
  m["lambda"] = artifacts.lambda;
  m["seed"] = artifacts.seed;
  m["mean_acc"] = mean_acc(artifacts.matrix);
  m["final_acc"] = final_acc(artifacts.matrix);
  if (artifacts.matrix.task_count() >= 2) {
    m["bwt"] = bwt(artifacts.matrix);
    m["fwt"] = fwt(artifacts.matrix);
  } else {
    m["bwt"] = nullptr;
    m["fwt"] = nullptr;
  }
  if (artifacts.has_unseen) {
    m["unseen_f1"] = artifacts.unseen_f1;
  } else {
    m["unseen_f1"] = nullptr;
  }
  m["train_f1"] = artifacts.train_f1;
  emit("metrics.json", m.dump(2) + "\n");

  // wall-clock lives in its own file: everything else is bit-identical
  // across reruns of the same (config, seed)
  json timing;
  timing["task_seconds"] = artifacts.task_seconds;
  emit("timing.json", timing.dump(2) + "\n");

  for (std::size_t tau = 0; tau < artifacts.snapshots.omega_after.size(); ++tau) {
    const ParamVector& omega = artifacts.snapshots.omega_after[tau];
    std::ostringstream csv;
    csv << "group,index,omega\n";
    if (omega.layout) {
      for (const auto& group : omega.layout->groups()) {
        for (std::size_t i = group.start; i < group.start + group.size; ++i) {
          csv << group.name << "," << i << "," << format_double(omega.values[i]) << "\n";
        }
      }
    } else {
      for (std::size_t i = 0; i < omega.size(); ++i) {
        csv << "all," << i << "," << format_double(omega.values[i]) << "\n";
      }
    }
    emit("omega_task" + std::to_string(tau) + ".csv", csv.str());
  }

  if (!warnings.empty()) {
    std::string text;
    for (const auto& w : warnings) text += w + "\n";
    write_text_file(out_dir / "warnings.txt", text);
  }
  return warnings;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

namespace {

struct SeedMetrics {
  std::vector<double> mean_accs, final_accs, bwts, fwts, unseen_f1s;
};

SeedMetrics collect_metrics(const RunConfig& config, StrategyKind kind, double lambda) {
  RunConfig c = config;
  c.strategy = kind;
  c.lambda = lambda;
  SeedMetrics out;
  for (std::uint64_t seed : config.seeds) {
    const RunArtifacts art = run_sequence(c, seed);
    if (art.aborted) throw numeric_error("sweep: run aborted: " + art.abort_reason);
    out.mean_accs.push_back(mean_acc(art.matrix));
    out.final_accs.push_back(final_acc(art.matrix));
    if (art.matrix.task_count() >= 2) {
      out.bwts.push_back(bwt(art.matrix));
      out.fwts.push_back(fwt(art.matrix));
    }
    if (art.has_unseen) out.unseen_f1s.push_back(art.unseen_f1);
  }
  return out;
}

// one-sided p for mean(diff) > 0; 1.0 when the difference is identically zero
double paired_greater_p(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) return 1.0;
  std::vector<double> diff(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) diff[i] = xs[i] - ys[i];
  try {
    return t_test_one_sample_greater(diff, 0.0).p_value;
  } catch (const numeric_error&) {
    return 1.0;
  }
}

SweepRow summarize(const std::string& name, double lambda, const SeedMetrics& m,
                   const SeedMetrics& naive) {
  SweepRow row;
  row.strategy = name;
  row.lambda = lambda;
  row.mean_acc_mean = mean_of(m.mean_accs);
  row.mean_acc_std = sample_std_of(m.mean_accs);
  row.final_acc_mean = mean_of(m.final_accs);
  row.final_acc_std = sample_std_of(m.final_accs);
  row.bwt_mean = mean_of(m.bwts);
  row.bwt_std = sample_std_of(m.bwts);
  row.fwt_mean = mean_of(m.fwts);
  row.fwt_std = sample_std_of(m.fwts);
  row.unseen_f1_mean = mean_of(m.unseen_f1s);
  row.unseen_f1_std = sample_std_of(m.unseen_f1s);
  row.p_bwt_gt_naive = paired_greater_p(m.bwts, naive.bwts);
  row.p_fwt_gt_naive = paired_greater_p(m.fwts, naive.fwts);
  return row;
}

}  // namespace

SweepResult sweep_lambda(const RunConfig& config, const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw config_error("sweep: lambda grid is empty");
  SweepResult result;
  const SeedMetrics naive = collect_metrics(config, StrategyKind::naive, 0.0);
  result.naive = summarize("naive", 0.0, naive, naive);
  for (double lambda : lambdas) {
    const SeedMetrics m = collect_metrics(config, config.strategy, lambda);
    result.rows.push_back(
        summarize(strategy_name(config.strategy), lambda, m, naive));
  }
  return result;
}

std::string sweep_to_csv(const SweepResult& sweep) {
  std::ostringstream out;
  out << "strategy,lambda,mean_acc_mean,mean_acc_std,final_acc_mean,final_acc_std,"
         "bwt_mean,bwt_std,fwt_mean,fwt_std,unseen_f1_mean,unseen_f1_std,"
         "p_bwt_gt_naive,p_fwt_gt_naive\n";
  auto emit = [&](const SweepRow& r) {
    out << r.strategy << "," << format_double(r.lambda) << ","
        << format_double(r.mean_acc_mean) << "," << format_double(r.mean_acc_std) << ","
        << format_double(r.final_acc_mean) << "," << format_double(r.final_acc_std) << ","
        << format_double(r.bwt_mean) << "," << format_double(r.bwt_std) << ","
        << format_double(r.fwt_mean) << "," << format_double(r.fwt_std) << ","
        << format_double(r.unseen_f1_mean) << "," << format_double(r.unseen_f1_std) << ","
        << format_double(r.p_bwt_gt_naive) << "," << format_double(r.p_fwt_gt_naive) << "\n";
  };
  emit(sweep.naive);
  for (const auto& r : sweep.rows) emit(r);
  return out.str();
}

std::vector<ShuffleRow> shuffle_grid(const RunConfig& config, std::size_t n_shuffles) {
  if (n_shuffles < 1) throw config_error("shuffle: need n >= 1");
  const StreamResult generated = generate_stream(config.stream);
  const std::uint64_t seed = config.seeds.front();
  std::vector<ShuffleRow> rows;
  for (std::size_t s = 0; s < n_shuffles; ++s) {
    std::vector<SubjectTask> ordered =
        s == 0 ? generated.stream
               : shuffle_stream(generated.stream,
                                derive_seed(config.stream.seed, "shuffle_" + std::to_string(s)));
    const RunArtifacts art = run_sequence_on_stream(config, seed, ordered, generated.holdout);
    if (art.aborted) throw numeric_error("shuffle: run aborted: " + art.abort_reason);
    ShuffleRow row;
    row.strategy = strategy_name(config.strategy);
    row.shuffle = s;
    row.unseen_f1 = art.unseen_f1;
    rows.push_back(row);
  }
  return rows;
}

std::string shuffle_rows_to_csv(const std::vector<ShuffleRow>& rows) {
  std::ostringstream out;
  out << "strategy,shuffle,unseen_f1\n";
  for (const auto& r : rows) {
    out << r.strategy << "," << r.shuffle << "," << format_double(r.unseen_f1) << "\n";
  }
  return out.str();
}

}  // namespace clreg
