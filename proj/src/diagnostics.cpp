#include "clreg/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "clreg/csvio.hpp"
#include "clreg/errors.hpp"
#include "clreg/optim.hpp"
#include "clreg/rng.hpp"
#include "clreg/strategies.hpp"
#include "json.hpp"

namespace clreg {

double ProbeRow::get(const std::string& name) const {
  for (const auto& [k, v] : values) {
    if (k == name) return v;
  }
  throw invalid_input("ProbeRow: no value named " + name);
}

std::string probe_rows_to_csv(const std::vector<ProbeRow>& rows) {
  std::ostringstream out;
  if (rows.empty()) return "key\n";
  out << "key";
  for (const auto& [name, _] : rows[0].values) out << "," << name;
  out << "\n";
  for (const auto& row : rows) {
    out << row.key;
    for (const auto& [_, v] : row.values) {
      out << ",";
      if (!std::isnan(v)) out << format_double(v);
    }
    out << "\n";
  }
  return out.str();
}

void write_probe_csv(const std::vector<ProbeRow>& rows, const std::filesystem::path& path) {
  write_text_file(path, probe_rows_to_csv(rows));
}

void write_stat_json(const StatResult& stat, const std::filesystem::path& path) {
  nlohmann::json j;
  j["statistic"] = stat.statistic;
  j["p_value"] = stat.p_value;
  j["n"] = stat.n;
  j["kind"] = stat_kind_name(stat.kind);
  j["degenerate"] = stat.degenerate;
  write_text_file(path, j.dump(2) + "\n");
}

double cosine_similarity(const ParamVector& a, const ParamVector& b) {
  check_same_shape(a, b);
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

double relative_l2_error(const ParamVector& estimate, const ParamVector& reference) {
  check_same_shape(estimate, reference);
  const double ref_norm = l2_norm(reference);
  if (ref_norm == 0.0) return l2_norm(estimate) == 0.0 ? 0.0 : INFINITY;
  double diff2 = 0.0;
  for (std::size_t i = 0; i < estimate.values.size(); ++i) {
    const double d = estimate.values[i] - reference.values[i];
    diff2 += d * d;
  }
  return std::sqrt(diff2) / ref_norm;
}

ParamVector true_fisher_diag(const ClassifierModel& model, const Matrix& inputs) {
  const std::size_t k = model.num_classes();
  if (k > 16) throw invalid_input("true_fisher_diag: K must be <= 16 to enumerate");
  if (inputs.rows == 0) throw invalid_input("true_fisher_diag: empty inputs");
  const Matrix probs = softmax_rows(forward(model, inputs));

  ParamVector diag = zeros_like(model.params);
  Batch one;
  one.inputs = Matrix(1, inputs.cols);
  one.labels.resize(1);
  for (std::size_t i = 0; i < inputs.rows; ++i) {
    for (std::size_t j = 0; j < inputs.cols; ++j) one.inputs(0, j) = inputs(i, j);
    for (std::size_t y = 0; y < k; ++y) {
      one.labels[0] = static_cast<int>(y);
      const ParamVector g = nll_loss_and_grad(model, one).grad;
      const double p = probs(i, y);
      for (std::size_t c = 0; c < diag.values.size(); ++c) {
        diag.values[c] += p * g.values[c] * g.values[c];
      }
    }
  }
  scale(diag, 1.0 / static_cast<double>(inputs.rows));
  return diag;
}

ParamVector empirical_fisher_diag(const ClassifierModel& model, const Batch& batch) {
  const auto grads = per_sample_grads(model, batch);
  ParamVector diag = zeros_like(model.params);
  for (const auto& g : grads) {
    for (std::size_t c = 0; c < diag.values.size(); ++c) {
      diag.values[c] += g.values[c] * g.values[c];
    }
  }
  scale(diag, 1.0 / static_cast<double>(grads.size()));
  return diag;
}

namespace {

int sample_categorical(const Matrix& probs, std::size_t row, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t y = 0; y < probs.cols; ++y) {
    cum += probs(row, y);
    if (u < cum) return static_cast<int>(y);
  }
  return static_cast<int>(probs.cols - 1);
}

StatResult safe_pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  try {
    return pearson(xs, ys);
  } catch (const numeric_error&) {
    StatResult degenerate;
    degenerate.statistic = 0.0;
    degenerate.p_value = 1.0;
    degenerate.n = xs.size();
    degenerate.kind = StatKind::pearson;
    degenerate.degenerate = true;
    return degenerate;
  }
}

}  // namespace

FisherConvergenceResult probe_fisher_convergence(const ClassifierModel& model,
                                                 const Batch& data,
                                                 const std::vector<std::size_t>& sizes,
                                                 bool resample_labels, std::size_t n_draws,
                                                 std::uint64_t seed) {
  if (n_draws == 0) throw invalid_input("probe_fisher_convergence: need n_draws >= 1");
  for (std::size_t n : sizes) {
    if (n == 0 || n > data.size()) {
      throw invalid_input("probe_fisher_convergence: sizes must lie in [1, data size]");
    }
  }
  const ParamVector reference = true_fisher_diag(model, data.inputs);
  const Matrix probs = softmax_rows(forward(model, data.inputs));

  FisherConvergenceResult result;
  std::vector<double> log_sizes, mean_cosines;
  for (std::size_t n : sizes) {
    double cos_sum = 0.0, rel_sum = 0.0;
    for (std::size_t d = 0; d < n_draws; ++d) {
      Rng rng(derive_seed(seed, "draw_" + std::to_string(n) + "_" + std::to_string(d)));
      std::vector<std::size_t> indices(data.size());
      std::iota(indices.begin(), indices.end(), std::size_t{0});
      shuffle(indices, rng);
      Batch sub;
      sub.inputs = Matrix(n, data.inputs.cols);
      sub.labels.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = indices[i];
        for (std::size_t j = 0; j < data.inputs.cols; ++j) {
          sub.inputs(i, j) = data.inputs(src, j);
        }
        sub.labels[i] = resample_labels ? sample_categorical(probs, src, rng)
                                        : data.labels[src];
      }
      const ParamVector emp = empirical_fisher_diag(model, sub);
      cos_sum += cosine_similarity(emp, reference);
      rel_sum += relative_l2_error(emp, reference);
    }
    ProbeRow row;
    row.key = "n_" + std::to_string(n);
    row.set("sample_size", static_cast<double>(n));
    row.set("cosine", cos_sum / static_cast<double>(n_draws));
    row.set("rel_l2", rel_sum / static_cast<double>(n_draws));
    result.rows.push_back(std::move(row));
    log_sizes.push_back(std::log10(static_cast<double>(n)));
    mean_cosines.push_back(cos_sum / static_cast<double>(n_draws));
  }
  result.stat = log_sizes.size() >= 3 ? safe_pearson(log_sizes, mean_cosines) : StatResult{};
  if (log_sizes.size() < 3) {
    result.stat.degenerate = true;
    result.stat.n = log_sizes.size();
  }
  return result;
}

std::vector<double> fd_hessian_diag(
    const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
    std::vector<double> theta, double eps) {
  std::vector<double> diag(theta.size(), 0.0);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double saved = theta[k];
    theta[k] = saved + eps;
    const double g_plus = grad_fn(theta)[k];
    theta[k] = saved - eps;
    const double g_minus = grad_fn(theta)[k];
    theta[k] = saved;
    const double h = (g_plus - g_minus) / (2.0 * eps);
    if (!std::isfinite(h)) throw numeric_error("fd_hessian_diag: non-finite difference");
    diag[k] = h;
  }
  return diag;
}

HessianGapResult probe_hessian_gap(const ClassifierModel& teacher, const Matrix& inputs,
                                   double flip_fraction, std::size_t train_steps,
                                   std::uint64_t seed) {
  if (teacher.params.size() > 2000) {
    throw invalid_input("probe_hessian_gap: model too large for FD Hessian (> 2000 params)");
  }
  const std::size_t k = teacher.num_classes();

  // well-specified data: labels drawn from the teacher's own predictions
  Rng label_rng(derive_seed(seed, "labels"));
  const Matrix teacher_probs = softmax_rows(forward(teacher, inputs));
  Batch data;
  data.inputs = inputs;
  data.labels.resize(inputs.rows);
  for (std::size_t i = 0; i < inputs.rows; ++i) {
    data.labels[i] = sample_categorical(teacher_probs, i, label_rng);
  }

  // converge a fresh student of the same shape with full-batch Adam
  ClassifierModel student =
      make_classifier(teacher.layer_sizes, teacher.activation, derive_seed(seed, "init"));
  AdamState adam = make_adam_state(student.params, 1e-2);
  for (std::size_t step = 0; step < train_steps; ++step) {
    const LossGrad lg = nll_loss_and_grad(student, data);
    if (!std::isfinite(lg.loss)) throw numeric_error("probe_hessian_gap: loss diverged");
    adam_step(student.params, lg.grad, adam);
  }

  const ParamVector fisher = true_fisher_diag(student, inputs);
  auto hessian_for_labels = [&](const Batch& batch) {
    ClassifierModel probe_model = student;
    auto grad_fn = [&](const std::vector<double>& theta) {
      probe_model.params.values = theta;
      return nll_loss_and_grad(probe_model, batch).grad.values;
    };
    std::vector<double> h = fd_hessian_diag(grad_fn, student.params.values, 1e-4);
    ParamVector hv = zeros_like(student.params);
    hv.values = std::move(h);
    return hv;
  };

  HessianGapResult result;
  {
    const ParamVector hess = hessian_for_labels(data);
    ProbeRow row;
    row.key = "well_specified";
    row.set("flip_fraction", 0.0);
    row.set("cosine", cosine_similarity(hess, fisher));
    row.set("rel_l2", relative_l2_error(hess, fisher));
    result.rows.push_back(std::move(row));
  }
  {
    Batch noisy = data;
    Rng flip_rng(derive_seed(seed, "flips"));
    std::vector<std::size_t> indices(noisy.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    shuffle(indices, flip_rng);
    const std::size_t n_flip =
        static_cast<std::size_t>(std::llround(flip_fraction * static_cast<double>(noisy.size())));
    for (std::size_t i = 0; i < n_flip && i < indices.size(); ++i) {
      const std::size_t idx = indices[i];
      const int y = noisy.labels[idx];
      noisy.labels[idx] =
          static_cast<int>((static_cast<std::size_t>(y) + 1 + flip_rng.index(k - 1)) % k);
    }
    const ParamVector hess = hessian_for_labels(noisy);
    ProbeRow row;
    row.key = "label_noise";
    row.set("flip_fraction", flip_fraction);
    row.set("cosine", cosine_similarity(hess, fisher));
    row.set("rel_l2", relative_l2_error(hess, fisher));
    result.rows.push_back(std::move(row));
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

struct TrackedTraining {
  double grad_noise = 0.0;   // mean over steps/coords of (g_batch - g_full)^2
  double mean_abs_w = 0.0;   // SI path integral magnitude at task end
  double mean_sqrt_v = 0.0;  // Adam second-moment scale, 0 under SGD
  ClassifierModel model;
};

TrackedTraining train_first_task_tracked(const ProbeTrainSpec& spec, std::size_t batch_size,
                                         std::uint64_t seed) {
  const StreamResult stream = generate_stream(spec.stream);
  if (stream.stream.empty()) throw invalid_input("probe: stream has no training subjects");
  const Batch& train = stream.stream.front().train;
  if (batch_size == 0 || batch_size > train.size()) {
    throw invalid_input("probe: batch size must lie in [1, n_train]");
  }

  std::vector<std::size_t> sizes;
  sizes.push_back(spec.stream.d);
  for (std::size_t h : spec.hidden) sizes.push_back(h);
  sizes.push_back(spec.stream.k);

  TrackedTraining out;
  out.model = make_classifier(sizes, spec.activation, derive_seed(seed, "probe_init"));
  SiTaskState si = make_si_state(out.model.params, spec.xi_damp);
  AdamState adam = make_adam_state(out.model.params, spec.lr);

  double noise_sum = 0.0;
  std::size_t steps = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Batch minibatch;
  minibatch.inputs = Matrix(0, train.inputs.cols);
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    Rng epoch_rng(derive_seed(derive_seed(seed, "probe_batch"), "epoch_" + std::to_string(epoch)));
    shuffle(order, epoch_rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t end = std::min(begin + batch_size, order.size());
      minibatch.inputs = Matrix(end - begin, train.inputs.cols);
      minibatch.labels.resize(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t src = order[i];
        for (std::size_t j = 0; j < train.inputs.cols; ++j) {
          minibatch.inputs(i - begin, j) = train.inputs(src, j);
        }
        minibatch.labels[i - begin] = train.labels[src];
      }
      const ParamVector g_full = nll_loss_and_grad(out.model, train).grad;
      const LossGrad lg = nll_loss_and_grad(out.model, minibatch);
      if (!std::isfinite(lg.loss)) throw numeric_error("probe: loss diverged");
      double dev2 = 0.0;
      for (std::size_t c = 0; c < g_full.values.size(); ++c) {
        const double d = lg.grad.values[c] - g_full.values[c];
        dev2 += d * d;
      }
      noise_sum += dev2 / static_cast<double>(g_full.values.size());
      ++steps;

      StepRecord rec = spec.use_adam ? adam_step(out.model.params, lg.grad, adam)
                                     : sgd_step(out.model.params, lg.grad, spec.lr);
      si_accumulate_step(si, rec);
    }
  }
  out.grad_noise = steps > 0 ? noise_sum / static_cast<double>(steps) : 0.0;
  out.mean_abs_w = mean_abs(si.w);
  if (spec.use_adam) {
    double s = 0.0;
    for (double v : adam.v.values) s += std::sqrt(std::max(v, 0.0));
    out.mean_sqrt_v = s / static_cast<double>(adam.v.values.size());
  }
  return out;
}

BatchProbeResult run_batch_probe(const ProbeTrainSpec& spec,
                                 const std::vector<std::size_t>& batch_sizes,
                                 const std::vector<std::uint64_t>& seeds,
                                 bool mas_magnitude) {
  if (batch_sizes.size() < 3) throw invalid_input("batch probe: need >= 3 batch sizes");
  if (seeds.empty()) throw invalid_input("batch probe: need >= 1 seed");

  BatchProbeResult result;
  std::vector<double> noises, magnitudes, batches;
  for (std::size_t b : batch_sizes) {
    for (std::uint64_t s : seeds) {
      const TrackedTraining tracked = train_first_task_tracked(spec, b, s);
      double magnitude = tracked.mean_abs_w;
      if (mas_magnitude) {
        const StreamResult stream = generate_stream(spec.stream);
        const Batch& train = stream.stream.front().train;
        const auto grads = per_sample_output_norm_grads(tracked.model, train);
        ParamVector omega = zeros_like(tracked.model.params);
        for (const auto& g : grads) {
          for (std::size_t c = 0; c < omega.values.size(); ++c) {
            omega.values[c] += std::fabs(g.values[c]);
          }
        }
        scale(omega, 1.0 / static_cast<double>(grads.size()));
        magnitude = mean_abs(omega);
      }
      ProbeRow row;
      row.key = "b" + std::to_string(b) + "_seed" + std::to_string(s);
      row.set("batch_size", static_cast<double>(b));
      row.set("grad_variance", tracked.grad_noise);
      row.set(mas_magnitude ? "mean_omega" : "mean_abs_w", magnitude);
      row.set("mean_sqrt_v", tracked.mean_sqrt_v);
      result.rows.push_back(std::move(row));
      noises.push_back(tracked.grad_noise);
      magnitudes.push_back(magnitude);
      batches.push_back(static_cast<double>(b));
    }
  }
  result.variance_vs_magnitude = safe_pearson(noises, magnitudes);
  result.batch_vs_magnitude = safe_pearson(batches, magnitudes);
  return result;
}

}  // namespace

BatchProbeResult probe_si_batch_inflation(const ProbeTrainSpec& spec,
                                          const std::vector<std::size_t>& batch_sizes,
                                          const std::vector<std::uint64_t>& seeds) {
  return run_batch_probe(spec, batch_sizes, seeds, false);
}

BatchProbeResult probe_mas_batch_robustness(const ProbeTrainSpec& spec,
                                            const std::vector<std::size_t>& batch_sizes,
                                            const std::vector<std::uint64_t>& seeds) {
  return run_batch_probe(spec, batch_sizes, seeds, true);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> top_fraction_indices(const ParamVector& importance, double frac) {
  const std::size_t p = importance.size();
  std::size_t count = static_cast<std::size_t>(std::llround(frac * static_cast<double>(p)));
  count = std::max<std::size_t>(1, std::min(count, p));
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // descending importance, ties broken by parameter index
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return importance.values[a] > importance.values[b];
  });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

double cosine_restricted(const ParamVector& a, const ParamVector& b,
                         const std::vector<std::size_t>& indices) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i : indices) {
    ab += a.values[i] * b.values[i];
    aa += a.values[i] * a.values[i];
    bb += b.values[i] * b.values[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace

std::vector<ProbeRow> probe_gradient_interference(const TaskSnapshots& snaps,
                                                  const std::vector<double>& topk_fracs) {
  const std::size_t t = snaps.theta_start.size();
  if (t < 2) throw invalid_input("probe_gradient_interference: need >= 2 tasks");
  std::vector<ProbeRow> rows;
  for (std::size_t tau = 1; tau < t; ++tau) {
    const ParamVector& g_prev = snaps.grad_previous[tau];
    const ParamVector& g_curr = snaps.grad_current[tau];
    const std::size_t p = g_curr.size();
    for (double f : topk_fracs) {
      std::vector<std::size_t> overlap;
      if (snaps.naive) {
        overlap.resize(p);
        std::iota(overlap.begin(), overlap.end(), std::size_t{0});
      } else {
        const auto top_a = top_fraction_indices(snaps.omega_after[tau - 1], f);
        const auto top_b = top_fraction_indices(snaps.standalone_importance[tau], f);
        std::set_intersection(top_a.begin(), top_a.end(), top_b.begin(), top_b.end(),
                              std::back_inserter(overlap));
      }
      ProbeRow row;
      row.key = "pair_" + std::to_string(tau - 1) + "_" + std::to_string(tau);
      row.set("frac", f);
      row.set("overlap", static_cast<double>(overlap.size()));
      row.set("flagged", overlap.empty() ? 1.0 : 0.0);
      row.set("cosine", overlap.empty()
                            ? std::numeric_limits<double>::quiet_NaN()
                            : cosine_restricted(g_prev, g_curr, overlap));
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

ImportanceAccumulationResult probe_importance_accumulation(const TaskSnapshots& snaps) {
  const std::size_t t = snaps.omega_after.size();
  if (t == 0) throw invalid_input("probe_importance_accumulation: no snapshots");
  const auto layout = snaps.omega_after.front().layout;
  if (!layout) throw invalid_input("probe_importance_accumulation: snapshots lack layout");

  ImportanceAccumulationResult result;
  // mean omega per (group, task) and L2 parameter change per (group, task)
  std::vector<std::vector<double>> omega_mean(t), delta_l2(t);
  for (std::size_t tau = 0; tau < t; ++tau) {
    for (const auto& group : layout->groups()) {
      double osum = 0.0, d2 = 0.0;
      for (std::size_t i = group.start; i < group.start + group.size; ++i) {
        osum += snaps.omega_after[tau].values[i];
        const double d = snaps.theta_after[tau].values[i] - snaps.theta_start[tau].values[i];
        d2 += d * d;
      }
      omega_mean[tau].push_back(osum / static_cast<double>(group.size));
      delta_l2[tau].push_back(std::sqrt(d2));
      ProbeRow row;
      row.key = "task" + std::to_string(tau) + "_" + group.name;
      row.set("task", static_cast<double>(tau));
      row.set("mean_omega", omega_mean[tau].back());
      row.set("param_delta_l2", delta_l2[tau].back());
      result.rows.push_back(std::move(row));
    }
  }

  std::vector<double> omega_prev, delta_next;
  for (std::size_t tau = 0; tau + 1 < t; ++tau) {
    for (std::size_t g = 0; g < omega_mean[tau].size(); ++g) {
      omega_prev.push_back(omega_mean[tau][g]);
      delta_next.push_back(delta_l2[tau + 1][g]);
    }
  }
  if (omega_prev.size() < 3) {
    result.stat.degenerate = true;
    result.stat.n = omega_prev.size();
  } else {
    result.stat = safe_pearson(omega_prev, delta_next);
  }
  return result;
}

}  // namespace clreg
