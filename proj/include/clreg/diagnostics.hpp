#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "clreg/stats.hpp"
#include "clreg/stream.hpp"
#include "clreg/tensor_net.hpp"

namespace clreg {

// One row of a probe table; values keep insertion order so CSV columns are
// stable across runs.
struct ProbeRow {
  std::string key;
  std::vector<std::pair<std::string, double>> values;

  void set(const std::string& name, double v) { values.emplace_back(name, v); }
  double get(const std::string& name) const;
};

std::string probe_rows_to_csv(const std::vector<ProbeRow>& rows);
void write_probe_csv(const std::vector<ProbeRow>& rows, const std::filesystem::path& path);
void write_stat_json(const StatResult& stat, const std::filesystem::path& path);

double cosine_similarity(const ParamVector& a, const ParamVector& b);
double relative_l2_error(const ParamVector& estimate, const ParamVector& reference);

// True (model) Fisher diagonal: expectation of squared score under the
// model's own predictive distribution, enumerated over all K labels.
// Requires K <= 16.
ParamVector true_fisher_diag(const ClassifierModel& model, const Matrix& inputs);

// Mean of squared per-sample NLL gradients at the observed labels.
ParamVector empirical_fisher_diag(const ClassifierModel& model, const Batch& batch);

// --- empirical-Fisher convergence ----------------------------------------

struct FisherConvergenceResult {
  std::vector<ProbeRow> rows;  // one per sample size: cosine, rel_l2 means
  StatResult stat;             // Pearson of (log10 n, mean cosine)
};

// For each n: draw n samples (without replacement), optionally resample
// their labels from the model's predictive distribution (the well-specified
// regime), and compare the empirical Fisher diagonal against the true Fisher
// diagonal on the full data. Averaged over n_draws seeded draws.
FisherConvergenceResult probe_fisher_convergence(const ClassifierModel& model,
                                                 const Batch& data,
                                                 const std::vector<std::size_t>& sizes,
                                                 bool resample_labels, std::size_t n_draws,
                                                 std::uint64_t seed);

// --- Fisher vs Hessian gap ------------------------------------------------

// Central finite differences of an analytic gradient; eps per coordinate.
std::vector<double> fd_hessian_diag(
    const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
    std::vector<double> theta, double eps);

struct HessianGapResult {
  std::vector<ProbeRow> rows;  // well_specified and label_noise rows
};

// Trains a fresh model to convergence on labels drawn from a teacher of the
// same architecture, then compares the finite-difference NLL Hessian
// diagonal against the true Fisher diagonal -- once at the converged
// well-specified fit, once with flip_fraction of the labels flipped.
// Model must have at most 2000 parameters.
HessianGapResult probe_hessian_gap(const ClassifierModel& teacher, const Matrix& inputs,
                                   double flip_fraction, std::size_t train_steps,
                                   std::uint64_t seed);

// --- batch-size sensitivity of SI and MAS --------------------------------

struct ProbeTrainSpec {
  StreamSpec stream;
  std::vector<std::size_t> hidden = {32, 32};
  Activation activation = Activation::elu;
  bool use_adam = true;
  double lr = 1e-3;
  std::size_t epochs = 5;
  double xi_damp = 0.1;
};

struct BatchProbeResult {
  std::vector<ProbeRow> rows;        // one per (batch size, seed)
  StatResult variance_vs_magnitude;  // Pearson(grad noise, importance size)
  StatResult batch_vs_magnitude;     // Pearson(batch size, importance size)
};

// Trains the first stream task once per (batch size, seed) with SI tracking.
// Gradient noise is the per-step mean squared deviation of the minibatch
// gradient from the full-data gradient at the same parameters, averaged over
// steps and coordinates; zero by construction for full-batch training.
BatchProbeResult probe_si_batch_inflation(const ProbeTrainSpec& spec,
                                          const std::vector<std::size_t>& batch_sizes,
                                          const std::vector<std::uint64_t>& seeds);

// Same harness, recording the magnitude of the MAS importance computed on
// the full task data at the final parameters.
BatchProbeResult probe_mas_batch_robustness(const ProbeTrainSpec& spec,
                                            const std::vector<std::size_t>& batch_sizes,
                                            const std::vector<std::uint64_t>& seeds);

// --- probes over stored run snapshots ------------------------------------

// Per-task records captured by the runner; index = position in the stream.
struct TaskSnapshots {
  bool naive = false;
  std::vector<ParamVector> theta_start;         // params inherited by task tau
  std::vector<ParamVector> theta_after;         // params after task tau
  std::vector<ParamVector> omega_after;         // cumulative importance after tau
  std::vector<ParamVector> grad_current;        // task tau's mean grad at theta_start[tau]
  std::vector<ParamVector> grad_previous;       // task tau-1's mean grad at theta_start[tau]
  std::vector<ParamVector> standalone_importance;  // task tau's own estimate at start
};

// For each consecutive pair and fraction f: intersect the top-f importance
// sets of both tasks (all parameters for naive) and report the cosine of the
// two task gradients, both evaluated at the parameters the later task
// inherits. Rows with an empty intersection are flagged and carry no cosine.
std::vector<ProbeRow> probe_gradient_interference(const TaskSnapshots& snaps,
                                                  const std::vector<double>& topk_fracs);

struct ImportanceAccumulationResult {
  std::vector<ProbeRow> rows;  // per (group, task): mean omega, param delta L2
  StatResult stat;             // Pearson(omega after tau, delta L2 in tau+1)
};

ImportanceAccumulationResult probe_importance_accumulation(const TaskSnapshots& snaps);

}  // namespace clreg
