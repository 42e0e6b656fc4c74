#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "clreg/diagnostics.hpp"
#include "clreg/metrics.hpp"
#include "clreg/strategies.hpp"
#include "clreg/stream.hpp"

namespace clreg {

struct ModelSpec {
  std::vector<std::size_t> hidden = {32, 32};
  Activation activation = Activation::elu;
};

struct OptimizerSpec {
  bool use_adam = true;
  double lr = 1e-3;
};

struct RunConfig {
  StreamSpec stream;
  ModelSpec model;
  OptimizerSpec optimizer;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  StrategyKind strategy = StrategyKind::naive;
  double lambda = 0.0;
  double gamma = 0.9;
  double xi_damp = 0.1;
  std::size_t n_fisher = 500;
  std::vector<std::uint64_t> seeds = {1};
  std::size_t shuffles = 5;
  std::string output_dir = "out";
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
void validate(const RunConfig& config);  // throws config_error

struct RunArtifacts {
  AccuracyMatrix matrix;            // R rows per phase plus the init baseline b
  TaskSnapshots snapshots;          // diagnostics inputs, one entry per task
  std::vector<double> train_f1;     // macro F1 on each task's train set after its phase
  double unseen_f1 = 0.0;           // pooled macro F1 over held-out subjects
  bool has_unseen = false;
  std::vector<double> task_seconds;
  bool aborted = false;
  std::string abort_reason;
  std::string strategy;
  double lambda = 0.0;
  std::uint64_t seed = 0;
};

// Sequential subject-incremental training with the configured strategy.
// b is measured once at initialization; after each task the strategy hook
// runs, then the model is evaluated on every task's test set.
RunArtifacts run_sequence(const RunConfig& config, std::uint64_t seed);

// Same loop over an explicit task order (shuffle grid support).
RunArtifacts run_sequence_on_stream(const RunConfig& config, std::uint64_t seed,
                                    const std::vector<SubjectTask>& stream,
                                    const std::vector<SubjectTask>& holdout);

// Writes R.csv, metrics.json, omega_task{tau}.csv into out_dir (created if
// missing); collisions are overwritten and recorded in warnings.txt.
std::vector<std::string> emit_reports(const RunArtifacts& artifacts,
                                      const std::filesystem::path& out_dir);

struct SweepRow {
  std::string strategy;
  double lambda = 0.0;
  double mean_acc_mean = 0.0, mean_acc_std = 0.0;
  double final_acc_mean = 0.0, final_acc_std = 0.0;
  double bwt_mean = 0.0, bwt_std = 0.0;
  double fwt_mean = 0.0, fwt_std = 0.0;
  double unseen_f1_mean = 0.0, unseen_f1_std = 0.0;
  double p_bwt_gt_naive = 1.0;  // one-sided t-test over per-seed differences
  double p_fwt_gt_naive = 1.0;
};

struct SweepResult {
  SweepRow naive;                 // baseline under the same seeds
  std::vector<SweepRow> rows;     // one per lambda
};

SweepResult sweep_lambda(const RunConfig& config, const std::vector<double>& lambdas);
std::string sweep_to_csv(const SweepResult& sweep);

struct ShuffleRow {
  std::string strategy;
  std::size_t shuffle = 0;  // 0 = identity order
  double unseen_f1 = 0.0;
};

// Same subjects, seed, and holdout; only the training order is permuted.
std::vector<ShuffleRow> shuffle_grid(const RunConfig& config, std::size_t n_shuffles);
std::string shuffle_rows_to_csv(const std::vector<ShuffleRow>& rows);

double mean_of(const std::vector<double>& xs);
double sample_std_of(const std::vector<double>& xs);

}  // namespace clreg
