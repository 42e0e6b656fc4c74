#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "clreg/tensor_net.hpp"

namespace clreg {

// Synthetic subject-incremental stream. Inter-task covariate shift comes from
// rotating and drifting class means per subject; intra-task variability from
// additive Gaussian noise, sparse artefact spikes, and label flips.
struct StreamSpec {
  std::size_t d = 16;
  std::size_t k = 4;
  std::size_t n_subjects = 10;
  std::size_t n_train = 400;
  std::size_t n_test = 100;
  double shift_angle = 0.35;   // radians of rotation per subject index
  double drift_scale = 0.05;   // mean translation per subject index
  double noise_sigma = 0.3;    // additive Gaussian sigma
  double spike_prob = 0.01;
  double spike_scale = 3.0;
  double label_flip = 0.05;
  double holdout_frac = 0.2;   // fraction of subjects held out as unseen
  std::uint64_t seed = 1;
};

void validate(const StreamSpec& spec);  // throws config_error

// Generator parameters retained so oracles can recompute distributions.
struct GenParams {
  Matrix class_means;  // K x D
  double noise_sigma = 0.0;
  double spike_prob = 0.0;
  double spike_scale = 0.0;
  double label_flip = 0.0;
  std::uint64_t rotation_seed = 0;
};

struct SubjectTask {
  std::size_t id = 0;
  Batch train;
  Batch test;
  GenParams gen_params;
};

struct StreamResult {
  std::vector<SubjectTask> stream;
  std::vector<SubjectTask> holdout;
};

StreamResult generate_stream(const StreamSpec& spec);

// Rotation shared by all subjects of one stream: disjoint Givens planes over
// seeded coordinate pairs, the same angle in each plane. For D = 2 this is
// the plain planar rotation.
std::vector<std::pair<std::size_t, std::size_t>> rotation_planes(std::size_t d,
                                                                 std::uint64_t rot_seed);
std::vector<double> rotate(const std::vector<double>& x,
                           const std::vector<std::pair<std::size_t, std::size_t>>& planes,
                           double angle);

// Test-facing constructor: sample a task around explicit class means.
SubjectTask make_subject_task(const Matrix& class_means, double noise_sigma,
                              double spike_prob, double spike_scale, double label_flip,
                              std::size_t n_train, std::size_t n_test, std::uint64_t seed);

// Monte-Carlo estimate (seeded) of the Gaussian maximum-likelihood
// (nearest-mean) classifier accuracy against the observed, possibly flipped,
// labels. Exact Bayes ceiling when spike_prob = 0.
double bayes_accuracy(const SubjectTask& task, std::size_t n_mc = 100000,
                      std::uint64_t seed = 17);

std::vector<SubjectTask> permute_stream(const std::vector<SubjectTask>& stream,
                                        const std::vector<std::size_t>& order);
std::vector<SubjectTask> shuffle_stream(const std::vector<SubjectTask>& stream,
                                        std::uint64_t permutation_seed);

// One CSV per subject: columns x_0..x_{D-1},label; train rows then test rows.
void write_subject_csv(const SubjectTask& task, const std::filesystem::path& path);

}  // namespace clreg
