#include "clreg/stream.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "clreg/csvio.hpp"
#include "clreg/errors.hpp"
#include "clreg/rng.hpp"

namespace clreg {

void validate(const StreamSpec& spec) {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (spec.d < 1 || spec.k < 2) throw config_error("stream: need d >= 1 and k >= 2");
  if (spec.n_subjects < 1 || spec.n_train < 1 || spec.n_test < 1) {
    throw config_error("stream: counts must be >= 1");
  }
  if (!prob(spec.spike_prob) || !prob(spec.label_flip)) {
    throw config_error("stream: probabilities must lie in [0, 1]");
  }
  if (spec.holdout_frac < 0.0 || spec.holdout_frac > 0.5) {
    throw config_error("stream: holdout_frac must lie in [0, 0.5]");
  }
  if (spec.noise_sigma < 0.0 || spec.drift_scale < 0.0 || spec.spike_scale < 0.0) {
    throw config_error("stream: scales must be >= 0");
  }
}

std::vector<std::pair<std::size_t, std::size_t>> rotation_planes(std::size_t d,
                                                                 std::uint64_t rot_seed) {
  std::vector<std::size_t> coords(d);
  for (std::size_t i = 0; i < d; ++i) coords[i] = i;
  Rng rng(rot_seed);
  shuffle(coords, rng);
  std::vector<std::pair<std::size_t, std::size_t>> planes;
  for (std::size_t i = 0; i + 1 < d; i += 2) {
    std::size_t p = coords[i];
    std::size_t q = coords[i + 1];
    if (p > q) std::swap(p, q);  // canonical orientation per plane
    planes.emplace_back(p, q);
  }
  return planes;
}

std::vector<double> rotate(const std::vector<double>& x,
                           const std::vector<std::pair<std::size_t, std::size_t>>& planes,
                           double angle) {
  std::vector<double> y = x;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (const auto& [p, q] : planes) {
    const double xp = y[p];
    const double xq = y[q];
    y[p] = c * xp - s * xq;
    y[q] = s * xp + c * xq;
  }
  return y;
}

namespace {

Matrix draw_base_means(std::size_t k, std::size_t d, Rng& rng) {
  Matrix means(k, d);
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (std::size_t c = 0; c < k; ++c) {
      double norm2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double g = rng.gaussian();
        means(c, j) = g;
        norm2 += g * g;
      }
      const double norm = std::sqrt(norm2);
      if (norm > 0.0) {
        for (std::size_t j = 0; j < d; ++j) means(c, j) /= norm;
      }
    }
    bool distinct = true;
    for (std::size_t a = 0; a < k && distinct; ++a) {
      for (std::size_t b = a + 1; b < k; ++b) {
        double dist2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = means(a, j) - means(b, j);
          dist2 += diff * diff;
        }
        if (dist2 < 1e-12) {
          distinct = false;
          break;
        }
      }
    }
    if (distinct) return means;
  }
  throw numeric_error("draw_base_means: could not draw pairwise-distinct means");
}

Batch sample_batch(const GenParams& gp, std::size_t n, Rng& rng) {
  const std::size_t k = gp.class_means.rows;
  const std::size_t d = gp.class_means.cols;
  Batch batch;
  batch.inputs = Matrix(n, d);
  batch.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = i % k;  // balanced labels
    for (std::size_t j = 0; j < d; ++j) {
      batch.inputs(i, j) = gp.class_means(y, j) + gp.noise_sigma * rng.gaussian();
    }
    if (gp.spike_prob > 0.0 && rng.bernoulli(gp.spike_prob)) {
      batch.inputs(i, rng.index(d)) += gp.spike_scale;
    }
    int observed = static_cast<int>(y);
    if (gp.label_flip > 0.0 && rng.bernoulli(gp.label_flip)) {
      // uniform over the other classes
      const std::size_t shift = 1 + rng.index(k - 1);
      observed = static_cast<int>((y + shift) % k);
    }
    batch.labels[i] = observed;
  }
  return batch;
}

}  // namespace

SubjectTask make_subject_task(const Matrix& class_means, double noise_sigma,
                              double spike_prob, double spike_scale, double label_flip,
                              std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
  SubjectTask task;
  task.gen_params.class_means = class_means;
  task.gen_params.noise_sigma = noise_sigma;
  task.gen_params.spike_prob = spike_prob;
  task.gen_params.spike_scale = spike_scale;
  task.gen_params.label_flip = label_flip;
  Rng train_rng(derive_seed(seed, "train"));
  Rng test_rng(derive_seed(seed, "test"));
  task.train = sample_batch(task.gen_params, n_train, train_rng);
  task.test = sample_batch(task.gen_params, n_test, test_rng);
  return task;
}

StreamResult generate_stream(const StreamSpec& spec) {
  validate(spec);
  const std::uint64_t rot_seed = derive_seed(spec.seed, "rotation");
  const auto planes = rotation_planes(spec.d, rot_seed);
  Rng means_rng(derive_seed(spec.seed, "base_means"));
  const Matrix base_means = draw_base_means(spec.k, spec.d, means_rng);

  std::vector<SubjectTask> tasks;
  tasks.reserve(spec.n_subjects);
  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    // class means: rotate the base means by s * shift_angle, then drift the
    // whole cloud by s * drift_scale along a per-subject unit direction
    Rng subject_rng(derive_seed(spec.seed, "subject_" + std::to_string(s)));
    std::vector<double> drift(spec.d, 0.0);
    if (spec.drift_scale > 0.0) {
      double norm2 = 0.0;
      for (auto& v : drift) {
        v = subject_rng.gaussian();
        norm2 += v * v;
      }
      const double norm = std::sqrt(norm2);
      for (auto& v : drift) v = v / norm * spec.drift_scale * static_cast<double>(s);
    }
    Matrix means(spec.k, spec.d);
    for (std::size_t c = 0; c < spec.k; ++c) {
      std::vector<double> mu(spec.d);
      for (std::size_t j = 0; j < spec.d; ++j) mu[j] = base_means(c, j);
      mu = rotate(mu, planes, spec.shift_angle * static_cast<double>(s));
      for (std::size_t j = 0; j < spec.d; ++j) means(c, j) = mu[j] + drift[j];
    }
    SubjectTask task = make_subject_task(
        means, spec.noise_sigma, spec.spike_prob, spec.spike_scale, spec.label_flip,
        spec.n_train, spec.n_test, derive_seed(spec.seed, "samples_" + std::to_string(s)));
    task.id = s;
    task.gen_params.rotation_seed = rot_seed;
    tasks.push_back(std::move(task));
  }

  // random holdout subset; the rest forms the stream in index order
  const std::size_t n_hold =
      static_cast<std::size_t>(std::llround(spec.holdout_frac * static_cast<double>(spec.n_subjects)));
  std::vector<std::size_t> ids(spec.n_subjects);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  Rng hold_rng(derive_seed(spec.seed, "holdout"));
  shuffle(ids, hold_rng);
  std::vector<bool> held(spec.n_subjects, false);
  for (std::size_t i = 0; i < n_hold; ++i) held[ids[i]] = true;

  StreamResult result;
  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    if (held[s]) {
      result.holdout.push_back(std::move(tasks[s]));
    } else {
      result.stream.push_back(std::move(tasks[s]));
    }
  }
  return result;
}

double bayes_accuracy(const SubjectTask& task, std::size_t n_mc, std::uint64_t seed) {
  const GenParams& gp = task.gen_params;
  if (gp.class_means.rows == 0) throw invalid_input("bayes_accuracy: missing gen_params");
  const std::size_t k = gp.class_means.rows;
  const std::size_t d = gp.class_means.cols;
  Rng rng(seed);
  std::size_t hits = 0;
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n_mc; ++i) {
    const std::size_t y = i % k;
    for (std::size_t j = 0; j < d; ++j) {
      x[j] = gp.class_means(y, j) + gp.noise_sigma * rng.gaussian();
    }
    if (gp.spike_prob > 0.0 && rng.bernoulli(gp.spike_prob)) {
      x[rng.index(d)] += gp.spike_scale;
    }
    std::size_t observed = y;
    if (gp.label_flip > 0.0 && rng.bernoulli(gp.label_flip)) {
      observed = (y + 1 + rng.index(k - 1)) % k;
    }
    // nearest mean = max likelihood under spherical Gaussian
    std::size_t best = 0;
    double best_dist = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x[j] - gp.class_means(c, j);
        dist += diff * diff;
      }
      if (c == 0 || dist < best_dist) {
        best = c;
        best_dist = dist;
      }
    }
    if (best == observed) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_mc);
}

std::vector<SubjectTask> permute_stream(const std::vector<SubjectTask>& stream,
                                        const std::vector<std::size_t>& order) {
  if (order.size() != stream.size()) throw invalid_input("permute_stream: bad permutation");
  std::vector<SubjectTask> out;
  out.reserve(stream.size());
  std::vector<bool> used(stream.size(), false);
  for (std::size_t idx : order) {
    if (idx >= stream.size() || used[idx]) {
      throw invalid_input("permute_stream: order is not a permutation");
    }
    used[idx] = true;
    out.push_back(stream[idx]);
  }
  return out;
}

std::vector<SubjectTask> shuffle_stream(const std::vector<SubjectTask>& stream,
                                        std::uint64_t permutation_seed) {
  if (stream.empty()) throw invalid_input("shuffle_stream: empty stream");
  std::vector<std::size_t> order(stream.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(permutation_seed);
  shuffle(order, rng);
  return permute_stream(stream, order);
}

void write_subject_csv(const SubjectTask& task, const std::filesystem::path& path) {
  const std::size_t d = task.train.inputs.cols;
  std::ostringstream out;
  for (std::size_t j = 0; j < d; ++j) out << "x_" << j << ",";
  out << "label\n";
  auto emit = [&](const Batch& batch) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) out << format_double(batch.inputs(i, j)) << ",";
      out << batch.labels[i] << "\n";
    }
  };
  emit(task.train);
  emit(task.test);
  write_text_file(path, out.str());
}

}  // namespace clreg
