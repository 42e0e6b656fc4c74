#pragma once

#include <cstdint>
#include <vector>

#include "clreg/param_vector.hpp"

namespace clreg {

// Row-major dense matrix, the only tensor shape the testbed needs.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct Batch {
  Matrix inputs;            // n x D
  std::vector<int> labels;  // n entries in [0, K)

  std::size_t size() const { return inputs.rows; }
};

enum class Activation { elu, tanh };

// Fully connected classifier over a flat parameter vector. Hidden layers are
// named layer1..layerL, the softmax head is named out; each layer owns a
// <name>.weight group (fan_out x fan_in, row-major) and a <name>.bias group.
struct ClassifierModel {
  std::vector<std::size_t> layer_sizes;  // D, H1..HL, K
  Activation activation = Activation::elu;
  ParamVector params;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t num_classes() const { return layer_sizes.back(); }
};

LayoutPtr classifier_layout(const std::vector<std::size_t>& layer_sizes);

// Glorot-uniform weights, zero biases; deterministic given seed.
ParamVector init_params(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed);

ClassifierModel make_classifier(std::vector<std::size_t> layer_sizes, Activation act,
                                std::uint64_t seed);

// Logits, n x K. Throws invalid_input on width mismatch.
Matrix forward(const ClassifierModel& model, const Matrix& inputs);

// Row-wise stable softmax (max subtraction).
Matrix softmax_rows(const Matrix& logits);

std::vector<int> predict_labels(const ClassifierModel& model, const Matrix& inputs);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

// Mean NLL of the observed labels plus its exact gradient.
LossGrad nll_loss_and_grad(const ClassifierModel& model, const Batch& batch);

// One NLL gradient per sample; their mean equals the batched gradient.
std::vector<ParamVector> per_sample_grads(const ClassifierModel& model, const Batch& batch);

// Gradient of mean_i ||logits(x_i)||^2 (no absolute value; MAS applies |.|
// to the per-sample variants below).
ParamVector output_norm_grad(const ClassifierModel& model, const Batch& batch);

std::vector<ParamVector> per_sample_output_norm_grads(const ClassifierModel& model,
                                                      const Batch& batch);

// Generic reverse pass: dL/dlogits in, dL/dparams out. Exposed for oracles.
ParamVector backprop(const ClassifierModel& model, const Matrix& inputs,
                     const Matrix& dlogits);

}  // namespace clreg
