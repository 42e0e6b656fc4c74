#include "clreg/tensor_net.hpp"

#include <cmath>
#include <string>

#include "clreg/errors.hpp"
#include "clreg/rng.hpp"

namespace clreg {

namespace {

double act_forward(Activation act, double z) {
  if (act == Activation::elu) return z > 0.0 ? z : std::expm1(z);  // alpha = 1
  return std::tanh(z);
}

// derivative expressed through the pre-activation z
double act_derivative(Activation act, double z) {
  if (act == Activation::elu) return z > 0.0 ? 1.0 : std::exp(z);
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

std::string layer_name(std::size_t index, std::size_t n_layers) {
  if (index + 1 == n_layers) return "out";
  return "layer" + std::to_string(index + 1);
}

struct LayerView {
  const double* w;  // fan_out x fan_in, row-major
  const double* b;  // fan_out
  std::size_t fan_in;
  std::size_t fan_out;
};

std::vector<LayerView> layer_views(const ClassifierModel& model) {
  std::vector<LayerView> views;
  const double* base = model.params.values.data();
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
    LayerView v;
    v.fan_in = model.layer_sizes[l];
    v.fan_out = model.layer_sizes[l + 1];
    v.w = base + offset;
    offset += v.fan_in * v.fan_out;
    v.b = base + offset;
    offset += v.fan_out;
    views.push_back(v);
  }
  return views;
}

// forward with cached pre-activations, shared by every gradient entry point
struct ForwardCache {
  std::vector<Matrix> activations;      // activations[0] = inputs
  std::vector<Matrix> preactivations;   // z per layer
};

Matrix forward_cached(const ClassifierModel& model, const Matrix& inputs,
                      ForwardCache* cache) {
  if (inputs.cols != model.input_dim()) {
    throw invalid_input("forward: input width " + std::to_string(inputs.cols) +
                        " does not match model input size " +
                        std::to_string(model.input_dim()));
  }
  const auto views = layer_views(model);
  Matrix a = inputs;
  if (cache) {
    cache->activations.clear();
    cache->preactivations.clear();
    cache->activations.push_back(a);
  }
  for (std::size_t l = 0; l < views.size(); ++l) {
    const auto& v = views[l];
    Matrix z(a.rows, v.fan_out);
    for (std::size_t i = 0; i < a.rows; ++i) {
      for (std::size_t o = 0; o < v.fan_out; ++o) {
        double s = v.b[o];
        const double* w_row = v.w + o * v.fan_in;
        for (std::size_t j = 0; j < v.fan_in; ++j) s += w_row[j] * a(i, j);
        z(i, o) = s;
      }
    }
    if (cache) cache->preactivations.push_back(z);
    const bool last = (l + 1 == views.size());
    if (last) {
      a = std::move(z);
    } else {
      Matrix h(z.rows, z.cols);
      for (std::size_t i = 0; i < z.data.size(); ++i) {
        h.data[i] = act_forward(model.activation, z.data[i]);
      }
      if (cache) cache->activations.push_back(h);
      a = std::move(h);
    }
  }
  return a;  // logits
}

}  // namespace

LayoutPtr classifier_layout(const std::vector<std::size_t>& layer_sizes) {
  if (layer_sizes.size() < 2) {
    throw invalid_input("classifier_layout: need at least input and output sizes");
  }
  std::vector<ParamGroup> groups;
  std::size_t cursor = 0;
  const std::size_t n_layers = layer_sizes.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t fan_in = layer_sizes[l];
    const std::size_t fan_out = layer_sizes[l + 1];
    const std::string name = layer_name(l, n_layers);
    groups.push_back({name + ".weight", cursor, fan_in * fan_out});
    cursor += fan_in * fan_out;
    groups.push_back({name + ".bias", cursor, fan_out});
    cursor += fan_out;
  }
  return ParamLayout::create(std::move(groups));
}

ParamVector init_params(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
  ParamVector params = make_param_vector(classifier_layout(layer_sizes));
  Rng rng(seed);
  std::size_t cursor = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t fan_in = layer_sizes[l];
    const std::size_t fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) {
      params.values[cursor++] = rng.uniform(-bound, bound);
    }
    cursor += fan_out;  // biases stay zero
  }
  return params;
}

ClassifierModel make_classifier(std::vector<std::size_t> layer_sizes, Activation act,
                                std::uint64_t seed) {
  ClassifierModel model;
  model.params = init_params(layer_sizes, seed);
  model.layer_sizes = std::move(layer_sizes);
  model.activation = act;
  return model;
}

Matrix forward(const ClassifierModel& model, const Matrix& inputs) {
  return forward_cached(model, inputs, nullptr);
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols; ++j) {
      const double e = std::exp(logits(i, j) - mx);
      p(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < logits.cols; ++j) p(i, j) /= sum;
  }
  return p;
}

std::vector<int> predict_labels(const ClassifierModel& model, const Matrix& inputs) {
  const Matrix logits = forward(model, inputs);
  std::vector<int> labels(logits.rows);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols; ++j) {
      if (logits(i, j) > logits(i, best)) best = j;
    }
    labels[i] = static_cast<int>(best);
  }
  return labels;
}

ParamVector backprop(const ClassifierModel& model, const Matrix& inputs,
                     const Matrix& dlogits) {
  ForwardCache cache;
  forward_cached(model, inputs, &cache);
  const auto views = layer_views(model);

  ParamVector grad = zeros_like(model.params);
  double* gbase = grad.values.data();
  std::size_t offsets_end = model.params.values.size();
  // walk layers top-down, carrying dL/d(activation of previous layer)
  Matrix dz = dlogits;
  for (std::size_t l = views.size(); l-- > 0;) {
    const auto& v = views[l];
    const Matrix& a_prev = cache.activations[l];
    offsets_end -= v.fan_out;            // bias offset
    double* gb = gbase + offsets_end;
    offsets_end -= v.fan_in * v.fan_out; // weight offset
    double* gw = gbase + offsets_end;

    for (std::size_t i = 0; i < dz.rows; ++i) {
      for (std::size_t o = 0; o < v.fan_out; ++o) {
        const double d = dz(i, o);
        if (d == 0.0) continue;
        gb[o] += d;
        double* gw_row = gw + o * v.fan_in;
        for (std::size_t j = 0; j < v.fan_in; ++j) gw_row[j] += d * a_prev(i, j);
      }
    }
    if (l == 0) break;
    Matrix da(dz.rows, v.fan_in);
    for (std::size_t i = 0; i < dz.rows; ++i) {
      for (std::size_t j = 0; j < v.fan_in; ++j) {
        double s = 0.0;
        for (std::size_t o = 0; o < v.fan_out; ++o) s += dz(i, o) * v.w[o * v.fan_in + j];
        da(i, j) = s;
      }
    }
    const Matrix& z_prev = cache.preactivations[l - 1];
    for (std::size_t i = 0; i < da.data.size(); ++i) {
      da.data[i] *= act_derivative(model.activation, z_prev.data[i]);
    }
    dz = std::move(da);
  }
  return grad;
}

LossGrad nll_loss_and_grad(const ClassifierModel& model, const Batch& batch) {
  if (batch.size() == 0) throw invalid_input("nll_loss_and_grad: empty batch");
  if (batch.labels.size() != batch.size()) {
    throw invalid_input("nll_loss_and_grad: labels/inputs row mismatch");
  }
  const Matrix logits = forward(model, batch.inputs);
  const Matrix probs = softmax_rows(logits);
  const double n = static_cast<double>(batch.size());
  double loss = 0.0;
  Matrix dlogits(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const int y = batch.labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols) {
      throw invalid_input("nll_loss_and_grad: label out of range");
    }
    loss -= std::log(probs(i, static_cast<std::size_t>(y)));
    for (std::size_t j = 0; j < logits.cols; ++j) {
      dlogits(i, j) = probs(i, j) / n;
    }
    dlogits(i, static_cast<std::size_t>(y)) -= 1.0 / n;
  }
  LossGrad out;
  out.loss = loss / n;
  out.grad = backprop(model, batch.inputs, dlogits);
  return out;
}

namespace {

Batch single_sample(const Batch& batch, std::size_t i) {
  Batch one;
  one.inputs = Matrix(1, batch.inputs.cols);
  for (std::size_t j = 0; j < batch.inputs.cols; ++j) one.inputs(0, j) = batch.inputs(i, j);
  one.labels = {batch.labels.empty() ? 0 : batch.labels[i]};
  return one;
}

}  // namespace

std::vector<ParamVector> per_sample_grads(const ClassifierModel& model, const Batch& batch) {
  if (batch.size() == 0) throw invalid_input("per_sample_grads: empty batch");
  std::vector<ParamVector> grads;
  grads.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    grads.push_back(nll_loss_and_grad(model, single_sample(batch, i)).grad);
  }
  return grads;
}

ParamVector output_norm_grad(const ClassifierModel& model, const Batch& batch) {
  if (batch.size() == 0) throw invalid_input("output_norm_grad: empty batch");
  const Matrix logits = forward(model, batch.inputs);
  Matrix dlogits(logits.rows, logits.cols);
  const double n = static_cast<double>(batch.size());
  for (std::size_t i = 0; i < logits.data.size(); ++i) {
    dlogits.data[i] = 2.0 * logits.data[i] / n;
  }
  return backprop(model, batch.inputs, dlogits);
}

std::vector<ParamVector> per_sample_output_norm_grads(const ClassifierModel& model,
                                                      const Batch& batch) {
  if (batch.size() == 0) throw invalid_input("per_sample_output_norm_grads: empty batch");
  std::vector<ParamVector> grads;
  grads.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Batch one;
    one.inputs = Matrix(1, batch.inputs.cols);
    for (std::size_t j = 0; j < batch.inputs.cols; ++j) {
      one.inputs(0, j) = batch.inputs(i, j);
    }
    const Matrix logits = forward(model, one.inputs);
    Matrix dlogits(1, logits.cols);
    for (std::size_t j = 0; j < logits.cols; ++j) dlogits(0, j) = 2.0 * logits(0, j);
    grads.push_back(backprop(model, one.inputs, dlogits));
  }
  return grads;
}

}  // namespace clreg
