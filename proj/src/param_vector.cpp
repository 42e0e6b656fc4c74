#include "clreg/param_vector.hpp"

#include <cmath>
#include <unordered_set>

#include "clreg/errors.hpp"

namespace clreg {

std::shared_ptr<const ParamLayout> ParamLayout::create(std::vector<ParamGroup> groups) {
  auto layout = std::make_shared<ParamLayout>();
  std::size_t cursor = 0;
  std::unordered_set<std::string> names;
  for (const auto& g : groups) {
    if (g.start != cursor) {
      throw invalid_input("ParamLayout: groups must tile [0, len) contiguously");
    }
    if (!names.insert(g.name).second) {
      throw invalid_input("ParamLayout: duplicate group name " + g.name);
    }
    cursor += g.size;
  }
  layout->groups_ = std::move(groups);
  layout->total_ = cursor;
  return layout;
}

const ParamGroup& ParamLayout::group(std::string_view name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return g;
  }
  throw invalid_input("ParamLayout: no group named " + std::string(name));
}

bool ParamLayout::has_group(std::string_view name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return true;
  }
  return false;
}

ParamVector make_param_vector(LayoutPtr layout) {
  ParamVector v;
  v.values.assign(layout->total(), 0.0);
  v.layout = std::move(layout);
  return v;
}

ParamVector zeros_like(const ParamVector& v) {
  ParamVector z;
  z.values.assign(v.values.size(), 0.0);
  z.layout = v.layout;
  return z;
}

void check_same_shape(const ParamVector& a, const ParamVector& b) {
  if (a.values.size() != b.values.size()) {
    throw invalid_input("ParamVector shape mismatch: " + std::to_string(a.values.size()) +
                        " vs " + std::to_string(b.values.size()));
  }
}

void fill(ParamVector& v, double x) {
  for (auto& e : v.values) e = x;
}

void axpy(double a, const ParamVector& x, ParamVector& y) {
  check_same_shape(x, y);
  for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] += a * x.values[i];
}

void scale(ParamVector& v, double a) {
  for (auto& e : v.values) e *= a;
}

double dot(const ParamVector& a, const ParamVector& b) {
  check_same_shape(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

double l2_norm(const ParamVector& v) { return std::sqrt(dot(v, v)); }

double mean_abs(const ParamVector& v) {
  if (v.values.empty()) return 0.0;
  double s = 0.0;
  for (double e : v.values) s += std::fabs(e);
  return s / static_cast<double>(v.values.size());
}

}  // namespace clreg
