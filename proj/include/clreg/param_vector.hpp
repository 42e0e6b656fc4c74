#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace clreg {

struct ParamGroup {
  std::string name;
  std::size_t start = 0;
  std::size_t size = 0;
};

// Immutable named-group index map. One instance is shared by every vector of
// a given model shape (parameters, gradients, moments, importances).
class ParamLayout {
 public:
  // Groups must be contiguous from 0 with unique names; throws invalid_input.
  static std::shared_ptr<const ParamLayout> create(std::vector<ParamGroup> groups);

  std::size_t total() const { return total_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  const ParamGroup& group(std::string_view name) const;
  bool has_group(std::string_view name) const;

 private:
  std::vector<ParamGroup> groups_;
  std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

// Flat vector of reals plus the group map: the single currency shared by the
// model, the optimizers, and the continual-learning strategies.
struct ParamVector {
  std::vector<double> values;
  LayoutPtr layout;

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

ParamVector make_param_vector(LayoutPtr layout);  // zero-filled
ParamVector zeros_like(const ParamVector& v);

// Throws invalid_input on length mismatch.
void check_same_shape(const ParamVector& a, const ParamVector& b);

void fill(ParamVector& v, double x);
void axpy(double a, const ParamVector& x, ParamVector& y);  // y += a*x
void scale(ParamVector& v, double a);
double dot(const ParamVector& a, const ParamVector& b);
double l2_norm(const ParamVector& v);
double mean_abs(const ParamVector& v);

}  // namespace clreg
