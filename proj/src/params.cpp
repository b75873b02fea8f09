#include "nkgad/params.hpp"

#include <cmath>

#include "nkgad/error.hpp"
#include "nkgad/rng.hpp"

namespace nkgad {

void ParamSet::add(std::string name, Matrix value, bool trainable) {
  if (find(name)) throw ConfigError("ParamSet: duplicate parameter '" + name + "'");
  leaves_.push_back({std::move(name), std::move(value), trainable});
}

void ParamSet::set(std::size_t i, Matrix value) {
  if (!leaves_.at(i).value.same_shape(value)) {
    throw ShapeError("ParamSet: shape change for '" + leaves_[i].name + "'");
  }
  leaves_[i].value = std::move(value);
}

std::optional<std::size_t> ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    if (leaves_[i].name == name) return i;
  }
  return std::nullopt;
}

const Matrix& ParamSet::at(std::string_view name) const {
  const auto idx = find(name);
  if (!idx) throw ConfigError("ParamSet: no parameter named '" + std::string(name) + "'");
  return leaves_[*idx].value;
}

std::size_t ParamSet::parameter_count() const {
  std::size_t total = 0;
  for (const auto& leaf : leaves_) total += leaf.value.size();
  return total;
}

GradSet::GradSet(const ParamSet& params) {
  grads_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    grads_.emplace_back(params.value(i).rows(), params.value(i).cols());
  }
}

bool GradSet::congruent_with(const ParamSet& params) const {
  if (grads_.size() != params.size()) return false;
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (!grads_[i].same_shape(params.value(i))) return false;
  }
  return true;
}

Matrix glorot_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw ShapeError("glorot_init: zero dimension");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Rng rng(seed);
  Matrix out(rows, cols);
  for (double& v : out.data()) v = rng.uniform(-bound, bound);
  return out;
}

}  // namespace nkgad
