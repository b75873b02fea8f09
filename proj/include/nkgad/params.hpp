#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nkgad/matrix.hpp"

namespace nkgad {

/// Ordered collection of named matrices. Iteration order is insertion order;
/// names are unique and shapes never change after insertion.
class ParamSet {
 public:
  void add(std::string name, Matrix value, bool trainable = true);

  std::size_t size() const { return leaves_.size(); }
  const std::string& name(std::size_t i) const { return leaves_[i].name; }
  bool trainable(std::size_t i) const { return leaves_[i].trainable; }
  const Matrix& value(std::size_t i) const { return leaves_[i].value; }
  /// Overwrites leaf `i`; throws ShapeError if the shape would change.
  void set(std::size_t i, Matrix value);
  Matrix& mutable_value(std::size_t i) { return leaves_[i].value; }

  std::optional<std::size_t> find(std::string_view name) const;
  const Matrix& at(std::string_view name) const;
  std::size_t parameter_count() const;

 private:
  struct Leaf {
    std::string name;
    Matrix value;
    bool trainable;
  };
  std::vector<Leaf> leaves_;
};

/// Gradients aligned index-for-index with a ParamSet. Non-trainable leaves
/// carry an all-zero matrix so the two sets stay shape-congruent.
class GradSet {
 public:
  GradSet() = default;
  explicit GradSet(const ParamSet& params);

  std::size_t size() const { return grads_.size(); }
  Matrix& operator[](std::size_t i) { return grads_[i]; }
  const Matrix& operator[](std::size_t i) const { return grads_[i]; }
  bool congruent_with(const ParamSet& params) const;

 private:
  std::vector<Matrix> grads_;
};

/// Uniform entries in +-sqrt(6 / (rows + cols)).
Matrix glorot_init(std::size_t rows, std::size_t cols, std::uint64_t seed);

}  // namespace nkgad
