#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records every operation of one forward pass. Each recorded node keeps
// its value, a gradient accumulator, and a closure that pushes the node's
// gradient into its parents. Parameters live outside the tape in a
// ParameterStore; binding one to a tape creates a leaf whose gradient is added
// into Parameter::grad when backward() runs.

#include <cstddef>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gcegnn/matrix.hpp"

namespace gcegnn::ad {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;
};

class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  // Throws std::invalid_argument when `name` is already registered.
  Parameter& add(std::string name, Matrix init, bool trainable = true);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  // Registration order.
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Receives the node's value, its gradient, and one accumulator per parent. An
// accumulator is null when that parent does not require a gradient.
using BackwardFn =
    std::function<void(const Matrix& out_value, const Matrix& out_grad, std::span<Matrix* const> parent_grads)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  Var parameter(Parameter& param);

  // Records a node. Used by the op library and by tests that need custom rules.
  Var record(Matrix value, std::string op, std::vector<Var> parents, BackwardFn backward);

  // Accumulates d(loss)/d(node) into every reachable node and bound parameter.
  // Calling twice without zero_grad() accumulates twice.
  void backward(Var loss);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  void dump(std::ostream& out) const;

 private:
  friend class Var;
  struct Node {
    Matrix value;
    mutable Matrix grad;
    std::string op;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };

  const Node& node(Var v) const;

  std::deque<Node> nodes_;  // deque: Var::value() references stay valid as the tape grows
};

// ---- operations -----------------------------------------------------------

Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var maximum(Var a, Var b);
Var add_row(Var x, Var row);  // broadcast a 1 x n row over every row of x
Var mul_col(Var x, Var col);  // scale row r of x by col(r, 0)
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var concat_cols(Var a, Var b);
Var concat_rows(const std::vector<Var>& parts);
Var reshape(Var x, std::size_t rows, std::size_t cols);

Var leaky_relu(Var x, double slope);
Var relu(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
// Inverted dropout: survivors are scaled by 1/(1-rate). Identity when !train.
Var dropout(Var x, double rate, bool train, std::mt19937_64& rng);

// Row r of the result is table.row(index[r]); index -1 yields a zero row.
Var gather_rows(Var table, std::span<const int> index);
// Sums each run of `group` consecutive rows: [n*group x d] -> [n x d].
Var group_sum(Var x, std::size_t group);
// out.row(r) = sum_k weights(r, k) * x.row(r * K + k) with K = weights.cols().
Var group_weighted_sum(Var weights, Var x);
// Softmax along each row over the entries whose mask value is nonzero.
// A row with no unmasked entry yields all zeros. `mask` may be empty.
Var softmax_rows(Var x, std::span<const unsigned char> mask = {});
Var row_sum(Var x);  // [n x d] -> [n x 1]
Var sum(Var x);      // -> [1 x 1]
Var mean(Var x);     // -> [1 x 1]

inline constexpr double kProbabilityClamp = 1e-10;

// Mean over rows of -sum_i [y_i log p_i + (1 - y_i) log(1 - p_i)] with y the
// one-hot of labels[row]; p is clamped to [1e-10, 1 - 1e-10].
Var binary_cross_entropy(Var probs, std::span<const int> labels);
// Mean over rows of -log p_label (clamped).
Var categorical_cross_entropy(Var probs, std::span<const int> labels);

// ---- gradient checking ----------------------------------------------------

// Central finite differences against backward(); returns the maximum over
// coordinates of |a - n| / max(1, |a| + |n|). Throws on non-finite values.
double gradcheck(const std::function<Var(Tape&, Var)>& f, const Matrix& x, double step = 1e-5);

// Same check over every trainable coordinate of `params`. `f` builds the loss
// on a fresh tape, binding parameters through Tape::parameter.
double gradcheck_parameters(const std::function<Var(Tape&)>& f, ParameterStore& params,
                            double step = 1e-5);

}  // namespace gcegnn::ad
