#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace micas::ad {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;

/// Named trainable arrays with a gradient accumulator each. Iteration order is
/// lexicographic by name, which fixes checkpoint layout and hashing.
class ParamStore {
 public:
  struct Entry {
    Matrix value;
    Matrix grad;
  };

  Entry& add(const std::string& name, Matrix init);
  Entry& at(std::string_view name);
  const Entry& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  void zero_grad();
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  bool all_finite() const;

  /// FNV-1a over names, shapes and raw value bytes.
  std::uint64_t hash() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::map<std::string, Entry, std::less<>> entries_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& adjoint() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records a forward computation so that backward() can replay it in exact
/// reverse order. Parameter leaves write into their ParamStore accumulators.
class Tape {
 public:
  using Pullback = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(ParamStore& store, std::string_view name);

  /// Pushes a computed node. `pullback` reads the node's adjoint and adds
  /// into the adjoints of its inputs.
  Var push(Matrix value, Pullback pullback);

  /// Accumulates d(loss)/d(param) * loss_grad into every touched parameter.
  /// Throws a contract error unless `loss` is 1 x 1.
  void backward(Var loss, double loss_grad = 1.0);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& adjoint(std::size_t id) const { return nodes_[id].adjoint; }
  Matrix& adjoint_mut(std::size_t id) { return nodes_[id].adjoint; }
  std::size_t size() const { return nodes_.size(); }

  /// Ids of nodes in the order backward() visited them on the last call.
  const std::vector<std::size_t>& last_backward_order() const { return visited_; }

 private:
  struct Node {
    Matrix value;
    Matrix adjoint;
    Pullback pullback;
    ParamStore::Entry* param = nullptr;
  };
  std::vector<Node> nodes_;
  std::vector<std::size_t> visited_;
};

// Primitive operations. All inputs must live on the same tape.
Var matmul(Var a, Var b);             // a * b
Var matmul_tn(Var a, Var b);          // a^T * b
Var add(Var a, Var b);                // same shape
Var sub(Var a, Var b);
Var add_row(Var a, Var row);          // row (1 x c) broadcast over a's rows
Var broadcast_rows(Var row, Index rows);
Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var max_pool_rows(Var a);             // 1 x c column maxima, lowest-row tie-break
Var relu(Var a);
Var tanh(Var a);
Var softplus(Var a);
Var log(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var softmax_cols(Var a);              // softmax down each column
Var sum(Var a);
Var mean(Var a);
Var select_rows(Var a, std::span<const Index> rows);
Var reshape(Var a, Index rows, Index cols);  // row-major reinterpretation
/// Symmetric squared Chamfer distance between the row sets of a and b.
Var chamfer(Var a, Var b);
/// sum_{i,j} coeff(i,j) * log(1 + exp(s_j - s_i)) over a K x 1 score column.
Var pairwise_logistic(Var scores, const Matrix& coeff);

enum class Activation { Relu, Tanh, None };
Var activate(Var a, Activation act);

}  // namespace micas::ad
