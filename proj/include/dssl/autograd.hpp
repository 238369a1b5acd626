#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "dssl/tensor.hpp"

namespace dssl {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Backward rule attached to each node.
enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  MatMulNT,
  MatMulTN,
  Transpose,
  Add,
  Sub,
  Scale,
  Hadamard,
  AddRowBias,
  Relu,
  ConcatCols,
  NormalizeRows,
  NormalizeCols,
  LogSumExpRows,
  Diag,
  RowDot,
  MulRows,
  SumAll,
  MeanAll,
  Square,
  FrobeniusNorm,
};

/// Dynamic reverse-mode computation graph.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward() is a single reverse sweep. A graph is
/// built per minibatch and discarded afterwards.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf node. Trainable leaves receive gradients; constants act as a
  /// gradient barrier.
  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Populates gradients of every node that depends on a trainable leaf.
  /// Leaves not reachable from `loss` end up with a zero gradient.
  /// Throws UsageError unless `loss` is 1x1.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Appends an op node. Used by the op functions below.
  Var record(Op op, Tensor value, std::initializer_list<Var> parents, double attr = 0.0);

 private:
  struct Node {
    Op op = Op::Leaf;
    Tensor value;
    Tensor grad;  // empty until touched by backward()
    std::array<std::size_t, 2> parents{};
    std::uint8_t n_parents = 0;
    double attr = 0.0;
    bool requires_grad = false;
  };

  void accumulate(std::size_t id, Tensor g);
  void propagate(std::size_t id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Differentiable ops. Shapes follow the Tensor kernels of the same name.

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);
Var matmul_tn(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var hadamard(Var a, Var b);
Var add_row_bias(Var x, Var b);
Var relu(Var x);
Var concat_cols(Var a, Var b);
Var l2_normalize_rows(Var x);
Var l2_normalize_cols(Var x);
/// Rx1 column of row-wise log-sum-exp, computed with max subtraction.
Var logsumexp_rows(Var x);
/// Nx1 diagonal of a square matrix.
Var diag(Var x);
/// Rx1 column of row-wise inner products.
Var row_dot(Var a, Var b);
/// Row i of x multiplied by c(i, 0); c is Rx1.
Var mul_rows(Var x, Var c);
Var sum_all(Var x);
Var mean_all(Var x);
Var square(Var x);
Var frobenius_norm(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace dssl
