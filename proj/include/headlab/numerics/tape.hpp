#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "headlab/numerics/types.hpp"

namespace headlab {

/// Reverse-mode differentiation over the small fixed set of primitives the
/// single-layer transformer needs.
///
/// Operations are recorded (with shapes checked at record time) and
/// evaluated by forward(). Leaf values may be replaced with set_value() and
/// the tape replayed; replay is bit-for-bit deterministic. A Tape is not
/// thread-safe; distinct tapes share no state.
class Tape {
 public:
  struct Var {
    std::size_t id = 0;
  };

  enum class Op {
    Parameter,
    Constant,
    MatMul,        // a b
    MatMulNT,      // a b^T
    Add,           // a + b, equal shapes
    AddRow,        // a + 1 r, r a 1xk row broadcast over rows
    Sub,
    Hadamard,
    Scale,         // c a
    Relu,
    Gelu,
    SoftmaxRows,   // scaled softmax of every row
    Reshape,       // row-major element order kept
    SegmentWeightedSum,  // out(b,:) = sum_t w(b,t) v(bT+t,:)
    HConcat,
    SliceCols,
    Sum,           // 1x1
  };

  Var parameter(Matrix value);
  Var constant(Matrix value);

  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double c);
  Var relu(Var a);
  Var gelu(Var a);
  Var softmax_rows(Var a, double beta);
  Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
  Var segment_weighted_sum(Var weights, Var values);
  Var hconcat(std::span<const Var> parts);
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
  Var sum(Var a);

  /// Replace the value of a leaf. Marks the tape stale until forward().
  void set_value(Var leaf, Matrix value);

  /// Evaluate every recorded node in order.
  void forward();

  /// Accumulate d(seed_grad * out)/d(node) into every node that depends on
  /// a parameter. `out` must be 1x1. Throws StateError if forward() has not
  /// run since the last modification.
  void backward(Var out, double seed_grad = 1.0);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const;
  bool evaluated() const { return evaluated_; }

  Eigen::Index rows(Var v) const { return nodes_.at(v.id).rows; }
  Eigen::Index cols(Var v) const { return nodes_.at(v.id).cols; }
  std::size_t size() const { return nodes_.size(); }
  std::vector<Var> parameters() const;

 private:
  struct Node {
    Node() = default;
    Node(Op o, std::vector<std::size_t> in, Eigen::Index r, Eigen::Index c)
        : op(o), inputs(std::move(in)), rows(r), cols(c) {}

    Op op = Op::Constant;
    std::vector<std::size_t> inputs;
    Eigen::Index rows = 0, cols = 0;
    double scalar = 0.0;       // Scale factor or softmax beta
    Eigen::Index offset = 0;   // SliceCols start
    bool needs_grad = false;
    Matrix value;
    Matrix grad;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  void evaluate(Node& n);
  void propagate(const Node& n);

  std::vector<Node> nodes_;
  bool evaluated_ = false;
};

}  // namespace headlab
