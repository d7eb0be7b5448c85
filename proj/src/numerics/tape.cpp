#include "headlab/numerics/tape.hpp"

#include <string>

#include "headlab/errors.hpp"
#include "headlab/numerics/activations.hpp"

namespace headlab {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InvalidInput(std::string("tape: ") + what);
}

}  // namespace

Tape::Var Tape::push(Node n) {
  for (auto in : n.inputs) n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
  nodes_.push_back(std::move(n));
  evaluated_ = false;
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw InvalidInput("tape: unknown variable");
  return nodes_[v.id];
}

Tape::Var Tape::parameter(Matrix value) {
  require(value.allFinite(), "non-finite parameter");
  Node n;
  n.op = Op::Parameter;
  n.rows = value.rows();
  n.cols = value.cols();
  n.needs_grad = true;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::Var Tape::constant(Matrix value) {
  require(value.allFinite(), "non-finite constant");
  Node n;
  n.op = Op::Constant;
  n.rows = value.rows();
  n.cols = value.cols();
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::Var Tape::matmul(Var a, Var b) {
  require(node(a).cols == node(b).rows, "matmul inner dimensions differ");
  return push({Op::MatMul, {a.id, b.id}, node(a).rows, node(b).cols});
}

Tape::Var Tape::matmul_nt(Var a, Var b) {
  require(node(a).cols == node(b).cols, "matmul_nt inner dimensions differ");
  return push({Op::MatMulNT, {a.id, b.id}, node(a).rows, node(b).rows});
}

Tape::Var Tape::add(Var a, Var b) {
  require(node(a).rows == node(b).rows && node(a).cols == node(b).cols, "add shape mismatch");
  return push({Op::Add, {a.id, b.id}, node(a).rows, node(a).cols});
}

Tape::Var Tape::add_row(Var a, Var row) {
  require(node(row).rows == 1 && node(row).cols == node(a).cols, "add_row expects a 1xk row");
  return push({Op::AddRow, {a.id, row.id}, node(a).rows, node(a).cols});
}

Tape::Var Tape::sub(Var a, Var b) {
  require(node(a).rows == node(b).rows && node(a).cols == node(b).cols, "sub shape mismatch");
  return push({Op::Sub, {a.id, b.id}, node(a).rows, node(a).cols});
}

Tape::Var Tape::hadamard(Var a, Var b) {
  require(node(a).rows == node(b).rows && node(a).cols == node(b).cols, "hadamard shape mismatch");
  return push({Op::Hadamard, {a.id, b.id}, node(a).rows, node(a).cols});
}

Tape::Var Tape::scale(Var a, double c) {
  require(std::isfinite(c), "non-finite scale");
  Node n{Op::Scale, {a.id}, node(a).rows, node(a).cols};
  n.scalar = c;
  return push(std::move(n));
}

Tape::Var Tape::relu(Var a) { return push({Op::Relu, {a.id}, node(a).rows, node(a).cols}); }

Tape::Var Tape::gelu(Var a) { return push({Op::Gelu, {a.id}, node(a).rows, node(a).cols}); }

Tape::Var Tape::softmax_rows(Var a, double beta) {
  require(beta > 0.0 && std::isfinite(beta), "softmax beta must be positive");
  require(node(a).cols > 0, "softmax over empty rows");
  Node n{Op::SoftmaxRows, {a.id}, node(a).rows, node(a).cols};
  n.scalar = beta;
  return push(std::move(n));
}

Tape::Var Tape::reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  require(rows * cols == node(a).rows * node(a).cols, "reshape changes element count");
  return push({Op::Reshape, {a.id}, rows, cols});
}

Tape::Var Tape::segment_weighted_sum(Var weights, Var values) {
  const auto& w = node(weights);
  require(w.rows * w.cols == node(values).rows, "segment_weighted_sum: values rows must be B*T");
  return push({Op::SegmentWeightedSum, {weights.id, values.id}, w.rows, node(values).cols});
}

Tape::Var Tape::hconcat(std::span<const Var> parts) {
  require(!parts.empty(), "hconcat of nothing");
  Node n{Op::HConcat, {}, node(parts[0]).rows, 0};
  for (auto p : parts) {
    require(node(p).rows == n.rows, "hconcat row mismatch");
    n.inputs.push_back(p.id);
    n.cols += node(p).cols;
  }
  return push(std::move(n));
}

Tape::Var Tape::slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count > 0 && start + count <= node(a).cols, "slice_cols out of range");
  Node n{Op::SliceCols, {a.id}, node(a).rows, count};
  n.offset = start;
  return push(std::move(n));
}

Tape::Var Tape::sum(Var a) { return push({Op::Sum, {a.id}, 1, 1}); }

void Tape::set_value(Var leaf, Matrix value) {
  if (leaf.id >= nodes_.size()) throw InvalidInput("tape: unknown variable");
  auto& n = nodes_[leaf.id];
  if (n.op != Op::Parameter && n.op != Op::Constant)
    throw InvalidInput("tape: set_value on a non-leaf node");
  require(value.rows() == n.rows && value.cols() == n.cols, "set_value shape mismatch");
  require(value.allFinite(), "non-finite leaf value");
  n.value = std::move(value);
  evaluated_ = false;
}

void Tape::evaluate(Node& n) {
  auto in = [&](std::size_t k) -> const Matrix& { return nodes_[n.inputs[k]].value; };
  switch (n.op) {
    case Op::Parameter:
    case Op::Constant:
      break;
    case Op::MatMul:
      n.value.noalias() = in(0) * in(1);
      break;
    case Op::MatMulNT:
      n.value.noalias() = in(0) * in(1).transpose();
      break;
    case Op::Add:
      n.value = in(0) + in(1);
      break;
    case Op::AddRow:
      n.value = in(0).rowwise() + in(1).row(0);
      break;
    case Op::Sub:
      n.value = in(0) - in(1);
      break;
    case Op::Hadamard:
      n.value = in(0).cwiseProduct(in(1));
      break;
    case Op::Scale:
      n.value = n.scalar * in(0);
      break;
    case Op::Relu:
      n.value = headlab::relu(in(0));
      break;
    case Op::Gelu:
      n.value = headlab::gelu(in(0));
      break;
    case Op::SoftmaxRows: {
      const Matrix& s = in(0);
      n.value.resize(s.rows(), s.cols());
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double m = s.row(r).maxCoeff();
        n.value.row(r) = (n.scalar * (s.row(r).array() - m)).exp().matrix();
        n.value.row(r) /= n.value.row(r).sum();
      }
      break;
    }
    case Op::Reshape:
      n.value = in(0).reshaped<Eigen::RowMajor>(n.rows, n.cols);
      break;
    case Op::SegmentWeightedSum: {
      const Matrix& w = in(0);
      const Matrix& v = in(1);
      const Eigen::Index len = w.cols();
      n.value.resize(w.rows(), v.cols());
      for (Eigen::Index b = 0; b < w.rows(); ++b)
        n.value.row(b).noalias() = w.row(b) * v.middleRows(b * len, len);
      break;
    }
    case Op::HConcat: {
      n.value.resize(n.rows, n.cols);
      Eigen::Index c = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        n.value.middleCols(c, in(k).cols()) = in(k);
        c += in(k).cols();
      }
      break;
    }
    case Op::SliceCols:
      n.value = in(0).middleCols(n.offset, n.cols);
      break;
    case Op::Sum:
      n.value.resize(1, 1);
      n.value(0, 0) = in(0).sum();
      break;
  }
}

void Tape::forward() {
  for (auto& n : nodes_) evaluate(n);
  evaluated_ = true;
}

void Tape::propagate(const Node& n) {
  const Matrix& g = n.grad;
  auto val = [&](std::size_t k) -> const Matrix& { return nodes_[n.inputs[k]].value; };
  auto target = [&](std::size_t k) -> Matrix* {
    Node& t = nodes_[n.inputs[k]];
    return t.needs_grad ? &t.grad : nullptr;
  };
  switch (n.op) {
    case Op::Parameter:
    case Op::Constant:
      break;
    case Op::MatMul:
      if (auto* ga = target(0)) ga->noalias() += g * val(1).transpose();
      if (auto* gb = target(1)) gb->noalias() += val(0).transpose() * g;
      break;
    case Op::MatMulNT:
      if (auto* ga = target(0)) ga->noalias() += g * val(1);
      if (auto* gb = target(1)) gb->noalias() += g.transpose() * val(0);
      break;
    case Op::Add:
      if (auto* ga = target(0)) *ga += g;
      if (auto* gb = target(1)) *gb += g;
      break;
    case Op::AddRow:
      if (auto* ga = target(0)) *ga += g;
      if (auto* gr = target(1)) *gr += g.colwise().sum();
      break;
    case Op::Sub:
      if (auto* ga = target(0)) *ga += g;
      if (auto* gb = target(1)) *gb -= g;
      break;
    case Op::Hadamard:
      if (auto* ga = target(0)) *ga += g.cwiseProduct(val(1));
      if (auto* gb = target(1)) *gb += g.cwiseProduct(val(0));
      break;
    case Op::Scale:
      if (auto* ga = target(0)) *ga += n.scalar * g;
      break;
    case Op::Relu:
      if (auto* ga = target(0))
        *ga += (val(0).array() > 0.0).select(g, 0.0);
      break;
    case Op::Gelu:
      if (auto* ga = target(0))
        *ga += g.cwiseProduct(val(0).unaryExpr([](double x) { return gelu_derivative(x); }));
      break;
    case Op::SoftmaxRows:
      if (auto* ga = target(0)) {
        const Matrix& p = n.value;
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
          const double inner = g.row(r).dot(p.row(r));
          ga->row(r) += n.scalar * p.row(r).cwiseProduct((g.row(r).array() - inner).matrix());
        }
      }
      break;
    case Op::Reshape:
      if (auto* ga = target(0)) *ga += g.reshaped<Eigen::RowMajor>(ga->rows(), ga->cols());
      break;
    case Op::SegmentWeightedSum: {
      const Matrix& w = val(0);
      const Matrix& v = val(1);
      const Eigen::Index len = w.cols();
      auto* gw = target(0);
      auto* gv = target(1);
      for (Eigen::Index b = 0; b < w.rows(); ++b) {
        if (gw) gw->row(b).noalias() += g.row(b) * v.middleRows(b * len, len).transpose();
        if (gv) gv->middleRows(b * len, len).noalias() += w.row(b).transpose() * g.row(b);
      }
      break;
    }
    case Op::HConcat: {
      Eigen::Index c = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Eigen::Index w = nodes_[n.inputs[k]].cols;
        if (auto* gk = target(k)) *gk += g.middleCols(c, w);
        c += w;
      }
      break;
    }
    case Op::SliceCols:
      if (auto* ga = target(0)) ga->middleCols(n.offset, n.cols) += g;
      break;
    case Op::Sum:
      if (auto* ga = target(0)) ga->array() += g(0, 0);
      break;
  }
}

void Tape::backward(Var out, double seed_grad) {
  if (!evaluated_) throw StateError("tape: backward() called before forward()");
  if (!std::isfinite(seed_grad)) throw InvalidInput("tape: non-finite seed gradient");
  const auto& o = node(out);
  if (o.rows != 1 || o.cols != 1) throw InvalidInput("tape: backward() needs a scalar output");
  for (auto& n : nodes_) {
    if (n.needs_grad)
      n.grad.setZero(n.rows, n.cols);
    else
      n.grad.resize(0, 0);
  }
  if (!o.needs_grad) return;
  nodes_[out.id].grad(0, 0) = seed_grad;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    if (nodes_[i].needs_grad) propagate(nodes_[i]);
  }
}

const Matrix& Tape::value(Var v) const {
  if (!evaluated_) throw StateError("tape: value() read before forward()");
  return node(v).value;
}

const Matrix& Tape::grad(Var v) const {
  const auto& n = node(v);
  if (!n.needs_grad) throw InvalidInput("tape: node does not depend on any parameter");
  if (n.grad.size() != n.value.size()) throw StateError("tape: grad() read before backward()");
  return n.grad;
}

std::vector<Tape::Var> Tape::parameters() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].op == Op::Parameter) out.push_back(Var{i});
  return out;
}

}  // namespace headlab
