#include "dssl/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dssl/error.hpp"

namespace dssl {

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }

Var Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Op op, Tensor value, std::initializer_list<Var> parents, double attr) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.attr = attr;
  for (const Var& p : parents) {
    if (p.graph_ != this) throw UsageError("Graph::record: parent belongs to another graph");
    n.parents[n.n_parents++] = p.id_;
    n.requires_grad = n.requires_grad || nodes_[p.id_].requires_grad;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (!backward_done_) throw UsageError("Graph::grad: backward() has not run");
  return n.grad;
}

void Graph::accumulate(std::size_t id, Tensor g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad = std::move(g);
    return;
  }
  auto dst = n.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Graph::backward(Var loss) {
  if (loss.graph_ != this) throw UsageError("Graph::backward: loss belongs to another graph");
  const Tensor& lv = nodes_[loss.id_].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw UsageError("Graph::backward: loss must be 1x1, got " + std::to_string(lv.rows()) +
                     "x" + std::to_string(lv.cols()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (nodes_[loss.id_].requires_grad) nodes_[loss.id_].grad = Tensor::scalar(1.0);
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (n.op == Op::Leaf || !n.requires_grad || n.grad.empty()) continue;
    propagate(id);
  }
  for (Node& n : nodes_)
    if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  backward_done_ = true;
}

void Graph::propagate(std::size_t id) {
  // Copy what we need: accumulate() may touch other nodes but never this one.
  const Node& n = nodes_[id];
  const Tensor& g = n.grad;
  const std::size_t pa = n.parents[0];
  const std::size_t pb = n.parents[1];
  auto val = [this](std::size_t i) -> const Tensor& { return nodes_[i].value; };
  auto wants = [this](std::size_t i) { return nodes_[i].requires_grad; };

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::MatMul:
      if (wants(pa)) accumulate(pa, dssl::matmul_nt(g, val(pb)));
      if (wants(pb)) accumulate(pb, dssl::matmul_tn(val(pa), g));
      break;
    case Op::MatMulNT:
      if (wants(pa)) accumulate(pa, dssl::matmul(g, val(pb)));
      if (wants(pb)) accumulate(pb, dssl::matmul_tn(g, val(pa)));
      break;
    case Op::MatMulTN:
      if (wants(pa)) accumulate(pa, dssl::matmul_nt(val(pb), g));
      if (wants(pb)) accumulate(pb, dssl::matmul(val(pa), g));
      break;
    case Op::Transpose:
      accumulate(pa, dssl::transpose(g));
      break;
    case Op::Add:
      if (wants(pa)) accumulate(pa, g);
      if (wants(pb)) accumulate(pb, g);
      break;
    case Op::Sub:
      if (wants(pa)) accumulate(pa, g);
      if (wants(pb)) accumulate(pb, dssl::scale(g, -1.0));
      break;
    case Op::Scale:
      accumulate(pa, dssl::scale(g, n.attr));
      break;
    case Op::Hadamard:
      if (wants(pa)) accumulate(pa, dssl::hadamard(g, val(pb)));
      if (wants(pb)) accumulate(pb, dssl::hadamard(g, val(pa)));
      break;
    case Op::AddRowBias: {
      if (wants(pa)) accumulate(pa, g);
      if (wants(pb)) {
        Tensor db(1, g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) db[c] += g(r, c);
        accumulate(pb, std::move(db));
      }
      break;
    }
    case Op::Relu: {
      Tensor dx = g;
      const Tensor& out = n.value;
      for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(out[i] > 0.0)) dx[i] = 0.0;
      accumulate(pa, std::move(dx));
      break;
    }
    case Op::ConcatCols: {
      const std::size_t ca = val(pa).cols();
      if (wants(pa)) accumulate(pa, slice_cols(g, 0, ca));
      if (wants(pb)) accumulate(pb, slice_cols(g, ca, g.cols()));
      break;
    }
    case Op::NormalizeRows: {
      const Tensor& x = val(pa);
      Tensor dx(x.rows(), x.cols());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto xr = x.row(r);
        auto gr = g.row(r);
        double ss = 0.0;
        double xg = 0.0;
        for (std::size_t c = 0; c < xr.size(); ++c) {
          ss += xr[c] * xr[c];
          xg += xr[c] * gr[c];
        }
        const double norm = std::sqrt(ss);
        const double d = norm + kNormEps;
        const double k = norm > 0.0 ? xg / (norm * d * d) : 0.0;
        auto out = dx.row(r);
        for (std::size_t c = 0; c < xr.size(); ++c) out[c] = gr[c] / d - xr[c] * k;
      }
      accumulate(pa, std::move(dx));
      break;
    }
    case Op::NormalizeCols: {
      const Tensor& x = val(pa);
      std::vector<double> ss(x.cols(), 0.0);
      std::vector<double> xg(x.cols(), 0.0);
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) {
          ss[c] += x(r, c) * x(r, c);
          xg[c] += x(r, c) * g(r, c);
        }
      std::vector<double> inv_d(x.cols());
      std::vector<double> k(x.cols());
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double norm = std::sqrt(ss[c]);
        const double d = norm + kNormEps;
        inv_d[c] = 1.0 / d;
        k[c] = norm > 0.0 ? xg[c] / (norm * d * d) : 0.0;
      }
      Tensor dx(x.rows(), x.cols());
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c)
          dx(r, c) = g(r, c) * inv_d[c] - x(r, c) * k[c];
      accumulate(pa, std::move(dx));
      break;
    }
    case Op::LogSumExpRows: {
      const Tensor& x = val(pa);
      Tensor dx(x.rows(), x.cols());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const double lse = n.value[r];
        for (std::size_t c = 0; c < x.cols(); ++c) dx(r, c) = g[r] * std::exp(x(r, c) - lse);
      }
      accumulate(pa, std::move(dx));
      break;
    }
    case Op::Diag: {
      const Tensor& x = val(pa);
      Tensor dx(x.rows(), x.cols());
      for (std::size_t i = 0; i < x.rows(); ++i) dx(i, i) = g[i];
      accumulate(pa, std::move(dx));
      break;
    }
    case Op::RowDot: {
      const Tensor& a = val(pa);
      const Tensor& b = val(pb);
      if (wants(pa)) {
        Tensor da(a.rows(), a.cols());
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) da(r, c) = g[r] * b(r, c);
        accumulate(pa, std::move(da));
      }
      if (wants(pb)) {
        Tensor db(b.rows(), b.cols());
        for (std::size_t r = 0; r < b.rows(); ++r)
          for (std::size_t c = 0; c < b.cols(); ++c) db(r, c) = g[r] * a(r, c);
        accumulate(pb, std::move(db));
      }
      break;
    }
    case Op::MulRows: {
      const Tensor& x = val(pa);
      const Tensor& cvec = val(pb);
      if (wants(pa)) {
        Tensor dx(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < x.cols(); ++c) dx(r, c) = g(r, c) * cvec[r];
        accumulate(pa, std::move(dx));
      }
      if (wants(pb)) {
        Tensor dc(cvec.rows(), 1);
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < x.cols(); ++c) dc[r] += g(r, c) * x(r, c);
        accumulate(pb, std::move(dc));
      }
      break;
    }
    case Op::SumAll: {
      const Tensor& x = val(pa);
      accumulate(pa, Tensor(x.rows(), x.cols(), g[0]));
      break;
    }
    case Op::MeanAll: {
      const Tensor& x = val(pa);
      accumulate(pa, Tensor(x.rows(), x.cols(), g[0] / static_cast<double>(x.size())));
      break;
    }
    case Op::Square: {
      const Tensor& x = val(pa);
      Tensor dx(x.rows(), x.cols());
      for (std::size_t i = 0; i < x.size(); ++i) dx[i] = 2.0 * x[i] * g[i];
      accumulate(pa, std::move(dx));
      break;
    }
    case Op::FrobeniusNorm: {
      const Tensor& x = val(pa);
      const double norm = n.value[0];
      Tensor dx(x.rows(), x.cols());
      if (norm > 0.0)
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = g[0] * x[i] / norm;
      accumulate(pa, std::move(dx));
      break;
    }
  }
}

namespace {

Graph& graph_of(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw UsageError("op: operands belong to different graphs");
  return a.graph();
}

}  // namespace

Var matmul(Var a, Var b) {
  return graph_of(a, b).record(Op::MatMul, dssl::matmul(a.value(), b.value()), {a, b});
}

Var matmul_nt(Var a, Var b) {
  return graph_of(a, b).record(Op::MatMulNT, dssl::matmul_nt(a.value(), b.value()), {a, b});
}

Var matmul_tn(Var a, Var b) {
  return graph_of(a, b).record(Op::MatMulTN, dssl::matmul_tn(a.value(), b.value()), {a, b});
}

Var transpose(Var a) { return a.graph().record(Op::Transpose, dssl::transpose(a.value()), {a}); }

Var add(Var a, Var b) {
  return graph_of(a, b).record(Op::Add, dssl::add(a.value(), b.value()), {a, b});
}

Var sub(Var a, Var b) {
  return graph_of(a, b).record(Op::Sub, dssl::sub(a.value(), b.value()), {a, b});
}

Var scale(Var a, double s) {
  return a.graph().record(Op::Scale, dssl::scale(a.value(), s), {a}, s);
}

Var hadamard(Var a, Var b) {
  return graph_of(a, b).record(Op::Hadamard, dssl::hadamard(a.value(), b.value()), {a, b});
}

Var add_row_bias(Var x, Var b) {
  return graph_of(x, b).record(Op::AddRowBias, dssl::add_row_bias(x.value(), b.value()), {x, b});
}

Var relu(Var x) { return x.graph().record(Op::Relu, dssl::relu(x.value()), {x}); }

Var concat_cols(Var a, Var b) {
  return graph_of(a, b).record(Op::ConcatCols, dssl::concat_cols(a.value(), b.value()), {a, b});
}

Var l2_normalize_rows(Var x) {
  return x.graph().record(Op::NormalizeRows, dssl::l2_normalize_rows(x.value()), {x});
}

Var l2_normalize_cols(Var x) {
  return x.graph().record(Op::NormalizeCols, dssl::l2_normalize_cols(x.value()), {x});
}

Var logsumexp_rows(Var x) {
  const Tensor& v = x.value();
  Tensor out(v.rows(), 1);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    auto row = v.row(r);
    double m = -std::numeric_limits<double>::infinity();
    for (double e : row) m = std::max(m, e);
    double s = 0.0;
    for (double e : row) s += std::exp(e - m);
    out[r] = m + std::log(s);
  }
  return x.graph().record(Op::LogSumExpRows, std::move(out), {x});
}

Var diag(Var x) {
  const Tensor& v = x.value();
  if (v.rows() != v.cols()) throw UsageError("diag: matrix is not square");
  Tensor out(v.rows(), 1);
  for (std::size_t i = 0; i < v.rows(); ++i) out[i] = v(i, i);
  return x.graph().record(Op::Diag, std::move(out), {x});
}

Var row_dot(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) throw UsageError("row_dot: shape mismatch");
  Tensor out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    auto ar = av.row(r);
    auto br = bv.row(r);
    for (std::size_t c = 0; c < ar.size(); ++c) s += ar[c] * br[c];
    out[r] = s;
  }
  return graph_of(a, b).record(Op::RowDot, std::move(out), {a, b});
}

Var mul_rows(Var x, Var c) {
  const Tensor& xv = x.value();
  const Tensor& cv = c.value();
  if (cv.cols() != 1 || cv.rows() != xv.rows()) throw UsageError("mul_rows: c must be Rx1");
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (double& e : out.row(r)) e *= cv[r];
  return graph_of(x, c).record(Op::MulRows, std::move(out), {x, c});
}

Var sum_all(Var x) { return x.graph().record(Op::SumAll, Tensor::scalar(dssl::sum(x.value())), {x}); }

Var mean_all(Var x) {
  const Tensor& v = x.value();
  if (v.empty()) throw UsageError("mean_all: empty tensor");
  return x.graph().record(Op::MeanAll,
                          Tensor::scalar(dssl::sum(v) / static_cast<double>(v.size())), {x});
}

Var square(Var x) { return x.graph().record(Op::Square, dssl::hadamard(x.value(), x.value()), {x}); }

Var frobenius_norm(Var x) {
  return x.graph().record(Op::FrobeniusNorm, Tensor::scalar(dssl::frobenius_norm(x.value())), {x});
}

}  // namespace dssl
