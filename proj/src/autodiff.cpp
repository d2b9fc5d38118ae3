#include "micas/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "micas/error.hpp"

namespace micas::ad {

// ---------------------------------------------------------------------------
// ParamStore

ParamStore::Entry& ParamStore::add(const std::string& name, Matrix init) {
  require(!contains(name), ErrorKind::Contract, "duplicate parameter name");
  Entry e;
  e.grad = Matrix::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  return entries_.emplace(name, std::move(e)).first->second;
}

ParamStore::Entry& ParamStore::at(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail(ErrorKind::Configuration, "unknown parameter: " + std::string(name));
  return it->second;
}

const ParamStore::Entry& ParamStore::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail(ErrorKind::Configuration, "unknown parameter: " + std::string(name));
  return it->second;
}

bool ParamStore::contains(std::string_view name) const {
  return entries_.find(name) != entries_.end();
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) e.grad.setZero();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

bool ParamStore::all_finite() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const auto& kv) { return kv.second.value.allFinite(); });
}

std::uint64_t ParamStore::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, e] : entries_) {
    mix(name.data(), name.size());
    const std::int64_t dims[2] = {e.value.rows(), e.value.cols()};
    mix(dims, sizeof dims);
    for (Index r = 0; r < e.value.rows(); ++r)
      for (Index c = 0; c < e.value.cols(); ++c) {
        const double v = e.value(r, c);
        mix(&v, sizeof v);
      }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Tape

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::adjoint() const { return tape_->adjoint(id_); }

double Var::scalar() const {
  require(rows() == 1 && cols() == 1, ErrorKind::Contract, "value is not a scalar");
  return value()(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParamStore& store, std::string_view name) {
  auto& entry = store.at(name);
  nodes_.push_back(Node{entry.value, Matrix(), nullptr, &entry});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Matrix value, Pullback pullback) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(pullback), nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss, double loss_grad) {
  require(loss.tape() == this, ErrorKind::Contract, "loss belongs to another tape");
  const auto& lv = nodes_[loss.id()].value;
  require(lv.rows() == 1 && lv.cols() == 1, ErrorKind::Contract,
          "backward requires a scalar terminal node");

  for (auto& n : nodes_) n.adjoint = Matrix::Zero(n.value.rows(), n.value.cols());
  nodes_[loss.id()].adjoint(0, 0) = loss_grad;
  visited_.clear();

  for (std::size_t k = loss.id() + 1; k-- > 0;) {
    visited_.push_back(k);
    auto& node = nodes_[k];
    if (node.param) {
      node.param->grad += node.adjoint;
    } else if (node.pullback) {
      node.pullback(*this, k);
    }
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {

Tape& same_tape(Var a, Var b) {
  require(a.tape() != nullptr && a.tape() == b.tape(), ErrorKind::Contract,
          "operands live on different tapes");
  return *a.tape();
}

void require_shape(bool ok, const char* what) { require(ok, ErrorKind::Domain, what); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_shape(a.cols() == b.rows(), "matmul: inner dimensions differ");
  const auto ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value(), [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.adjoint(self);
    tp.adjoint_mut(ia).noalias() += g * tp.value(ib).transpose();
    tp.adjoint_mut(ib).noalias() += tp.value(ia).transpose() * g;
  });
}

Var matmul_tn(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_shape(a.rows() == b.rows(), "matmul_tn: row counts differ");
  const auto ia = a.id(), ib = b.id();
  return t.push(a.value().transpose() * b.value(), [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.adjoint(self);
    tp.adjoint_mut(ia).noalias() += tp.value(ib) * g.transpose();
    tp.adjoint_mut(ib).noalias() += tp.value(ia) * g;
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  const auto ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), [ia, ib](Tape& tp, std::size_t self) {
    tp.adjoint_mut(ia) += tp.adjoint(self);
    tp.adjoint_mut(ib) += tp.adjoint(self);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  const auto ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), [ia, ib](Tape& tp, std::size_t self) {
    tp.adjoint_mut(ia) += tp.adjoint(self);
    tp.adjoint_mut(ib) -= tp.adjoint(self);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row: width mismatch");
  const auto ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), [ia, ir](Tape& tp, std::size_t self) {
    tp.adjoint_mut(ia) += tp.adjoint(self);
    tp.adjoint_mut(ir) += tp.adjoint(self).colwise().sum();
  });
}

Var broadcast_rows(Var row, Index rows) {
  require_shape(row.rows() == 1 && rows >= 1, "broadcast_rows: expects a single row");
  const auto ir = row.id();
  Matrix out = row.value().replicate(rows, 1);
  return row.tape()->push(std::move(out), [ir](Tape& tp, std::size_t self) {
    tp.adjoint_mut(ir) += tp.adjoint(self).colwise().sum();
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_shape(a.rows() == b.rows(), "concat_cols: row counts differ");
  const auto ia = a.id(), ib = b.id();
  const Index ca = a.cols(), cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  out << a.value(), b.value();
  return t.push(std::move(out), [ia, ib, ca, cb](Tape& tp, std::size_t self) {
    const Matrix& g = tp.adjoint(self);
    tp.adjoint_mut(ia) += g.leftCols(ca);
    tp.adjoint_mut(ib) += g.rightCols(cb);
  });
}

Var concat_rows(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_shape(a.cols() == b.cols(), "concat_rows: column counts differ");
  const auto ia = a.id(), ib = b.id();
  const Index ra = a.rows(), rb = b.rows();
  Matrix out(ra + rb, a.cols());
  out << a.value(), b.value();
  return t.push(std::move(out), [ia, ib, ra, rb](Tape& tp, std::size_t self) {
    const Matrix& g = tp.adjoint(self);
    tp.adjoint_mut(ia) += g.topRows(ra);
    tp.adjoint_mut(ib) += g.bottomRows(rb);
  });
}

Var max_pool_rows(Var a) {
  require_shape(a.rows() >= 1, "max_pool_rows: empty input");
  const Matrix& v = a.value();
  std::vector<Index> arg(static_cast<std::size_t>(v.cols()), 0);
  Matrix out(1, v.cols());
  for (Index c = 0; c < v.cols(); ++c) {
    Index best = 0;
    for (Index r = 1; r < v.rows(); ++r)
      if (v(r, c) > v(best, c)) best = r;
    arg[static_cast<std::size_t>(c)] = best;
    out(0, c) = v(best, c);
  }
  const auto ia = a.id();
  return a.tape()->push(std::move(out), [ia, arg = std::move(arg)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.adjoint(self);
    Matrix& ga = tp.adjoint_mut(ia);
    for (Index c = 0; c < g.cols(); ++c) ga(arg[static_cast<std::size_t>(c)], c) += g(0, c);
  });
}

Var relu(Var a) {
  const auto ia = a.id();
  return a.tape()->push(a.value().cwiseMax(0.0), [ia](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(ia);
    tp.adjoint_mut(ia) += (x.array() > 0.0).select(tp.adjoint(self), 0.0);
  });
}

Var tanh(Var a) {
  const auto ia = a.id();
  Matrix out = a.value().array().tanh().matrix();
  return a.tape()->push(std::move(out), [ia](Tape& tp, std::size_t self) {
    const Matrix& y = tp.value(self);
    tp.adjoint_mut(ia).array() += tp.adjoint(self).array() * (1.0 - y.array().square());
  });
}

Var softplus(Var a) {
  const auto ia = a.id();
  Matrix out = a.value().unaryExpr(&softplus_scalar);
  return a.tape()->push(std::move(out), [ia](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(ia);
    tp.adjoint_mut(ia).array() += tp.adjoint(self).array() * x.unaryExpr(&sigmoid).array();
  });
}

Var log(Var a) {
  require((a.value().array() > 0.0).all(), ErrorKind::Numeric, "log of a nonpositive value");
  const auto ia = a.id();
  Matrix out = a.value().array().log().matrix();
  return a.tape()->push(std::move(out), [ia](Tape& tp, std::size_t self) {
    tp.adjoint_mut(ia).array() += tp.adjoint(self).array() / tp.value(ia).array();
  });
}

Var scale(Var a, double factor) {
  const auto ia = a.id();
  return a.tape()->push(a.value() * factor, [ia, factor](Tape& tp, std::size_t self) {
    tp.adjoint_mut(ia) += factor * tp.adjoint(self);
  });
}

Var add_scalar(Var a, double offset) {
  const auto ia = a.id();
  Matrix out = a.value().array() + offset;
  return a.tape()->push(std::move(out), [ia](Tape& tp, std::size_t self) {
    tp.adjoint_mut(ia) += tp.adjoint(self);
  });
}

Var softmax_cols(Var a) {
  require_shape(a.rows() >= 1, "softmax_cols: empty input");
  Matrix out = a.value();
  for (Index c = 0; c < out.cols(); ++c) {
    auto col = out.col(c);
    const double mx = col.maxCoeff();
    col = (col.array() - mx).exp().matrix();
    col /= col.sum();
  }
  const auto ia = a.id();
  return a.tape()->push(std::move(out), [ia](Tape& tp, std::size_t self) {
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.adjoint(self);
    Matrix& ga = tp.adjoint_mut(ia);
    for (Index c = 0; c < y.cols(); ++c) {
      const double dot = y.col(c).dot(g.col(c));
      ga.col(c).array() += y.col(c).array() * (g.col(c).array() - dot);
    }
  });
}

Var sum(Var a) {
  const auto ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->push(std::move(out), [ia](Tape& tp, std::size_t self) {
    tp.adjoint_mut(ia).array() += tp.adjoint(self)(0, 0);
  });
}

Var mean(Var a) {
  require_shape(a.value().size() > 0, "mean of an empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var select_rows(Var a, std::span<const Index> rows) {
  std::vector<Index> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    require_shape(idx[k] >= 0 && idx[k] < a.rows(), "select_rows: index out of range");
    out.row(static_cast<Index>(k)) = a.value().row(idx[k]);
  }
  const auto ia = a.id();
  return a.tape()->push(std::move(out), [ia, idx = std::move(idx)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.adjoint(self);
    Matrix& ga = tp.adjoint_mut(ia);
    for (std::size_t k = 0; k < idx.size(); ++k) ga.row(idx[k]) += g.row(static_cast<Index>(k));
  });
}

Var reshape(Var a, Index rows, Index cols) {
  require_shape(rows * cols == a.value().size(), "reshape: element count mismatch");
  const Index in_cols = a.cols();
  const Matrix& v = a.value();
  Matrix out(rows, cols);
  for (Index k = 0; k < v.size(); ++k) out(k / cols, k % cols) = v(k / in_cols, k % in_cols);
  const auto ia = a.id();
  return a.tape()->push(std::move(out), [ia, in_cols](Tape& tp, std::size_t self) {
    const Matrix& g = tp.adjoint(self);
    Matrix& ga = tp.adjoint_mut(ia);
    const Index oc = g.cols();
    for (Index k = 0; k < g.size(); ++k) ga(k / in_cols, k % in_cols) += g(k / oc, k % oc);
  });
}

Var chamfer(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  require_shape(va.rows() >= 1 && vb.rows() >= 1, "chamfer: empty point set");
  require_shape(va.cols() == vb.cols(), "chamfer: dimension mismatch");
  require(va.allFinite() && vb.allFinite(), ErrorKind::Domain, "chamfer: non-finite coordinate");

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<Index> nn_a(static_cast<std::size_t>(va.rows()), 0);
  std::vector<Index> nn_b(static_cast<std::size_t>(vb.rows()), 0);
  std::vector<double> best_b(static_cast<std::size_t>(vb.rows()), inf);
  double sum_a = 0.0;
  for (Index i = 0; i < va.rows(); ++i) {
    double best = inf;
    for (Index j = 0; j < vb.rows(); ++j) {
      const double d = (va.row(i) - vb.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        nn_a[static_cast<std::size_t>(i)] = j;
      }
      if (d < best_b[static_cast<std::size_t>(j)]) {
        best_b[static_cast<std::size_t>(j)] = d;
        nn_b[static_cast<std::size_t>(j)] = i;
      }
    }
    sum_a += best;
  }
  double sum_b = 0.0;
  for (double d : best_b) sum_b += d;

  const double na = static_cast<double>(va.rows());
  const double nb = static_cast<double>(vb.rows());
  Matrix out(1, 1);
  out(0, 0) = sum_a / na + sum_b / nb;

  const auto ia = a.id(), ib = b.id();
  return t.push(std::move(out), [ia, ib, na, nb, nn_a = std::move(nn_a),
                                 nn_b = std::move(nn_b)](Tape& tp, std::size_t self) {
    const double g = tp.adjoint(self)(0, 0);
    const Matrix& xa = tp.value(ia);
    const Matrix& xb = tp.value(ib);
    Matrix& ga = tp.adjoint_mut(ia);
    Matrix& gb = tp.adjoint_mut(ib);
    for (Index i = 0; i < xa.rows(); ++i) {
      const Index j = nn_a[static_cast<std::size_t>(i)];
      const Eigen::RowVectorXd d = (2.0 * g / na) * (xa.row(i) - xb.row(j));
      ga.row(i) += d;
      gb.row(j) -= d;
    }
    for (Index j = 0; j < xb.rows(); ++j) {
      const Index i = nn_b[static_cast<std::size_t>(j)];
      const Eigen::RowVectorXd d = (2.0 * g / nb) * (xb.row(j) - xa.row(i));
      gb.row(j) += d;
      ga.row(i) -= d;
    }
  });
}

Var pairwise_logistic(Var scores, const Matrix& coeff) {
  const Matrix& s = scores.value();
  require_shape(s.cols() == 1, "pairwise_logistic: scores must be a column");
  require_shape(coeff.rows() == s.rows() && coeff.cols() == s.rows(),
                "pairwise_logistic: coefficient shape mismatch");
  double total = 0.0;
  for (Index i = 0; i < s.rows(); ++i)
    for (Index j = 0; j < s.rows(); ++j)
      if (coeff(i, j) != 0.0) total += coeff(i, j) * softplus_scalar(s(j, 0) - s(i, 0));
  Matrix out(1, 1);
  out(0, 0) = total;
  const auto is = scores.id();
  return scores.tape()->push(std::move(out), [is, coeff](Tape& tp, std::size_t self) {
    const double g = tp.adjoint(self)(0, 0);
    const Matrix& sv = tp.value(is);
    Matrix& gs = tp.adjoint_mut(is);
    for (Index i = 0; i < sv.rows(); ++i)
      for (Index j = 0; j < sv.rows(); ++j) {
        if (coeff(i, j) == 0.0) continue;
        const double d = g * coeff(i, j) * sigmoid(sv(j, 0) - sv(i, 0));
        gs(j, 0) += d;
        gs(i, 0) -= d;
      }
  });
}

Var activate(Var a, Activation act) {
  switch (act) {
    case Activation::Relu: return relu(a);
    case Activation::Tanh: return tanh(a);
    case Activation::None: return a;
  }
  return a;
}

}  // namespace micas::ad
