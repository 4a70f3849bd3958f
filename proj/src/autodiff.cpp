#include "gcegnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace gcegnn::ad {

namespace {

[[noreturn]] void shape_error(std::string_view op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

Tape& same_tape(std::string_view op, Var a, Var b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument(std::string(op) + ": invalid Var");
  if (a.tape() != b.tape()) throw std::invalid_argument(std::string(op) + ": Vars from different tapes");
  return *a.tape();
}

Tape& tape_of(std::string_view op, Var a) {
  if (!a.valid()) throw std::invalid_argument(std::string(op) + ": invalid Var");
  return *a.tape();
}

// `derivative(x, y)` receives the input and output values.
template <typename F, typename D>
Var unary_elementwise(Var x, std::string op, F forward, D derivative) {
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = forward(xv[i]);
  return tape_of(op, x).record(std::move(out), std::move(op), {x},
                               [x, derivative](const Matrix& y, const Matrix& g, std::span<Matrix* const> pg) {
                                 if (!pg[0]) return;
                                 const Matrix& xv = x.value();
                                 for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * derivative(xv[i], y[i]);
                               });
}

}  // namespace

// ---- ParameterStore ---------------------------------------------------------

ParameterStore::ParameterStore(const ParameterStore& other) : index_(other.index_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(*p));
}

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this != &other) {
    ParameterStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Parameter& ParameterStore::add(std::string name, Matrix init, bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("parameter registered twice: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Matrix(init.rows(), init.cols());
  p->value = std::move(init);
  p->trainable = trainable;
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterStore::at(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *params_[it->second];
}

const Parameter& ParameterStore::at(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *params_[it->second];
}

bool ParameterStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

// ---- Var / Tape -------------------------------------------------------------

const Matrix& Var::value() const { return tape_->node(*this).value; }

const Matrix& Var::grad() const {
  const auto& n = tape_->node(*this);
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw std::invalid_argument("Var does not belong to tape");
  return nodes_[v.id_];
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, "constant", {}, {}, false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, "variable", {}, {}, true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& param) {
  nodes_.push_back(Node{param.value, {}, "param:" + param.name, {}, {}, param.trainable, &param});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::string op, std::vector<Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.op = std::move(op);
  n.backward = std::move(backward);
  n.parents.reserve(parents.size());
  for (const Var& p : parents) {
    if (p.tape_ != this) throw std::invalid_argument(n.op + ": parent from another tape");
    n.parents.push_back(p.id_);
    n.requires_grad = n.requires_grad || nodes_[p.id_].requires_grad;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw ShapeError("backward: root must be scalar, got " + root.value.shape_string());
  }
  std::vector<Matrix> grads(loss.id_ + 1);
  grads[loss.id_] = Matrix(1, 1, 1.0);
  std::vector<Matrix*> parent_grads;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (grads[i].empty() || !n.requires_grad || !n.backward) continue;
    parent_grads.clear();
    for (std::size_t p : n.parents) {
      if (!nodes_[p].requires_grad) {
        parent_grads.push_back(nullptr);
        continue;
      }
      if (grads[p].empty()) grads[p] = Matrix(nodes_[p].value.rows(), nodes_[p].value.cols());
      parent_grads.push_back(&grads[p]);
    }
    n.backward(n.value, grads[i], parent_grads);
  }
  for (std::size_t i = 0; i <= loss.id_; ++i) {
    if (grads[i].empty()) continue;
    Node& n = nodes_[i];
    if (n.param) n.param->grad += grads[i];
    if (n.grad.empty()) {
      n.grad = std::move(grads[i]);
    } else {
      n.grad += grads[i];
    }
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad = Matrix();
}

void Tape::dump(std::ostream& out) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    out << '#' << i << ' ' << n.op << ' ' << n.value.shape_string();
    if (!n.parents.empty()) {
      out << " <-";
      for (std::size_t p : n.parents) out << " #" << p;
    }
    if (n.requires_grad) out << " (grad)";
    out << '\n';
  }
}

// ---- linear algebra ---------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = same_tape("matmul", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av(i, p);
      const double* br = &bv(p, 0);
      for (std::size_t j = 0; j < m; ++j) o[j] += aip * br[j];
    }
  }
  return t.record(std::move(out), "matmul", {a, b},
                  [a, b, n, k, m](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
                    const Matrix& av = a.value();
                    const Matrix& bv = b.value();
                    if (pg[0]) {
                      Matrix& da = *pg[0];
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          double acc = 0.0;
                          for (std::size_t j = 0; j < m; ++j) acc += g(i, j) * bv(p, j);
                          da(i, p) += acc;
                        }
                    }
                    if (pg[1]) {
                      Matrix& db = *pg[1];
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          const double aip = av(i, p);
                          for (std::size_t j = 0; j < m; ++j) db(p, j) += aip * g(i, j);
                        }
                    }
                  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape("matmul_nt", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) shape_error("matmul_nt", av, bv);
  const std::size_t n = av.rows(), k = av.cols(), m = bv.rows();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = &av(i, 0);
    for (std::size_t j = 0; j < m; ++j) {
      const double* br = &bv(j, 0);
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      out(i, j) = acc;
    }
  }
  return t.record(std::move(out), "matmul_nt", {a, b},
                  [a, b, n, k, m](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
                    const Matrix& av = a.value();
                    const Matrix& bv = b.value();
                    if (pg[0]) {
                      Matrix& da = *pg[0];
                      for (std::size_t i = 0; i < n; ++i) {
                        double* dr = &da(i, 0);
                        for (std::size_t j = 0; j < m; ++j) {
                          const double gij = g(i, j);
                          if (gij == 0.0) continue;
                          const double* br = &bv(j, 0);
                          for (std::size_t p = 0; p < k; ++p) dr[p] += gij * br[p];
                        }
                      }
                    }
                    if (pg[1]) {
                      Matrix& db = *pg[1];
                      for (std::size_t i = 0; i < n; ++i) {
                        const double* ar = &av(i, 0);
                        for (std::size_t j = 0; j < m; ++j) {
                          const double gij = g(i, j);
                          if (gij == 0.0) continue;
                          double* dr = &db(j, 0);
                          for (std::size_t p = 0; p < k; ++p) dr[p] += gij * ar[p];
                        }
                      }
                    }
                  });
}

// ---- elementwise binary -------------------------------------------------------

Var add(Var a, Var b) {
  Tape& t = same_tape("add", a, b);
  if (!a.value().same_shape(b.value())) shape_error("add", a.value(), b.value());
  Matrix out = a.value();
  out += b.value();
  return t.record(std::move(out), "add", {a, b}, [](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
    if (pg[0]) *pg[0] += g;
    if (pg[1]) *pg[1] += g;
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape("sub", a, b);
  if (!a.value().same_shape(b.value())) shape_error("sub", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return t.record(std::move(out), "sub", {a, b}, [](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
    if (pg[0]) *pg[0] += g;
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape("mul", a, b);
  if (!a.value().same_shape(b.value())) shape_error("mul", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return t.record(std::move(out), "mul", {a, b}, [a, b](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * bv[i];
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] += g[i] * av[i];
  });
}

Var maximum(Var a, Var b) {
  Tape& t = same_tape("maximum", a, b);
  if (!a.value().same_shape(b.value())) shape_error("maximum", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], b.value()[i]);
  return t.record(std::move(out), "maximum", {a, b}, [a, b](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      // Ties route the gradient to the first argument.
      if (av[i] >= bv[i]) {
        if (pg[0]) (*pg[0])[i] += g[i];
      } else if (pg[1]) {
        (*pg[1])[i] += g[i];
      }
    }
  });
}

Var add_row(Var x, Var row) {
  Tape& t = same_tape("add_row", x, row);
  const Matrix& xv = x.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) shape_error("add_row", xv, rv);
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv(0, c);
  return t.record(std::move(out), "add_row", {x, row}, [](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
    if (pg[0]) *pg[0] += g;
    if (pg[1])
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*pg[1])(0, c) += g(r, c);
  });
}

Var mul_col(Var x, Var col) {
  Tape& t = same_tape("mul_col", x, col);
  const Matrix& xv = x.value();
  const Matrix& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != xv.rows()) shape_error("mul_col", xv, cv);
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= cv(r, 0);
  return t.record(std::move(out), "mul_col", {x, col}, [x, col](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
    const Matrix& xv = x.value();
    const Matrix& cv = col.value();
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) {
        if (pg[0]) (*pg[0])(r, c) += g(r, c) * cv(r, 0);
        acc += g(r, c) * xv(r, c);
      }
      if (pg[1]) (*pg[1])(r, 0) += acc;
    }
  });
}

Var scale(Var x, double c) {
  Matrix out = x.value();
  for (double& v : out.values()) v *= c;
  return tape_of("scale", x).record(std::move(out), "scale", {x}, [c](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += c * g[i];
  });
}

Var add_scalar(Var x, double c) {
  Matrix out = x.value();
  for (double& v : out.values()) v += c;
  return tape_of("add_scalar", x).record(std::move(out), "add_scalar", {x},
                                         [](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
                                           if (pg[0]) *pg[0] += g;
                                         });
}

// ---- structural ---------------------------------------------------------------

Var concat_cols(Var a, Var b) {
  Tape& t = same_tape("concat_cols", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) shape_error("concat_cols", av, bv);
  const std::size_t ca = av.cols(), cb = bv.cols();
  Matrix out(av.rows(), ca + cb);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy(av.row(r).begin(), av.row(r).end(), out.row(r).begin());
    std::copy(bv.row(r).begin(), bv.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(ca));
  }
  return t.record(std::move(out), "concat_cols", {a, b}, [ca, cb](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
    for (std::size_t r = 0; r < g.rows(); ++r) {
      if (pg[0])
        for (std::size_t c = 0; c < ca; ++c) (*pg[0])(r, c) += g(r, c);
      if (pg[1])
        for (std::size_t c = 0; c < cb; ++c) (*pg[1])(r, c) += g(r, ca + c);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& t = tape_of("concat_rows", parts[0]);
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("concat_rows: Vars from different tapes");
    if (p.cols() != cols) shape_error("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const Var& p : parts) {
    offsets.push_back(at);
    std::copy(p.value().values().begin(), p.value().values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(at));
    at += p.value().size();
  }
  return t.record(std::move(out), "concat_rows", parts, [offsets](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
    for (std::size_t i = 0; i < pg.size(); ++i) {
      if (!pg[i]) continue;
      Matrix& d = *pg[i];
      for (std::size_t j = 0; j < d.size(); ++j) d[j] += g[offsets[i] + j];
    }
  });
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
  const Matrix& xv = x.value();
  if (rows * cols != xv.size()) {
    throw ShapeError("reshape: cannot view " + xv.shape_string() + " as [" + std::to_string(rows) + " x " +
                     std::to_string(cols) + "]");
  }
  Matrix out(rows, cols, std::vector<double>(xv.values().begin(), xv.values().end()));
  return tape_of("reshape", x).record(std::move(out), "reshape", {x}, [](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
  });
}

// ---- activations ----------------------------------------------------------------

Var leaky_relu(Var x, double slope) {
  return unary_elementwise(
      x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var relu(Var x) {
  return unary_elementwise(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var x) {
  return unary_elementwise(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary_elementwise(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var dropout(Var x, double rate, bool train, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return x;
  const Matrix& xv = x.value();
  Matrix mask(xv.rows(), xv.cols());
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.values()) m = uniform(rng) >= rate ? keep_scale : 0.0;
  Matrix out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return tape_of("dropout", x).record(std::move(out), "dropout", {x},
                                      [mask = std::move(mask)](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
                                        if (!pg[0]) return;
                                        for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * mask[i];
                                      });
}

// ---- gather / segment ops -------------------------------------------------------

Var gather_rows(Var table, std::span<const int> index) {
  const Matrix& tv = table.value();
  const std::size_t d = tv.cols();
  Matrix out(index.size(), d);
  for (std::size_t r = 0; r < index.size(); ++r) {
    const int src = index[r];
    if (src < 0) continue;
    if (static_cast<std::size_t>(src) >= tv.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(src) + " outside table " + tv.shape_string());
    }
    std::copy(tv.row(static_cast<std::size_t>(src)).begin(), tv.row(static_cast<std::size_t>(src)).end(),
              out.row(r).begin());
  }
  return tape_of("gather_rows", table)
      .record(std::move(out), "gather_rows", {table},
              [idx = std::vector<int>(index.begin(), index.end()), d](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
                if (!pg[0]) return;
                Matrix& dt = *pg[0];
                for (std::size_t r = 0; r < idx.size(); ++r) {
                  if (idx[r] < 0) continue;
                  double* dst = &dt(static_cast<std::size_t>(idx[r]), 0);
                  const double* src = &g(r, 0);
                  for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                }
              });
}

Var group_sum(Var x, std::size_t group) {
  const Matrix& xv = x.value();
  if (group == 0 || xv.rows() % group != 0) {
    throw ShapeError("group_sum: " + std::to_string(xv.rows()) + " rows not divisible into groups of " +
                     std::to_string(group));
  }
  const std::size_t n = xv.rows() / group, d = xv.cols();
  Matrix out(n, d);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double* o = &out(r / group, 0);
    for (std::size_t c = 0; c < d; ++c) o[c] += xv(r, c);
  }
  return tape_of("group_sum", x).record(std::move(out), "group_sum", {x},
                                        [group, d](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
                                          if (!pg[0]) return;
                                          Matrix& dx = *pg[0];
                                          for (std::size_t r = 0; r < dx.rows(); ++r)
                                            for (std::size_t c = 0; c < d; ++c) dx(r, c) += g(r / group, c);
                                        });
}

Var group_weighted_sum(Var weights, Var x) {
  Tape& t = same_tape("group_weighted_sum", weights, x);
  const Matrix& wv = weights.value();
  const Matrix& xv = x.value();
  const std::size_t n = wv.rows(), k = wv.cols(), d = xv.cols();
  if (xv.rows() != n * k) shape_error("group_weighted_sum", wv, xv);
  Matrix out(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    double* o = &out(r, 0);
    for (std::size_t j = 0; j < k; ++j) {
      const double w = wv(r, j);
      const double* xr = &xv(r * k + j, 0);
      for (std::size_t c = 0; c < d; ++c) o[c] += w * xr[c];
    }
  }
  return t.record(std::move(out), "group_weighted_sum", {weights, x},
                  [weights, x, n, k, d](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
                    const Matrix& wv = weights.value();
                    const Matrix& xv = x.value();
                    for (std::size_t r = 0; r < n; ++r) {
                      const double* gr = &g(r, 0);
                      for (std::size_t j = 0; j < k; ++j) {
                        const double* xr = &xv(r * k + j, 0);
                        if (pg[0]) {
                          double acc = 0.0;
                          for (std::size_t c = 0; c < d; ++c) acc += gr[c] * xr[c];
                          (*pg[0])(r, j) += acc;
                        }
                        if (pg[1]) {
                          const double w = wv(r, j);
                          double* dr = &(*pg[1])(r * k + j, 0);
                          for (std::size_t c = 0; c < d; ++c) dr[c] += w * gr[c];
                        }
                      }
                    }
                  });
}

Var softmax_rows(Var x, std::span<const unsigned char> mask) {
  const Matrix& xv = x.value();
  if (!mask.empty() && mask.size() != xv.size()) {
    throw ShapeError("softmax_rows: mask of " + std::to_string(mask.size()) + " entries for " + xv.shape_string());
  }
  std::vector<unsigned char> m(mask.begin(), mask.end());
  auto live = [&m](std::size_t i) { return m.empty() || m[i] != 0; };
  const std::size_t cols = xv.cols();
  Matrix out(xv.rows(), cols);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (live(r * cols + c)) hi = std::max(hi, xv(r, c));
    if (hi == -std::numeric_limits<double>::infinity()) continue;
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!live(r * cols + c)) continue;
      out(r, c) = std::exp(xv(r, c) - hi);
      total += out(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= total;
  }
  return tape_of("softmax_rows", x)
      .record(std::move(out), "softmax_rows", {x}, [cols](const Matrix& p, const Matrix& g, std::span<Matrix* const> pg) {
        if (!pg[0]) return;
        for (std::size_t r = 0; r < p.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += p(r, c) * g(r, c);
          for (std::size_t c = 0; c < cols; ++c) (*pg[0])(r, c) += p(r, c) * (g(r, c) - dot);
        }
      });
}

Var row_sum(Var x) {
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double acc = 0.0;
    for (double v : xv.row(r)) acc += v;
    out(r, 0) = acc;
  }
  return tape_of("row_sum", x).record(std::move(out), "row_sum", {x}, [](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
    if (!pg[0]) return;
    Matrix& dx = *pg[0];
    for (std::size_t r = 0; r < dx.rows(); ++r)
      for (std::size_t c = 0; c < dx.cols(); ++c) dx(r, c) += g(r, 0);
  });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().values()) acc += v;
  return tape_of("sum", x).record(Matrix(1, 1, acc), "sum", {x}, [](const Matrix&, const Matrix& g, std::span<Matrix* const> pg) {
    if (!pg[0]) return;
    for (double& v : pg[0]->values()) v += g[0];
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw ShapeError("mean: empty input");
  return scale(sum(x), 1.0 / n);
}

// ---- losses -------------------------------------------------------------------

namespace {

void check_labels(std::string_view op, const Matrix& p, std::span<const int> labels) {
  if (labels.size() != p.rows()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for probabilities " +
                     p.shape_string());
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= p.cols()) {
      throw std::out_of_range(std::string(op) + ": label " + std::to_string(l) + " outside " + p.shape_string());
    }
  }
}

constexpr double clamp_probability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

constexpr bool inside_clamp(double p) { return p > kProbabilityClamp && p < 1.0 - kProbabilityClamp; }

}  // namespace

Var binary_cross_entropy(Var probs, std::span<const int> labels) {
  const Matrix& p = probs.value();
  check_labels("binary_cross_entropy", p, labels);
  const double rows = static_cast<double>(p.rows());
  double total = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double row_loss = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) {
      const double q = clamp_probability(p(r, c));
      row_loss -= (static_cast<int>(c) == labels[r]) ? std::log(q) : std::log(1.0 - q);
    }
    total += row_loss;
  }
  return tape_of("binary_cross_entropy", probs)
      .record(Matrix(1, 1, total / rows), "binary_cross_entropy", {probs},
              [probs, lab = std::vector<int>(labels.begin(), labels.end()), rows](const Matrix&, const Matrix& g,
                                                                                 std::span<Matrix* const> pg) {
                if (!pg[0]) return;
                const Matrix& p = probs.value();
                const double s = g[0] / rows;
                for (std::size_t r = 0; r < p.rows(); ++r)
                  for (std::size_t c = 0; c < p.cols(); ++c) {
                    const double q = p(r, c);
                    if (!inside_clamp(q)) continue;
                    (*pg[0])(r, c) += (static_cast<int>(c) == lab[r]) ? -s / q : s / (1.0 - q);
                  }
              });
}

Var categorical_cross_entropy(Var probs, std::span<const int> labels) {
  const Matrix& p = probs.value();
  check_labels("categorical_cross_entropy", p, labels);
  const double rows = static_cast<double>(p.rows());
  double total = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) total -= std::log(clamp_probability(p(r, static_cast<std::size_t>(labels[r]))));
  return tape_of("categorical_cross_entropy", probs)
      .record(Matrix(1, 1, total / rows), "categorical_cross_entropy", {probs},
              [probs, lab = std::vector<int>(labels.begin(), labels.end()), rows](const Matrix&, const Matrix& g,
                                                                                 std::span<Matrix* const> pg) {
                if (!pg[0]) return;
                const Matrix& p = probs.value();
                for (std::size_t r = 0; r < p.rows(); ++r) {
                  const auto c = static_cast<std::size_t>(lab[r]);
                  const double q = p(r, c);
                  if (inside_clamp(q)) (*pg[0])(r, c) -= g[0] / (rows * q);
                }
              });
}

// ---- gradient checking ----------------------------------------------------------

namespace {

double scalar_of(Var v, std::string_view what) {
  const Matrix& m = v.value();
  if (m.rows() != 1 || m.cols() != 1) throw ShapeError("gradcheck: function must be scalar, got " + m.shape_string());
  if (!std::isfinite(m[0])) throw std::domain_error("gradcheck: non-finite " + std::string(what));
  return m[0];
}

double relative_error(double analytic, double numeric) {
  if (!std::isfinite(analytic) || !std::isfinite(numeric)) {
    throw std::domain_error("gradcheck: non-finite gradient");
  }
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic) + std::abs(numeric));
}

}  // namespace

double gradcheck(const std::function<Var(Tape&, Var)>& f, const Matrix& x, double step) {
  Matrix analytic;
  {
    Tape tape;
    Var xv = tape.variable(x);
    Var loss = f(tape, xv);
    scalar_of(loss, "value");
    tape.backward(loss);
    analytic = xv.grad();
  }
  auto evaluate = [&f](const Matrix& at) {
    Tape tape;
    return scalar_of(f(tape, tape.variable(at)), "value");
  };
  double worst = 0.0;
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = evaluate(probe);
    probe[i] = x[i] - step;
    const double down = evaluate(probe);
    probe[i] = x[i];
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * step)));
  }
  return worst;
}

double gradcheck_parameters(const std::function<Var(Tape&)>& f, ParameterStore& params, double step) {
  params.zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    scalar_of(loss, "value");
    tape.backward(loss);
  }
  auto evaluate = [&f]() {
    Tape tape;
    return scalar_of(f(tape), "value");
  };
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Parameter& param = params[p];
    if (!param.trainable) continue;
    const Matrix analytic = param.grad;
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double original = param.value[i];
      param.value[i] = original + step;
      const double up = evaluate();
      param.value[i] = original - step;
      const double down = evaluate();
      param.value[i] = original;
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

}  // namespace gcegnn::ad
