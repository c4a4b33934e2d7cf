#include "siammcvae/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace siammcvae {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

// c (m x n) = op(a) * op(b), optionally accumulating into c.
void gemm(const double* a, const double* b, double* c, int m, int k, int n,
          bool ta, bool tb, bool accumulate) {
  MapConst ma(a, ta ? k : m, ta ? m : k);
  MapConst mb(b, tb ? n : k, tb ? k : n);
  MapMat mc(c, m, n);
  if (!ta && !tb) {
    if (accumulate)
      mc.noalias() += ma * mb;
    else
      mc.noalias() = ma * mb;
  } else if (!ta && tb) {
    if (accumulate)
      mc.noalias() += ma * mb.transpose();
    else
      mc.noalias() = ma * mb.transpose();
  } else if (ta && !tb) {
    if (accumulate)
      mc.noalias() += ma.transpose() * mb;
    else
      mc.noalias() = ma.transpose() * mb;
  } else {
    if (accumulate)
      mc.noalias() += ma.transpose() * mb.transpose();
    else
      mc.noalias() = ma.transpose() * mb.transpose();
  }
}

void require(bool cond, const char* op, const std::string& msg) {
  if (!cond) throw ShapeError(std::string(op) + ": " + msg);
}

int last_dim(const Tensor& x) {
  if (x.rank() == 0) return 1;
  return x.shape().back();
}

}  // namespace

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("extent must be positive, got " + std::to_string(d));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void check_finite(const char* op, const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v))
      throw NumericError(std::string("op '") + op + "' produced a non-finite value");
  }
}

// ------------------------------------------------------------- Tensor ----

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != static_cast<int64_t>(values.size()))
    throw ShapeError("constant: " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  check_finite("constant", values);
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<const std::vector<double>>(std::move(values));
  return t;
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> v(static_cast<size_t>(shape_size(shape)), 0.0);
  return constant(std::move(shape), std::move(v));
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> v(static_cast<size_t>(shape_size(shape)), value);
  return constant(std::move(shape), std::move(v));
}

Tensor Tensor::scalar(double v) { return constant({}, {v}); }

int Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows: tensor is not rank-2, shape " + shape_str(shape_));
  return shape_[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols: tensor is not rank-2, shape " + shape_str(shape_));
  return shape_[1];
}

int64_t Tensor::size() const { return static_cast<int64_t>(data_->size()); }

double Tensor::value() const {
  if (size() != 1) throw ContractError("value: tensor is not a scalar");
  return (*data_)[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  if (static_cast<int>(idx.size()) != rank())
    throw IndexError("at: rank mismatch");
  int64_t flat = 0;
  int i = 0;
  for (int v : idx) {
    if (v < 0 || v >= shape_[static_cast<size_t>(i)]) throw IndexError("at: index out of range");
    flat = flat * shape_[static_cast<size_t>(i)] + v;
    ++i;
  }
  return (*data_)[static_cast<size_t>(flat)];
}

// --------------------------------------------------------------- Tape ----

Tensor Tape::leaf(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != static_cast<int64_t>(values.size()))
    throw ShapeError("leaf: " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  return record(std::move(shape), std::move(values), "leaf", nullptr);
}

Tensor Tape::record(Shape shape, std::vector<double> values, const char* op,
                    std::function<void(Tape&, const std::vector<double>&)> pull) {
  check_finite(op, values);
  if (backward_done_) {
    // A new forward pass invalidates the finished backward state.
    grads_.clear();
    backward_done_ = false;
  }
  Node node;
  node.size = static_cast<int64_t>(values.size());
  node.op = op;
  node.pull = std::move(pull);
  nodes_.push_back(std::move(node));

  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<const std::vector<double>>(std::move(values));
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size()) - 1;
  return t;
}

std::vector<double>& Tape::grad_buffer(int node) {
  auto& g = grads_[static_cast<size_t>(node)];
  if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(node)].size), 0.0);
  return g;
}

void Tape::backward(const Tensor& loss) {
  if (backward_done_)
    throw ContractError("backward: tape already differentiated; run a new forward first");
  if (loss.tape() != this || !loss.on_tape())
    throw ContractError("backward: loss does not belong to this tape");
  if (loss.size() != 1) throw ContractError("backward: loss must be a scalar");
  if (nodes_.empty()) throw ContractError("backward: tape is empty");

  grads_.assign(nodes_.size(), {});
  grad_buffer(loss.node())[0] = 1.0;
  for (int i = loss.node(); i >= 0; --i) {
    auto& g = grads_[static_cast<size_t>(i)];
    if (g.empty()) continue;  // not on a path to the loss
    const Node& node = nodes_[static_cast<size_t>(i)];
    if (node.pull) node.pull(*this, g);
  }
  backward_done_ = true;
}

const std::vector<double>& Tape::grad(const Tensor& t) {
  if (!backward_done_) throw ContractError("grad: backward has not run");
  if (t.tape() != this || !t.on_tape())
    throw ContractError("grad: tensor does not belong to this tape");
  return grad_buffer(t.node());  // zero-filled when the loss never reached it
}

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->on_tape()) continue;
    if (tape == nullptr) tape = t->tape();
    else if (tape != t->tape())
      throw ContractError("op inputs belong to different tapes");
  }
  return tape;
}

namespace {

// Shared completion path: returns a constant when no input is tracked,
// otherwise records the node with the given pull closure.
Tensor finish(Tape* tape, Shape shape, std::vector<double> values, const char* op,
              std::function<void(Tape&, const std::vector<double>&)> pull) {
  if (tape == nullptr) {
    check_finite(op, values);  // report under the op's name, not "constant"
    return Tensor::constant(std::move(shape), std::move(values));
  }
  return tape->record(std::move(shape), std::move(values), op, std::move(pull));
}

}  // namespace

// ---------------------------------------------------------- matmul family

namespace {

Tensor matmul_impl(const Tensor& a, const Tensor& b, bool ta, bool tb, const char* op) {
  require(a.rank() == 2 && b.rank() == 2, op, "expects rank-2 inputs, got " +
          shape_str(a.shape()) + " and " + shape_str(b.shape()));
  int m = ta ? a.cols() : a.rows();
  int ka = ta ? a.rows() : a.cols();
  int kb = tb ? b.cols() : b.rows();
  int n = tb ? b.rows() : b.cols();
  require(ka == kb, op, "inner dimensions disagree: " + shape_str(a.shape()) +
          " vs " + shape_str(b.shape()));

  std::vector<double> out(static_cast<size_t>(m) * n);
  gemm(a.values().data(), b.values().data(), out.data(), m, ka, n, ta, tb, false);

  Tape* tape = common_tape({&a, &b});
  int na = a.node(), nb = b.node();
  auto av = a.data_ptr(), bv = b.data_ptr();
  int k = ka;
  return finish(tape, {m, n}, std::move(out), op,
                [=](Tape& t, const std::vector<double>& dout) {
                  // dC is m x n; propagate to each tracked input.
                  if (na >= 0) {
                    auto& ga = t.grad_buffer(na);
                    if (!ta && !tb)       gemm(dout.data(), bv->data(), ga.data(), m, n, k, false, true, true);
                    else if (!ta && tb)   gemm(dout.data(), bv->data(), ga.data(), m, n, k, false, false, true);
                    else if (ta && !tb)   gemm(bv->data(), dout.data(), ga.data(), k, n, m, false, true, true);
                    else                  gemm(bv->data(), dout.data(), ga.data(), k, n, m, true, true, true);
                  }
                  if (nb >= 0) {
                    auto& gb = t.grad_buffer(nb);
                    if (!ta && !tb)       gemm(av->data(), dout.data(), gb.data(), k, m, n, true, false, true);
                    else if (!ta && tb)   gemm(dout.data(), av->data(), gb.data(), n, m, k, true, false, true);
                    else if (ta && !tb)   gemm(av->data(), dout.data(), gb.data(), k, m, n, false, false, true);
                    else                  gemm(dout.data(), av->data(), gb.data(), n, m, k, true, true, true);
                  }
                });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false, false, "matmul"); }
Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false, true, "matmul_nt"); }
Tensor matmul_tn(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, true, false, "matmul_tn"); }

// ------------------------------------------------------------ layernorm --

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require(x.rank() >= 1, "layernorm", "input must have rank >= 1");
  int d = last_dim(x);
  require(gain.rank() == 1 && gain.dim(0) == d, "layernorm",
          "gain shape " + shape_str(gain.shape()) + " does not match feature dim " + std::to_string(d));
  require(bias.rank() == 1 && bias.dim(0) == d, "layernorm", "bias shape mismatch");
  require(eps > 0.0, "layernorm", "eps must be positive");
  int64_t n = x.size() / d;

  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  std::vector<double> out(xv.size());
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto invstd = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  for (int64_t r = 0; r < n; ++r) {
    const double* row = xv.data() + r * d;
    double m = 0.0;
    for (int j = 0; j < d; ++j) m += row[j];
    m /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double c = row[j] - m;
      var += c * c;
    }
    var /= d;  // population convention
    double is = 1.0 / std::sqrt(var + eps);
    (*invstd)[static_cast<size_t>(r)] = is;
    double* xh = xhat->data() + r * d;
    double* o = out.data() + r * d;
    for (int j = 0; j < d; ++j) {
      xh[j] = (row[j] - m) * is;
      o[j] = xh[j] * gv[static_cast<size_t>(j)] + bv[static_cast<size_t>(j)];
    }
  }

  Tape* tape = common_tape({&x, &gain, &bias});
  int nx = x.node(), ng = gain.node(), nb = bias.node();
  auto gref = gain.data_ptr();
  return finish(tape, x.shape(), std::move(out), "layernorm",
                [=](Tape& t, const std::vector<double>& dout) {
                  if (ng >= 0) {
                    auto& gg = t.grad_buffer(ng);
                    for (int64_t r = 0; r < n; ++r)
                      for (int j = 0; j < d; ++j)
                        gg[static_cast<size_t>(j)] += dout[static_cast<size_t>(r * d + j)] *
                                                      (*xhat)[static_cast<size_t>(r * d + j)];
                  }
                  if (nb >= 0) {
                    auto& gb = t.grad_buffer(nb);
                    for (int64_t r = 0; r < n; ++r)
                      for (int j = 0; j < d; ++j)
                        gb[static_cast<size_t>(j)] += dout[static_cast<size_t>(r * d + j)];
                  }
                  if (nx >= 0) {
                    auto& gx = t.grad_buffer(nx);
                    const auto& gvv = *gref;
                    for (int64_t r = 0; r < n; ++r) {
                      const double* dy = dout.data() + r * d;
                      const double* xh = xhat->data() + r * d;
                      double is = (*invstd)[static_cast<size_t>(r)];
                      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                      for (int j = 0; j < d; ++j) {
                        double dxh = dy[j] * gvv[static_cast<size_t>(j)];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xh[j];
                      }
                      mean_dxhat /= d;
                      mean_dxhat_xhat /= d;
                      double* g = gx.data() + r * d;
                      for (int j = 0; j < d; ++j) {
                        double dxh = dy[j] * gvv[static_cast<size_t>(j)];
                        g[j] += is * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
                      }
                    }
                  }
                });
}

// -------------------------------------------------------------- softmax --

Tensor softmax_lastdim(const Tensor& x) {
  require(x.rank() >= 1, "softmax_lastdim", "input must have rank >= 1");
  int d = last_dim(x);
  int64_t n = x.size() / d;
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (int64_t r = 0; r < n; ++r) {
    const double* row = xv.data() + r * d;
    double* o = out.data() + r * d;
    double mx = row[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < d; ++j) {
      o[j] = std::exp(row[j] - mx);
      denom += o[j];
    }
    for (int j = 0; j < d; ++j) o[j] /= denom;
  }

  Tape* tape = common_tape({&x});
  int nx = x.node();
  auto yref = std::make_shared<std::vector<double>>(out);
  return finish(tape, x.shape(), std::move(out), "softmax_lastdim",
                [=](Tape& t, const std::vector<double>& dout) {
                  if (nx < 0) return;
                  auto& gx = t.grad_buffer(nx);
                  for (int64_t r = 0; r < n; ++r) {
                    const double* dy = dout.data() + r * d;
                    const double* y = yref->data() + r * d;
                    double dot = 0.0;
                    for (int j = 0; j < d; ++j) dot += dy[j] * y[j];
                    double* g = gx.data() + r * d;
                    for (int j = 0; j < d; ++j) g[j] += y[j] * (dy[j] - dot);
                  }
                });
}

// ----------------------------------------------------------- elementwise --

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

Tensor binary_same_shape(const Tensor& a, const Tensor& b, const char* op,
                         double (*fwd)(double, double),
                         void (*bwd)(double, double, double, double*, double*)) {
  require(a.shape() == b.shape(), op, "shape mismatch: " + shape_str(a.shape()) +
          " vs " + shape_str(b.shape()));
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);

  Tape* tape = common_tape({&a, &b});
  int na = a.node(), nb = b.node();
  auto ar = a.data_ptr(), br = b.data_ptr();
  return finish(tape, a.shape(), std::move(out), op,
                [=](Tape& t, const std::vector<double>& dout) {
                  std::vector<double>* ga = na >= 0 ? &t.grad_buffer(na) : nullptr;
                  std::vector<double>* gb = nb >= 0 ? &t.grad_buffer(nb) : nullptr;
                  for (size_t i = 0; i < dout.size(); ++i) {
                    double da = 0.0, db = 0.0;
                    bwd((*ar)[i], (*br)[i], dout[i], &da, &db);
                    if (ga) (*ga)[i] += da;
                    if (gb) (*gb)[i] += db;
                  }
                });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same_shape(a, b, "add",
                           [](double x, double y) { return x + y; },
                           [](double, double, double d, double* da, double* db) {
                             *da = d;
                             *db = d;
                           });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same_shape(a, b, "sub",
                           [](double x, double y) { return x - y; },
                           [](double, double, double d, double* da, double* db) {
                             *da = d;
                             *db = -d;
                           });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return binary_same_shape(a, b, "hadamard",
                           [](double x, double y) { return x * y; },
                           [](double x, double y, double d, double* da, double* db) {
                             *da = d * y;
                             *db = d * x;
                           });
}

namespace {

Tensor unary(const Tensor& x, const char* op, std::function<double(double)> fwd,
             std::function<double(double, double)> dfull /* (x, dy) -> dx */) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  Tape* tape = common_tape({&x});
  int nx = x.node();
  auto xr = x.data_ptr();
  return finish(tape, x.shape(), std::move(out), op,
                [=](Tape& t, const std::vector<double>& dout) {
                  if (nx < 0) return;
                  auto& gx = t.grad_buffer(nx);
                  for (size_t i = 0; i < dout.size(); ++i) gx[i] += dfull((*xr)[i], dout[i]);
                });
}

}  // namespace

Tensor gelu(const Tensor& x) {
  return unary(x, "gelu",
               [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
               [](double v, double d) {
                 double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                 double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                 return d * (cdf + v * pdf);
               });
}

Tensor scale(const Tensor& x, double c) {
  if (!std::isfinite(c)) throw NumericError("op 'scale' given a non-finite factor");
  return unary(x, "scale", [c](double v) { return c * v; },
               [c](double, double d) { return c * d; });
}

Tensor add_scalar(const Tensor& x, double c) {
  if (!std::isfinite(c)) throw NumericError("op 'add_scalar' given a non-finite addend");
  return unary(x, "add_scalar", [c](double v) { return v + c; },
               [](double, double d) { return d; });
}

Tensor div_scalar(const Tensor& x, double c) {
  if (!std::isfinite(c) || c == 0.0)
    throw NumericError("op 'div_scalar' given a zero or non-finite divisor");
  return unary(x, "div_scalar", [c](double v) { return v / c; },
               [c](double, double d) { return d / c; });
}

Tensor exp(const Tensor& x) {
  return unary(x, "exp", [](double v) { return std::exp(v); },
               [](double v, double d) { return d * std::exp(v); });
}

Tensor log(const Tensor& x) {
  return unary(x, "log", [](double v) { return std::log(v); },
               [](double v, double d) { return d / v; });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  require(x.rank() == 2, "add_rowvec", "x must be rank-2");
  require(v.rank() == 1 && v.dim(0) == x.cols(), "add_rowvec",
          "vector shape " + shape_str(v.shape()) + " does not match columns of " +
          shape_str(x.shape()));
  int n = x.rows(), d = x.cols();
  const auto& xv = x.values();
  const auto& vv = v.values();
  std::vector<double> out(xv.size());
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < d; ++j)
      out[static_cast<size_t>(r) * d + j] = xv[static_cast<size_t>(r) * d + j] + vv[static_cast<size_t>(j)];

  Tape* tape = common_tape({&x, &v});
  int nx = x.node(), nv = v.node();
  return finish(tape, x.shape(), std::move(out), "add_rowvec",
                [=](Tape& t, const std::vector<double>& dout) {
                  if (nx >= 0) {
                    auto& gx = t.grad_buffer(nx);
                    for (size_t i = 0; i < dout.size(); ++i) gx[i] += dout[i];
                  }
                  if (nv >= 0) {
                    auto& gv = t.grad_buffer(nv);
                    for (int r = 0; r < n; ++r)
                      for (int j = 0; j < d; ++j)
                        gv[static_cast<size_t>(j)] += dout[static_cast<size_t>(r) * d + j];
                  }
                });
}

// ------------------------------------------------------------ reshaping --

Tensor transpose(const Tensor& x) {
  require(x.rank() == 2, "transpose", "input must be rank-2");
  int n = x.rows(), d = x.cols();
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < d; ++j)
      out[static_cast<size_t>(j) * n + r] = xv[static_cast<size_t>(r) * d + j];

  Tape* tape = common_tape({&x});
  int nx = x.node();
  return finish(tape, {d, n}, std::move(out), "transpose",
                [=](Tape& t, const std::vector<double>& dout) {
                  if (nx < 0) return;
                  auto& gx = t.grad_buffer(nx);
                  for (int r = 0; r < n; ++r)
                    for (int j = 0; j < d; ++j)
                      gx[static_cast<size_t>(r) * d + j] += dout[static_cast<size_t>(j) * n + r];
                });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "concat_cols", "inputs must be rank-2");
  require(a.rows() == b.rows(), "concat_cols", "row counts disagree");
  int n = a.rows(), da = a.cols(), db = b.cols();
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(static_cast<size_t>(n) * (da + db));
  for (int r = 0; r < n; ++r) {
    std::copy_n(av.data() + static_cast<size_t>(r) * da, da,
                out.data() + static_cast<size_t>(r) * (da + db));
    std::copy_n(bv.data() + static_cast<size_t>(r) * db, db,
                out.data() + static_cast<size_t>(r) * (da + db) + da);
  }
  Tape* tape = common_tape({&a, &b});
  int na = a.node(), nb = b.node();
  return finish(tape, {n, da + db}, std::move(out), "concat_cols",
                [=](Tape& t, const std::vector<double>& dout) {
                  if (na >= 0) {
                    auto& ga = t.grad_buffer(na);
                    for (int r = 0; r < n; ++r)
                      for (int j = 0; j < da; ++j)
                        ga[static_cast<size_t>(r) * da + j] +=
                            dout[static_cast<size_t>(r) * (da + db) + j];
                  }
                  if (nb >= 0) {
                    auto& gb = t.grad_buffer(nb);
                    for (int r = 0; r < n; ++r)
                      for (int j = 0; j < db; ++j)
                        gb[static_cast<size_t>(r) * db + j] +=
                            dout[static_cast<size_t>(r) * (da + db) + da + j];
                  }
                });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "concat_rows", "inputs must be rank-2");
  require(a.cols() == b.cols(), "concat_rows", "column counts disagree");
  int ra = a.rows(), rb = b.rows(), d = a.cols();
  std::vector<double> out;
  out.reserve(static_cast<size_t>(ra + rb) * d);
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  Tape* tape = common_tape({&a, &b});
  int na = a.node(), nb = b.node();
  return finish(tape, {ra + rb, d}, std::move(out), "concat_rows",
                [=](Tape& t, const std::vector<double>& dout) {
                  size_t split = static_cast<size_t>(ra) * d;
                  if (na >= 0) {
                    auto& ga = t.grad_buffer(na);
                    for (size_t i = 0; i < split; ++i) ga[i] += dout[i];
                  }
                  if (nb >= 0) {
                    auto& gb = t.grad_buffer(nb);
                    for (size_t i = 0; i < static_cast<size_t>(rb) * d; ++i)
                      gb[i] += dout[split + i];
                  }
                });
}

Tensor slice_rows(const Tensor& x, int row0, int row1) {
  require(x.rank() == 2, "slice_rows", "input must be rank-2");
  if (row0 < 0 || row1 > x.rows() || row0 >= row1)
    throw IndexError("slice_rows: range [" + std::to_string(row0) + ", " +
                     std::to_string(row1) + ") invalid for " + std::to_string(x.rows()) + " rows");
  int d = x.cols();
  const auto& xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<size_t>(row0) * d,
                          xv.begin() + static_cast<size_t>(row1) * d);
  Tape* tape = common_tape({&x});
  int nx = x.node();
  return finish(tape, {row1 - row0, d}, std::move(out), "slice_rows",
                [=](Tape& t, const std::vector<double>& dout) {
                  if (nx < 0) return;
                  auto& gx = t.grad_buffer(nx);
                  for (size_t i = 0; i < dout.size(); ++i)
                    gx[static_cast<size_t>(row0) * d + i] += dout[i];
                });
}

Tensor slice_cols(const Tensor& x, int col0, int col1) {
  require(x.rank() == 2, "slice_cols", "input must be rank-2");
  if (col0 < 0 || col1 > x.cols() || col0 >= col1)
    throw IndexError("slice_cols: range [" + std::to_string(col0) + ", " +
                     std::to_string(col1) + ") invalid for " + std::to_string(x.cols()) + " columns");
  int n = x.rows(), d = x.cols(), w = col1 - col0;
  const auto& xv = x.values();
  std::vector<double> out(static_cast<size_t>(n) * w);
  for (int r = 0; r < n; ++r)
    std::copy_n(xv.data() + static_cast<size_t>(r) * d + col0, w,
                out.data() + static_cast<size_t>(r) * w);
  Tape* tape = common_tape({&x});
  int nx = x.node();
  return finish(tape, {n, w}, std::move(out), "slice_cols",
                [=](Tape& t, const std::vector<double>& dout) {
                  if (nx < 0) return;
                  auto& gx = t.grad_buffer(nx);
                  for (int r = 0; r < n; ++r)
                    for (int j = 0; j < w; ++j)
                      gx[static_cast<size_t>(r) * d + col0 + j] +=
                          dout[static_cast<size_t>(r) * w + j];
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                     " changes element count");
  Tape* tape = common_tape({&x});
  int nx = x.node();
  std::vector<double> out = x.values();
  return finish(tape, std::move(shape), std::move(out), "reshape",
                [=](Tape& t, const std::vector<double>& dout) {
                  if (nx < 0) return;
                  auto& gx = t.grad_buffer(nx);
                  for (size_t i = 0; i < dout.size(); ++i) gx[i] += dout[i];
                });
}

// ------------------------------------------------------------ reductions --

namespace {

Tensor reduce(const Tensor& x, const char* op, std::function<double(const std::vector<double>&)> fwd,
              std::function<void(const std::vector<double>&, double, std::vector<double>&)> bwd) {
  double v = fwd(x.values());
  Tape* tape = common_tape({&x});
  int nx = x.node();
  auto xr = x.data_ptr();
  return finish(tape, {}, {v}, op,
                [=](Tape& t, const std::vector<double>& dout) {
                  if (nx < 0) return;
                  bwd(*xr, dout[0], t.grad_buffer(nx));
                });
}

}  // namespace

Tensor sum(const Tensor& x) {
  return reduce(x, "sum",
                [](const std::vector<double>& v) {
                  double s = 0.0;
                  for (double e : v) s += e;
                  return s;
                },
                [](const std::vector<double>& v, double d, std::vector<double>& g) {
                  for (size_t i = 0; i < v.size(); ++i) g[i] += d;
                });
}

Tensor mean(const Tensor& x) {
  return reduce(x, "mean",
                [](const std::vector<double>& v) {
                  double s = 0.0;
                  for (double e : v) s += e;
                  return s / static_cast<double>(v.size());
                },
                [](const std::vector<double>& v, double d, std::vector<double>& g) {
                  double inv = d / static_cast<double>(v.size());
                  for (size_t i = 0; i < v.size(); ++i) g[i] += inv;
                });
}

Tensor frobenius_sq(const Tensor& x) {
  return reduce(x, "frobenius_sq",
                [](const std::vector<double>& v) {
                  double s = 0.0;
                  for (double e : v) s += e * e;
                  return s;
                },
                [](const std::vector<double>& v, double d, std::vector<double>& g) {
                  for (size_t i = 0; i < v.size(); ++i) g[i] += 2.0 * d * v[i];
                });
}

void backward(const Tensor& loss) {
  if (!loss.on_tape()) throw ContractError("backward: loss is a constant");
  loss.tape()->backward(loss);
}

}  // namespace siammcvae
