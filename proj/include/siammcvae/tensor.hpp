#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "siammcvae/common.hpp"

namespace siammcvae {

using Shape = std::vector<int>;

int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Dense 64-bit float tensor, row-major. Values are immutable once created.
// A tensor is either a constant (node() < 0) or the output of a tape node;
// ops mixing constants and tape tensors record onto the tape.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int rows() const;
  int cols() const;
  int64_t size() const;

  const std::vector<double>& values() const { return *data_; }
  // Shared handle to the values; backward closures capture this to keep
  // saved activations alive.
  std::shared_ptr<const std::vector<double>> data_ptr() const { return data_; }
  double value() const;                              // scalar tensors
  double at(std::initializer_list<int> idx) const;   // test convenience

  bool on_tape() const { return node_ >= 0; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Reverse-mode tape. Nodes are appended in forward order, which is a
// topological order of the graph; backward() walks them once in reverse and
// accumulates gradients by dense addition.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A differentiable leaf (parameter or input under test).
  Tensor leaf(Shape shape, std::vector<double> values);

  void backward(const Tensor& loss);
  bool backward_run() const { return backward_done_; }
  const std::vector<double>& grad(const Tensor& t);
  size_t node_count() const { return nodes_.size(); }

  // Records an op output. `pull` receives the output gradient and must
  // accumulate into the inputs via grad_buffer(); it is null for leaves.
  // Custom ops (attention kernels, patch index maps) use this directly.
  Tensor record(Shape shape, std::vector<double> values, const char* op,
                std::function<void(Tape&, const std::vector<double>&)> pull);
  std::vector<double>& grad_buffer(int node);

 private:
  struct Node {
    int64_t size = 0;
    const char* op = "";
    std::function<void(Tape&, const std::vector<double>&)> pull;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool backward_done_ = false;
};

// Throws NumericError naming `op` if any value is NaN/Inf.
void check_finite(const char* op, const std::vector<double>& values);

// Picks the common tape of the inputs (nullptr if all constants); throws
// ContractError when inputs live on different tapes.
Tape* common_tape(std::initializer_list<const Tensor*> inputs);

// ---------------------------------------------------------------- ops ----

Tensor matmul(const Tensor& a, const Tensor& b);     // a @ b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a @ b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T @ b

// Per-row normalization over the last dim (population variance), then an
// affine map with per-feature gain/bias.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = 1e-5);

Tensor softmax_lastdim(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact Gaussian-CDF form

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor div_scalar(const Tensor& x, double c);
Tensor add_rowvec(const Tensor& x, const Tensor& v);  // broadcast v over rows

Tensor transpose(const Tensor& x);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& x, int row0, int row1);
Tensor slice_cols(const Tensor& x, int col0, int col1);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor frobenius_sq(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// Scalar-loss entry point; forwards to the loss tensor's tape.
void backward(const Tensor& loss);

}  // namespace siammcvae
