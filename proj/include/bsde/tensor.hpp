#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace bsde {

class Tape;

// Dense row-major tensor of 64-bit reals. Copies share the underlying
// buffer. A tensor recorded on a tape carries the owning tape pointer and
// its node id; a tensor with no node participates in forward arithmetic
// but contributes nothing to any gradient.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor ones(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const;
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only
  bool defined() const { return static_cast<bool>(data_); }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  std::span<const double> values() const { return {data_->data(), data_->size()}; }
  double value() const;              // scalar tensors only
  double at(std::size_t i) const { return (*data_)[i]; }

  bool on_tape() const { return node_ >= 0; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  friend class Tape;
  std::vector<std::size_t> shape_{};
  std::shared_ptr<std::vector<double>> data_{};
  Tape* tape_ = nullptr;
  int node_ = -1;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  MatMul,
  Scale,
  Sum,
  Square,
  Abs,
  Tanh,
  Sin,
  Cos,
  Relu,
  Sqrt,
  Recip,
  PowConst,
  MeanRows,
  BroadcastRows,
  ConcatCols,
  SliceCols,
  PadCols,
  Transpose,
};

class GradientMap {
 public:
  const Tensor& at(const Tensor& leaf) const;
  bool contains(const Tensor& leaf) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<int, Tensor> grads_;
};

// Append-only recording of operations. Parents always precede children, so
// one reverse sweep visits each node exactly once. The backward sweep
// emits its adjoint arithmetic through the same taped ops, which is what
// makes gradients of gradients (the Z process inside a loss) work.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(std::vector<std::size_t> shape, std::vector<double> values);
  Tensor leaf(const Tensor& constant);

  std::size_t node_count() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  // output must be scalar and recorded on this tape; every requested leaf
  // must be a leaf node. Leaves outside the output's ancestor set map to
  // zero tensors of the leaf shape.
  GradientMap backward(const Tensor& output, std::span<const Tensor> leaves);
  Tensor grad_wrt_input(const Tensor& output, const Tensor& input);

  // recording internals, used by the free op functions
  struct Node {
    OpKind kind;
    std::array<int, 2> parents{-1, -1};
    Tensor in0, in1;   // value snapshots needed by the backward rule
    Tensor out;
    double c = 0.0;            // Scale factor / PowConst exponent
    std::size_t a = 0, b = 0;  // rows for BroadcastRows; column bounds
  };
  int record(Node node);
  Tensor attach(Tensor value, int node);
  void set_output(int id, const Tensor& t);

 private:
  std::vector<Node> nodes_;
};

// Elementwise ops accept equal shapes or a scalar (size-1) on either side;
// no other broadcasting. Results are recorded whenever an input is.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);  // rank-2 only
Tensor scale(const Tensor& a, double c);
Tensor sum(const Tensor& a);     // full reduction to shape {1}
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);

Tensor tanh(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor recip(const Tensor& a);
Tensor pow_const(const Tensor& a, double p);  // domain: positive entries

Tensor mean_rows(const Tensor& a);                       // {m,n} -> {1,n}
Tensor broadcast_rows(const Tensor& a, std::size_t m);   // {1,n} -> {m,n}
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
Tensor pad_cols(const Tensor& a, std::size_t c0, std::size_t total);
Tensor transpose(const Tensor& a);

std::string shape_string(const Tensor& t);
bool all_finite(const Tensor& t);

}  // namespace bsde
