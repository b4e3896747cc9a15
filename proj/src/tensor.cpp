#include "bsde/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace bsde {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) fail(std::string(op) + ": expected rank-2 tensor, got " + shape_string(t));
}

// Elementwise conformance: equal shapes, or one side scalar.
enum class EwMode { Same, ScalarLeft, ScalarRight };

EwMode ew_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return EwMode::Same;
  if (b.size() == 1) return EwMode::ScalarRight;
  if (a.size() == 1) return EwMode::ScalarLeft;
  fail(std::string(op) + ": shape mismatch (" + shape_string(a) + " vs " + shape_string(b) + ")");
}

Tape* result_tape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.on_tape() && b.on_tape() && a.tape() != b.tape())
    fail(std::string(op) + ": operands recorded on different tapes");
  if (a.on_tape()) return a.tape();
  if (b.on_tape()) return b.tape();
  return nullptr;
}

Tape* result_tape(const Tensor& a) { return a.on_tape() ? a.tape() : nullptr; }

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(shape_product(shape_), 0.0)) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::make_shared<std::vector<double>>(std::move(values))) {
  if (data_->size() != shape_product(shape_))
    fail("tensor: data length " + std::to_string(data_->size()) + " does not match shape " +
         shape_string(*this));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }
Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
Tensor Tensor::ones(std::vector<std::size_t> shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  for (double& x : *t.data_) x = v;
  return t;
}

std::size_t Tensor::size() const { return data_ ? data_->size() : 0; }

std::size_t Tensor::rows() const {
  if (rank() != 2) fail("rows(): tensor is not rank-2: " + shape_string(*this));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) fail("cols(): tensor is not rank-2: " + shape_string(*this));
  return shape_[1];
}

double Tensor::value() const {
  if (size() != 1) fail("value(): tensor is not scalar: " + shape_string(*this));
  return (*data_)[0];
}

std::string shape_string(const Tensor& t) {
  if (!t.defined()) return "<empty>";
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < t.shape().size(); ++i) {
    if (i) os << "x";
    os << t.shape()[i];
  }
  os << ")";
  return os.str();
}

bool all_finite(const Tensor& t) {
  if (!t.defined()) return true;
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

const Tensor& GradientMap::at(const Tensor& leaf) const {
  auto it = grads_.find(leaf.node());
  if (it == grads_.end()) fail("gradient map: tensor was not a requested leaf");
  return it->second;
}

bool GradientMap::contains(const Tensor& leaf) const {
  return grads_.find(leaf.node()) != grads_.end();
}

int Tape::record(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::attach(Tensor value, int node) {
  value.tape_ = this;
  value.node_ = node;
  return value;
}

void Tape::set_output(int id, const Tensor& t) { nodes_[static_cast<std::size_t>(id)].out = t; }

Tensor Tape::leaf(std::vector<std::size_t> shape, std::vector<double> values) {
  return leaf(Tensor(std::move(shape), std::move(values)));
}

Tensor Tape::leaf(const Tensor& constant) {
  if (constant.on_tape()) fail("leaf: tensor is already recorded on a tape");
  Node n;
  n.kind = OpKind::Leaf;
  const int id = record(std::move(n));
  return attach(constant, id);
}

// ---------------------------------------------------------------------------
// Forward ops
// ---------------------------------------------------------------------------

namespace {

Tensor ew_apply(const Tensor& a, const Tensor& b, EwMode mode, double (*f)(double, double)) {
  const Tensor& big = (mode == EwMode::ScalarLeft) ? b : a;
  Tensor out(big.shape());
  double* o = out.data();
  const double* pa = a.data();
  const double* pb = b.data();
  const std::size_t n = big.size();
  switch (mode) {
    case EwMode::Same:
      for (std::size_t i = 0; i < n; ++i) o[i] = f(pa[i], pb[i]);
      break;
    case EwMode::ScalarLeft:
      for (std::size_t i = 0; i < n; ++i) o[i] = f(pa[0], pb[i]);
      break;
    case EwMode::ScalarRight:
      for (std::size_t i = 0; i < n; ++i) o[i] = f(pa[i], pb[0]);
      break;
  }
  return out;
}

Tensor binary_op(OpKind kind, const char* name, const Tensor& a, const Tensor& b,
                 double (*f)(double, double)) {
  const EwMode mode = ew_mode(a, b, name);
  Tensor out = ew_apply(a, b, mode, f);
  if (Tape* tape = result_tape(a, b, name)) {
    Tape::Node n;
    n.kind = kind;
    n.parents = {a.node(), b.node()};
    n.in0 = a;
    n.in1 = b;
    return tape->attach(std::move(out), tape->record(std::move(n)));
  }
  return out;
}

Tensor unary_op(OpKind kind, const Tensor& a, double (*f)(double), bool save_in, bool save_out,
                double c = 0.0) {
  Tensor out(a.shape());
  double* o = out.data();
  const double* p = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = f(p[i]);
  if (Tape* tape = result_tape(a)) {
    Tape::Node n;
    n.kind = kind;
    n.parents = {a.node(), -1};
    if (save_in) n.in0 = a;
    n.c = c;
    const int id = tape->record(std::move(n));
    Tensor attached = tape->attach(std::move(out), id);
    if (save_out) tape->set_output(id, attached);
    return attached;
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(OpKind::Add, "add", a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(OpKind::Sub, "sub", a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(OpKind::Mul, "mul", a, b, [](double x, double y) { return x * y; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows())
    fail("matmul: shape mismatch (" + shape_string(a) + " vs " + shape_string(b) + ")");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    double* orow = po + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  if (Tape* tape = result_tape(a, b, "matmul")) {
    Tape::Node nd;
    nd.kind = OpKind::MatMul;
    nd.parents = {a.node(), b.node()};
    nd.in0 = a;
    nd.in1 = b;
    return tape->attach(std::move(out), tape->record(std::move(nd)));
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  double* o = out.data();
  const double* p = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = c * p[i];
  if (Tape* tape = result_tape(a)) {
    Tape::Node n;
    n.kind = OpKind::Scale;
    n.parents = {a.node(), -1};
    n.c = c;
    return tape->attach(std::move(out), tape->record(std::move(n)));
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor out({1}, {s});
  if (Tape* tape = result_tape(a)) {
    Tape::Node n;
    n.kind = OpKind::Sum;
    n.parents = {a.node(), -1};
    n.in0 = a;
    return tape->attach(std::move(out), tape->record(std::move(n)));
  }
  return out;
}

Tensor square(const Tensor& a) {
  return unary_op(OpKind::Square, a, [](double x) { return x * x; }, true, false);
}

Tensor abs(const Tensor& a) {
  return unary_op(OpKind::Abs, a, [](double x) { return std::fabs(x); }, true, false);
}

Tensor tanh(const Tensor& a) {
  return unary_op(OpKind::Tanh, a, [](double x) { return std::tanh(x); }, false, true);
}

Tensor sin(const Tensor& a) {
  return unary_op(OpKind::Sin, a, [](double x) { return std::sin(x); }, true, false);
}

Tensor cos(const Tensor& a) {
  return unary_op(OpKind::Cos, a, [](double x) { return std::cos(x); }, true, false);
}

Tensor relu(const Tensor& a) {
  return unary_op(OpKind::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; }, true, false);
}

Tensor sqrt(const Tensor& a) {
  return unary_op(OpKind::Sqrt, a, [](double x) { return std::sqrt(x); }, false, true);
}

Tensor recip(const Tensor& a) {
  return unary_op(OpKind::Recip, a, [](double x) { return 1.0 / x; }, false, true);
}

Tensor pow_const(const Tensor& a, double p) {
  Tensor out(a.shape());
  double* o = out.data();
  const double* pa = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = std::pow(pa[i], p);
  if (Tape* tape = result_tape(a)) {
    Tape::Node n;
    n.kind = OpKind::PowConst;
    n.parents = {a.node(), -1};
    n.in0 = a;
    n.c = p;
    return tape->attach(std::move(out), tape->record(std::move(n)));
  }
  return out;
}

Tensor mean_rows(const Tensor& a) {
  require_rank2(a, "mean_rows");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({1, n});
  const double* p = a.data();
  double* o = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[j] += p[i * n + j];
  for (std::size_t j = 0; j < n; ++j) o[j] /= static_cast<double>(m);
  if (Tape* tape = result_tape(a)) {
    Tape::Node nd;
    nd.kind = OpKind::MeanRows;
    nd.parents = {a.node(), -1};
    nd.a = m;
    return tape->attach(std::move(out), tape->record(std::move(nd)));
  }
  return out;
}

Tensor broadcast_rows(const Tensor& a, std::size_t m) {
  require_rank2(a, "broadcast_rows");
  if (a.rows() != 1) fail("broadcast_rows: expected a single row, got " + shape_string(a));
  const std::size_t n = a.cols();
  Tensor out({m, n});
  const double* p = a.data();
  double* o = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = p[j];
  if (Tape* tape = result_tape(a)) {
    Tape::Node nd;
    nd.kind = OpKind::BroadcastRows;
    nd.parents = {a.node(), -1};
    nd.a = m;
    return tape->attach(std::move(out), tape->record(std::move(nd)));
  }
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank2(a, "concat_cols");
  require_rank2(b, "concat_cols");
  if (a.rows() != b.rows())
    fail("concat_cols: row mismatch (" + shape_string(a) + " vs " + shape_string(b) + ")");
  const std::size_t m = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor out({m, ca + cb});
  const double* pa = a.data();
  const double* pb = b.data();
  double* o = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < ca; ++j) o[i * (ca + cb) + j] = pa[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j) o[i * (ca + cb) + ca + j] = pb[i * cb + j];
  }
  if (Tape* tape = result_tape(a, b, "concat_cols")) {
    Tape::Node nd;
    nd.kind = OpKind::ConcatCols;
    nd.parents = {a.node(), b.node()};
    nd.a = ca;
    nd.b = cb;
    return tape->attach(std::move(out), tape->record(std::move(nd)));
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  require_rank2(a, "slice_cols");
  if (c0 >= c1 || c1 > a.cols())
    fail("slice_cols: bad column range [" + std::to_string(c0) + "," + std::to_string(c1) +
         ") for " + shape_string(a));
  const std::size_t m = a.rows(), n = a.cols(), w = c1 - c0;
  Tensor out({m, w});
  const double* p = a.data();
  double* o = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) o[i * w + j] = p[i * n + c0 + j];
  if (Tape* tape = result_tape(a)) {
    Tape::Node nd;
    nd.kind = OpKind::SliceCols;
    nd.parents = {a.node(), -1};
    nd.a = c0;
    nd.b = n;
    return tape->attach(std::move(out), tape->record(std::move(nd)));
  }
  return out;
}

Tensor pad_cols(const Tensor& a, std::size_t c0, std::size_t total) {
  require_rank2(a, "pad_cols");
  if (c0 + a.cols() > total)
    fail("pad_cols: slice " + shape_string(a) + " at column " + std::to_string(c0) +
         " does not fit width " + std::to_string(total));
  const std::size_t m = a.rows(), w = a.cols();
  Tensor out({m, total});
  const double* p = a.data();
  double* o = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) o[i * total + c0 + j] = p[i * w + j];
  if (Tape* tape = result_tape(a)) {
    Tape::Node nd;
    nd.kind = OpKind::PadCols;
    nd.parents = {a.node(), -1};
    nd.a = c0;
    nd.b = w;
    return tape->attach(std::move(out), tape->record(std::move(nd)));
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({n, m});
  const double* p = a.data();
  double* o = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[j * m + i] = p[i * n + j];
  if (Tape* tape = result_tape(a)) {
    Tape::Node nd;
    nd.kind = OpKind::Transpose;
    nd.parents = {a.node(), -1};
    return tape->attach(std::move(out), tape->record(std::move(nd)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reverse sweep
// ---------------------------------------------------------------------------

namespace {

// Reduce an adjoint to the shape of a parent that was broadcast as a
// scalar in an elementwise op.
Tensor reduce_for(const std::vector<std::size_t>& parent_shape, const Tensor& g) {
  if (g.shape() == parent_shape) return g;
  Tensor s = sum(g);
  if (parent_shape == std::vector<std::size_t>{1}) return s;
  // size-1 but different rank, e.g. {1,1}
  Tensor out = mul(Tensor::ones(parent_shape), s);
  return out;
}

Tensor sign_of(const Tensor& x) {
  Tensor s(x.shape());
  double* o = s.data();
  const double* p = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = (p[i] > 0.0) - (p[i] < 0.0);
  return s;  // constant: |x| has zero curvature almost everywhere
}

Tensor relu_mask(const Tensor& x) {
  Tensor m(x.shape());
  double* o = m.data();
  const double* p = x.data();
  // subgradient at exactly 0 is 0
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = p[i] > 0.0 ? 1.0 : 0.0;
  return m;
}

Tensor sum_rows_to_one(const Tensor& g) {
  // column sums -> {1,n}; taped via matmul with a constant ones row
  return matmul(Tensor::ones({1, g.rows()}), g);
}

}  // namespace

GradientMap Tape::backward(const Tensor& output, std::span<const Tensor> leaves) {
  if (!output.defined() || output.size() != 1)
    fail("backward: output must be a scalar, got " + shape_string(output));
  if (output.tape() != this || !output.on_tape())
    fail("backward: output is not recorded on this tape");
  for (const Tensor& l : leaves) {
    if (l.tape() != this || !l.on_tape() || nodes_[static_cast<std::size_t>(l.node())].kind != OpKind::Leaf)
      fail("backward: requested tensor is not a leaf of this tape");
  }

  const int n0 = output.node() + 1;
  std::vector<Tensor> adj(static_cast<std::size_t>(n0));
  adj[static_cast<std::size_t>(output.node())] = Tensor::scalar(1.0);

  auto accumulate = [&adj](int parent, Tensor g) {
    if (parent < 0) return;
    Tensor& slot = adj[static_cast<std::size_t>(parent)];
    slot = slot.defined() ? add(slot, std::move(g)) : std::move(g);
  };

  for (int id = output.node(); id >= 0; --id) {
    Tensor g = adj[static_cast<std::size_t>(id)];
    if (!g.defined()) continue;
    // copy: emitting adjoint ops below may reallocate nodes_
    const Node node = nodes_[static_cast<std::size_t>(id)];
    switch (node.kind) {
      case OpKind::Leaf:
        break;
      case OpKind::Add:
        accumulate(node.parents[0], reduce_for(node.in0.shape(), g));
        accumulate(node.parents[1], reduce_for(node.in1.shape(), g));
        break;
      case OpKind::Sub:
        accumulate(node.parents[0], reduce_for(node.in0.shape(), g));
        accumulate(node.parents[1], reduce_for(node.in1.shape(), scale(g, -1.0)));
        break;
      case OpKind::Mul:
        accumulate(node.parents[0], reduce_for(node.in0.shape(), mul(g, node.in1)));
        accumulate(node.parents[1], reduce_for(node.in1.shape(), mul(g, node.in0)));
        break;
      case OpKind::MatMul:
        accumulate(node.parents[0], matmul(g, transpose(node.in1)));
        accumulate(node.parents[1], matmul(transpose(node.in0), g));
        break;
      case OpKind::Scale:
        accumulate(node.parents[0], scale(g, node.c));
        break;
      case OpKind::Sum:
        accumulate(node.parents[0], mul(Tensor::ones(node.in0.shape()), g));
        break;
      case OpKind::Square:
        accumulate(node.parents[0], mul(g, scale(node.in0, 2.0)));
        break;
      case OpKind::Abs:
        accumulate(node.parents[0], mul(g, sign_of(node.in0)));
        break;
      case OpKind::Tanh:
        accumulate(node.parents[0],
                   mul(g, sub(Tensor::scalar(1.0), square(node.out))));
        break;
      case OpKind::Sin:
        accumulate(node.parents[0], mul(g, cos(node.in0)));
        break;
      case OpKind::Cos:
        accumulate(node.parents[0], mul(g, scale(sin(node.in0), -1.0)));
        break;
      case OpKind::Relu:
        accumulate(node.parents[0], mul(g, relu_mask(node.in0)));
        break;
      case OpKind::Sqrt:
        accumulate(node.parents[0], mul(g, scale(recip(node.out), 0.5)));
        break;
      case OpKind::Recip:
        accumulate(node.parents[0], mul(g, scale(square(node.out), -1.0)));
        break;
      case OpKind::PowConst:
        accumulate(node.parents[0], mul(g, scale(pow_const(node.in0, node.c - 1.0), node.c)));
        break;
      case OpKind::MeanRows:
        accumulate(node.parents[0],
                   broadcast_rows(scale(g, 1.0 / static_cast<double>(node.a)), node.a));
        break;
      case OpKind::BroadcastRows:
        accumulate(node.parents[0], sum_rows_to_one(g));
        break;
      case OpKind::ConcatCols:
        accumulate(node.parents[0], slice_cols(g, 0, node.a));
        accumulate(node.parents[1], slice_cols(g, node.a, node.a + node.b));
        break;
      case OpKind::SliceCols:
        accumulate(node.parents[0], pad_cols(g, node.a, node.b));
        break;
      case OpKind::PadCols:
        accumulate(node.parents[0], slice_cols(g, node.a, node.a + node.b));
        break;
      case OpKind::Transpose:
        accumulate(node.parents[0], transpose(g));
        break;
    }
    if (node.kind != OpKind::Leaf) adj[static_cast<std::size_t>(id)] = Tensor{};
  }

  GradientMap map;
  for (const Tensor& l : leaves) {
    Tensor g = l.node() < n0 ? adj[static_cast<std::size_t>(l.node())] : Tensor{};
    map.grads_[l.node()] = g.defined() ? g : Tensor::zeros(l.shape());
  }
  return map;
}

Tensor Tape::grad_wrt_input(const Tensor& output, const Tensor& input) {
  if (input.tape() != this || !input.on_tape() ||
      nodes_[static_cast<std::size_t>(input.node())].kind != OpKind::Leaf)
    fail("grad_wrt_input: input is not a leaf of this tape");
  const Tensor arr[1] = {input};
  GradientMap m = backward(output, std::span<const Tensor>(arr, 1));
  return m.at(input);
}

}  // namespace bsde
