#include "bsde/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace bsde {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_positive(const char* what, std::size_t v) {
  if (v < 1) fail(std::string("net config: ") + what + " must be >= 1");
}

}  // namespace

Tensor apply_activation(Activation a, const Tensor& x) {
  switch (a) {
    case Activation::Tanh: return tanh(x);
    case Activation::Sin: return sin(x);
    case Activation::Relu: return relu(x);
  }
  fail("unknown activation");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Sin: return "sin";
    case Activation::Relu: return "relu";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "sin") return Activation::Sin;
  if (name == "relu") return Activation::Relu;
  fail("unknown activation: " + name);
}

std::size_t Segment::size() const {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::span<const double> ParameterSet::view(const Segment& s) const {
  return {theta.data() + s.offset, s.size()};
}

std::span<double> ParameterSet::view(const Segment& s) {
  return {theta.data() + s.offset, s.size()};
}

std::vector<Segment> mlp_layout(const MLPConfig& cfg) {
  check_positive("d0", cfg.d0);
  check_positive("d1", cfg.d1);
  check_positive("L", cfg.L);
  check_positive("n", cfg.n);
  std::vector<Segment> layout;
  std::size_t off = 0;
  auto push = [&](std::string name, std::vector<std::size_t> shape, SegmentKind kind) {
    Segment s{std::move(name), off, std::move(shape), kind};
    off += s.size();
    layout.push_back(std::move(s));
  };
  for (std::size_t l = 1; l <= cfg.L + 1; ++l) {
    const std::size_t in = (l == 1) ? cfg.d0 : cfg.n;
    const std::size_t out = (l == cfg.L + 1) ? cfg.d1 : cfg.n;
    const std::string tag = std::to_string(l);
    push("W" + tag, {in, out}, SegmentKind::Weight);
    if (cfg.batch_norm) {
      push("bn" + tag + ".scale", {1, out}, SegmentKind::BnScale);
      push("bn" + tag + ".shift", {1, out}, SegmentKind::BnShift);
    } else {
      push("b" + tag, {1, out}, SegmentKind::Bias);
    }
  }
  return layout;
}

std::vector<Segment> rnn_layout(const RNNConfig& cfg) {
  check_positive("d0", cfg.d0);
  check_positive("d1", cfg.d1);
  check_positive("n", cfg.n);
  std::vector<Segment> layout;
  std::size_t off = 0;
  auto push = [&](std::string name, std::vector<std::size_t> shape, SegmentKind kind) {
    Segment s{std::move(name), off, std::move(shape), kind};
    off += s.size();
    layout.push_back(std::move(s));
  };
  push("Wx", {cfg.d0, cfg.n}, SegmentKind::Weight);
  push("Wh", {cfg.n, cfg.n}, SegmentKind::Weight);
  push("bh", {1, cfg.n}, SegmentKind::Bias);
  push("Wy", {cfg.n, cfg.d1}, SegmentKind::Weight);
  push("by", {1, cfg.d1}, SegmentKind::Bias);
  return layout;
}

std::size_t layout_size(std::span<const Segment> layout) {
  std::size_t n = 0;
  for (const Segment& s : layout) n += s.size();
  return n;
}

void append_layout(std::vector<Segment>& layout, const std::string& prefix,
                   std::span<const Segment> segs) {
  std::size_t base = layout_size(layout);
  for (const Segment& s : segs) {
    Segment copy = s;
    copy.name = prefix + s.name;
    copy.offset = base + s.offset;
    layout.push_back(std::move(copy));
  }
}

void init_segment(std::span<double> dst, const Segment& seg, CounterStream& rng, InitDist dist) {
  switch (seg.kind) {
    case SegmentKind::Weight: {
      const std::size_t fan_in = seg.shape.size() == 2 ? seg.shape[0] : seg.size();
      const std::size_t fan_out = seg.shape.size() == 2 ? seg.shape[1] : 1;
      const double denom = static_cast<double>(fan_in + fan_out);
      if (dist == InitDist::Uniform) {
        const double a = std::sqrt(6.0 / denom);
        for (double& w : dst) w = rng.uniform(-a, a);
      } else {
        const double s = std::sqrt(2.0 / denom);
        for (double& w : dst) w = s * rng.normal();
      }
      break;
    }
    case SegmentKind::Bias:
    case SegmentKind::BnShift:
      for (double& w : dst) w = 0.0;
      break;
    case SegmentKind::BnScale:
      for (double& w : dst) w = 1.0;
      break;
    case SegmentKind::Free:
      for (double& w : dst) w = rng.uniform(-1.0, 1.0);
      break;
  }
}

ParameterSet init_params(std::vector<Segment> layout, std::uint64_t seed, InitDist dist) {
  ParameterSet ps;
  ps.layout = std::move(layout);
  ps.theta.assign(layout_size(ps.layout), 0.0);
  CounterStream rng(seed);
  for (const Segment& s : ps.layout) init_segment(ps.view(s), s, rng, dist);
  return ps;
}

ParameterSet init_params(const MLPConfig& cfg, std::uint64_t seed, InitDist dist) {
  return init_params(mlp_layout(cfg), seed, dist);
}

ParameterSet init_params(const RNNConfig& cfg, std::uint64_t seed, InitDist dist) {
  return init_params(rnn_layout(cfg), seed, dist);
}

const Tensor& BoundParams::by_name(const std::string& name) const {
  for (std::size_t i = 0; i < layout->size(); ++i)
    if ((*layout)[i].name == name) return tensors[i];
  fail("bound params: no segment named " + name);
}

namespace {

BoundParams make_bound(const ParameterSet& params, Tape* tape) {
  BoundParams bp;
  bp.layout = &params.layout;
  bp.tensors.reserve(params.layout.size());
  for (const Segment& s : params.layout) {
    auto v = params.view(s);
    Tensor t(s.shape, std::vector<double>(v.begin(), v.end()));
    bp.tensors.push_back(tape ? tape->leaf(t) : t);
  }
  return bp;
}

}  // namespace

BoundParams bind_params(Tape& tape, const ParameterSet& params) {
  return make_bound(params, &tape);
}

BoundParams constant_params(const ParameterSet& params) { return make_bound(params, nullptr); }

std::vector<double> collect_gradients(const GradientMap& grads, const BoundParams& bound) {
  std::vector<double> flat(layout_size(*bound.layout), 0.0);
  for (std::size_t i = 0; i < bound.layout->size(); ++i) {
    const Segment& s = (*bound.layout)[i];
    const Tensor& leaf = bound.tensors[i];
    if (!grads.contains(leaf)) continue;
    const Tensor& g = grads.at(leaf);
    const double* src = g.data();
    for (std::size_t j = 0; j < s.size(); ++j) flat[s.offset + j] = src[j];
  }
  return flat;
}

std::vector<BatchNormState> make_bn_states(const MLPConfig& cfg) {
  std::vector<BatchNormState> states;
  if (!cfg.batch_norm) return states;
  for (std::size_t l = 1; l <= cfg.L + 1; ++l) {
    const std::size_t out = (l == cfg.L + 1) ? cfg.d1 : cfg.n;
    BatchNormState st;
    st.running_mean.assign(out, 0.0);
    st.running_var.assign(out, 1.0);
    states.push_back(std::move(st));
  }
  return states;
}

namespace {

Tensor batch_norm_stage(const Tensor& h, const Tensor& gamma, const Tensor& beta,
                        BatchNormState& st, NetMode mode) {
  const std::size_t m = h.rows(), n = h.cols();
  Tensor normalized;
  if (mode == NetMode::Train) {
    Tensor mu = mean_rows(h);
    Tensor centered = sub(h, broadcast_rows(mu, m));
    Tensor var = mean_rows(square(centered));
    Tensor inv_std = recip(sqrt(add(var, Tensor::scalar(st.eps))));
    normalized = mul(centered, broadcast_rows(inv_std, m));
    for (std::size_t j = 0; j < n; ++j) {
      st.running_mean[j] = st.momentum * st.running_mean[j] + (1.0 - st.momentum) * mu.at(j);
      st.running_var[j] = st.momentum * st.running_var[j] + (1.0 - st.momentum) * var.at(j);
    }
  } else {
    Tensor mu({1, n}, std::vector<double>(st.running_mean));
    std::vector<double> inv(n);
    for (std::size_t j = 0; j < n; ++j) inv[j] = 1.0 / std::sqrt(st.running_var[j] + st.eps);
    Tensor inv_std({1, n}, std::move(inv));
    normalized = mul(sub(h, broadcast_rows(mu, m)), broadcast_rows(inv_std, m));
  }
  return add(mul(normalized, broadcast_rows(gamma, m)), broadcast_rows(beta, m));
}

}  // namespace

Tensor mlp_forward(const MLPConfig& cfg, const BoundParams& params, const Tensor& x, NetMode mode,
                   std::vector<BatchNormState>* bn) {
  if (x.rank() != 2 || x.cols() != cfg.d0)
    fail("mlp_forward: input " + shape_string(x) + " does not match d0=" + std::to_string(cfg.d0));
  if (cfg.batch_norm && bn == nullptr)
    fail("mlp_forward: batch_norm requires normalization state");
  const std::size_t m = x.rows();
  Tensor h = x;
  std::size_t idx = 0;
  for (std::size_t l = 1; l <= cfg.L + 1; ++l) {
    const Tensor& W = params.tensors[idx++];
    h = matmul(h, W);
    if (cfg.batch_norm) {
      const Tensor& gamma = params.tensors[idx++];
      const Tensor& beta = params.tensors[idx++];
      h = batch_norm_stage(h, gamma, beta, (*bn)[l - 1], mode);
    } else {
      const Tensor& b = params.tensors[idx++];
      h = add(h, broadcast_rows(b, m));
    }
    if (l <= cfg.L) h = apply_activation(cfg.act, h);
  }
  return h;
}

std::vector<Tensor> rnn_forward(const RNNConfig& cfg, const BoundParams& params,
                                std::span<const Tensor> xs) {
  if (xs.empty()) fail("rnn_forward: empty input sequence");
  const Tensor& Wx = params.by_name("Wx");
  const Tensor& Wh = params.by_name("Wh");
  const Tensor& bh = params.by_name("bh");
  const Tensor& Wy = params.by_name("Wy");
  const Tensor& by = params.by_name("by");
  std::vector<Tensor> ys;
  ys.reserve(xs.size());
  Tensor h;
  for (const Tensor& x : xs) {
    if (x.rank() != 2 || x.cols() != cfg.d0)
      fail("rnn_forward: input " + shape_string(x) + " does not match d0=" +
           std::to_string(cfg.d0));
    const std::size_t m = x.rows();
    Tensor pre = add(matmul(x, Wx), broadcast_rows(bh, m));
    if (h.defined()) pre = add(pre, matmul(h, Wh));
    h = apply_activation(cfg.act, pre);
    ys.push_back(add(matmul(h, Wy), broadcast_rows(by, m)));
  }
  return ys;
}

std::size_t param_count(CountScheme scheme, std::size_t d, std::size_t N) {
  if (d < 1) fail("param_count: d must be >= 1");
  switch (scheme) {
    case CountScheme::DBSDE: {
      if (N < 2) fail("param_count: DBSDE requires N >= 2");
      const std::size_t h = d + 10;
      return d + 1 + (N - 1) * (2 * d * h + h * h + 4 * h + 2 * d);
    }
    case CountScheme::LDBSDE_original:
      return 256 * d + 198145;
    case CountScheme::LDBSDE_paper: {
      // true size of the width-(10+d) network used in the experiments
      const std::size_t n = 10 + d, d0 = d + 1;
      return n * (d0 + 1) + n * (n + 1) * 3 + (n + 1);
    }
    case CountScheme::LaDBSDE:
      return 2 * d * d + 56 * d + 361;
  }
  fail("param_count: unknown scheme");
}

}  // namespace bsde
