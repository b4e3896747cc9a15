#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bsde/rng.hpp"
#include "bsde/tensor.hpp"

namespace bsde {

enum class Activation : std::uint8_t { Tanh, Sin, Relu };

Tensor apply_activation(Activation a, const Tensor& x);
std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Feedforward net with L hidden layers of width n (L+2 layers in total
// counting input and output). With batch_norm, each affine map drops its
// bias and is followed by a normalization stage with trainable scale and
// shift; activations sit between normalization and the next affine map.
struct MLPConfig {
  std::size_t d0 = 1;
  std::size_t d1 = 1;
  std::size_t L = 1;
  std::size_t n = 1;
  Activation act = Activation::Tanh;
  bool batch_norm = false;
};

struct RNNConfig {
  std::size_t d0 = 1;
  std::size_t d1 = 1;
  std::size_t n = 1;
  Activation act = Activation::Tanh;
};

enum class SegmentKind : std::uint8_t { Weight, Bias, BnScale, BnShift, Free };

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;
  SegmentKind kind = SegmentKind::Weight;
  std::size_t size() const;
};

// Flat parameter vector plus the (name, offset, shape) layout addressing it.
struct ParameterSet {
  std::vector<double> theta;
  std::vector<Segment> layout;
  std::size_t count() const { return theta.size(); }
  std::span<const double> view(const Segment& s) const;
  std::span<double> view(const Segment& s);
};

std::vector<Segment> mlp_layout(const MLPConfig& cfg);
std::vector<Segment> rnn_layout(const RNNConfig& cfg);
std::size_t layout_size(std::span<const Segment> layout);
// Appends segs under a name prefix, shifting offsets past the current end.
void append_layout(std::vector<Segment>& layout, const std::string& prefix,
                   std::span<const Segment> segs);

enum class InitDist : std::uint8_t { Uniform, Normal };

// Glorot-style ranges: uniform on +-sqrt(6/(fan_in+fan_out)), or normal
// with std sqrt(2/(fan_in+fan_out)). Biases zero, normalization scale one,
// shift zero, free parameters uniform on [-1, 1]. Deterministic in seed.
void init_segment(std::span<double> dst, const Segment& seg, CounterStream& rng, InitDist dist);
ParameterSet init_params(std::vector<Segment> layout, std::uint64_t seed, InitDist dist);
ParameterSet init_params(const MLPConfig& cfg, std::uint64_t seed, InitDist dist);
ParameterSet init_params(const RNNConfig& cfg, std::uint64_t seed, InitDist dist);

// Parameter tensors aligned with a layout: tape leaves for training,
// plain constants for evaluation.
struct BoundParams {
  std::vector<Tensor> tensors;
  const std::vector<Segment>* layout = nullptr;
  const Tensor& by_name(const std::string& name) const;
};

BoundParams bind_params(Tape& tape, const ParameterSet& params);
BoundParams constant_params(const ParameterSet& params);
// Flat gradient in layout order; leaves absent from the map contribute zeros.
std::vector<double> collect_gradients(const GradientMap& grads, const BoundParams& bound);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.99;
  double eps = 1e-6;
};

enum class NetMode : std::uint8_t { Train, Inference };

std::vector<BatchNormState> make_bn_states(const MLPConfig& cfg);

// x is one sample {1,d0} or a batch {M,d0}. All arithmetic is recorded
// when the bound parameters (or x) are taped. Train mode normalizes with
// batch statistics and updates the running ones; inference mode uses the
// running statistics.
Tensor mlp_forward(const MLPConfig& cfg, const BoundParams& params, const Tensor& x,
                   NetMode mode = NetMode::Inference, std::vector<BatchNormState>* bn = nullptr);

// h_0 = 0; h_i = act(h_{i-1} Wh + x_i Wx + bh); y_i = h_i Wy + by.
std::vector<Tensor> rnn_forward(const RNNConfig& cfg, const BoundParams& params,
                                std::span<const Tensor> xs);

enum class CountScheme : std::uint8_t { DBSDE, LDBSDE_paper, LDBSDE_original, LaDBSDE };

// Published closed-form parameter counts per scheme. DBSDE requires N >= 2.
// Note LaDBSDE returns the published closed form, which differs from the
// true layout size of the configured network (see layout_size).
std::size_t param_count(CountScheme scheme, std::size_t d, std::size_t N = 0);

}  // namespace bsde
