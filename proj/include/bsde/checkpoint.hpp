#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bsde/nets.hpp"

namespace bsde {

// Versioned little-endian blob: layout header (names, offsets, shapes),
// flat parameter vector, optional optimizer moments and step counter,
// optional normalization running statistics.
struct Checkpoint {
  ParameterSet params;
  std::vector<double> adam_m, adam_v;
  std::uint64_t adam_k = 0;
  bool has_adam = false;
  std::uint64_t step = 0;
  std::vector<BatchNormState> bn;
};

void save_params(std::ostream& os, const ParameterSet& params);
ParameterSet load_params(std::istream& is);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bsde
